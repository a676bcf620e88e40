//! Seeded synthetic session corpora with known next-item structure.
//!
//! Users are assigned round-robin to clusters. Every cluster owns a cyclic
//! successor permutation over its items; within a session the next item is
//! the cluster successor of the current one with probability
//! `1 - noise_rate`, otherwise a uniformly random item.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{sessionize, Interaction, SessionCorpus};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub num_clusters: usize,
    pub sessions_per_user: usize,
    pub session_length: usize,
    pub noise_rate: f64,
    pub seed: u64,
    /// When true every cluster permutes the whole item set, so the next item
    /// depends on the cluster as well as the current item. Otherwise items
    /// are split into disjoint equal blocks, one per cluster.
    pub shared_items: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_users: 20,
            num_items: 50,
            num_clusters: 1,
            sessions_per_user: 10,
            session_length: 6,
            noise_rate: 0.0,
            seed: 7,
            shared_items: false,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 || !self.num_items.is_multiple_of(self.num_clusters) {
            return Err(Error::invalid("num_items must be a positive multiple of num_clusters"));
        }
        if self.cluster_size() < 2 {
            return Err(Error::invalid("every cluster needs at least two items"));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::invalid("noise_rate must lie in [0, 1)"));
        }
        if self.num_users == 0 || self.sessions_per_user == 0 || self.session_length == 0 {
            return Err(Error::invalid("users, sessions per user and session length must be positive"));
        }
        Ok(())
    }

    fn cluster_size(&self) -> usize {
        if self.shared_items {
            self.num_items
        } else {
            self.num_items / self.num_clusters.max(1)
        }
    }
}

/// A generated corpus together with the rule that produced it.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    /// Time-ordered events with session keys; user `u` is `"u{u}"`, item
    /// `i` is `"i{i}"`.
    pub events: Vec<Interaction>,
    pub cluster_of_user: Vec<usize>,
    /// `successor[c][i]`: the cluster-`c` successor of item `i`, if `i`
    /// belongs to cluster `c`.
    pub successor: Vec<Vec<Option<usize>>>,
}

impl SyntheticData {
    /// Noise-free next item for a user of `cluster` currently at `item`.
    pub fn next_item(&self, cluster: usize, item: usize) -> Option<usize> {
        self.successor[cluster][item]
    }

    pub fn corpus(&self) -> Result<SessionCorpus> {
        sessionize(&self.events, SESSION_GAP)
    }
}

/// Sessions are a day apart and events a minute apart, so any gap between
/// one minute and one day splits them identically.
pub const SESSION_GAP: u64 = 3600;

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.cluster_size();
    let members: Vec<Vec<usize>> = (0..spec.num_clusters)
        .map(|c| {
            if spec.shared_items {
                (0..spec.num_items).collect()
            } else {
                (c * size..(c + 1) * size).collect()
            }
        })
        .collect();
    let successor: Vec<Vec<Option<usize>>> = members
        .iter()
        .map(|m| {
            let cycle = random_cycle(m, &mut rng);
            let mut next = vec![None; spec.num_items];
            for w in 0..cycle.len() {
                next[cycle[w]] = Some(cycle[(w + 1) % cycle.len()]);
            }
            next
        })
        .collect();
    let cluster_of_user: Vec<usize> = (0..spec.num_users).map(|u| u % spec.num_clusters).collect();

    let mut events = Vec::with_capacity(spec.num_users * spec.sessions_per_user * spec.session_length);
    for j in 0..spec.sessions_per_user {
        for (u, &c) in cluster_of_user.iter().enumerate() {
            let base = (j as u64) * 86_400 + u as u64;
            let mut cur = members[c][rng.random_range(0..members[c].len())];
            for t in 0..spec.session_length {
                if t > 0 {
                    cur = if rng.random::<f64>() < spec.noise_rate {
                        rng.random_range(0..spec.num_items)
                    } else {
                        match successor[c][cur] {
                            Some(n) => n,
                            None => members[c][rng.random_range(0..members[c].len())],
                        }
                    };
                }
                events.push(
                    Interaction::new(format!("u{u}"), format!("i{cur}"), base + 60 * t as u64)
                        .with_session(format!("s{j}")),
                );
            }
        }
    }
    Ok(SyntheticData {
        spec: *spec,
        events,
        cluster_of_user,
        successor,
    })
}

/// Sessionized synthetic corpus (before filtering and splitting).
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SessionCorpus> {
    generate(spec)?.corpus()
}

/// A single cycle through all of `items` in random order.
fn random_cycle<R: Rng + ?Sized>(items: &[usize], rng: &mut R) -> Vec<usize> {
    let mut order = items.to_vec();
    order.shuffle(rng);
    order
}

/// Index encoded in a synthetic key such as `"i17"`.
pub fn key_index(key: &str) -> Option<usize> {
    key.get(1..)?.parse().ok()
}
