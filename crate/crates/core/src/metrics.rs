//! HR@k and MRR@k.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Item indices by descending score, ties to the smaller index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// 1-based position of `target` in [`ranking`] order, without sorting.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < target))
        .count()
}

/// 1 if `target` is among the first `k` entries of `ranked`.
pub fn hr_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    if ranked.iter().take(k).any(|&i| i == target) {
        1.0
    } else {
        0.0
    }
}

/// `1/rank` if `target` is among the first `k` entries of `ranked`, else 0.
pub fn mrr_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    match ranked.iter().take(k).position(|&i| i == target) {
        Some(p) => 1.0 / (p + 1) as f64,
        None => 0.0,
    }
}

pub fn hit_from_rank(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn reciprocal_from_rank(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / rank as f64
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Every test example counts once.
    #[default]
    PerExample,
    /// Examples are averaged within each user first.
    PerUser,
}

impl Averaging {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "example" => Some(Averaging::PerExample),
            "user" => Some(Averaging::PerUser),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::PerExample => "example",
            Averaging::PerUser => "user",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub arm: String,
    pub ks: Vec<usize>,
    /// Parallel to `ks`.
    pub hr: Vec<f64>,
    pub mrr: Vec<f64>,
    pub count: usize,
}

impl MetricReport {
    /// Aggregates 1-based target ranks. `users[i]` is the user of example
    /// `i` and is only read for [`Averaging::PerUser`].
    pub fn from_ranks(arm: impl Into<String>, ranks: &[usize], users: &[usize], ks: &[usize], averaging: Averaging) -> Self {
        let (hr, mrr) = ks
            .iter()
            .map(|&k| match averaging {
                Averaging::PerExample => (
                    mean(ranks.iter().map(|&r| hit_from_rank(r, k))),
                    mean(ranks.iter().map(|&r| reciprocal_from_rank(r, k))),
                ),
                Averaging::PerUser => {
                    let mut per: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
                    for (&r, &u) in ranks.iter().zip(users) {
                        let e = per.entry(u).or_insert((0.0, 0.0, 0));
                        e.0 += hit_from_rank(r, k);
                        e.1 += reciprocal_from_rank(r, k);
                        e.2 += 1;
                    }
                    (
                        mean(per.values().map(|e| e.0 / e.2 as f64)),
                        mean(per.values().map(|e| e.1 / e.2 as f64)),
                    )
                }
            })
            .unzip();
        MetricReport {
            arm: arm.into(),
            ks: ks.to_vec(),
            hr,
            mrr,
            count: ranks.len(),
        }
    }

    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.hr[i])
    }

    pub fn mrr_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.mrr[i])
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
