//! Item-to-item nearest-neighbour baseline.
//!
//! Items are binary incidence vectors over train sessions; a candidate's
//! score is the sum of its cosine similarities to the prefix items.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::SessionCorpus;
use crate::math::sqrt;
use crate::metrics;

#[derive(Clone, Debug)]
pub struct ItemKnn {
    sessions_of: Vec<Vec<usize>>,
    items_of: Vec<Vec<usize>>,
    popularity: Vec<usize>,
}

impl ItemKnn {
    pub fn fit(corpus: &SessionCorpus) -> Self {
        let n = corpus.num_items();
        let mut sessions_of = vec![Vec::new(); n];
        let mut items_of = Vec::new();
        let mut popularity = vec![0; n];
        for (sid, s) in corpus.train_sessions().enumerate() {
            let mut distinct = s.items.clone();
            distinct.sort_unstable();
            distinct.dedup();
            for &i in &distinct {
                sessions_of[i].push(sid);
            }
            for &i in &s.items {
                popularity[i] += 1;
            }
            items_of.push(distinct);
        }
        ItemKnn {
            sessions_of,
            items_of,
            popularity,
        }
    }

    pub fn num_items(&self) -> usize {
        self.sessions_of.len()
    }

    /// Cosine of the session-incidence vectors of `a` and `b`.
    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        let (na, nb) = (&self.sessions_of[a], &self.sessions_of[b]);
        if na.is_empty() || nb.is_empty() {
            return 0.0;
        }
        let common = na.iter().filter(|s| nb.binary_search(s).is_ok()).count();
        common as f64 / sqrt(na.len() as f64 * nb.len() as f64)
    }

    /// `Σ_{i in prefix} cos(i, c)` for every candidate `c ≠ i`. When nothing
    /// scores above zero the train popularity counts are returned instead.
    pub fn scores(&self, prefix: &[usize]) -> Vec<f64> {
        let n = self.num_items();
        let mut scores = vec![0.0; n];
        for &i in prefix.iter().filter(|&&i| i < n) {
            let mut common = vec![0usize; n];
            for &s in &self.sessions_of[i] {
                for &c in &self.items_of[s] {
                    common[c] += 1;
                }
            }
            let ni = self.sessions_of[i].len() as f64;
            for (c, &m) in common.iter().enumerate() {
                if m > 0 && c != i {
                    scores[c] += m as f64 / sqrt(ni * self.sessions_of[c].len() as f64);
                }
            }
        }
        if scores.iter().all(|&s| s == 0.0) {
            return self.popularity.iter().map(|&p| p as f64).collect();
        }
        scores
    }

    pub fn recommend(&self, prefix: &[usize], k: usize) -> Vec<usize> {
        let mut r = metrics::ranking(&self.scores(prefix));
        r.truncate(k);
        r
    }

    pub fn rank_of(&self, prefix: &[usize], target: usize) -> usize {
        metrics::rank_of(&self.scores(prefix), target)
    }
}
