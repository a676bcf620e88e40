//! Brute-force re-derivation of the global graph, written straight from the
//! edge definitions with nested loops over the raw train sessions. Shares no
//! code with the library builder beyond the corpus types.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hggnn_core::data::{Session, SessionCorpus, Split, Vocab};
use hggnn_core::graph::HeteroGraph;
use rand::Rng;

/// `(head_kind, head, edge_type, tail_kind, tail, weight)`
pub type Row = (&'static str, usize, &'static str, &'static str, usize, f64);

pub struct Train {
    pub users: usize,
    pub items: usize,
    pub sessions: Vec<(usize, Vec<usize>)>,
}

impl Train {
    pub fn of(corpus: &SessionCorpus) -> Self {
        Train {
            users: corpus.num_users(),
            items: corpus.num_items(),
            sessions: corpus.train_sessions().map(|s| (s.user_id, s.items.clone())).collect(),
        }
    }

    fn pair_count(&self, a: usize, b: usize) -> usize {
        let mut n = 0;
        for (_, s) in &self.sessions {
            for t in 1..s.len() {
                if s[t - 1] == a && s[t] == b {
                    n += 1;
                }
            }
        }
        n
    }

    fn contains(s: &[usize], v: usize) -> bool {
        s.contains(&v)
    }

    fn distinct(s: &[usize]) -> usize {
        let mut seen = Vec::new();
        for &x in s {
            if !seen.contains(&x) {
                seen.push(x);
            }
        }
        seen.len()
    }

    /// Co-occurrence score straight from its definition.
    pub fn score(&self, a: usize, b: usize) -> f64 {
        let na = self.sessions.iter().filter(|(_, s)| Self::contains(s, a)).count();
        let nb = self.sessions.iter().filter(|(_, s)| Self::contains(s, b)).count();
        if na == 0 || nb == 0 {
            return 0.0;
        }
        let mut num = 0.0;
        for (_, s) in &self.sessions {
            if Self::contains(s, a) && Self::contains(s, b) {
                num += 1.0 / Self::distinct(s) as f64;
            }
        }
        num / ((na * nb) as f64).sqrt()
    }

    /// Top `cap` of `(source, weight)` by weight descending, source ascending.
    fn top(mut c: Vec<(usize, f64)>, cap: usize) -> Vec<(usize, f64)> {
        c.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        c.truncate(cap);
        c
    }

    /// Every edge of the assembled graph with self-loops kept.
    pub fn edges(&self, s: usize, k: usize) -> Vec<Row> {
        let v = self.items;
        let mut rows = Vec::new();
        for tail in 0..v {
            let ins: Vec<(usize, f64)> = (0..v)
                .map(|h| (h, self.pair_count(h, tail) as f64))
                .filter(|x| x.1 > 0.0)
                .collect();
            for (h, w) in Self::top(ins, s) {
                rows.push(("item", h, "r_in", "item", tail, w));
            }
            let outs: Vec<(usize, f64)> = (0..v)
                .map(|h| (h, self.pair_count(tail, h) as f64))
                .filter(|x| x.1 > 0.0)
                .collect();
            for (h, w) in Self::top(outs, s) {
                rows.push(("item", h, "r_out", "item", tail, w));
            }
            let degree = (0..v)
                .filter(|&u| self.pair_count(tail, u) + self.pair_count(u, tail) > 0)
                .count();
            let cands: Vec<(usize, f64)> = (0..v)
                .filter(|&u| u != tail)
                .map(|u| (u, self.score(tail, u)))
                .filter(|x| x.1 > 0.0)
                .collect();
            for (h, w) in Self::top(cands, k.min(degree)) {
                if self.pair_count(h, tail) == 0 {
                    rows.push(("item", h, "r_similar", "item", tail, w));
                }
            }
        }
        for u in 0..self.users {
            for i in 0..v {
                if self.sessions.iter().any(|(su, s)| *su == u && Self::contains(s, i)) {
                    rows.push(("item", i, "r_interact", "user", u, 1.0));
                    rows.push(("user", u, "r_interacted_by", "item", i, 1.0));
                }
            }
        }
        sorted(rows)
    }
}

pub fn sorted(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort_by(|a, b| {
        (a.3, a.4, a.2, a.0, a.1)
            .cmp(&(b.3, b.4, b.2, b.0, b.1))
    });
    rows
}

/// The library graph's edges in oracle row form.
pub fn rows_of(graph: &HeteroGraph) -> Vec<Row> {
    sorted(
        graph
            .edges()
            .iter()
            .map(|e| {
                (
                    e.head.kind.as_str(),
                    e.head.id,
                    e.etype.as_str(),
                    e.tail.kind.as_str(),
                    e.tail.id,
                    e.weight,
                )
            })
            .collect(),
    )
}

/// First disagreement between two edge lists. Transition and user edge
/// weights must match exactly, similarity weights within `tol`.
pub fn diff(got: &[Row], want: &[Row], tol: f64) -> Option<String> {
    if got.len() != want.len() {
        let g: BTreeSet<_> = got.iter().map(|r| (r.0, r.1, r.2, r.3, r.4)).collect();
        let w: BTreeSet<_> = want.iter().map(|r| (r.0, r.1, r.2, r.3, r.4)).collect();
        return Some(format!(
            "{} edges vs {} expected; extra {:?}, missing {:?}",
            got.len(),
            want.len(),
            g.difference(&w).next(),
            w.difference(&g).next()
        ));
    }
    for (g, w) in got.iter().zip(want) {
        let same_key = (g.0, g.1, g.2, g.3, g.4) == (w.0, w.1, w.2, w.3, w.4);
        let close = if g.2 == "r_similar" {
            (g.5 - w.5).abs() <= tol
        } else {
            g.5 == w.5
        };
        if !same_key || !close {
            return Some(format!("got {g:?}, expected {w:?}"));
        }
    }
    None
}

/// A split corpus with at most `max_items` items, `max_sessions` sessions
/// and `max_users` users, sessions of length 1 to 6 with repeats allowed.
pub fn random_corpus<R: Rng>(rng: &mut R, max_items: usize, max_sessions: usize, max_users: usize) -> SessionCorpus {
    let items = rng.random_range(2..=max_items);
    let users = rng.random_range(1..=max_users);
    let n = rng.random_range(1..=max_sessions);
    let mut by_user: Vec<Vec<Session>> = vec![Vec::new(); users];
    for j in 0..n {
        let u = rng.random_range(0..users);
        let len = rng.random_range(1..=6);
        let mut s: Vec<usize> = (0..len).map(|_| rng.random_range(0..items)).collect();
        if rng.random_bool(0.2) && len > 1 {
            s[1] = s[0];
        }
        by_user[u].push(Session {
            user_id: u,
            items: s,
            start_ts: j as u64,
            split: if rng.random_bool(0.8) { Split::Train } else { Split::Test },
        });
    }
    SessionCorpus {
        users: Vocab::from_keys((0..users).map(|u| format!("u{u}"))).unwrap(),
        items: Vocab::from_keys((0..items).map(|i| format!("i{i}"))).unwrap(),
        sessions_by_user: by_user,
    }
}
