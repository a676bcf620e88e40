//! Seed-driven invariant checks shared by the property tests and the
//! acceptance suite. Each check draws one random instance from `seed` and
//! returns a description of the first violation.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use hggnn_core::ablation::Arm;
use hggnn_core::data::{filter_corpus, segment_examples, sessionize, split_corpus, Interaction, SegmentMode, Split};
use hggnn_core::encoder::{encode_session, fuse, Paths};
use hggnn_core::gradcheck::{analytic_gradients, grad_check};
use hggnn_core::graph::{assemble_graph, count_transitions, EdgeType, GraphConfig, HeteroGraph, NodeKind, NodeRef, TypedEdge};
use hggnn_core::metrics::{hr_at_k, mrr_at_k, rank_of, ranking, MetricReport, Averaging};
use hggnn_core::model::{batch_loss, loss, node_embeddings, LossMode, ModelConfig, ModelParams, ParamSet, Query};
use hggnn_core::tape::RowGroups;
use hggnn_core::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph_oracle::random_corpus;

pub type Check = fn(u64) -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = r.random_range(0.1..2.0);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn small_model(r: &mut ChaCha8Rng, users: usize, items: usize, layers: usize) -> (ModelConfig, ModelParams) {
    let config = ModelConfig {
        dim: r.random_range(2..=5),
        layers,
        max_len: 6,
        vector_gate: r.random_bool(0.5),
        ..ModelConfig::default()
    };
    let params = ModelParams::init(config, users, items, r.random()).unwrap();
    (config, params)
}

fn random_graph(r: &mut ChaCha8Rng) -> (HeteroGraph, usize, usize) {
    let corpus = random_corpus(r, 10, 20, 4);
    let config = GraphConfig {
        sample_size: r.random_range(1..=4),
        similar_k: r.random_range(1..=4),
        ..GraphConfig::default()
    };
    let g = assemble_graph(&corpus, &config).unwrap();
    let (u, v) = (g.num_users(), g.num_items());
    (g, u, v)
}

pub fn softmax_rows_sum_to_one(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (n, m) = (r.random_range(1..6), r.random_range(1..40));
    let x = random_tensor(&mut r, n, m, -50.0, 50.0);
    let mut tape = Tape::new();
    let v = tape.constant(x).map_err(s)?;
    let y = tape.softmax(v).map_err(s)?;
    for row in 0..n {
        let p = tape.value(y).row(row);
        ensure!(p.iter().all(|&x| x >= 0.0), "negative probability in {p:?}");
        let total: f64 = p.iter().sum();
        ensure!((total - 1.0).abs() <= 1e-12, "row sums to {total}");
    }
    Ok(())
}

pub fn attention_weights_form_a_simplex(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (users, items) = (r.random_range(1..4), r.random_range(2..9));
    let (_, params) = small_model(&mut r, users, items, 1);
    let len = r.random_range(1..=6);
    let prefix: Vec<usize> = (0..len).map(|_| r.random_range(0..items)).collect();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false).map_err(s)?;
    let rows = tape.gather(vars.item_table, &prefix).map_err(s)?;
    let user = tape.gather(vars.user_table, &[r.random_range(0..users)]).map_err(s)?;
    let st = encode_session(&mut tape, rows, user, &vars.encoder, Paths::default()).map_err(s)?;
    for w in [st.current_weights.unwrap(), st.general_weights.unwrap()] {
        let w = tape.value(w).data();
        ensure!(w.len() == len, "{} weights for {len} items", w.len());
        ensure!(w.iter().all(|&x| x >= 0.0), "negative attention weight {w:?}");
        let total: f64 = w.iter().sum();
        ensure!((total - 1.0).abs() <= 1e-12, "attention weights sum to {total}");
    }
    Ok(())
}

pub fn fusion_is_convex(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let d = r.random_range(1..8);
    let gate_rows = if r.random_bool(0.5) { 1 } else { d };
    let mut tape = Tape::new();
    let c = tape.constant(random_tensor(&mut r, 1, d, -5.0, 5.0)).map_err(s)?;
    let o = tape.constant(random_tensor(&mut r, 1, d, -5.0, 5.0)).map_err(s)?;
    let w = tape.constant(random_tensor(&mut r, gate_rows, 2 * d, -3.0, 3.0)).map_err(s)?;
    let (out, gate) = fuse(&mut tape, c, o, w).map_err(s)?;
    ensure!(tape.value(gate).data().iter().all(|&g| (0.0..=1.0).contains(&g)), "gate outside [0,1]");
    let (cv, ov, sv) = (tape.value(c).data(), tape.value(o).data(), tape.value(out).data());
    for i in 0..d {
        let (lo, hi) = (cv[i].min(ov[i]), cv[i].max(ov[i]));
        ensure!(sv[i] >= lo - 1e-12 && sv[i] <= hi + 1e-12, "coordinate {i}: {} outside [{lo}, {hi}]", sv[i]);
    }
    Ok(())
}

pub fn zero_user_weights_make_general_preference_user_free(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let items = r.random_range(2..8);
    let (_, mut params) = small_model(&mut r, 3, items, 1);
    let d = params.config.dim;
    params.tensors.encoder.w_3 = Tensor::zeros(d, d);
    let prefix: Vec<usize> = (0..r.random_range(1..5)).map(|_| r.random_range(0..items)).collect();
    let mut out = Vec::new();
    for u in [0, 2] {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, false).map_err(s)?;
        let rows = tape.gather(vars.item_table, &prefix).map_err(s)?;
        let user = tape.gather(vars.user_table, &[u]).map_err(s)?;
        let st = encode_session(&mut tape, rows, user, &vars.encoder, Paths::default()).map_err(s)?;
        out.push(tape.value(st.general.unwrap()).clone());
    }
    ensure!(out[0] == out[1], "general preference changed with the user");
    Ok(())
}

fn embeddings(config: &ModelConfig, graph: &HeteroGraph, tensors: &ParamSet<Tensor>) -> Result<(Tensor, Tensor), String> {
    let mut tape = Tape::new();
    let vars = tensors.try_map(|t| tape.constant(t.clone())).map_err(s)?;
    let (p, q) = node_embeddings(&mut tape, config, graph, &vars).map_err(s)?;
    Ok((tape.value(p).clone(), tape.value(q).clone()))
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for (old, &new) in perm.iter().enumerate() {
        out.row_mut(new).copy_from_slice(t.row(old));
    }
    out
}

/// Relabelling items and users, with the initial tables permuted to match,
/// permutes the graph encoder's outputs the same way.
pub fn hgnn_is_permutation_equivariant(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (graph, users, items) = random_graph(&mut r);
    let layers = r.random_range(1..=3);
    let (config, params) = small_model(&mut r, users, items, layers);
    let mut pi: Vec<usize> = (0..items).collect();
    let mut pu: Vec<usize> = (0..users).collect();
    pi.shuffle(&mut r);
    pu.shuffle(&mut r);
    let map = |n: NodeRef| match n.kind {
        NodeKind::Item => NodeRef::item(pi[n.id]),
        NodeKind::User => NodeRef::user(pu[n.id]),
    };
    let edges: Vec<TypedEdge> = graph
        .edges()
        .iter()
        .map(|e| TypedEdge {
            head: map(e.head),
            tail: map(e.tail),
            ..*e
        })
        .collect();
    let permuted = HeteroGraph::from_edges(users, items, graph.mask(), edges).map_err(s)?;
    let mut tensors = params.tensors.clone();
    tensors.item_table = permute_rows(&params.tensors.item_table, &pi);
    tensors.user_table = permute_rows(&params.tensors.user_table, &pu);

    let (p, q) = embeddings(&config, &graph, &params.tensors)?;
    let (p2, q2) = embeddings(&config, &permuted, &tensors)?;
    for (a, b, perm) in [(&p, &p2, &pi), (&q, &q2, &pu)] {
        let want = permute_rows(a, perm);
        for (x, y) in want.data().iter().zip(b.data()) {
            ensure!((x - y).abs() <= 1e-12, "permuted output differs: {x} vs {y}");
        }
    }
    Ok(())
}

/// Nodes within `hops` steps against the edge direction from `start`.
fn in_neighbourhood(graph: &HeteroGraph, start: NodeRef, hops: usize) -> BTreeSet<NodeRef> {
    let mut seen = BTreeSet::from([start]);
    let mut frontier = vec![start];
    for _ in 0..hops {
        let mut next = Vec::new();
        for n in frontier {
            for e in graph.edges().iter().filter(|e| e.tail == n) {
                if seen.insert(e.head) {
                    next.push(e.head);
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Perturbing the initial embedding of a node more than `K` hops away leaves
/// a node's combined output bitwise unchanged.
pub fn hgnn_is_local(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (graph, users, items) = random_graph(&mut r);
    let layers = r.random_range(1..=2);
    let (config, params) = small_model(&mut r, users, items, layers);
    let v = r.random_range(0..items);
    let near = in_neighbourhood(&graph, NodeRef::item(v), layers);
    let far: Vec<NodeRef> = (0..items)
        .map(NodeRef::item)
        .chain((0..users).map(NodeRef::user))
        .filter(|n| !near.contains(n))
        .collect();
    let Some(&target) = far.get(r.random_range(0..far.len().max(1))) else {
        return Ok(());
    };
    let mut tensors = params.tensors.clone();
    let table = match target.kind {
        NodeKind::Item => &mut tensors.item_table,
        NodeKind::User => &mut tensors.user_table,
    };
    table.row_mut(target.id).iter_mut().for_each(|x| *x += 0.75);
    let (p, _) = embeddings(&config, &graph, &params.tensors)?;
    let (p2, _) = embeddings(&config, &graph, &tensors)?;
    ensure!(p.row(v) == p2.row(v), "item {v} changed after perturbing far node {target:?}");
    Ok(())
}

/// Without edges each layer is `mean_r relu(W_r·[0 || x] + b_r)`.
pub fn edgeless_graph_is_a_per_node_chain(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (users, items) = (r.random_range(1..4), r.random_range(1..6));
    let layers = r.random_range(0..=3);
    let (config, params) = small_model(&mut r, users, items, layers);
    let graph = HeteroGraph::from_edges(users, items, Default::default(), Vec::new()).map_err(s)?;
    let (p, q) = embeddings(&config, &graph, &params.tensors)?;
    let d = config.dim;
    let step = |x: &[f64], rels: &[EdgeType], layer: usize| -> Vec<f64> {
        let mut acc = vec![0.0; d];
        for &e in rels {
            let rel = &params.tensors.hgnn[layer][e.index()];
            for (i, a) in acc.iter_mut().enumerate() {
                let w = rel.weight.row(i);
                let pre: f64 = (0..d).map(|j| w[d + j] * x[j]).sum::<f64>() + rel.bias.data()[i];
                *a += pre.max(0.0);
            }
        }
        acc.iter().map(|a| a / rels.len() as f64).collect()
    };
    let item_rels = [EdgeType::InteractedBy, EdgeType::In, EdgeType::Out, EdgeType::Similar];
    for (table, out, rels) in [
        (&params.tensors.item_table, &p, &item_rels[..]),
        (&params.tensors.user_table, &q, &[EdgeType::Interact][..]),
    ] {
        for n in 0..table.rows() {
            let mut x = table.row(n).to_vec();
            let mut sum = x.clone();
            for layer in 0..config.layers {
                x = step(&x, rels, layer);
                sum.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
            }
            for (j, got) in out.row(n).iter().enumerate() {
                let want = sum[j] / (config.layers + 1) as f64;
                ensure!((got - want).abs() <= 1e-12, "node {n} coordinate {j}: {got} vs {want}");
            }
        }
    }
    Ok(())
}

pub fn graph_caps_and_conflicts(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let corpus = random_corpus(&mut r, 20, 50, 10);
    let (sz, k) = (r.random_range(1..=4), r.random_range(1..=5));
    let config = GraphConfig {
        sample_size: sz,
        similar_k: k,
        ..GraphConfig::default()
    };
    let graph = assemble_graph(&corpus, &config).map_err(s)?;
    let counts = count_transitions(corpus.train_sessions().map(|s| s.items.as_slice()), true);
    for v in 0..graph.num_items() {
        let deg = counts.keys().filter(|x| x.0 == v).map(|x| x.1).collect::<BTreeSet<_>>().len();
        ensure!(graph.neighbors(EdgeType::In, v).len() <= sz, "item {v}: r_in over S");
        ensure!(graph.neighbors(EdgeType::Out, v).len() <= sz, "item {v}: r_out over S");
        ensure!(graph.neighbors(EdgeType::Similar, v).len() <= k.min(deg), "item {v}: r_similar over K'");
        let ins = graph.neighbors(EdgeType::In, v);
        ensure!(
            graph.neighbors(EdgeType::Similar, v).iter().all(|h| !ins.contains(h)),
            "item {v}: pair with both r_in and r_similar"
        );
    }
    Ok(())
}

/// Before sampling every `(a, b, r_in)` has a mirror `(b, a, r_out)` of equal
/// weight, and the co-occurrence score is symmetric.
pub fn transitions_mirror_and_scores_are_symmetric(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let corpus = random_corpus(&mut r, 15, 30, 5);
    let sessions: Vec<&[usize]> = corpus.train_sessions().map(|s| s.items.as_slice()).collect();
    let counts = count_transitions(sessions.iter().copied(), true);
    for (&(a, b, e), &w) in &counts {
        let mirror = match e {
            EdgeType::In => EdgeType::Out,
            _ => EdgeType::In,
        };
        ensure!(counts.get(&(b, a, mirror)) == Some(&w), "({a},{b},{e:?}) has no equal-weight mirror");
    }
    let index = hggnn_core::graph::CooccurrenceIndex::new(sessions.iter().copied(), corpus.num_items());
    for a in 0..corpus.num_items() {
        for b in 0..corpus.num_items() {
            ensure!(index.score(a, b) == index.score(b, a), "f({a},{b}) is not symmetric");
        }
    }
    Ok(())
}

fn random_scores(r: &mut ChaCha8Rng) -> Vec<f64> {
    let n = r.random_range(1..60);
    // A coarse grid produces plenty of ties.
    (0..n).map(|_| f64::from(r.random_range(-8i32..8)) / 4.0).collect()
}

/// HR/MRR from the harness against a recomputation by sorting.
pub fn metrics_match_brute_force(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let scores = random_scores(&mut r);
    let target = r.random_range(0..scores.len());
    let mut order: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let pos = order.iter().position(|x| x.1 == target).unwrap() + 1;
    let rank = rank_of(&scores, target);
    ensure!(rank == pos, "rank_of {rank}, sorted position {pos}");
    let ranked = ranking(&scores);
    let mut prev = (0.0, 0.0);
    for k in 1..=scores.len() + 2 {
        let hr = if pos <= k { 1.0 } else { 0.0 };
        let mrr = if pos <= k { 1.0 / pos as f64 } else { 0.0 };
        ensure!(hr_at_k(&ranked, target, k) == hr, "HR@{k}");
        ensure!(mrr_at_k(&ranked, target, k) == mrr, "MRR@{k}");
        let rep = MetricReport::from_ranks("x", &[rank], &[0], &[k], Averaging::PerExample);
        ensure!(rep.hr[0] == hr && rep.mrr[0] == mrr, "report at k={k}");
        ensure!(mrr <= hr, "MRR above HR at k={k}");
        ensure!(hr >= prev.0 && mrr >= prev.1, "metric decreased at k={k}");
        prev = (hr, mrr);
    }
    Ok(())
}

/// Aggregated reports: MRR@k ≤ HR@k and both non-decreasing in k.
pub fn reports_are_monotone(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..50);
    let ranks: Vec<usize> = (0..n).map(|_| r.random_range(1..30)).collect();
    let users: Vec<usize> = (0..n).map(|_| r.random_range(0..5)).collect();
    let ks: Vec<usize> = (1..32).collect();
    for avg in [Averaging::PerExample, Averaging::PerUser] {
        let rep = MetricReport::from_ranks("x", &ranks, &users, &ks, avg);
        for (i, k) in ks.iter().enumerate() {
            ensure!(rep.mrr[i] <= rep.hr[i], "{avg:?}: MRR@{k} above HR");
            if i > 0 {
                ensure!(rep.hr[i] >= rep.hr[i - 1] && rep.mrr[i] >= rep.mrr[i - 1], "{avg:?}: decrease at k={k}");
            }
        }
    }
    Ok(())
}

pub fn ranking_ignores_logit_shift(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let scores = random_scores(&mut r);
    let shift = f64::from(r.random_range(-100i32..100));
    let shifted: Vec<f64> = scores.iter().map(|x| x + shift).collect();
    ensure!(ranking(&scores) == ranking(&shifted), "ranking changed under a shift of {shift}");
    let probs = hggnn_core::model::softmax(&scores);
    let probs2 = hggnn_core::model::softmax(&shifted);
    ensure!(ranking(&probs) == ranking(&scores), "softmax reordered the items");
    for (a, b) in probs.iter().zip(&probs2) {
        ensure!((a - b).abs() <= 1e-12, "softmax not shift invariant: {a} vs {b}");
    }
    Ok(())
}

pub fn losses_are_non_negative(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (b, n) = (r.random_range(1..5), r.random_range(1..30));
    let logits = random_tensor(&mut r, b, n, -40.0, 40.0);
    let targets: Vec<usize> = (0..b).map(|_| r.random_range(0..n)).collect();
    for mode in [LossMode::Literal, LossMode::Categorical] {
        let mut tape = Tape::new();
        let x = tape.constant(logits.clone()).map_err(s)?;
        let p = tape.softmax(x).map_err(s)?;
        let l = loss(&mut tape, p, &targets, mode).map_err(s)?;
        let v = tape.value(l).item();
        ensure!(v >= 0.0 && v.is_finite(), "{mode:?} loss {v}");
    }
    Ok(())
}

/// Deterministic readout weights so that every output coordinate matters.
fn readout(tape: &mut Tape, y: Var) -> hggnn_core::Result<Var> {
    let (rows, cols) = (tape.value(y).rows(), tape.value(y).cols());
    let w = (0..rows * cols).map(|i| ((i as f64) * 0.37 + 0.5).sin()).collect();
    let y = tape.mul_const(y, Tensor::new(rows, cols, w)?)?;
    tape.sum(y)
}

pub const OPS: [&str; 21] = [
    "matmul", "matmul_nt", "add", "sub", "mul", "add_row", "mul_col", "affine", "scale", "concat", "row_mean", "sum",
    "relu", "sigmoid", "log", "clamp", "softmax", "gather", "group_mean", "stack", "linear",
];

/// Central-difference check of one recorded op on random shapes and values.
pub fn op_gradient(op: &str, seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (n, m, k) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
    let t = |r: &mut ChaCha8Rng, rows, cols| random_tensor(r, rows, cols, -2.0, 2.0);
    let mut params: Vec<Tensor> = match op {
        "matmul" => vec![t(&mut r, n, k), t(&mut r, k, m)],
        "matmul_nt" => vec![t(&mut r, n, k), t(&mut r, m, k)],
        "add" | "sub" | "mul" => vec![t(&mut r, n, m), t(&mut r, n, m)],
        "add_row" => vec![t(&mut r, n, m), t(&mut r, 1, m)],
        "mul_col" => vec![t(&mut r, n, m), t(&mut r, n, 1)],
        "concat" => vec![t(&mut r, n, m), t(&mut r, n, k)],
        "stack" => vec![t(&mut r, n, m), t(&mut r, k, m)],
        "linear" => vec![t(&mut r, n, k), t(&mut r, m, k), t(&mut r, 1, m)],
        "relu" | "clamp" => vec![away_from_zero(&mut r, n, m)],
        "log" => vec![random_tensor(&mut r, n, m, 0.5, 3.0)],
        _ => vec![t(&mut r, n, m)],
    };
    let indices: Vec<usize> = (0..r.random_range(1..7)).map(|_| r.random_range(0..n)).collect();
    let groups = Arc::new(RowGroups::from_lists(
        (0..r.random_range(1..5))
            .map(|_| (0..r.random_range(0..4)).map(|_| r.random_range(0..n)).collect::<Vec<usize>>())
            .collect::<Vec<_>>(),
    ));
    let op = op.to_string();
    grad_check(&mut params, 1e-5, |tape, v| {
        let y = match op.as_str() {
            "matmul" => tape.matmul(v[0], v[1])?,
            "matmul_nt" => tape.matmul_nt(v[0], v[1])?,
            "add" => tape.add(v[0], v[1])?,
            "sub" => tape.sub(v[0], v[1])?,
            "mul" => tape.mul(v[0], v[1])?,
            "add_row" => tape.add_row(v[0], v[1])?,
            "mul_col" => tape.mul_col(v[0], v[1])?,
            "affine" => tape.affine(v[0], -1.7, 0.3)?,
            "scale" => tape.scale(v[0], 2.5)?,
            "concat" => tape.concat(v[0], v[1])?,
            "row_mean" => tape.row_mean(v[0])?,
            "sum" => tape.sum(v[0])?,
            "relu" => tape.relu(v[0])?,
            "sigmoid" => tape.sigmoid(v[0])?,
            "log" => tape.log(v[0])?,
            "clamp" => tape.clamp(v[0], -0.05, 0.05)?,
            "softmax" => tape.softmax(v[0])?,
            "gather" => tape.gather(v[0], &indices)?,
            "group_mean" => tape.group_mean(v[0], &groups)?,
            "stack" => tape.stack(&[v[0], v[1], v[0]])?,
            "linear" => tape.linear(v[0], v[1], Some(v[2]))?,
            other => panic!("unknown op {other}"),
        };
        readout(tape, y)
    })
    .map_err(s)
}

pub fn every_op_passes_grad_check(seed: u64) -> Result<(), String> {
    for op in OPS {
        let err = op_gradient(op, seed)?;
        ensure!(err < 1e-6, "{op}: relative error {err:e}");
    }
    Ok(())
}

/// `group_mean(aX + bY) = a·group_mean(X) + b·group_mean(Y)`.
pub fn group_mean_is_linear(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (n, m) = (r.random_range(1..6), r.random_range(1..5));
    let groups = Arc::new(RowGroups::from_lists(
        (0..r.random_range(1..6))
            .map(|_| (0..r.random_range(0..5)).map(|_| r.random_range(0..n)).collect::<Vec<usize>>())
            .collect::<Vec<_>>(),
    ));
    let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
    let (x, y) = (random_tensor(&mut r, n, m, -2.0, 2.0), random_tensor(&mut r, n, m, -2.0, 2.0));
    let mut tape = Tape::new();
    let (xv, yv) = (tape.constant(x).map_err(s)?, tape.constant(y).map_err(s)?);
    let ax = tape.scale(xv, a).map_err(s)?;
    let by = tape.scale(yv, b).map_err(s)?;
    let mix = tape.add(ax, by).map_err(s)?;
    let lhs = tape.group_mean(mix, &groups).map_err(s)?;
    let gx = tape.group_mean(xv, &groups).map_err(s)?;
    let gy = tape.group_mean(yv, &groups).map_err(s)?;
    for (i, l) in tape.value(lhs).data().iter().enumerate() {
        let want = a * tape.value(gx).data()[i] + b * tape.value(gy).data()[i];
        ensure!((l - want).abs() <= 1e-12, "entry {i}: {l} vs {want}");
    }
    Ok(())
}

/// Gradients of `L1 + L2` equal the sum of the separate gradients, on a
/// random graph with the full model.
pub fn backward_is_linear(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (graph, users, items) = random_graph(&mut r);
    let (config, params) = small_model(&mut r, users, items, 1);
    let tensors: Vec<Tensor> = params.tensors.iter().into_iter().cloned().collect();
    let mut q = |_: ()| -> (Vec<usize>, usize, usize) {
        let len = r.random_range(1..4);
        ((0..len).map(|_| r.random_range(0..items)).collect(), r.random_range(0..users), r.random_range(0..items))
    };
    let (a, b) = (q(()), q(()));
    let one = |tape: &mut Tape, vars: &[Var], x: &(Vec<usize>, usize, usize)| -> hggnn_core::Result<Var> {
        let set = ParamSet::from_ordered(config.layers, vars.to_vec())?;
        let query = [Query {
            user: Some(x.1),
            prefix: &x.0,
        }];
        batch_loss(tape, &config, &graph, &set, &query, &[x.2])
    };
    let both = analytic_gradients(&tensors, &|tape: &mut Tape, vars: &[Var]| {
        let l1 = one(tape, vars, &a)?;
        let l2 = one(tape, vars, &b)?;
        tape.add(l1, l2)
    })
    .map_err(s)?;
    let ga = analytic_gradients(&tensors, &|tape: &mut Tape, vars: &[Var]| one(tape, vars, &a)).map_err(s)?;
    let gb = analytic_gradients(&tensors, &|tape: &mut Tape, vars: &[Var]| one(tape, vars, &b)).map_err(s)?;
    for ((g, x), y) in both.iter().zip(&ga).zip(&gb) {
        for ((g, x), y) in g.data().iter().zip(x.data()).zip(y.data()) {
            ensure!((g - (x + y)).abs() <= 1e-12 * 1f64.max(g.abs()), "{g} vs {x} + {y}");
        }
    }
    Ok(())
}

fn random_events(r: &mut ChaCha8Rng) -> Vec<Interaction> {
    let users = r.random_range(1..8);
    let items = r.random_range(3..15);
    let mut events = Vec::new();
    for u in 0..users {
        let mut t = r.random_range(0..1000u64);
        for _ in 0..r.random_range(5..60) {
            t += if r.random_bool(0.25) { r.random_range(3601..20_000) } else { r.random_range(0..3600) };
            events.push(Interaction::new(format!("u{u}"), format!("i{}", r.random_range(0..items)), t));
        }
    }
    events.shuffle(r);
    events
}

/// Filter fixpoint, split monotonicity, vocabulary density and
/// sessionization determinism on random event logs.
pub fn corpus_invariants(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let events = random_events(&mut r);
    let a = sessionize(&events, 3600).map_err(s)?;
    ensure!(a == sessionize(&events, 3600).map_err(s)?, "sessionize is not deterministic");
    let Ok(filtered) = filter_corpus(a) else {
        return Ok(());
    };
    for list in &filtered.sessions_by_user {
        ensure!(list.len() >= 5, "user kept with {} sessions", list.len());
        ensure!(list.iter().all(|s| s.items.len() >= 3), "short session kept");
    }
    let mut used = BTreeSet::new();
    filtered.sessions().for_each(|s| used.extend(s.items.iter().copied()));
    ensure!(used.into_iter().eq(0..filtered.num_items()), "item indices are not dense");
    let split = split_corpus(filtered);
    let train_items: BTreeSet<usize> = split.train_sessions().flat_map(|s| s.items.iter().copied()).collect();
    for list in &split.sessions_by_user {
        let last_train = list.iter().filter(|s| s.split == Split::Train).map(|s| s.start_ts).max();
        let first_test = list.iter().filter(|s| s.split == Split::Test).map(|s| s.start_ts).min();
        if let (Some(a), Some(b)) = (last_train, first_test) {
            ensure!(a <= b, "a train session starts after a test session");
        }
    }
    ensure!(
        split.test_sessions().all(|s| s.items.iter().all(|i| train_items.contains(i))),
        "test session holds an item unseen in training"
    );
    let ex = segment_examples(&split, SegmentMode::AllPrefixes);
    ensure!(ex.train.iter().chain(&ex.test).all(|e| !e.prefix.is_empty()), "empty prefix");
    Ok(())
}

/// Graph arms change only the edge class they remove.
pub fn ablation_arms_touch_only_their_edges(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let corpus = random_corpus(&mut r, 15, 40, 6);
    let base = GraphConfig::default();
    let count = |arm: Arm| -> Result<BTreeMap<EdgeType, usize>, String> {
        let (g, _) = arm.apply(base, ModelConfig::default());
        let graph = assemble_graph(&corpus, &g).map_err(s)?;
        Ok(EdgeType::ALL.iter().map(|&e| (e, graph.stats().count(e))).collect())
    };
    let full = count(Arm::Full)?;
    for (arm, gone) in [
        (Arm::NoUserNodes, vec![EdgeType::Interact, EdgeType::InteractedBy]),
        (Arm::NoInEdges, vec![EdgeType::In]),
        (Arm::NoOutEdges, vec![EdgeType::Out]),
        (Arm::NoSimilarEdges, vec![EdgeType::Similar]),
    ] {
        let c = count(arm)?;
        for e in EdgeType::ALL {
            if gone.contains(&e) {
                ensure!(c[&e] == 0, "{}: {} edges remain", arm.name(), e.as_str());
            } else if arm == Arm::NoInEdges && e == EdgeType::Similar {
                // Without r_in nothing suppresses similarity edges.
                ensure!(c[&e] >= full[&e], "{}: fewer similarity edges", arm.name());
            } else {
                ensure!(c[&e] == full[&e], "{}: {} count changed", arm.name(), e.as_str());
            }
        }
    }
    for arm in [Arm::NoHgnn, Arm::NoCurrent, Arm::NoGeneral] {
        ensure!(count(arm)? == full, "{} changed the graph", arm.name());
    }
    Ok(())
}

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("softmax normalization", softmax_rows_sum_to_one),
        ("attention simplex", attention_weights_form_a_simplex),
        ("fusion convexity", fusion_is_convex),
        ("W_3 = 0 removes the user", zero_user_weights_make_general_preference_user_free),
        ("permutation equivariance", hgnn_is_permutation_equivariant),
        ("locality", hgnn_is_local),
        ("edgeless degeneracy", edgeless_graph_is_a_per_node_chain),
        ("top-S / K' caps and conflicts", graph_caps_and_conflicts),
        ("mirror edges and f symmetry", transitions_mirror_and_scores_are_symmetric),
        ("metric oracle", metrics_match_brute_force),
        ("metric monotonicity", reports_are_monotone),
        ("logit-shift invariance", ranking_ignores_logit_shift),
        ("loss positivity", losses_are_non_negative),
        ("per-op grad check", every_op_passes_grad_check),
        ("group_mean linearity", group_mean_is_linear),
        ("backward linearity", backward_is_linear),
        ("corpus invariants", corpus_invariants),
        ("ablation arm isolation", ablation_arms_touch_only_their_edges),
    ]
}
