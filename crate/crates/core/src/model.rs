//! Full model: parameters, batched forward pass, scoring and loss.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{self, Encoder, Paths};
use crate::error::{Error, Result};
use crate::graph::{EdgeType, HeteroGraph};
use crate::hgnn::{self, Relation};
use crate::math::sqrt;
use crate::tape::{self, Tape, Var};
use crate::tensor::Tensor;

/// Lower/upper clamp on probabilities before taking logs.
pub const PROB_CLAMP: (f64, f64) = (1e-12, 1.0 - 1e-12);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMode {
    /// `-[log ŷ_t + Σ_{i≠t} log(1 - ŷ_i)]` over the softmax vector.
    #[default]
    Literal,
    /// `-log ŷ_t`.
    Categorical,
}

impl LossMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "literal" => Some(LossMode::Literal),
            "categorical" => Some(LossMode::Categorical),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Literal => "literal",
            LossMode::Categorical => "categorical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    /// Longest prefix fed to the encoder; longer prefixes keep their most
    /// recent items.
    pub max_len: usize,
    pub loss: LossMode,
    /// When false the encoders read the initial embeddings directly.
    pub use_hgnn: bool,
    pub paths: Paths,
    /// One fusion gate per coordinate instead of a single scalar gate.
    pub vector_gate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 128,
            layers: 2,
            max_len: 20,
            loss: LossMode::Literal,
            use_hgnn: true,
            paths: Paths::default(),
            vector_gate: false,
        }
    }
}

/// Every trainable tensor of the model, generic over storage so that the
/// same layout serves for values (`Tensor`) and tape handles (`Var`).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    /// `p^(0)`, `|V| × d`.
    pub item_table: T,
    /// `q^(0)`, `|U| × d`.
    pub user_table: T,
    /// Per layer, indexed by [`EdgeType::index`].
    pub hgnn: Vec<[Relation<T>; 5]>,
    pub encoder: Encoder<T>,
}

impl<T> ParamSet<T> {
    /// Tensors in canonical order.
    pub fn iter(&self) -> Vec<&T> {
        let mut v = alloc::vec![&self.item_table, &self.user_table];
        for layer in &self.hgnn {
            for rel in layer {
                v.push(&rel.weight);
                v.push(&rel.bias);
            }
        }
        let e = &self.encoder;
        v.extend([
            &e.position, &e.w_c, &e.w_0, &e.w_1, &e.v_0, &e.b_0, &e.w_2, &e.w_3, &e.v_1, &e.b_1, &e.w_s,
        ]);
        v
    }

    pub fn iter_mut(&mut self) -> Vec<&mut T> {
        let mut v = alloc::vec![&mut self.item_table, &mut self.user_table];
        for layer in &mut self.hgnn {
            for rel in layer {
                v.push(&mut rel.weight);
                v.push(&mut rel.bias);
            }
        }
        let e = &mut self.encoder;
        v.extend([
            &mut e.position,
            &mut e.w_c,
            &mut e.w_0,
            &mut e.w_1,
            &mut e.v_0,
            &mut e.b_0,
            &mut e.w_2,
            &mut e.w_3,
            &mut e.v_1,
            &mut e.b_1,
            &mut e.w_s,
        ]);
        v
    }

    /// Names matching [`ParamSet::iter`].
    pub fn names(&self) -> Vec<String> {
        param_names(self.hgnn.len())
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> core::result::Result<U, E>) -> core::result::Result<ParamSet<U>, E> {
        let mut rel = |r: &Relation<T>| -> core::result::Result<Relation<U>, E> {
            Ok(Relation {
                weight: f(&r.weight)?,
                bias: f(&r.bias)?,
            })
        };
        let mut hgnn = Vec::with_capacity(self.hgnn.len());
        for layer in &self.hgnn {
            hgnn.push([rel(&layer[0])?, rel(&layer[1])?, rel(&layer[2])?, rel(&layer[3])?, rel(&layer[4])?]);
        }
        let e = &self.encoder;
        Ok(ParamSet {
            item_table: f(&self.item_table)?,
            user_table: f(&self.user_table)?,
            hgnn,
            encoder: Encoder {
                position: f(&e.position)?,
                w_c: f(&e.w_c)?,
                w_0: f(&e.w_0)?,
                w_1: f(&e.w_1)?,
                v_0: f(&e.v_0)?,
                b_0: f(&e.b_0)?,
                w_2: f(&e.w_2)?,
                w_3: f(&e.w_3)?,
                v_1: f(&e.v_1)?,
                b_1: f(&e.b_1)?,
                w_s: f(&e.w_s)?,
            },
        })
    }

    /// Rebuilds a set from values in canonical order.
    pub fn from_ordered(layers: usize, values: Vec<T>) -> Result<Self> {
        let expected = 2 + layers * 10 + 11;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameter tensors, found {}",
                values.len()
            )));
        }
        let mut it = values.into_iter();
        let mut next = || it.next().unwrap();
        let item_table = next();
        let user_table = next();
        let mut hgnn = Vec::with_capacity(layers);
        for _ in 0..layers {
            hgnn.push(core::array::from_fn(|_| {
                let weight = next();
                let bias = next();
                Relation { weight, bias }
            }));
        }
        let encoder = Encoder {
            position: next(),
            w_c: next(),
            w_0: next(),
            w_1: next(),
            v_0: next(),
            b_0: next(),
            w_2: next(),
            w_3: next(),
            v_1: next(),
            b_1: next(),
            w_s: next(),
        };
        Ok(ParamSet {
            item_table,
            user_table,
            hgnn,
            encoder,
        })
    }
}

pub fn param_names(layers: usize) -> Vec<String> {
    let mut v = alloc::vec![String::from("item_embedding"), String::from("user_embedding")];
    for k in 0..layers {
        for e in EdgeType::ALL {
            v.push(format!("hgnn.{}.{}.weight", k + 1, e.as_str()));
            v.push(format!("hgnn.{}.{}.bias", k + 1, e.as_str()));
        }
    }
    for n in ["position", "w_c", "w_0", "w_1", "v_0", "b_0", "w_2", "w_3", "v_1", "b_1", "w_s"] {
        v.push(format!("encoder.{n}"));
    }
    v
}

/// Expected `(rows, cols)` of each parameter, in canonical order.
pub fn param_shapes(config: &ModelConfig, num_users: usize, num_items: usize) -> Vec<(usize, usize)> {
    let d = config.dim;
    let mut v = alloc::vec![(num_items, d), (num_users, d)];
    for _ in 0..config.layers * 5 {
        v.push((d, 2 * d));
        v.push((1, d));
    }
    v.extend([
        (config.max_len, d),
        (d, 2 * d),
        (d, d),
        (d, d),
        (1, d),
        (1, d),
        (d, d),
        (d, d),
        (1, d),
        (1, d),
        (if config.vector_gate { d } else { 1 }, 2 * d),
    ]);
    v
}

/// Trained (or freshly initialized) model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: ParamSet<Tensor>,
}

impl ModelParams {
    /// Embeddings and weights from `U(-1/√d, 1/√d)`, biases zero.
    pub fn init(config: ModelConfig, num_users: usize, num_items: usize, seed: u64) -> Result<Self> {
        if config.dim == 0 || config.max_len == 0 {
            return Err(Error::invalid("embedding size and max prefix length must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / sqrt(config.dim as f64);
        let names = param_names(config.layers);
        let shapes = param_shapes(&config, num_users, num_items);
        let values = names
            .iter()
            .zip(shapes)
            .map(|(n, (r, c))| {
                if n.ends_with(".bias") {
                    Tensor::zeros(r, c)
                } else {
                    Tensor::uniform(r, c, bound, &mut rng)
                }
            })
            .collect();
        Ok(ModelParams {
            config,
            tensors: ParamSet::from_ordered(config.layers, values)?,
        })
    }

    pub fn num_items(&self) -> usize {
        self.tensors.item_table.rows()
    }

    pub fn num_users(&self) -> usize {
        self.tensors.user_table.rows()
    }

    /// Checks every tensor against the shapes implied by the config and the
    /// given graph sizes.
    pub fn check_shapes(&self, num_users: usize, num_items: usize) -> Result<()> {
        let want = param_shapes(&self.config, num_users, num_items);
        for ((name, t), (r, c)) in self.tensors.names().iter().zip(self.tensors.iter()).zip(want) {
            if t.shape() != crate::error::Shape(r, c) {
                return Err(Error::invalid(format!(
                    "parameter {name} has shape {} but the model needs [{r}, {c}]",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Records every tensor on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<ParamSet<Var>> {
        self.tensors.try_map(|t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    /// Combined item and user embeddings, computed once for inference.
    pub fn embeddings(&self, graph: &HeteroGraph) -> Result<Embeddings> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let (p, q) = node_embeddings(&mut tape, &self.config, graph, &vars)?;
        Ok(Embeddings {
            items: tape.value(p).clone(),
            users: tape.value(q).clone(),
        })
    }

    /// Softmax scores over all items for each `(user, prefix)` query.
    pub fn score(&self, graph: &HeteroGraph, queries: &[Query<'_>]) -> Result<Vec<Vec<f64>>> {
        let emb = self.embeddings(graph)?;
        self.score_with(&emb, queries)
    }

    /// As [`ModelParams::score`] but with precomputed embeddings.
    pub fn score_with(&self, emb: &Embeddings, queries: &[Query<'_>]) -> Result<Vec<Vec<f64>>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = tape.constant(emb.items.clone())?;
        let q = tape.constant(emb.users.clone())?;
        let enc = self.tensors.encoder.try_map_ref(|t| tape.constant(t.clone()))?;
        let item0 = tape.constant(self.tensors.item_table.clone())?;
        let probs = batch_probabilities(&mut tape, &self.config, p, q, item0, &enc, queries)?;
        let v = tape.value(probs);
        Ok((0..v.rows()).map(|r| v.row(r).to_vec()).collect())
    }

    /// Top `k` items for one query; ties go to the smaller index.
    pub fn recommend(&self, graph: &HeteroGraph, user: Option<usize>, prefix: &[usize], k: usize) -> Result<Vec<usize>> {
        let scores = self.score(graph, &[Query { user, prefix }])?;
        let mut ranked = crate::metrics::ranking(&scores[0]);
        ranked.truncate(k);
        Ok(ranked)
    }
}

impl<T> Encoder<T> {
    pub fn try_map_ref<U, E>(&self, mut f: impl FnMut(&T) -> core::result::Result<U, E>) -> core::result::Result<Encoder<U>, E> {
        Ok(Encoder {
            position: f(&self.position)?,
            w_c: f(&self.w_c)?,
            w_0: f(&self.w_0)?,
            w_1: f(&self.w_1)?,
            v_0: f(&self.v_0)?,
            b_0: f(&self.b_0)?,
            w_2: f(&self.w_2)?,
            w_3: f(&self.w_3)?,
            v_1: f(&self.v_1)?,
            b_1: f(&self.b_1)?,
            w_s: f(&self.w_s)?,
        })
    }
}

/// Combined item (`p`) and user (`q`) embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub items: Tensor,
    pub users: Tensor,
}

/// One scoring request. `user: None` stands for an unknown user, who is
/// represented by the mean of all user embeddings.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub user: Option<usize>,
    pub prefix: &'a [usize],
}

/// `(p, q)` on the tape: the graph encoder output, or the initial tables
/// when the graph encoder is switched off.
pub fn node_embeddings(tape: &mut Tape, config: &ModelConfig, graph: &HeteroGraph, vars: &ParamSet<Var>) -> Result<(Var, Var)> {
    if !config.use_hgnn {
        return Ok((vars.item_table, vars.user_table));
    }
    let out = hgnn::forward(tape, graph, vars.item_table, vars.user_table, &vars.hgnn)?;
    Ok((out.items, out.users))
}

/// `ŷ` for each query, stacked into `B × |V|`.
pub fn batch_probabilities(
    tape: &mut Tape,
    config: &ModelConfig,
    items: Var,
    users: Var,
    item0: Var,
    enc: &Encoder<Var>,
    queries: &[Query<'_>],
) -> Result<Var> {
    let num_items = tape.value(items).rows();
    let num_users = tape.value(users).rows();
    let mut mean_user = None;
    let mut sessions = Vec::with_capacity(queries.len());
    for qy in queries {
        let prefix = truncate_prefix(qy.prefix, config.max_len);
        if prefix.is_empty() {
            return Err(Error::invalid("empty prefix"));
        }
        if let Some(&bad) = prefix.iter().find(|&&i| i >= num_items) {
            return Err(Error::Index {
                op: "prefix",
                index: bad,
                len: num_items,
            });
        }
        let rows = tape.gather(items, prefix)?;
        let user = match qy.user {
            Some(u) if u < num_users => tape.gather(users, &[u])?,
            _ => match mean_user {
                Some(m) => m,
                None => {
                    if num_users == 0 {
                        return Err(Error::invalid("no user embeddings to fall back on"));
                    }
                    let m = tape.row_mean(users)?;
                    mean_user = Some(m);
                    m
                }
            },
        };
        sessions.push(encoder::encode_session(tape, rows, user, enc, config.paths)?.session);
    }
    let s = tape.stack(&sessions)?;
    score(tape, s, item0)
}

/// `softmax(S · p^(0)ᵀ)`: probabilities over every item.
pub fn score(tape: &mut Tape, sessions: Var, item0: Var) -> Result<Var> {
    let logits = tape.matmul_nt(sessions, item0)?;
    tape.softmax(logits)
}

/// Mean loss over the rows of `probs` (`B × |V|`) against `targets`.
pub fn loss(tape: &mut Tape, probs: Var, targets: &[usize], mode: LossMode) -> Result<Var> {
    let (b, n) = (tape.value(probs).rows(), tape.value(probs).cols());
    if targets.len() != b || b == 0 {
        return Err(Error::invalid("loss: one target per row required"));
    }
    let mut onehot = Tensor::zeros(b, n);
    for (r, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::Index {
                op: "loss",
                index: t,
                len: n,
            });
        }
        onehot.row_mut(r)[t] = 1.0;
    }
    let (lo, hi) = PROB_CLAMP;
    let clamped = tape.clamp(probs, lo, hi)?;
    let log_p = tape.log(clamped)?;
    let hit = tape.mul_const(log_p, onehot.clone())?;
    let mut total = tape.sum(hit)?;
    if mode == LossMode::Literal {
        let comp = tape.affine(probs, -1.0, 1.0)?;
        let comp = tape.clamp(comp, lo, hi)?;
        let log_q = tape.log(comp)?;
        let mut rest = onehot;
        rest.data_mut().iter_mut().for_each(|x| *x = 1.0 - *x);
        let miss = tape.mul_const(log_q, rest)?;
        let miss = tape.sum(miss)?;
        total = tape.add(total, miss)?;
    }
    tape.scale(total, -1.0 / b as f64)
}

/// The most recent `max_len` items.
pub fn truncate_prefix(prefix: &[usize], max_len: usize) -> &[usize] {
    &prefix[prefix.len().saturating_sub(max_len)..]
}

/// Full forward pass and mean loss for a batch, recorded on `tape`.
pub fn batch_loss(
    tape: &mut Tape,
    config: &ModelConfig,
    graph: &HeteroGraph,
    vars: &ParamSet<Var>,
    queries: &[Query<'_>],
    targets: &[usize],
) -> Result<Var> {
    let (p, q) = node_embeddings(tape, config, graph, vars)?;
    let probs = batch_probabilities(tape, config, p, q, vars.item_table, &vars.encoder, queries)?;
    loss(tape, probs, targets, config.loss)
}

/// Plain-value softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut v = row.to_vec();
    tape::softmax_in_place(&mut v);
    v
}
