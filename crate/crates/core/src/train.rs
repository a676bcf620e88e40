//! Mini-batch Adam training and batched evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{AdamConfig, AdamState};
use crate::data::TrainingExample;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metrics;
use crate::model::{self, ModelConfig, ModelParams, Query};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hold out 10% of the train examples and keep the parameters of the
    /// epoch with the best validation HR@5.
    pub validation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 512,
            epochs: 30,
            seed: 42,
            validation: false,
        }
    }
}

pub const VALIDATION_PERCENT: usize = 10;

// Independent ChaCha streams derived from the one seed.
const SHUFFLE_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Example-weighted mean of the batch losses.
    pub mean_loss: f64,
    pub val_hr5: Option<f64>,
    pub val_mrr5: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, when validating.
    pub best_epoch: Option<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Splits off the validation examples (`ceil(10%)`, at least one train
/// example kept) with a seeded shuffle.
pub fn validation_split(examples: &[TrainingExample], seed: u64) -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    let n = examples.len();
    let n_val = (n * VALIDATION_PERCENT).div_ceil(100).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, VALIDATION_STREAM));
    let mut held = alloc::vec![false; n];
    for &i in &order[..n_val] {
        held[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (ex, h) in examples.iter().zip(held) {
        if h {
            val.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    (train, val)
}

/// Trains freshly initialized parameters (seeded by `train.seed`).
pub fn train(
    model: ModelConfig,
    graph: &HeteroGraph,
    examples: &[TrainingExample],
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let params = ModelParams::init(model, graph.num_users(), graph.num_items(), config.seed)?;
    train_from(params, graph, examples, config, on_epoch)
}

pub fn train_from(
    mut params: ModelParams,
    graph: &HeteroGraph,
    examples: &[TrainingExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if examples.is_empty() {
        return Err(Error::EmptyCorpus(String::from("no training examples")));
    }
    params.check_shapes(graph.num_users(), graph.num_items())?;
    let (train_set, val_set) = if config.validation {
        validation_split(examples, config.seed)
    } else {
        (examples.to_vec(), Vec::new())
    };

    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        params.tensors.iter(),
    );
    let mut rng = stream(config.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let loss = step(&mut params, &mut adam, graph, &batch).map_err(|e| diagnose(e, epoch, b + 1, &batch))?;
            total += loss * batch.len() as f64;
        }
        let mut rec = EpochRecord {
            epoch,
            mean_loss: total / train_set.len() as f64,
            val_hr5: None,
            val_mrr5: None,
        };
        if !val_set.is_empty() {
            let ranks = rank_examples(&params, graph, &val_set)?;
            let hr = mean(ranks.iter().map(|&r| metrics::hit_from_rank(r, 5)));
            rec.val_hr5 = Some(hr);
            rec.val_mrr5 = Some(mean(ranks.iter().map(|&r| metrics::reciprocal_from_rank(r, 5))));
            if best.as_ref().is_none_or(|(h, _, _)| hr > *h) {
                best = Some((hr, epoch, params.clone()));
            }
        }
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(match best {
        Some((_, epoch, p)) => TrainOutcome {
            params: p,
            log,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            params,
            log,
            best_epoch: None,
        },
    })
}

/// Forward, backward and one Adam update; returns the batch loss.
fn step(params: &mut ModelParams, adam: &mut AdamState, graph: &HeteroGraph, batch: &[&TrainingExample]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, true)?;
    let queries: Vec<Query<'_>> = batch
        .iter()
        .map(|e| Query {
            user: Some(e.user_id),
            prefix: &e.prefix,
        })
        .collect();
    let targets: Vec<usize> = batch.iter().map(|e| e.label).collect();
    let loss = model::batch_loss(&mut tape, &params.config, graph, &vars, &queries, &targets)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    let grads = tape.backward(loss)?;
    let g: Vec<Tensor> = vars.iter().into_iter().map(|&v| grads.wrt(&tape, v)).collect();
    let g_refs: Vec<&Tensor> = g.iter().collect();
    adam.step(&mut params.tensors.iter_mut(), &g_refs)?;
    Ok(value)
}

fn diagnose(e: Error, epoch: usize, batch: usize, examples: &[&TrainingExample]) -> Error {
    if !e.is_numeric() {
        return e;
    }
    let mut detail = format!("{e}; {} examples", examples.len());
    for ex in examples.iter().take(8) {
        detail.push_str(&format!("; user {} prefix {:?} label {}", ex.user_id, ex.prefix, ex.label));
    }
    if examples.len() > 8 {
        detail.push_str("; ...");
    }
    Error::NonFiniteLoss { epoch, batch, detail }
}

/// Queries scored per tape during evaluation.
pub const EVAL_CHUNK: usize = 256;

/// 1-based rank of each example's label under `params`.
pub fn rank_examples(params: &ModelParams, graph: &HeteroGraph, examples: &[TrainingExample]) -> Result<Vec<usize>> {
    let emb = params.embeddings(graph)?;
    let mut ranks = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_CHUNK) {
        let queries: Vec<Query<'_>> = chunk
            .iter()
            .map(|e| Query {
                user: Some(e.user_id),
                prefix: &e.prefix,
            })
            .collect();
        let scores = params.score_with(&emb, &queries)?;
        for (s, e) in scores.iter().zip(chunk) {
            ranks.push(metrics::rank_of(s, e.label));
        }
    }
    Ok(ranks)
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
