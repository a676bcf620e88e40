//! Loading a corpus from disk and batch scoring with optional threads.

use std::thread;

use hggnn_core::data::{filter_corpus_with, sessionize, split_corpus_with, SessionCorpus, TrainingExample};
use hggnn_core::graph::HeteroGraph;
use hggnn_core::metrics;
use hggnn_core::model::{ModelParams, Query};
use hggnn_core::train::EVAL_CHUNK;

use crate::config::Config;
use crate::error::{AppError, Result};
use crate::events::read_log;

/// Reads `data.path`, sessionizes, filters and splits it.
pub fn load_corpus(cfg: &Config) -> Result<SessionCorpus> {
    if cfg.data_path.as_os_str().is_empty() {
        return Err(AppError::usage("no input data: set data.path (or pass --data FILE)"));
    }
    let events = read_log(&cfg.data_path)?;
    let corpus = sessionize(&events, cfg.gap_seconds)?;
    let corpus = filter_corpus_with(corpus, cfg.min_session_len, cfg.min_user_sessions)?;
    Ok(split_corpus_with(corpus, cfg.test_percent))
}

/// 1-based label ranks, scored on up to `threads` threads. The result does
/// not depend on the thread count.
pub fn rank_examples(params: &ModelParams, graph: &HeteroGraph, examples: &[TrainingExample], threads: usize) -> Result<Vec<usize>> {
    let emb = params.embeddings(graph)?;
    let rank_slice = |part: &[TrainingExample]| -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(part.len());
        for chunk in part.chunks(EVAL_CHUNK) {
            let queries: Vec<Query<'_>> = chunk
                .iter()
                .map(|e| Query {
                    user: Some(e.user_id),
                    prefix: &e.prefix,
                })
                .collect();
            let scores = params.score_with(&emb, &queries)?;
            out.extend(scores.iter().zip(chunk).map(|(s, e)| metrics::rank_of(s, e.label)));
        }
        Ok(out)
    };
    let threads = threads.max(1).min(examples.len().max(1));
    if threads == 1 {
        return rank_slice(examples);
    }
    let per = examples.len().div_ceil(threads);
    let parts: Vec<Result<Vec<usize>>> = thread::scope(|s| {
        let handles: Vec<_> = examples.chunks(per).map(|part| s.spawn(move || rank_slice(part))).collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut ranks = Vec::with_capacity(examples.len());
    for p in parts {
        ranks.extend(p?);
    }
    Ok(ranks)
}
