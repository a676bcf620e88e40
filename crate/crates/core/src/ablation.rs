//! Named experiment arms and the train-then-evaluate pipeline behind them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{segment_examples, SegmentMode, SessionCorpus};
use crate::error::{Error, Result};
use crate::graph::{assemble_graph, GraphConfig, HeteroGraph};
use crate::itemknn::ItemKnn;
use crate::metrics::{Averaging, MetricReport};
use crate::model::ModelConfig;
use crate::train::{self, rank_examples, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arm {
    Full,
    NoHgnn,
    NoCurrent,
    NoGeneral,
    NoUserNodes,
    NoInEdges,
    NoOutEdges,
    NoSimilarEdges,
}

impl Arm {
    pub const ALL: [Arm; 8] = [
        Arm::Full,
        Arm::NoHgnn,
        Arm::NoCurrent,
        Arm::NoGeneral,
        Arm::NoUserNodes,
        Arm::NoInEdges,
        Arm::NoOutEdges,
        Arm::NoSimilarEdges,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Full => "full",
            Arm::NoHgnn => "w/o HGNN module",
            Arm::NoCurrent => "w/o CPL module",
            Arm::NoGeneral => "w/o GPL module",
            Arm::NoUserNodes => "w/o user nodes",
            Arm::NoInEdges => "w/o in edges",
            Arm::NoOutEdges => "w/o out edges",
            Arm::NoSimilarEdges => "w/o similar edges",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Arm::ALL.into_iter().find(|a| a.name() == name).ok_or_else(|| Error::UnknownArm {
            name: String::from(name),
            valid: Arm::ALL.map(|a| a.name()).join(", "),
        })
    }

    /// Graph and model settings of this arm derived from the full ones.
    pub fn apply(self, graph: GraphConfig, model: ModelConfig) -> (GraphConfig, ModelConfig) {
        let (mut g, mut m) = (graph, model);
        match self {
            Arm::Full => {}
            Arm::NoHgnn => m.use_hgnn = false,
            Arm::NoCurrent => m.paths.current = false,
            Arm::NoGeneral => m.paths.general = false,
            Arm::NoUserNodes => g.mask.user_edges = false,
            Arm::NoInEdges => g.mask.in_edges = false,
            Arm::NoOutEdges => g.mask.out_edges = false,
            Arm::NoSimilarEdges => g.mask.similar_edges = false,
        }
        (g, m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub segment: SegmentMode,
    pub ks: Vec<usize>,
    pub averaging: Averaging,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            graph: GraphConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            segment: SegmentMode::default(),
            ks: vec![5, 10],
            averaging: Averaging::default(),
        }
    }
}

/// Everything produced by one arm.
#[derive(Clone, Debug)]
pub struct ArmRun {
    pub report: MetricReport,
    pub graph: HeteroGraph,
    pub outcome: TrainOutcome,
    /// Per test example, in corpus order.
    pub ranks: Vec<usize>,
    pub users: Vec<usize>,
}

/// Builds the arm's graph, trains on the train split and evaluates on the
/// test split. `corpus` must already be filtered and split.
pub fn run_arm(arm: Arm, corpus: &SessionCorpus, config: &ExperimentConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<ArmRun> {
    let (gc, mc) = arm.apply(config.graph, config.model);
    let graph = assemble_graph(corpus, &gc)?;
    let examples = segment_examples(corpus, config.segment);
    if examples.test.is_empty() {
        return Err(Error::EmptyCorpus(String::from("no test examples")));
    }
    let outcome = train::train(mc, &graph, &examples.train, &config.train, on_epoch)?;
    let ranks = rank_examples(&outcome.params, &graph, &examples.test)?;
    let users: Vec<usize> = examples.test.iter().map(|e| e.user_id).collect();
    let report = MetricReport::from_ranks(arm.name(), &ranks, &users, &config.ks, config.averaging);
    Ok(ArmRun {
        report,
        graph,
        outcome,
        ranks,
        users,
    })
}

pub fn run_ablation(arm: Arm, corpus: &SessionCorpus, config: &ExperimentConfig) -> Result<MetricReport> {
    Ok(run_arm(arm, corpus, config, |_| {})?.report)
}

pub const ITEMKNN: &str = "ItemKNN";

/// ItemKNN fitted on the train split and scored on the test examples.
pub fn run_itemknn(corpus: &SessionCorpus, ks: &[usize], averaging: Averaging) -> Result<MetricReport> {
    let examples = segment_examples(corpus, SegmentMode::AllPrefixes);
    if examples.test.is_empty() {
        return Err(Error::EmptyCorpus(String::from("no test examples")));
    }
    let knn = ItemKnn::fit(corpus);
    let ranks: Vec<usize> = examples.test.iter().map(|e| knn.rank_of(&e.prefix, e.label)).collect();
    let users: Vec<usize> = examples.test.iter().map(|e| e.user_id).collect();
    Ok(MetricReport::from_ranks(ITEMKNN, &ranks, &users, ks, averaging))
}
