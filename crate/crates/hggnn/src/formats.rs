//! Text artifacts: graph edge list, statistics, metrics, epoch logs, ranks.

use std::fmt::Write as _;

use hggnn_core::data::{SessionCorpus, TrainingExample};
use hggnn_core::graph::{EdgeType, HeteroGraph, NodeKind, NodeRef};
use hggnn_core::metrics::{reciprocal_from_rank, MetricReport};
use hggnn_core::train::EpochRecord;

fn key(corpus: &SessionCorpus, n: NodeRef) -> &str {
    match n.kind {
        NodeKind::Item => corpus.items.key(n.id),
        NodeKind::User => corpus.users.key(n.id),
    }
}

pub const GRAPH_HEADER: &str = "# head_kind\thead\tedge_type\ttail_kind\ttail\tweight";

/// One edge per line with external keys, in the graph's canonical order
/// (by tail, then edge type, then head).
pub fn graph_tsv(graph: &HeteroGraph, corpus: &SessionCorpus) -> String {
    let mut s = String::from(GRAPH_HEADER);
    s.push('\n');
    for e in graph.edges() {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.head.kind.as_str(),
            key(corpus, e.head),
            e.etype.as_str(),
            e.tail.kind.as_str(),
            key(corpus, e.tail),
            e.weight
        );
    }
    s
}

pub fn stats_text(graph: &HeteroGraph, corpus: &SessionCorpus, train_examples: usize, test_examples: usize) -> String {
    let st = graph.stats();
    let mut s = String::new();
    let _ = writeln!(s, "users\t{}", corpus.num_users());
    let _ = writeln!(s, "items\t{}", corpus.num_items());
    let _ = writeln!(s, "train_sessions\t{}", corpus.train_sessions().count());
    let _ = writeln!(s, "test_sessions\t{}", corpus.test_sessions().count());
    let _ = writeln!(s, "train_examples\t{train_examples}");
    let _ = writeln!(s, "test_examples\t{test_examples}");
    for e in EdgeType::ALL {
        let _ = writeln!(s, "edges.{}\t{}", e.as_str(), st.count(e));
    }
    let _ = writeln!(s, "edges.total\t{}", st.total_edges());
    s
}

pub const METRICS_HEADER: &str = "arm\tk\thr\tmrr\tcount";

/// One row per `(arm, k)`.
pub fn metrics_rows(report: &MetricReport) -> String {
    let mut s = String::new();
    for (i, k) in report.ks.iter().enumerate() {
        let _ = writeln!(s, "{}\t{k}\t{:.6}\t{:.6}\t{}", report.arm, report.hr[i], report.mrr[i], report.count);
    }
    s
}

pub fn metrics_tsv(reports: &[MetricReport]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&metrics_rows(r));
    }
    s
}

/// Human-readable summary, one line per report.
pub fn metrics_summary(report: &MetricReport) -> String {
    let mut s = format!("{} ({} examples):", report.arm, report.count);
    for (i, k) in report.ks.iter().enumerate() {
        let _ = write!(s, " HR@{k}={:.4} MRR@{k}={:.4}", report.hr[i], report.mrr[i]);
    }
    s
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| String::from("NA"), |v| format!("{v}"))
}

pub const EPOCHS_HEADER: &str = "epoch\tmean_loss\tval_hr5\tval_mrr5";

pub fn epoch_row(r: &EpochRecord) -> String {
    format!("{}\t{}\t{}\t{}\n", r.epoch, r.mean_loss, opt(r.val_hr5), opt(r.val_mrr5))
}

pub fn epochs_tsv(log: &[EpochRecord]) -> String {
    let mut s = String::from(EPOCHS_HEADER);
    s.push('\n');
    log.iter().for_each(|r| s.push_str(&epoch_row(r)));
    s
}

/// Same columns as [`epochs_tsv`], comma separated, for plotting tools.
pub fn epochs_csv(log: &[EpochRecord]) -> String {
    epochs_tsv(log).replace('\t', ",")
}

pub fn timing_tsv(seconds: &[f64]) -> String {
    let mut s = String::from("epoch\twall_seconds\n");
    for (i, t) in seconds.iter().enumerate() {
        let _ = writeln!(s, "{}\t{t:.3}", i + 1);
    }
    s
}

/// Per test example: user key, label key, rank, reciprocal rank.
pub fn ranks_tsv(corpus: &SessionCorpus, examples: &[TrainingExample], ranks: &[usize]) -> String {
    let mut s = String::from("user\tlabel\trank\treciprocal_rank\n");
    for (e, &r) in examples.iter().zip(ranks) {
        let _ = writeln!(
            s,
            "{}\t{}\t{r}\t{}",
            corpus.users.key(e.user_id),
            corpus.items.key(e.label),
            reciprocal_from_rank(r, usize::MAX)
        );
    }
    s
}
