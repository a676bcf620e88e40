//! `hggnn` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use hggnn_core::ablation::{run_arm, run_itemknn, Arm};
use hggnn_core::data::segment_examples;
use hggnn_core::graph::assemble_graph;
use hggnn_core::metrics::{self, MetricReport};
use hggnn_core::synthetic::{generate, SyntheticSpec};
use hggnn_core::train;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{Config, KEYS};
use crate::error::{AppError, Result};
use crate::events::format_log;
use crate::formats;
use crate::pipeline::{load_corpus, rank_examples};

pub const GRAPH_FILE: &str = "graph.tsv";
pub const STATS_FILE: &str = "stats.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EPOCHS_FILE: &str = "epochs.tsv";
pub const EPOCHS_CSV_FILE: &str = "epochs.csv";
pub const TIMING_FILE: &str = "timing.tsv";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const RANKS_FILE: &str = "ranks.tsv";
pub const CONFIG_FILE: &str = "resolved-config.txt";
pub const EVENTS_FILE: &str = "events.tsv";

#[derive(Debug, Parser)]
#[command(
    name = "hggnn",
    about = "Personalized session-based recommendation over a heterogeneous global graph",
    after_help = "Any config key can be overridden with --<key> <value>, e.g. --train.seed 7.\nRun `hggnn keys` to list every key with its default."
)]
struct Cli {
    /// TOML config file with flat dotted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interaction log; shorthand for --data.path.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the global graph and write graph.tsv and stats.txt.
    BuildGraph(OutDir),
    /// Train a model and write checkpoint.bin and epochs.tsv.
    Train(OutDir),
    /// Score the test split with a checkpoint and write metrics.tsv.
    Eval {
        #[command(flatten)]
        out: OutDir,
        /// Defaults to <out>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Cutoff; repeat for several. Overrides eval.ks.
        #[arg(long = "k")]
        ks: Vec<usize>,
    },
    /// Print the top items for a user and a session prefix.
    Recommend {
        #[arg(long)]
        checkpoint: PathBuf,
        /// User key; unknown or absent users get the mean user embedding.
        #[arg(long)]
        user: Option<String>,
        /// Item keys, oldest first, separated by commas or spaces.
        #[arg(long, conflicts_with = "prefix_file")]
        prefix: Option<String>,
        /// File holding the item keys of the prefix.
        #[arg(long)]
        prefix_file: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Train and evaluate named ablation arms.
    Ablate {
        #[command(flatten)]
        out: OutDir,
        /// Arm name, e.g. "full" or "w/o similar edges"; repeatable.
        #[arg(long = "arm", required = true)]
        arms: Vec<String>,
        /// Also report the ItemKNN baseline.
        #[arg(long)]
        itemknn: bool,
    },
    /// Write a synthetic interaction log (events.tsv).
    Synth {
        #[command(flatten)]
        out: OutDir,
        #[arg(long, default_value_t = 40)]
        users: usize,
        #[arg(long, default_value_t = 40)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        clusters: usize,
        #[arg(long, default_value_t = 10)]
        sessions: usize,
        #[arg(long, default_value_t = 6)]
        length: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Every cluster permutes the whole item set instead of its own block.
        #[arg(long)]
        shared: bool,
    },
    /// List every config key with its default.
    Keys,
}

type Overrides = Vec<(String, String)>;

/// Pulls `--section.key value` and `--section.key=value` pairs out of the
/// arguments; everything else is left for clap.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(name) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (name.to_string(), None),
        };
        if !key.contains('.') && key != "threads" {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| AppError::usage(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn resolve(cli: &Cli, base: Option<&str>, overrides: &[(String, String)]) -> Result<Config> {
    let mut cfg = Config::default();
    match &cli.config {
        Some(path) => cfg = Config::from_file(path)?,
        None => {
            if let Some(text) = base {
                cfg.apply_toml(text)?;
            }
        }
    }
    if let Some(d) = &cli.data {
        cfg.data_path = d.clone();
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| AppError::io(path, e))
}

fn prepare_out(dir: &Path, cfg: &Config) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    write(dir, CONFIG_FILE, cfg.to_toml())
}

/// Runs the tool on `args` (without the program name) and returns the exit
/// code. Errors are reported on stderr as one line.
pub fn run<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    match try_run(args.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args().skip(1)))
}

fn try_run(args: Vec<String>) -> Result<()> {
    let (rest, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(std::iter::once(String::from("hggnn")).chain(rest)) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return Err(AppError::usage(format!("{first} (see hggnn --help)")));
        }
    };
    match &cli.command {
        Command::Keys => {
            for (k, v, doc) in KEYS {
                println!("{k}\t{v}\t{doc}");
            }
            Ok(())
        }
        Command::BuildGraph(o) => build_graph(&resolve(&cli, None, &overrides)?, &o.out),
        Command::Train(o) => train_cmd(&resolve(&cli, None, &overrides)?, &o.out),
        Command::Eval { out, checkpoint, ks } => {
            let path = checkpoint.clone().unwrap_or_else(|| out.out.join(CHECKPOINT_FILE));
            let ck = checkpoint::load(&path)?;
            let mut cfg = resolve(&cli, Some(&ck.config_text), &overrides)?;
            if !ks.is_empty() {
                cfg.set("eval.ks", &ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","))?;
            }
            eval_cmd(&cfg, &ck, &out.out)
        }
        Command::Recommend {
            checkpoint,
            user,
            prefix,
            prefix_file,
            k,
        } => {
            let ck = checkpoint::load(checkpoint)?;
            let cfg = resolve(&cli, Some(&ck.config_text), &overrides)?;
            let text = match (prefix, prefix_file) {
                (Some(p), _) => p.clone(),
                (None, Some(f)) => fs::read_to_string(f).map_err(|e| AppError::io(f, e))?,
                (None, None) => return Err(AppError::usage("recommend needs --prefix or --prefix-file")),
            };
            recommend_cmd(&cfg, &ck, user.as_deref(), &text, *k)
        }
        Command::Ablate { out, arms, itemknn } => {
            let arms = arms.iter().map(|a| Arm::parse(a)).collect::<Result<Vec<_>, _>>()?;
            ablate_cmd(&resolve(&cli, None, &overrides)?, &out.out, &arms, *itemknn)
        }
        Command::Synth {
            out,
            users,
            items,
            clusters,
            sessions,
            length,
            noise,
            seed,
            shared,
        } => {
            let spec = SyntheticSpec {
                num_users: *users,
                num_items: *items,
                num_clusters: *clusters,
                sessions_per_user: *sessions,
                session_length: *length,
                noise_rate: *noise,
                seed: *seed,
                shared_items: *shared,
            };
            synth_cmd(&spec, &out.out)
        }
    }
}

fn build_graph(cfg: &Config, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let graph = assemble_graph(&corpus, &cfg.graph)?;
    let ex = segment_examples(&corpus, cfg.segment);
    prepare_out(out, cfg)?;
    write(out, GRAPH_FILE, formats::graph_tsv(&graph, &corpus))?;
    let stats = formats::stats_text(&graph, &corpus, ex.train.len(), ex.test.len());
    write(out, STATS_FILE, &stats)?;
    print!("{stats}");
    Ok(())
}

fn train_cmd(cfg: &Config, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let graph = assemble_graph(&corpus, &cfg.graph)?;
    let ex = segment_examples(&corpus, cfg.segment);
    prepare_out(out, cfg)?;
    write(out, GRAPH_FILE, formats::graph_tsv(&graph, &corpus))?;
    write(out, STATS_FILE, formats::stats_text(&graph, &corpus, ex.train.len(), ex.test.len()))?;
    let mut seconds = Vec::new();
    let mut clock = Instant::now();
    let outcome = train::train(cfg.model, &graph, &ex.train, &cfg.train, |r| {
        seconds.push(clock.elapsed().as_secs_f64());
        clock = Instant::now();
        eprint!("epoch {} loss {:.6}", r.epoch, r.mean_loss);
        if let (Some(h), Some(m)) = (r.val_hr5, r.val_mrr5) {
            eprint!(" val HR@5 {h:.4} MRR@5 {m:.4}");
        }
        eprintln!();
    })?;
    if let Some(e) = outcome.best_epoch {
        eprintln!("kept parameters of epoch {e}");
    }
    write(out, EPOCHS_FILE, formats::epochs_tsv(&outcome.log))?;
    write(out, EPOCHS_CSV_FILE, formats::epochs_csv(&outcome.log))?;
    write(out, TIMING_FILE, formats::timing_tsv(&seconds))?;
    checkpoint::save(
        &out.join(CHECKPOINT_FILE),
        &Checkpoint {
            params: outcome.params,
            config_text: cfg.to_toml(),
        },
    )
}

fn eval_cmd(cfg: &Config, ck: &Checkpoint, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    checkpoint::check_sizes(&ck.params, corpus.num_users(), corpus.num_items())?;
    let graph = assemble_graph(&corpus, &cfg.graph)?;
    let ex = segment_examples(&corpus, cfg.segment);
    if ex.test.is_empty() {
        return Err(AppError::data("no test examples"));
    }
    let ranks = rank_examples(&ck.params, &graph, &ex.test, cfg.threads)?;
    let users: Vec<usize> = ex.test.iter().map(|e| e.user_id).collect();
    let report = MetricReport::from_ranks("model", &ranks, &users, &cfg.ks, cfg.averaging);
    prepare_out(out, cfg)?;
    write(out, METRICS_FILE, formats::metrics_tsv(std::slice::from_ref(&report)))?;
    write(out, RANKS_FILE, formats::ranks_tsv(&corpus, &ex.test, &ranks))?;
    println!("{}", formats::metrics_summary(&report));
    Ok(())
}

fn recommend_cmd(cfg: &Config, ck: &Checkpoint, user: Option<&str>, prefix_text: &str, k: usize) -> Result<()> {
    let keys: Vec<&str> = prefix_text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if keys.is_empty() {
        return Err(AppError::usage("empty prefix"));
    }
    let corpus = load_corpus(cfg)?;
    checkpoint::check_sizes(&ck.params, corpus.num_users(), corpus.num_items())?;
    let mut prefix = Vec::with_capacity(keys.len());
    for key in &keys {
        match corpus.items.get(key) {
            Some(i) => prefix.push(i),
            None => eprintln!("warning: unknown item {key:?} dropped from the prefix"),
        }
    }
    if prefix.is_empty() {
        return Err(AppError::data("no known items in the prefix"));
    }
    let uid = user.and_then(|u| {
        let id = corpus.users.get(u);
        if id.is_none() {
            eprintln!("warning: unknown user {u:?}; using the mean user embedding");
        }
        id
    });
    let graph = assemble_graph(&corpus, &cfg.graph)?;
    let scores = ck.params.score(&graph, &[hggnn_core::model::Query { user: uid, prefix: &prefix }])?;
    for (r, i) in metrics::ranking(&scores[0]).into_iter().take(k).enumerate() {
        println!("{}\t{}\t{:.6}", r + 1, corpus.items.key(i), scores[0][i]);
    }
    Ok(())
}

fn ablate_cmd(cfg: &Config, out: &Path, arms: &[Arm], itemknn: bool) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    prepare_out(out, cfg)?;
    let exp = cfg.experiment();
    let mut reports = Vec::new();
    for &arm in arms {
        eprintln!("arm {}", arm.name());
        let run = run_arm(arm, &corpus, &exp, |r| eprintln!("  epoch {} loss {:.6}", r.epoch, r.mean_loss))?;
        let st = run.graph.stats();
        eprintln!(
            "  edges: {}",
            hggnn_core::graph::EdgeType::ALL
                .map(|e| format!("{}={}", e.as_str(), st.count(e)))
                .join(" ")
        );
        println!("{}", formats::metrics_summary(&run.report));
        reports.push(run.report);
    }
    if itemknn {
        let r = run_itemknn(&corpus, &cfg.ks, cfg.averaging)?;
        println!("{}", formats::metrics_summary(&r));
        reports.push(r);
    }
    write(out, METRICS_FILE, formats::metrics_tsv(&reports))
}

fn synth_cmd(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    let data = generate(spec)?;
    fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    write(out, EVENTS_FILE, format_log(&data.events))?;
    let echo = format!(
        "users = {}\nitems = {}\nclusters = {}\nsessions = {}\nlength = {}\nnoise = {:?}\nseed = {}\nshared = {}\n",
        spec.num_users,
        spec.num_items,
        spec.num_clusters,
        spec.sessions_per_user,
        spec.session_length,
        spec.noise_rate,
        spec.seed,
        spec.shared_items
    );
    write(out, CONFIG_FILE, echo)?;
    println!("{} events written to {}", data.events.len(), out.join(EVENTS_FILE).display());
    Ok(())
}
