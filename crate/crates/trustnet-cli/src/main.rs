//! Command-line driver for the trust-gated signed-network pipeline.
//!
//! Subcommands cover the run lifecycle: `ingest` verifies and summarizes a
//! dataset, `stats` prints its triangle-ratio table, `preprocess` writes the
//! cache artifacts, `train` fits and evaluates one configuration, `eval`
//! re-scores a finished run from its stored embeddings, and `reproduce` runs
//! a dataset × seed grid with aggregate statistics.
//!
//! Every run option can come from a flat `key = value` config file
//! (`--config`); individual flags override file entries. The effective
//! configuration is echoed to stderr at startup so any run can be replayed
//! from its own log. Reports go to stdout and, with `--out`, to a file.
//! Failures exit nonzero with a category-specific code.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trustnet::cache;
use trustnet::evaluation::{evaluate, train_downstream, FeatureMode};
use trustnet::graph::split_edges;
use trustnet::logreg::LogRegConfig;
use trustnet::pipeline::{
    load_dataset, prepare, preprocess, report_row, reproduce, reproduce_table, train_eval,
    write_run_artifacts, RunConfig, Workspace, DATASETS,
};
use trustnet::triads::TriadStats;
use trustnet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "trustnet",
    about = "Trust-gated signed-network embeddings: preprocess, train, evaluate",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a dataset (checksum-verified for registry names) and summarize it.
    Ingest {
        #[command(flatten)]
        cfg: CfgOpts,
        #[command(flatten)]
        io: IoOpts,
    },
    /// Print the triangle sign-ratio table with balance labels.
    Stats {
        #[command(flatten)]
        cfg: CfgOpts,
        #[command(flatten)]
        io: IoOpts,
    },
    /// Build and cache split, ego-networks, classifier, partitions, and stats.
    Preprocess {
        #[command(flatten)]
        cfg: CfgOpts,
        #[command(flatten)]
        io: IoOpts,
    },
    /// Train embeddings, evaluate edge-sign prediction, persist artifacts.
    Train {
        #[command(flatten)]
        cfg: CfgOpts,
        #[command(flatten)]
        io: IoOpts,
    },
    /// Re-evaluate a finished run from its stored embeddings.
    Eval {
        #[command(flatten)]
        cfg: CfgOpts,
        #[command(flatten)]
        io: IoOpts,
    },
    /// Run a dataset × seed grid and print mean±std against reference values.
    Reproduce {
        /// Comma-separated dataset names (default: the full registry).
        #[arg(long)]
        datasets: Option<String>,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[command(flatten)]
        io: IoOpts,
    },
}

/// Run-configuration sources: positional dataset, config file, field flags.
/// Precedence: dataset defaults, then file entries, then flags.
#[derive(Args)]
struct CfgOpts {
    /// Dataset registry name or edge-list path (may come from --config).
    dataset: Option<String>,
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ego-network hop bound.
    #[arg(long)]
    n: Option<String>,
    /// Message-passing rounds.
    #[arg(long)]
    layers: Option<String>,
    /// Fused embedding dimension.
    #[arg(long)]
    d: Option<String>,
    /// Per-set sampling cap, or `all`.
    #[arg(long)]
    gamma: Option<String>,
    /// Trust-gate confidence threshold.
    #[arg(long)]
    beta: Option<String>,
    /// Status-loss weight.
    #[arg(long)]
    lambda: Option<String>,
    /// Train percentage of the edge split.
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// full, tgcn_only, fextra_only, uniform, reverse, mean_pool, no_sampling.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
}

#[derive(Args)]
struct IoOpts {
    /// Directory holding the edge-list files.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Root directory for caches and run artifacts.
    #[arg(long, default_value = ".trustnet")]
    workspace: PathBuf,
    /// Also write the report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CfgOpts {
    /// Flag overrides as `(key, value)` pairs, in `RunConfig` field order.
    fn flag_overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("n", &self.n),
            ("layers", &self.layers),
            ("d", &self.d),
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("lambda", &self.lambda),
            ("x", &self.x),
            ("seed", &self.seed),
            ("variant", &self.variant),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("weight_decay", &self.weight_decay),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }

    /// Resolves the effective config: dataset defaults, file, then flags.
    fn resolve(&self) -> Result<RunConfig> {
        let file_kvs = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => Vec::new(),
        };
        let dataset = self
            .dataset
            .clone()
            .or_else(|| {
                file_kvs.iter().rev().find(|(k, _)| k == "dataset").map(|(_, v)| v.clone())
            })
            .ok_or_else(|| {
                Error::InvalidArg("no dataset given (positional argument or config file)".into())
            })?;
        let mut cfg = RunConfig::for_dataset(&dataset);
        for (k, v) in &file_kvs {
            if k != "dataset" {
                cfg.apply_kv(k, v)?;
            }
        }
        for (k, v) in self.flag_overrides() {
            cfg.apply_kv(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut kvs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        kvs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(kvs)
}

/// Echoes the effective configuration to stderr so runs replay from logs.
fn echo_config(cfg: &RunConfig) {
    eprintln!("effective config:");
    for (k, v) in cfg.describe() {
        eprintln!("  {k} = {v}");
    }
}

/// Prints the report to stdout and mirrors it to `--out` when given.
fn report(io: &IoOpts, text: &str) -> Result<()> {
    println!("{text}");
    if let Some(path) = &io.out {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

fn workspace(io: &IoOpts) -> Workspace {
    let mut ws = Workspace::new(&io.workspace);
    ws.data_dir = io.data_dir.clone();
    ws
}

fn cmd_ingest(cfg: &CfgOpts, io: &IoOpts) -> Result<()> {
    let rc = cfg.resolve()?;
    let loaded = load_dataset(&rc.dataset, &io.data_dir)?;
    let g = &loaded.graph;
    let row = serde_json::json!({
        "dataset": loaded.name,
        "structure_hash": loaded.hash,
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "positive_edges": g.positive_count(),
        "negative_edges": g.edge_count() - g.positive_count(),
        "records": loaded.report.records,
        "dropped_self_loops": loaded.report.dropped_self_loops,
        "dropped_duplicates": loaded.report.dropped_duplicates,
        "rejected_zero_weight": loaded.report.rejected_zero_weight,
    });
    report(io, &serde_json::to_string_pretty(&row).expect("JSON"))
}

fn cmd_stats(cfg: &CfgOpts, io: &IoOpts) -> Result<()> {
    let rc = cfg.resolve()?;
    let loaded = load_dataset(&rc.dataset, &io.data_dir)?;
    let stats = TriadStats::compute(&loaded.graph);
    let row = serde_json::json!({
        "dataset": loaded.name,
        "triads": stats.report(),
    });
    report(io, &serde_json::to_string_pretty(&row).expect("JSON"))
}

fn cmd_preprocess(cfg: &CfgOpts, io: &IoOpts) -> Result<()> {
    let rc = cfg.resolve()?;
    echo_config(&rc);
    let ws = workspace(io);
    let rep = preprocess(&rc, &ws)?;
    let outcomes: serde_json::Map<String, serde_json::Value> = rep
        .outcomes
        .iter()
        .map(|(label, o)| (label.clone(), serde_json::json!(format!("{o:?}"))))
        .collect();
    let row = serde_json::json!({
        "dataset": rep.prepared.dataset_name,
        "artifacts": outcomes,
        "untrust_fraction": rep.prepared.untrust.fraction(),
        "notices": rep.prepared.notices,
        "config": rc.to_json(),
    });
    report(io, &serde_json::to_string_pretty(&row).expect("JSON"))
}

fn cmd_train(cfg: &CfgOpts, io: &IoOpts) -> Result<()> {
    let rc = cfg.resolve()?;
    echo_config(&rc);
    let ws = workspace(io);
    let prepared = prepare(&rc, &ws.data_dir)?;
    let out = train_eval(prepared)?;
    for (label, outcome) in write_run_artifacts(&out, &ws)? {
        eprintln!("wrote {label}: {outcome:?}");
    }
    report(io, &serde_json::to_string_pretty(&report_row(&out)).expect("JSON"))
}

fn cmd_eval(cfg: &CfgOpts, io: &IoOpts) -> Result<()> {
    let rc = cfg.resolve()?;
    echo_config(&rc);
    let ws = workspace(io);
    let loaded = load_dataset(&rc.dataset, &ws.data_dir)?;
    let path = ws.embeddings_out(&rc);
    if !path.is_file() {
        return Err(Error::InvalidArg(format!(
            "no stored embeddings at {} — run `trustnet train` first",
            path.display()
        )));
    }
    let (header, rows) = cache::load_embeddings(&path)?;
    if header.dataset_hash != loaded.hash {
        return Err(Error::Consistency(format!(
            "stored embeddings at {} were trained on a different graph",
            path.display()
        )));
    }
    if header.seed != rc.seed || header.d != rc.d {
        return Err(Error::Consistency(format!(
            "stored embeddings at {} don't match the requested config (d {}, seed {})",
            path.display(),
            rc.d,
            rc.seed
        )));
    }
    for (v, (label, _)) in rows.iter().enumerate() {
        if label != loaded.graph.label(v as u32) {
            return Err(Error::Consistency(format!(
                "embedding row {v} is labeled '{label}' but the graph has '{}'",
                loaded.graph.label(v as u32)
            )));
        }
    }
    let embeddings: Vec<Vec<f64>> = rows.into_iter().map(|(_, v)| v).collect();
    let split = split_edges(&loaded.graph, rc.x, rc.seed)?;
    let ds = train_downstream(&embeddings, &split.train, FeatureMode::Concat, &LogRegConfig::default())?;
    let metrics = evaluate(&ds, &embeddings, &split.test)?;
    let row = serde_json::json!({
        "dataset": loaded.name,
        "source": path.display().to_string(),
        "micro_f1": metrics.micro_f1,
        "macro_f1": metrics.macro_f1,
        "auc": metrics.auc,
        "config": rc.to_json(),
    });
    report(io, &serde_json::to_string_pretty(&row).expect("JSON"))
}

fn cmd_reproduce(datasets: Option<&str>, seeds: &str, io: &IoOpts) -> Result<()> {
    let names: Vec<String> = match datasets {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => DATASETS.iter().map(|s| s.name.to_string()).collect(),
    };
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| Error::InvalidArg(format!("bad seed '{s}'")))
        })
        .collect::<Result<_>>()?;
    eprintln!("grid: datasets {names:?}, seeds {seeds:?}");
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let cells = reproduce(&refs, &seeds, &io.data_dir);
    report(io, reproduce_table(&cells).trim_end())
}

/// Maps each error category to a stable exit code.
fn exit_category(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Parse { .. } => (2, "parse"),
        Error::InvalidArg(_) => (3, "invalid-arg"),
        Error::Io(_) => (4, "io"),
        Error::Consistency(_) => (5, "consistency"),
        Error::Training(_) => (6, "training"),
        Error::Evaluation(_) => (7, "evaluation"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Ingest { cfg, io } => cmd_ingest(cfg, io),
        Cmd::Stats { cfg, io } => cmd_stats(cfg, io),
        Cmd::Preprocess { cfg, io } => cmd_preprocess(cfg, io),
        Cmd::Train { cfg, io } => cmd_train(cfg, io),
        Cmd::Eval { cfg, io } => cmd_eval(cfg, io),
        Cmd::Reproduce { datasets, seeds, io } => cmd_reproduce(datasets.as_deref(), seeds, io),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = exit_category(&e);
            eprintln!("error ({category}): {e}");
            ExitCode::from(code)
        }
    }
}
