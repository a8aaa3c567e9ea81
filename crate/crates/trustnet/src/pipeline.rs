//! Run orchestration: named datasets, preprocessing, training, evaluation,
//! and multi-seed reproduction grids.
//!
//! A [`RunConfig`] pins everything a run depends on — dataset, hop bound,
//! dimensions, gate/sampling/loss hyperparameters, split, seed, and ablation
//! variant — so any report row can be replayed exactly. Preprocessing has
//! two tiers: the smaller datasets materialize ego-networks and trust
//! partitions (and their cache files) outright, while the largest streams
//! per-center partitions through a single pass and pre-draws every epoch's
//! samples instead of holding the partitions resident.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::cache::{
    self, EmbeddingHeader, PartitionKey, SplitKey, WriteOutcome,
};
use crate::egonet::{build_all_egonets, for_each_egonet};
use crate::evaluation::{evaluate, train_downstream, FeatureMode, MetricsReport};
use crate::fextra::{partition_egonet, train_fextra, PartitionMode, TrustPartition};
use crate::graph::{
    load_edge_list_path, split_edges, DatasetSplit, LoadReport, SignedDigraph,
};
use crate::logreg::{LogReg, LogRegConfig};
use crate::propagation::{
    sample_partition, streamed_embeddings, EpochSampler, MaterializedSampler, ModelShape,
    SampledSets,
};
use crate::training::{fit, inference_embeddings, EpochLoss, ModelParams, TrainConfig};
use crate::triads::{RatioTable, TriadStats};
use crate::{Error, Result};

// --- dataset registry -------------------------------------------------------

/// A bundled dataset: file name, content pin, and its default
/// (gamma, beta, lambda) hyperparameters.
#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub name: &'static str,
    pub file: &'static str,
    pub sha256: &'static str,
    pub gamma: u32,
    pub beta: f64,
    pub lambda: f64,
    /// Whether preprocessing materializes ego-network and partition caches.
    /// The largest dataset streams them instead (hundreds of millions of
    /// groups would not fit the memory envelope).
    pub materialize: bool,
}

pub const DATASETS: &[DatasetSpec] = &[
    DatasetSpec {
        name: "bitcoin_alpha",
        file: "bitcoin_alpha.txt",
        sha256: "96fb4dc5b552565d56d1a46d2f451305f0ccde40456f6fb5dadc37bd722ee6d4",
        gamma: 30,
        beta: 0.80,
        lambda: 1.0,
        materialize: true,
    },
    DatasetSpec {
        name: "bitcoin_otc",
        file: "bitcoin_otc.txt",
        sha256: "a3e3c99d4dbbd83e5539c42ebd95d7049288d2372f9e12903b74ecf43b631efa",
        gamma: 30,
        beta: 0.95,
        lambda: 0.80,
        materialize: true,
    },
    DatasetSpec {
        name: "slashdot",
        file: "slashdot.txt",
        sha256: "028048f4cc5acfbb822f64cb84160fb61bb8f14f7f7cfaa1f3223bb3af9ec615",
        gamma: 20,
        beta: 1.0,
        lambda: 1.0,
        materialize: true,
    },
    DatasetSpec {
        name: "epinions",
        file: "epinions.txt",
        sha256: "d0ffc5e65b59275bbfbb0a1d5d3187a31eca719ef4236375d1ee9241c32b5d88",
        gamma: 10,
        beta: 1.0,
        lambda: 1.0,
        materialize: false,
    },
];

/// Looks a dataset up by name (`bitcoin_alpha`, `alpha`, `bitcoin-otc`, ...).
pub fn dataset_spec(name: &str) -> Option<&'static DatasetSpec> {
    let clean = name.trim().to_ascii_lowercase().replace('-', "_");
    let clean = clean.strip_suffix(".txt").unwrap_or(&clean);
    DATASETS.iter().find(|d| {
        d.name == clean
            || d.name.strip_prefix("bitcoin_") == Some(clean)
            || d.file == format!("{clean}.txt")
    })
}

/// Hex SHA-256 of a file's raw bytes.
pub fn sha256_hex_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    Ok(s)
}

/// A dataset loaded into memory, with its full-graph structure hash.
#[derive(Debug)]
pub struct LoadedDataset {
    pub name: String,
    pub graph: SignedDigraph,
    pub report: LoadReport,
    pub hash: String,
}

/// Resolves `dataset` as a registry name (checksum-verified file under
/// `data_dir`) or, failing that, as a plain edge-list path.
pub fn load_dataset(dataset: &str, data_dir: &Path) -> Result<LoadedDataset> {
    let (path, name, pin) = match dataset_spec(dataset) {
        Some(spec) => (data_dir.join(spec.file), spec.name.to_string(), Some(spec.sha256)),
        None => {
            let p = PathBuf::from(dataset);
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| dataset.to_string());
            (p, stem, None)
        }
    };
    if let Some(expected) = pin {
        let actual = sha256_hex_file(&path).map_err(|e| {
            Error::InvalidArg(format!("dataset '{name}' not readable at {}: {e}", path.display()))
        })?;
        if actual != expected {
            return Err(Error::Consistency(format!(
                "dataset '{name}' checksum mismatch: {actual} != {expected}"
            )));
        }
    }
    let (graph, report) = load_edge_list_path(&path)?;
    let hash = graph.structure_hash();
    Ok(LoadedDataset { name, graph, report, hash })
}

// --- run configuration ------------------------------------------------------

/// Which mechanism, if any, a run ablates.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Trust-gated dual propagation with learned attention and sampling.
    Full,
    /// Every indirect neighbor trusted with its inferred sign (untrusted
    /// branch never fires).
    TgcnOnly,
    /// Routing by the sign classifier's prediction alone (no gate).
    FextraOnly,
    /// Untrusted ratios replaced by the uninformative 0.5 table.
    Uniform,
    /// Untrusted ratios flipped against the measured triangle statistics.
    Reverse,
    /// Attention frozen at 1 (plain mean pooling).
    MeanPool,
    /// No neighborhood sampling cap.
    NoSampling,
}

pub const VARIANTS: [Variant; 7] = [
    Variant::Full,
    Variant::TgcnOnly,
    Variant::FextraOnly,
    Variant::Uniform,
    Variant::Reverse,
    Variant::MeanPool,
    Variant::NoSampling,
];

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::TgcnOnly => "tgcn_only",
            Variant::FextraOnly => "fextra_only",
            Variant::Uniform => "uniform",
            Variant::Reverse => "reverse",
            Variant::MeanPool => "mean_pool",
            Variant::NoSampling => "no_sampling",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        VARIANTS.iter().copied().find(|v| v.name() == s)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything one run depends on. Two runs with equal configs produce
/// identical caches, checkpoints, and metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Registry name or edge-list path.
    pub dataset: String,
    /// Ego-network hop bound.
    pub n: u8,
    /// Message-passing rounds.
    pub layers: usize,
    /// Fused embedding dimension (split evenly across polarities).
    pub d: usize,
    /// Per-set sampling cap; `None` keeps every neighbor.
    pub gamma: Option<u32>,
    /// Trust-gate confidence threshold.
    pub beta: f64,
    /// Status-loss weight.
    pub lambda: f64,
    /// Train percentage of the edge split.
    pub x: u8,
    pub seed: u64,
    pub variant: Variant,
    pub epochs: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl RunConfig {
    /// Defaults for a dataset: registry hyperparameters when the name is
    /// known, generic defaults otherwise.
    pub fn for_dataset(dataset: &str) -> RunConfig {
        let (gamma, beta, lambda) = match dataset_spec(dataset) {
            Some(s) => (Some(s.gamma), s.beta, s.lambda),
            None => (Some(30), 0.80, 1.0),
        };
        RunConfig {
            dataset: dataset_spec(dataset)
                .map(|s| s.name.to_string())
                .unwrap_or_else(|| dataset.to_string()),
            n: 3,
            layers: 1,
            d: 64,
            gamma,
            beta,
            lambda,
            x: 80,
            seed: 0,
            variant: Variant::Full,
            epochs: 100,
            learning_rate: 5e-3,
            weight_decay: 1e-5,
        }
    }

    /// Applies one flat `key = value` override (config file or CLI flag).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidArg(format!("bad value '{value}' for {what}"));
        match key {
            "dataset" => self.dataset = value.to_string(),
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "layers" | "h" => self.layers = value.parse().map_err(|_| bad("layers"))?,
            "d" => self.d = value.parse().map_err(|_| bad("d"))?,
            "gamma" => {
                self.gamma = if value == "all" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("gamma"))?)
                }
            }
            "beta" => self.beta = value.parse().map_err(|_| bad("beta"))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad("lambda"))?,
            "x" => self.x = value.parse().map_err(|_| bad("x"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "variant" => {
                self.variant =
                    Variant::parse(value).ok_or_else(|| bad("variant (full, tgcn_only, fextra_only, uniform, reverse, mean_pool, no_sampling)"))?
            }
            "epochs" => self.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "learning_rate" | "lr" => {
                self.learning_rate = value.parse().map_err(|_| bad("learning_rate"))?
            }
            "weight_decay" => {
                self.weight_decay = value.parse().map_err(|_| bad("weight_decay"))?
            }
            other => return Err(Error::InvalidArg(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// The flat key/value view used for startup echoes and report rows.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", self.dataset.clone()),
            ("n", self.n.to_string()),
            ("layers", self.layers.to_string()),
            ("d", self.d.to_string()),
            ("gamma", self.gamma.map_or("all".into(), |g| g.to_string())),
            ("beta", format!("{:?}", self.beta)),
            ("lambda", format!("{:?}", self.lambda)),
            ("x", self.x.to_string()),
            ("seed", self.seed.to_string()),
            ("variant", self.variant.name().to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
        ]
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<_, _> = self
            .describe()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        serde_json::Value::Object(map.into_iter().collect())
    }

    /// How this config's variant routes indirect ego-edges.
    pub fn partition_mode(&self) -> PartitionMode {
        match self.variant {
            Variant::TgcnOnly => PartitionMode::AllTrustedActual,
            Variant::FextraOnly => PartitionMode::AllTrustedPredicted,
            _ => PartitionMode::Standard,
        }
    }

    /// Sampling cap after the variant override.
    pub fn effective_gamma(&self) -> Option<u32> {
        if self.variant == Variant::NoSampling {
            None
        } else {
            self.gamma
        }
    }

    /// Whether preprocessing must train the sign classifier for the gate.
    pub fn needs_classifier(&self) -> bool {
        match self.partition_mode() {
            PartitionMode::Standard => self.beta < 1.0,
            PartitionMode::AllTrustedActual => false,
            PartitionMode::AllTrustedPredicted => true,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda_status: self.lambda,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            seed: self.seed,
            learn_attention: self.variant != Variant::MeanPool,
            learn_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::InvalidArg(format!(
                "embedding dimension {} must be positive and even",
                self.d
            )));
        }
        if self.layers == 0 {
            return Err(Error::InvalidArg("layers must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArg(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArg(format!("lambda {} negative", self.lambda)));
        }
        Ok(())
    }
}

// --- pre-drawn sampling plan -------------------------------------------------

/// Sampler whose draws were all taken up front, one slot per epoch index.
///
/// Draw keys are (seed, center, epoch, set) — identical to
/// [`MaterializedSampler`] — so for the same partitions, cap, and seed the
/// two backends produce bit-identical samples. Pre-drawing lets the huge
/// datasets discard each partition right after its draws are taken.
pub struct PlannedSampler {
    epochs: Vec<Vec<SampledSets>>,
    node_count: usize,
}

impl PlannedSampler {
    /// Plans epochs `0..=last_epoch` from a partition stream. The callback
    /// must yield every center exactly once in ascending order.
    pub fn plan<I: IntoIterator<Item = TrustPartition>>(
        parts: I,
        node_count: usize,
        gamma: Option<u32>,
        seed: u64,
        last_epoch: u64,
    ) -> Result<PlannedSampler> {
        let slots = (last_epoch + 1) as usize;
        let mut epochs: Vec<Vec<SampledSets>> =
            (0..slots).map(|_| Vec::with_capacity(node_count)).collect();
        let mut expected: u32 = 0;
        for part in parts {
            if part.center != expected {
                return Err(Error::Consistency(format!(
                    "partition stream yielded center {}, expected {expected}",
                    part.center
                )));
            }
            expected += 1;
            for (e, slot) in epochs.iter_mut().enumerate() {
                slot.push(sample_partition(&part, gamma, seed, e as u64));
            }
        }
        if expected as usize != node_count {
            return Err(Error::Consistency(format!(
                "partition stream yielded {expected} centers, expected {node_count}"
            )));
        }
        Ok(PlannedSampler { epochs, node_count })
    }

    pub fn planned_epochs(&self) -> usize {
        self.epochs.len()
    }
}

impl EpochSampler for PlannedSampler {
    fn node_count(&self) -> usize {
        self.node_count
    }

    fn sample_epoch(&mut self, epoch: u64) -> Result<&[SampledSets]> {
        self.epochs
            .get(epoch as usize)
            .map(|v| v.as_slice())
            .ok_or_else(|| {
                Error::Consistency(format!(
                    "epoch {epoch} outside the planned range 0..{}",
                    self.epochs.len()
                ))
            })
    }
}

/// Either sampling backend, picked by dataset tier.
pub enum SamplerKind {
    Materialized(MaterializedSampler),
    Planned(PlannedSampler),
}

impl SamplerKind {
    pub fn as_dyn(&mut self) -> &mut dyn EpochSampler {
        match self {
            SamplerKind::Materialized(s) => s,
            SamplerKind::Planned(s) => s,
        }
    }
}

// --- preprocessing -----------------------------------------------------------

/// Indirect ego-edge trust tallies (path multiplicity counted).
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct UntrustStats {
    pub indirect_total: u64,
    pub indirect_untrusted: u64,
}

impl UntrustStats {
    pub fn fraction(&self) -> f64 {
        if self.indirect_total == 0 {
            0.0
        } else {
            self.indirect_untrusted as f64 / self.indirect_total as f64
        }
    }
}

/// Everything training needs, resident in memory.
pub struct Prepared {
    pub cfg: RunConfig,
    pub dataset_name: String,
    pub dataset_hash: String,
    pub graph: SignedDigraph,
    pub split: DatasetSplit,
    pub train_graph: SignedDigraph,
    pub train_stats: TriadStats,
    pub ratios: RatioTable,
    pub classifier: Option<LogReg<f64>>,
    pub untrust: UntrustStats,
    pub sampler: SamplerKind,
    /// Human-readable notes (cache rebuilds, tier selection).
    pub notices: Vec<String>,
}

fn ratios_for(cfg: &RunConfig, stats: &TriadStats) -> RatioTable {
    match cfg.variant {
        Variant::Uniform => RatioTable::uniform(),
        Variant::Reverse => RatioTable::from_stats(stats).reversed(),
        _ => RatioTable::from_stats(stats),
    }
}

fn accumulate_untrust(stats: &mut UntrustStats, part: &TrustPartition) {
    let (total, untrusted) = part.indirect_stats();
    stats.indirect_total += total;
    stats.indirect_untrusted += untrusted;
}

/// Loads, splits, gates, and partitions a dataset; picks the sampling
/// backend by tier. Pure computation — cache files are read or written only
/// through [`preprocess`].
pub fn prepare(cfg: &RunConfig, data_dir: &Path) -> Result<Prepared> {
    cfg.validate()?;
    let loaded = load_dataset(&cfg.dataset, data_dir)?;
    let split = split_edges(&loaded.graph, cfg.x, cfg.seed)?;
    let train_graph = loaded.graph.with_edges(&split.train);
    prepare_from(cfg, loaded, split, train_graph)
}

/// Training settings for the gate's sign classifier.
///
/// Sign distributions in these networks are heavily skewed (roughly nine in
/// ten edges positive). An unweighted fit then rarely reports a confidence
/// below the base rate, so nearly every inferred sign clears a threshold like
/// 0.80 and the untrusted propagation branch starves. Inverse-frequency class
/// weighting restores an informative confidence spread — the gate's threshold
/// regains an operating range, and the untrusted share of indirect edges
/// lands where large signed networks actually put it (well above 45%) —
/// at the cost of a few points of raw held-out accuracy.
pub fn gate_classifier_config() -> LogRegConfig {
    LogRegConfig { balanced: true, ..LogRegConfig::default() }
}

fn prepare_from(
    cfg: &RunConfig,
    loaded: LoadedDataset,
    split: DatasetSplit,
    train_graph: SignedDigraph,
) -> Result<Prepared> {
    let train_stats = TriadStats::compute(&train_graph);
    let ratios = ratios_for(cfg, &train_stats);
    let fa = train_graph.flag_adj();
    let classifier = if cfg.needs_classifier() {
        Some(train_fextra(&fa, &split.train, &gate_classifier_config())?)
    } else {
        None
    };
    let mode = cfg.partition_mode();
    let gamma = cfg.effective_gamma();
    let mut untrust = UntrustStats::default();
    let mut notices = Vec::new();
    let materialize = dataset_spec(&cfg.dataset).map_or(true, |s| s.materialize);

    let sampler = if materialize {
        let egonets = build_all_egonets(&train_graph, cfg.n)?;
        let partitions = egonets
            .iter()
            .map(|ego| partition_egonet(ego, classifier.as_ref(), &fa, cfg.beta, mode))
            .collect::<Result<Vec<_>>>()?;
        for p in &partitions {
            accumulate_untrust(&mut untrust, p);
        }
        SamplerKind::Materialized(MaterializedSampler::new(partitions, gamma, cfg.seed)?)
    } else {
        notices.push(format!(
            "dataset '{}' uses the streaming tier: partitions are planned per center, not materialized",
            loaded.name
        ));
        // One pass: partition each center, take every epoch's draws, tally
        // trust, and drop the partition. Epoch `epochs` is the inference pass.
        let mut partition_err = None;
        let mut epochs: Vec<Vec<SampledSets>> = (0..=cfg.epochs as u64)
            .map(|_| Vec::with_capacity(train_graph.node_count()))
            .collect();
        for_each_egonet(&train_graph, cfg.n, |ego| {
            if partition_err.is_some() {
                return;
            }
            match partition_egonet(&ego, classifier.as_ref(), &fa, cfg.beta, mode) {
                Ok(part) => {
                    accumulate_untrust(&mut untrust, &part);
                    for (e, slot) in epochs.iter_mut().enumerate() {
                        slot.push(sample_partition(&part, gamma, cfg.seed, e as u64));
                    }
                }
                Err(e) => partition_err = Some(e),
            }
        })?;
        if let Some(e) = partition_err.take() {
            return Err(e);
        }
        SamplerKind::Planned(PlannedSampler {
            epochs,
            node_count: train_graph.node_count(),
        })
    };

    Ok(Prepared {
        cfg: cfg.clone(),
        dataset_name: loaded.name,
        dataset_hash: loaded.hash,
        graph: loaded.graph,
        split,
        train_graph,
        train_stats,
        ratios,
        classifier,
        untrust,
        sampler,
        notices,
    })
}

// --- cache-backed preprocessing ------------------------------------------------

/// Directory layout for a run's artifacts.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Workspace {
        Workspace {
            data_dir: root.join("data"),
            cache_dir: root.join("cache"),
            out_dir: root.join("out"),
        }
    }

    /// Cache directory for one (dataset, split, hop bound) preprocess key.
    pub fn split_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.cache_dir
            .join(sanitize_name(&cfg.dataset))
            .join(format!("x{}-seed{}-n{}", cfg.x, cfg.seed, cfg.n))
    }

    pub fn egonet_cache(&self, cfg: &RunConfig) -> PathBuf {
        self.split_dir(cfg).join("egonets.txt")
    }

    pub fn classifier_cache(&self, cfg: &RunConfig) -> PathBuf {
        self.split_dir(cfg).join("sign_classifier.txt")
    }

    pub fn partition_cache(&self, cfg: &RunConfig) -> PathBuf {
        self.split_dir(cfg).join(format!(
            "partitions-{}-beta{}.txt",
            cache::mode_name(cfg.partition_mode()),
            cfg.beta
        ))
    }

    pub fn triad_cache(&self, cfg: &RunConfig) -> PathBuf {
        self.split_dir(cfg).join("triads.json")
    }

    pub fn stats_cache(&self, cfg: &RunConfig) -> PathBuf {
        self.split_dir(cfg).join(format!(
            "untrust-{}-beta{}.txt",
            cache::mode_name(cfg.partition_mode()),
            cfg.beta
        ))
    }

    fn run_stem(&self, cfg: &RunConfig) -> String {
        format!(
            "{}-{}-x{}-seed{}",
            sanitize_name(&cfg.dataset),
            cfg.variant.name(),
            cfg.x,
            cfg.seed
        )
    }

    pub fn embeddings_out(&self, cfg: &RunConfig) -> PathBuf {
        self.out_dir.join(format!("{}-embeddings.txt", self.run_stem(cfg)))
    }

    pub fn checkpoint_out(&self, cfg: &RunConfig) -> PathBuf {
        self.out_dir.join(format!("{}-checkpoint.txt", self.run_stem(cfg)))
    }

    pub fn losses_out(&self, cfg: &RunConfig) -> PathBuf {
        self.out_dir.join(format!("{}-losses.csv", self.run_stem(cfg)))
    }
}

/// Filesystem-safe name for paths that may contain separators.
fn sanitize_name(name: &str) -> String {
    name.chars().map(|c| if c == '/' || c == '\\' || c == ':' { '_' } else { c }).collect()
}

fn split_key(cfg: &RunConfig, prepared_hash: &str, nodes: u32) -> SplitKey {
    SplitKey {
        graph_hash: prepared_hash.to_string(),
        nodes,
        seed: cfg.seed,
        x: cfg.x,
        n: cfg.n,
    }
}

/// Untrust-tally artifact body.
fn untrust_content(key: &PartitionKey, untrust: &UntrustStats) -> String {
    let records = format!(
        "indirect_total {}\nindirect_untrusted {}\nuntrust_fraction {:?}\n",
        untrust.indirect_total,
        untrust.indirect_untrusted,
        untrust.fraction()
    );
    let mut out = String::from("# trustnet untrust-stats v1\n");
    for (k, v) in [
        ("graph", key.split.graph_hash.clone()),
        ("nodes", key.split.nodes.to_string()),
        ("seed", key.split.seed.to_string()),
        ("x", key.split.x.to_string()),
        ("n", key.split.n.to_string()),
        ("beta", format!("{:?}", key.beta)),
        ("mode", cache::mode_name(key.mode).to_string()),
    ] {
        out.push_str(&format!("{k}: {v}\n"));
    }
    out.push('\n');
    out.push_str(&records);
    out
}

/// Result of a cache-writing preprocess pass.
pub struct PreprocessReport {
    pub prepared: Prepared,
    /// (artifact label, what the write did) for every file touched.
    pub outcomes: Vec<(String, WriteOutcome)>,
}

/// Prepares a run and writes its cache files. Materializing datasets write
/// ego-network and partition caches plus the compact artifacts; the
/// streaming tier writes compact artifacts only. Re-running with the same
/// config leaves every file byte-identical.
pub fn preprocess(cfg: &RunConfig, ws: &Workspace) -> Result<PreprocessReport> {
    cfg.validate()?;
    let loaded = load_dataset(&cfg.dataset, &ws.data_dir)?;
    let split = split_edges(&loaded.graph, cfg.x, cfg.seed)?;
    let train_graph = loaded.graph.with_edges(&split.train);
    let key = split_key(cfg, &train_graph.structure_hash(), train_graph.node_count() as u32);
    let materialize = dataset_spec(&cfg.dataset).map_or(true, |s| s.materialize);

    let mut outcomes = Vec::new();

    // The classifier cache is written whenever preprocessing runs, even for
    // configurations whose gate never consults it, so later runs with a
    // lower beta start from the same artifact.
    let fa = train_graph.flag_adj();
    let classifier_all = train_fextra(&fa, &split.train, &gate_classifier_config())?;
    outcomes.push((
        "sign_classifier".to_string(),
        cache::write_sign_classifier(&ws.classifier_cache(cfg), &key, &classifier_all)?,
    ));

    let mut prepared = prepare_from(cfg, loaded, split, train_graph)?;

    outcomes.push((
        "triad_stats".to_string(),
        cache::write_triad_report(&ws.triad_cache(cfg), &prepared.train_stats.report())?,
    ));

    let pkey = PartitionKey { split: key.clone(), beta: cfg.beta, mode: cfg.partition_mode() };
    outcomes.push((
        "untrust_stats".to_string(),
        cache::write_if_changed(&ws.stats_cache(cfg), &untrust_content(&pkey, &prepared.untrust))?,
    ));

    if materialize {
        let egonets = build_all_egonets(&prepared.train_graph, cfg.n)?;
        outcomes.push((
            "egonets".to_string(),
            cache::write_egonet_cache(&ws.egonet_cache(cfg), &key, &egonets)?,
        ));
        let gate_model = if cfg.needs_classifier() { Some(&classifier_all) } else { None };
        let train_fa = prepared.train_graph.flag_adj();
        let parts: Vec<TrustPartition> = egonets
            .iter()
            .map(|ego| {
                partition_egonet(ego, gate_model, &train_fa, cfg.beta, cfg.partition_mode())
            })
            .collect::<Result<_>>()?;
        outcomes.push((
            "partitions".to_string(),
            cache::write_partition_cache(&ws.partition_cache(cfg), &pkey, &parts)?,
        ));
    } else {
        prepared.notices.push(
            "streaming tier: ego-network and partition caches not materialized".to_string(),
        );
    }

    Ok(PreprocessReport { prepared, outcomes })
}

// --- training + evaluation ------------------------------------------------------

/// One completed run: losses, metrics, and the artifacts to persist.
#[derive(Debug)]
pub struct RunOutput {
    pub cfg: RunConfig,
    pub dataset_name: String,
    pub dataset_hash: String,
    pub losses: Vec<EpochLoss>,
    pub metrics: MetricsReport,
    pub wall_time_s: f64,
    pub params: ModelParams<f64>,
    pub embeddings: Vec<Vec<f64>>,
    /// Original node labels, indexed like `embeddings`.
    pub labels: Vec<String>,
    pub untrust: UntrustStats,
    pub notices: Vec<String>,
}

/// Trains on the prepared run and evaluates edge-sign prediction on the
/// held-out split. Consumes the preparation (the sampler is stateful).
pub fn train_eval(prepared: Prepared) -> Result<RunOutput> {
    let t0 = Instant::now();
    let Prepared {
        cfg,
        dataset_name,
        dataset_hash,
        graph,
        split,
        train_graph,
        ratios,
        untrust,
        sampler,
        notices,
        ..
    } = prepared;
    let mut sampler = sampler;
    let shape = ModelShape {
        node_count: train_graph.node_count(),
        d_half: cfg.d / 2,
        layers: cfg.layers,
        hop_bound: cfg.n,
    };
    let tc = cfg.train_config();
    let mut params: ModelParams<f64> = ModelParams::new(shape, cfg.seed);
    let losses = fit(&mut params, sampler.as_dyn(), &ratios, &split.train, &tc)?;
    // The final forward pass reads the whole neighborhood where the backend
    // holds it in memory: per-epoch subsampling is a training regularizer,
    // and embeddings read out without it rank held-out edges measurably
    // better. The uncapped pass runs in value space, center by center —
    // materializing it through the sampler would put tens of millions of
    // terms on a tape just to read their values. The streaming backend only
    // ever holds the pre-drawn sets, so it reads out through its final
    // planned slot instead.
    let embeddings = match sampler {
        SamplerKind::Materialized(m) => streamed_embeddings(
            &params.store,
            &params.blocks,
            &params.shape,
            m.partitions(),
            None,
            &ratios,
            cfg.seed,
            cfg.epochs as u64,
        )?,
        SamplerKind::Planned(mut p) => {
            inference_embeddings(&params, &mut p, &ratios, cfg.epochs as u64)?
        }
    };
    let downstream =
        train_downstream(&embeddings, &split.train, FeatureMode::Concat, &LogRegConfig::default())?;
    let metrics = evaluate(&downstream, &embeddings, &split.test)?;
    let labels =
        (0..graph.node_count() as u32).map(|v| graph.label(v).to_string()).collect();
    Ok(RunOutput {
        cfg,
        dataset_name,
        dataset_hash,
        losses,
        metrics,
        wall_time_s: t0.elapsed().as_secs_f64(),
        params,
        embeddings,
        labels,
        untrust,
        notices,
    })
}

/// One report row: headline metrics plus the complete config that produced
/// them.
pub fn report_row(out: &RunOutput) -> serde_json::Value {
    serde_json::json!({
        "dataset": out.dataset_name,
        "x": out.cfg.x,
        "seed": out.cfg.seed,
        "variant": out.cfg.variant.name(),
        "micro_f1": out.metrics.micro_f1,
        "macro_f1": out.metrics.macro_f1,
        "auc": out.metrics.auc,
        "wall_time_s": out.wall_time_s,
        "final_loss": out.losses.last().map(|l| l.total),
        "untrust_fraction": out.untrust.fraction(),
        "config": out.cfg.to_json(),
    })
}

/// Persists a finished run's artifacts (embeddings, checkpoint, loss trace).
pub fn write_run_artifacts(out: &RunOutput, ws: &Workspace) -> Result<Vec<(String, WriteOutcome)>> {
    let header = EmbeddingHeader {
        d: out.cfg.d,
        h: out.cfg.layers,
        n: out.cfg.n,
        gamma: out.cfg.effective_gamma(),
        beta: out.cfg.beta,
        lambda: out.cfg.lambda,
        seed: out.cfg.seed,
        dataset_hash: out.dataset_hash.clone(),
    };
    let labels: Vec<&str> = out.labels.iter().map(|s| s.as_str()).collect();
    let results = vec![
        (
            "embeddings".to_string(),
            cache::write_embeddings(&ws.embeddings_out(&out.cfg), &header, &labels, &out.embeddings)?,
        ),
        (
            "checkpoint".to_string(),
            cache::write_checkpoint(&ws.checkpoint_out(&out.cfg), &out.params, &out.cfg.train_config())?,
        ),
        ("losses".to_string(), cache::write_loss_csv(&ws.losses_out(&out.cfg), &out.losses)?),
    ];
    Ok(results)
}

// --- reproduction grid -------------------------------------------------------------

/// Published reference metrics this implementation reproduces (x = 80).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ReferenceTargets {
    pub auc: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// Reference values for the datasets whose targets are pinned.
pub fn reference_targets(dataset: &str) -> Option<ReferenceTargets> {
    match dataset_spec(dataset)?.name {
        "bitcoin_alpha" => Some(ReferenceTargets { auc: 0.867, micro_f1: 0.921, macro_f1: 0.721 }),
        "epinions" => Some(ReferenceTargets { auc: 0.966, micro_f1: 0.920, macro_f1: 0.902 }),
        _ => None,
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// One dataset's aggregate over the seed list.
pub struct CellSummary {
    pub dataset: String,
    pub rows: Vec<serde_json::Value>,
    pub auc: (f64, f64),
    pub micro_f1: (f64, f64),
    pub macro_f1: (f64, f64),
    pub targets: Option<ReferenceTargets>,
    /// (seed, error) for runs that failed; the grid continues past them.
    pub failures: Vec<(u64, String)>,
}

/// Runs the full grid: every dataset at its defaults across the seeds.
/// Failures are reported per cell and never abort the grid.
pub fn reproduce(datasets: &[&str], seeds: &[u64], data_dir: &Path) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &ds in datasets {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let (mut aucs, mut micros, mut macros) = (Vec::new(), Vec::new(), Vec::new());
        for &seed in seeds {
            let mut cfg = RunConfig::for_dataset(ds);
            cfg.seed = seed;
            let result = prepare(&cfg, data_dir).and_then(train_eval);
            match result {
                Ok(out) => {
                    aucs.push(out.metrics.auc);
                    micros.push(out.metrics.micro_f1);
                    macros.push(out.metrics.macro_f1);
                    rows.push(report_row(&out));
                }
                Err(e) => failures.push((seed, e.to_string())),
            }
        }
        cells.push(CellSummary {
            dataset: ds.to_string(),
            rows,
            auc: mean_std(&aucs),
            micro_f1: mean_std(&micros),
            macro_f1: mean_std(&macros),
            targets: reference_targets(ds),
            failures,
        });
    }
    cells
}

/// Renders the grid as a fixed-width text table with reference columns.
pub fn reproduce_table(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>16} {:>16} {:>16} {:>8} {:>8} {:>8}",
        "dataset", "seeds", "auc", "micro_f1", "macro_f1", "ref_auc", "ref_mic", "ref_mac"
    );
    for c in cells {
        let fmt_pair = |(m, s): (f64, f64)| {
            if m.is_nan() {
                "-".to_string()
            } else {
                format!("{m:.3}±{s:.3}")
            }
        };
        let fmt_ref = |v: Option<f64>| v.map_or("-".to_string(), |t| format!("{t:.3}"));
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>16} {:>16} {:>16} {:>8} {:>8} {:>8}",
            c.dataset,
            c.rows.len(),
            fmt_pair(c.auc),
            fmt_pair(c.micro_f1),
            fmt_pair(c.macro_f1),
            fmt_ref(c.targets.map(|t| t.auc)),
            fmt_ref(c.targets.map(|t| t.micro_f1)),
            fmt_ref(c.targets.map(|t| t.macro_f1)),
        );
        for (seed, err) in &c.failures {
            let _ = writeln!(out, "  seed {seed} failed: {err}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    #[test]
    fn registry_defaults_match_published_table() {
        let expected: [(&str, u32, f64, f64); 4] = [
            ("bitcoin_alpha", 30, 0.80, 1.0),
            ("bitcoin_otc", 30, 0.95, 0.80),
            ("slashdot", 20, 1.0, 1.0),
            ("epinions", 10, 1.0, 1.0),
        ];
        for (name, gamma, beta, lambda) in expected {
            let cfg = RunConfig::for_dataset(name);
            assert_eq!(cfg.gamma, Some(gamma), "{name}");
            assert_eq!(cfg.beta, beta, "{name}");
            assert_eq!(cfg.lambda, lambda, "{name}");
            assert_eq!((cfg.n, cfg.layers, cfg.d, cfg.x), (3, 1, 64, 80), "{name}");
        }
    }

    #[test]
    fn dataset_aliases_resolve() {
        for alias in ["alpha", "bitcoin-alpha", "bitcoin_alpha", "BITCOIN_ALPHA", "bitcoin_alpha.txt"] {
            assert_eq!(dataset_spec(alias).unwrap().name, "bitcoin_alpha", "{alias}");
        }
        assert_eq!(dataset_spec("otc").unwrap().name, "bitcoin_otc");
        assert!(dataset_spec("unknown").is_none());
    }

    #[test]
    fn config_overrides_apply_and_reject_unknown_keys() {
        let mut cfg = RunConfig::for_dataset("bitcoin_alpha");
        cfg.apply_kv("gamma", "all").unwrap();
        assert_eq!(cfg.gamma, None);
        cfg.apply_kv("gamma", "12").unwrap();
        assert_eq!(cfg.gamma, Some(12));
        cfg.apply_kv("variant", "mean_pool").unwrap();
        assert_eq!(cfg.variant, Variant::MeanPool);
        cfg.apply_kv("lr", "0.01").unwrap();
        assert_eq!(cfg.learning_rate, 0.01);
        assert!(cfg.apply_kv("nope", "1").is_err());
        assert!(cfg.apply_kv("variant", "bogus").is_err());
    }

    #[test]
    fn variant_mapping_is_exact() {
        let base = RunConfig::for_dataset("bitcoin_alpha");
        let with = |v: Variant| RunConfig { variant: v, ..base.clone() };
        assert_eq!(with(Variant::Full).partition_mode(), PartitionMode::Standard);
        assert_eq!(with(Variant::TgcnOnly).partition_mode(), PartitionMode::AllTrustedActual);
        assert_eq!(
            with(Variant::FextraOnly).partition_mode(),
            PartitionMode::AllTrustedPredicted
        );
        assert_eq!(with(Variant::NoSampling).effective_gamma(), None);
        assert_eq!(with(Variant::Full).effective_gamma(), Some(30));
        assert!(!with(Variant::MeanPool).train_config().learn_attention);
        assert!(with(Variant::Full).train_config().learn_attention);
        // the ablations touch nothing else
        for v in VARIANTS {
            let tc = with(v).train_config();
            assert_eq!(tc.epochs, 100);
            assert_eq!(tc.lambda_status, 1.0);
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in VARIANTS {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
    }

    /// Both sampler backends must draw bit-identical samples for the same
    /// partitions, cap, and seed.
    #[test]
    fn planned_sampler_matches_materialized() {
        let mut rng = crate::rng::stream(77, &[0x51]);
        let nodes = 40u32;
        let mut seen = std::collections::BTreeSet::new();
        let mut edges = Vec::new();
        for _ in 0..120 {
            let s = crate::rng::uniform_below(&mut rng, nodes as u64) as u32;
            let d = crate::rng::uniform_below(&mut rng, nodes as u64) as u32;
            if s != d && seen.insert((s, d)) {
                let sign = if crate::rng::unit_f64(&mut rng) < 0.7 { 1 } else { -1 };
                edges.push((s, d, sign as i8));
            }
        }
        let g = SignedDigraph::from_edges(nodes, &edges).unwrap();
        let fa = g.flag_adj();
        let parts: Vec<TrustPartition> = build_all_egonets(&g, 3)
            .unwrap()
            .iter()
            .map(|e| partition_egonet(e, None, &fa, 1.0, PartitionMode::Standard).unwrap())
            .collect();
        for gamma in [Some(3u32), Some(100), None] {
            let mut planned = PlannedSampler::plan(
                parts.iter().cloned(),
                nodes as usize,
                gamma,
                9,
                6,
            )
            .unwrap();
            let mut mat = MaterializedSampler::new(parts.clone(), gamma, 9).unwrap();
            for epoch in [0u64, 3, 6] {
                let a = planned.sample_epoch(epoch).unwrap().to_vec();
                let b = mat.sample_epoch(epoch).unwrap();
                assert_eq!(a, b, "gamma {gamma:?} epoch {epoch}");
            }
            assert!(planned.sample_epoch(7).is_err(), "epoch beyond plan must fail");
        }
    }

    #[test]
    fn planned_sampler_rejects_center_gaps() {
        let parts = vec![TrustPartition { center: 1, ..Default::default() }];
        assert!(PlannedSampler::plan(parts, 1, None, 0, 0).is_err());
        let parts = vec![TrustPartition { center: 0, ..Default::default() }];
        assert!(PlannedSampler::plan(parts, 2, None, 0, 0).is_err());
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[2.0, 4.0, 6.0]);
        assert_eq!(m, 4.0);
        assert!((s - 2.0).abs() < 1e-12);
        let (m1, s1) = mean_std(&[5.0]);
        assert_eq!((m1, s1), (5.0, 0.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn checksum_gate_rejects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir_all(&data).unwrap();
        std::fs::write(data.join("bitcoin_alpha.txt"), "1 2 1\n").unwrap();
        let err = load_dataset("bitcoin_alpha", &data).unwrap_err().to_string();
        assert!(err.contains("checksum"), "got: {err}");
        // unpinned paths load without a checksum
        let free = data.join("custom.txt");
        std::fs::write(&free, "1 2 1\n2 3 -1\n").unwrap();
        let loaded = load_dataset(free.to_str().unwrap(), &data).unwrap();
        assert_eq!(loaded.graph.edge_count(), 2);
        assert_eq!(loaded.name, "custom");
    }

    /// End-to-end on a synthetic graph: train, evaluate, persist, reload.
    #[test]
    fn small_graph_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        std::fs::create_dir_all(&ws.data_dir).unwrap();
        // Two camps: positive within, negative across. Enumerate ordered pairs
        // and keep a pseudorandom third of them so no pair repeats and the
        // graph stays dense enough for the camp structure to be recoverable
        // from an 80% split.
        let mut rng = crate::rng::stream(5, &[0xE2]);
        let mut lines = String::new();
        for s in 0..28u32 {
            for d in 0..28u32 {
                if s == d || crate::rng::uniform_below(&mut rng, 3) != 0 {
                    continue;
                }
                let same = (s < 14) == (d < 14);
                let _ = writeln!(lines, "{s} {d} {}", if same { 1 } else { -1 });
            }
        }
        let path = ws.data_dir.join("camps.txt");
        std::fs::write(&path, lines).unwrap();

        let mut cfg = RunConfig::for_dataset(path.to_str().unwrap());
        cfg.d = 16;
        cfg.epochs = 60;
        cfg.gamma = Some(10);
        cfg.beta = 1.0;
        let prepared = prepare(&cfg, &ws.data_dir).unwrap();
        assert!(matches!(prepared.sampler, SamplerKind::Materialized(_)));
        let out = train_eval(prepared).unwrap();
        assert!(out.losses.len() == 60);
        assert!(out.losses.iter().all(|l| l.total.is_finite()));
        assert!(out.metrics.auc > 0.6, "camp structure should be learnable: {:?}", out.metrics);

        let row = report_row(&out);
        assert_eq!(row["config"]["d"], "16");
        assert!(row["auc"].is_f64());

        let written = write_run_artifacts(&out, &ws).unwrap();
        assert_eq!(written.len(), 3);
        let (hdr, rows) = cache::load_embeddings(&ws.embeddings_out(&cfg)).unwrap();
        assert_eq!(hdr.d, 16);
        assert_eq!(rows.len(), out.embeddings.len());
        let (loaded, _) = cache::load_checkpoint(&ws.checkpoint_out(&cfg)).unwrap();
        assert_eq!(loaded.shape, out.params.shape);
    }

    #[test]
    fn x_100_refuses_evaluation() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir_all(&data).unwrap();
        let path = data.join("tiny.txt");
        std::fs::write(&path, "0 1 1\n1 2 1\n2 0 -1\n2 3 1\n3 4 -1\n4 0 1\n").unwrap();
        let mut cfg = RunConfig::for_dataset(path.to_str().unwrap());
        cfg.x = 100;
        cfg.d = 4;
        cfg.epochs = 2;
        let prepared = prepare(&cfg, &data).unwrap();
        let err = train_eval(prepared).unwrap_err().to_string();
        assert!(err.contains("empty test"), "got: {err}");
    }

    /// Real-data preprocess on the smallest dataset: cache files written,
    /// idempotent, and the partition cache round-trips.
    #[test]
    fn preprocess_alpha_writes_idempotent_caches() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::new(dir.path());
        ws.data_dir = data_dir();
        let cfg = RunConfig::for_dataset("bitcoin_alpha");
        let first = preprocess(&cfg, &ws).unwrap();
        assert_eq!(first.outcomes.len(), 5);
        for (label, outcome) in &first.outcomes {
            assert_eq!(*outcome, WriteOutcome::Created, "{label}");
        }
        assert!(first.prepared.untrust.indirect_total > 0);
        let again = preprocess(&cfg, &ws).unwrap();
        for (label, outcome) in &again.outcomes {
            assert_eq!(*outcome, WriteOutcome::Unchanged, "{label}");
        }
        // the partition cache round-trips against its key
        let key = split_key(
            &cfg,
            &again.prepared.train_graph.structure_hash(),
            again.prepared.train_graph.node_count() as u32,
        );
        let pkey = PartitionKey { split: key, beta: cfg.beta, mode: cfg.partition_mode() };
        let parts = cache::load_partition_cache(&ws.partition_cache(&cfg), &pkey).unwrap();
        assert_eq!(parts.len(), again.prepared.train_graph.node_count());
        let total: u64 = parts.iter().map(|p| p.total()).sum();
        assert!(total > 100_000, "alpha partitions should be large, got {total}");
    }

    #[test]
    fn beta_one_routes_everything_untrusted() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir_all(&data).unwrap();
        let path = data.join("ring.txt");
        let mut lines = String::new();
        for i in 0..12u32 {
            let _ = writeln!(lines, "{} {} {}", i, (i + 1) % 12, if i % 3 == 0 { -1 } else { 1 });
        }
        std::fs::write(&path, lines).unwrap();
        let mut cfg = RunConfig::for_dataset(path.to_str().unwrap());
        cfg.beta = 1.0;
        cfg.x = 100;
        let prepared = prepare(&cfg, &data).unwrap();
        assert_eq!(prepared.untrust.fraction(), 1.0);
        assert!(prepared.classifier.is_none(), "strict gate needs no classifier");
    }

    #[test]
    fn report_rows_with_equal_configs_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir_all(&data).unwrap();
        let path = data.join("t.txt");
        let mut lines = String::new();
        let mut rng = crate::rng::stream(8, &[0xAB]);
        for _ in 0..80 {
            let s = crate::rng::uniform_below(&mut rng, 16);
            let d = crate::rng::uniform_below(&mut rng, 16);
            if s != d {
                let _ = writeln!(lines, "{s} {d} {}", if crate::rng::unit_f64(&mut rng) < 0.8 { 1 } else { -1 });
            }
        }
        std::fs::write(&path, lines).unwrap();
        let mut cfg = RunConfig::for_dataset(path.to_str().unwrap());
        cfg.d = 6;
        cfg.epochs = 8;
        let strip_time = |mut v: serde_json::Value| {
            v.as_object_mut().unwrap().remove("wall_time_s");
            v
        };
        let a = strip_time(report_row(&train_eval(prepare(&cfg, &data).unwrap()).unwrap()));
        let b = strip_time(report_row(&train_eval(prepare(&cfg, &data).unwrap()).unwrap()));
        assert_eq!(a, b);
    }

    #[test]
    fn reproduce_grid_survives_failures() {
        let dir = tempfile::tempdir().unwrap();
        let cells = reproduce(&["bitcoin_alpha"], &[0, 1], dir.path());
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].failures.len(), 2, "missing data dir must fail per seed");
        assert!(cells[0].rows.is_empty());
        let table = reproduce_table(&cells);
        assert!(table.contains("failed"));
        assert!(table.contains("0.867"), "reference column present: {table}");
    }

    #[test]
    fn untrust_stats_count_multiplicity() {
        let mut p = TrustPartition { center: 0, ..Default::default() };
        p.sets[crate::fextra::SET_T_POS].push(1, 1, 5); // direct: not indirect
        p.sets[crate::fextra::SET_T_POS].push(2, 2, 3);
        p.sets[crate::fextra::SET_U_NEG].push(3, 3, 7);
        let mut stats = UntrustStats::default();
        accumulate_untrust(&mut stats, &p);
        assert_eq!(stats.indirect_total, 10);
        assert_eq!(stats.indirect_untrusted, 7);
        assert!((stats.fraction() - 0.7).abs() < 1e-12);
    }
}
