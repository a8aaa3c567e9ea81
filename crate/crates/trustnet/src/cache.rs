//! On-disk artifact formats with consistency headers.
//!
//! Every artifact is line-oriented UTF-8 text: a `# trustnet <kind> v1`
//! magic line, `key: value` header lines binding the producing
//! configuration, a blank line, then records. Floats are written in
//! shortest round-trip form, so a reload is bit-exact and rewrites of
//! unchanged state are byte-identical. Loaders verify the expected header
//! and refuse stale artifacts; writers compare against the existing bytes so
//! a repeated run is a no-op.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::egonet::{EgoEdge, EgoNet};
use crate::fextra::{PartitionMode, TrustPartition, FEATURE_COUNT, SET_NAMES};
use crate::graph::Sign;
use crate::logreg::{LogReg, Standardizer};
use crate::propagation::ModelShape;
use crate::training::{EpochLoss, ModelParams, TrainConfig};
use crate::{Error, Result};

/// What a write did.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum WriteOutcome {
    Created,
    /// Existing file already held exactly this content.
    Unchanged,
    /// Existing file held different content and was replaced.
    Rebuilt,
}

/// Writes `content` unless the file already holds exactly these bytes.
pub fn write_if_changed(path: &Path, content: &str) -> Result<WriteOutcome> {
    match fs::read(path) {
        Ok(existing) if existing == content.as_bytes() => Ok(WriteOutcome::Unchanged),
        Ok(_) => {
            fs::write(path, content)?;
            Ok(WriteOutcome::Rebuilt)
        }
        Err(_) => {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, content)?;
            Ok(WriteOutcome::Created)
        }
    }
}

/// Shortest round-trip float form.
fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("bad float '{s}'") })
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("bad integer '{s}'") })
}

/// Identity of a preprocessing run: the training-graph structure, the split
/// seed and percentage, and the hop bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitKey {
    pub graph_hash: String,
    pub nodes: u32,
    pub seed: u64,
    pub x: u8,
    pub n: u8,
}

impl SplitKey {
    fn header_fields(&self) -> Vec<(String, String)> {
        vec![
            ("graph".into(), self.graph_hash.clone()),
            ("nodes".into(), self.nodes.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("x".into(), self.x.to_string()),
            ("n".into(), self.n.to_string()),
        ]
    }
}

fn render(kind: &str, fields: &[(String, String)], records: &str) -> String {
    let mut out = String::with_capacity(records.len() + 256);
    let _ = writeln!(out, "# trustnet {kind} v1");
    for (k, v) in fields {
        let _ = writeln!(out, "{k}: {v}");
    }
    out.push('\n');
    out.push_str(records);
    out
}

/// Splits an artifact into its header map and record lines. Record line
/// numbers are 1-based over the whole file.
fn parse_artifact<'a>(
    content: &'a str,
    kind: &str,
) -> Result<(BTreeMap<&'a str, &'a str>, Vec<(usize, &'a str)>)> {
    let mut lines = content.lines().enumerate();
    let magic = format!("# trustnet {kind} v1");
    match lines.next() {
        Some((_, first)) if first == magic => {}
        Some((_, first)) => {
            return Err(Error::Consistency(format!(
                "artifact kind mismatch: expected '{magic}', found '{first}'"
            )))
        }
        None => return Err(Error::Consistency("empty artifact file".into())),
    }
    let mut header = BTreeMap::new();
    let mut records = Vec::new();
    let mut in_header = true;
    for (i, line) in lines {
        if in_header {
            if line.is_empty() {
                in_header = false;
                continue;
            }
            let (k, v) = line.split_once(": ").ok_or(Error::Parse {
                line: i + 1,
                msg: format!("malformed header line '{line}'"),
            })?;
            header.insert(k, v);
        } else if !line.is_empty() {
            records.push((i + 1, line));
        }
    }
    Ok((header, records))
}

fn check_fields(
    header: &BTreeMap<&str, &str>,
    expected: &[(String, String)],
) -> Result<()> {
    for (k, v) in expected {
        match header.get(k.as_str()) {
            Some(found) if *found == v => {}
            Some(found) => {
                return Err(Error::Consistency(format!(
                    "stale artifact: header '{k}' is '{found}', expected '{v}'"
                )))
            }
            None => {
                return Err(Error::Consistency(format!("artifact header missing '{k}'")))
            }
        }
    }
    Ok(())
}

// --- ego-network cache ----------------------------------------------------

/// One record per ego-edge group: center, neighbor, sign, path length, and
/// the number of parallel inferred edges in the group.
pub fn egonet_cache_content(key: &SplitKey, egonets: &[EgoNet]) -> String {
    let mut records = String::new();
    for ego in egonets {
        for e in &ego.edges {
            let _ = writeln!(
                records,
                "{} {} {} {} {}",
                ego.center,
                e.neighbor,
                e.sign.symbol(),
                e.path_len,
                e.count
            );
        }
    }
    render("egonet-cache", &key.header_fields(), &records)
}

pub fn write_egonet_cache(
    path: &Path,
    key: &SplitKey,
    egonets: &[EgoNet],
) -> Result<WriteOutcome> {
    write_if_changed(path, &egonet_cache_content(key, egonets))
}

pub fn load_egonet_cache(path: &Path, key: &SplitKey) -> Result<Vec<EgoNet>> {
    let content = fs::read_to_string(path)?;
    let (header, records) = parse_artifact(&content, "egonet-cache")?;
    check_fields(&header, &key.header_fields())?;
    let mut egonets: Vec<EgoNet> = (0..key.nodes)
        .map(|center| EgoNet { center, hop_bound: key.n, edges: Vec::new() })
        .collect();
    let mut last_center: Option<u32> = None;
    for (line, rec) in records {
        let mut it = rec.split_ascii_whitespace();
        let mut next = || it.next().ok_or(Error::Parse { line, msg: "truncated record".into() });
        let center: u32 = parse_int(next()?, line)?;
        let neighbor: u32 = parse_int(next()?, line)?;
        let sign_str = next()?;
        let sign = sign_str
            .chars()
            .next()
            .and_then(Sign::from_symbol)
            .ok_or(Error::Parse { line, msg: format!("bad sign '{sign_str}'") })?;
        let path_len: u8 = parse_int(next()?, line)?;
        let count: u32 = parse_int(next()?, line)?;
        if center >= key.nodes || neighbor >= key.nodes {
            return Err(Error::Parse { line, msg: "node id out of range".into() });
        }
        if last_center.is_some_and(|c| center < c) {
            return Err(Error::Parse { line, msg: "records not grouped by center".into() });
        }
        last_center = Some(center);
        egonets[center as usize].edges.push(EgoEdge { neighbor, sign, path_len, count });
    }
    Ok(egonets)
}

// --- trust-partition cache --------------------------------------------------

/// Identity of a partitioning run: the split plus the gate settings.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionKey {
    pub split: SplitKey,
    pub beta: f64,
    pub mode: PartitionMode,
}

pub fn mode_name(mode: PartitionMode) -> &'static str {
    match mode {
        PartitionMode::Standard => "standard",
        PartitionMode::AllTrustedActual => "all-trusted-actual",
        PartitionMode::AllTrustedPredicted => "all-trusted-predicted",
    }
}

pub fn mode_from_name(name: &str) -> Option<PartitionMode> {
    match name {
        "standard" => Some(PartitionMode::Standard),
        "all-trusted-actual" => Some(PartitionMode::AllTrustedActual),
        "all-trusted-predicted" => Some(PartitionMode::AllTrustedPredicted),
        _ => None,
    }
}

impl PartitionKey {
    fn header_fields(&self) -> Vec<(String, String)> {
        let mut f = self.split.header_fields();
        f.push(("beta".into(), fmt_f(self.beta)));
        f.push(("mode".into(), mode_name(self.mode).into()));
        f
    }
}

/// One record per ego-edge group with its assigned set.
pub fn partition_cache_content(key: &PartitionKey, parts: &[TrustPartition]) -> String {
    let mut records = String::new();
    for p in parts {
        for (si, set) in p.sets.iter().enumerate() {
            for (neighbor, path_len, count) in set.iter() {
                let _ = writeln!(
                    records,
                    "{} {} {} {} {} {}",
                    p.center,
                    neighbor,
                    if si & 1 == 0 { '+' } else { '-' },
                    path_len,
                    count,
                    SET_NAMES[si]
                );
            }
        }
    }
    render("partition-cache", &key.header_fields(), &records)
}

pub fn write_partition_cache(
    path: &Path,
    key: &PartitionKey,
    parts: &[TrustPartition],
) -> Result<WriteOutcome> {
    write_if_changed(path, &partition_cache_content(key, parts))
}

pub fn load_partition_cache(path: &Path, key: &PartitionKey) -> Result<Vec<TrustPartition>> {
    let content = fs::read_to_string(path)?;
    let (header, records) = parse_artifact(&content, "partition-cache")?;
    check_fields(&header, &key.header_fields())?;
    let mut parts: Vec<TrustPartition> = (0..key.split.nodes)
        .map(|center| TrustPartition { center, ..Default::default() })
        .collect();
    for (line, rec) in records {
        let mut it = rec.split_ascii_whitespace();
        let mut next = || it.next().ok_or(Error::Parse { line, msg: "truncated record".into() });
        let center: u32 = parse_int(next()?, line)?;
        let neighbor: u32 = parse_int(next()?, line)?;
        let _sign = next()?;
        let path_len: u8 = parse_int(next()?, line)?;
        let count: u32 = parse_int(next()?, line)?;
        let set_name = next()?;
        let si = SET_NAMES
            .iter()
            .position(|&n| n == set_name)
            .ok_or(Error::Parse { line, msg: format!("unknown set '{set_name}'") })?;
        if center >= key.split.nodes {
            return Err(Error::Parse { line, msg: "center out of range".into() });
        }
        parts[center as usize].sets[si].push(neighbor, path_len, count);
    }
    Ok(parts)
}

// --- sign-classifier model file ---------------------------------------------

/// Plain text: bias, then one weight per feature, then `mean std` per feature.
pub fn sign_classifier_content(key: &SplitKey, model: &LogReg<f64>) -> String {
    let mut records = String::new();
    let _ = writeln!(records, "{}", fmt_f(model.bias));
    for w in &model.coef {
        let _ = writeln!(records, "{}", fmt_f(*w));
    }
    for (m, s) in model.scaler.mean.iter().zip(&model.scaler.std) {
        let _ = writeln!(records, "{} {}", fmt_f(*m), fmt_f(*s));
    }
    let mut fields = key.header_fields();
    fields.push(("features".into(), FEATURE_COUNT.to_string()));
    render("sign-classifier", &fields, &records)
}

pub fn write_sign_classifier(
    path: &Path,
    key: &SplitKey,
    model: &LogReg<f64>,
) -> Result<WriteOutcome> {
    write_if_changed(path, &sign_classifier_content(key, model))
}

pub fn load_sign_classifier(path: &Path, key: &SplitKey) -> Result<LogReg<f64>> {
    let content = fs::read_to_string(path)?;
    let (header, records) = parse_artifact(&content, "sign-classifier")?;
    let mut fields = key.header_fields();
    fields.push(("features".into(), FEATURE_COUNT.to_string()));
    check_fields(&header, &fields)?;
    if records.len() != 1 + 2 * FEATURE_COUNT {
        return Err(Error::Consistency(format!(
            "sign classifier holds {} records, expected {}",
            records.len(),
            1 + 2 * FEATURE_COUNT
        )));
    }
    let bias = parse_f(records[0].1, records[0].0)?;
    let mut coef = Vec::with_capacity(FEATURE_COUNT);
    for &(line, rec) in &records[1..=FEATURE_COUNT] {
        coef.push(parse_f(rec, line)?);
    }
    let mut mean = Vec::with_capacity(FEATURE_COUNT);
    let mut std = Vec::with_capacity(FEATURE_COUNT);
    for &(line, rec) in &records[1 + FEATURE_COUNT..] {
        let (m, s) = rec
            .split_once(' ')
            .ok_or(Error::Parse { line, msg: "scaler record needs two floats".into() })?;
        mean.push(parse_f(m, line)?);
        std.push(parse_f(s, line)?);
    }
    Ok(LogReg { bias, coef, scaler: Standardizer { mean, std } })
}

// --- embedding output file ----------------------------------------------------

/// Configuration that produced an embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingHeader {
    pub d: usize,
    pub h: usize,
    pub n: u8,
    /// None means every neighbor was used (no sampling cap).
    pub gamma: Option<u32>,
    pub beta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub dataset_hash: String,
}

impl EmbeddingHeader {
    fn header_fields(&self) -> Vec<(String, String)> {
        vec![
            ("d".into(), self.d.to_string()),
            ("h".into(), self.h.to_string()),
            ("n".into(), self.n.to_string()),
            ("gamma".into(), self.gamma.map_or("all".into(), |g| g.to_string())),
            ("beta".into(), fmt_f(self.beta)),
            ("lambda".into(), fmt_f(self.lambda)),
            ("seed".into(), self.seed.to_string()),
            ("dataset".into(), self.dataset_hash.clone()),
        ]
    }
}

/// One line per node: its label followed by the fused embedding.
pub fn embeddings_content(
    header: &EmbeddingHeader,
    labels: &[&str],
    vectors: &[Vec<f64>],
) -> String {
    let mut records = String::with_capacity(vectors.len() * (header.d * 20 + 16));
    for (label, v) in labels.iter().zip(vectors) {
        records.push_str(label);
        for x in v {
            records.push(' ');
            records.push_str(&fmt_f(*x));
        }
        records.push('\n');
    }
    render("embeddings", &header.header_fields(), &records)
}

pub fn write_embeddings(
    path: &Path,
    header: &EmbeddingHeader,
    labels: &[&str],
    vectors: &[Vec<f64>],
) -> Result<WriteOutcome> {
    write_if_changed(path, &embeddings_content(header, labels, vectors))
}

pub fn load_embeddings(path: &Path) -> Result<(EmbeddingHeader, Vec<(String, Vec<f64>)>)> {
    let content = fs::read_to_string(path)?;
    let (header, records) = parse_artifact(&content, "embeddings")?;
    let get = |k: &str| -> Result<&str> {
        header.get(k).copied().ok_or(Error::Consistency(format!("embeddings header missing '{k}'")))
    };
    let gamma_str = get("gamma")?;
    let hdr = EmbeddingHeader {
        d: parse_int(get("d")?, 2)?,
        h: parse_int(get("h")?, 2)?,
        n: parse_int(get("n")?, 2)?,
        gamma: if gamma_str == "all" { None } else { Some(parse_int(gamma_str, 2)?) },
        beta: parse_f(get("beta")?, 2)?,
        lambda: parse_f(get("lambda")?, 2)?,
        seed: parse_int(get("seed")?, 2)?,
        dataset_hash: get("dataset")?.to_string(),
    };
    let mut rows = Vec::with_capacity(records.len());
    for (line, rec) in records {
        let mut it = rec.split_ascii_whitespace();
        let label = it
            .next()
            .ok_or(Error::Parse { line, msg: "empty embedding record".into() })?
            .to_string();
        let v: Vec<f64> = it
            .map(|s| parse_f(s, line))
            .collect::<Result<_>>()?;
        if v.len() != hdr.d {
            return Err(Error::Parse {
                line,
                msg: format!("embedding has {} values, header says {}", v.len(), hdr.d),
            });
        }
        rows.push((label, v));
    }
    Ok((hdr, rows))
}

// --- checkpoint -----------------------------------------------------------------

/// All parameter tensors with shapes, plus the training configuration.
pub fn checkpoint_content(params: &ModelParams<f64>, cfg: &TrainConfig) -> String {
    let mut fields = vec![
        ("lambda".to_string(), fmt_f(cfg.lambda_status)),
        ("learning_rate".to_string(), fmt_f(cfg.learning_rate)),
        ("epochs".to_string(), cfg.epochs.to_string()),
        ("weight_decay".to_string(), fmt_f(cfg.weight_decay)),
        ("seed".to_string(), cfg.seed.to_string()),
        ("learn_attention".to_string(), cfg.learn_attention.to_string()),
        ("learn_embeddings".to_string(), cfg.learn_embeddings.to_string()),
        ("node_count".to_string(), params.shape.node_count.to_string()),
        ("d_half".to_string(), params.shape.d_half.to_string()),
        ("layers".to_string(), params.shape.layers.to_string()),
        ("hop_bound".to_string(), params.shape.hop_bound.to_string()),
    ];
    fields.push(("blocks".to_string(), params.store.block_count().to_string()));
    let mut records = String::new();
    for b in params.store.blocks() {
        let _ = writeln!(records, "block {} {} {}", b.name, b.rows, b.cols);
        for r in 0..b.rows {
            let row = b.row(r);
            let mut line = String::with_capacity(row.len() * 20);
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&fmt_f(*v));
            }
            records.push_str(&line);
            records.push('\n');
        }
    }
    render("checkpoint", &fields, &records)
}

pub fn write_checkpoint(
    path: &Path,
    params: &ModelParams<f64>,
    cfg: &TrainConfig,
) -> Result<WriteOutcome> {
    write_if_changed(path, &checkpoint_content(params, cfg))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f64>, TrainConfig)> {
    let content = fs::read_to_string(path)?;
    let (header, records) = parse_artifact(&content, "checkpoint")?;
    let get = |k: &str| -> Result<&str> {
        header.get(k).copied().ok_or(Error::Consistency(format!("checkpoint missing '{k}'")))
    };
    let cfg = TrainConfig {
        lambda_status: parse_f(get("lambda")?, 2)?,
        learning_rate: parse_f(get("learning_rate")?, 2)?,
        epochs: parse_int(get("epochs")?, 2)?,
        weight_decay: parse_f(get("weight_decay")?, 2)?,
        seed: parse_int(get("seed")?, 2)?,
        learn_attention: get("learn_attention")? == "true",
        learn_embeddings: get("learn_embeddings")? == "true",
    };
    let shape = ModelShape {
        node_count: parse_int(get("node_count")?, 2)?,
        d_half: parse_int(get("d_half")?, 2)?,
        layers: parse_int(get("layers")?, 2)?,
        hop_bound: parse_int(get("hop_bound")?, 2)?,
    };
    let mut params: ModelParams<f64> = ModelParams::new(shape, cfg.seed);
    let expected_blocks: usize = parse_int(get("blocks")?, 2)?;
    if expected_blocks != params.store.block_count() {
        return Err(Error::Consistency(format!(
            "checkpoint has {expected_blocks} blocks, model layout has {}",
            params.store.block_count()
        )));
    }
    let mut rec = records.into_iter();
    for b in 0..params.store.block_count() {
        let id = crate::tape::BlockId(b);
        let (name, rows, cols) = {
            let blk = params.store.block(id);
            (blk.name.clone(), blk.rows, blk.cols)
        };
        let (line, head) =
            rec.next().ok_or(Error::Consistency("checkpoint truncated".into()))?;
        let want = format!("block {name} {rows} {cols}");
        if head != want {
            return Err(Error::Consistency(format!(
                "checkpoint block line {line}: '{head}', expected '{want}'"
            )));
        }
        for r in 0..rows {
            let (line, row_str) =
                rec.next().ok_or(Error::Consistency("checkpoint truncated".into()))?;
            let values: Vec<f64> = row_str
                .split_ascii_whitespace()
                .map(|s| parse_f(s, line))
                .collect::<Result<_>>()?;
            if values.len() != cols {
                return Err(Error::Parse {
                    line,
                    msg: format!("row has {} values, block needs {cols}", values.len()),
                });
            }
            params.store.block_mut(id).row_mut(r).copy_from_slice(&values);
        }
    }
    if rec.next().is_some() {
        return Err(Error::Consistency("checkpoint has trailing records".into()));
    }
    Ok((params, cfg))
}

// --- loss trace ------------------------------------------------------------------

pub fn loss_csv_content(trace: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,sign_loss,status_loss,total\n");
    for l in trace {
        let _ = writeln!(out, "{},{},{},{}", l.epoch, fmt_f(l.sign), fmt_f(l.status), fmt_f(l.total));
    }
    out
}

pub fn write_loss_csv(path: &Path, trace: &[EpochLoss]) -> Result<WriteOutcome> {
    write_if_changed(path, &loss_csv_content(trace))
}

// --- triangle-ratio report ---------------------------------------------------------

/// Pretty-printed JSON with sorted keys (deterministic bytes).
pub fn triad_report_content(report: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(report).unwrap_or_else(|_| "{}".into());
    s.push('\n');
    s
}

pub fn write_triad_report(path: &Path, report: &serde_json::Value) -> Result<WriteOutcome> {
    write_if_changed(path, &triad_report_content(report))
}
