//! Signed directed graphs: edge-list loading, adjacency, splits, hashing.
//!
//! Node ids are dense `0..l`; the original string labels are kept for output
//! files. Both adjacency directions are materialized so degree and
//! common-neighbor queries never scan the edge list.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::rng::{self, tag};
use crate::{Error, Result};

/// Dense node index, `0..node_count`.
pub type NodeId = u32;

/// Edge polarity.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    /// Sign of a nonzero weight; `None` for exactly zero.
    pub fn from_weight(w: f64) -> Option<Sign> {
        if w > 0.0 {
            Some(Sign::Pos)
        } else if w < 0.0 {
            Some(Sign::Neg)
        } else {
            None
        }
    }

    #[inline]
    pub fn value(self) -> i8 {
        match self {
            Sign::Pos => 1,
            Sign::Neg => -1,
        }
    }

    #[inline]
    pub fn flip(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }

    /// Parity product: two like signs compose to `Pos`, unlike to `Neg`.
    #[inline]
    pub fn product(self, other: Sign) -> Sign {
        if self == other {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Pos => '+',
            Sign::Neg => '-',
        }
    }

    pub fn from_symbol(c: char) -> Option<Sign> {
        match c {
            '+' => Some(Sign::Pos),
            '-' => Some(Sign::Neg),
            _ => None,
        }
    }
}

/// One directed signed edge.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Hash)]
pub struct SignedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub sign: Sign,
}

/// What the loader did with the raw records.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub records: usize,
    pub dropped_self_loops: usize,
    pub dropped_duplicates: usize,
    pub rejected_zero_weight: usize,
}

/// In-memory sparse signed directed graph with both adjacency directions.
#[derive(Clone, Debug)]
pub struct SignedDigraph {
    labels: Vec<String>,
    edges: Vec<SignedEdge>,
    out_adj: Vec<Vec<(NodeId, Sign)>>,
    in_adj: Vec<Vec<(NodeId, Sign)>>,
    positive: usize,
}

impl SignedDigraph {
    /// Builds a graph over `node_count` nodes from already-clean edges.
    ///
    /// Rejects self-loops, duplicate ordered pairs, and out-of-range ids;
    /// use [`load_edge_list`] for raw data that needs those dropped silently.
    pub fn from_edges(node_count: u32, edges: &[(u32, u32, i8)]) -> Result<SignedDigraph> {
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        let mut list = Vec::with_capacity(edges.len());
        let mut seen = HashMap::new();
        for &(s, d, w) in edges {
            if s >= node_count || d >= node_count {
                return Err(Error::InvalidArg(format!(
                    "edge ({s},{d}) out of range for {node_count} nodes"
                )));
            }
            if s == d {
                return Err(Error::InvalidArg(format!("self-loop on node {s}")));
            }
            if seen.insert((s, d), ()).is_some() {
                return Err(Error::InvalidArg(format!("duplicate edge ({s},{d})")));
            }
            let sign = Sign::from_weight(w as f64)
                .ok_or_else(|| Error::InvalidArg(format!("zero weight on edge ({s},{d})")))?;
            list.push(SignedEdge { src: s, dst: d, sign });
        }
        Ok(Self::assemble(labels, list))
    }

    /// Rebuilds a graph over the same node set from a subset of edges
    /// (isolated nodes keep their ids, so downstream indexing is stable).
    pub fn with_edges(&self, edges: &[SignedEdge]) -> SignedDigraph {
        Self::assemble(self.labels.clone(), edges.to_vec())
    }

    fn assemble(labels: Vec<String>, edges: Vec<SignedEdge>) -> SignedDigraph {
        let l = labels.len();
        let mut out_adj = vec![Vec::new(); l];
        let mut in_adj = vec![Vec::new(); l];
        let mut positive = 0;
        for e in &edges {
            out_adj[e.src as usize].push((e.dst, e.sign));
            in_adj[e.dst as usize].push((e.src, e.sign));
            if e.sign == Sign::Pos {
                positive += 1;
            }
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        SignedDigraph { labels, edges, out_adj, in_adj, positive }
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn positive_count(&self) -> usize {
        self.positive
    }

    /// Edges in first-seen order (the canonical order for splits and hashing).
    pub fn edges(&self) -> &[SignedEdge] {
        &self.edges
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v as usize]
    }

    pub fn out_adj(&self, v: NodeId) -> &[(NodeId, Sign)] {
        &self.out_adj[v as usize]
    }

    pub fn in_adj(&self, v: NodeId) -> &[(NodeId, Sign)] {
        &self.in_adj[v as usize]
    }

    /// Per-node neighbor records with direction/sign bit flags, plus signed
    /// degree totals. This single structure answers every topology query the
    /// feature extractor and the ego-network builder make.
    pub fn flag_adj(&self) -> FlagAdj {
        let l = self.node_count();
        let mut counts = vec![0u32; l];
        for e in &self.edges {
            counts[e.src as usize] += 1;
            counts[e.dst as usize] += 1;
        }
        let mut per: Vec<Vec<(NodeId, u8)>> =
            counts.iter().map(|&c| Vec::with_capacity(c as usize)).collect();
        for e in &self.edges {
            let (ob, ib) = match e.sign {
                Sign::Pos => (flags::OUT_POS, flags::IN_POS),
                Sign::Neg => (flags::OUT_NEG, flags::IN_NEG),
            };
            per[e.src as usize].push((e.dst, ob));
            per[e.dst as usize].push((e.src, ib));
        }
        let mut pos_deg = vec![0u32; l];
        let mut neg_deg = vec![0u32; l];
        for (v, list) in per.iter_mut().enumerate() {
            list.sort_unstable_by_key(|&(n, _)| n);
            let mut w = 0;
            for r in 0..list.len() {
                if w > 0 && list[w - 1].0 == list[r].0 {
                    list[w - 1].1 |= list[r].1;
                } else {
                    list[w] = list[r];
                    w += 1;
                }
            }
            list.truncate(w);
            for &(_, f) in list.iter() {
                pos_deg[v] += (f & flags::OUT_POS != 0) as u32 + (f & flags::IN_POS != 0) as u32;
                neg_deg[v] += (f & flags::OUT_NEG != 0) as u32 + (f & flags::IN_NEG != 0) as u32;
            }
        }
        FlagAdj { per, pos_deg, neg_deg }
    }

    /// Hash of the graph structure (node count plus ordered edge list); keys
    /// every derived cache so stale artifacts are detected.
    pub fn structure_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.node_count() as u64).to_le_bytes());
        for e in &self.edges {
            h.update(e.src.to_le_bytes());
            h.update(e.dst.to_le_bytes());
            h.update([(e.sign == Sign::Neg) as u8]);
        }
        let digest = h.finalize();
        let mut s = String::with_capacity(64);
        for b in digest {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

/// Direction/sign flags for one (node, neighbor) record in [`FlagAdj`].
pub mod flags {
    /// Edge node -> neighbor with positive sign.
    pub const OUT_POS: u8 = 1;
    /// Edge node -> neighbor with negative sign.
    pub const OUT_NEG: u8 = 2;
    /// Edge neighbor -> node with positive sign.
    pub const IN_POS: u8 = 4;
    /// Edge neighbor -> node with negative sign.
    pub const IN_NEG: u8 = 8;
    pub const ANY_POS: u8 = OUT_POS | IN_POS;
    pub const ANY_NEG: u8 = OUT_NEG | IN_NEG;
}

/// Flag-compressed adjacency: one record per unordered neighbor pair, sorted
/// by neighbor id, with direction/sign bits, plus per-node signed degrees
/// counting both directions.
pub struct FlagAdj {
    per: Vec<Vec<(NodeId, u8)>>,
    pub pos_deg: Vec<u32>,
    pub neg_deg: Vec<u32>,
}

impl FlagAdj {
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, u8)] {
        &self.per[v as usize]
    }

    pub fn node_count(&self) -> usize {
        self.per.len()
    }

    /// Undirected projection with a sign mask per pair: bit 0 = some positive
    /// edge between the pair, bit 1 = some negative edge (both set when
    /// opposite directions disagree).
    pub fn sign_masks(&self) -> Vec<Vec<(NodeId, u8)>> {
        self.per
            .iter()
            .map(|list| {
                list.iter()
                    .map(|&(n, f)| {
                        let m = ((f & flags::ANY_POS != 0) as u8)
                            | (((f & flags::ANY_NEG != 0) as u8) << 1);
                        (n, m)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Parses a signed edge list: one `(src, dst, weight)` record per line,
/// whitespace- or comma-separated, `#` lines ignored, extra columns ignored.
///
/// Node labels are registered for every well-formed record. The edge itself is
/// dropped when it is a self-loop or repeats an ordered pair already seen
/// (first occurrence wins); zero-weight records are rejected and counted.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<(SignedDigraph, LoadReport)> {
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut seen: HashMap<(NodeId, NodeId), ()> = HashMap::new();
    let mut edges: Vec<SignedEdge> = Vec::new();
    let mut report = LoadReport::default();

    let mut intern = |lab: &str, labels: &mut Vec<String>| -> NodeId {
        if let Some(&id) = ids.get(lab) {
            return id;
        }
        let id = labels.len() as NodeId;
        ids.insert(lab.to_string(), id);
        labels.push(lab.to_string());
        id
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty());
        let (src, dst, w) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(d), Some(w)) => (s, d, w),
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected (src, dst, weight), got {line:?}"),
                })
            }
        };
        let weight: f64 = w.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad weight {w:?}"),
        })?;
        report.records += 1;
        let s = intern(src, &mut labels);
        let d = intern(dst, &mut labels);
        let Some(sign) = Sign::from_weight(weight) else {
            report.rejected_zero_weight += 1;
            continue;
        };
        if s == d {
            report.dropped_self_loops += 1;
            continue;
        }
        if seen.insert((s, d), ()).is_some() {
            report.dropped_duplicates += 1;
            continue;
        }
        edges.push(SignedEdge { src: s, dst: d, sign });
    }
    Ok((SignedDigraph::assemble(labels, edges), report))
}

/// [`load_edge_list`] over a file path.
pub fn load_edge_list_path(path: &Path) -> Result<(SignedDigraph, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::InvalidArg(format!("cannot open {}: {e}", path.display()))
    })?;
    load_edge_list(std::io::BufReader::new(file))
}

/// Train/test partition of a graph's edges.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<SignedEdge>,
    pub test: Vec<SignedEdge>,
    pub ratio_x: u8,
    pub seed: u64,
}

/// Uniform random edge split: `round(x% · |E|)` edges train, rest test.
/// Deterministic for a fixed seed; `x = 100` leaves the test set empty.
pub fn split_edges(graph: &SignedDigraph, x: u8, seed: u64) -> Result<DatasetSplit> {
    if x == 0 || x > 100 {
        return Err(Error::InvalidArg(format!("split percentage {x} outside (0, 100]")));
    }
    let m = graph.edge_count();
    let n_train = (x as f64 / 100.0 * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = rng::stream(seed, &[tag::SPLIT, x as u64]);
    rng::shuffle(&mut rng, &mut order);
    let edges = graph.edges();
    let train = order[..n_train].iter().map(|&i| edges[i]).collect();
    let test = order[n_train..].iter().map(|&i| edges[i]).collect();
    Ok(DatasetSplit { train, test, ratio_x: x, seed })
}
