//! Edge-sign prediction from trained embeddings.
//!
//! A downstream logistic regression scores each held-out edge from the
//! endpoint embeddings (concatenated by default; element-wise product and a
//! classifier-free inner-product scorer are available for sensitivity
//! checks). Reported metrics: pooled-count micro F1, unweighted per-class
//! macro F1, and the rank-statistic AUC with ties counted half.

use crate::graph::{Sign, SignedEdge};
use crate::logreg::{self, DenseMatrix, LogReg, LogRegConfig};
use crate::scalar::sigmoid;
use crate::{Error, Result};

/// How an ordered pair of fused embeddings becomes a feature vector.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    /// `[v_i ++ v_j]` (2d features) — the default protocol.
    Concat,
    /// Element-wise product (d features).
    Hadamard,
    /// No classifier: score is the logistic of the inner product.
    DirectDot,
}

/// Scorer for held-out edges.
#[derive(Clone, Debug)]
pub struct Downstream {
    pub mode: FeatureMode,
    /// Present except in `DirectDot` mode.
    pub model: Option<LogReg<f64>>,
}

/// One scored test edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub edge: SignedEdge,
    /// Probability of the positive class, in [0, 1].
    pub score: f64,
    pub predicted: Sign,
}

/// Metrics over one test split. `confusion[actual][predicted]` with index 0
/// = positive, 1 = negative.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub auc: f64,
    pub confusion: [[u64; 2]; 2],
    pub warning: Option<String>,
}

/// Feature vector for one ordered pair (empty in `DirectDot` mode).
pub fn pair_features(vi: &[f64], vj: &[f64], mode: FeatureMode) -> Vec<f64> {
    match mode {
        FeatureMode::Concat => {
            let mut f = Vec::with_capacity(vi.len() + vj.len());
            f.extend_from_slice(vi);
            f.extend_from_slice(vj);
            f
        }
        FeatureMode::Hadamard => vi.iter().zip(vj).map(|(a, b)| a * b).collect(),
        FeatureMode::DirectDot => Vec::new(),
    }
}

/// Fits the downstream sign classifier on training edges (label 1 =
/// positive). `DirectDot` needs no fitting and always succeeds.
pub fn train_downstream(
    embeddings: &[Vec<f64>],
    train_edges: &[SignedEdge],
    mode: FeatureMode,
    cfg: &LogRegConfig,
) -> Result<Downstream> {
    if mode == FeatureMode::DirectDot {
        return Ok(Downstream { mode, model: None });
    }
    if train_edges.is_empty() {
        return Err(Error::Evaluation("no training edges for the downstream classifier".into()));
    }
    let width = pair_features(&embeddings[0], &embeddings[0], mode).len();
    let mut x = DenseMatrix::zeros(train_edges.len(), width);
    let mut y = Vec::with_capacity(train_edges.len());
    for (r, e) in train_edges.iter().enumerate() {
        let f = pair_features(&embeddings[e.src as usize], &embeddings[e.dst as usize], mode);
        x.row_mut(r).copy_from_slice(&f);
        y.push(e.sign == Sign::Pos);
    }
    let model = logreg::fit(&x, &y, cfg)?;
    Ok(Downstream { mode, model: Some(model) })
}

/// Scores every edge; `predicted` is positive exactly when `score >= 0.5`.
pub fn score_edges(
    ds: &Downstream,
    embeddings: &[Vec<f64>],
    edges: &[SignedEdge],
) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::with_capacity(edges.len());
    for e in edges {
        let (vi, vj) = (&embeddings[e.src as usize], &embeddings[e.dst as usize]);
        let score = match ds.mode {
            FeatureMode::DirectDot => {
                let dot: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
                sigmoid(dot)
            }
            mode => {
                let model = ds
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Evaluation("downstream classifier missing".into()))?;
                model.predict_proba(&pair_features(vi, vj, mode))
            }
        };
        let predicted = if score >= 0.5 { Sign::Pos } else { Sign::Neg };
        out.push(PredictionRecord { edge: *e, score, predicted });
    }
    Ok(out)
}

/// Rank-statistic AUC: the probability that a random positive outscores a
/// random negative, ties counted 0.5. NaN when either class is absent.
pub fn rank_auc(scored: &[(f64, bool)]) -> f64 {
    let n_pos = scored.iter().filter(|(_, y)| *y).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    // tie-averaged ranks, 1-based
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0; // mean of ranks i+1 ..= j+1
        for &k in &order[i..=j] {
            if scored[k].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64)
}

/// Metrics from already-scored records. Micro F1 pools per-class counts
/// (equivalently: accuracy); macro F1 averages the two per-class F1 scores,
/// scoring an undefined class F1 as zero.
pub fn metrics_from_records(records: &[PredictionRecord]) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let mut confusion = [[0u64; 2]; 2];
    for r in records {
        let actual = if r.edge.sign == Sign::Pos { 0 } else { 1 };
        let predicted = if r.predicted == Sign::Pos { 0 } else { 1 };
        confusion[actual][predicted] += 1;
    }
    // per-class F1 treating each class in turn as the target
    let f1_for = |class: usize| -> f64 {
        let tp = confusion[class][class];
        let fp = confusion[1 - class][class];
        let fn_ = confusion[class][1 - class];
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    // pooled counts: every record is one true class and one prediction, so
    // pooled precision = pooled recall = accuracy
    let total: u64 = records.len() as u64;
    let pooled_tp = confusion[0][0] + confusion[1][1];
    let micro_f1 = pooled_tp as f64 / total as f64;
    let macro_f1 = (f1_for(0) + f1_for(1)) / 2.0;
    let scored: Vec<(f64, bool)> =
        records.iter().map(|r| (r.score, r.edge.sign == Sign::Pos)).collect();
    let auc = rank_auc(&scored);
    let warning = if auc.is_nan() {
        Some("test split contains a single class; AUC is undefined".to_string())
    } else {
        None
    };
    Ok(MetricsReport { micro_f1, macro_f1, auc, confusion, warning })
}

/// Scores the test edges and reports all metrics.
pub fn evaluate(
    ds: &Downstream,
    embeddings: &[Vec<f64>],
    test_edges: &[SignedEdge],
) -> Result<MetricsReport> {
    if test_edges.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let records = score_edges(ds, embeddings, test_edges)?;
    metrics_from_records(&records)
}
