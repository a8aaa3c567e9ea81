//! Joint optimization of the edge-sign and status objectives.
//!
//! The sign objective scores each training edge by the inner product of the
//! endpoint's fused embeddings through a logistic link; the status objective
//! maps each fused embedding to a scalar score and rewards positive edges
//! whose destination outranks their source (and the reverse for negative
//! edges). Both are clamped cross-entropies summed over the full edge batch;
//! the total is `sign + lambda * status`. Training runs full-batch Adam
//! steps with decoupled weight decay, resampling neighborhoods every epoch,
//! and is bit-deterministic under a fixed seed.

use std::collections::HashMap;

use crate::graph::{NodeId, SignedEdge};
use crate::propagation::{
    build_params, forward_tape, fuse_all, EpochSampler, ModelBlocks, ModelShape,
};
use crate::scalar::{sigmoid, Scalar};
use crate::tape::{Grads, ParamStore, Tape, Term, Tid, PROB_CLAMP};
use crate::triads::RatioTable;
use crate::{Error, Result};

/// All learnable state plus its layout handles.
#[derive(Clone, Debug)]
pub struct ModelParams<S> {
    pub store: ParamStore<S>,
    pub blocks: ModelBlocks,
    pub shape: ModelShape,
}

impl<S: Scalar> ModelParams<S> {
    /// Fresh parameters with seeded fan-scaled initialization.
    pub fn new(shape: ModelShape, seed: u64) -> ModelParams<S> {
        let (store, blocks) = build_params(&shape, seed);
        ModelParams { store, blocks, shape }
    }

    pub fn status_head(&self) -> (&[S], S) {
        (&self.store.block(self.blocks.status_w).data, self.store.block(self.blocks.status_b).data[0])
    }
}

/// Optimization settings. `learn_attention = false` freezes the path-length
/// weights at their initial value (plain mean pooling); `learn_embeddings =
/// false` freezes the input tables so only weights and heads train.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_status: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub weight_decay: f64,
    pub seed: u64,
    pub learn_attention: bool,
    pub learn_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lambda_status: 1.0,
            learning_rate: 5e-3,
            epochs: 100,
            weight_decay: 1e-5,
            seed: 0,
            learn_attention: true,
            learn_embeddings: true,
        }
    }
}

/// One epoch's loss components (values before that epoch's parameter step).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: u32,
    pub sign: f64,
    pub status: f64,
    pub total: f64,
}

/// `-ln(clamp(sigmoid(logit)))`, the per-term clamped cross-entropy.
fn nls_plain<S: Scalar>(logit: S) -> S {
    let lo = S::lit(PROB_CLAMP);
    let hi = S::one() - lo;
    let p = sigmoid(logit);
    let clamped = if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    };
    -clamped.ln()
}

/// Sum over edges of the clamped logistic loss on fused inner products;
/// positive edges reward a large product, negative edges a small one.
pub fn sign_loss<S: Scalar>(fused: &[Vec<S>], edges: &[SignedEdge]) -> S {
    let mut acc = S::zero();
    for e in edges {
        let (vi, vj) = (&fused[e.src as usize], &fused[e.dst as usize]);
        let mut dot = S::zero();
        for (a, b) in vi.iter().zip(vj) {
            dot += *a * *b;
        }
        let logit = if e.sign.value() > 0 { dot } else { -dot };
        acc += nls_plain(logit);
    }
    acc
}

/// Status score per node: the logistic of an affine map of the fused
/// embedding.
pub fn status_scores<S: Scalar>(fused: &[Vec<S>], head_w: &[S], head_b: S) -> Vec<S> {
    fused
        .iter()
        .map(|v| {
            let mut acc = head_b;
            for (w, x) in head_w.iter().zip(v) {
                acc += *w * *x;
            }
            sigmoid(acc)
        })
        .collect()
}

/// Status loss given precomputed per-node scores: positive edges penalize
/// the source outranking the destination, negative edges the reverse. The
/// loss depends on scores only through their differences.
pub fn status_loss_from_scores<S: Scalar>(scores: &[S], edges: &[SignedEdge]) -> S {
    let mut acc = S::zero();
    for e in edges {
        let (si, sj) = (scores[e.src as usize], scores[e.dst as usize]);
        let gap = if e.sign.value() > 0 { sj - si } else { si - sj };
        acc += nls_plain(gap);
    }
    acc
}

/// Sum over edges of the clamped logistic loss on status-score gaps.
pub fn status_loss<S: Scalar>(
    fused: &[Vec<S>],
    edges: &[SignedEdge],
    head_w: &[S],
    head_b: S,
) -> S {
    status_loss_from_scores(&status_scores(fused, head_w, head_b), edges)
}

/// `sign_loss + lambda * status_loss`.
pub fn total_loss<S: Scalar>(
    fused: &[Vec<S>],
    edges: &[SignedEdge],
    head_w: &[S],
    head_b: S,
    lambda: S,
) -> S {
    sign_loss(fused, edges) + lambda * status_loss(fused, edges, head_w, head_b)
}

/// Records both objectives on the tape over fused node tensors; returns
/// (sign, status, total) tensors. The status branch is left out of the total
/// when `lambda = 0`, detaching its gradients exactly.
pub fn loss_tape<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    blocks: &ModelBlocks,
    fused: &[Tid],
    edges: &[SignedEdge],
    lambda: S,
) -> (Tid, Tid, Tid) {
    let one = S::one();
    let mut sign_terms = Vec::with_capacity(edges.len());
    for e in edges {
        let d = tape.dot(fused[e.src as usize], fused[e.dst as usize]);
        let logit = if e.sign.value() > 0 {
            d
        } else {
            tape.weighted_sum(store, vec![Term { coeff: -one, alpha: None, x: d }], 1)
        };
        let term = tape.neg_log_sigmoid(logit);
        sign_terms.push(Term { coeff: one, alpha: None, x: term });
    }
    let sign = tape.weighted_sum(store, sign_terms, 1);

    let mut score: HashMap<NodeId, Tid> = HashMap::new();
    let mut node_score = |tape: &mut Tape<S>, v: NodeId| -> Tid {
        *score.entry(v).or_insert_with(|| {
            let pre = tape.affine_scalar(store, blocks.status_w, (blocks.status_b, 0), fused[v as usize]);
            tape.sigmoid(pre)
        })
    };
    let mut status_terms = Vec::with_capacity(edges.len());
    for e in edges {
        let si = node_score(tape, e.src);
        let sj = node_score(tape, e.dst);
        let (hi, lo) = if e.sign.value() > 0 { (sj, si) } else { (si, sj) };
        let gap = tape.weighted_sum(
            store,
            vec![
                Term { coeff: one, alpha: None, x: hi },
                Term { coeff: -one, alpha: None, x: lo },
            ],
            1,
        );
        let term = tape.neg_log_sigmoid(gap);
        status_terms.push(Term { coeff: one, alpha: None, x: term });
    }
    let status = tape.weighted_sum(store, status_terms, 1);

    let mut total_terms = vec![Term { coeff: one, alpha: None, x: sign }];
    if lambda != S::zero() {
        total_terms.push(Term { coeff: lambda, alpha: None, x: status });
    }
    let total = tape.weighted_sum(store, total_terms, 1);
    (sign, status, total)
}

/// Adam with decoupled weight decay and per-block trainable masks.
struct Adam<S> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    t: i32,
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
    weight_decay: S,
}

impl<S: Scalar> Adam<S> {
    fn new(store: &ParamStore<S>, cfg: &TrainConfig) -> Adam<S> {
        Adam {
            m: store.blocks().iter().map(|b| vec![S::zero(); b.data.len()]).collect(),
            v: store.blocks().iter().map(|b| vec![S::zero(); b.data.len()]).collect(),
            t: 0,
            lr: S::lit(cfg.learning_rate),
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
            eps: S::lit(1e-8),
            weight_decay: S::lit(cfg.weight_decay),
        }
    }

    fn step(&mut self, store: &mut ParamStore<S>, grads: &Grads<S>, trainable: &[bool]) {
        self.t += 1;
        let bc1 = S::one() - self.beta1.powi(self.t);
        let bc2 = S::one() - self.beta2.powi(self.t);
        for b in 0..trainable.len() {
            if !trainable[b] {
                continue;
            }
            let id = crate::tape::BlockId(b);
            let g = grads.block(id);
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            let data = &mut store.block_mut(id).data;
            for k in 0..data.len() {
                m[k] = self.beta1 * m[k] + (S::one() - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (S::one() - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                let old = data[k];
                data[k] = old
                    - self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * old);
            }
        }
    }
}

fn trainable_mask<S: Scalar>(params: &ModelParams<S>, cfg: &TrainConfig) -> Vec<bool> {
    let mut mask = vec![true; params.store.block_count()];
    if !cfg.learn_embeddings {
        mask[params.blocks.emb_pos.0] = false;
        mask[params.blocks.emb_neg.0] = false;
    }
    if !cfg.learn_attention {
        mask[params.blocks.alpha.0] = false;
    }
    mask
}

/// Trains the model full-batch: each epoch resamples neighborhoods, records
/// one forward pass and both losses on the tape, backpropagates, and takes
/// one Adam step. Returns the per-epoch loss trace. A non-finite loss aborts
/// with the offending epoch in the error.
pub fn fit<S: Scalar>(
    params: &mut ModelParams<S>,
    sampler: &mut dyn EpochSampler,
    ratios: &RatioTable,
    train_edges: &[SignedEdge],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLoss>> {
    if sampler.node_count() != params.shape.node_count {
        return Err(Error::Consistency(format!(
            "sampler covers {} nodes, model has {}",
            sampler.node_count(),
            params.shape.node_count
        )));
    }
    if cfg.lambda_status < 0.0 {
        return Err(Error::InvalidArg("status weight must be non-negative".into()));
    }
    for e in train_edges {
        if e.src as usize >= params.shape.node_count || e.dst as usize >= params.shape.node_count {
            return Err(Error::Consistency(format!("edge ({}, {}) outside node range", e.src, e.dst)));
        }
    }
    let lambda = S::lit(cfg.lambda_status);
    let mask = trainable_mask(params, cfg);
    let mut opt = Adam::new(&params.store, cfg);
    let mut tape = Tape::new();
    let mut grads = Grads::zeros_like(&params.store);
    let mut trace = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs {
        tape.clear();
        grads.reset();
        let samples = sampler.sample_epoch(epoch as u64)?;
        let halves =
            forward_tape(&mut tape, &params.store, &params.blocks, &params.shape, samples, ratios)?;
        let fused = fuse_all(&mut tape, &halves);
        let (sign, status, total) =
            loss_tape(&mut tape, &params.store, &params.blocks, &fused, train_edges, lambda);
        let loss = EpochLoss {
            epoch,
            sign: tape.scalar(sign).to_f64(),
            status: tape.scalar(status).to_f64(),
            total: tape.scalar(total).to_f64(),
        };
        if !loss.total.is_finite() {
            return Err(Error::Training(format!(
                "loss diverged at epoch {epoch}: sign {}, status {}, total {}",
                loss.sign, loss.status, loss.total
            )));
        }
        trace.push(loss);
        tape.backward(&params.store, total, &mut grads)?;
        opt.step(&mut params.store, &grads, &mask);
        if !params.store.all_finite() {
            return Err(Error::Training(format!(
                "parameters became non-finite after the step at epoch {epoch}"
            )));
        }
    }
    Ok(trace)
}

/// Fused embeddings for downstream use: one more sampled forward pass at the
/// epoch index following the last training epoch, so the neighborhood scale
/// matches what training saw.
pub fn inference_embeddings<S: Scalar>(
    params: &ModelParams<S>,
    sampler: &mut dyn EpochSampler,
    ratios: &RatioTable,
    epoch: u64,
) -> Result<Vec<Vec<S>>> {
    let samples = sampler.sample_epoch(epoch)?;
    crate::propagation::forward_embeddings(
        &params.store,
        &params.blocks,
        &params.shape,
        samples,
        ratios,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egonet::build_all_egonets;
    use crate::fextra::{partition_egonet, PartitionMode};
    use crate::graph::{Sign, SignedDigraph};
    use crate::propagation::{sample_partition, MaterializedSampler, SampledSets};

    fn edge(src: u32, dst: u32, sign: i8) -> SignedEdge {
        SignedEdge { src, dst, sign: if sign > 0 { Sign::Pos } else { Sign::Neg } }
    }

    #[test]
    fn orthogonal_embeddings_give_ln2_per_edge() {
        let fused = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let ln2 = std::f64::consts::LN_2;
        assert!((sign_loss(&fused, &[edge(0, 1, 1)]) - ln2).abs() < 1e-15);
        assert!((sign_loss(&fused, &[edge(0, 1, -1)]) - ln2).abs() < 1e-15);
        assert!((sign_loss(&fused, &[edge(0, 1, 1), edge(1, 0, -1)]) - 2.0 * ln2).abs() < 1e-15);
    }

    #[test]
    fn equal_status_scores_give_ln2_per_edge() {
        let fused = vec![vec![0.5, -0.25], vec![0.5, -0.25]];
        let w = vec![0.3, 0.7];
        let loss = status_loss(&fused, &[edge(0, 1, 1)], &w, 0.1);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn status_loss_matches_hand_arithmetic() {
        // s0 = sigmoid(0.2), s1 = sigmoid(0.9); positive edge 0->1 penalizes
        // -ln sigmoid(s1 - s0).
        let fused = vec![vec![0.2], vec![0.9]];
        let w = vec![1.0];
        let s0 = 1.0 / (1.0 + (-0.2f64).exp());
        let s1 = 1.0 / (1.0 + (-0.9f64).exp());
        let want = -(1.0 / (1.0 + (-(s1 - s0)).exp())).ln();
        let got = status_loss(&fused, &[edge(0, 1, 1)], &w, 0.0);
        assert!((got - want).abs() < 1e-15);
        // flipping the edge direction flips which node must outrank
        let flipped = status_loss(&fused, &[edge(1, 0, 1)], &w, 0.0);
        let want_flipped = -(1.0 / (1.0 + (s1 - s0).exp())).ln();
        assert!((flipped - want_flipped).abs() < 1e-15);
    }

    #[test]
    fn printed_form_equals_complement_form() {
        // -ln sigmoid(s_i - s_j) must equal -ln(1 - sigmoid(s_j - s_i)).
        let mut rng = crate::rng::stream(3, &[0x51]);
        for _ in 0..200 {
            let gap = crate::rng::symmetric_f64(&mut rng, 0.99);
            let printed = nls_plain(-gap);
            let complement = -(1.0 - 1.0 / (1.0 + (-gap).exp())).ln();
            assert!((printed - complement).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_is_affine_in_lambda() {
        let mut rng = crate::rng::stream(5, &[0x52]);
        let fused: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| crate::rng::symmetric_f64(&mut rng, 1.5)).collect())
            .collect();
        let w: Vec<f64> = (0..4).map(|_| crate::rng::symmetric_f64(&mut rng, 1.0)).collect();
        let edges = [edge(0, 1, 1), edge(2, 3, -1), edge(4, 5, 1), edge(1, 4, -1)];
        let s = sign_loss(&fused, &edges);
        let st = status_loss(&fused, &edges, &w, 0.2);
        for lambda in [0.0, 0.3, 1.0, 2.5] {
            let t = total_loss(&fused, &edges, &w, 0.2, lambda);
            assert_eq!(t, s + lambda * st);
        }
    }

    #[test]
    fn status_loss_depends_only_on_score_gaps() {
        let mut rng = crate::rng::stream(6, &[0x53]);
        let scores: Vec<f64> = (0..5).map(|_| crate::rng::unit_f64(&mut rng)).collect();
        let edges = [edge(0, 1, 1), edge(1, 2, -1), edge(3, 4, 1)];
        let base = status_loss_from_scores(&scores, &edges);
        for shift in [0.25, 1.0, -0.6] {
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let moved = status_loss_from_scores(&shifted, &edges);
            assert!((base - moved).abs() < 1e-12, "shift {shift}: {base} vs {moved}");
        }
    }

    fn toy_setup(
        seed: u64,
        d_half: usize,
        layers: usize,
    ) -> (SignedDigraph, ModelParams<f64>, Vec<SampledSets>, RatioTable) {
        let g = SignedDigraph::from_edges(
            6,
            &[(0, 1, 1), (1, 2, -1), (2, 3, 1), (3, 4, -1), (4, 5, 1), (5, 0, 1), (0, 3, -1), (2, 5, 1)],
        )
        .unwrap();
        let shape = ModelShape { node_count: 6, d_half, layers, hop_bound: 3 };
        let params = ModelParams::new(shape, seed);
        let fa = g.flag_adj();
        let samples: Vec<SampledSets> = build_all_egonets(&g, 3)
            .unwrap()
            .iter()
            .map(|ego| {
                let mode = if seed % 2 == 0 {
                    PartitionMode::Standard
                } else {
                    PartitionMode::AllTrustedActual
                };
                let part = partition_egonet(ego, None, &fa, 1.0, mode).unwrap();
                sample_partition(&part, Some(4), seed, 31)
            })
            .collect();
        (g, params, samples, RatioTable { pos_posterior: [0.85, 0.63, 0.93] })
    }

    #[test]
    fn tape_losses_equal_plain_losses() {
        for seed in 0..6u64 {
            let (g, params, samples, ratios) = toy_setup(seed, 3, 1);
            let mut tape = Tape::new();
            let halves = forward_tape(
                &mut tape,
                &params.store,
                &params.blocks,
                &params.shape,
                &samples,
                &ratios,
            )
            .unwrap();
            let fused_t = fuse_all(&mut tape, &halves);
            let (sig, stat, tot) = loss_tape(
                &mut tape,
                &params.store,
                &params.blocks,
                &fused_t,
                g.edges(),
                0.8,
            );
            let fused: Vec<Vec<f64>> =
                fused_t.iter().map(|&t| tape.value(t).to_vec()).collect();
            let (hw, hb) = params.status_head();
            assert_eq!(tape.scalar(sig), sign_loss(&fused, g.edges()));
            assert_eq!(tape.scalar(stat), status_loss(&fused, g.edges(), hw, hb));
            assert_eq!(tape.scalar(tot), total_loss(&fused, g.edges(), hw, hb, 0.8));
        }
    }

    #[test]
    fn gradients_match_finite_differences_end_to_end() {
        for seed in [1u64, 2, 5] {
            let (g, params, samples, ratios) = toy_setup(seed, 3, 1);
            let lambda = 0.7;
            let eval = |store: &ParamStore<f64>| -> f64 {
                let mut tape = Tape::new();
                let halves = forward_tape(
                    &mut tape,
                    store,
                    &params.blocks,
                    &params.shape,
                    &samples,
                    &ratios,
                )
                .unwrap();
                let fused = fuse_all(&mut tape, &halves);
                let (_, _, tot) =
                    loss_tape(&mut tape, store, &params.blocks, &fused, g.edges(), lambda);
                tape.scalar(tot)
            };
            let mut tape = Tape::new();
            let halves = forward_tape(
                &mut tape,
                &params.store,
                &params.blocks,
                &params.shape,
                &samples,
                &ratios,
            )
            .unwrap();
            let fused = fuse_all(&mut tape, &halves);
            let (_, _, tot) =
                loss_tape(&mut tape, &params.store, &params.blocks, &fused, g.edges(), lambda);
            let mut grads = Grads::zeros_like(&params.store);
            tape.backward(&params.store, tot, &mut grads).unwrap();

            let eps = 1e-5;
            for b in 0..params.store.block_count() {
                let id = crate::tape::BlockId(b);
                for k in 0..params.store.block(id).data.len() {
                    let mut plus = params.store.clone();
                    plus.block_mut(id).data[k] += eps;
                    let mut minus = params.store.clone();
                    minus.block_mut(id).data[k] -= eps;
                    let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                    let an = grads.block(id)[k];
                    let denom = fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom < 1e-4,
                        "seed {seed} block {} entry {k}: fd {fd} analytic {an}",
                        params.store.block(id).name
                    );
                }
            }
        }
    }

    #[test]
    fn zero_lambda_detaches_status_head() {
        let (g, params, samples, ratios) = toy_setup(2, 3, 1);
        let mut tape = Tape::new();
        let halves = forward_tape(
            &mut tape,
            &params.store,
            &params.blocks,
            &params.shape,
            &samples,
            &ratios,
        )
        .unwrap();
        let fused = fuse_all(&mut tape, &halves);
        let (_, _, tot) =
            loss_tape(&mut tape, &params.store, &params.blocks, &fused, g.edges(), 0.0);
        let mut grads = Grads::zeros_like(&params.store);
        tape.backward(&params.store, tot, &mut grads).unwrap();
        assert!(grads.block(params.blocks.status_w).iter().all(|&g| g == 0.0));
        assert!(grads.block(params.blocks.status_b).iter().all(|&g| g == 0.0));
        // the sign branch still trains
        assert!(grads.block(params.blocks.emb_pos).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn duplicate_edge_doubles_its_gradient() {
        let (g, params, samples, ratios) = toy_setup(4, 2, 1);
        let run = |edges: &[SignedEdge]| -> Vec<f64> {
            let mut tape = Tape::new();
            let halves = forward_tape(
                &mut tape,
                &params.store,
                &params.blocks,
                &params.shape,
                &samples,
                &ratios,
            )
            .unwrap();
            let fused = fuse_all(&mut tape, &halves);
            let (_, _, tot) =
                loss_tape(&mut tape, &params.store, &params.blocks, &fused, edges, 0.5);
            let mut grads = Grads::zeros_like(&params.store);
            tape.backward(&params.store, tot, &mut grads).unwrap();
            grads.block(params.blocks.emb_pos).to_vec()
        };
        let _ = g;
        let single = run(&[edge(0, 1, 1)]);
        let double = run(&[edge(0, 1, 1), edge(0, 1, 1)]);
        for (s, d) in single.iter().zip(&double) {
            assert!((2.0 * s - d).abs() < 1e-14);
        }
    }

    #[test]
    fn fit_converges_on_a_single_positive_edge() {
        let g = SignedDigraph::from_edges(2, &[(0, 1, 1)]).unwrap();
        let shape = ModelShape { node_count: 2, d_half: 4, layers: 1, hop_bound: 3 };
        let mut params: ModelParams<f64> = ModelParams::new(shape, 7);
        let fa = g.flag_adj();
        let parts = build_all_egonets(&g, 3)
            .unwrap()
            .iter()
            .map(|e| partition_egonet(e, None, &fa, 1.0, PartitionMode::Standard).unwrap())
            .collect();
        let mut sampler = MaterializedSampler::new(parts, Some(30), 7).unwrap();
        let cfg = TrainConfig { epochs: 200, lambda_status: 1.0, ..Default::default() };
        let trace = fit(&mut params, &mut sampler, &RatioTable::uniform(), g.edges(), &cfg).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(trace.iter().all(|l| l.total.is_finite()));
        let fused = inference_embeddings(&params, &mut sampler, &RatioTable::uniform(), 200).unwrap();
        let dot: f64 = fused[0].iter().zip(&fused[1]).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-dot).exp());
        assert!(p >= 0.9, "edge probability only reached {p}");
        // loss should have dropped substantially
        assert!(trace.last().unwrap().total < 0.5 * trace[0].total);
    }

    #[test]
    fn fit_is_bit_deterministic() {
        let run = || {
            let (g, mut params, _, ratios) = toy_setup(6, 3, 1);
            let fa = g.flag_adj();
            let parts = build_all_egonets(&g, 3)
                .unwrap()
                .iter()
                .map(|e| partition_egonet(e, None, &fa, 1.0, PartitionMode::Standard).unwrap())
                .collect();
            let mut sampler = MaterializedSampler::new(parts, Some(3), 6).unwrap();
            let cfg = TrainConfig { epochs: 25, ..Default::default() };
            let trace = fit(&mut params, &mut sampler, &ratios, g.edges(), &cfg).unwrap();
            (params, trace)
        };
        let (p1, t1) = run();
        let (p2, t2) = run();
        assert_eq!(t1, t2);
        for b in 0..p1.store.block_count() {
            let id = crate::tape::BlockId(b);
            assert_eq!(p1.store.block(id).data, p2.store.block(id).data);
        }
    }

    #[test]
    fn frozen_blocks_stay_put() {
        let (g, mut params, _, ratios) = toy_setup(8, 3, 1);
        let fa = g.flag_adj();
        let parts = build_all_egonets(&g, 3)
            .unwrap()
            .iter()
            .map(|e| partition_egonet(e, None, &fa, 1.0, PartitionMode::AllTrustedActual).unwrap())
            .collect();
        let mut sampler = MaterializedSampler::new(parts, Some(3), 8).unwrap();
        let emb_before = params.store.block(params.blocks.emb_pos).data.clone();
        let cfg = TrainConfig {
            epochs: 10,
            learn_attention: false,
            learn_embeddings: false,
            ..Default::default()
        };
        fit(&mut params, &mut sampler, &ratios, g.edges(), &cfg).unwrap();
        assert_eq!(params.store.block(params.blocks.emb_pos).data, emb_before);
        assert!(params
            .store
            .block(params.blocks.alpha)
            .data
            .iter()
            .all(|&a| a == 1.0));
        // weights did move
        let (_, params2, _, _) = toy_setup(8, 3, 1);
        assert_ne!(
            params.store.block(params.blocks.w_pos[0]).data,
            params2.store.block(params2.blocks.w_pos[0]).data
        );
    }
}
