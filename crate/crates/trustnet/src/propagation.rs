//! Trust-aware embedding propagation.
//!
//! Every node carries a positive and a negative embedding half. Per epoch,
//! each center samples up to `gamma` ego-edges from each of its four
//! partition sets. Trusted sets route polarities directly (friendly signals
//! reinforce the same polarity, hostile signals the opposite); untrusted sets
//! split each embedding across both polarities according to the empirical
//! triangle-closure ratios. Messages pass through per-layer weight matrices
//! and a logistic activation, then update the center residually, normalized
//! by the sampled signed degree. The final output fuses both halves by
//! concatenation.

use crate::fextra::{TrustPartition, SET_T_NEG, SET_T_POS, SET_U_NEG, SET_U_POS};
use crate::graph::{NodeId, Sign};
use crate::rng::{self, tag};
use crate::scalar::{sigmoid, Scalar};
use crate::tape::{BlockId, ParamStore, Tape, Term, Tid};
use crate::triads::RatioTable;
use crate::{Error, Result};

/// Structural dimensions of the model.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub node_count: usize,
    /// Half-dimension; the fused embedding has length `2 * d_half`.
    pub d_half: usize,
    /// Message-passing layers (H).
    pub layers: usize,
    /// Maximum ego path length; one attention scalar per length `1..=hop_bound`.
    pub hop_bound: u8,
}

impl ModelShape {
    pub fn fused_dim(&self) -> usize {
        2 * self.d_half
    }
}

/// Parameter-block handles for one model instance.
#[derive(Clone, Debug)]
pub struct ModelBlocks {
    pub emb_pos: BlockId,
    pub emb_neg: BlockId,
    /// One matrix per layer.
    pub w_pos: Vec<BlockId>,
    pub w_neg: Vec<BlockId>,
    /// 1 x hop_bound row; entry `p - 1` weights path length `p`.
    pub alpha: BlockId,
    /// Status head: 1 x fused_dim row plus scalar bias.
    pub status_w: BlockId,
    pub status_b: BlockId,
}

/// Allocates and initializes all learnable blocks: embeddings and weight
/// matrices element-wise uniform in ±sqrt(6 / (fan_in + fan_out)), attention
/// scalars at 1, status bias at 0.
pub fn build_params<S: Scalar>(shape: &ModelShape, seed: u64) -> (ParamStore<S>, ModelBlocks) {
    let mut store = ParamStore::new();
    let d = shape.fused_dim();
    let emb_pos = store.add_block("emb_pos", shape.node_count, shape.d_half);
    let emb_neg = store.add_block("emb_neg", shape.node_count, shape.d_half);
    let mut w_pos = Vec::with_capacity(shape.layers);
    let mut w_neg = Vec::with_capacity(shape.layers);
    for h in 1..=shape.layers {
        w_pos.push(store.add_block(&format!("w_pos_{h}"), shape.d_half, shape.d_half));
        w_neg.push(store.add_block(&format!("w_neg_{h}"), shape.d_half, shape.d_half));
    }
    let alpha = store.add_block("alpha", 1, shape.hop_bound as usize);
    let status_w = store.add_block("status_w", 1, d);
    let status_b = store.add_block("status_b", 1, 1);

    let uniform_fill = |store: &mut ParamStore<S>, id: BlockId, bound: f64, stream_tag: u64| {
        let mut rng = rng::stream(seed, &[tag::INIT, stream_tag]);
        for v in store.block_mut(id).data.iter_mut() {
            *v = S::lit(rng::symmetric_f64(&mut rng, bound));
        }
    };
    let emb_bound = (6.0 / d as f64).sqrt();
    uniform_fill(&mut store, emb_pos, emb_bound, 0);
    uniform_fill(&mut store, emb_neg, emb_bound, 1);
    let w_bound = (6.0 / d as f64).sqrt();
    for (h, (&wp, &wn)) in w_pos.iter().zip(&w_neg).enumerate() {
        uniform_fill(&mut store, wp, w_bound, 2 + 2 * h as u64);
        uniform_fill(&mut store, wn, w_bound, 3 + 2 * h as u64);
    }
    for v in store.block_mut(alpha).data.iter_mut() {
        *v = S::one();
    }
    uniform_fill(&mut store, status_w, (6.0 / (d + 1) as f64).sqrt(), 1000);
    // status bias stays zero

    let blocks = ModelBlocks { emb_pos, emb_neg, w_pos, w_neg, alpha, status_w, status_b };
    (store, blocks)
}

/// One sampled ego-edge group: `copies` co-sampled edges sharing neighbor,
/// path length, and partition set.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SampledGroup {
    pub neighbor: NodeId,
    pub path_len: u8,
    pub copies: u32,
}

/// One epoch's sampled neighborhood for a center.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampledSets {
    pub center: NodeId,
    pub sets: [Vec<SampledGroup>; 4],
    /// Sampled edges with positive sign (trusted or not).
    pub d_pos: u32,
    /// Sampled edges with negative sign.
    pub d_neg: u32,
}

impl SampledSets {
    /// Restores the canonical (neighbor, path length) group order that the
    /// samplers produce; messages sum in this order.
    pub fn canonicalize(&mut self) {
        for set in &mut self.sets {
            set.sort_by_key(|g| ((g.neighbor as u64) << 8) | g.path_len as u64);
        }
    }

    pub fn sampled_total(&self) -> u64 {
        (self.d_pos + self.d_neg) as u64
    }
}

/// Draws min(gamma, set size) edges uniformly without replacement from each
/// of the four sets, independently; `gamma = None` keeps every edge. The
/// stream is keyed by (seed, center, epoch, set), so results do not depend on
/// the order centers are visited.
pub fn sample_partition(
    part: &TrustPartition,
    gamma: Option<u32>,
    seed: u64,
    epoch: u64,
) -> SampledSets {
    let mut out = SampledSets { center: part.center, ..Default::default() };
    for (si, set) in part.sets.iter().enumerate() {
        let total = set.total();
        let take = gamma.map_or(total, |g| (g as u64).min(total));
        if take > 0 {
            let groups = &mut out.sets[si];
            if take == total {
                groups.extend(
                    set.iter().map(|(neighbor, path_len, copies)| SampledGroup {
                        neighbor,
                        path_len,
                        copies,
                    }),
                );
            } else {
                let mut r =
                    rng::stream(seed, &[tag::SAMPLE, part.center as u64, epoch, si as u64]);
                let picks = rng::sample_indices(&mut r, total, take as usize);
                for pick in picks {
                    let g = set.locate(pick);
                    let (neighbor, path_len, _) = set.get(g);
                    match groups.last_mut() {
                        Some(last) if last.neighbor == neighbor && last.path_len == path_len => {
                            last.copies += 1
                        }
                        _ => groups.push(SampledGroup { neighbor, path_len, copies: 1 }),
                    }
                }
            }
            let take = take as u32;
            if si == SET_T_POS || si == SET_U_POS {
                out.d_pos += take;
            } else {
                out.d_neg += take;
            }
        }
    }
    out
}

/// Produces each epoch's sampled neighborhoods for every center.
pub trait EpochSampler {
    fn node_count(&self) -> usize;
    /// Sampled sets for the given epoch, indexed by center id.
    fn sample_epoch(&mut self, epoch: u64) -> Result<&[SampledSets]>;
}

/// Sampler over fully materialized partitions (all centers resident).
pub struct MaterializedSampler {
    partitions: Vec<TrustPartition>,
    gamma: Option<u32>,
    seed: u64,
    buf: Vec<SampledSets>,
}

impl MaterializedSampler {
    /// `partitions` must be indexed by center id (one per node).
    pub fn new(partitions: Vec<TrustPartition>, gamma: Option<u32>, seed: u64) -> Result<Self> {
        for (i, p) in partitions.iter().enumerate() {
            if p.center as usize != i {
                return Err(Error::Consistency(format!(
                    "partition at index {i} has center {}",
                    p.center
                )));
            }
        }
        Ok(MaterializedSampler { partitions, gamma, seed, buf: Vec::new() })
    }

    pub fn partitions(&self) -> &[TrustPartition] {
        &self.partitions
    }

    /// Recovers the partitions, e.g. to rebuild with a different cap.
    pub fn into_partitions(self) -> Vec<TrustPartition> {
        self.partitions
    }
}

impl EpochSampler for MaterializedSampler {
    fn node_count(&self) -> usize {
        self.partitions.len()
    }

    fn sample_epoch(&mut self, epoch: u64) -> Result<&[SampledSets]> {
        self.buf.clear();
        self.buf.reserve(self.partitions.len());
        for p in &self.partitions {
            self.buf.push(sample_partition(p, self.gamma, self.seed, epoch));
        }
        Ok(&self.buf)
    }
}

/// Per-node tensor handles for one layer's embedding halves.
#[derive(Clone, Debug, Default)]
pub struct LayerTids {
    pub pos: Vec<Tid>,
    pub neg: Vec<Tid>,
}

fn message<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    w: BlockId,
    terms: Vec<Term<S>>,
    d_half: usize,
) -> Tid {
    let pre = tape.weighted_sum(store, terms, d_half);
    let lin = tape.mat_vec(store, w, pre);
    tape.sigmoid(lin)
}

/// Records one message-passing layer for one center on the tape and returns
/// its updated (positive, negative) embedding tensors. Inputs are the
/// previous layer's per-node tensors.
fn node_update<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    blocks: &ModelBlocks,
    layer: usize,
    ratios: &RatioTable,
    d_half: usize,
    sets: &SampledSets,
    prev: &LayerTids,
) -> (Tid, Tid) {
    let center = sets.center as usize;
    let mut t_pos: Vec<Term<S>> = Vec::new();
    let mut t_neg: Vec<Term<S>> = Vec::new();
    let mut u_pos: Vec<Term<S>> = Vec::new();
    let mut u_neg: Vec<Term<S>> = Vec::new();
    for (si, set) in sets.sets.iter().enumerate() {
        for g in set {
            let alpha = Some((blocks.alpha, (g.path_len - 1) as usize));
            let copies = S::lit(g.copies as f64);
            let vp = prev.pos[g.neighbor as usize];
            let vn = prev.neg[g.neighbor as usize];
            match si {
                SET_T_POS => {
                    t_pos.push(Term { coeff: copies, alpha, x: vp });
                    t_neg.push(Term { coeff: copies, alpha, x: vn });
                }
                SET_T_NEG => {
                    t_pos.push(Term { coeff: copies, alpha, x: vn });
                    t_neg.push(Term { coeff: copies, alpha, x: vp });
                }
                _ => {
                    // Untrusted: edge sign b, embedding polarity a, each
                    // (a, b) pair splits across both message polarities by
                    // the closure ratio r(a, b, c).
                    let b = if si == SET_U_POS { Sign::Pos } else { Sign::Neg };
                    for (a, x) in [(Sign::Pos, vp), (Sign::Neg, vn)] {
                        let to_pos = ratios.r(a, b, Sign::Pos);
                        if to_pos != 0.0 {
                            u_pos.push(Term { coeff: copies * S::lit(to_pos), alpha, x });
                        }
                        let to_neg = ratios.r(a, b, Sign::Neg);
                        if to_neg != 0.0 {
                            u_neg.push(Term { coeff: copies * S::lit(to_neg), alpha, x });
                        }
                    }
                }
            }
        }
    }
    let has_t = !(sets.sets[SET_T_POS].is_empty() && sets.sets[SET_T_NEG].is_empty());
    let has_u = !(sets.sets[SET_U_POS].is_empty() && sets.sets[SET_U_NEG].is_empty());

    let mut out = [prev.pos[center], prev.neg[center]];
    for (polarity, (w, (terms_t, terms_u))) in [
        (blocks.w_pos[layer], (t_pos, u_pos)),
        (blocks.w_neg[layer], (t_neg, u_neg)),
    ]
    .into_iter()
    .enumerate()
    {
        let degree = if polarity == 0 { sets.d_pos } else { sets.d_neg };
        if degree == 0 {
            continue; // update skipped entirely; embedding carried over
        }
        let inv = S::lit(1.0 / degree as f64);
        let mut agg = vec![Term { coeff: S::one(), alpha: None, x: out[polarity] }];
        if has_t {
            let m = message(tape, store, w, terms_t, d_half);
            agg.push(Term { coeff: inv, alpha: None, x: m });
        }
        if has_u {
            let m = message(tape, store, w, terms_u, d_half);
            agg.push(Term { coeff: inv, alpha: None, x: m });
        }
        out[polarity] = tape.weighted_sum(store, agg, d_half);
    }
    (out[0], out[1])
}

/// Runs all layers for every node on the tape (synchronous updates: layer h
/// reads only layer h-1 tensors) and returns the final per-node halves.
pub fn forward_tape<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    blocks: &ModelBlocks,
    shape: &ModelShape,
    samples: &[SampledSets],
    ratios: &RatioTable,
) -> Result<LayerTids> {
    if samples.len() != shape.node_count {
        return Err(Error::Consistency(format!(
            "{} sampled neighborhoods for {} nodes",
            samples.len(),
            shape.node_count
        )));
    }
    let mut cur = LayerTids {
        pos: (0..shape.node_count).map(|i| tape.leaf(store, blocks.emb_pos, i)).collect(),
        neg: (0..shape.node_count).map(|i| tape.leaf(store, blocks.emb_neg, i)).collect(),
    };
    for layer in 0..shape.layers {
        let mut next = LayerTids {
            pos: Vec::with_capacity(shape.node_count),
            neg: Vec::with_capacity(shape.node_count),
        };
        for s in samples {
            let (p, n) =
                node_update(tape, store, blocks, layer, ratios, shape.d_half, s, &cur);
            next.pos.push(p);
            next.neg.push(n);
        }
        cur = next;
    }
    Ok(cur)
}

/// Concatenates each node's halves into its fused embedding tensor.
pub fn fuse_all<S: Scalar>(tape: &mut Tape<S>, halves: &LayerTids) -> Vec<Tid> {
    halves
        .pos
        .iter()
        .zip(&halves.neg)
        .map(|(&p, &n)| tape.concat2(p, n))
        .collect()
}

/// Convenience wrapper: one full forward pass returning plain fused vectors.
pub fn forward_embeddings<S: Scalar>(
    store: &ParamStore<S>,
    blocks: &ModelBlocks,
    shape: &ModelShape,
    samples: &[SampledSets],
    ratios: &RatioTable,
) -> Result<Vec<Vec<S>>> {
    let mut tape = Tape::new();
    let halves = forward_tape(&mut tape, store, blocks, shape, samples, ratios)?;
    let fused = fuse_all(&mut tape, &halves);
    Ok(fused.into_iter().map(|t| tape.value(t).to_vec()).collect())
}

// --- value-space forward ---------------------------------------------------
//
// The helpers below re-evaluate the taped operations on plain vectors, in the
// same term order and with the same accumulation sequence, so their results
// are bit-identical to reading the corresponding tape values. They must stay
// in lockstep with `node_update` / `Tape::weighted_sum` / `Tape::mat_vec`
// (the `streamed_readout_matches_the_taped_forward_bit_for_bit` test holds
// the two paths together).

/// Value-space twin of [`Term`]: `coeff * alpha? * x` over a borrowed vector.
struct ValueTerm<'a, S> {
    coeff: S,
    alpha: Option<(BlockId, usize)>,
    x: &'a [S],
}

fn add_scaled<S: Scalar>(acc: &mut [S], scale: S, x: &[S]) {
    for (v, xv) in acc.iter_mut().zip(x) {
        *v += scale * *xv;
    }
}

fn weighted_sum_values<S: Scalar>(
    store: &ParamStore<S>,
    terms: &[ValueTerm<'_, S>],
    len: usize,
) -> Vec<S> {
    let mut value = vec![S::zero(); len];
    for t in terms {
        let scale = match t.alpha {
            Some((b, k)) => t.coeff * store.block(b).data[k],
            None => t.coeff,
        };
        add_scaled(&mut value, scale, t.x);
    }
    value
}

fn mat_vec_values<S: Scalar>(store: &ParamStore<S>, w: BlockId, x: &[S]) -> Vec<S> {
    let wb = store.block(w);
    debug_assert_eq!(wb.cols, x.len(), "mat_vec shape mismatch");
    let mut value = vec![S::zero(); wb.rows];
    for (r, out) in value.iter_mut().enumerate() {
        let row = wb.row(r);
        let mut acc = S::zero();
        for (a, b) in row.iter().zip(x) {
            acc += *a * *b;
        }
        *out = acc;
    }
    value
}

fn message_values<S: Scalar>(
    store: &ParamStore<S>,
    w: BlockId,
    terms: &[ValueTerm<'_, S>],
    d_half: usize,
) -> Vec<S> {
    let pre = weighted_sum_values(store, terms, d_half);
    let lin = mat_vec_values(store, w, &pre);
    lin.iter().map(|&v| sigmoid(v)).collect()
}

/// Value-space twin of [`node_update`]: same term construction, same skip
/// rules, same accumulation order.
fn node_update_values<S: Scalar>(
    store: &ParamStore<S>,
    blocks: &ModelBlocks,
    layer: usize,
    ratios: &RatioTable,
    d_half: usize,
    sets: &SampledSets,
    prev_pos: &[Vec<S>],
    prev_neg: &[Vec<S>],
) -> (Vec<S>, Vec<S>) {
    let center = sets.center as usize;
    let mut t_pos: Vec<ValueTerm<'_, S>> = Vec::new();
    let mut t_neg: Vec<ValueTerm<'_, S>> = Vec::new();
    let mut u_pos: Vec<ValueTerm<'_, S>> = Vec::new();
    let mut u_neg: Vec<ValueTerm<'_, S>> = Vec::new();
    for (si, set) in sets.sets.iter().enumerate() {
        for g in set {
            let alpha = Some((blocks.alpha, (g.path_len - 1) as usize));
            let copies = S::lit(g.copies as f64);
            let vp: &[S] = &prev_pos[g.neighbor as usize];
            let vn: &[S] = &prev_neg[g.neighbor as usize];
            match si {
                SET_T_POS => {
                    t_pos.push(ValueTerm { coeff: copies, alpha, x: vp });
                    t_neg.push(ValueTerm { coeff: copies, alpha, x: vn });
                }
                SET_T_NEG => {
                    t_pos.push(ValueTerm { coeff: copies, alpha, x: vn });
                    t_neg.push(ValueTerm { coeff: copies, alpha, x: vp });
                }
                _ => {
                    let b = if si == SET_U_POS { Sign::Pos } else { Sign::Neg };
                    for (a, x) in [(Sign::Pos, vp), (Sign::Neg, vn)] {
                        let to_pos = ratios.r(a, b, Sign::Pos);
                        if to_pos != 0.0 {
                            u_pos.push(ValueTerm { coeff: copies * S::lit(to_pos), alpha, x });
                        }
                        let to_neg = ratios.r(a, b, Sign::Neg);
                        if to_neg != 0.0 {
                            u_neg.push(ValueTerm { coeff: copies * S::lit(to_neg), alpha, x });
                        }
                    }
                }
            }
        }
    }
    let has_t = !(sets.sets[SET_T_POS].is_empty() && sets.sets[SET_T_NEG].is_empty());
    let has_u = !(sets.sets[SET_U_POS].is_empty() && sets.sets[SET_U_NEG].is_empty());

    let mut out = [prev_pos[center].clone(), prev_neg[center].clone()];
    for (polarity, (w, (terms_t, terms_u))) in [
        (blocks.w_pos[layer], (t_pos, u_pos)),
        (blocks.w_neg[layer], (t_neg, u_neg)),
    ]
    .into_iter()
    .enumerate()
    {
        let degree = if polarity == 0 { sets.d_pos } else { sets.d_neg };
        if degree == 0 {
            continue; // update skipped entirely; embedding carried over
        }
        let inv = S::lit(1.0 / degree as f64);
        let mut acc = vec![S::zero(); d_half];
        add_scaled(&mut acc, S::one(), &out[polarity]);
        if has_t {
            let m = message_values(store, w, &terms_t, d_half);
            add_scaled(&mut acc, inv, &m);
        }
        if has_u {
            let m = message_values(store, w, &terms_u, d_half);
            add_scaled(&mut acc, inv, &m);
        }
        out[polarity] = acc;
    }
    let [p, n] = out;
    (p, n)
}

/// Full forward pass evaluated in value space, drawing each center's sets on
/// the fly and dropping them as soon as that center's update is computed.
/// Bit-identical to taping the same pass and reading the fused values, but
/// nothing is recorded — which is what makes an uncapped read-out of the
/// larger materialized datasets affordable: their partitions expand to tens
/// of millions of groups, and as tape terms those dominate memory.
///
/// Draws depend only on (seed, center, epoch, set), so re-drawing per layer
/// is bit-identical to drawing once and reusing across layers.
pub fn streamed_embeddings<S: Scalar>(
    store: &ParamStore<S>,
    blocks: &ModelBlocks,
    shape: &ModelShape,
    partitions: &[TrustPartition],
    gamma: Option<u32>,
    ratios: &RatioTable,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<S>>> {
    if partitions.len() != shape.node_count {
        return Err(Error::Consistency(format!(
            "{} partitions for {} nodes",
            partitions.len(),
            shape.node_count
        )));
    }
    let mut pos: Vec<Vec<S>> = (0..shape.node_count)
        .map(|i| store.block(blocks.emb_pos).row(i).to_vec())
        .collect();
    let mut neg: Vec<Vec<S>> = (0..shape.node_count)
        .map(|i| store.block(blocks.emb_neg).row(i).to_vec())
        .collect();
    for layer in 0..shape.layers {
        let mut next_pos = Vec::with_capacity(shape.node_count);
        let mut next_neg = Vec::with_capacity(shape.node_count);
        for part in partitions {
            let s = sample_partition(part, gamma, seed, epoch);
            let (p, n) =
                node_update_values(store, blocks, layer, ratios, shape.d_half, &s, &pos, &neg);
            next_pos.push(p);
            next_neg.push(n);
        }
        pos = next_pos;
        neg = next_neg;
    }
    Ok(pos
        .into_iter()
        .zip(neg)
        .map(|(mut p, n)| {
            p.extend_from_slice(&n);
            p
        })
        .collect())
}
