//! Reverse-mode automatic differentiation over a small fixed op set.
//!
//! Parameters live in a [`ParamStore`] of named dense blocks; a [`Tape`]
//! records the forward computation eagerly (values are available as nodes are
//! pushed) and [`Tape::backward`] accumulates exact gradients for every block.
//! The op set is exactly what signed message passing and the paired
//! logistic losses need: leaf rows, linear combinations with optional
//! learnable scalar weights, matrix-vector products, sigmoids, concatenation,
//! inner products, an affine scalar head, and a clamped negative-log-sigmoid.
//! Clamped loss terms have zero gradient inside the clamp region.

use std::collections::HashMap;

use crate::scalar::{sigmoid, Scalar};
use crate::{Error, Result};

/// Probability clamp for log arguments: [1e-7, 1 - 1e-7].
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to one named parameter block.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockId(pub usize);

/// One dense parameter matrix.
#[derive(Clone, Debug)]
pub struct Block<S> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Block<S> {
    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Named dense parameter blocks; the single owner of all learnable state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    blocks: Vec<Block<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> ParamStore<S> {
        ParamStore { blocks: Vec::new() }
    }

    pub fn add_block(&mut self, name: &str, rows: usize, cols: usize) -> BlockId {
        self.blocks.push(Block {
            name: name.to_string(),
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        });
        BlockId(self.blocks.len() - 1)
    }

    #[inline]
    pub fn block(&self, id: BlockId) -> &Block<S> {
        &self.blocks[id.0]
    }

    #[inline]
    pub fn block_mut(&mut self, id: BlockId) -> &mut Block<S> {
        &mut self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[Block<S>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    /// True when every parameter is finite.
    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Grads<S> {
    blocks: Vec<Vec<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(store: &ParamStore<S>) -> Grads<S> {
        Grads { blocks: store.blocks.iter().map(|b| vec![S::zero(); b.data.len()]).collect() }
    }

    pub fn reset(&mut self) {
        for b in &mut self.blocks {
            b.fill(S::zero());
        }
    }

    #[inline]
    pub fn block(&self, id: BlockId) -> &[S] {
        &self.blocks[id.0]
    }

    #[inline]
    pub fn block_mut(&mut self, id: BlockId) -> &mut [S] {
        &mut self.blocks[id.0]
    }
}

/// Handle to one tape tensor.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Tid(u32);

/// One term of a linear combination: `coeff * alpha? * x`.
#[derive(Clone, Debug)]
pub struct Term<S> {
    pub coeff: S,
    /// Optional learnable scalar multiplier, addressed as (block, flat index).
    pub alpha: Option<(BlockId, usize)>,
    pub x: Tid,
}

#[derive(Clone, Debug)]
enum Node<S> {
    Leaf { block: BlockId, row: u32 },
    Zeros,
    WeightedSum { terms: Vec<Term<S>> },
    MatVec { w: BlockId, x: Tid },
    SigmoidVec { x: Tid },
    Concat2 { a: Tid, b: Tid },
    Dot { a: Tid, b: Tid },
    AffineScalar { w: BlockId, bias: (BlockId, usize), x: Tid },
    NegLogSigmoid { x: Tid },
}

/// Eager forward tape: pushing a node computes its value immediately.
#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    values: Vec<Vec<S>>,
    leaf_ids: HashMap<(usize, u32), Tid>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Tape<S> {
        Tape { nodes: Vec::new(), values: Vec::new(), leaf_ids: HashMap::new() }
    }

    /// Drops all nodes but keeps allocated capacity for the next epoch.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.leaf_ids.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, t: Tid) -> &[S] {
        &self.values[t.0 as usize]
    }

    /// Value of a length-1 tensor.
    #[inline]
    pub fn scalar(&self, t: Tid) -> S {
        debug_assert_eq!(self.values[t.0 as usize].len(), 1);
        self.values[t.0 as usize][0]
    }

    fn push(&mut self, node: Node<S>, value: Vec<S>) -> Tid {
        let id = Tid(self.nodes.len() as u32);
        self.nodes.push(node);
        self.values.push(value);
        id
    }

    /// One parameter row as a leaf tensor; repeated requests for the same row
    /// return the same tensor.
    pub fn leaf(&mut self, store: &ParamStore<S>, block: BlockId, row: usize) -> Tid {
        if let Some(&id) = self.leaf_ids.get(&(block.0, row as u32)) {
            return id;
        }
        let value = store.block(block).row(row).to_vec();
        let id = self.push(Node::Leaf { block, row: row as u32 }, value);
        self.leaf_ids.insert((block.0, row as u32), id);
        id
    }

    pub fn zeros(&mut self, len: usize) -> Tid {
        self.push(Node::Zeros, vec![S::zero(); len])
    }

    /// `sum_k coeff_k * alpha_k? * x_k`; empty input yields a zero vector.
    pub fn weighted_sum(&mut self, store: &ParamStore<S>, terms: Vec<Term<S>>, len: usize) -> Tid {
        if terms.is_empty() {
            return self.zeros(len);
        }
        let mut value = vec![S::zero(); len];
        for t in &terms {
            let x = &self.values[t.x.0 as usize];
            debug_assert_eq!(x.len(), len, "weighted_sum term length mismatch");
            let scale = match t.alpha {
                Some((b, k)) => t.coeff * store.block(b).data[k],
                None => t.coeff,
            };
            for (v, xv) in value.iter_mut().zip(x) {
                *v += scale * *xv;
            }
        }
        self.push(Node::WeightedSum { terms }, value)
    }

    /// `W x` for a parameter matrix W.
    pub fn mat_vec(&mut self, store: &ParamStore<S>, w: BlockId, x: Tid) -> Tid {
        let wb = store.block(w);
        let xv = &self.values[x.0 as usize];
        debug_assert_eq!(wb.cols, xv.len(), "mat_vec shape mismatch");
        let mut value = vec![S::zero(); wb.rows];
        for (r, out) in value.iter_mut().enumerate() {
            let row = wb.row(r);
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(xv) {
                acc += *a * *b;
            }
            *out = acc;
        }
        self.push(Node::MatVec { w, x }, value)
    }

    /// Element-wise logistic function.
    pub fn sigmoid(&mut self, x: Tid) -> Tid {
        let value: Vec<S> = self.values[x.0 as usize].iter().map(|&v| sigmoid(v)).collect();
        self.push(Node::SigmoidVec { x }, value)
    }

    /// Concatenation `a ++ b`.
    pub fn concat2(&mut self, a: Tid, b: Tid) -> Tid {
        let mut value = self.values[a.0 as usize].clone();
        value.extend_from_slice(&self.values[b.0 as usize]);
        self.push(Node::Concat2 { a, b }, value)
    }

    /// Inner product (length-1 result).
    pub fn dot(&mut self, a: Tid, b: Tid) -> Tid {
        let av = &self.values[a.0 as usize];
        let bv = &self.values[b.0 as usize];
        debug_assert_eq!(av.len(), bv.len(), "dot length mismatch");
        let mut acc = S::zero();
        for (x, y) in av.iter().zip(bv) {
            acc += *x * *y;
        }
        self.push(Node::Dot { a, b }, vec![acc])
    }

    /// `w . x + bias` where `w` is a 1 x len parameter block (length-1 result).
    pub fn affine_scalar(
        &mut self,
        store: &ParamStore<S>,
        w: BlockId,
        bias: (BlockId, usize),
        x: Tid,
    ) -> Tid {
        let wb = store.block(w);
        let xv = &self.values[x.0 as usize];
        debug_assert_eq!(wb.data.len(), xv.len(), "affine_scalar shape mismatch");
        let mut acc = store.block(bias.0).data[bias.1];
        for (a, b) in wb.data.iter().zip(xv) {
            acc += *a * *b;
        }
        self.push(Node::AffineScalar { w, bias, x }, vec![acc])
    }

    /// `-ln(clamp(sigmoid(x)))` for a length-1 logit; zero gradient when the
    /// probability is clamped.
    pub fn neg_log_sigmoid(&mut self, x: Tid) -> Tid {
        let p = sigmoid(self.scalar(x));
        let lo = S::lit(PROB_CLAMP);
        let hi = S::one() - lo;
        let clamped = if p < lo {
            lo
        } else if p > hi {
            hi
        } else {
            p
        };
        self.push(Node::NegLogSigmoid { x }, vec![-clamped.ln()])
    }

    /// Accumulates d(root)/d(param) into `grads` for every parameter block.
    /// `root` must be a length-1 tensor. Existing gradient content is kept
    /// (callers reset between steps), so repeated calls sum contributions.
    pub fn backward(
        &self,
        store: &ParamStore<S>,
        root: Tid,
        grads: &mut Grads<S>,
    ) -> Result<()> {
        if self.values[root.0 as usize].len() != 1 {
            return Err(Error::Training("backward root must be a scalar tensor".into()));
        }
        let mut adj: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        adj[root.0 as usize] = Some(vec![S::one()]);
        for idx in (0..=root.0 as usize).rev() {
            let g = match adj[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx] {
                Node::Leaf { block, row } => {
                    let cols = store.block(*block).cols;
                    let dst = &mut grads.block_mut(*block)
                        [*row as usize * cols..(*row as usize + 1) * cols];
                    for (d, gv) in dst.iter_mut().zip(&g) {
                        *d += *gv;
                    }
                }
                Node::Zeros => {}
                Node::WeightedSum { terms } => {
                    for t in terms {
                        let scale = match t.alpha {
                            Some((b, k)) => t.coeff * store.block(b).data[k],
                            None => t.coeff,
                        };
                        {
                            let child = Self::adj_slot(&mut adj, &self.values, t.x);
                            for (c, gv) in child.iter_mut().zip(&g) {
                                *c += scale * *gv;
                            }
                        }
                        if let Some((b, k)) = t.alpha {
                            let xv = &self.values[t.x.0 as usize];
                            let mut acc = S::zero();
                            for (xvv, gv) in xv.iter().zip(&g) {
                                acc += *xvv * *gv;
                            }
                            grads.block_mut(b)[k] += t.coeff * acc;
                        }
                    }
                }
                Node::MatVec { w, x } => {
                    let wb = store.block(*w);
                    let xv = self.values[x.0 as usize].clone();
                    {
                        let gw = grads.block_mut(*w);
                        for (r, gv) in g.iter().enumerate() {
                            let dst = &mut gw[r * wb.cols..(r + 1) * wb.cols];
                            for (d, xvv) in dst.iter_mut().zip(&xv) {
                                *d += *gv * *xvv;
                            }
                        }
                    }
                    let child = Self::adj_slot(&mut adj, &self.values, *x);
                    for (r, gv) in g.iter().enumerate() {
                        let row = wb.row(r);
                        for (c, wv) in child.iter_mut().zip(row) {
                            *c += *gv * *wv;
                        }
                    }
                }
                Node::SigmoidVec { x } => {
                    let yv = &self.values[idx];
                    let child = Self::adj_slot(&mut adj, &self.values, *x);
                    for ((c, gv), y) in child.iter_mut().zip(&g).zip(yv) {
                        *c += *gv * *y * (S::one() - *y);
                    }
                }
                Node::Concat2 { a, b } => {
                    let la = self.values[a.0 as usize].len();
                    {
                        let ca = Self::adj_slot(&mut adj, &self.values, *a);
                        for (c, gv) in ca.iter_mut().zip(&g[..la]) {
                            *c += *gv;
                        }
                    }
                    let cb = Self::adj_slot(&mut adj, &self.values, *b);
                    for (c, gv) in cb.iter_mut().zip(&g[la..]) {
                        *c += *gv;
                    }
                }
                Node::Dot { a, b } => {
                    let g0 = g[0];
                    let av = self.values[a.0 as usize].clone();
                    let bv = self.values[b.0 as usize].clone();
                    {
                        let ca = Self::adj_slot(&mut adj, &self.values, *a);
                        for (c, x) in ca.iter_mut().zip(&bv) {
                            *c += g0 * *x;
                        }
                    }
                    let cb = Self::adj_slot(&mut adj, &self.values, *b);
                    for (c, x) in cb.iter_mut().zip(&av) {
                        *c += g0 * *x;
                    }
                }
                Node::AffineScalar { w, bias, x } => {
                    let g0 = g[0];
                    let xv = self.values[x.0 as usize].clone();
                    {
                        let gw = grads.block_mut(*w);
                        for (d, xvv) in gw.iter_mut().zip(&xv) {
                            *d += g0 * *xvv;
                        }
                    }
                    grads.block_mut(bias.0)[bias.1] += g0;
                    let wb = store.block(*w);
                    let child = Self::adj_slot(&mut adj, &self.values, *x);
                    for (c, wv) in child.iter_mut().zip(&wb.data) {
                        *c += g0 * *wv;
                    }
                }
                Node::NegLogSigmoid { x } => {
                    let p = sigmoid(self.values[x.0 as usize][0]);
                    let lo = S::lit(PROB_CLAMP);
                    let hi = S::one() - lo;
                    if p > lo && p < hi {
                        let child = Self::adj_slot(&mut adj, &self.values, *x);
                        child[0] += g[0] * (p - S::one());
                    }
                }
            }
        }
        for (b, block) in store.blocks.iter().enumerate() {
            if grads.blocks[b].iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in parameter block '{}'",
                    block.name
                )));
            }
        }
        Ok(())
    }

    fn adj_slot<'a>(
        adj: &'a mut [Option<Vec<S>>],
        values: &[Vec<S>],
        t: Tid,
    ) -> &'a mut Vec<S> {
        adj[t.0 as usize].get_or_insert_with(|| vec![S::zero(); values[t.0 as usize].len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T = Tape<f64>;

    fn demo_store() -> (ParamStore<f64>, [BlockId; 5]) {
        let mut store = ParamStore::new();
        let emb = store.add_block("emb", 4, 3);
        let w = store.add_block("w", 3, 3);
        let alpha = store.add_block("alpha", 1, 2);
        let ws = store.add_block("ws", 1, 6);
        let bs = store.add_block("bs", 1, 1);
        let mut rng = crate::rng::stream(11, &[0xADD]);
        for b in [emb, w, alpha, ws, bs] {
            for v in store.block_mut(b).data.iter_mut() {
                *v = crate::rng::symmetric_f64(&mut rng, 0.8);
            }
        }
        (store, [emb, w, alpha, ws, bs])
    }

    /// A composite function exercising every op at least once.
    fn demo_loss(store: &ParamStore<f64>, ids: &[BlockId; 5]) -> (Tape<f64>, Tid) {
        let [emb, w, alpha, ws, bs] = *ids;
        let mut tape = T::new();
        let x0 = tape.leaf(store, emb, 0);
        let x1 = tape.leaf(store, emb, 1);
        let x2 = tape.leaf(store, emb, 2);
        let x3 = tape.leaf(store, emb, 3);
        let pre = tape.weighted_sum(
            store,
            vec![
                Term { coeff: 2.0, alpha: Some((alpha, 0)), x: x0 },
                Term { coeff: -1.3, alpha: None, x: x1 },
                Term { coeff: 0.7, alpha: Some((alpha, 1)), x: x0 },
            ],
            3,
        );
        let mv = tape.mat_vec(store, w, pre);
        let h = tape.sigmoid(mv);
        let va = tape.concat2(h, x2);
        let sx1 = tape.sigmoid(x1);
        let vb = tape.concat2(x3, sx1);
        let d = tape.dot(va, vb);
        let dneg = tape.weighted_sum(store, vec![Term { coeff: -1.0, alpha: None, x: d }], 1);
        let sign_term = tape.neg_log_sigmoid(dneg);
        let sa = tape.affine_scalar(store, ws, (bs, 0), va);
        let sb = tape.affine_scalar(store, ws, (bs, 0), vb);
        let pa = tape.sigmoid(sa);
        let pb = tape.sigmoid(sb);
        let gap = tape.weighted_sum(
            store,
            vec![
                Term { coeff: 1.0, alpha: None, x: pa },
                Term { coeff: -1.0, alpha: None, x: pb },
            ],
            1,
        );
        let status_term = tape.neg_log_sigmoid(gap);
        let root = tape.weighted_sum(
            store,
            vec![
                Term { coeff: 1.0, alpha: None, x: sign_term },
                Term { coeff: 0.8, alpha: None, x: status_term },
            ],
            1,
        );
        (tape, root)
    }

    #[test]
    fn gradients_match_central_differences() {
        let (store, ids) = demo_store();
        let (tape, root) = demo_loss(&store, &ids);
        let mut grads = Grads::zeros_like(&store);
        tape.backward(&store, root, &mut grads).unwrap();

        let eps = 1e-6;
        for b in 0..store.block_count() {
            let id = BlockId(b);
            for k in 0..store.block(id).data.len() {
                let mut plus = store.clone();
                plus.block_mut(id).data[k] += eps;
                let mut minus = store.clone();
                minus.block_mut(id).data[k] -= eps;
                let (tp, rp) = demo_loss(&plus, &ids);
                let (tm, rm) = demo_loss(&minus, &ids);
                let fd = (tp.scalar(rp) - tm.scalar(rm)) / (2.0 * eps);
                let an = grads.block(id)[k];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < 1e-5,
                    "block {} entry {k}: fd {fd} vs analytic {an}",
                    store.block(id).name
                );
            }
        }
    }

    #[test]
    fn leaf_requests_are_deduplicated() {
        let (store, ids) = demo_store();
        let mut tape = T::new();
        let a = tape.leaf(&store, ids[0], 2);
        let b = tape.leaf(&store, ids[0], 2);
        assert_eq!(a, b);
        assert_eq!(tape.len(), 1);
        tape.clear();
        assert!(tape.is_empty());
        let c = tape.leaf(&store, ids[0], 2);
        assert_eq!(a, c); // fresh tape reuses ids from zero
    }

    #[test]
    fn neg_log_sigmoid_closed_forms() {
        let mut store = ParamStore::new();
        let b = store.add_block("z", 1, 1);
        let mut tape = T::new();
        let z = tape.leaf(&store, b, 0);
        let loss = tape.neg_log_sigmoid(z);
        assert!((tape.scalar(loss) - std::f64::consts::LN_2).abs() < 1e-15);

        store.block_mut(b).data[0] = 4.0;
        let mut tape = T::new();
        let z = tape.leaf(&store, b, 0);
        let loss = tape.neg_log_sigmoid(z);
        assert!((tape.scalar(loss) - 0.018149927917808).abs() < 1e-12);
    }

    #[test]
    fn clamped_region_has_zero_gradient_and_bounded_loss() {
        let mut store = ParamStore::new();
        let b = store.add_block("z", 1, 1);
        store.block_mut(b).data[0] = -40.0; // sigmoid(-40) << 1e-7
        let mut tape = T::new();
        let z = tape.leaf(&store, b, 0);
        let loss = tape.neg_log_sigmoid(z);
        assert!((tape.scalar(loss) - (-(PROB_CLAMP.ln()))).abs() < 1e-12);
        let mut grads = Grads::zeros_like(&store);
        tape.backward(&store, loss, &mut grads).unwrap();
        assert_eq!(grads.block(b)[0], 0.0);

        // Confident-correct side clamps to a near-zero loss.
        store.block_mut(b).data[0] = 40.0;
        let mut tape = T::new();
        let z = tape.leaf(&store, b, 0);
        let loss = tape.neg_log_sigmoid(z);
        assert!(tape.scalar(loss) > 0.0 && tape.scalar(loss) < 2e-7);
        let mut grads = Grads::zeros_like(&store);
        tape.backward(&store, loss, &mut grads).unwrap();
        assert_eq!(grads.block(b)[0], 0.0);
    }

    #[test]
    fn empty_weighted_sum_is_zero_with_no_gradient() {
        let (store, ids) = demo_store();
        let mut tape = T::new();
        let z = tape.weighted_sum(&store, vec![], 3);
        assert_eq!(tape.value(z), &[0.0, 0.0, 0.0]);
        let x = tape.leaf(&store, ids[0], 0);
        let d = tape.dot(z, x);
        let mut grads = Grads::zeros_like(&store);
        tape.backward(&store, d, &mut grads).unwrap();
        assert!(grads.block(ids[0]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicate_term_doubles_gradient() {
        let (store, ids) = demo_store();
        let emb = ids[0];
        let build = |coeffs: &[f64]| {
            let mut tape = T::new();
            let x = tape.leaf(&store, emb, 0);
            let terms = coeffs
                .iter()
                .map(|&c| Term { coeff: c, alpha: None, x })
                .collect();
            let s = tape.weighted_sum(&store, terms, 3);
            let d = tape.dot(s, s);
            let mut grads = Grads::zeros_like(&store);
            tape.backward(&store, d, &mut grads).unwrap();
            grads.block(emb)[..3].to_vec()
        };
        let single = build(&[1.0]);
        let double = build(&[1.0, 1.0]);
        for (s, d) in single.iter().zip(&double) {
            assert!((4.0 * s - d).abs() < 1e-12); // (2x).(2x) => 4x gradient of x.x
        }
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        // An infinity in one factor of an inner product poisons the other
        // factor's gradient; the error must say which block.
        let (mut store, ids) = demo_store();
        store.block_mut(ids[0]).data[0] = f64::INFINITY;
        let mut tape = T::new();
        let x0 = tape.leaf(&store, ids[0], 0);
        let x1 = tape.leaf(&store, ids[0], 1);
        let d = tape.dot(x0, x1);
        let mut grads = Grads::zeros_like(&store);
        let err = tape.backward(&store, d, &mut grads).unwrap_err();
        assert!(err.to_string().contains("'emb'"), "unexpected message: {err}");
    }

    #[test]
    fn backward_rejects_vector_root() {
        let (store, ids) = demo_store();
        let mut tape = T::new();
        let x = tape.leaf(&store, ids[0], 0);
        let mut grads = Grads::zeros_like(&store);
        assert!(tape.backward(&store, x, &mut grads).is_err());
    }
}
