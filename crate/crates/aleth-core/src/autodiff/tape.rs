//! Reverse-mode differentiation over a recorded graph of dense 2-D tensors.
//!
//! The tape is a Wengert list: builder methods evaluate eagerly and append a
//! node describing how the value was produced. `backward` walks the list in
//! reverse, pushing adjoints from a scalar loss into every reachable
//! parameter leaf. Adjoints of intermediates live in a scratch buffer that is
//! dropped when the pass finishes; parameter gradients persist on their leaf
//! nodes and accumulate across repeated `backward` calls.

use super::linalg::{mm_nn, mm_nt, mm_tn};
use super::scalar::Scalar;
use crate::error::{AlethError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Neg,
    Exp,
    Ln,
    Sin,
    Asin,
    Sigmoid,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

enum Src<S: Scalar> {
    Leaf,
    Unary { kind: UnaryKind, a: TensorId },
    Scale { a: TensorId, k: S },
    AddScalar { a: TensorId },
    Clamp { a: TensorId, lo: S, hi: S },
    Binary { kind: BinaryKind, a: TensorId, b: TensorId },
    Matmul { a: TensorId, b: TensorId },
    AddRowBias { a: TensorId, bias: TensorId },
    MulCol { a: TensorId, col: TensorId },
    ConcatCols { a: TensorId, b: TensorId },
    GatherRows { a: TensorId, idx: Vec<usize> },
    TileSegments { a: TensorId, reps: usize },
    SegmentSum { a: TensorId, seg: usize },
    SegmentCumsumExclusive { a: TensorId, seg: usize },
    SumAll { a: TensorId },
    MeanAll { a: TensorId },
    ColMean { a: TensorId },
    Conv1dSeg { a: TensorId, kernel: TensorId, bias: TensorId, seg: usize },
}

struct Node<S: Scalar> {
    src: Src<S>,
    rows: usize,
    cols: usize,
    values: Vec<S>,
    /// Persistent gradient. Populated (and accumulated) only on parameter
    /// leaves; intermediates use backward-local scratch.
    grad: Option<Vec<S>>,
    needs_grad: bool,
}

/// Recorded computation graph with eagerly evaluated values.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, id: TensorId) -> &[S] {
        &self.nodes[id.0].values
    }

    /// Scalar value of a [1, 1] tensor.
    pub fn scalar(&self, id: TensorId) -> S {
        let n = &self.nodes[id.0];
        assert_eq!(n.values.len(), 1, "scalar() on non-scalar tensor");
        n.values[0]
    }

    /// Accumulated gradient of a parameter leaf; `None` before any backward
    /// pass reached it (a detached parameter keeps `None`: zero gradient).
    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn grad_or_zeros(&self, id: TensorId) -> Vec<S> {
        match self.grad(id) {
            Some(g) => g.to_vec(),
            None => vec![S::zero(); self.nodes[id.0].values.len()],
        }
    }

    fn push(&mut self, src: Src<S>, rows: usize, cols: usize, values: Vec<S>, needs_grad: bool) -> TensorId {
        debug_assert_eq!(values.len(), rows * cols);
        self.nodes.push(Node { src, rows, cols, values, grad: None, needs_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ----- leaves -------------------------------------------------------

    /// Differentiable leaf (model parameter).
    pub fn param(&mut self, rows: usize, cols: usize, values: Vec<S>) -> TensorId {
        assert_eq!(values.len(), rows * cols, "param shape/value mismatch");
        self.push(Src::Leaf, rows, cols, values, true)
    }

    /// Non-differentiable leaf (inputs, targets, constants).
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<S>) -> TensorId {
        assert_eq!(values.len(), rows * cols, "constant shape/value mismatch");
        self.push(Src::Leaf, rows, cols, values, false)
    }

    pub fn scalar_constant(&mut self, v: S) -> TensorId {
        self.constant(1, 1, vec![v])
    }

    // ----- elementwise unary --------------------------------------------

    fn unary(&mut self, kind: UnaryKind, a: TensorId) -> TensorId {
        let (rows, cols) = self.shape(a);
        let needs = self.needs(a);
        let values: Vec<S> = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| match kind {
                UnaryKind::Neg => -x,
                UnaryKind::Exp => x.exp(),
                UnaryKind::Ln => x.ln(),
                UnaryKind::Sin => x.sin(),
                UnaryKind::Asin => x.asin(),
                UnaryKind::Sigmoid => S::one() / (S::one() + (-x).exp()),
                UnaryKind::Relu => x.max(S::zero()),
            })
            .collect();
        self.push(Src::Unary { kind, a }, rows, cols, values, needs)
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Neg, a)
    }
    pub fn exp(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Exp, a)
    }
    pub fn ln(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Ln, a)
    }
    pub fn sin(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Sin, a)
    }
    pub fn asin(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Asin, a)
    }
    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Sigmoid, a)
    }
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn scale(&mut self, a: TensorId, k: S) -> TensorId {
        let (rows, cols) = self.shape(a);
        let needs = self.needs(a);
        let values: Vec<S> = self.nodes[a.0].values.iter().map(|&x| x * k).collect();
        self.push(Src::Scale { a, k }, rows, cols, values, needs)
    }

    pub fn add_scalar(&mut self, a: TensorId, k: S) -> TensorId {
        let (rows, cols) = self.shape(a);
        let needs = self.needs(a);
        let values: Vec<S> = self.nodes[a.0].values.iter().map(|&x| x + k).collect();
        self.push(Src::AddScalar { a }, rows, cols, values, needs)
    }

    /// Clamp with pass-through subgradient inside the inclusive range.
    pub fn clamp(&mut self, a: TensorId, lo: S, hi: S) -> TensorId {
        let (rows, cols) = self.shape(a);
        let needs = self.needs(a);
        let values: Vec<S> = self.nodes[a.0].values.iter().map(|&x| x.max(lo).min(hi)).collect();
        self.push(Src::Clamp { a, lo, hi }, rows, cols, values, needs)
    }

    // ----- elementwise binary -------------------------------------------

    fn binary(&mut self, kind: BinaryKind, a: TensorId, b: TensorId) -> TensorId {
        let (rows, cols) = self.shape(a);
        assert_eq!(
            self.shape(b),
            (rows, cols),
            "elementwise binary op requires matching shapes"
        );
        let needs = self.needs(a) || self.needs(b);
        let values: Vec<S> = self.nodes[a.0]
            .values
            .iter()
            .zip(self.nodes[b.0].values.iter())
            .map(|(&x, &y)| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / y,
            })
            .collect();
        self.push(Src::Binary { kind, a, b }, rows, cols, values, needs)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Add, a, b)
    }
    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Sub, a, b)
    }
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Mul, a, b)
    }
    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Div, a, b)
    }

    // ----- linear algebra and structure ---------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions must match");
        let needs = self.needs(a) || self.needs(b);
        let values = mm_nn(&self.nodes[a.0].values, &self.nodes[b.0].values, m, k, n);
        self.push(Src::Matmul { a, b }, m, n, values, needs)
    }

    /// a: [m, n] plus a [1, n] bias broadcast over rows.
    pub fn add_row_bias(&mut self, a: TensorId, bias: TensorId) -> TensorId {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(bias), (1, n), "bias must be [1, n]");
        let needs = self.needs(a) || self.needs(bias);
        let bvals = &self.nodes[bias.0].values;
        let mut values = Vec::with_capacity(m * n);
        for row in self.nodes[a.0].values.chunks_exact(n) {
            for j in 0..n {
                values.push(row[j] + bvals[j]);
            }
        }
        self.push(Src::AddRowBias { a, bias }, m, n, values, needs)
    }

    /// a: [m, n] scaled per-row by a [m, 1] column.
    pub fn mul_col(&mut self, a: TensorId, col: TensorId) -> TensorId {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(col), (m, 1), "column must be [m, 1]");
        let needs = self.needs(a) || self.needs(col);
        let cvals = &self.nodes[col.0].values;
        let mut values = Vec::with_capacity(m * n);
        for (i, row) in self.nodes[a.0].values.chunks_exact(n).enumerate() {
            let c = cvals[i];
            for &x in row {
                values.push(x * c);
            }
        }
        self.push(Src::MulCol { a, col }, m, n, values, needs)
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, na) = self.shape(a);
        let (mb, nb) = self.shape(b);
        assert_eq!(m, mb, "concat_cols requires equal row counts");
        let needs = self.needs(a) || self.needs(b);
        let mut values = Vec::with_capacity(m * (na + nb));
        for i in 0..m {
            values.extend_from_slice(&self.nodes[a.0].values[i * na..(i + 1) * na]);
            values.extend_from_slice(&self.nodes[b.0].values[i * nb..(i + 1) * nb]);
        }
        self.push(Src::ConcatCols { a, b }, m, na + nb, values, needs)
    }

    pub fn gather_rows(&mut self, a: TensorId, idx: &[usize]) -> TensorId {
        let (m, n) = self.shape(a);
        for &i in idx {
            assert!(i < m, "gather_rows index {i} out of range for {m} rows");
        }
        let needs = self.needs(a);
        let mut values = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            values.extend_from_slice(&self.nodes[a.0].values[i * n..(i + 1) * n]);
        }
        self.push(Src::GatherRows { a, idx: idx.to_vec() }, idx.len(), n, values, needs)
    }

    /// Repeat the whole [s, c] block `reps` times: result [reps * s, c].
    pub fn tile_segments(&mut self, a: TensorId, reps: usize) -> TensorId {
        let (s, c) = self.shape(a);
        let needs = self.needs(a);
        let mut values = Vec::with_capacity(reps * s * c);
        for _ in 0..reps {
            values.extend_from_slice(&self.nodes[a.0].values);
        }
        self.push(Src::TileSegments { a, reps }, reps * s, c, values, needs)
    }

    /// Sum consecutive blocks of `seg` rows: [r * seg, c] -> [r, c].
    pub fn segment_sum(&mut self, a: TensorId, seg: usize) -> TensorId {
        let (m, c) = self.shape(a);
        assert!(seg > 0 && m % seg == 0, "segment_sum: rows not divisible by segment");
        let r = m / seg;
        let needs = self.needs(a);
        let mut values = vec![S::zero(); r * c];
        for (block, out_row) in self.nodes[a.0].values.chunks_exact(seg * c).zip(values.chunks_exact_mut(c)) {
            for row in block.chunks_exact(c) {
                for j in 0..c {
                    out_row[j] = out_row[j] + row[j];
                }
            }
        }
        self.push(Src::SegmentSum { a, seg }, r, c, values, needs)
    }

    /// Per-segment exclusive prefix sum along rows: out[i] = sum of rows
    /// before i within its block of `seg` rows.
    pub fn segment_cumsum_exclusive(&mut self, a: TensorId, seg: usize) -> TensorId {
        let (m, c) = self.shape(a);
        assert!(seg > 0 && m % seg == 0, "segment_cumsum: rows not divisible by segment");
        let needs = self.needs(a);
        let mut values = vec![S::zero(); m * c];
        for (block_in, block_out) in self.nodes[a.0]
            .values
            .chunks_exact(seg * c)
            .zip(values.chunks_exact_mut(seg * c))
        {
            let mut acc = vec![S::zero(); c];
            for i in 0..seg {
                for j in 0..c {
                    block_out[i * c + j] = acc[j];
                    acc[j] = acc[j] + block_in[i * c + j];
                }
            }
        }
        self.push(Src::SegmentCumsumExclusive { a, seg }, m, c, values, needs)
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let needs = self.needs(a);
        let mut acc = S::zero();
        for &x in &self.nodes[a.0].values {
            acc = acc + x;
        }
        self.push(Src::SumAll { a }, 1, 1, vec![acc], needs)
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let needs = self.needs(a);
        let n = self.nodes[a.0].values.len();
        assert!(n > 0, "mean_all of empty tensor");
        let mut acc = S::zero();
        for &x in &self.nodes[a.0].values {
            acc = acc + x;
        }
        let v = acc / S::from_f64(n as f64);
        self.push(Src::MeanAll { a }, 1, 1, vec![v], needs)
    }

    /// Column means: [m, n] -> [1, n].
    pub fn col_mean(&mut self, a: TensorId) -> TensorId {
        let (m, n) = self.shape(a);
        assert!(m > 0, "col_mean of empty tensor");
        let needs = self.needs(a);
        let mut values = vec![S::zero(); n];
        for row in self.nodes[a.0].values.chunks_exact(n) {
            for j in 0..n {
                values[j] = values[j] + row[j];
            }
        }
        let inv = S::one() / S::from_f64(m as f64);
        for v in values.iter_mut() {
            *v = *v * inv;
        }
        self.push(Src::ColMean { a }, 1, n, values, needs)
    }

    /// 1-D convolution along the row (sample) axis within each block of `seg`
    /// rows, treating the `w` columns as input channels; single output
    /// channel, zero padding of (ksize-1)/2. Input [r * seg, w], kernel
    /// [ksize, w] (ksize odd), bias [1, 1]; output [r * seg, 1].
    pub fn conv1d_segments(&mut self, a: TensorId, kernel: TensorId, bias: TensorId, seg: usize) -> TensorId {
        let (m, w) = self.shape(a);
        let (ksize, kw) = self.shape(kernel);
        assert_eq!(w, kw, "conv kernel channel count must match input");
        assert!(ksize % 2 == 1, "conv kernel size must be odd");
        assert!(seg > 0 && m % seg == 0, "conv: rows not divisible by segment");
        assert_eq!(self.shape(bias), (1, 1), "conv bias must be [1, 1]");
        let needs = self.needs(a) || self.needs(kernel) || self.needs(bias);
        let half = (ksize / 2) as isize;
        let kvals = &self.nodes[kernel.0].values;
        let b0 = self.nodes[bias.0].values[0];
        let avals = &self.nodes[a.0].values;
        let mut values = Vec::with_capacity(m);
        for block in 0..m / seg {
            let base = block * seg;
            for i in 0..seg {
                let mut acc = b0;
                for k in 0..ksize {
                    let src = i as isize + (k as isize - half);
                    if src < 0 || src >= seg as isize {
                        continue;
                    }
                    let row = &avals[(base + src as usize) * w..(base + src as usize + 1) * w];
                    let krow = &kvals[k * w..(k + 1) * w];
                    for j in 0..w {
                        acc = acc + krow[j] * row[j];
                    }
                }
                values.push(acc);
            }
        }
        self.push(Src::Conv1dSeg { a, kernel, bias, seg }, m, 1, values, needs)
    }

    // ----- backward ------------------------------------------------------

    /// Push adjoints from a scalar loss into every reachable parameter leaf.
    ///
    /// Parameter gradients accumulate across repeated calls; a graph that
    /// does not reach a parameter simply leaves its gradient untouched.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        {
            let n = &self.nodes[loss.0];
            if n.rows * n.cols != 1 {
                return Err(AlethError::Contract(format!(
                    "backward requires a scalar loss, got shape [{}, {}]",
                    n.rows, n.cols
                )));
            }
        }
        let mut scratch: Vec<Option<Vec<S>>> = Vec::with_capacity(loss.0 + 1);
        scratch.resize_with(loss.0 + 1, || None);
        scratch[loss.0] = Some(vec![S::one()]);

        for id in (0..=loss.0).rev() {
            let Some(dout) = scratch[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            if matches!(self.nodes[id].src, Src::Leaf) {
                let node = &mut self.nodes[id];
                let grad = node.grad.get_or_insert_with(|| vec![S::zero(); node.values.len()]);
                for (g, d) in grad.iter_mut().zip(dout.iter()) {
                    *g = *g + *d;
                }
                continue;
            }
            self.propagate(id, &dout, &mut scratch);
        }
        Ok(())
    }

    fn accum(&self, scratch: &mut [Option<Vec<S>>], id: TensorId, contrib: Vec<S>) {
        if !self.needs(id) {
            return;
        }
        match &mut scratch[id.0] {
            Some(g) => {
                for (dst, src) in g.iter_mut().zip(contrib.iter()) {
                    *dst = *dst + *src;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&mut self, id: usize, dout: &[S], scratch: &mut [Option<Vec<S>>]) {
        // Reads borrow `self.nodes` immutably; contributions are built into
        // fresh buffers and merged into the scratch adjoints afterwards.
        match &self.nodes[id].src {
            Src::Leaf => unreachable!("leaf handled by caller"),
            Src::Unary { kind, a } => {
                let (kind, a) = (*kind, *a);
                let av = &self.nodes[a.0].values;
                let ov = &self.nodes[id].values;
                let contrib: Vec<S> = match kind {
                    UnaryKind::Neg => dout.iter().map(|&d| -d).collect(),
                    UnaryKind::Exp => dout.iter().zip(ov).map(|(&d, &o)| d * o).collect(),
                    UnaryKind::Ln => dout.iter().zip(av).map(|(&d, &x)| d / x).collect(),
                    UnaryKind::Sin => dout.iter().zip(av).map(|(&d, &x)| d * x.cos()).collect(),
                    UnaryKind::Asin => {
                        // slope guard keeps the adjoint finite at |x| -> 1
                        let guard = S::from_f64(1e-12);
                        dout.iter()
                            .zip(av)
                            .map(|(&d, &x)| d / (S::one() - x * x).max(guard).sqrt())
                            .collect()
                    }
                    UnaryKind::Sigmoid => dout
                        .iter()
                        .zip(ov)
                        .map(|(&d, &o)| d * o * (S::one() - o))
                        .collect(),
                    UnaryKind::Relu => dout
                        .iter()
                        .zip(av)
                        .map(|(&d, &x)| if x > S::zero() { d } else { S::zero() })
                        .collect(),
                };
                self.accum(scratch, a, contrib);
            }
            Src::Scale { a, k } => {
                let (a, k) = (*a, *k);
                let contrib: Vec<S> = dout.iter().map(|&d| d * k).collect();
                self.accum(scratch, a, contrib);
            }
            Src::AddScalar { a } => {
                let a = *a;
                self.accum(scratch, a, dout.to_vec());
            }
            Src::Clamp { a, lo, hi } => {
                let (a, lo, hi) = (*a, *lo, *hi);
                let av = &self.nodes[a.0].values;
                let contrib: Vec<S> = dout
                    .iter()
                    .zip(av)
                    .map(|(&d, &x)| if x >= lo && x <= hi { d } else { S::zero() })
                    .collect();
                self.accum(scratch, a, contrib);
            }
            Src::Binary { kind, a, b } => {
                let (kind, a, b) = (*kind, *a, *b);
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                let (da, db): (Vec<S>, Vec<S>) = match kind {
                    BinaryKind::Add => (dout.to_vec(), dout.to_vec()),
                    BinaryKind::Sub => (dout.to_vec(), dout.iter().map(|&d| -d).collect()),
                    BinaryKind::Mul => (
                        dout.iter().zip(bv).map(|(&d, &y)| d * y).collect(),
                        dout.iter().zip(av).map(|(&d, &x)| d * x).collect(),
                    ),
                    BinaryKind::Div => (
                        dout.iter().zip(bv).map(|(&d, &y)| d / y).collect(),
                        dout.iter()
                            .zip(av.iter().zip(bv))
                            .map(|(&d, (&x, &y))| -d * x / (y * y))
                            .collect(),
                    ),
                };
                self.accum(scratch, a, da);
                self.accum(scratch, b, db);
            }
            Src::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.shape(a);
                let (_, n) = self.shape(b);
                if self.needs(a) {
                    let da = mm_nt(dout, &self.nodes[b.0].values, m, n, k);
                    self.accum(scratch, a, da);
                }
                if self.needs(b) {
                    let db = mm_tn(&self.nodes[a.0].values, dout, m, k, n);
                    self.accum(scratch, b, db);
                }
            }
            Src::AddRowBias { a, bias } => {
                let (a, bias) = (*a, *bias);
                let (_, n) = self.shape(a);
                if self.needs(a) {
                    self.accum(scratch, a, dout.to_vec());
                }
                if self.needs(bias) {
                    let mut db = vec![S::zero(); n];
                    for row in dout.chunks_exact(n) {
                        for j in 0..n {
                            db[j] = db[j] + row[j];
                        }
                    }
                    self.accum(scratch, bias, db);
                }
            }
            Src::MulCol { a, col } => {
                let (a, col) = (*a, *col);
                let (m, n) = self.shape(a);
                if self.needs(a) {
                    let cv = &self.nodes[col.0].values;
                    let mut da = Vec::with_capacity(m * n);
                    for (i, row) in dout.chunks_exact(n).enumerate() {
                        for &d in row {
                            da.push(d * cv[i]);
                        }
                    }
                    self.accum(scratch, a, da);
                }
                if self.needs(col) {
                    let av = &self.nodes[a.0].values;
                    let mut dc = vec![S::zero(); m];
                    for (i, (drow, arow)) in dout.chunks_exact(n).zip(av.chunks_exact(n)).enumerate() {
                        let mut acc = S::zero();
                        for j in 0..n {
                            acc = acc + drow[j] * arow[j];
                        }
                        dc[i] = acc;
                    }
                    self.accum(scratch, col, dc);
                }
            }
            Src::ConcatCols { a, b } => {
                let (a, b) = (*a, *b);
                let (m, na) = self.shape(a);
                let (_, nb) = self.shape(b);
                let n = na + nb;
                if self.needs(a) {
                    let mut da = Vec::with_capacity(m * na);
                    for row in dout.chunks_exact(n) {
                        da.extend_from_slice(&row[..na]);
                    }
                    self.accum(scratch, a, da);
                }
                if self.needs(b) {
                    let mut db = Vec::with_capacity(m * nb);
                    for row in dout.chunks_exact(n) {
                        db.extend_from_slice(&row[na..]);
                    }
                    self.accum(scratch, b, db);
                }
            }
            Src::GatherRows { a, idx } => {
                let (a, idx) = (*a, idx.clone());
                let (m, n) = self.shape(a);
                let mut da = vec![S::zero(); m * n];
                for (out_row, &src) in dout.chunks_exact(n).zip(idx.iter()) {
                    let dst = &mut da[src * n..(src + 1) * n];
                    for j in 0..n {
                        dst[j] = dst[j] + out_row[j];
                    }
                }
                self.accum(scratch, a, da);
            }
            Src::TileSegments { a, reps } => {
                let (a, reps) = (*a, *reps);
                let (s, c) = self.shape(a);
                let mut da = vec![S::zero(); s * c];
                for block in dout.chunks_exact(s * c).take(reps) {
                    for (dst, &src) in da.iter_mut().zip(block.iter()) {
                        *dst = *dst + src;
                    }
                }
                self.accum(scratch, a, da);
            }
            Src::SegmentSum { a, seg } => {
                let (a, seg) = (*a, *seg);
                let (m, c) = self.shape(a);
                let mut da = Vec::with_capacity(m * c);
                for out_row in dout.chunks_exact(c) {
                    for _ in 0..seg {
                        da.extend_from_slice(out_row);
                    }
                }
                self.accum(scratch, a, da);
            }
            Src::SegmentCumsumExclusive { a, seg } => {
                let (a, seg) = (*a, *seg);
                let (m, c) = self.shape(a);
                // adjoint of an exclusive prefix sum is an exclusive suffix sum
                let mut da = vec![S::zero(); m * c];
                for (block_d, block_out) in dout.chunks_exact(seg * c).zip(da.chunks_exact_mut(seg * c)) {
                    let mut acc = vec![S::zero(); c];
                    for i in (0..seg).rev() {
                        for j in 0..c {
                            block_out[i * c + j] = acc[j];
                        }
                        for j in 0..c {
                            acc[j] = acc[j] + block_d[i * c + j];
                        }
                    }
                }
                self.accum(scratch, a, da);
            }
            Src::SumAll { a } => {
                let a = *a;
                let n = self.nodes[a.0].values.len();
                let d = dout[0];
                self.accum(scratch, a, vec![d; n]);
            }
            Src::MeanAll { a } => {
                let a = *a;
                let n = self.nodes[a.0].values.len();
                let d = dout[0] / S::from_f64(n as f64);
                self.accum(scratch, a, vec![d; n]);
            }
            Src::ColMean { a } => {
                let a = *a;
                let (m, n) = self.shape(a);
                let inv = S::one() / S::from_f64(m as f64);
                let mut da = Vec::with_capacity(m * n);
                for _ in 0..m {
                    for j in 0..n {
                        da.push(dout[j] * inv);
                    }
                }
                self.accum(scratch, a, da);
            }
            Src::Conv1dSeg { a, kernel, bias, seg } => {
                let (a, kernel, bias, seg) = (*a, *kernel, *bias, *seg);
                let (m, w) = self.shape(a);
                let (ksize, _) = self.shape(kernel);
                let half = (ksize / 2) as isize;
                let blocks = m / seg;
                if self.needs(a) {
                    let kvals = &self.nodes[kernel.0].values;
                    let mut da = vec![S::zero(); m * w];
                    for block in 0..blocks {
                        let base = block * seg;
                        for i in 0..seg {
                            let d = dout[base + i];
                            for k in 0..ksize {
                                let src = i as isize + (k as isize - half);
                                if src < 0 || src >= seg as isize {
                                    continue;
                                }
                                let dst = &mut da[(base + src as usize) * w..(base + src as usize + 1) * w];
                                let krow = &kvals[k * w..(k + 1) * w];
                                for j in 0..w {
                                    dst[j] = dst[j] + d * krow[j];
                                }
                            }
                        }
                    }
                    self.accum(scratch, a, da);
                }
                if self.needs(kernel) {
                    let avals = &self.nodes[a.0].values;
                    let mut dk = vec![S::zero(); ksize * w];
                    for block in 0..blocks {
                        let base = block * seg;
                        for i in 0..seg {
                            let d = dout[base + i];
                            for k in 0..ksize {
                                let src = i as isize + (k as isize - half);
                                if src < 0 || src >= seg as isize {
                                    continue;
                                }
                                let row = &avals[(base + src as usize) * w..(base + src as usize + 1) * w];
                                let dst = &mut dk[k * w..(k + 1) * w];
                                for j in 0..w {
                                    dst[j] = dst[j] + d * row[j];
                                }
                            }
                        }
                    }
                    self.accum(scratch, kernel, dk);
                }
                if self.needs(bias) {
                    let mut acc = S::zero();
                    for &d in dout {
                        acc = acc + d;
                    }
                    self.accum(scratch, bias, vec![acc]);
                }
            }
        }
    }
}
