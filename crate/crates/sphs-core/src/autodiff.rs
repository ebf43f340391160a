//! Reverse-mode automatic differentiation on a static computation graph of
//! vector-valued nodes.
//!
//! A [`Graph`] is a topologically ordered tape: every operand index is
//! strictly smaller than the node that consumes it, so a forward pass is one
//! left-to-right sweep and a backward pass one right-to-left sweep over the
//! same storage.  Graphs are built once per model and evaluated many times
//! against a reusable [`Workspace`], so evaluation allocates nothing.
//!
//! Leaves come in three flavours: baked-in constants, slots of the per-call
//! input vector, and slots of a persistent [`ParamVector`].  The split
//! matters for training: `backward` accumulates one gradient buffer per
//! flavour.
//!
//! The operation set is deliberately small but chosen so that *gradients of
//! built things are themselves expressible as built things*: a network's
//! input-gradient can be spelled out as `Affine`/`Mul`/`Sigmoid` nodes
//! (`sigmoid` is softplus' derivative), and one reverse sweep over the
//! extended tape then yields exact parameter gradients of losses that
//! involve that gradient — no nested tapes, no second-order machinery.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Handle to a node in a [`Graph`].  Only valid for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// One tape entry.  Operand ids always point at earlier nodes.
#[derive(Debug, Clone)]
pub enum Op {
    /// Fixed values baked into the graph.
    Constant(Vec<f64>),
    /// `len` slots of the per-call input vector starting at `offset`.
    Input { offset: usize, len: usize },
    /// `len` slots of the parameter vector starting at `offset`.
    Param { offset: usize, len: usize },
    /// Elementwise sum of equally sized operands.
    Sum(Vec<NodeId>),
    /// Elementwise product; one operand may be a scalar (broadcast).
    Mul(NodeId, NodeId),
    /// `W x + b` with `W` read row-major from a node of length `rows*cols`.
    /// With `transpose` the map is `Wᵀ x` (+ `b`), producing `cols` values.
    Affine {
        w: NodeId,
        x: NodeId,
        b: Option<NodeId>,
        rows: usize,
        cols: usize,
        transpose: bool,
    },
    /// Elementwise `ln(1 + eˣ)`.
    Softplus(NodeId),
    /// Elementwise logistic function.
    Sigmoid(NodeId),
    /// Elementwise square.
    Square(NodeId),
    /// Scalar inner product of two equally sized operands.
    Dot(NodeId, NodeId),
    /// Expand `n(n−1)/2` values into a dense skew-symmetric `n × n` matrix.
    /// The strictly upper triangle is filled row-major with the *negated*
    /// operand values: `J[i][j] = −v_k`, `J[j][i] = +v_k` for `i < j`.
    SkewExpand { v: NodeId, n: usize },
    /// Expand `n(n+1)/2` values into a dense lower-triangular `n × n`
    /// matrix, filled row-major.  With `strict_diag` the diagonal entries
    /// pass through softplus, making the factor nonsingular.
    LowerExpand { v: NodeId, n: usize, strict_diag: bool },
}

/// Errors surfaced at evaluation time.  Shape errors during graph
/// *construction* are programming mistakes and panic instead.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// The provided input vector does not cover every `Input` slot.
    InputLength { expected: usize, got: usize },
    /// The provided parameter vector does not cover every `Param` slot.
    ParamLength { required: usize, got: usize },
    /// A gradient buffer handed to `backward` has the wrong length.
    GradLength,
    /// The seed slice length does not match the seeded node.
    SeedLength { expected: usize, got: usize },
}

impl core::fmt::Display for EvalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvalError::InputLength { expected, got } => {
                write!(f, "input vector has length {got}, graph needs {expected}")
            }
            EvalError::ParamLength { required, got } => {
                write!(f, "parameter vector has length {got}, graph needs at least {required}")
            }
            EvalError::GradLength => write!(f, "gradient buffer length mismatch"),
            EvalError::SeedLength { expected, got } => {
                write!(f, "seed has length {got}, node has length {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Scratch storage for one evaluation of a graph: forward values and
/// adjoints share the node-offset layout.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    values: Vec<f64>,
    adjoints: Vec<f64>,
    input_buf: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reusable staging buffer for callers that assemble `[x; u]`-style
    /// input vectors per call.
    pub fn input_buf(&mut self) -> &mut Vec<f64> {
        &mut self.input_buf
    }
}

/// A frozen, topologically ordered computation tape.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    ops: Vec<Op>,
    offsets: Vec<usize>,
    lens: Vec<usize>,
    total_len: usize,
    input_len: usize,
    required_params: usize,
}

impl Graph {
    /// A graph reading `input_len` per-call input slots.
    pub fn new(input_len: usize) -> Self {
        Graph { input_len, ..Graph::default() }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Number of parameter slots the graph reads (max offset + len).
    pub fn required_params(&self) -> usize {
        self.required_params
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    /// Output length of a node.
    pub fn len_of(&self, id: NodeId) -> usize {
        self.lens[id.idx()]
    }

    fn push(&mut self, op: Op, len: usize) -> NodeId {
        assert!(len > 0, "zero-length nodes are not representable");
        let id = NodeId(self.ops.len() as u32);
        self.offsets.push(self.total_len);
        self.lens.push(len);
        self.total_len += len;
        self.ops.push(op);
        id
    }

    // ── Builders ───────────────────────────────────────────────────────
    // Shape violations here are bugs in the calling code, so they panic.

    pub fn constant(&mut self, vals: &[f64]) -> NodeId {
        self.push(Op::Constant(vals.to_vec()), vals.len())
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(&[v])
    }

    pub fn input(&mut self, offset: usize, len: usize) -> NodeId {
        assert!(offset + len <= self.input_len, "input slot out of range");
        self.push(Op::Input { offset, len }, len)
    }

    pub fn param(&mut self, offset: usize, len: usize) -> NodeId {
        self.required_params = self.required_params.max(offset + len);
        self.push(Op::Param { offset, len }, len)
    }

    pub fn sum(&mut self, operands: &[NodeId]) -> NodeId {
        assert!(!operands.is_empty(), "sum needs at least one operand");
        let len = self.len_of(operands[0]);
        for &o in operands {
            assert_eq!(self.len_of(o), len, "sum operand length mismatch");
        }
        self.push(Op::Sum(operands.to_vec()), len)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        assert!(la == lb || la == 1 || lb == 1, "product operands must match or broadcast");
        self.push(Op::Mul(a, b), la.max(lb))
    }

    pub fn affine(
        &mut self,
        w: NodeId,
        x: NodeId,
        b: Option<NodeId>,
        rows: usize,
        cols: usize,
    ) -> NodeId {
        assert_eq!(self.len_of(w), rows * cols, "weight node length mismatch");
        assert_eq!(self.len_of(x), cols, "affine operand length mismatch");
        if let Some(b) = b {
            assert_eq!(self.len_of(b), rows, "bias length mismatch");
        }
        self.push(Op::Affine { w, x, b, rows, cols, transpose: false }, rows)
    }

    /// `Wᵀ x (+ b)` where `w` is still read as a row-major `rows × cols`
    /// matrix; the operand has length `rows` and the result `cols`.
    pub fn affine_t(
        &mut self,
        w: NodeId,
        x: NodeId,
        b: Option<NodeId>,
        rows: usize,
        cols: usize,
    ) -> NodeId {
        assert_eq!(self.len_of(w), rows * cols, "weight node length mismatch");
        assert_eq!(self.len_of(x), rows, "affine-transpose operand length mismatch");
        if let Some(b) = b {
            assert_eq!(self.len_of(b), cols, "bias length mismatch");
        }
        self.push(Op::Affine { w, x, b, rows, cols, transpose: true }, cols)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let len = self.len_of(a);
        self.push(Op::Softplus(a), len)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let len = self.len_of(a);
        self.push(Op::Sigmoid(a), len)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let len = self.len_of(a);
        self.push(Op::Square(a), len)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len_of(a), self.len_of(b), "dot operand length mismatch");
        self.push(Op::Dot(a, b), 1)
    }

    pub fn skew_expand(&mut self, v: NodeId, n: usize) -> NodeId {
        assert_eq!(self.len_of(v), n * (n - 1) / 2, "skew vector length mismatch");
        self.push(Op::SkewExpand { v, n }, n * n)
    }

    pub fn lower_expand(&mut self, v: NodeId, n: usize, strict_diag: bool) -> NodeId {
        assert_eq!(self.len_of(v), n * (n + 1) / 2, "lower-triangle vector length mismatch");
        self.push(Op::LowerExpand { v, n, strict_diag }, n * n)
    }

    /// Multiply by a fixed scalar.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let s = self.scalar(c);
        self.mul(s, a)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.neg(b);
        self.sum(&[a, nb])
    }

    // ── Evaluation ─────────────────────────────────────────────────────

    fn check_bindings(&self, inputs: &[f64], params: &[f64]) -> Result<(), EvalError> {
        if inputs.len() != self.input_len {
            return Err(EvalError::InputLength { expected: self.input_len, got: inputs.len() });
        }
        if params.len() < self.required_params {
            return Err(EvalError::ParamLength {
                required: self.required_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Forward pass: fills `ws` with the value of every node.
    pub fn eval(&self, inputs: &[f64], params: &[f64], ws: &mut Workspace) -> Result<(), EvalError> {
        self.check_bindings(inputs, params)?;
        ws.values.resize(self.total_len, 0.0);
        for (i, op) in self.ops.iter().enumerate() {
            let (lo, hi) = ws.values.split_at_mut(self.offsets[i]);
            let out = &mut hi[..self.lens[i]];
            match op {
                Op::Constant(vals) => out.copy_from_slice(vals),
                Op::Input { offset, len } => out.copy_from_slice(&inputs[*offset..offset + len]),
                Op::Param { offset, len } => out.copy_from_slice(&params[*offset..offset + len]),
                Op::Sum(operands) => {
                    let first = self.slice(lo, operands[0]);
                    out.copy_from_slice(first);
                    for &o in &operands[1..] {
                        let v = self.slice(lo, o);
                        for (acc, x) in out.iter_mut().zip(v) {
                            *acc += x;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let va = self.slice(lo, *a);
                    let vb = self.slice(lo, *b);
                    match (va.len(), vb.len()) {
                        (1, _) => {
                            let s = va[0];
                            for (o, y) in out.iter_mut().zip(vb) {
                                *o = s * y;
                            }
                        }
                        (_, 1) => {
                            let s = vb[0];
                            for (o, x) in out.iter_mut().zip(va) {
                                *o = x * s;
                            }
                        }
                        _ => {
                            for ((o, x), y) in out.iter_mut().zip(va).zip(vb) {
                                *o = x * y;
                            }
                        }
                    }
                }
                Op::Affine { w, x, b, rows, cols, transpose } => {
                    let wv = self.slice(lo, *w);
                    let xv = self.slice(lo, *x);
                    if !transpose {
                        for r in 0..*rows {
                            let row = &wv[r * cols..(r + 1) * cols];
                            let mut acc = 0.0;
                            for c in 0..*cols {
                                acc += row[c] * xv[c];
                            }
                            out[r] = acc;
                        }
                    } else {
                        out.fill(0.0);
                        for r in 0..*rows {
                            let row = &wv[r * cols..(r + 1) * cols];
                            let xr = xv[r];
                            for c in 0..*cols {
                                out[c] += row[c] * xr;
                            }
                        }
                    }
                    if let Some(b) = b {
                        let bv = self.slice(lo, *b);
                        for (o, add) in out.iter_mut().zip(bv) {
                            *o += add;
                        }
                    }
                }
                Op::Softplus(a) => {
                    for (o, &x) in out.iter_mut().zip(self.slice(lo, *a)) {
                        *o = math::softplus(x);
                    }
                }
                Op::Sigmoid(a) => {
                    for (o, &x) in out.iter_mut().zip(self.slice(lo, *a)) {
                        *o = math::sigmoid(x);
                    }
                }
                Op::Square(a) => {
                    for (o, &x) in out.iter_mut().zip(self.slice(lo, *a)) {
                        *o = x * x;
                    }
                }
                Op::Dot(a, b) => {
                    let va = self.slice(lo, *a);
                    let vb = self.slice(lo, *b);
                    let mut acc = 0.0;
                    for (x, y) in va.iter().zip(vb) {
                        acc += x * y;
                    }
                    out[0] = acc;
                }
                Op::SkewExpand { v, n } => {
                    let vv = self.slice(lo, *v);
                    out.fill(0.0);
                    let mut k = 0;
                    for i in 0..*n {
                        for j in (i + 1)..*n {
                            out[i * n + j] = -vv[k];
                            out[j * n + i] = vv[k];
                            k += 1;
                        }
                    }
                }
                Op::LowerExpand { v, n, strict_diag } => {
                    let vv = self.slice(lo, *v);
                    out.fill(0.0);
                    let mut k = 0;
                    for i in 0..*n {
                        for j in 0..=i {
                            out[i * n + j] = if i == j && *strict_diag {
                                math::softplus(vv[k])
                            } else {
                                vv[k]
                            };
                            k += 1;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn slice<'a>(&self, storage: &'a [f64], id: NodeId) -> &'a [f64] {
        let i = id.idx();
        &storage[self.offsets[i]..self.offsets[i] + self.lens[i]]
    }

    /// Value of a node after [`Graph::eval`].
    pub fn value<'w>(&self, ws: &'w Workspace, id: NodeId) -> &'w [f64] {
        self.slice(&ws.values, id)
    }

    /// Reverse pass.  Seeds node `seed` with cotangent `seed_bar` and
    /// propagates to the leaves, **accumulating** (`+=`) into the provided
    /// gradient buffers.  Must follow an [`Graph::eval`] on the same
    /// workspace with the bindings whose gradient is wanted.
    pub fn backward(
        &self,
        ws: &mut Workspace,
        seed: NodeId,
        seed_bar: &[f64],
        mut grad_inputs: Option<&mut [f64]>,
        mut grad_params: Option<&mut [f64]>,
    ) -> Result<(), EvalError> {
        if seed_bar.len() != self.len_of(seed) {
            return Err(EvalError::SeedLength {
                expected: self.len_of(seed),
                got: seed_bar.len(),
            });
        }
        if let Some(g) = grad_inputs.as_deref() {
            if g.len() != self.input_len {
                return Err(EvalError::GradLength);
            }
        }
        if let Some(g) = grad_params.as_deref() {
            if g.len() < self.required_params {
                return Err(EvalError::GradLength);
            }
        }
        debug_assert_eq!(ws.values.len(), self.total_len, "backward without prior eval");

        ws.adjoints.clear();
        ws.adjoints.resize(self.total_len, 0.0);
        {
            let off = self.offsets[seed.idx()];
            ws.adjoints[off..off + seed_bar.len()].copy_from_slice(seed_bar);
        }

        for i in (0..self.ops.len()).rev() {
            let (adj_lo, adj_hi) = ws.adjoints.split_at_mut(self.offsets[i]);
            let ybar = &adj_hi[..self.lens[i]];
            if ybar.iter().all(|&v| v == 0.0) {
                continue; // nothing flows through this node
            }
            let values = &ws.values;
            match &self.ops[i] {
                Op::Constant(_) => {}
                Op::Input { offset, len } => {
                    if let Some(g) = grad_inputs.as_deref_mut() {
                        for (dst, src) in g[*offset..offset + len].iter_mut().zip(ybar) {
                            *dst += src;
                        }
                    }
                }
                Op::Param { offset, len } => {
                    if let Some(g) = grad_params.as_deref_mut() {
                        for (dst, src) in g[*offset..offset + len].iter_mut().zip(ybar) {
                            *dst += src;
                        }
                    }
                }
                Op::Sum(operands) => {
                    for &o in operands {
                        let dst = self.slice_mut(adj_lo, o);
                        for (d, s) in dst.iter_mut().zip(ybar) {
                            *d += s;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let va = self.slice(values, *a);
                    let vb = self.slice(values, *b);
                    match (va.len(), vb.len()) {
                        (1, lb) if lb != 1 => {
                            let mut acc = 0.0;
                            for (y, s) in vb.iter().zip(ybar) {
                                acc += y * s;
                            }
                            self.slice_mut(adj_lo, *a)[0] += acc;
                            let s = va[0];
                            let dst = self.slice_mut(adj_lo, *b);
                            for (d, yb) in dst.iter_mut().zip(ybar) {
                                *d += s * yb;
                            }
                        }
                        (la, 1) if la != 1 => {
                            let s = vb[0];
                            {
                                let dst = self.slice_mut(adj_lo, *a);
                                for (d, yb) in dst.iter_mut().zip(ybar) {
                                    *d += s * yb;
                                }
                            }
                            let mut acc = 0.0;
                            for (x, yb) in va.iter().zip(ybar) {
                                acc += x * yb;
                            }
                            self.slice_mut(adj_lo, *b)[0] += acc;
                        }
                        _ => {
                            {
                                let dst = self.slice_mut(adj_lo, *a);
                                for ((d, y), yb) in dst.iter_mut().zip(vb).zip(ybar) {
                                    *d += y * yb;
                                }
                            }
                            let dst = self.slice_mut(adj_lo, *b);
                            for ((d, x), yb) in dst.iter_mut().zip(va).zip(ybar) {
                                *d += x * yb;
                            }
                        }
                    }
                }
                Op::Affine { w, x, b, rows, cols, transpose } => {
                    let wv = self.slice(values, *w);
                    let xv = self.slice(values, *x);
                    if !transpose {
                        // y = W x + b; x̄ += Wᵀ ȳ; W̄ += ȳ xᵀ; b̄ += ȳ.
                        {
                            let dst = self.slice_mut(adj_lo, *x);
                            for r in 0..*rows {
                                let row = &wv[r * cols..(r + 1) * cols];
                                let yb = ybar[r];
                                for c in 0..*cols {
                                    dst[c] += row[c] * yb;
                                }
                            }
                        }
                        {
                            let dst = self.slice_mut(adj_lo, *w);
                            for r in 0..*rows {
                                let yb = ybar[r];
                                let drow = &mut dst[r * cols..(r + 1) * cols];
                                for c in 0..*cols {
                                    drow[c] += yb * xv[c];
                                }
                            }
                        }
                    } else {
                        // y = Wᵀ x (+ b); x̄ += W ȳ; W̄ += x ȳᵀ; b̄ += ȳ.
                        {
                            let dst = self.slice_mut(adj_lo, *x);
                            for r in 0..*rows {
                                let row = &wv[r * cols..(r + 1) * cols];
                                let mut acc = 0.0;
                                for c in 0..*cols {
                                    acc += row[c] * ybar[c];
                                }
                                dst[r] += acc;
                            }
                        }
                        {
                            let dst = self.slice_mut(adj_lo, *w);
                            for r in 0..*rows {
                                let xr = xv[r];
                                let drow = &mut dst[r * cols..(r + 1) * cols];
                                for c in 0..*cols {
                                    drow[c] += xr * ybar[c];
                                }
                            }
                        }
                    }
                    if let Some(b) = b {
                        let dst = self.slice_mut(adj_lo, *b);
                        for (d, yb) in dst.iter_mut().zip(ybar) {
                            *d += yb;
                        }
                    }
                }
                Op::Softplus(a) => {
                    let va = self.slice(values, *a);
                    let dst = self.slice_mut(adj_lo, *a);
                    for ((d, &x), yb) in dst.iter_mut().zip(va).zip(ybar) {
                        *d += math::sigmoid(x) * yb;
                    }
                }
                Op::Sigmoid(a) => {
                    // Use the stored output: σ' = σ(1−σ).
                    let yv = self.slice(values, NodeId(i as u32));
                    let dst = self.slice_mut(adj_lo, *a);
                    for ((d, &s), yb) in dst.iter_mut().zip(yv).zip(ybar) {
                        *d += s * (1.0 - s) * yb;
                    }
                }
                Op::Square(a) => {
                    let va = self.slice(values, *a);
                    let dst = self.slice_mut(adj_lo, *a);
                    for ((d, &x), yb) in dst.iter_mut().zip(va).zip(ybar) {
                        *d += 2.0 * x * yb;
                    }
                }
                Op::Dot(a, b) => {
                    let va = self.slice(values, *a);
                    let vb = self.slice(values, *b);
                    let yb = ybar[0];
                    {
                        let dst = self.slice_mut(adj_lo, *a);
                        for (d, y) in dst.iter_mut().zip(vb) {
                            *d += y * yb;
                        }
                    }
                    let dst = self.slice_mut(adj_lo, *b);
                    for (d, x) in dst.iter_mut().zip(va) {
                        *d += x * yb;
                    }
                }
                Op::SkewExpand { v, n } => {
                    let dst = self.slice_mut(adj_lo, *v);
                    let mut k = 0;
                    for i in 0..*n {
                        for j in (i + 1)..*n {
                            dst[k] += ybar[j * n + i] - ybar[i * n + j];
                            k += 1;
                        }
                    }
                }
                Op::LowerExpand { v, n, strict_diag } => {
                    let vv = self.slice(values, *v);
                    let dst = self.slice_mut(adj_lo, *v);
                    let mut k = 0;
                    for i in 0..*n {
                        for j in 0..=i {
                            let yb = ybar[i * n + j];
                            dst[k] += if i == j && *strict_diag {
                                math::sigmoid(vv[k]) * yb
                            } else {
                                yb
                            };
                            k += 1;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn slice_mut<'a>(&self, storage: &'a mut [f64], id: NodeId) -> &'a mut [f64] {
        let i = id.idx();
        &mut storage[self.offsets[i]..self.offsets[i] + self.lens[i]]
    }

    /// Convenience: evaluate and pull the gradient of a scalar node with
    /// respect to the inputs in one call.
    pub fn gradient(
        &self,
        root: NodeId,
        inputs: &[f64],
        params: &[f64],
        ws: &mut Workspace,
        grad_inputs: &mut [f64],
    ) -> Result<f64, EvalError> {
        self.eval(inputs, params, ws)?;
        let val = self.value(ws, root)[0];
        grad_inputs.fill(0.0);
        self.backward(ws, root, &[1.0], Some(grad_inputs), None)?;
        Ok(val)
    }
}

/// Symmetric Hessian of a scalar node with respect to input slots
/// `lo..lo+dim`, by central finite differences of the exact reverse-mode
/// input gradient.  One exact derivative order plus one FD order is accurate
/// to ~1e-7 at `h = 1e-5`, which is plenty for eigenvalue sign checks, and
/// avoids second-order tape machinery.
pub fn fd_hessian(
    graph: &Graph,
    root: NodeId,
    inputs: &[f64],
    params: &[f64],
    lo: usize,
    dim: usize,
    h: f64,
) -> Result<Vec<f64>, EvalError> {
    let mut ws = Workspace::new();
    let mut x = inputs.to_vec();
    let mut gp = vec![0.0; graph.input_len()];
    let mut gm = vec![0.0; graph.input_len()];
    let mut hess = vec![0.0; dim * dim];
    for j in 0..dim {
        let x0 = x[lo + j];
        x[lo + j] = x0 + h;
        graph.gradient(root, &x, params, &mut ws, &mut gp)?;
        x[lo + j] = x0 - h;
        graph.gradient(root, &x, params, &mut ws, &mut gm)?;
        x[lo + j] = x0;
        for i in 0..dim {
            hess[i * dim + j] = (gp[lo + i] - gm[lo + i]) / (2.0 * h);
        }
    }
    // Symmetrize: FD noise breaks exact symmetry.
    for i in 0..dim {
        for j in 0..i {
            let s = 0.5 * (hess[i * dim + j] + hess[j * dim + i]);
            hess[i * dim + j] = s;
            hess[j * dim + i] = s;
        }
    }
    Ok(hess)
}

/// A flat parameter vector with named, non-overlapping segments.  Models
/// register their pieces in construction order, which fixes the layout.
#[derive(Debug, Clone, Default)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub name: alloc::string::String,
    pub offset: usize,
    pub len: usize,
}

/// Cheap handle to a registered segment.
#[derive(Debug, Clone, Copy)]
pub struct ParamSeg {
    pub offset: usize,
    pub len: usize,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named segment holding `init`, returning its handle.
    pub fn register(&mut self, name: &str, init: &[f64]) -> ParamSeg {
        let seg = ParamSeg { offset: self.values.len(), len: init.len() };
        self.values.extend_from_slice(init);
        self.segments.push(Segment { name: name.into(), offset: seg.offset, len: seg.len });
        seg
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn seg(&self, seg: ParamSeg) -> &[f64] {
        &self.values[seg.offset..seg.offset + seg.len]
    }

    pub fn seg_mut(&mut self, seg: ParamSeg) -> &mut [f64] {
        &mut self.values[seg.offset..seg.offset + seg.len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Central-difference gradient of a scalar root — the oracle against
    /// which reverse-mode results are judged.
    fn fd_gradients(
        graph: &Graph,
        root: NodeId,
        inputs: &[f64],
        params: &[f64],
        h: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut ws = Workspace::new();
        let eval_at = |inp: &[f64], par: &[f64], ws: &mut Workspace| {
            graph.eval(inp, par, ws).unwrap();
            graph.value(ws, root)[0]
        };
        let mut gi = vec![0.0; inputs.len()];
        let mut x = inputs.to_vec();
        for j in 0..x.len() {
            let x0 = x[j];
            x[j] = x0 + h;
            let fp = eval_at(&x, params, &mut ws);
            x[j] = x0 - h;
            let fm = eval_at(&x, params, &mut ws);
            x[j] = x0;
            gi[j] = (fp - fm) / (2.0 * h);
        }
        let mut gp = vec![0.0; params.len()];
        let mut p = params.to_vec();
        for j in 0..p.len() {
            let p0 = p[j];
            p[j] = p0 + h;
            let fp = eval_at(inputs, &p, &mut ws);
            p[j] = p0 - h;
            let fm = eval_at(inputs, &p, &mut ws);
            p[j] = p0;
            gp[j] = (fp - fm) / (2.0 * h);
        }
        (gi, gp)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let na = a.iter().map(|x| x * x).sum::<f64>();
        let nb = b.iter().map(|x| x * x).sum::<f64>();
        math::sqrt(diff) / math::sqrt(na.max(nb)).max(1e-12)
    }

    /// Builds a graph touching every op kind; returns (graph, root).
    fn kitchen_sink_graph() -> (Graph, NodeId, usize, usize) {
        let n = 3;
        let n_in = n + 2;
        let mut g = Graph::new(n_in);
        let x = g.input(0, n);
        let extra = g.input(n, 2);
        let w = g.param(0, n * n); // 3×3
        let b = g.param(n * n, n);
        let vskew = g.param(12, 3);
        let vlow = g.param(15, 6);
        let wmix = g.param(21, 2 * n); // 2×3

        let lin = g.affine(w, x, Some(b), n, n);
        let act = g.softplus(lin);
        let gate = g.sigmoid(lin);
        let gated = g.mul(act, gate);
        let j = g.skew_expand(vskew, n);
        let jx = g.affine(j, gated, None, n, n);
        let l = g.lower_expand(vlow, n, true);
        let ltx = g.affine_t(l, x, None, n, n);
        let llt = g.affine(l, ltx, None, n, n);
        let sq = g.square(x);
        let mix = g.affine(wmix, sq, None, 2, n);
        let mixed = g.mul(mix, extra);
        let back = g.affine_t(wmix, mixed, None, 2, n);
        let d1 = g.dot(jx, back);
        let d2 = g.dot(llt, x);
        let total = g.sum(&[d1, d2]);
        let scaled = g.scale(total, 0.5);
        let c = g.scalar(0.25);
        let shifted = g.sum(&[scaled, c]);
        (g, shifted, n_in, 27)
    }

    #[test]
    fn constant_and_leaf_eval() {
        let mut g = Graph::new(2);
        let c = g.constant(&[1.5, -2.0]);
        let x = g.input(0, 2);
        let s = g.sum(&[c, x]);
        let mut ws = Workspace::new();
        g.eval(&[0.5, 2.0], &[], &mut ws).unwrap();
        assert_eq!(g.value(&ws, s), &[2.0, 0.0]);
    }

    #[test]
    fn affine_hand_value() {
        // W = [[1,2],[3,4]], x = (1,1), b = (0.5, −0.5) → (3.5, 6.5).
        let mut g = Graph::new(2);
        let x = g.input(0, 2);
        let w = g.constant(&[1.0, 2.0, 3.0, 4.0]);
        let b = g.constant(&[0.5, -0.5]);
        let y = g.affine(w, x, Some(b), 2, 2);
        let mut ws = Workspace::new();
        g.eval(&[1.0, 1.0], &[], &mut ws).unwrap();
        assert_eq!(g.value(&ws, y), &[3.5, 6.5]);

        // Transposed: Wᵀ x = (4, 6) for x = (1,1).
        let yt = g.affine_t(w, x, None, 2, 2);
        g.eval(&[1.0, 1.0], &[], &mut ws).unwrap();
        assert_eq!(g.value(&ws, yt), &[4.0, 6.0]);
    }

    #[test]
    fn softplus_sigmoid_square_dot_values() {
        let mut g = Graph::new(3);
        let x = g.input(0, 3);
        let sp = g.softplus(x);
        let sg = g.sigmoid(x);
        let sq = g.square(x);
        let d = g.dot(x, x);
        let mut ws = Workspace::new();
        g.eval(&[0.0, 1.0, -2.0], &[], &mut ws).unwrap();
        assert_eq!(g.value(&ws, sp)[0], core::f64::consts::LN_2);
        assert_eq!(g.value(&ws, sg)[0], 0.5);
        assert_eq!(g.value(&ws, sq), &[0.0, 1.0, 4.0]);
        assert_eq!(g.value(&ws, d)[0], 5.0);
    }

    #[test]
    fn product_broadcasts_scalar() {
        let mut g = Graph::new(3);
        let x = g.input(0, 3);
        let s = g.scalar(2.0);
        let left = g.mul(s, x);
        let right = g.mul(x, s);
        let both = g.mul(x, x);
        let mut ws = Workspace::new();
        g.eval(&[1.0, -2.0, 0.5], &[], &mut ws).unwrap();
        assert_eq!(g.value(&ws, left), &[2.0, -4.0, 1.0]);
        assert_eq!(g.value(&ws, right), &[2.0, -4.0, 1.0]);
        assert_eq!(g.value(&ws, both), &[1.0, 4.0, 0.25]);
    }

    #[test]
    fn skew_expand_convention() {
        // v = (a,b,c) → [[0,−a,−b],[a,0,−c],[b,c,0]].
        let mut g = Graph::new(0);
        let v = g.constant(&[1.0, 2.0, 3.0]);
        let j = g.skew_expand(v, 3);
        let mut ws = Workspace::new();
        g.eval(&[], &[], &mut ws).unwrap();
        let m = g.value(&ws, j);
        assert_eq!(m, &[0.0, -1.0, -2.0, 1.0, 0.0, -3.0, 2.0, 3.0, 0.0]);
        // Exactly skew.
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(m[i * 3 + k], -m[k * 3 + i]);
            }
        }
    }

    #[test]
    fn lower_expand_diag_modes() {
        let mut g = Graph::new(0);
        let v = g.constant(&[0.0, 2.0, -1.0]);
        let strict = g.lower_expand(v, 2, true);
        let semi = g.lower_expand(v, 2, false);
        let mut ws = Workspace::new();
        g.eval(&[], &[], &mut ws).unwrap();
        let ln2 = core::f64::consts::LN_2;
        assert_eq!(g.value(&ws, strict), &[ln2, 0.0, 2.0, math::softplus(-1.0)]);
        assert_eq!(g.value(&ws, semi), &[0.0, 0.0, 2.0, -1.0]);
    }

    #[test]
    fn backward_matches_fd_on_kitchen_sink() {
        let (g, root, n_in, n_par) = kitchen_sink_graph();
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            // xorshift*; plenty for test data.
            rng_state ^= rng_state >> 12;
            rng_state ^= rng_state << 25;
            rng_state ^= rng_state >> 27;
            (rng_state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 * 2.0
                - 1.0
        };
        for _case in 0..20 {
            let inputs: Vec<f64> = (0..n_in).map(|_| next() * 1.5).collect();
            let params: Vec<f64> = (0..n_par).map(|_| next()).collect();
            let mut ws = Workspace::new();
            g.eval(&inputs, &params, &mut ws).unwrap();
            let mut gi = vec![0.0; n_in];
            let mut gp = vec![0.0; n_par];
            g.backward(&mut ws, root, &[1.0], Some(&mut gi), Some(&mut gp)).unwrap();
            let (fdi, fdp) = fd_gradients(&g, root, &inputs, &params, 1e-5);
            assert!(rel_err(&gi, &fdi) < 1e-6, "input grad mismatch: {:e}", rel_err(&gi, &fdi));
            assert!(rel_err(&gp, &fdp) < 1e-6, "param grad mismatch: {:e}", rel_err(&gp, &fdp));
        }
    }

    #[test]
    fn backward_accumulates_into_buffers() {
        let mut g = Graph::new(1);
        let x = g.input(0, 1);
        let y = g.square(x);
        let mut ws = Workspace::new();
        g.eval(&[3.0], &[], &mut ws).unwrap();
        let mut gi = vec![10.0];
        g.backward(&mut ws, y, &[1.0], Some(&mut gi), None).unwrap();
        assert_eq!(gi[0], 16.0); // 10 + 2·3
    }

    #[test]
    fn repeated_operand_gets_both_contributions() {
        // f = x·x (Dot with the same operand twice) → df/dx = 2x.
        let mut g = Graph::new(2);
        let x = g.input(0, 2);
        let d = g.dot(x, x);
        let mut ws = Workspace::new();
        g.eval(&[2.0, -3.0], &[], &mut ws).unwrap();
        let mut gi = vec![0.0; 2];
        g.backward(&mut ws, d, &[1.0], Some(&mut gi), None).unwrap();
        assert_eq!(gi, vec![4.0, -6.0]);
    }

    #[test]
    fn unbound_inputs_or_params_error() {
        let mut g = Graph::new(3);
        let x = g.input(0, 3);
        let p = g.param(0, 2);
        let _ = (x, p);
        let mut ws = Workspace::new();
        assert!(matches!(
            g.eval(&[1.0], &[1.0, 2.0], &mut ws),
            Err(EvalError::InputLength { expected: 3, got: 1 })
        ));
        assert!(matches!(
            g.eval(&[1.0, 2.0, 3.0], &[1.0], &mut ws),
            Err(EvalError::ParamLength { required: 2, got: 1 })
        ));
    }

    #[test]
    fn eval_is_deterministic() {
        let (g, root, n_in, n_par) = kitchen_sink_graph();
        let inputs: Vec<f64> = (0..n_in).map(|i| 0.3 * i as f64 - 0.7).collect();
        let params: Vec<f64> = (0..n_par).map(|i| 0.1 * i as f64 - 1.0).collect();
        let mut ws1 = Workspace::new();
        let mut ws2 = Workspace::new();
        g.eval(&inputs, &params, &mut ws1).unwrap();
        g.eval(&inputs, &params, &mut ws2).unwrap();
        assert_eq!(g.value(&ws1, root)[0].to_bits(), g.value(&ws2, root)[0].to_bits());
    }

    #[test]
    fn fd_hessian_of_quadratic_form() {
        // f(x) = xᵀ A x with A = [[1,1],[0,1]] → Hessian A + Aᵀ = [[2,1],[1,2]].
        let mut g = Graph::new(2);
        let x = g.input(0, 2);
        let a = g.constant(&[1.0, 1.0, 0.0, 1.0]);
        let ax = g.affine(a, x, None, 2, 2);
        let f = g.dot(x, ax);
        let h = fd_hessian(&g, f, &[0.3, -0.8], &[], 0, 2, 1e-5).unwrap();
        let want = [2.0, 1.0, 1.0, 2.0];
        for (got, want) in h.iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-6, "hessian entry {got} vs {want}");
        }
    }

    #[test]
    fn fd_hessian_of_unit_dot_is_identity_scaled() {
        let mut g = Graph::new(3);
        let x = g.input(0, 3);
        let f = g.dot(x, x);
        let h = fd_hessian(&g, f, &[1.0, 2.0, 3.0], &[], 0, 3, 1e-5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 } else { 0.0 };
                assert!((h[i * 3 + j] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn param_vector_segments() {
        let mut pv = ParamVector::new();
        let a = pv.register("w0", &[1.0, 2.0]);
        let b = pv.register("b0", &[3.0]);
        assert_eq!(pv.len(), 3);
        assert_eq!(pv.seg(a), &[1.0, 2.0]);
        assert_eq!(pv.seg(b), &[3.0]);
        assert_eq!(pv.segments()[1].name, "b0");
        pv.seg_mut(b)[0] = -1.0;
        assert_eq!(pv.values(), &[1.0, 2.0, -1.0]);
    }
}
