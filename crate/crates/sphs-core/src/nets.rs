//! Feed-forward networks used as Hamiltonian surrogates and matrix-valued
//! heads.
//!
//! Two architectures:
//!
//! * [`Ffnn`] — standard MLP with softplus hidden activations and an affine
//!   output layer.
//! * [`Ficnn`] — fully input-convex scalar network: hidden-to-hidden
//!   weights are kept non-negative via a softplus reparameterization and
//!   every layer receives a direct affine pass-through from the input, so
//!   the output is convex in the input by construction.
//!
//! Networks do not own their parameters: construction registers named
//! segments in a shared [`ParamVector`] and remembers offsets.  Forward
//! passes can run either directly on slices (cheap inference) or be *built*
//! into an [`autodiff::Graph`], together with the symbolic input-gradient
//! (`build_vjp`), which is how downstream losses get exact derivatives
//! through `∇H`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, ParamSeg, ParamVector};
use crate::math;

/// Hidden-layer activation.  Softplus keeps Hamiltonians smooth (C∞) and is
/// the derivative chain the convex architecture is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Softplus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    /// Input slice length does not match the network's input dimension.
    InputDim { expected: usize, got: usize },
    /// A configuration value is unusable (e.g. zero input dimension).
    Config(alloc::string::String),
}

impl core::fmt::Display for NetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NetError::InputDim { expected, got } => {
                write!(f, "input has length {got}, network expects {expected}")
            }
            NetError::Config(msg) => write!(f, "bad network config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NetError {}

/// Glorot-uniform bound for a `fan_in → fan_out` layer.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    math::sqrt(6.0 / (fan_in + fan_out) as f64)
}

fn fill_glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let a = glorot_bound(fan_in, fan_out);
    for w in out.iter_mut() {
        *w = rng.random_range(-a..a);
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamSeg,
    b: ParamSeg,
    rows: usize,
    cols: usize,
}

/// Plain multilayer perceptron: softplus hidden layers, affine output.
#[derive(Debug, Clone)]
pub struct FfnnConfig {
    pub input_dim: usize,
    /// Hidden widths; empty means a single affine map.
    pub widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl FfnnConfig {
    pub fn new(input_dim: usize, widths: &[usize], output_dim: usize) -> Self {
        FfnnConfig {
            input_dim,
            widths: widths.to_vec(),
            output_dim,
            activation: Activation::Softplus,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ffnn {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Dense>,
}

/// Node handles produced while building a forward pass; the VJP builder
/// needs the pre-activations.
#[derive(Debug, Clone)]
pub struct FfnnTrace {
    pub out: NodeId,
    preacts: Vec<NodeId>,
}

impl Ffnn {
    /// Register parameters (Glorot weights, zero biases) and return the net.
    /// `name` prefixes the parameter segment names.
    pub fn init(
        cfg: &FfnnConfig,
        name: &str,
        params: &mut ParamVector,
        seed: u64,
    ) -> Result<Ffnn, NetError> {
        if cfg.input_dim == 0 {
            return Err(NetError::Config("input_dim must be positive".into()));
        }
        if cfg.output_dim == 0 {
            return Err(NetError::Config("output_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut fan_in = cfg.input_dim;
        for (i, &width) in cfg.widths.iter().chain(core::iter::once(&cfg.output_dim)).enumerate() {
            let mut w = vec![0.0; width * fan_in];
            fill_glorot(&mut rng, fan_in, width, &mut w);
            let wseg = params.register(&format!("{name}.w{i}"), &w);
            let bseg = params.register(&format!("{name}.b{i}"), &vec![0.0; width]);
            layers.push(Dense { w: wseg, b: bseg, rows: width, cols: fan_in });
            fan_in = width;
        }
        Ok(Ffnn { input_dim: cfg.input_dim, output_dim: cfg.output_dim, layers })
    }

    /// Re-draw Glorot weights and zero the biases in place.
    pub fn init_glorot(&self, params: &mut ParamVector, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &self.layers {
            let mut w = vec![0.0; layer.rows * layer.cols];
            fill_glorot(&mut rng, layer.cols, layer.rows, &mut w);
            params.seg_mut(layer.w).copy_from_slice(&w);
            params.seg_mut(layer.b).fill(0.0);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Iterate `(weight, bias)` segments, input side first.
    pub fn layer_segs(&self) -> impl Iterator<Item = (ParamSeg, ParamSeg)> + '_ {
        self.layers.iter().map(|l| (l.w, l.b))
    }

    /// Direct forward pass (no graph).  Accumulation order matches the
    /// graph-built version bit for bit.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::InputDim { expected: self.input_dim, got: x.len() });
        }
        let mut a = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let w = &params[layer.w.offset..layer.w.offset + layer.w.len];
            let b = &params[layer.b.offset..layer.b.offset + layer.b.len];
            let mut z = vec![0.0; layer.rows];
            for r in 0..layer.rows {
                let row = &w[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for c in 0..layer.cols {
                    acc += row[c] * a[c];
                }
                z[r] = acc + b[r];
            }
            if li + 1 < self.layers.len() {
                for v in z.iter_mut() {
                    *v = math::softplus(*v);
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Emit the forward pass into `g`, consuming node `x` of matching length.
    pub fn build_forward(&self, g: &mut Graph, x: NodeId) -> FfnnTrace {
        assert_eq!(g.len_of(x), self.input_dim, "ffnn input node length mismatch");
        let mut a = x;
        let mut preacts = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let w = g.param(layer.w.offset, layer.w.len);
            let b = g.param(layer.b.offset, layer.b.len);
            let z = g.affine(w, a, Some(b), layer.rows, layer.cols);
            preacts.push(z);
            a = if li + 1 < self.layers.len() { g.softplus(z) } else { z };
        }
        FfnnTrace { out: a, preacts }
    }

    /// Emit the input-gradient of `seedᵀ · output` as forward nodes: the
    /// standard backprop chain `Wᵀ (σ'(z) ⊙ …)` spelled out with `Affine`,
    /// `Sigmoid` and `Mul` ops.  Returns a node of the input's length.
    pub fn build_vjp(&self, g: &mut Graph, trace: &FfnnTrace, seed: NodeId) -> NodeId {
        assert_eq!(g.len_of(seed), self.output_dim, "vjp seed length mismatch");
        let mut d = seed;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            if li + 1 < self.layers.len() {
                let gate = g.sigmoid(trace.preacts[li]);
                d = g.mul(d, gate);
            }
            let w = g.param(layer.w.offset, layer.w.len);
            d = g.affine_t(w, d, None, layer.rows, layer.cols);
        }
        d
    }
}

/// Fully input-convex network producing a scalar.
///
/// With hidden widths `w₁ … w_k`:
///
/// ```text
/// z₁   = σ(W₀ x + b₀)
/// zᵢ₊₁ = σ(softplus(Ûᵢ) zᵢ + Wᵢ x + bᵢ)      i = 1 … k−1
/// f    = softplus(Û_k) z_k + W_k x + b_k     (affine, scalar)
/// ```
///
/// Convexity argument: every `zᵢ` is convex in `x` (composition of a convex
/// non-decreasing activation with a non-negative combination of convex
/// functions plus an affine term), and the final layer is a non-negative
/// combination plus affine.
#[derive(Debug, Clone)]
pub struct FicnnConfig {
    pub input_dim: usize,
    /// Hidden widths; must be non-empty.
    pub widths: Vec<usize>,
}

impl FicnnConfig {
    pub fn new(input_dim: usize, widths: &[usize]) -> Self {
        FicnnConfig { input_dim, widths: widths.to_vec() }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvexLayer {
    /// Raw (pre-softplus) hidden-to-hidden weights, `rows × prev`.
    u_raw: ParamSeg,
    /// Input pass-through, `rows × input_dim`.
    w: ParamSeg,
    b: ParamSeg,
    rows: usize,
    prev: usize,
}

#[derive(Debug, Clone)]
pub struct Ficnn {
    input_dim: usize,
    first: Dense,
    /// Hidden layers 2…k and the final scalar layer (rows = 1).
    rest: Vec<ConvexLayer>,
}

#[derive(Debug, Clone)]
pub struct FicnnTrace {
    /// Scalar output node.
    pub out: NodeId,
    /// Pre-activations of the hidden layers (not the final affine).
    preacts: Vec<NodeId>,
    /// Effective (softplus-mapped) hidden-to-hidden weight nodes.
    u_eff: Vec<NodeId>,
}

impl Ficnn {
    pub fn init(
        cfg: &FicnnConfig,
        name: &str,
        params: &mut ParamVector,
        seed: u64,
    ) -> Result<Ficnn, NetError> {
        if cfg.input_dim == 0 {
            return Err(NetError::Config("input_dim must be positive".into()));
        }
        if cfg.widths.is_empty() {
            return Err(NetError::Config("convex net needs at least one hidden layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.input_dim;

        let mut w0 = vec![0.0; cfg.widths[0] * n];
        fill_glorot(&mut rng, n, cfg.widths[0], &mut w0);
        let first = Dense {
            w: params.register(&format!("{name}.w0"), &w0),
            b: params.register(&format!("{name}.b0"), &vec![0.0; cfg.widths[0]]),
            rows: cfg.widths[0],
            cols: n,
        };

        let mut rest = Vec::new();
        let mut prev = cfg.widths[0];
        for (i, &width) in cfg.widths[1..].iter().chain(core::iter::once(&1)).enumerate() {
            // Effective U must start non-negative and Glorot-scaled, so the
            // raw values are softplus-inverses of |Glorot| draws.
            let a = glorot_bound(prev, width);
            let mut u_raw = vec![0.0; width * prev];
            for u in u_raw.iter_mut() {
                let sample = math::abs(rng.random_range(-a..a)).max(1e-12);
                *u = math::softplus_inv(sample);
            }
            let mut w = vec![0.0; width * n];
            fill_glorot(&mut rng, n, width, &mut w);
            let li = i + 1;
            rest.push(ConvexLayer {
                u_raw: params.register(&format!("{name}.u{li}"), &u_raw),
                w: params.register(&format!("{name}.w{li}"), &w),
                b: params.register(&format!("{name}.b{li}"), &vec![0.0; width]),
                rows: width,
                prev,
            });
            prev = width;
        }
        Ok(Ficnn { input_dim: n, first, rest })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Direct scalar forward pass.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<f64, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::InputDim { expected: self.input_dim, got: x.len() });
        }
        let seg = |s: ParamSeg| &params[s.offset..s.offset + s.len];
        let mut z = vec![0.0; self.first.rows];
        for r in 0..self.first.rows {
            let row = &seg(self.first.w)[r * self.first.cols..(r + 1) * self.first.cols];
            let mut acc = 0.0;
            for c in 0..self.first.cols {
                acc += row[c] * x[c];
            }
            z[r] = math::softplus(acc + seg(self.first.b)[r]);
        }
        for (li, layer) in self.rest.iter().enumerate() {
            let u = seg(layer.u_raw);
            let w = seg(layer.w);
            let b = seg(layer.b);
            let mut next = vec![0.0; layer.rows];
            for r in 0..layer.rows {
                let mut acc = 0.0;
                for c in 0..layer.prev {
                    acc += math::softplus(u[r * layer.prev + c]) * z[c];
                }
                for c in 0..self.input_dim {
                    acc += w[r * self.input_dim + c] * x[c];
                }
                acc += b[r];
                next[r] = if li + 1 < self.rest.len() { math::softplus(acc) } else { acc };
            }
            z = next;
        }
        Ok(z[0])
    }

    /// Emit the forward pass into `g`.
    pub fn build_forward(&self, g: &mut Graph, x: NodeId) -> FicnnTrace {
        assert_eq!(g.len_of(x), self.input_dim, "ficnn input node length mismatch");
        let w0 = g.param(self.first.w.offset, self.first.w.len);
        let b0 = g.param(self.first.b.offset, self.first.b.len);
        let pre0 = g.affine(w0, x, Some(b0), self.first.rows, self.first.cols);
        let mut preacts = vec![pre0];
        let mut u_eff = Vec::new();
        let mut z = g.softplus(pre0);
        let mut out = z;
        for (li, layer) in self.rest.iter().enumerate() {
            let u_raw = g.param(layer.u_raw.offset, layer.u_raw.len);
            let u = g.softplus(u_raw);
            u_eff.push(u);
            let w = g.param(layer.w.offset, layer.w.len);
            let b = g.param(layer.b.offset, layer.b.len);
            let uz = g.affine(u, z, None, layer.rows, layer.prev);
            let wx = g.affine(w, x, Some(b), layer.rows, self.input_dim);
            let pre = g.sum(&[uz, wx]);
            if li + 1 < self.rest.len() {
                preacts.push(pre);
                z = g.softplus(pre);
                out = z;
            } else {
                out = pre; // final layer stays affine
            }
        }
        FicnnTrace { out, preacts, u_eff }
    }

    /// Emit `∂(seed · f)/∂x` as forward nodes.  `seed` is scalar.
    pub fn build_vjp(&self, g: &mut Graph, trace: &FicnnTrace, seed: NodeId) -> NodeId {
        assert_eq!(g.len_of(seed), 1, "ficnn vjp seed must be scalar");
        let n = self.input_dim;
        let mut xbar_terms: Vec<NodeId> = Vec::new();
        // d carries the adjoint of zᵢ (or of the final affine output).
        let mut d = seed;
        for (li, layer) in self.rest.iter().enumerate().rev() {
            if li + 1 < self.rest.len() {
                // d is the adjoint of z_{li+1}; pass through the activation.
                let gate = g.sigmoid(trace.preacts[li + 1]);
                d = g.mul(d, gate);
            }
            let w = g.param(layer.w.offset, layer.w.len);
            xbar_terms.push(g.affine_t(w, d, None, layer.rows, n));
            d = g.affine_t(trace.u_eff[li], d, None, layer.rows, layer.prev);
        }
        let gate0 = g.sigmoid(trace.preacts[0]);
        d = g.mul(d, gate0);
        let w0 = g.param(self.first.w.offset, self.first.w.len);
        xbar_terms.push(g.affine_t(w0, d, None, self.first.rows, self.first.cols));
        g.sum(&xbar_terms)
    }
}
