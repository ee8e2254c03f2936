//! Small dense networks: state encoding, masked-softmax policy head, scalar
//! value head and backpropagated gradients.
//!
//! Parameters are value types. Gradients share the parameter type so that
//! they can be added, scaled and applied without conversion.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use thiserror::Error;

use crate::env::LocalState;
use crate::graph::NodeRef;
use crate::seed::Rng;

pub const DEFAULT_HIDDEN: [usize; 2] = [100, 100];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("a network needs at least an input and an output dimension")]
    TooFewLayers,
    #[error("mask has no legal action")]
    EmptyMask,
    #[error("non-finite logits (the policy has diverged)")]
    NonFinite,
    #[error("action {0} is masked out")]
    MaskedAction(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parameter file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Layout of the per-file state encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingDims {
    pub n_gateways: usize,
    pub n_satellites: usize,
    pub horizon: usize,
}

impl EncodingDims {
    pub fn len(&self) -> usize {
        self.n_gateways + self.n_satellites + 5
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_actions(&self) -> usize {
        2 + self.n_gateways + self.n_satellites
    }
}

/// `[initial, terminal, gateways.., satellites.., flag, flag defined, t/T]`.
pub fn encode_state(local: &LocalState, t: usize, dims: EncodingDims) -> Vec<f64> {
    let mut x = vec![0.0; dims.len()];
    let hot = match local.location {
        NodeRef::Initial => 0,
        NodeRef::Terminal => 1,
        NodeRef::Gateway(g) => 2 + g,
        NodeRef::Satellite(s) => 2 + dims.n_gateways + s,
        NodeRef::UserCluster(_) => panic!("files never rest at a user cluster"),
    };
    x[hot] = 1.0;
    let n = dims.len();
    if let Some(flag) = local.flag {
        x[n - 3] = f64::from(u8::from(flag));
        x[n - 2] = 1.0;
    }
    x[n - 1] = if dims.horizon == 0 { 0.0 } else { t as f64 / dims.horizon as f64 };
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// A tanh multilayer perceptron with identity output. Also used as the
/// gradient bundle of a network of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Per-layer activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[L]` the output.
    pub acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("non-empty cache")
    }
}

impl DenseNet {
    pub fn zeros(dims: &[usize]) -> Result<Self, NetError> {
        if dims.len() < 2 {
            return Err(NetError::TooFewLayers);
        }
        Ok(Self {
            layers: dims
                .windows(2)
                .map(|w| Dense { w: Array2::zeros((w[1], w[0])), b: Array1::zeros(w[1]) })
                .collect(),
        })
    }

    /// Uniform in ±1/√fan_in, weights and biases alike.
    pub fn init(dims: &[usize], rng: &mut Rng) -> Result<Self, NetError> {
        let mut net = Self::zeros(dims)?;
        for l in &mut net.layers {
            let r = 1.0 / (l.w.ncols() as f64).sqrt();
            let u = Uniform::new_inclusive(-r, r);
            l.w.iter_mut().for_each(|x| *x = u.sample(rng));
            l.b.iter_mut().for_each(|x| *x = u.sample(rng));
        }
        Ok(net)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims()).expect("valid dims")
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.ncols()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().expect("layers").w.nrows()
    }

    /// Flat view in file order: per layer, weights row-major then biases.
    pub fn get(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.w.len() {
                return l.w.as_slice().expect("contiguous")[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut i: usize, v: f64) {
        for l in &mut self.layers {
            if i < l.w.len() {
                l.w.as_slice_mut().expect("contiguous")[i] = v;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = v;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().copied().chain(l.b.iter().copied()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    fn check_shape(&self, other: &DenseNet) -> Result<(), NetError> {
        if self.dims() != other.dims() {
            return Err(NetError::Shape(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(())
    }

    /// `self += scale * grad`.
    pub fn add_scaled(&mut self, grad: &DenseNet, scale: f64) -> Result<(), NetError> {
        self.check_shape(grad)?;
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.w.scaled_add(scale, &g.w);
            l.b.scaled_add(scale, &g.b);
        }
        Ok(())
    }

    /// `params + direction * step * grad` as a new value.
    pub fn apply_update(&self, grad: &DenseNet, step: f64, direction: f64) -> Result<DenseNet, NetError> {
        let mut out = self.clone();
        out.add_scaled(grad, direction * step)?;
        Ok(out)
    }

    /// Σ|x| over all entries.
    pub fn l1_norm(&self) -> f64 {
        self.values().map(f64::abs).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = Array1::from(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = l.w.dot(&a);
            z += &l.b;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        a.to_vec()
    }

    /// Forward a batch (one row per input), keeping activations.
    pub fn forward_batch(&self, x: Array2<f64>) -> ForwardCache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w.t());
            z += &l.b;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        ForwardCache { acts }
    }

    /// Gradient of `Σ_rows Σ_k upstream[r, k] · output[r, k]` with respect
    /// to the parameters.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> DenseNet {
        let mut grad = self.zeros_like();
        let mut delta = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.acts[i];
            grad.layers[i].w = delta.t().dot(input);
            grad.layers[i].b = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d = delta.dot(&self.layers[i].w);
                Zip::from(&mut d).and(input).for_each(|d, &a| *d *= 1.0 - a * a);
                delta = d;
            }
        }
        grad
    }
}

/// Softmax over the unmasked logits; masked entries are exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NetError> {
    if !mask.iter().any(|&m| m) {
        return Err(NetError::EmptyMask);
    }
    if logits.iter().zip(mask).any(|(l, &m)| m && !l.is_finite()) {
        return Err(NetError::NonFinite);
    }
    let top = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - top).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

pub fn policy_forward(theta: &DenseNet, enc: &[f64], mask: &[bool]) -> Result<Vec<f64>, NetError> {
    if mask.len() != theta.d_out() {
        return Err(NetError::Shape(format!("mask length {} vs {} logits", mask.len(), theta.d_out())));
    }
    masked_softmax(&theta.forward(enc), mask)
}

pub fn value_forward(psi: &DenseNet, enc: &[f64]) -> f64 {
    psi.forward(enc)[0]
}

/// `∂ log π(a | enc) / ∂θ`.
pub fn logprob_gradient(theta: &DenseNet, enc: &[f64], mask: &[bool], action: usize) -> Result<DenseNet, NetError> {
    let x = Array2::from_shape_vec((1, enc.len()), enc.to_vec()).map_err(|e| NetError::Shape(e.to_string()))?;
    let cache = theta.forward_batch(x);
    let up = logprob_upstream(cache.output().row(0), mask, action, 1.0)?;
    let up = up.insert_axis(Axis(0));
    Ok(theta.backward(&cache, &up))
}

/// `weight · ∂ log π(a)/∂logits`: `weight · (onehot(a) − π)` on unmasked
/// entries, zero elsewhere.
pub fn logprob_upstream(logits: ArrayView1<f64>, mask: &[bool], action: usize, weight: f64) -> Result<Array1<f64>, NetError> {
    if !mask.get(action).copied().unwrap_or(false) {
        return Err(NetError::MaskedAction(action));
    }
    let p = masked_softmax(logits.as_slice().expect("contiguous row"), mask)?;
    let mut up = Array1::zeros(p.len());
    for (k, &pk) in p.iter().enumerate() {
        if mask[k] {
            let onehot = if k == action { 1.0 } else { 0.0 };
            up[k] = weight * (onehot - pk);
        }
    }
    Ok(up)
}

/// `∂V(enc)/∂ψ`.
pub fn value_gradient(psi: &DenseNet, enc: &[f64]) -> Result<DenseNet, NetError> {
    let x = Array2::from_shape_vec((1, enc.len()), enc.to_vec()).map_err(|e| NetError::Shape(e.to_string()))?;
    let cache = psi.forward_batch(x);
    Ok(psi.backward(&cache, &Array2::ones((1, 1))))
}

/// Stack encodings into a batch matrix.
pub fn batch(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), width));
    for (mut r, x) in m.rows_mut().into_iter().zip(rows) {
        r.assign(&ArrayView1::from(x.as_slice()));
    }
    m
}

impl DenseNet {
    /// `NET v1 <n_layers> <dims...>`, then one block per layer: weight rows,
    /// then the bias row. Values use shortest round-trip formatting.
    pub fn save(&self) -> String {
        let dims = self.dims();
        let mut s = format!("NET v1 {}", self.layers.len());
        for d in &dims {
            s.push_str(&format!(" {d}"));
        }
        s.push('\n');
        let join = |it: &mut dyn Iterator<Item = &f64>| it.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
        for l in &self.layers {
            s.push('\n');
            for row in l.w.rows() {
                s.push_str(&join(&mut row.iter()));
                s.push('\n');
            }
            s.push_str(&join(&mut l.b.iter()));
            s.push('\n');
        }
        s
    }

    pub fn load(text: &str) -> Result<Self, NetError> {
        let perr = |line: usize, message: String| NetError::Parse { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() < 3 || toks[0] != "NET" || toks[1] != "v1" {
            return Err(perr(hl + 1, "expected `NET v1 <n_layers> <dims...>`".into()));
        }
        let n_layers: usize = toks[2].parse().map_err(|_| perr(hl + 1, "bad layer count".into()))?;
        let dims: Vec<usize> = toks[3..]
            .iter()
            .map(|t| t.parse().map_err(|_| perr(hl + 1, format!("bad dimension `{t}`"))))
            .collect::<Result<_, _>>()?;
        if dims.len() != n_layers + 1 || n_layers == 0 {
            return Err(perr(hl + 1, format!("{n_layers} layers need {} dimensions", n_layers + 1)));
        }
        let mut net = Self::zeros(&dims)?;
        for l in &mut net.layers {
            let (rows, cols) = l.w.dim();
            for r in 0..rows {
                let (ln, line) = lines.next().ok_or_else(|| perr(0, "truncated file".into()))?;
                let vals = parse_row(line, cols).map_err(|m| perr(ln + 1, m))?;
                l.w.row_mut(r).assign(&Array1::from(vals));
            }
            let (ln, line) = lines.next().ok_or_else(|| perr(0, "truncated file".into()))?;
            l.b = Array1::from(parse_row(line, rows).map_err(|m| perr(ln + 1, m))?);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln + 1, "trailing data".into()));
        }
        if !net.is_finite() {
            return Err(perr(0, "non-finite parameter".into()));
        }
        Ok(net)
    }
}

fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>, String> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect::<Result<_, _>>()?;
    if vals.len() != expected {
        return Err(format!("expected {expected} values, found {}", vals.len()));
    }
    Ok(vals)
}
