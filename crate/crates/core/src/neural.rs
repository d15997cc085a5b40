//! Dense feed-forward networks with reverse-mode gradients and Adam.
//!
//! Batches are column-major: an input batch is an `in_dim x batch` matrix,
//! one sample per column. Everything is `f64`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Per-layer inputs, pre-activations and outputs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("cache of a non-empty network")
    }

    pub fn pre_activations(&self, layer: usize) -> &DMatrix<f64> {
        &self.pre[layer]
    }
}

/// Gradients with the same shapes as the network's layers. Also used for
/// Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| DMatrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: net.layers.iter().map(|l| DVector::zeros(l.out_dim())).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn matches(&self, net: &Network) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net
                .layers
                .iter()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(l, (w, b))| w.shape() == l.weights.shape() && b.len() == l.bias.len())
    }
}

impl Network {
    /// Builds a network with layer widths `dims` (input first). Weights and
    /// biases are uniform in `+-1/sqrt(fan_in)`; the final layer is further
    /// multiplied by `final_scale`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        final_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::invalid("need at least one layer and one activation per layer"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let n = activations.len();
        let layers = (0..n)
            .map(|i| {
                let bound = 1.0 / (dims[i] as f64).sqrt();
                let s = if i + 1 == n { final_scale } else { 1.0 };
                let mut draw = || rng.random_range(-bound..bound) * s;
                let weights = DMatrix::from_fn(dims[i + 1], dims[i], |_, _| draw());
                let bias = DVector::from_fn(dims[i + 1], |_, _| draw());
                Layer {
                    weights,
                    bias,
                    activation: activations[i],
                }
            })
            .collect();
        Ok(Network { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::invalid(format!(
                    "layer {i}: bias length does not match output width"
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::invalid(format!(
                    "layer {i}: input width does not match previous layer"
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Network { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn affine(layer: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weights * x;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        if x.nrows() != self.in_dim() {
            return Err(Error::invalid(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.in_dim()
            )));
        }
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            post: Vec::with_capacity(self.layers.len()),
        };
        let mut current = x.clone();
        for layer in &self.layers {
            let z = Self::affine(layer, &current);
            let a = z.map(|v| layer.activation.apply(v));
            cache.inputs.push(current);
            cache.pre.push(z);
            current = a.clone();
            cache.post.push(a);
        }
        Ok((current, cache))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.in_dim() {
            return Err(Error::invalid(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.in_dim()
            )));
        }
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = Self::affine(layer, &current);
            z.apply(|v| *v = layer.activation.apply(*v));
            current = z;
        }
        Ok(current)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        let (y, cache) = self.forward_batch(&x)?;
        Ok((y.as_slice().to_vec(), cache))
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        Ok(self.predict_batch(&x)?.as_slice().to_vec())
    }

    /// Reverse pass. `output_grad` is dLoss/dOutput with the batch layout of
    /// the cached forward pass. Returns parameter gradients and dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &DMatrix<f64>) -> Result<(Gradients, DMatrix<f64>)> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::invalid("cache was produced by a different network"));
        }
        for (l, z) in self.layers.iter().zip(&cache.pre) {
            if z.nrows() != l.out_dim() {
                return Err(Error::invalid("cache shape does not match network"));
            }
        }
        if output_grad.shape() != cache.output().shape() {
            return Err(Error::invalid("output gradient shape does not match cached output"));
        }
        let n = self.layers.len();
        let mut grads = Gradients {
            weights: Vec::with_capacity(n),
            biases: Vec::with_capacity(n),
        };
        let mut upstream = output_grad.clone();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let z = &cache.pre[i];
            let a = &cache.post[i];
            let dz = if layer.activation == Activation::Identity {
                upstream
            } else {
                DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| {
                    upstream[(r, c)] * layer.activation.derivative(z[(r, c)], a[(r, c)])
                })
            };
            grads.weights.push(&dz * cache.inputs[i].transpose());
            grads.biases.push(dz.column_sum());
            upstream = layer.weights.tr_mul(&dz);
        }
        grads.weights.reverse();
        grads.biases.reverse();
        Ok((grads, upstream))
    }

    /// `self <- tau * source + (1 - tau) * self` for every parameter.
    pub fn polyak_from(&mut self, source: &Network, tau: f64) -> Result<()> {
        if self.dims() != source.dims() {
            return Err(Error::invalid("polyak update between networks of different shapes"));
        }
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            t.weights.zip_apply(&s.weights, |t, s| *t = tau * s + (1.0 - tau) * *t);
            t.bias.zip_apply(&s.bias, |t, s| *t = tau * s + (1.0 - tau) * *t);
        }
        Ok(())
    }

    fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut i = index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights.as_mut_slice()[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias.as_mut_slice()[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }
}

fn flat_grad(g: &Gradients, index: usize) -> f64 {
    let mut i = index;
    for (w, b) in g.weights.iter().zip(&g.biases) {
        if i < w.len() {
            return w.as_slice()[i];
        }
        i -= w.len();
        if i < b.len() {
            return b.as_slice()[i];
        }
        i -= b.len();
    }
    panic!("gradient index {index} out of range");
}

/// Largest relative disagreement between `analytic` and central differences
/// of `objective` over every parameter of `net`:
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn finite_difference_error<F>(net: &Network, analytic: &Gradients, fd_step: f64, mut objective: F) -> f64
where
    F: FnMut(&Network) -> f64,
{
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for idx in 0..net.num_params() {
        let orig = *probe.param_mut(idx);
        *probe.param_mut(idx) = orig + fd_step;
        let up = objective(&probe);
        *probe.param_mut(idx) = orig - fd_step;
        let down = objective(&probe);
        *probe.param_mut(idx) = orig;
        let numeric = (up - down) / (2.0 * fd_step);
        let a = flat_grad(analytic, idx);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

/// Gradient check for a scalar loss of the network output. `loss` returns
/// the loss value and its gradient with respect to the output batch.
pub fn grad_check<L>(net: &Network, input: &DMatrix<f64>, loss: L, fd_step: f64) -> Result<f64>
where
    L: Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>),
{
    let (out, cache) = net.forward_batch(input)?;
    let (_, dout) = loss(&out);
    let (grads, _) = net.backward(&cache, &dout)?;
    Ok(finite_difference_error(net, &grads, fd_step, |n| {
        let y = n.predict_batch(input).expect("shapes already checked");
        loss(&y).0
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub timestep: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        AdamState {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            timestep: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam descent step. Non-finite gradients are rejected
/// before anything is modified.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, learning_rate: f64) -> Result<()> {
    if !grads.matches(net) || !state.first_moment.matches(net) {
        return Err(Error::invalid("gradient shapes do not match the network"));
    }
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient rejected by adam".into()));
    }
    state.timestep += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps_hat);
    let c1 = 1.0 - b1.powi(state.timestep as i32);
    let c2 = 1.0 - b2.powi(state.timestep as i32);
    let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
    };
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let w = layer.weights.as_mut_slice().iter_mut();
        let g = grads.weights[i].as_slice();
        let m = state.first_moment.weights[i].as_mut_slice().iter_mut();
        let v = state.second_moment.weights[i].as_mut_slice().iter_mut();
        for (((p, g), m), v) in w.zip(g).zip(m).zip(v) {
            step(p, *g, m, v);
        }
        let b = layer.bias.as_mut_slice().iter_mut();
        let g = grads.biases[i].as_slice();
        let m = state.first_moment.biases[i].as_mut_slice().iter_mut();
        let v = state.second_moment.biases[i].as_mut_slice().iter_mut();
        for (((p, g), m), v) in b.zip(g).zip(m).zip(v) {
            step(p, *g, m, v);
        }
    }
    if !net.is_finite() {
        return Err(Error::Numerical("adam step produced non-finite parameters".into()));
    }
    Ok(())
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HGRASPNN";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Network {
    /// Serializes as: magic, version (u32), layer count (u32), per layer
    /// `(in u32, out u32, activation u8)`, then per layer the row-major
    /// weights and the bias as little-endian f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.in_dim() as u32).to_le_bytes())?;
            w.write_all(&(l.out_dim() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
        }
        for l in &self.layers {
            for r in 0..l.out_dim() {
                for c in 0..l.in_dim() {
                    w.write_all(&l.weights[(r, c)].to_le_bytes())?;
                }
            }
            for b in l.bias.iter() {
                w.write_all(&b.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Checkpoint(format!("truncated network: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf).map_err(io)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(r)? as usize;
        if count == 0 || count > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {count}")));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let i = read_u32(r)? as usize;
            let o = read_u32(r)? as usize;
            let mut act = [0u8; 1];
            r.read_exact(&mut act).map_err(io)?;
            shapes.push((i, o, Activation::from_code(act[0])?));
        }
        let mut f64buf = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f64buf).map_err(io)?;
            Ok(f64::from_le_bytes(f64buf))
        };
        let mut layers = Vec::with_capacity(count);
        for (i, o, activation) in shapes {
            let mut weights = DMatrix::zeros(o, i);
            for row in 0..o {
                for col in 0..i {
                    weights[(row, col)] = read_f64(r)?;
                }
            }
            let mut bias = DVector::zeros(o);
            for k in 0..o {
                bias[k] = read_f64(r)?;
            }
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
        }
        Network::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let net = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", cursor.len())));
        }
        Ok(net)
    }
}
