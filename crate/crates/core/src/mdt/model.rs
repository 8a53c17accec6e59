//! Encoder-only transformer over per-frame descriptors with hand-written
//! reverse-mode gradients.
//!
//! Padded frames are removed before the encoder instead of being masked with
//! `-inf` scores: a masked key gets zero attention weight and a masked query
//! never reaches the pooled output, so dropping the rows is equivalent and
//! makes padding invariance exact. Positional encodings keep the original
//! frame positions.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::types::{NUM_BLADES, NUM_MOVES};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut l = Self::zeros(fan_in, fan_out);
        l.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
        l
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }

    fn backward_params(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) {
        general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gamma: Array1::zeros(dim),
            beta: Array1::zeros(dim),
        }
    }

    /// Returns (output, normalised input, per-row inverse std).
    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv = Array1::zeros(x.nrows());
        for (mut row, inv_r) in xhat.rows_mut().into_iter().zip(inv.iter_mut()) {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            *inv_r = 1.0 / (var + LN_EPS).sqrt();
            let k = *inv_r;
            row.mapv_inplace(|v| (v - mean) * k);
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, xhat, inv)
    }

    fn backward(&self, xhat: &Array2<f64>, inv: &Array1<f64>, dy: &Array2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(dy * xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let d = xhat.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for r in 0..dy.nrows() {
            let g = dxhat.row(r);
            let h = xhat.row(r);
            let mean_g = g.sum() / d;
            let mean_gh = g.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
            let k = inv[r];
            for c in 0..dy.ncols() {
                dx[[r, c]] = k * (g[c] - mean_g - h[c] * mean_gh);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub input: Linear,
    pub layers: Vec<EncoderLayer>,
    pub head: Linear,
}

/// Flat, named view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
}

fn push_linear<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, l: &'a Linear) {
    out.push(TensorRef {
        name: format!("{prefix}.weight"),
        shape: l.weight.shape().to_vec(),
        data: l.weight.as_slice().expect("standard layout"),
    });
    out.push(TensorRef {
        name: format!("{prefix}.bias"),
        shape: l.bias.shape().to_vec(),
        data: l.bias.as_slice().expect("standard layout"),
    });
}

fn push_norm<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, n: &'a LayerNorm) {
    out.push(TensorRef {
        name: format!("{prefix}.gamma"),
        shape: n.gamma.shape().to_vec(),
        data: n.gamma.as_slice().expect("standard layout"),
    });
    out.push(TensorRef {
        name: format!("{prefix}.beta"),
        shape: n.beta.shape().to_vec(),
        data: n.beta.as_slice().expect("standard layout"),
    });
}

fn push_linear_mut<'a>(out: &mut Vec<TensorMut<'a>>, prefix: &str, l: &'a mut Linear) {
    out.push(TensorMut {
        name: format!("{prefix}.weight"),
        data: l.weight.as_slice_mut().expect("standard layout"),
    });
    out.push(TensorMut {
        name: format!("{prefix}.bias"),
        data: l.bias.as_slice_mut().expect("standard layout"),
    });
}

fn push_norm_mut<'a>(out: &mut Vec<TensorMut<'a>>, prefix: &str, n: &'a mut LayerNorm) {
    out.push(TensorMut {
        name: format!("{prefix}.gamma"),
        data: n.gamma.as_slice_mut().expect("standard layout"),
    });
    out.push(TensorMut {
        name: format!("{prefix}.beta"),
        data: n.beta.as_slice_mut().expect("standard layout"),
    });
}

impl ModelWeights {
    /// Xavier-uniform projections, zero biases, unit/zero norm parameters.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let input = Linear::xavier(config.input_dim, d, rng);
        let layers = (0..config.layers)
            .map(|_| EncoderLayer {
                q: Linear::xavier(d, d, rng),
                k: Linear::xavier(d, d, rng),
                v: Linear::xavier(d, d, rng),
                o: Linear::xavier(d, d, rng),
                norm1: LayerNorm::new(d),
                ff1: Linear::xavier(d, config.ff_dim, rng),
                ff2: Linear::xavier(config.ff_dim, d, rng),
                norm2: LayerNorm::new(d),
            })
            .collect();
        let head = Linear::xavier(d, config.outputs(), rng);
        Ok(Self {
            config: config.clone(),
            input,
            layers,
            head,
        })
    }

    /// All-zero tensors with the shapes of `config` (gradient and moment buffers).
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.embed_dim;
        Self {
            config: config.clone(),
            input: Linear::zeros(config.input_dim, d),
            layers: (0..config.layers)
                .map(|_| EncoderLayer {
                    q: Linear::zeros(d, d),
                    k: Linear::zeros(d, d),
                    v: Linear::zeros(d, d),
                    o: Linear::zeros(d, d),
                    norm1: LayerNorm::zeros(d),
                    ff1: Linear::zeros(d, config.ff_dim),
                    ff2: Linear::zeros(config.ff_dim, d),
                    norm2: LayerNorm::zeros(d),
                })
                .collect(),
            head: Linear::zeros(d, config.outputs()),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        push_linear(&mut out, "input", &self.input);
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            push_linear(&mut out, &format!("{p}.attn.q"), &l.q);
            push_linear(&mut out, &format!("{p}.attn.k"), &l.k);
            push_linear(&mut out, &format!("{p}.attn.v"), &l.v);
            push_linear(&mut out, &format!("{p}.attn.o"), &l.o);
            push_norm(&mut out, &format!("{p}.norm1"), &l.norm1);
            push_linear(&mut out, &format!("{p}.ff1"), &l.ff1);
            push_linear(&mut out, &format!("{p}.ff2"), &l.ff2);
            push_norm(&mut out, &format!("{p}.norm2"), &l.norm2);
        }
        push_linear(&mut out, "head", &self.head);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        push_linear_mut(&mut out, "input", &mut self.input);
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("layers.{i}");
            push_linear_mut(&mut out, &format!("{p}.attn.q"), &mut l.q);
            push_linear_mut(&mut out, &format!("{p}.attn.k"), &mut l.k);
            push_linear_mut(&mut out, &format!("{p}.attn.v"), &mut l.v);
            push_linear_mut(&mut out, &format!("{p}.attn.o"), &mut l.o);
            push_norm_mut(&mut out, &format!("{p}.norm1"), &mut l.norm1);
            push_linear_mut(&mut out, &format!("{p}.ff1"), &mut l.ff1);
            push_linear_mut(&mut out, &format!("{p}.ff2"), &mut l.ff2);
            push_norm_mut(&mut out, &format!("{p}.norm2"), &mut l.norm2);
        }
        push_linear_mut(&mut out, "head", &mut self.head);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data.fill(0.0);
        }
    }
}

/// Encoding of one absolute position.
pub fn positional_row(pos: usize, dim: usize) -> Vec<f64> {
    let mut row = vec![0.0; dim];
    for i in 0..dim / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        row[2 * i] = angle.sin();
        row[2 * i + 1] = angle.cos();
    }
    row
}

/// `length × dim` sinusoidal position table; `dim` must be even.
pub fn sinusoidal_pe(length: usize, dim: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((length, dim));
    for pos in 0..length {
        for (c, v) in positional_row(pos, dim).into_iter().enumerate() {
            pe[[pos, c]] = v;
        }
    }
    pe
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub move_logits: [f64; NUM_MOVES],
    pub blade_logits: [f64; NUM_BLADES],
    pub move_probs: [f64; NUM_MOVES],
    pub blade_probs: [f64; NUM_BLADES],
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut move_logits = [0.0; NUM_MOVES];
        let mut blade_logits = [0.0; NUM_BLADES];
        move_logits.copy_from_slice(&logits[..NUM_MOVES]);
        blade_logits.copy_from_slice(&logits[NUM_MOVES..NUM_MOVES + NUM_BLADES]);
        let mut move_probs = [0.0; NUM_MOVES];
        for (p, z) in move_probs.iter_mut().zip(&move_logits) {
            *p = sigmoid(*z);
        }
        let mut blade_probs = [0.0; NUM_BLADES];
        blade_probs.copy_from_slice(&softmax(&blade_logits));
        Self {
            move_logits,
            blade_logits,
            move_probs,
            blade_probs,
        }
    }

    pub fn logits(&self) -> [f64; NUM_MOVES + NUM_BLADES] {
        let mut out = [0.0; NUM_MOVES + NUM_BLADES];
        out[..NUM_MOVES].copy_from_slice(&self.move_logits);
        out[NUM_MOVES..].copy_from_slice(&self.blade_logits);
        out
    }

    pub fn blade_argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.blade_probs.iter().enumerate() {
            if *p > self.blade_probs[best] {
                best = i;
            }
        }
        best
    }
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    concat: Array2<f64>,
    drop1: Option<Array2<f64>>,
    xhat1: Array2<f64>,
    inv1: Array1<f64>,
    h1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    drop2: Option<Array2<f64>>,
    xhat2: Array2<f64>,
    inv2: Array1<f64>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    x: Array2<f64>,
    layers: Vec<LayerCache>,
    pooled: Array1<f64>,
    pub logits: Array1<f64>,
}

fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), p: f64, rng: Option<&mut R>) -> Option<Array2<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    let mut m = Array2::zeros(shape);
    m.mapv_inplace(|_: f64| if rng.random::<f64>() < p { 0.0 } else { keep });
    Some(m)
}

fn run<R: Rng + ?Sized>(
    w: &ModelWeights,
    x: ArrayView2<f64>,
    mask: &[bool],
    mut rng: Option<&mut R>,
) -> Result<ForwardCache> {
    let cfg = &w.config;
    if x.ncols() != cfg.input_dim {
        return Err(Error::Model(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            cfg.input_dim
        )));
    }
    if mask.len() != x.nrows() {
        return Err(Error::Model(format!(
            "mask length {} does not match {} frames",
            mask.len(),
            x.nrows()
        )));
    }
    let valid: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
    if valid.is_empty() {
        return Err(Error::Model("empty sequence".into()));
    }
    let xv = x.select(Axis(0), &valid);
    let d = cfg.embed_dim;
    let dk = cfg.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut h = w.input.forward(&xv);
    for (r, &pos) in valid.iter().enumerate() {
        for (c, v) in positional_row(pos, d).into_iter().enumerate() {
            h[[r, c]] += v;
        }
    }

    let n = valid.len();
    let mut caches = Vec::with_capacity(w.layers.len());
    for layer in &w.layers {
        let q = layer.q.forward(&h);
        let k = layer.k.forward(&h);
        let v = layer.v.forward(&h);
        let mut concat = Array2::zeros((n, d));
        let mut attn = Vec::with_capacity(cfg.heads);
        for hd in 0..cfg.heads {
            let cols = s![.., hd * dk..(hd + 1) * dk];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores.mapv_inplace(|s| s * scale);
            softmax_rows(&mut scores);
            concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            attn.push(scores);
        }
        let mut z = layer.o.forward(&concat);
        let drop1 = dropout_mask((n, d), cfg.dropout, rng.as_deref_mut());
        if let Some(m) = &drop1 {
            z *= m;
        }
        let (h1, xhat1, inv1) = layer.norm1.forward(&(&h + &z));
        let pre_act = layer.ff1.forward(&h1);
        let mut act = pre_act.mapv(gelu);
        let drop2 = dropout_mask((n, cfg.ff_dim), cfg.dropout, rng.as_deref_mut());
        if let Some(m) = &drop2 {
            act *= m;
        }
        let f2 = layer.ff2.forward(&act);
        let (h2, xhat2, inv2) = layer.norm2.forward(&(&h1 + &f2));
        caches.push(LayerCache {
            input: h,
            q,
            k,
            v,
            attn,
            concat,
            drop1,
            xhat1,
            inv1,
            h1,
            pre_act,
            act,
            drop2,
            xhat2,
            inv2,
        });
        h = h2;
    }
    let pooled = h.mean_axis(Axis(0)).expect("non-empty");
    let logits = pooled.dot(&w.head.weight) + &w.head.bias;
    Ok(ForwardCache {
        x: xv,
        layers: caches,
        pooled,
        logits,
    })
}

/// Inference: no dropout.
pub fn forward(w: &ModelWeights, x: ArrayView2<f64>, mask: &[bool]) -> Result<Prediction> {
    let cache = run::<rand_chacha::ChaCha8Rng>(w, x, mask, None)?;
    Ok(Prediction::from_logits(cache.logits.as_slice().expect("contiguous")))
}

/// Forward pass that keeps activations; dropout is active when `rng` is given.
pub fn forward_train<R: Rng + ?Sized>(
    w: &ModelWeights,
    x: ArrayView2<f64>,
    mask: &[bool],
    rng: Option<&mut R>,
) -> Result<(Prediction, ForwardCache)> {
    let cache = run(w, x, mask, rng)?;
    let pred = Prediction::from_logits(cache.logits.as_slice().expect("contiguous"));
    Ok((pred, cache))
}

/// Accumulates into `grads` the gradient of a loss whose gradient with
/// respect to the 17 output logits is `dlogits`.
pub fn backward(w: &ModelWeights, cache: &ForwardCache, dlogits: &[f64], grads: &mut ModelWeights) -> Result<()> {
    let cfg = &w.config;
    if dlogits.len() != cfg.outputs() || grads.config != w.config || cache.layers.len() != w.layers.len() {
        return Err(Error::Model("gradient buffers do not match the model".into()));
    }
    let dz = Array1::from(dlogits.to_vec());
    let dz2 = dz.view().insert_axis(Axis(0));
    let pooled2 = cache.pooled.view().insert_axis(Axis(0));
    general_mat_mul(1.0, &pooled2.t(), &dz2, 1.0, &mut grads.head.weight);
    grads.head.bias += &dz;
    let dpooled = w.head.weight.dot(&dz);

    let n = cache.x.nrows();
    let d = cfg.embed_dim;
    let dk = cfg.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut dh = Array2::zeros((n, d));
    for mut row in dh.rows_mut() {
        row.assign(&(&dpooled / n as f64));
    }

    for (li, (layer, c)) in w.layers.iter().zip(&cache.layers).enumerate().rev() {
        let g = &mut grads.layers[li];
        // second sublayer
        let dr2 = layer.norm2.backward(&c.xhat2, &c.inv2, &dh, &mut g.norm2);
        let mut dact = layer.ff2.backward(&c.act, &dr2, &mut g.ff2);
        if let Some(m) = &c.drop2 {
            dact *= m;
        }
        let dpre = dact * &c.pre_act.mapv(gelu_grad);
        let dh1 = dr2 + layer.ff1.backward(&c.h1, &dpre, &mut g.ff1);
        // first sublayer
        let dr1 = layer.norm1.backward(&c.xhat1, &c.inv1, &dh1, &mut g.norm1);
        let mut dzo = dr1.clone();
        if let Some(m) = &c.drop1 {
            dzo *= m;
        }
        let dconcat = layer.o.backward(&c.concat, &dzo, &mut g.o);
        let mut dq = Array2::zeros((n, d));
        let mut dk_m = Array2::zeros((n, d));
        let mut dv = Array2::zeros((n, d));
        for hd in 0..cfg.heads {
            let cols = s![.., hd * dk..(hd + 1) * dk];
            let a = &c.attn[hd];
            let dout = dconcat.slice(cols);
            let da = dout.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dout));
            let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let mut ds = a * &(&da - &row_dot);
            ds.mapv_inplace(|x| x * scale);
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk_m.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let mut dinput = dr1;
        dinput += &layer.q.backward(&c.input, &dq, &mut g.q);
        dinput += &layer.k.backward(&c.input, &dk_m, &mut g.k);
        dinput += &layer.v.backward(&c.input, &dv, &mut g.v);
        dh = dinput;
    }
    w.input.backward_params(&cache.x, &dh, &mut grads.input);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            ff_dim: 16,
            ..Default::default()
        }
    }

    fn random_input(t: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, dim), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pe_examples() {
        let pe = sinusoidal_pe(4, 128);
        for i in 0..64 {
            assert_eq!(pe[[0, 2 * i]], 0.0);
            assert_eq!(pe[[0, 2 * i + 1]], 1.0);
        }
        assert!((pe[[1, 0]] - 0.841471).abs() < 1e-6);
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ModelWeights::init(&tiny(), &mut rng).unwrap();
        let x = random_input(3, 6, 2);
        let err = forward(&w, x.view(), &[false; 3]).unwrap_err();
        assert!(err.to_string().contains("empty sequence"));
    }

    #[test]
    fn padding_does_not_change_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = ModelWeights::init(&tiny(), &mut rng).unwrap();
        let x = random_input(4, 6, 4);
        let base = forward(&w, x.view(), &[true; 4]).unwrap();
        let mut padded = Array2::zeros((9, 6));
        padded.slice_mut(s![..4, ..]).assign(&x);
        padded.slice_mut(s![4.., ..]).fill(7.0);
        let mut mask = vec![true; 4];
        mask.extend([false; 5]);
        let p = forward(&w, padded.view(), &mask).unwrap();
        for (a, b) in base.move_probs.iter().zip(&p.move_probs) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!((p.blade_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_frame_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = ModelWeights::init(&ModelConfig::default(), &mut rng).unwrap();
        let x = random_input(1, 101, 6);
        let p = forward(&w, x.view(), &[true]).unwrap();
        assert!(p.move_probs.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p, forward(&w, x.view(), &[true]).unwrap());
    }

    #[test]
    fn parameter_count_matches_layout() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::zeros(&cfg);
        let per_layer = 4 * (128 * 128 + 128) + 2 * 2 * 128 + (128 * 512 + 512) + (512 * 128 + 128);
        assert_eq!(w.num_params(), 101 * 128 + 128 + 3 * per_layer + 128 * 17 + 17);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
