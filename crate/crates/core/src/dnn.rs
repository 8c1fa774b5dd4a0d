//! Fully connected binary classifier with ReLU hidden layers and a sigmoid
//! output, trained with mini-batch Adam on L2-regularized cross-entropy.
//!
//! Parameters live in one flat vector. For each layer the weight matrix is
//! stored row-major (`out x in`) followed by the bias vector.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::features::{FeatureVector, Normalizer, DEFAULT_HALF_WIDTH};
use crate::rng::{substream, Domain, SimRng};

pub const DEFAULT_LAYERS: [usize; 4] = [3, 20, 10, 1];
pub const PROB_CLAMP: f64 = 1e-12;
pub const DECISION_THRESHOLD: f64 = 0.5;
pub const MODEL_VERSION: &str = "impulse-mlp v1";

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
    inputs: usize,
    outputs: usize,
}

fn layout(sizes: &[usize]) -> (Vec<Layer>, usize) {
    let mut layers = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut off = 0;
    for pair in sizes.windows(2) {
        let (inputs, outputs) = (pair[0], pair[1]);
        layers.push(Layer {
            w: off,
            b: off + inputs * outputs,
            inputs,
            outputs,
        });
        off += (inputs + 1) * outputs;
    }
    (layers, off)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    pub theta: Vec<f64>,
    pub normalizer: Normalizer,
    pub half_width: usize,
    pub seed: u64,
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layers", format!("{sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::invalid("layers", "output layer must have one unit"));
        }
        let (_, count) = layout(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            theta: vec![0.0; count],
            normalizer: Normalizer::identity(),
            half_width: DEFAULT_HALF_WIDTH,
            seed: 0,
        })
    }

    /// Xavier-uniform weights and zero biases.
    pub fn xavier(sizes: &[usize], rng: &mut SimRng) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for layer in layout(sizes).0 {
            let w = xavier_uniform(layer.inputs, layer.outputs, rng);
            p.theta[layer.w..layer.b].copy_from_slice(&w);
        }
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let l = layout(&self.sizes).0[layer];
        &self.theta[l.w..l.b]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = layout(&self.sizes).0[layer];
        &self.theta[l.b..l.b + l.outputs]
    }

    fn layers(&self) -> Vec<Layer> {
        layout(&self.sizes).0
    }

    /// Output probability for an already-normalized input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_len(self.input_dim(), x.len())?;
        let mut acts = Vec::new();
        Ok(self.forward_cached(&self.layers(), x, &mut acts))
    }

    /// Fills `acts` with the activations of every layer (input first) and
    /// returns the sigmoid output. The last entry holds the output logit.
    fn forward_cached(&self, layers: &[Layer], x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.resize_with(layers.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for (l, layer) in layers.iter().enumerate() {
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.clear();
            let w = &self.theta[layer.w..layer.b];
            let b = &self.theta[layer.b..layer.b + layer.outputs];
            let hidden = l + 1 < layers.len();
            for o in 0..layer.outputs {
                let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                let z = b[o] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                out.push(if hidden { relu(z) } else { z });
            }
        }
        sigmoid(acts[layers.len()][0])
    }

    /// Probability that a raw feature vector is impulse-corrupted.
    pub fn predict(&self, f: &FeatureVector) -> f64 {
        let x = self.normalizer.apply(f.to_array());
        let mut acts = Vec::new();
        self.forward_cached(&self.layers(), &x, &mut acts)
    }

    fn weight_square_sum(&self) -> f64 {
        self.layers()
            .iter()
            .map(|l| self.theta[l.w..l.b].iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Mean binary cross-entropy plus `lambda / (2m) * sum(W^2)`, biases
    /// excluded. `x` holds `y.len()` rows of normalized inputs.
    pub fn loss(&self, x: &[f64], y: &[u8], lambda: f64) -> Result<f64> {
        let m = self.check_batch(x, y)?;
        let layers = self.layers();
        let mut acts = Vec::new();
        let d = self.input_dim();
        let bce: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                self.forward_cached(&layers, &x[i * d..(i + 1) * d], &mut acts);
                cross_entropy(acts[layers.len()][0], t)
            })
            .sum();
        Ok(bce / m as f64 + lambda / (2.0 * m as f64) * self.weight_square_sum())
    }

    fn check_batch(&self, x: &[f64], y: &[u8]) -> Result<usize> {
        if y.is_empty() {
            return Err(Error::invalid("batch", "empty"));
        }
        check_len(y.len() * self.input_dim(), x.len())?;
        Ok(y.len())
    }

    /// Loss and its gradient with respect to `theta`.
    ///
    /// The output delta is taken as `yhat - y`, the derivative of the
    /// unclamped cross-entropy.
    pub fn gradient(&self, x: &[f64], y: &[u8], lambda: f64) -> Result<(f64, Vec<f64>)> {
        let m = self.check_batch(x, y)?;
        let layers = self.layers();
        let d = self.input_dim();
        let mut grad = vec![0.0; self.theta.len()];
        let mut acts = Vec::new();
        let mut delta = Vec::new();
        let mut back = Vec::new();
        let mut bce = 0.0;
        let inv_m = 1.0 / m as f64;
        for (i, &t) in y.iter().enumerate() {
            let p = self.forward_cached(&layers, &x[i * d..(i + 1) * d], &mut acts);
            bce += cross_entropy(acts[layers.len()][0], t);
            delta.clear();
            delta.push((p - f64::from(t)) * inv_m);
            for (l, layer) in layers.iter().enumerate().rev() {
                let input = &acts[l];
                let w = &self.theta[layer.w..layer.b];
                for (o, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let g = &mut grad[layer.w + o * layer.inputs..layer.w + (o + 1) * layer.inputs];
                    for (gi, a) in g.iter_mut().zip(input) {
                        *gi += dz * a;
                    }
                    grad[layer.b + o] += dz;
                }
                if l == 0 {
                    break;
                }
                back.clear();
                back.resize(layer.inputs, 0.0);
                for (o, &dz) in delta.iter().enumerate() {
                    let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (bi, wi) in back.iter_mut().zip(row) {
                        *bi += dz * wi;
                    }
                }
                // ReLU subgradient is 0 at the kink.
                for (bi, a) in back.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *bi = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut back);
            }
        }
        let reg = lambda * inv_m;
        for layer in &layers {
            for j in layer.w..layer.b {
                grad[j] += reg * self.theta[j];
            }
        }
        let loss = bce * inv_m + 0.5 * reg * self.weight_square_sum();
        Ok((loss, grad))
    }
}

/// Cross-entropy of the output logit `z` against label `t`, evaluated as a
/// softplus so that outputs near 0 or 1 keep full precision. The bounds are
/// those of clamping the probability to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
fn cross_entropy(z: f64, t: u8) -> f64 {
    let s = if t == 1 { -z } else { z };
    let softplus = s.max(0.0) + (-s.abs()).exp().ln_1p();
    softplus.clamp(-(-PROB_CLAMP).ln_1p(), -PROB_CLAMP.ln())
}

/// Uniform on `+-sqrt(6 / (fan_in + fan_out))`, `fan_out x fan_in` row-major.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut SimRng) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        check_len(self.m.len(), theta.len())?;
        check_len(self.m.len(), grad.len())?;
        self.step += 1;
        let c1 = 1.0 - self.beta1.powf(self.step as f64);
        let c2 = 1.0 - self.beta2.powf(self.step as f64);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            lambda: 0.1,
            epochs: 100,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("{} must be positive", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{} must be >= 0", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: MlpParams,
    /// Entry 0 is the loss of the initial weights on the whole set, entry
    /// `e` the mean mini-batch loss of epoch `e`.
    pub loss_trace: Vec<f64>,
}

/// Fits the normalizer on `features`, then runs mini-batch Adam from a
/// Xavier initialization. Rows are reshuffled every epoch.
pub fn train(
    sizes: &[usize],
    half_width: usize,
    features: &[[f64; 3]],
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    check_len(features.len(), labels.len())?;
    if features.is_empty() {
        return Err(Error::invalid("dataset", "empty"));
    }
    if sizes.first() != Some(&3) {
        return Err(Error::invalid("layers", "input layer must have 3 units"));
    }
    let normalizer = Normalizer::fit(features);
    let x: Vec<f64> = features.iter().flat_map(|&f| normalizer.apply(f)).collect();

    let mut init_rng = substream(cfg.seed, Domain::Training, 0);
    let mut shuffle_rng = substream(cfg.seed, Domain::Training, 1);
    let mut params = MlpParams::xavier(sizes, &mut init_rng)?;
    params.normalizer = normalizer;
    params.half_width = half_width;
    params.seed = cfg.seed;

    let mut adam = Adam::new(params.theta.len(), cfg.eta);
    let mut trace = vec![params.loss(&x, labels, cfg.lambda)?];
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * 3);
    let mut by = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(&x[i * 3..i * 3 + 3]);
                by.push(labels[i]);
            }
            let (loss, grad) = params.gradient(&bx, &by, cfg.lambda)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            adam.update(&mut params.theta, &grad)?;
            total += loss * chunk.len() as f64;
        }
        if params.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        trace.push(total / labels.len() as f64);
    }
    Ok(Trained {
        params,
        loss_trace: trace,
    })
}

pub fn classify(params: &MlpParams, features: &[FeatureVector]) -> Vec<u8> {
    classify_at(params, features, DECISION_THRESHOLD)
}

/// Flags samples whose output is at least `threshold`.
pub fn classify_at(params: &MlpParams, features: &[FeatureVector], threshold: f64) -> Vec<u8> {
    features
        .iter()
        .map(|f| u8::from(params.predict(f) >= threshold))
        .collect()
}

fn push_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

/// Plain-text model document. `meta` entries become `# key value` lines
/// after the version line.
pub fn write_model(params: &MlpParams, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_VERSION}").unwrap();
    for (k, v) in meta {
        writeln!(out, "# {k} {v}").unwrap();
    }
    writeln!(out, "seed {}", params.seed).unwrap();
    let sizes: Vec<String> = params.sizes.iter().map(|s| s.to_string()).collect();
    writeln!(out, "layers {}", sizes.join(" ")).unwrap();
    writeln!(out, "window {}", params.half_width).unwrap();
    out.push_str("normalizer-mean ");
    push_values(&mut out, &params.normalizer.mean);
    out.push_str("normalizer-std ");
    push_values(&mut out, &params.normalizer.std);
    for (l, layer) in params.layers().iter().enumerate() {
        writeln!(out, "W{} {} {}", l + 1, layer.outputs, layer.inputs).unwrap();
        for o in 0..layer.outputs {
            let row = layer.w + o * layer.inputs;
            push_values(&mut out, &params.theta[row..row + layer.inputs]);
        }
        writeln!(out, "b{} {}", l + 1, layer.outputs).unwrap();
        push_values(&mut out, &params.theta[layer.b..layer.b + layer.outputs]);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    current: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        for (i, line) in self.inner.by_ref() {
            self.current = i + 1;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok(line);
            }
        }
        Err(self.error("unexpected end of file"))
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            what: "model",
            line: self.current,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.error(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn numbers<T: std::str::FromStr>(&self, parts: &[&str], count: usize) -> Result<Vec<T>> {
        if parts.len() != count {
            return Err(self.error(format!("expected {count} values, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| p.parse().map_err(|_| self.error(format!("bad number `{p}`"))))
            .collect()
    }

    fn row(&mut self, count: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        self.numbers(&parts, count)
    }
}

pub fn parse_model(text: &str) -> Result<MlpParams> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        current: 0,
    };
    if lines.next_line()? != MODEL_VERSION {
        return Err(lines.error(format!("expected version `{MODEL_VERSION}`")));
    }
    let seed_parts = lines.keyed("seed")?;
    let seed = lines.numbers::<u64>(&seed_parts, 1)?[0];
    let layer_parts = lines.keyed("layers")?;
    let sizes = lines.numbers::<usize>(&layer_parts, layer_parts.len())?;
    let window_parts = lines.keyed("window")?;
    let half_width = lines.numbers::<usize>(&window_parts, 1)?[0];
    let mean_parts = lines.keyed("normalizer-mean")?;
    let mean = lines.numbers::<f64>(&mean_parts, 3)?;
    let std_parts = lines.keyed("normalizer-std")?;
    let std = lines.numbers::<f64>(&std_parts, 3)?;

    let mut params = MlpParams::zeros(&sizes).map_err(|e| lines.error(e.to_string()))?;
    params.seed = seed;
    params.half_width = half_width;
    params.normalizer = Normalizer {
        mean: [mean[0], mean[1], mean[2]],
        std: [std[0], std[1], std[2]],
    };
    for (l, layer) in params.layers().iter().enumerate() {
        let dims = lines.keyed(&format!("W{}", l + 1))?;
        let dims = lines.numbers::<usize>(&dims, 2)?;
        if dims != [layer.outputs, layer.inputs] {
            return Err(lines.error(format!("W{} has shape {dims:?}", l + 1)));
        }
        for o in 0..layer.outputs {
            let row = lines.row(layer.inputs)?;
            let start = layer.w + o * layer.inputs;
            params.theta[start..start + layer.inputs].copy_from_slice(&row);
        }
        let dims = lines.keyed(&format!("b{}", l + 1))?;
        let dims = lines.numbers::<usize>(&dims, 1)?;
        if dims[0] != layer.outputs {
            return Err(lines.error(format!("b{} has length {}", l + 1, dims[0])));
        }
        let b = lines.row(layer.outputs)?;
        params.theta[layer.b..layer.b + layer.outputs].copy_from_slice(&b);
    }
    if params.theta.iter().any(|t| !t.is_finite()) {
        return Err(lines.error("non-finite parameter"));
    }
    Ok(params)
}

pub fn write_loss_trace(trace: &[f64], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        writeln!(out, "# {k} {v}").unwrap();
    }
    out.push_str("epoch,loss\n");
    for (e, l) in trace.iter().enumerate() {
        writeln!(out, "{e},{l:.16e}").unwrap();
    }
    out
}
