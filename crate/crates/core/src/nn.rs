//! Minimal trainable classifier: a tanh MLP feature extractor followed by an
//! affine decision layer, with hand-written backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Affine map stored as (out × in) weights plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in ±1/√fan_in for weights and bias.
    pub fn init<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Dense::zeros(inputs, outputs);
        for w in layer.weights.as_mut_slice() {
            *w = rng.gen_range(-bound..=bound);
        }
        for b in &mut layer.bias {
            *b = rng.gen_range(-bound..=bound);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.matmul_transposed(&self.weights);
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_in: usize,
    pub hidden_width: usize,
    pub classes: usize,
}

/// Feature extractor Φ (tanh layers) and decision layer P.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub phi_layers: Vec<Dense>,
    pub decision: Dense,
}

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input followed by each Φ layer's tanh output; the last entry is Φ(x).
    pub activations: Vec<Matrix>,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl ForwardPass {
    pub fn features(&self) -> &Matrix {
        self.activations.last().expect("at least the input")
    }
}

impl Model {
    pub fn init<R: Rng>(rng: &mut R, dims: Dims) -> Self {
        Model {
            phi_layers: vec![Dense::init(rng, dims.d_in, dims.hidden_width)],
            decision: Dense::init(rng, dims.hidden_width, dims.classes),
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Model {
            phi_layers: vec![Dense::zeros(dims.d_in, dims.hidden_width)],
            decision: Dense::zeros(dims.hidden_width, dims.classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Model {
            phi_layers: self
                .phi_layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
            decision: Dense::zeros(self.decision.inputs(), self.decision.outputs()),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d_in: self.phi_layers.first().map_or(self.decision.inputs(), Dense::inputs),
            hidden_width: self.decision.inputs(),
            classes: self.decision.outputs(),
        }
    }

    /// Checks that layer shapes chain and every parameter is finite.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.dims().d_in;
        for (i, l) in self.phi_layers.iter().chain(std::iter::once(&self.decision)).enumerate() {
            if l.inputs() != width || l.bias.len() != l.outputs() {
                return Err(Error::Shape(format!("layer {i} does not chain")));
            }
            width = l.outputs();
        }
        if !self.params().all(f64::is_finite) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        Ok(())
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.phi_layers.len() + 2);
        for l in self.phi_layers.iter().chain(std::iter::once(&self.decision)) {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.phi_layers.len() + 2);
        for l in self.phi_layers.iter_mut().chain(std::iter::once(&mut self.decision)) {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.param_slices().into_iter().flatten().copied()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    /// `self += scale * other`, parameter-wise.
    pub fn add_scaled(&mut self, other: &Model, scale: f64) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardPass> {
        let dims = self.dims();
        if batch.cols() != dims.d_in {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                dims.d_in
            )));
        }
        let mut activations = Vec::with_capacity(self.phi_layers.len() + 1);
        activations.push(batch.clone());
        for l in &self.phi_layers {
            let mut h = l.apply(activations.last().unwrap());
            h.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
            activations.push(h);
        }
        let logits = self.decision.apply(activations.last().unwrap());
        let probs = matrix::softmax_rows(&logits);
        Ok(ForwardPass {
            activations,
            logits,
            probs,
        })
    }

    /// Φ(x) and softmax(P(Φ(x))).
    pub fn features_and_probs(&self, batch: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut pass = self.forward(batch)?;
        let probs = std::mem::replace(&mut pass.probs, Matrix::zeros(0, 0));
        let features = pass.activations.pop().unwrap();
        Ok((features, probs))
    }

    /// Parameter gradients given dL/dlogits for a cached forward pass.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Matrix) -> Model {
        let mut grads = self.zeros_like();
        let features = pass.features();
        grads.decision.weights = grad_logits.transpose_matmul(features);
        grads.decision.bias = column_sums(grad_logits);

        // dL/dh for the last Φ output
        let mut upstream = grad_logits.matmul(&self.decision.weights);
        for (li, layer) in self.phi_layers.iter().enumerate().rev() {
            let out = &pass.activations[li + 1];
            // through tanh
            for (g, h) in upstream.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *g *= 1.0 - h * h;
            }
            let input = &pass.activations[li];
            grads.phi_layers[li].weights = upstream.transpose_matmul(input);
            grads.phi_layers[li].bias = column_sums(&upstream);
            if li > 0 {
                upstream = upstream.matmul(&layer.weights);
            }
        }
        grads
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Lower clamp applied before taking logs of probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `(1 − μ)·y + μ/C`.
pub fn label_smooth(onehot: &[f64], mu: f64, classes: usize) -> Vec<f64> {
    let floor = mu / classes as f64;
    onehot.iter().map(|y| (1.0 - mu) * y + floor).collect()
}

/// Smoothed one-hot targets for a label vector.
pub fn smoothed_targets(labels: &[usize], mu: f64, classes: usize) -> Matrix {
    let mut out = Matrix::zeros(labels.len(), classes);
    let mut onehot = vec![0.0; classes];
    for (i, &c) in labels.iter().enumerate() {
        onehot.iter_mut().for_each(|v| *v = 0.0);
        onehot[c] = 1.0;
        out.row_mut(i).copy_from_slice(&label_smooth(&onehot, mu, classes));
    }
    out
}

/// Mean cross-entropy `−(1/n) Σ_i Σ_c t_ic ln p_ic` and its gradient with
/// respect to the logits that produced `probs`.
pub fn cross_entropy_logit_grad(probs: &Matrix, targets: &Matrix) -> (f64, Matrix) {
    let n = probs.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let t = targets.row(i);
        loss -= t.iter().zip(p).map(|(ti, pi)| ti * clamped_ln(*pi)).sum::<f64>();
        let grad_p: Vec<f64> = t
            .iter()
            .zip(p)
            .map(|(ti, pi)| -ti / (pi.max(PROB_FLOOR) * n))
            .collect();
        grad.row_mut(i).copy_from_slice(&matrix::softmax_vjp(p, &grad_p));
    }
    (loss / n, grad)
}

/// Label-smoothed source loss on one batch: value and parameter gradients.
pub fn smoothed_ce_loss(model: &Model, batch: &Matrix, smoothed: &Matrix) -> Result<(f64, Model)> {
    let pass = model.forward(batch)?;
    if smoothed.shape() != pass.probs.shape() {
        return Err(Error::Shape("targets do not match model output".into()));
    }
    let (loss, grad_logits) = cross_entropy_logit_grad(&pass.probs, smoothed);
    Ok((loss, model.backward(&pass, &grad_logits)))
}

/// Momentum buffers for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(momentum: f64, len: usize) -> Self {
        Momentum {
            momentum,
            velocity: vec![0.0; len],
        }
    }

    /// `v ← m·v + g; w ← w − η·v`.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut f64>, grads: impl IntoIterator<Item = f64>, eta: f64) {
        for ((w, g), v) in params.into_iter().zip(grads).zip(self.velocity.iter_mut()) {
            *v = self.momentum * *v + g;
            *w -= eta * *v;
        }
    }
}

/// Optimizer state for a [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub buffers: Momentum,
    pub epoch_index: usize,
    pub total_epochs: usize,
}

impl TrainState {
    pub fn new(model: &Model, momentum: f64, total_epochs: usize) -> Self {
        TrainState {
            buffers: Momentum::new(momentum, model.param_count()),
            epoch_index: 0,
            total_epochs: total_epochs.max(1),
        }
    }

    pub fn progress(&self) -> f64 {
        (self.epoch_index as f64 / self.total_epochs as f64).min(1.0)
    }
}

pub fn sgd_step(model: &mut Model, grads: &Model, state: &mut TrainState, eta: f64) {
    let params = model.param_slices_mut().into_iter().flat_map(|s| s.iter_mut());
    state.buffers.step(params, grads.params(), eta);
}

/// `η₀ / (1 + 10p)^0.75`.
pub fn learning_rate(eta0: f64, p: f64) -> f64 {
    eta0 / (1.0 + 10.0 * p).powf(0.75)
}

/// `1 / (2·epoch)` with 1-based epochs.
pub fn selection_sigma(epoch_index: usize) -> Result<f64> {
    if epoch_index == 0 {
        return Err(Error::Config("epoch index is 1-based".into()));
    }
    Ok(1.0 / (2.0 * epoch_index as f64))
}

/// Learning rate and keep-rule slack for one epoch.
pub fn schedules(eta0: f64, p: f64, epoch_index: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("progress {p} outside [0, 1]")));
    }
    Ok((learning_rate(eta0, p), selection_sigma(epoch_index)?))
}

/// Central differences `(f(w+ε) − f(w−ε)) / 2ε` over every coordinate.
pub fn finite_diff_grad(
    mut loss_fn: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let mut w = params.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + eps;
        let up = loss_fn(&w);
        w[i] = orig - eps;
        let down = loss_fn(&w);
        w[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!("loss at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, with 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = matrix::norm(a).max(matrix::norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMetric {
    Mean,
    Rms,
    Max,
}

impl RadiusMetric {
    /// Radius multiplier used in the confidence thresholds.
    pub fn default_alpha(self) -> f64 {
        match self {
            RadiusMetric::Rms => 1.5,
            RadiusMetric::Mean | RadiusMetric::Max => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityExponent {
    /// Radius to the first power, as printed.
    One,
    /// Radius to the feature dimension (true ball volume).
    Dim,
}

/// How σ in the keep rule evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// `1 / (2·epoch)`.
    Epoch,
    /// `1 / (2p)` with p the [0, 1] training progress.
    Progress,
    /// σ = ∞: nothing is ever dropped.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub mu: f64,
    pub eta0: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub delta: f64,
    pub sigma_mode: SigmaMode,
    pub radius_metric: RadiusMetric,
    pub density_exponent: DensityExponent,
    pub tau: f64,
    pub epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            mu: 0.1,
            eta0: 0.001,
            momentum: 0.9,
            batch_size: 64,
            alpha: 1.0,
            lambda: 0.5,
            beta: 0.003,
            gamma: 0.5,
            theta: 0.4,
            delta: 1.0,
            sigma_mode: SigmaMode::Epoch,
            radius_metric: RadiusMetric::Mean,
            density_exponent: DensityExponent::One,
            tau: 10.0,
            epochs: 30,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.mu) {
            return bad(format!("mu = {} outside [0, 1)", self.mu));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 = {} must be positive", self.eta0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum = {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("theta", self.theta),
            ("delta", self.delta),
            ("tau", self.tau),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        Ok(())
    }

    /// σ for a 1-based epoch of `epochs`.
    pub fn sigma(&self, epoch_index: usize) -> Result<f64> {
        match self.sigma_mode {
            SigmaMode::Epoch => selection_sigma(epoch_index),
            SigmaMode::Progress => {
                if epoch_index == 0 {
                    return Err(Error::Config("epoch index is 1-based".into()));
                }
                let p = epoch_index as f64 / self.epochs as f64;
                Ok(1.0 / (2.0 * p))
            }
            SigmaMode::Never => Ok(f64::INFINITY),
        }
    }
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: Dims,
    pub seed: u64,
    pub layers: Vec<LayerRecord>,
    /// Aggregation weights over the kept domains, when the model is an
    /// aggregate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, seed: u64, omega: Option<Vec<f64>>) -> Self {
        let layers = model
            .phi_layers
            .iter()
            .chain(std::iter::once(&model.decision))
            .map(|l| LayerRecord {
                outputs: l.outputs(),
                inputs: l.inputs(),
                weights: l.weights.as_slice().to_vec(),
                bias: l.bias.clone(),
            })
            .collect();
        Checkpoint {
            dims: model.dims(),
            seed,
            layers,
            omega,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut layers = self
            .layers
            .iter()
            .map(|r| {
                Ok(Dense {
                    weights: Matrix::from_vec(r.outputs, r.inputs, r.weights.clone())?,
                    bias: r.bias.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decision = layers
            .pop()
            .ok_or_else(|| Error::Shape("checkpoint has no layers".into()))?;
        let model = Model {
            phi_layers: layers,
            decision,
        };
        model.validate()?;
        if model.dims() != self.dims {
            return Err(Error::Shape("checkpoint dims disagree with its layers".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("checkpoint: {e}")))
    }
}
