//! Teacher-guided target adaptation.
//!
//! The teacher is a frozen linear encoder into a joint embedding space plus
//! one learnable prompt vector per class. Its predictions supervise the
//! target model, while the prompts (and a per-class rescale `g`) are tuned to
//! agree with the target model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::nn::{self, clamped_ln, Model, Momentum, PROB_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    /// Frozen (joint × d_in) encoder.
    vis_encoder: Matrix,
    /// Learnable (C × joint) class prompts.
    pub prompts: Matrix,
    pub tau: f64,
}

/// Which diagonal variance the Gaussian term of `L_ex` divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceSource {
    /// Teacher probabilities.
    Teacher,
    /// Target-model probabilities.
    Student,
}

/// Random matrix with orthonormal columns (rows if `rows < cols`).
fn random_orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p = matrix::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = matrix::norm(&v);
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for (i, &v) in b.iter().enumerate() {
            if rows >= cols {
                m.set(i, j, v);
            } else {
                m.set(j, i, v);
            }
        }
    }
    m
}

fn unit_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = matrix::norm(row);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        row.iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Teacher forward pass with the pieces needed for prompt gradients.
#[derive(Debug, Clone)]
pub struct TeacherPass {
    pub vis_unit: Matrix,
    pub prompt_unit: Matrix,
    pub prompt_norms: Vec<f64>,
    pub probs: Matrix,
}

impl Teacher {
    /// Random orthogonal encoder with all-zero prompts; call
    /// [`Teacher::init_prompts`] before use.
    pub fn new<R: Rng>(rng: &mut R, d_in: usize, joint_dim: usize, classes: usize, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("tau = {tau} must be finite and >= 0")));
        }
        Ok(Teacher {
            vis_encoder: random_orthogonal(rng, joint_dim, d_in),
            prompts: Matrix::zeros(classes, joint_dim),
            tau,
        })
    }

    pub fn from_parts(vis_encoder: Matrix, prompts: Matrix, tau: f64) -> Result<Self> {
        if vis_encoder.rows() != prompts.cols() {
            return Err(Error::Shape("prompt width differs from joint dimension".into()));
        }
        Ok(Teacher {
            vis_encoder,
            prompts,
            tau,
        })
    }

    pub fn vis_encoder(&self) -> &Matrix {
        &self.vis_encoder
    }

    pub fn classes(&self) -> usize {
        self.prompts.rows()
    }

    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.vis_encoder.cols() {
            return Err(Error::Shape(format!(
                "teacher expects {} features, got {}",
                self.vis_encoder.cols(),
                x.cols()
            )));
        }
        Ok(x.matmul_transposed(&self.vis_encoder))
    }

    /// Sets each prompt to the mean joint embedding of its class.
    pub fn init_prompts(&mut self, x: &Matrix, labels: &[usize]) -> Result<()> {
        let emb = self.embed(x)?;
        let means = crate::data::class_mean_vectors(&emb, labels, self.classes());
        for (c, m) in means.into_iter().enumerate() {
            let m = m.ok_or_else(|| Error::Data(format!("no teacher sample for class {c}")))?;
            self.prompts.row_mut(c).copy_from_slice(&m);
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<TeacherPass> {
        let (vis_unit, _) = unit_rows(&self.embed(x)?)?;
        let (prompt_unit, prompt_norms) = unit_rows(&self.prompts)?;
        let mut logits = vis_unit.matmul_transposed(&prompt_unit);
        logits.as_mut_slice().iter_mut().for_each(|v| *v *= self.tau);
        Ok(TeacherPass {
            probs: matrix::softmax_rows(&logits),
            vis_unit,
            prompt_unit,
            prompt_norms,
        })
    }

    /// Gradient with respect to the prompts given dL/dlogits.
    pub fn prompt_grad(&self, pass: &TeacherPass, grad_logits: &Matrix) -> Matrix {
        // dz_ic/dT_c = τ (v̂_i − (v̂_i·t̂_c) t̂_c) / ‖T_c‖
        let mut grad = Matrix::zeros(self.prompts.rows(), self.prompts.cols());
        for c in 0..self.prompts.rows() {
            let t = pass.prompt_unit.row(c);
            let scale = self.tau / pass.prompt_norms[c];
            let g = grad.row_mut(c);
            for (i, v) in pass.vis_unit.iter_rows().enumerate() {
                let dz = grad_logits.get(i, c);
                if dz == 0.0 {
                    continue;
                }
                let proj = matrix::dot(v, t);
                for ((gj, vj), tj) in g.iter_mut().zip(v).zip(t) {
                    *gj += dz * scale * (vj - proj * tj);
                }
            }
        }
        grad
    }
}

/// Teacher class probabilities `P_FM`.
pub fn teacher_predict(teacher: &Teacher, x: &Matrix) -> Result<Matrix> {
    Ok(teacher.forward(x)?.probs)
}

/// Positive per-class rescale followed by row renormalization.
pub fn g_transform(p: &Matrix, g_scale: &[f64]) -> Matrix {
    let mut out = p.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        row.iter_mut().zip(g_scale).for_each(|(v, g)| *v *= g);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// `Σ_c q_c ln(q_c / p_c)` with both sides clamped away from zero.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| if qi <= 0.0 { 0.0 } else { qi * (clamped_ln(qi) - clamped_ln(pi)) })
        .sum()
}

/// Value of `L_ex` together with its gradients on the teacher side.
#[derive(Debug, Clone)]
pub struct ExternalLoss {
    pub value: f64,
    /// dL/dP_FM, where P_FM enters both the Gaussian term and (as P'_V) the
    /// bottleneck term.
    pub grad_fm: Matrix,
    pub grad_g: Vec<f64>,
}

/// `L_ex = (β/n) Σ_i [ Σ_c (P_FM − P_t)²/v + Σ_c ln v + γ·KL(g(P'_V) ‖ P_V) ]`
/// with `v` the diagonal variance (`P_FM` or `P_t`).
///
/// `p_fm` doubles as `P'_V`; `p_v` is a constant that receives no gradient.
pub fn external_loss_terms(
    p_fm: &Matrix,
    p_t: &Matrix,
    p_v: &Matrix,
    g_scale: &[f64],
    beta: f64,
    gamma: f64,
    variance: VarianceSource,
) -> Result<ExternalLoss> {
    if p_fm.shape() != p_t.shape() || p_fm.shape() != p_v.shape() || g_scale.len() != p_fm.cols() {
        return Err(Error::Shape("teacher/student probabilities disagree".into()));
    }
    let n = p_fm.rows() as f64;
    let classes = p_fm.cols();
    let mut value = 0.0;
    let mut grad_fm = Matrix::zeros(p_fm.rows(), classes);
    let mut grad_g = vec![0.0; classes];
    let q_all = g_transform(p_fm, g_scale);
    for i in 0..p_fm.rows() {
        let a: Vec<f64> = p_fm.row(i).iter().map(|v| v.max(PROB_FLOOR)).collect();
        let b = p_t.row(i);
        let pv = p_v.row(i);
        let q = q_all.row(i);
        let g = grad_fm.row_mut(i);

        let mut sample = 0.0;
        for c in 0..classes {
            let diff = a[c] - b[c];
            match variance {
                VarianceSource::Teacher => {
                    sample += diff * diff / a[c] + a[c].ln();
                    g[c] += beta / n * (2.0 * diff / a[c] - diff * diff / (a[c] * a[c]) + 1.0 / a[c]);
                }
                VarianceSource::Student => {
                    let v = b[c].max(PROB_FLOOR);
                    sample += diff * diff / v + v.ln();
                    g[c] += beta / n * (2.0 * diff / v);
                }
            }
        }

        sample += gamma * kl_divergence(q, pv);
        // dKL/dq_c = ln(q_c / pv_c) + 1, then back through the rescale
        let dq: Vec<f64> = q
            .iter()
            .zip(pv)
            .map(|(&qc, &pc)| clamped_ln(qc) - clamped_ln(pc) + 1.0)
            .collect();
        let inner = matrix::dot(&dq, q);
        let s: f64 = a.iter().zip(g_scale).map(|(x, y)| x * y).sum();
        for c in 0..classes {
            let common = beta * gamma / n * (dq[c] - inner) / s;
            g[c] += common * g_scale[c];
            grad_g[c] += common * a[c];
        }
        value += beta * sample;
    }
    Ok(ExternalLoss {
        value: value / n,
        grad_fm,
        grad_g,
    })
}

/// `L_ex` and its gradients with respect to the prompts and `g`.
///
/// `p_v` defaults to the current teacher prediction, detached.
#[allow(clippy::too_many_arguments)]
pub fn external_loss(
    teacher: &Teacher,
    x: &Matrix,
    p_t: &Matrix,
    p_v: Option<&Matrix>,
    g_scale: &[f64],
    beta: f64,
    gamma: f64,
    variance: VarianceSource,
) -> Result<(f64, Matrix, Vec<f64>)> {
    let pass = teacher.forward(x)?;
    let p_v = p_v.unwrap_or(&pass.probs);
    let terms = external_loss_terms(&pass.probs, p_t, p_v, g_scale, beta, gamma, variance)?;
    let mut grad_logits = Matrix::zeros(pass.probs.rows(), pass.probs.cols());
    for i in 0..pass.probs.rows() {
        let dz = matrix::softmax_vjp(pass.probs.row(i), terms.grad_fm.row(i));
        grad_logits.row_mut(i).copy_from_slice(&dz);
    }
    let grad_prompts = teacher.prompt_grad(&pass, &grad_logits);
    Ok((terms.value, grad_prompts, terms.grad_g))
}

/// `L_in = −(θ/n) Σ_i Σ_c P_FM ln P_t + δ Σ_c P̄_c ln P̄_c + Σ_c P̄_c ln(C·P̄_c)`
/// and dL/dP_t, with `P̄` the batch-mean student prediction.
pub fn internal_loss_terms(p_fm: &Matrix, p_t: &Matrix, theta: f64, delta: f64) -> Result<(f64, Matrix)> {
    if p_fm.shape() != p_t.shape() {
        return Err(Error::Shape("teacher/student probabilities disagree".into()));
    }
    let n = p_t.rows() as f64;
    let classes = p_t.cols();
    let mut mean = vec![0.0; classes];
    for row in p_t.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
    }
    let mut ce = 0.0;
    for (f, t) in p_fm.iter_rows().zip(p_t.iter_rows()) {
        ce -= f.iter().zip(t).map(|(a, b)| a * clamped_ln(*b)).sum::<f64>();
    }
    let neg_entropy: f64 = mean.iter().map(|m| m * clamped_ln(*m)).sum();
    let uniform = 1.0 / classes as f64;
    let kl_uniform: f64 = mean.iter().map(|m| m * (clamped_ln(*m) - uniform.ln())).sum();
    let value = theta * ce / n + delta * neg_entropy + kl_uniform;

    let mut grad = Matrix::zeros(p_t.rows(), classes);
    let shared: Vec<f64> = mean
        .iter()
        .map(|m| (delta * (clamped_ln(*m) + 1.0) + clamped_ln(*m) - uniform.ln() + 1.0) / n)
        .collect();
    for i in 0..p_t.rows() {
        let f = p_fm.row(i);
        let t = p_t.row(i);
        let g = grad.row_mut(i);
        for c in 0..classes {
            g[c] = -theta * f[c] / (t[c].max(PROB_FLOOR) * n) + shared[c];
        }
    }
    Ok((value, grad))
}

/// `L_in` and its gradient with respect to the target model parameters; the
/// teacher prediction is a constant.
pub fn internal_loss(model: &Model, x: &Matrix, p_fm: &Matrix, theta: f64, delta: f64) -> Result<(f64, Model)> {
    let pass = model.forward(x)?;
    let (value, grad_p) = internal_loss_terms(p_fm, &pass.probs, theta, delta)?;
    let mut grad_logits = Matrix::zeros(pass.probs.rows(), pass.probs.cols());
    for i in 0..pass.probs.rows() {
        let dz = matrix::softmax_vjp(pass.probs.row(i), grad_p.row(i));
        grad_logits.row_mut(i).copy_from_slice(&dz);
    }
    Ok((value, model.backward(&pass, &grad_logits)))
}

/// `−(1/n) Σ_i Σ_c P_FM ln P_t`.
pub fn teacher_student_ce(p_fm: &Matrix, p_t: &Matrix) -> f64 {
    let n = p_t.rows() as f64;
    -p_fm
        .iter_rows()
        .zip(p_t.iter_rows())
        .map(|(f, t)| f.iter().zip(t).map(|(a, b)| a * clamped_ln(*b)).sum::<f64>())
        .sum::<f64>()
        / n
}

/// Which halves of an adaptation step run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptSwitches {
    pub update_prompts: bool,
    pub update_model: bool,
}

/// Mutable adaptation state carried across epochs.
#[derive(Debug, Clone)]
pub struct Adapter {
    pub teacher: Teacher,
    pub g_scale: Vec<f64>,
    prompt_opt: Momentum,
    model_opt: Momentum,
}

/// Lower bound kept on every entry of `g`.
pub const G_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptLosses {
    pub l_ex: f64,
    pub l_in: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptParams {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub delta: f64,
    pub variance: VarianceSource,
}

impl Adapter {
    pub fn new(teacher: Teacher, model: &Model, momentum: f64) -> Self {
        let classes = teacher.classes();
        let prompt_len = teacher.prompts.as_slice().len() + classes;
        Adapter {
            teacher,
            g_scale: vec![1.0; classes],
            prompt_opt: Momentum::new(momentum, prompt_len),
            model_opt: Momentum::new(momentum, model.param_count()),
        }
    }

    /// The target model changes shape never, but its parameters are replaced
    /// by aggregation every epoch; momentum carries over regardless.
    pub fn adapt_epoch(
        &mut self,
        model: &mut Model,
        x: &Matrix,
        batches: &[Vec<usize>],
        params: AdaptParams,
        switches: AdaptSwitches,
    ) -> Result<AdaptLosses> {
        let mut totals = AdaptLosses::default();
        let mut weight = 0.0;
        for batch in batches {
            let xb = x.select_rows(batch);
            let p_t = model.features_and_probs(&xb)?.1;

            let (l_ex, grad_prompts, grad_g) = external_loss(
                &self.teacher,
                &xb,
                &p_t,
                None,
                &self.g_scale,
                params.beta,
                params.gamma,
                params.variance,
            )?;
            if switches.update_prompts {
                let grads = grad_prompts.as_slice().iter().chain(&grad_g).copied();
                let slots = self
                    .teacher
                    .prompts
                    .as_mut_slice()
                    .iter_mut()
                    .chain(self.g_scale.iter_mut());
                self.prompt_opt.step(slots, grads, params.eta);
                self.g_scale.iter_mut().for_each(|g| *g = g.max(G_FLOOR));
            }

            let p_fm = teacher_predict(&self.teacher, &xb)?;
            let (l_in, grads) = internal_loss(model, &xb, &p_fm, params.theta, params.delta)?;
            if !(l_ex.is_finite() && l_in.is_finite()) {
                return Err(Error::NonFinite("adaptation loss".into()));
            }
            if switches.update_model {
                let slots = model.param_slices_mut().into_iter().flat_map(|s| s.iter_mut());
                self.model_opt.step(slots, grads.params(), params.eta);
            }
            let w = batch.len() as f64;
            totals.l_ex += w * l_ex;
            totals.l_in += w * l_in;
            weight += w;
        }
        if weight > 0.0 {
            totals.l_ex /= weight;
            totals.l_in /= weight;
        }
        Ok(totals)
    }
}

/// Arg-max class per row of `softmax(P(Φ(x)))`, lowest index on ties.
pub fn final_labels(model: &Model, x: &Matrix) -> Result<Vec<usize>> {
    let pass = model.forward(x)?;
    Ok(pass.logits.iter_rows().map(matrix::argmax).collect())
}

pub use nn::relative_error;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_grad, Dims};
    use crate::rng::{self, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_simplex<R: Rng>(rng: &mut R, n: usize, c: usize) -> Matrix {
        let mut m = Matrix::from_vec(n, c, (0..n * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        for i in 0..n {
            matrix::softmax_in_place(m.row_mut(i));
        }
        m
    }

    fn teacher(seed: u64, d: usize, joint: usize, c: usize) -> Teacher {
        let mut rng = rng::stream(seed, Stream::Teacher);
        let mut t = Teacher::new(&mut rng, d, joint, c, 3.0).unwrap();
        for v in t.prompts.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn encoder_is_orthogonal() {
        let mut rng = rng::stream(1, Stream::Teacher);
        for (j, d) in [(6, 4), (4, 6), (5, 5)] {
            let t = Teacher::new(&mut rng, d, j, 2, 1.0).unwrap();
            let w = t.vis_encoder();
            let g = if j >= d { w.transpose_matmul(w) } else { w.matmul_transposed(w) };
            for i in 0..g.rows() {
                for k in 0..g.cols() {
                    let e = if i == k { 1.0 } else { 0.0 };
                    assert!((g.get(i, k) - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn teacher_limits() {
        let enc = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let prompts = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let x = Matrix::from_rows(&[[0.0, 5.0]]).unwrap();
        let t = Teacher::from_parts(enc.clone(), prompts.clone(), 200.0).unwrap();
        let p = teacher_predict(&t, &x).unwrap();
        assert!(p.get(0, 1) > 1.0 - 1e-12);
        let t = Teacher::from_parts(enc.clone(), prompts.clone(), 0.0).unwrap();
        assert_eq!(teacher_predict(&t, &x).unwrap().row(0), &[0.5, 0.5]);
        let t = Teacher::from_parts(enc, prompts, 1.0).unwrap();
        assert!(matches!(teacher_predict(&t, &Matrix::zeros(1, 2)), Err(Error::ZeroVector)));
    }

    #[test]
    fn g_transform_values() {
        let p = Matrix::from_rows(&[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        assert_eq!(g_transform(&p, &[1.0, 1.0]), p);
        let q = g_transform(&p, &[2.0, 1.0]);
        assert!((q.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        for row in q.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn external_loss_cancellation() {
        let p = Matrix::from_rows(&[[0.3, 0.7], [0.6, 0.4]]).unwrap();
        let l = external_loss_terms(&p, &p, &p, &[1.0, 1.0], 0.003, 0.5, VarianceSource::Teacher).unwrap();
        let expected = 0.003 / 2.0 * p.as_slice().iter().map(|v| v.ln()).sum::<f64>();
        assert!((l.value - expected).abs() < 1e-15);
    }

    #[test]
    fn internal_loss_uniform_value() {
        let u = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let (v, _) = internal_loss_terms(&u, &u, 0.4, 1.0).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((v - (0.4 * ln2 - ln2)).abs() < 1e-15);
        assert!((v + 0.4159).abs() < 1e-4);
    }

    #[test]
    fn prompt_and_g_gradients_match_finite_differences() {
        for variance in [VarianceSource::Teacher, VarianceSource::Student] {
            let mut rng = rng::stream(21, Stream::Data);
            let t = teacher(3, 3, 4, 2);
            let x = Matrix::from_vec(2, 3, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let p_t = random_simplex(&mut rng, 2, 2);
            let g = vec![1.3, 0.7];
            // P_V is a detached copy of the teacher output at the expansion point
            let p_v = teacher_predict(&t, &x).unwrap();
            let (_, gp, gg) = external_loss(&t, &x, &p_t, Some(&p_v), &g, 0.7, 0.5, variance).unwrap();
            let fd = finite_diff_grad(
                |w| {
                    let mut t2 = t.clone();
                    t2.prompts.as_mut_slice().copy_from_slice(w);
                    external_loss(&t2, &x, &p_t, Some(&p_v), &g, 0.7, 0.5, variance).unwrap().0
                },
                t.prompts.as_slice(),
                1e-4,
            )
            .unwrap();
            assert!(relative_error(gp.as_slice(), &fd) < 1e-4);
            let fd = finite_diff_grad(
                |w| external_loss(&t, &x, &p_t, Some(&p_v), w, 0.7, 0.5, variance).unwrap().0,
                &g,
                1e-4,
            )
            .unwrap();
            assert!(relative_error(&gg, &fd) < 1e-4);
        }
    }

    #[test]
    fn internal_gradient_matches_finite_differences() {
        let mut rng = rng::stream(5, Stream::Init);
        let dims = Dims {
            d_in: 4,
            hidden_width: 3,
            classes: 3,
        };
        let m = Model::init(&mut rng, dims);
        let x = Matrix::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let p_fm = random_simplex(&mut rng, 5, 3);
        let (_, grads) = internal_loss(&m, &x, &p_fm, 0.4, 1.0).unwrap();
        let fd = finite_diff_grad(
            |w| {
                let mut m2 = m.clone();
                m2.set_flat(w).unwrap();
                internal_loss(&m2, &x, &p_fm, 0.4, 1.0).unwrap().0
            },
            &m.to_flat(),
            1e-4,
        )
        .unwrap();
        assert!(relative_error(&grads.to_flat(), &fd) < 1e-4);
    }

    #[test]
    fn external_loss_descends_on_prompts() {
        let mut rng = rng::stream(8, Stream::Data);
        let mut t = teacher(8, 3, 3, 2);
        let x = Matrix::from_vec(2, 3, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let p_t = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap();
        let g = vec![1.0, 1.0];
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let (l, gp, _) = external_loss(&t, &x, &p_t, None, &g, 1.0, 0.5, VarianceSource::Teacher).unwrap();
            assert!(l <= last + 1e-9, "{l} > {last}");
            last = l;
            for (p, d) in t.prompts.as_mut_slice().iter_mut().zip(gp.as_slice()) {
                *p -= 0.01 * d;
            }
        }
    }

    #[test]
    fn adapt_epoch_respects_switches_and_frozen_encoder() {
        let mut rng = rng::stream(9, Stream::Init);
        let dims = Dims {
            d_in: 3,
            hidden_width: 4,
            classes: 2,
        };
        let model = Model::init(&mut rng, dims);
        let t = teacher(9, 3, 3, 2);
        let x = Matrix::from_vec(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let batches = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let params = AdaptParams {
            eta: 0.0,
            beta: 0.003,
            gamma: 0.5,
            theta: 0.4,
            delta: 1.0,
            variance: VarianceSource::Teacher,
        };
        let on = AdaptSwitches {
            update_prompts: true,
            update_model: true,
        };

        let mut a = Adapter::new(t.clone(), &model, 0.9);
        let mut m = model.clone();
        a.adapt_epoch(&mut m, &x, &batches, params, on).unwrap();
        assert_eq!(m, model);
        assert_eq!(a.teacher, t);

        let mut a = Adapter::new(t.clone(), &model, 0.9);
        let mut m = model.clone();
        a.adapt_epoch(&mut m, &x, &batches, AdaptParams { eta: 0.1, ..params }, on).unwrap();
        assert_ne!(m, model);
        assert_ne!(a.teacher.prompts, t.prompts);
        assert_eq!(a.teacher.vis_encoder().as_slice(), t.vis_encoder().as_slice());

        let off = AdaptSwitches {
            update_prompts: false,
            update_model: false,
        };
        let mut a = Adapter::new(t.clone(), &model, 0.9);
        let mut m = model.clone();
        a.adapt_epoch(&mut m, &x, &batches, AdaptParams { eta: 0.1, ..params }, off).unwrap();
        assert_eq!(m, model);
        assert_eq!(a.teacher, t);
    }

    #[test]
    fn final_label_ties_and_order() {
        let mut m = Model::zeros(Dims {
            d_in: 1,
            hidden_width: 1,
            classes: 2,
        });
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(final_labels(&m, &x).unwrap(), vec![0]);
        m.decision.bias = vec![2.0, 1.0];
        assert_eq!(final_labels(&m, &x).unwrap(), vec![0]);
        m.decision.bias = vec![1.0, 2.0];
        assert_eq!(final_labels(&m, &x).unwrap(), vec![1]);
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_equal(seed in 0u64..500, c in 2usize..6) {
            let mut rng = rng::stream(seed, Stream::Data);
            let p = random_simplex(&mut rng, 2, c);
            prop_assert!(kl_divergence(p.row(0), p.row(1)) >= -1e-15);
            prop_assert!(kl_divergence(p.row(0), p.row(0)).abs() < 1e-15);
        }

        #[test]
        fn labels_invariant_to_logit_scale(seed in 0u64..500, s in 0.01f64..100.0) {
            let mut rng = rng::stream(seed, Stream::Init);
            let dims = Dims { d_in: 3, hidden_width: 4, classes: 3 };
            let m = Model::init(&mut rng, dims);
            let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let mut scaled = m.clone();
            scaled.decision.weights.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            scaled.decision.bias.iter_mut().for_each(|v| *v *= s);
            prop_assert_eq!(final_labels(&m, &x).unwrap(), final_labels(&scaled, &x).unwrap());
        }

        #[test]
        fn teacher_rows_on_simplex(seed in 0u64..500) {
            let mut rng = rng::stream(seed, Stream::Data);
            let t = teacher(seed, 3, 4, 3);
            let x = Matrix::from_vec(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            for row in teacher_predict(&t, &x).unwrap().iter_rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
