//! Randomized finite-difference audit of every analytic gradient: the
//! smoothed source cross-entropy, the external (prompt-side) loss and the
//! internal (target-model) loss.

use rand::Rng;
use serde::Serialize;

use crate::adapt::{self, Teacher, VarianceSource};
use crate::error::Result;
use crate::matrix::{self, Matrix};
use crate::nn::{self, Dims, Hyperparams, Model};
use crate::rng::{self, Stream};

pub const EPS: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: &'static str,
    pub instances: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized")
}

fn random_simplex<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .expect("sized");
    for i in 0..rows {
        matrix::softmax_in_place(m.row_mut(i));
    }
    m
}

fn random_dims<R: Rng>(rng: &mut R) -> (Dims, usize) {
    let dims = Dims {
        d_in: rng.gen_range(2..=8),
        hidden_width: rng.gen_range(2..=8),
        classes: rng.gen_range(2..=4),
    };
    (dims, rng.gen_range(1..=5))
}

fn model_error(model: &Model, analytic: &Model, mut loss: impl FnMut(&Model) -> f64) -> Result<f64> {
    let fd = nn::finite_diff_grad(
        |w| {
            let mut m = model.clone();
            m.set_flat(w).expect("same length");
            loss(&m)
        },
        &model.to_flat(),
        EPS,
    )?;
    Ok(nn::relative_error(&analytic.to_flat(), &fd))
}

fn smoothed_ce_error(seed: u64, hp: &Hyperparams) -> Result<f64> {
    let mut rng = rng::stream(seed, Stream::Init);
    let (dims, n) = random_dims(&mut rng);
    let model = Model::init(&mut rng, dims);
    let x = uniform_matrix(&mut rng, n, dims.d_in);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dims.classes)).collect();
    let targets = nn::smoothed_targets(&labels, hp.mu, dims.classes);
    let (_, grads) = nn::smoothed_ce_loss(&model, &x, &targets)?;
    model_error(&model, &grads, |m| nn::smoothed_ce_loss(m, &x, &targets).expect("valid").0)
}

fn external_error(seed: u64, hp: &Hyperparams) -> Result<f64> {
    let mut rng = rng::stream(seed, Stream::Teacher);
    let (dims, n) = random_dims(&mut rng);
    let joint = rng.gen_range(2..=8);
    let mut teacher = Teacher::new(&mut rng, dims.d_in, joint, dims.classes, hp.tau)?;
    teacher.prompts = uniform_matrix(&mut rng, dims.classes, joint);
    let x = uniform_matrix(&mut rng, n, dims.d_in);
    let p_t = random_simplex(&mut rng, n, dims.classes);
    let g: Vec<f64> = (0..dims.classes).map(|_| rng.gen_range(0.5..2.0)).collect();
    let variance = if seed % 2 == 0 {
        VarianceSource::Teacher
    } else {
        VarianceSource::Student
    };
    // P_V is the detached teacher output at the expansion point
    let p_v = adapt::teacher_predict(&teacher, &x)?;
    let loss = |t: &Teacher, g: &[f64]| {
        adapt::external_loss(t, &x, &p_t, Some(&p_v), g, hp.beta, hp.gamma, variance)
    };
    let (_, grad_prompts, grad_g) = loss(&teacher, &g)?;
    let fd_prompts = nn::finite_diff_grad(
        |w| {
            let mut t = teacher.clone();
            t.prompts.as_mut_slice().copy_from_slice(w);
            loss(&t, &g).expect("valid").0
        },
        teacher.prompts.as_slice(),
        EPS,
    )?;
    let fd_g = nn::finite_diff_grad(|w| loss(&teacher, w).expect("valid").0, &g, EPS)?;
    // prompts and g are one trainable vector
    let analytic: Vec<f64> = grad_prompts.as_slice().iter().chain(&grad_g).copied().collect();
    let numeric: Vec<f64> = fd_prompts.into_iter().chain(fd_g).collect();
    Ok(nn::relative_error(&analytic, &numeric))
}

fn internal_error(seed: u64, hp: &Hyperparams) -> Result<f64> {
    let mut rng = rng::stream(seed, Stream::Batching);
    let (dims, n) = random_dims(&mut rng);
    let model = Model::init(&mut rng, dims);
    let x = uniform_matrix(&mut rng, n, dims.d_in);
    let p_fm = random_simplex(&mut rng, n, dims.classes);
    let (_, grads) = adapt::internal_loss(&model, &x, &p_fm, hp.theta, hp.delta)?;
    model_error(&model, &grads, |m| {
        adapt::internal_loss(m, &x, &p_fm, hp.theta, hp.delta).expect("valid").0
    })
}

/// Checks `instances` random tiny problems per loss, seeded from `seed`.
pub fn run_gradcheck(seed: u64, instances: usize) -> Result<Vec<LossCheck>> {
    let hp = Hyperparams::default();
    type Check = fn(u64, &Hyperparams) -> Result<f64>;
    let checks: [(&'static str, Check); 3] = [
        ("smoothed_ce", smoothed_ce_error),
        ("external", external_error),
        ("internal", internal_error),
    ];
    let mut out = Vec::with_capacity(checks.len());
    for (name, check) in checks {
        let mut worst = 0.0f64;
        for i in 0..instances as u64 {
            worst = worst.max(check(seed.wrapping_mul(1000).wrapping_add(i), &hp)?);
        }
        out.push(LossCheck {
            loss: name,
            instances,
            max_relative_error: worst,
            passed: worst <= TOLERANCE,
        });
    }
    Ok(out)
}
