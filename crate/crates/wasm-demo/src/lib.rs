//! Browser bindings. Each export returns a JSON string that the static page
//! in `www/` plots; the same functions back the native tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use autos::config::{Mode, RunConfig};
use autos::data::SyntheticSpec;
use autos::nn::{self, DensityExponent};
use autos::pipeline::run_pipeline;
use autos::selection;

#[derive(Debug, Serialize)]
pub struct EpochPoint {
    pub epoch: usize,
    /// ω per original domain, `None` once the domain has been dropped.
    pub omega: Vec<Option<f64>>,
    pub kept: Vec<bool>,
    pub threshold: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub domains: Vec<String>,
    pub irrelevant: Vec<usize>,
    pub epochs: Vec<EpochPoint>,
    pub final_accuracy: Option<f64>,
}

fn parse_mode(mode: &str) -> autos::Result<Mode> {
    Mode::ALL
        .into_iter()
        .find(|m| m.name() == mode)
        .ok_or_else(|| autos::Error::Config(format!("unknown mode {mode}")))
}

/// A small three-source run; the last source is irrelevant when asked.
pub fn trajectory(seed: u64, separation: f64, irrelevant: bool, mode: &str, epochs: usize) -> autos::Result<Trajectory> {
    let spec = SyntheticSpec {
        sources: 3,
        classes: 4,
        dim: 16,
        separation,
        noise_sigma: 1.0,
        irrelevant_domains: if irrelevant { vec![2] } else { vec![] },
        samples_per_class: 50,
        teacher_samples_per_class: 20,
    };
    let mut cfg = RunConfig::synthetic(spec, seed);
    cfg.train.epochs = epochs;
    cfg.train.eta0 = 0.05;
    cfg.train.local_passes = 20;
    cfg.adapt.mode = parse_mode(mode)?;
    cfg.validate()?;

    let out = run_pipeline(&cfg)?;
    let k = out.report.domain_names.len();
    let points = out
        .report
        .epochs
        .iter()
        .map(|e| {
            let mut omega = vec![None; k];
            for d in &e.domains {
                omega[d.domain] = Some(d.omega);
            }
            EpochPoint {
                epoch: e.epoch,
                omega,
                kept: e.kept.clone(),
                threshold: 1.0 / e.domains.len() as f64 - e.sigma,
                accuracy: e.target_accuracy,
            }
        })
        .collect();
    Ok(Trajectory {
        domains: out.report.domain_names.clone(),
        irrelevant: cfg.data.synthetic.unwrap().irrelevant_domains,
        epochs: points,
        final_accuracy: out.report.final_record.accuracy,
    })
}

#[derive(Debug, Serialize)]
pub struct ThresholdPoint {
    pub epoch: usize,
    pub sigma: f64,
    pub threshold: f64,
}

/// Keep threshold `1/K − σ` over epochs for a fixed live count.
pub fn threshold_curve(k: usize, epochs: usize) -> autos::Result<Vec<ThresholdPoint>> {
    if k == 0 {
        return Err(autos::Error::Config("need at least one domain".into()));
    }
    (1..=epochs)
        .map(|e| {
            let sigma = nn::selection_sigma(e)?;
            Ok(ThresholdPoint {
                epoch: e,
                sigma,
                threshold: 1.0 / k as f64 - sigma,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct WeightBreakdown {
    pub density: Vec<f64>,
    pub omega1: f64,
    pub omega2: f64,
    pub omega: f64,
}

/// Domain weight from per-class confident-target counts sharing one radius.
pub fn weight_breakdown(counts: &[u32], radius: f64, dim: usize, n: usize, lambda: f64) -> autos::Result<WeightBreakdown> {
    let density = counts
        .iter()
        .map(|&c| selection::target_density(c as usize, radius, dim, DensityExponent::One))
        .collect::<autos::Result<Vec<_>>>()?;
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total > n {
        return Err(autos::Error::Config(format!("{total} confident targets out of {n}")));
    }
    let rho = vec![density.iter().map(|&r| Some(r)).collect()];
    let w = selection::domain_weights(&[total], n, &rho, lambda)?;
    Ok(WeightBreakdown {
        density,
        omega1: w.omega1[0],
        omega2: w.omega2[0],
        omega: w.omega[0],
    })
}

fn to_js<T: Serialize>(r: autos::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn run_trajectory(seed: u32, separation: f64, irrelevant: bool, mode: &str, epochs: u32) -> Result<String, JsError> {
    to_js(trajectory(seed as u64, separation, irrelevant, mode, epochs as usize))
}

#[wasm_bindgen]
pub fn keep_threshold(k: u32, epochs: u32) -> Result<String, JsError> {
    to_js(threshold_curve(k as usize, epochs as usize))
}

#[wasm_bindgen]
pub fn domain_weight(counts: Vec<u32>, radius: f64, dim: u32, n: u32, lambda: f64) -> Result<String, JsError> {
    to_js(weight_breakdown(&counts, radius, dim as usize, n as usize, lambda))
}
