//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use autos::config::Mode;
use autos::federate::{aggregate, AggregateWeights};
use autos::gradcheck;
use autos::matrix::Matrix;
use autos::nn::{self, DensityExponent, Dims, Model, RadiusMetric};
use autos::pipeline::{run_pipeline, RunOutput};
use autos::selection;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const IRRELEVANT: usize = 2;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct SuiteRuns {
    runs: HashMap<(Mode, u64), RunOutput>,
    seconds: HashMap<(Mode, u64), f64>,
}

impl SuiteRuns {
    fn accuracy(&self, mode: Mode) -> Vec<f64> {
        SEEDS
            .iter()
            .map(|&s| self.runs[&(mode, s)].report.final_record.accuracy.expect("synthetic target is scored"))
            .collect()
    }
}

fn run_suite() -> SuiteRuns {
    let mut runs = HashMap::new();
    let mut seconds = HashMap::new();
    for mode in [Mode::Autos, Mode::Fedavg, Mode::WoL, Mode::WoLin, Mode::WoLex] {
        for &seed in &SEEDS {
            let t = Instant::now();
            let out = run_pipeline(&common::suite(seed, mode)).expect("suite run");
            seconds.insert((mode, seed), t.elapsed().as_secs_f64());
            runs.insert((mode, seed), out);
        }
    }
    SuiteRuns { runs, seconds }
}

fn irrelevant_rejection(s: &SuiteRuns) -> Outcome {
    let dropped = SEEDS
        .iter()
        .filter(|&&seed| !s.runs[&(Mode::Autos, seed)].report.final_record.kept[IRRELEVANT])
        .count();
    let autos = mean(&s.accuracy(Mode::Autos));
    let fedavg = mean(&s.accuracy(Mode::Fedavg));
    let slowest = SEEDS
        .iter()
        .map(|&seed| s.seconds[&(Mode::Autos, seed)] + s.seconds[&(Mode::Fedavg, seed)])
        .fold(0.0, f64::max);
    Outcome {
        name: "irrelevant-domain rejection",
        passed: dropped >= 4 && autos >= fedavg - 0.01 && autos >= 0.90 && slowest <= 120.0,
        detail: format!(
            "dropped in {dropped}/5 seeds, autos {autos:.4}, fedavg {fedavg:.4}, slowest seed {slowest:.1}s"
        ),
    }
}

fn ablation_ordering(s: &SuiteRuns) -> Outcome {
    let autos = mean(&s.accuracy(Mode::Autos));
    let wo_l = mean(&s.accuracy(Mode::WoL));
    let wo_lin = mean(&s.accuracy(Mode::WoLin));
    let wo_lex = mean(&s.accuracy(Mode::WoLex));
    let tol = 0.005;
    Outcome {
        name: "ablation ordering",
        passed: wo_lin <= wo_l + tol && wo_l <= autos + tol && wo_lex <= autos + tol,
        detail: format!("wo_Lin {wo_lin:.4}, wo_L {wo_l:.4}, wo_Lex {wo_lex:.4}, autos {autos:.4}"),
    }
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let checks = gradcheck::run_gradcheck(0, 20).expect("gradcheck runs");
    let secs = t.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    Outcome {
        name: "gradient suite",
        passed: checks.iter().all(|c| c.passed && c.instances == 20) && worst <= 1e-4 && secs <= 10.0,
        detail: format!("3 losses x 20 instances, worst rel err {worst:.2e}, {secs:.2}s"),
    }
}

fn radius_metric_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..50);
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let m = selection::cluster_radius(&d, RadiusMetric::Mean).unwrap();
        let r = selection::cluster_radius(&d, RadiusMetric::Rms).unwrap();
        let x = selection::cluster_radius(&d, RadiusMetric::Max).unwrap();
        if !(m <= r && r <= x) {
            violations += 1;
        }
    }
    Outcome {
        name: "radius-metric ordering",
        passed: violations == 0,
        detail: format!("{violations} violations in 1000 lists"),
    }
}

fn oracle_distance(f: &[f64], c: &[f64]) -> f64 {
    let dot: f64 = f.iter().zip(c).map(|(a, b)| a * b).sum();
    let nf = f.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nc = c.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nf * nc == 0.0 {
        1.0
    } else {
        1.0 - (dot / (nf * nc)).clamp(-1.0, 1.0)
    }
}

fn selection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let instances = 200;
    for _ in 0..instances {
        let d = rng.gen_range(2..6);
        let c = rng.gen_range(2..5);
        let n_t = rng.gen_range(1..=200);
        let n_s = rng.gen_range(1..=200);
        let gen = |rng: &mut ChaCha8Rng, r: usize| {
            Matrix::from_vec(r, d, (0..r * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let centers = gen(&mut rng, c);
        let tgt = gen(&mut rng, n_t);
        let src = gen(&mut rng, n_s);
        let labels: Vec<usize> = (0..n_s).map(|_| rng.gen_range(0..c)).collect();
        let th_s: Vec<Option<f64>> = (0..c).map(|_| rng.gen_bool(0.9).then(|| rng.gen_range(0.0..1.5))).collect();
        let th_t: Vec<Option<f64>> = (0..c).map(|_| rng.gen_bool(0.9).then(|| rng.gen_range(0.0..1.5))).collect();

        let assign = selection::assign_targets(&tgt, &centers).unwrap();
        let dt = selection::distance_matrix(&tgt, &centers);
        let ds = selection::distance_matrix(&src, &centers);
        let (conf_s, conf_t) = selection::select_confident(Some((&ds, &labels)), &dt, &assign, &th_s, &th_t);

        // exhaustive recomputation
        let mut oracle_assign = Vec::new();
        let mut oracle_t = Vec::new();
        for i in 0..n_t {
            let dists: Vec<f64> = (0..c).map(|k| oracle_distance(tgt.row(i), centers.row(k))).collect();
            let best = (0..c).find(|&k| (0..c).all(|j| dists[k] <= dists[j])).unwrap();
            oracle_assign.push(best);
            if th_t[best].is_some_and(|t| dists[best] < t) {
                oracle_t.push((i, best));
            }
        }
        let oracle_s: Vec<usize> = (0..n_s)
            .filter(|&i| th_s[labels[i]].is_some_and(|t| oracle_distance(src.row(i), centers.row(labels[i])) < t))
            .collect();
        if assign != oracle_assign || conf_t != oracle_t || conf_s != oracle_s {
            mismatches += 1;
        }
    }
    Outcome {
        name: "selection oracle equivalence",
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches in {instances} instances"),
    }
}

fn max_abs_diff(a: &Model, b: &Model) -> f64 {
    a.params().zip(b.params()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn aggregation_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dims = Dims {
        d_in: 5,
        hidden_width: 6,
        classes: 3,
    };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let models: Vec<Model> = (0..4).map(|_| Model::init(&mut rng, dims)).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
        let all = [true; 4];

        let (single, _) = aggregate(&models[..1], &w[..1], &[true]).unwrap();
        worst = worst.max(max_abs_diff(&single, &models[0]));

        let same = vec![models[1].clone(); 4];
        let (agg, _) = aggregate(&same, &w, &all).unwrap();
        worst = worst.max(max_abs_diff(&agg, &models[1]));

        let (a, _) = aggregate(&models, &w, &all).unwrap();
        let perm = [3, 1, 0, 2];
        let pm: Vec<Model> = perm.iter().map(|&i| models[i].clone()).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let (b, _) = aggregate(&pm, &pw, &all).unwrap();
        worst = worst.max(max_abs_diff(&a, &b));

        let keep = [true, false, true, true];
        let r = AggregateWeights::renormalize(&w, &keep).unwrap();
        worst = worst.max((r.omega_kept.iter().sum::<f64>() - 1.0).abs());
        if r.omega_kept.iter().any(|&x| x < 0.0) || r.omega_kept.len() != 3 {
            worst = f64::INFINITY;
        }
    }
    Outcome {
        name: "aggregation identities",
        passed: worst <= 1e-12,
        detail: format!("worst deviation {worst:.2e} over 50 random draws"),
    }
}

fn formula_spot_values() -> Outcome {
    let tol = 1e-9;
    let ls = nn::label_smooth(&[1.0, 0.0], 0.1, 2);
    let eta = nn::learning_rate(0.001, 0.0);
    let sigma = nn::selection_sigma(1).unwrap();
    let keep = selection::keep_rule(&[0.5, 0.4, 0.05], 3, 0.1);
    let rho = selection::target_density(10, 0.5, 2, DensityExponent::One).unwrap();
    // unit disc area is π, so ρ = 10 / (π · 0.5)
    let rho_oracle = 20.0 / PI;
    let ok = (ls[0] - 0.95).abs() < tol
        && (ls[1] - 0.05).abs() < tol
        && (eta - 0.001).abs() < tol
        && (sigma - 0.5).abs() < tol
        && keep == vec![true, true, false]
        && (rho - rho_oracle).abs() < tol
        && (rho - 6.366).abs() < 1e-3;
    Outcome {
        name: "formula spot values",
        passed: ok,
        detail: format!("LS {ls:?}, eta {eta}, sigma {sigma}, keep {keep:?}, density {rho:.9}"),
    }
}

fn determinism() -> Outcome {
    let cfg = common::suite(11, Mode::Autos);
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    let ja = serde_json::to_string_pretty(&a.report).unwrap();
    let jb = serde_json::to_string_pretty(&b.report).unwrap();
    let mut other = cfg.clone();
    other.seed = 12;
    let c = run_pipeline(&other).unwrap();
    let pa: Vec<usize> = a.predictions.iter().map(|p| p.pred_label).collect();
    let pc: Vec<usize> = c.predictions.iter().map(|p| p.pred_label).collect();
    let probs_differ = a.predictions.iter().zip(&c.predictions).any(|(x, y)| x.max_prob != y.max_prob);
    Outcome {
        name: "determinism",
        passed: ja == jb && a.predictions == b.predictions && (pa != pc || probs_differ),
        detail: format!(
            "same seed identical: {}, other seed differs: {}",
            ja == jb,
            pa != pc || probs_differ
        ),
    }
}

fn teacher_consistency(s: &SuiteRuns) -> Outcome {
    let improved = SEEDS
        .iter()
        .filter(|&&seed| {
            let f = &s.runs[&(Mode::Autos, seed)].report.final_record;
            f.teacher_ce_final < f.teacher_ce_initial
        })
        .count();
    let pairs: Vec<String> = SEEDS
        .iter()
        .map(|&seed| {
            let f = &s.runs[&(Mode::Autos, seed)].report.final_record;
            format!("{:.3}->{:.3}", f.teacher_ce_initial, f.teacher_ce_final)
        })
        .collect();
    Outcome {
        name: "teacher-consistency trend",
        passed: improved >= 4,
        detail: format!("CE fell in {improved}/5 seeds ({})", pairs.join(", ")),
    }
}

fn main() -> ExitCode {
    let suite = run_suite();
    let outcomes = [
        irrelevant_rejection(&suite),
        ablation_ordering(&suite),
        gradient_suite(),
        radius_metric_order(),
        selection_oracle(),
        aggregation_identities(),
        formula_spot_values(),
        determinism(),
        teacher_consistency(&suite),
    ];
    let mut failed = 0;
    for (i, o) in outcomes.iter().enumerate() {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {} {tag} {}: {}", i + 1, o.name, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
