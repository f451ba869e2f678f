//! End-to-end training loop.
//!
//! Each epoch: local supervised training of every live domain model from the
//! current target model, per-domain selection statistics, domain weights and
//! the keep rule, weighted aggregation, then one adaptation pass over the
//! target under the teacher.


use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{self, AdaptParams, AdaptSwitches, Adapter, Teacher};
use crate::config::{Mode, RunConfig};
use crate::data::{self, FeatureTable, LabeledDomain, Standardizer, UnlabeledDomain};
use crate::error::{Error, Result};
use crate::federate;
use crate::matrix::{self, Matrix};
use crate::nn::{self, Dims, Hyperparams, Model, Momentum};
use crate::rng::{self, Stream};
use crate::selection::{self, DomainSelection, SourceRadii};

/// Inputs after loading and standardization.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub sources: Vec<LabeledDomain>,
    pub target: UnlabeledDomain,
    pub teacher_split: Option<LabeledDomain>,
    pub standardizer: Standardizer,
}

fn expect_labeled(t: FeatureTable, what: &str) -> Result<LabeledDomain> {
    match t {
        FeatureTable::Labeled(d) => Ok(d),
        FeatureTable::Unlabeled(_) => Err(Error::Data(format!("{what} must be labeled"))),
    }
}

/// Loads (or generates) the domains named by `cfg` and z-scores every
/// feature with pooled source statistics.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let (sources, target, teacher_split) = if let Some(spec) = &cfg.data.synthetic {
        let suite = data::generate_synthetic(spec, cfg.seed)?;
        (suite.sources, suite.target, Some(suite.teacher_split))
    } else {
        let paths = cfg.data.source_paths.as_ref().expect("validated");
        let cc = cfg.data.class_count;
        let mut sources = Vec::with_capacity(paths.len());
        for p in paths {
            sources.push(expect_labeled(data::load_feature_table(p, true, cc)?, "source table")?);
        }
        let classes = cc.unwrap_or_else(|| sources.iter().map(LabeledDomain::class_count).max().unwrap_or(0));
        let sources = sources
            .into_iter()
            .map(|d| LabeledDomain::new(d.name.clone(), d.samples().to_vec(), classes))
            .collect::<Result<Vec<_>>>()?;
        let target_path = cfg.data.target_path.as_ref().expect("validated");
        let target = match data::load_feature_table(target_path, false, Some(classes))? {
            FeatureTable::Unlabeled(t) => t,
            FeatureTable::Labeled(_) => unreachable!("loaded without labels"),
        };
        let teacher = match &cfg.data.teacher_path {
            Some(p) => Some(expect_labeled(data::load_feature_table(p, true, Some(classes))?, "teacher table")?),
            None => None,
        };
        (sources, target, teacher)
    };

    let classes = sources[0].class_count();
    let dim = sources[0].dim();
    if sources.iter().any(|s| s.dim() != dim || s.class_count() != classes) || target.dim() != dim {
        return Err(Error::Data("domains disagree on feature dimension or class count".into()));
    }
    if target.is_empty() {
        return Err(Error::Data("target domain is empty".into()));
    }
    let standardizer = Standardizer::fit(&sources)?;
    let z = |x: &[f64]| standardizer.apply(x);
    Ok(PreparedData {
        sources: sources.iter().map(|d| d.map_features(z)).collect(),
        target: target.map_features(z),
        teacher_split: teacher_split.map(|d| d.map_features(z)),
        standardizer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub domain: usize,
    pub name: String,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub omega: f64,
    pub kept: bool,
    pub n_confident_src: usize,
    pub n_confident_tgt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eta: f64,
    pub sigma: f64,
    /// One row per domain that was live at the start of the epoch.
    pub domains: Vec<DomainRecord>,
    /// Keep flag of every original domain after this epoch.
    pub kept: Vec<bool>,
    pub kept_count: usize,
    /// Renormalized aggregation weights over the kept domains.
    pub aggregate_weights: Vec<f64>,
    pub l_src: f64,
    pub l_ex: f64,
    pub l_in: f64,
    /// Teacher/student cross-entropy over the target before and after the
    /// adaptation pass.
    pub teacher_ce_before: f64,
    pub teacher_ce_after: f64,
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub kept: Vec<bool>,
    pub kept_count: usize,
    pub accuracy: Option<f64>,
    pub predictions_file: String,
    /// Teacher/student cross-entropy at the first aggregate, before any
    /// adaptation, and at the end of the run.
    pub teacher_ce_initial: f64,
    pub teacher_ce_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub config_hash: String,
    pub mode: String,
    pub domain_names: Vec<String>,
    pub epochs: Vec<EpochRecord>,
    #[serde(rename = "final")]
    pub final_record: FinalRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub pred_label: usize,
    pub max_prob: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub model: Model,
    pub omega_hat: Vec<f64>,
    pub predictions: Vec<Prediction>,
    pub wall_time_secs: f64,
}

/// Fraction of exact matches.
pub fn evaluate(preds: &[usize], hidden: &[usize]) -> Result<f64> {
    if preds.len() != hidden.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), hidden.len())));
    }
    if preds.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let hits = preds.iter().zip(hidden).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn shuffled_batches<R: Rng>(rng: &mut R, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Supervised passes with label smoothing. Returns the mean batch loss of
/// the last pass (0 when nothing ran).
fn train_supervised<R: Rng>(
    model: &mut Model,
    domain: &LabeledDomain,
    passes: usize,
    eta: f64,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<f64> {
    if passes == 0 || domain.is_empty() {
        return Ok(0.0);
    }
    let x = domain.features();
    let targets = nn::smoothed_targets(&domain.labels(), hp.mu, domain.class_count());
    let mut opt = Momentum::new(hp.momentum, model.param_count());
    let mut last = 0.0;
    for _ in 0..passes {
        let batches = shuffled_batches(rng, x.rows(), hp.batch_size);
        let mut total = 0.0;
        for b in &batches {
            let (loss, grads) = nn::smoothed_ce_loss(model, &x.select_rows(b), &targets.select_rows(b))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("source loss on {}", domain.name)));
            }
            let slots = model.param_slices_mut().into_iter().flat_map(|s| s.iter_mut());
            opt.step(slots, grads.params(), eta);
            total += loss * b.len() as f64;
        }
        last = total / x.rows() as f64;
    }
    Ok(last)
}

/// Pseudo-labeled confident targets of one domain as a labeled set.
fn target_part(target: &UnlabeledDomain, confident: &[(usize, usize)], name: &str, classes: usize) -> Result<LabeledDomain> {
    let samples = confident
        .iter()
        .map(|&(i, c)| {
            let t = &target.samples()[i];
            data::SampleRecord {
                id: t.id.clone(),
                features: t.features.clone(),
                label: Some(c),
            }
        })
        .collect();
    LabeledDomain::new(name, samples, classes)
}

/// Initial teacher: random orthogonal encoder, prompts at class means of the
/// teacher split (pooled sources when there is none).
pub fn build_teacher(cfg: &RunConfig, prepared: &PreparedData) -> Result<Teacher> {
    let dim = prepared.target.dim();
    let classes = prepared.sources[0].class_count();
    let mut rng = rng::stream(cfg.seed, Stream::Teacher);
    let joint = cfg.adapt.joint_dim.unwrap_or(dim);
    let mut teacher = Teacher::new(&mut rng, dim, joint, classes, cfg.adapt.tau)?;
    match &prepared.teacher_split {
        Some(split) => teacher.init_prompts(&split.features(), &split.labels())?,
        None => {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for d in &prepared.sources {
                for s in d.samples() {
                    rows.push(s.features.clone());
                    labels.push(s.label.expect("labeled"));
                }
            }
            teacher.init_prompts(&Matrix::from_rows(&rows)?, &labels)?;
        }
    }
    Ok(teacher)
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let prepared = prepare_data(cfg)?;
    run_prepared(cfg, &prepared)
}

// wasm32-unknown-unknown has no clock; timing reads as zero there.
struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn start() -> Self {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn elapsed_secs(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// Runs the loop on already prepared data.
pub fn run_prepared(cfg: &RunConfig, prepared: &PreparedData) -> Result<RunOutput> {
    let started = Clock::start();
    let hp = cfg.hyperparams();
    hp.validate()?;
    let mode = cfg.adapt.mode;
    let sources = &prepared.sources;
    let target = &prepared.target;
    let k_total = sources.len();
    let classes = sources[0].class_count();
    let dims = Dims {
        d_in: target.dim(),
        hidden_width: cfg.train.hidden_width,
        classes,
    };
    let x_t = target.features();
    let n_t = x_t.rows();

    let mut global = Model::init(&mut rng::stream(cfg.seed, Stream::Init), dims);
    let mut batch_rng = rng::stream(cfg.seed, Stream::Batching);
    let mut adapter = Adapter::new(build_teacher(cfg, prepared)?, &global, hp.momentum);

    let mut live = vec![true; k_total];
    let mut renewed: Vec<Option<LabeledDomain>> = vec![None; k_total];
    let mut target_parts: Vec<Option<LabeledDomain>> = vec![None; k_total];
    let mut cached_radii: Vec<Option<SourceRadii>> = vec![None; k_total];
    let mut domain_models: Vec<Model> = vec![global.clone(); k_total];
    let mut records = Vec::with_capacity(hp.epochs);
    let mut omega_hat = Vec::new();
    let mut teacher_ce_initial = None;

    let switches = AdaptSwitches {
        update_prompts: mode != Mode::WoLex,
        update_model: mode != Mode::WoLin,
    };

    for epoch in 1..=hp.epochs {
        let p = (epoch - 1) as f64 / hp.epochs as f64;
        let eta = nn::learning_rate(hp.eta0, p);
        let sigma = hp.sigma(epoch)?;
        let live_idx: Vec<usize> = (0..k_total).filter(|&k| live[k]).collect();

        // local supervised training, each domain starting from the target model
        let mut l_src_total = 0.0;
        let mut l_src_count = 0usize;
        for &k in &live_idx {
            let mut m = global.clone();
            let (set, passes): (Option<&LabeledDomain>, usize) = if epoch == 1 {
                (Some(&sources[k]), cfg.train.warmup_passes)
            } else {
                match mode {
                    Mode::WoL => (None, 0),
                    Mode::Fedavg => (Some(&sources[k]), cfg.train.local_passes),
                    Mode::AutosSf => (target_parts[k].as_ref(), cfg.train.local_passes),
                    _ => (Some(renewed[k].as_ref().unwrap_or(&sources[k])), cfg.train.local_passes),
                }
            };
            if let Some(set) = set {
                if passes > 0 && !set.is_empty() {
                    l_src_total += train_supervised(&mut m, set, passes, eta, &hp, &mut batch_rng)?;
                    l_src_count += 1;
                }
            }
            domain_models[k] = m;
        }
        let l_src = if l_src_count > 0 { l_src_total / l_src_count as f64 } else { 0.0 };

        // selection
        let mut domain_rows = Vec::with_capacity(live_idx.len());
        let keep_live: Vec<bool>;
        let omega_live: Vec<f64>;
        if mode == Mode::Fedavg {
            keep_live = vec![true; live_idx.len()];
            omega_live = vec![1.0 / live_idx.len() as f64; live_idx.len()];
            for (j, &k) in live_idx.iter().enumerate() {
                domain_rows.push(DomainRecord {
                    domain: k,
                    name: sources[k].name.clone(),
                    omega1: None,
                    omega2: None,
                    omega: omega_live[j],
                    kept: true,
                    n_confident_src: 0,
                    n_confident_tgt: 0,
                });
            }
        } else {
            let source_free = mode == Mode::AutosSf && epoch > 1;
            let mut selections: Vec<DomainSelection> = Vec::with_capacity(live_idx.len());
            for &k in &live_idx {
                let sel = selection::domain_selection(
                    &domain_models[k],
                    (!source_free).then_some(&sources[k]),
                    cached_radii[k].as_ref(),
                    &x_t,
                    &hp,
                )?;
                if cached_radii[k].is_none() {
                    cached_radii[k] = Some(sel.source_radii.clone());
                }
                selections.push(sel);
            }
            let counts: Vec<usize> = selections.iter().map(DomainSelection::confident_target_count).collect();
            let rho: Vec<Vec<Option<f64>>> = selections.iter().map(DomainSelection::densities).collect();
            let weights = selection::domain_weights(&counts, n_t, &rho, hp.lambda)?;
            let mut keep = selection::keep_at_least_one(&weights.omega, sigma);

            for (j, &k) in live_idx.iter().enumerate() {
                let sel = &selections[j];
                let tgt: &[(usize, usize)] = if mode == Mode::WoTarcof { &[] } else { &sel.confident_tgt };
                if keep[j] {
                    match selection::renew_domain(&sources[k], &sel.confident_src, target, tgt) {
                        Ok(d) => renewed[k] = Some(d),
                        Err(Error::EmptyDomain) => keep[j] = false,
                        Err(e) => return Err(e),
                    }
                    target_parts[k] = Some(target_part(target, &sel.confident_tgt, &sources[k].name, classes)?);
                }
            }
            if !keep.iter().any(|&b| b) {
                // every survivor renewed to nothing: keep the best on its old data
                keep[matrix::argmax(&weights.omega)] = true;
            }
            for (j, &k) in live_idx.iter().enumerate() {
                domain_rows.push(DomainRecord {
                    domain: k,
                    name: sources[k].name.clone(),
                    omega1: Some(weights.omega1[j]),
                    omega2: Some(weights.omega2[j]),
                    omega: weights.omega[j],
                    kept: keep[j],
                    n_confident_src: selections[j].confident_src.len(),
                    n_confident_tgt: selections[j].confident_tgt.len(),
                });
            }
            keep_live = keep;
            omega_live = weights.omega;
        }

        for (j, &k) in live_idx.iter().enumerate() {
            if !keep_live[j] {
                live[k] = false;
            }
        }

        // aggregation over kept domains
        let live_models: Vec<Model> = live_idx.iter().map(|&k| domain_models[k].clone()).collect();
        let (aggregated, agg_weights) = federate::aggregate(&live_models, &omega_live, &keep_live)?;
        global = aggregated;
        omega_hat = agg_weights.omega_kept.clone();

        // adaptation
        let p_fm = adapt::teacher_predict(&adapter.teacher, &x_t)?;
        let p_t = federate::predict_target(&global, &x_t)?;
        let teacher_ce_before = adapt::teacher_student_ce(&p_fm, &p_t);
        teacher_ce_initial.get_or_insert(teacher_ce_before);
        let batches = shuffled_batches(&mut batch_rng, n_t, hp.batch_size);
        let losses = adapter.adapt_epoch(
            &mut global,
            &x_t,
            &batches,
            AdaptParams {
                eta,
                beta: hp.beta,
                gamma: hp.gamma,
                theta: hp.theta,
                delta: hp.delta,
                variance: cfg.adapt.variance_source,
            },
            switches,
        )?;
        global.validate()?;
        let p_fm = adapt::teacher_predict(&adapter.teacher, &x_t)?;
        let p_t = federate::predict_target(&global, &x_t)?;
        let teacher_ce_after = adapt::teacher_student_ce(&p_fm, &p_t);

        let target_accuracy = match target.hidden_labels() {
            Some(h) => Some(evaluate(&adapt::final_labels(&global, &x_t)?, h)?),
            None => None,
        };
        for v in [l_src, losses.l_ex, losses.l_in, teacher_ce_after] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch} loss")));
            }
        }

        records.push(EpochRecord {
            epoch,
            eta,
            sigma,
            domains: domain_rows,
            kept: live.clone(),
            kept_count: live.iter().filter(|&&b| b).count(),
            aggregate_weights: agg_weights.omega_kept,
            l_src,
            l_ex: losses.l_ex,
            l_in: losses.l_in,
            teacher_ce_before,
            teacher_ce_after,
            target_accuracy,
        });
    }

    let probs = federate::predict_target(&global, &x_t)?;
    let labels = adapt::final_labels(&global, &x_t)?;
    let predictions: Vec<Prediction> = target
        .samples()
        .iter()
        .zip(&labels)
        .zip(probs.iter_rows())
        .map(|((s, &c), row)| Prediction {
            id: s.id.clone(),
            pred_label: c,
            max_prob: row.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    let accuracy = match target.hidden_labels() {
        Some(h) => Some(evaluate(&labels, h)?),
        None => None,
    };
    let hash = cfg.hash();
    let last = records.last().expect("epochs >= 1");
    let final_record = FinalRecord {
        kept: live.clone(),
        kept_count: live.iter().filter(|&&b| b).count(),
        accuracy,
        predictions_file: format!("predictions-{hash}.csv"),
        teacher_ce_initial: teacher_ce_initial.expect("epochs >= 1"),
        teacher_ce_final: last.teacher_ce_after,
    };
    let report = RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        config_hash: hash,
        mode: mode.name().to_string(),
        domain_names: sources.iter().map(|s| s.name.clone()).collect(),
        epochs: records,
        final_record,
    };
    Ok(RunOutput {
        report,
        model: global,
        omega_hat,
        predictions,
        wall_time_secs: started.elapsed_secs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_values() {
        assert_eq!(evaluate(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(evaluate(&[1, 0], &[0, 1]).unwrap(), 0.0);
        let half: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert_eq!(evaluate(&half, &[0; 10]).unwrap(), 0.5);
        assert!(matches!(evaluate(&[0], &[0, 1]), Err(Error::Shape(_))));
    }

    #[test]
    fn batches_cover_everything_once() {
        let mut rng = rng::stream(1, Stream::Batching);
        let b = shuffled_batches(&mut rng, 10, 4);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
