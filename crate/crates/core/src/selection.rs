//! Density-controlled selection of confident samples and relevant domains.
//!
//! Distances are cosine distances `1 − cos(a, b)`, so smaller is closer
//! everywhere: nearest-center assignment is an argmin and a sample is
//! confident when its distance is strictly below the class threshold.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{LabeledDomain, SampleRecord, UnlabeledDomain};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::nn::{DensityExponent, Hyperparams, Model, RadiusMetric};

/// L2-normalized rows of the decision layer: one prototype per class.
pub fn cluster_centers(decision_weights: &Matrix) -> Result<Matrix> {
    let mut out = decision_weights.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = matrix::norm(row);
        if n == 0.0 {
            return Err(Error::DegenerateClassifier { row: i });
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (matrix::norm(a), matrix::norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = (matrix::dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// n × C cosine distances from each feature row to each center. A zero
/// feature row has no direction and sits at distance 1 from everything.
pub fn distance_matrix(features: &Matrix, centers: &Matrix) -> Matrix {
    let center_norms: Vec<f64> = centers.iter_rows().map(matrix::norm).collect();
    let mut out = Matrix::zeros(features.rows(), centers.rows());
    for (i, f) in features.iter_rows().enumerate() {
        let nf = matrix::norm(f);
        for (j, c) in centers.iter_rows().enumerate() {
            let denom = nf * center_norms[j];
            let cos = if denom == 0.0 {
                0.0
            } else {
                (matrix::dot(f, c) / denom).clamp(-1.0, 1.0)
            };
            out.set(i, j, 1.0 - cos);
        }
    }
    out
}

/// Nearest center per sample; ties go to the lowest class index.
pub fn assign_targets(features: &Matrix, centers: &Matrix) -> Result<Vec<usize>> {
    if features.cols() != centers.cols() {
        return Err(Error::Shape(format!(
            "features have width {}, centers {}",
            features.cols(),
            centers.cols()
        )));
    }
    Ok(assign_from_distances(&distance_matrix(features, centers)))
}

fn assign_from_distances(dist: &Matrix) -> Vec<usize> {
    dist.iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &d) in row.iter().enumerate().skip(1) {
                if d < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn cluster_radius(distances: &[f64], metric: RadiusMetric) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let n = distances.len() as f64;
    Ok(match metric {
        RadiusMetric::Mean => distances.iter().sum::<f64>() / n,
        RadiusMetric::Rms => (distances.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
        RadiusMetric::Max => distances.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Source and target confidence thresholds `(α·r + s_adj, max(α·r − t_adj, 0))`.
pub fn thresholds(r_s: f64, alpha: f64, s_adj: f64, t_adj: f64) -> (f64, f64) {
    (alpha * r_s + s_adj, (alpha * r_s - t_adj).max(0.0))
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// `s_adj` is the median within-class source distance, `t_adj` a third of
/// the source radius.
pub fn compute_adjustments(source_dists: &[f64], r_s: f64) -> Result<(f64, f64)> {
    Ok((median(source_dists)?, r_s / 3.0))
}

/// Confident target samples per unit ball volume around a prototype.
///
/// The volume coefficient `π^{d/2} / Γ(d/2 + 1)` is handled in log space; a
/// result beyond `f64::MAX` saturates there.
pub fn target_density(count: usize, radius: f64, dim: usize, exponent: DensityExponent) -> Result<f64> {
    if count == 0 {
        return Ok(0.0);
    }
    if !(radius > 0.0) {
        return Err(Error::DegenerateCluster { count });
    }
    let half = dim as f64 / 2.0;
    let e = match exponent {
        DensityExponent::One => 1.0,
        DensityExponent::Dim => dim as f64,
    };
    let log_volume = half * std::f64::consts::PI.ln() - ln_gamma(half + 1.0) + e * radius.ln();
    let rho = ((count as f64).ln() - log_volume).exp();
    Ok(if rho.is_finite() { rho } else { f64::MAX })
}

/// `1 − 1/(1 + e^x)` without overflow.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainWeights {
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Per-domain relevance weights. `rho[k][c]` is `None` for classes with no
/// source cluster; those are left out of the class average.
pub fn domain_weights(target_counts: &[usize], n: usize, rho: &[Vec<Option<f64>>], lambda: f64) -> Result<DomainWeights> {
    if n == 0 {
        return Err(Error::Data("target domain is empty".into()));
    }
    if target_counts.len() != rho.len() {
        return Err(Error::Shape("counts and densities cover different domains".into()));
    }
    let omega1: Vec<f64> = target_counts.iter().map(|&c| c as f64 / n as f64).collect();
    let omega2: Vec<f64> = rho
        .iter()
        .map(|classes| {
            let present: Vec<f64> = classes.iter().flatten().map(|&r| stable_sigmoid(r)).collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        })
        .collect();
    let omega = omega1
        .iter()
        .zip(&omega2)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Ok(DomainWeights { omega1, omega2, omega })
}

/// Keep a domain iff `ω_k ≥ 1/K − σ`.
pub fn keep_rule(omega: &[f64], k: usize, sigma: f64) -> Vec<bool> {
    let threshold = 1.0 / k as f64 - sigma;
    omega.iter().map(|&w| w >= threshold).collect()
}

/// [`keep_rule`], but never drops everything: if no domain passes, the
/// highest-weight one (lowest index on ties) survives.
pub fn keep_at_least_one(omega: &[f64], sigma: f64) -> Vec<bool> {
    let mut keep = keep_rule(omega, omega.len(), sigma);
    if !omega.is_empty() && !keep.iter().any(|&b| b) {
        keep[matrix::argmax(omega)] = true;
    }
    keep
}

/// Statistics of one class cluster in one domain. `None` marks quantities
/// that are undefined because the source cluster is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub radius_s: Option<f64>,
    pub radius_t: Option<f64>,
    pub threshold_s: Option<f64>,
    pub threshold_t: Option<f64>,
    /// Confident target samples assigned to this class.
    pub target_count: usize,
    pub density: Option<f64>,
}

/// Cluster statistics of one domain under its current model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub centers: Matrix,
    pub classes: Vec<ClassStats>,
}

/// Per-class source radius and median, reusable when source data is no
/// longer consulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRadii {
    pub radius: Vec<Option<f64>>,
    pub median: Vec<Option<f64>>,
}

/// Everything selection learns about one domain in one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSelection {
    pub stats: ClusterStats,
    pub source_radii: SourceRadii,
    /// Nearest-center class per target sample.
    pub assignments: Vec<usize>,
    pub confident_src: Vec<usize>,
    /// (target index, pseudo-label).
    pub confident_tgt: Vec<(usize, usize)>,
}

impl DomainSelection {
    pub fn confident_target_count(&self) -> usize {
        self.confident_tgt.len()
    }

    pub fn densities(&self) -> Vec<Option<f64>> {
        self.stats.classes.iter().map(|c| c.density).collect()
    }
}

/// Source radius and median distance per class from labeled features.
pub fn source_radii(source_dist: &Matrix, labels: &[usize], metric: RadiusMetric) -> Result<SourceRadii> {
    let classes = source_dist.cols();
    let mut per_class = vec![Vec::new(); classes];
    for (row, &c) in source_dist.iter_rows().zip(labels) {
        per_class[c].push(row[c]);
    }
    let mut radius = Vec::with_capacity(classes);
    let mut med = Vec::with_capacity(classes);
    for d in &per_class {
        if d.is_empty() {
            radius.push(None);
            med.push(None);
        } else {
            radius.push(Some(cluster_radius(d, metric)?));
            med.push(Some(median(d)?));
        }
    }
    Ok(SourceRadii { radius, median: med })
}

/// Confident source indices and confident (index, pseudo-label) targets.
///
/// A source sample is confident when its distance to its own class center is
/// below `d_s` for that class; a target sample when its distance to its
/// assigned center is below that class's `d_t`. Classes with undefined
/// thresholds admit nothing.
pub fn select_confident(
    source_dist: Option<(&Matrix, &[usize])>,
    target_dist: &Matrix,
    assignments: &[usize],
    threshold_s: &[Option<f64>],
    threshold_t: &[Option<f64>],
) -> (Vec<usize>, Vec<(usize, usize)>) {
    let confident_src = match source_dist {
        Some((dist, labels)) => dist
            .iter_rows()
            .zip(labels)
            .enumerate()
            .filter(|(_, (row, &c))| threshold_s[c].is_some_and(|t| row[c] < t))
            .map(|(i, _)| i)
            .collect(),
        None => Vec::new(),
    };
    let confident_tgt = target_dist
        .iter_rows()
        .zip(assignments)
        .enumerate()
        .filter(|(_, (row, &c))| threshold_t[c].is_some_and(|t| row[c] < t))
        .map(|(i, (_, &c))| (i, c))
        .collect();
    (confident_src, confident_tgt)
}

/// Runs the per-domain selection statistics for one model.
///
/// With `source` present the source radii are measured on it; otherwise
/// `cached` radii are used and no source sample is marked confident.
pub fn domain_selection(
    model: &Model,
    source: Option<&LabeledDomain>,
    cached: Option<&SourceRadii>,
    target_x: &Matrix,
    hp: &Hyperparams,
) -> Result<DomainSelection> {
    let centers = cluster_centers(&model.decision.weights)?;
    let classes = centers.rows();
    let dim = centers.cols();

    let (target_features, _) = model.features_and_probs(target_x)?;
    let target_dist = distance_matrix(&target_features, &centers);
    let assignments = assign_from_distances(&target_dist);

    let source_view = match source {
        Some(src) => {
            let (f, _) = model.features_and_probs(&src.features())?;
            Some((distance_matrix(&f, &centers), src.labels()))
        }
        None => None,
    };
    let radii = match (&source_view, cached) {
        (Some((dist, labels)), _) => source_radii(dist, labels, hp.radius_metric)?,
        (None, Some(c)) => c.clone(),
        (None, None) => return Err(Error::Data("selection needs source data or cached radii".into())),
    };

    let mut threshold_s = Vec::with_capacity(classes);
    let mut threshold_t = Vec::with_capacity(classes);
    for c in 0..classes {
        match (radii.radius[c], radii.median[c]) {
            (Some(r), Some(m)) => {
                let (ds, dt) = thresholds(r, hp.alpha, m, r / 3.0);
                threshold_s.push(Some(ds));
                threshold_t.push(Some(dt));
            }
            _ => {
                threshold_s.push(None);
                threshold_t.push(None);
            }
        }
    }

    let (confident_src, confident_tgt) = select_confident(
        source_view.as_ref().map(|(d, l)| (d, l.as_slice())),
        &target_dist,
        &assignments,
        &threshold_s,
        &threshold_t,
    );

    let mut assigned = vec![Vec::new(); classes];
    for (row, &c) in target_dist.iter_rows().zip(&assignments) {
        assigned[c].push(row[c]);
    }
    let mut counts = vec![0usize; classes];
    for &(_, c) in &confident_tgt {
        counts[c] += 1;
    }

    let mut class_stats = Vec::with_capacity(classes);
    for c in 0..classes {
        let radius_t = if assigned[c].is_empty() {
            None
        } else {
            Some(cluster_radius(&assigned[c], hp.radius_metric)?)
        };
        let density = match radii.radius[c] {
            None => None,
            Some(_) => Some(target_density(counts[c], radius_t.unwrap_or(0.0), dim, hp.density_exponent)?),
        };
        class_stats.push(ClassStats {
            radius_s: radii.radius[c],
            radius_t,
            threshold_s: threshold_s[c],
            threshold_t: threshold_t[c],
            target_count: counts[c],
            density,
        });
    }

    Ok(DomainSelection {
        stats: ClusterStats {
            centers,
            classes: class_stats,
        },
        source_radii: radii,
        assignments,
        confident_src,
        confident_tgt,
    })
}

/// D'_k: confident source samples plus pseudo-labeled confident targets.
pub fn renew_domain(
    source: &LabeledDomain,
    confident_src: &[usize],
    target: &UnlabeledDomain,
    confident_tgt: &[(usize, usize)],
) -> Result<LabeledDomain> {
    if confident_src.is_empty() && confident_tgt.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut samples = Vec::with_capacity(confident_src.len() + confident_tgt.len());
    for &i in confident_src {
        let s = source
            .samples()
            .get(i)
            .ok_or_else(|| Error::Shape(format!("source index {i} out of range")))?;
        samples.push(s.clone());
    }
    for &(i, c) in confident_tgt {
        let t = target
            .samples()
            .get(i)
            .ok_or_else(|| Error::Shape(format!("target index {i} out of range")))?;
        samples.push(SampleRecord {
            id: t.id.clone(),
            features: t.features.clone(),
            label: Some(c),
        });
    }
    LabeledDomain::new(source.name.clone(), samples, source.class_count())
}
