//! Feature-vector domains: synthetic multi-domain benchmarks and CSV tables.
//!
//! CSV layout is `id,label,f0,f1,...,f{d-1}`. The label cell is empty for
//! unlabeled rows.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDomain {
    pub name: String,
    samples: Vec<SampleRecord>,
    class_count: usize,
}

impl LabeledDomain {
    pub fn new(name: impl Into<String>, samples: Vec<SampleRecord>, class_count: usize) -> Result<Self> {
        let name = name.into();
        check_dims(&name, &samples)?;
        for s in &samples {
            match s.label {
                None => {
                    return Err(Error::Data(format!(
                        "{name}: sample {} has no label",
                        s.id
                    )))
                }
                Some(c) if c >= class_count => {
                    return Err(Error::Data(format!(
                        "{name}: sample {} has label {c} >= {class_count}",
                        s.id
                    )))
                }
                _ => {}
            }
        }
        Ok(LabeledDomain {
            name,
            samples,
            class_count,
        })
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn features(&self) -> Matrix {
        feature_matrix(&self.samples)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| s.label.expect("labeled domain invariant"))
            .collect()
    }

    /// Same domain with every feature row mapped through `f`.
    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> LabeledDomain {
        LabeledDomain {
            name: self.name.clone(),
            class_count: self.class_count,
            samples: self
                .samples
                .iter()
                .map(|s| SampleRecord {
                    id: s.id.clone(),
                    features: f(&s.features),
                    label: s.label,
                })
                .collect(),
        }
    }
}

/// Target domain. `hidden_labels` is for evaluation only; the training
/// pipeline reads features through [`UnlabeledDomain::features`] and never
/// touches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledDomain {
    pub name: String,
    samples: Vec<SampleRecord>,
    hidden_labels: Option<Vec<usize>>,
}

impl UnlabeledDomain {
    pub fn new(
        name: impl Into<String>,
        samples: Vec<SampleRecord>,
        hidden_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let name = name.into();
        check_dims(&name, &samples)?;
        if samples.iter().any(|s| s.label.is_some()) {
            return Err(Error::Data(format!(
                "{name}: unlabeled domain carries visible labels"
            )));
        }
        if let Some(h) = &hidden_labels {
            if h.len() != samples.len() {
                return Err(Error::Data(format!(
                    "{name}: {} hidden labels for {} samples",
                    h.len(),
                    samples.len()
                )));
            }
        }
        Ok(UnlabeledDomain {
            name,
            samples,
            hidden_labels,
        })
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn features(&self) -> Matrix {
        feature_matrix(&self.samples)
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    /// Ground truth for scoring. Not for use inside training.
    pub fn hidden_labels(&self) -> Option<&[usize]> {
        self.hidden_labels.as_deref()
    }

    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> UnlabeledDomain {
        UnlabeledDomain {
            name: self.name.clone(),
            hidden_labels: self.hidden_labels.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleRecord {
                    id: s.id.clone(),
                    features: f(&s.features),
                    label: None,
                })
                .collect(),
        }
    }
}

fn check_dims(name: &str, samples: &[SampleRecord]) -> Result<()> {
    let d = samples.first().map_or(0, |s| s.features.len());
    for s in samples {
        if s.features.len() != d {
            return Err(Error::Data(format!(
                "{name}: sample {} has {} features, expected {d}",
                s.id,
                s.features.len()
            )));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "{name}: sample {} has a non-finite feature",
                s.id
            )));
        }
    }
    Ok(())
}

fn feature_matrix(samples: &[SampleRecord]) -> Matrix {
    let d = samples.first().map_or(0, |s| s.features.len());
    let mut data = Vec::with_capacity(samples.len() * d);
    for s in samples {
        data.extend_from_slice(&s.features);
    }
    Matrix::from_vec(samples.len(), d, data).expect("dims checked at construction")
}

/// Layout of a synthetic Gaussian-mixture benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Number of labeled source domains.
    pub sources: usize,
    pub classes: usize,
    pub dim: usize,
    /// Norm of each class mean; means are `separation` times a random unit
    /// vector.
    pub separation: f64,
    pub noise_sigma: f64,
    /// Source domains whose class means are re-drawn, breaking the
    /// label/feature correspondence with the target.
    #[serde(default)]
    pub irrelevant_domains: Vec<usize>,
    pub samples_per_class: usize,
    /// Size of the labeled split used to initialize teacher prompts.
    #[serde(default = "default_teacher_samples")]
    pub teacher_samples_per_class: usize,
}

fn default_teacher_samples() -> usize {
    5
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.sources < 1 {
            return bad("need at least one source domain");
        }
        if self.classes < 2 {
            return bad("need at least two classes");
        }
        if self.dim < 2 {
            return bad("feature dimension must be >= 2");
        }
        if self.samples_per_class < 1 || self.teacher_samples_per_class < 1 {
            return bad("sample counts must be >= 1");
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad("separation must be positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if let Some(&k) = self.irrelevant_domains.iter().find(|&&k| k >= self.sources) {
            return bad(&format!("irrelevant domain {k} out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSuite {
    pub sources: Vec<LabeledDomain>,
    pub target: UnlabeledDomain,
    /// Small labeled draw from the target layout, disjoint from everything
    /// else; stands in for the teacher's pretraining knowledge.
    pub teacher_split: LabeledDomain,
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::matrix::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn class_means<R: Rng>(rng: &mut R, spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    (0..spec.classes)
        .map(|_| {
            unit_vector(rng, spec.dim)
                .into_iter()
                .map(|x| x * spec.separation)
                .collect()
        })
        .collect()
}

fn draw_samples<R: Rng>(
    rng: &mut R,
    means: &[Vec<f64>],
    per_class: usize,
    sigma: f64,
) -> Vec<(Vec<f64>, usize)> {
    let mut out = Vec::with_capacity(means.len() * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            let x = mean
                .iter()
                .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            out.push((x, c));
        }
    }
    out.shuffle(rng);
    out
}

/// Draws `spec.sources` labeled domains, one unlabeled target and a teacher
/// split. Relevant domains and the target share one class-mean layout;
/// irrelevant domains get their own. Deterministic in `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticSuite> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Stream::Data);
    let layout = class_means(&mut rng, spec);

    let mut sources = Vec::with_capacity(spec.sources);
    for k in 0..spec.sources {
        let means = if spec.irrelevant_domains.contains(&k) {
            class_means(&mut rng, spec)
        } else {
            layout.clone()
        };
        let drawn = draw_samples(&mut rng, &means, spec.samples_per_class, spec.noise_sigma);
        let samples = drawn
            .into_iter()
            .enumerate()
            .map(|(i, (features, c))| SampleRecord {
                id: format!("s{k}_{i}"),
                features,
                label: Some(c),
            })
            .collect();
        sources.push(LabeledDomain::new(format!("source{k}"), samples, spec.classes)?);
    }

    let drawn = draw_samples(&mut rng, &layout, spec.samples_per_class, spec.noise_sigma);
    let hidden = drawn.iter().map(|(_, c)| *c).collect();
    let samples = drawn
        .into_iter()
        .enumerate()
        .map(|(i, (features, _))| SampleRecord {
            id: format!("t_{i}"),
            features,
            label: None,
        })
        .collect();
    let target = UnlabeledDomain::new("target", samples, Some(hidden))?;

    let drawn = draw_samples(
        &mut rng,
        &layout,
        spec.teacher_samples_per_class,
        spec.noise_sigma,
    );
    let samples = drawn
        .into_iter()
        .enumerate()
        .map(|(i, (features, c))| SampleRecord {
            id: format!("p_{i}"),
            features,
            label: Some(c),
        })
        .collect();
    let teacher_split = LabeledDomain::new("teacher", samples, spec.classes)?;

    Ok(SyntheticSuite {
        sources,
        target,
        teacher_split,
    })
}

/// Per-class mean feature vectors. Classes with no samples yield `None`.
pub fn class_mean_vectors(features: &Matrix, labels: &[usize], classes: usize) -> Vec<Option<Vec<f64>>> {
    let d = features.cols();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (row, &c) in features.iter_rows().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// Either kind of domain, as produced by [`load_feature_table`].
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTable {
    Labeled(LabeledDomain),
    Unlabeled(UnlabeledDomain),
}

fn ingest_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

/// Reads one domain from CSV. Rows are numbered from 1 (the first data row).
///
/// With `has_labels = false` the label column must be empty on every row, or
/// filled on every row; in the latter case the labels are kept as hidden
/// evaluation labels.
pub fn load_feature_table(path: &Path, has_labels: bool, class_count: Option<usize>) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 0, e))?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(ingest_err(path, 0, "header must start with `id,label` and name at least one feature"));
    }
    for (j, h) in headers.iter().skip(2).enumerate() {
        if h != format!("f{j}") {
            return Err(ingest_err(path, 0, format!("feature column {j} is named `{h}`, expected `f{j}`")));
        }
    }
    let dim = headers.len() - 2;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut samples = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_error(path, row, e))?;
        if rec.len() != headers.len() {
            return Err(ingest_err(path, row, format!("{} fields, expected {}", rec.len(), headers.len())));
        }
        let label = match rec[1].trim() {
            "" => None,
            s => {
                let c: usize = s
                    .parse()
                    .map_err(|_| ingest_err(path, row, format!("label `{s}` is not a class index")))?;
                if let Some(cc) = class_count {
                    if c >= cc {
                        return Err(ingest_err(path, row, format!("label {c} out of range for {cc} classes")));
                    }
                }
                Some(c)
            }
        };
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let cell = rec[j + 2].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest_err(path, row, format!("f{j} = `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(ingest_err(path, row, format!("f{j} is not finite")));
            }
            features.push(v);
        }
        labels.push(label);
        samples.push(SampleRecord {
            id: rec[0].to_string(),
            features,
            label,
        });
    }

    if has_labels {
        if let Some(row) = labels.iter().position(Option::is_none) {
            return Err(ingest_err(path, row + 1, "missing label"));
        }
        let inferred = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let classes = class_count.unwrap_or(inferred);
        Ok(FeatureTable::Labeled(LabeledDomain::new(name, samples, classes)?))
    } else {
        let filled = labels.iter().filter(|l| l.is_some()).count();
        let hidden = if filled == 0 {
            None
        } else if filled == labels.len() {
            Some(labels.iter().map(|l| l.unwrap()).collect())
        } else {
            let row = labels.iter().position(Option::is_none).unwrap() + 1;
            return Err(ingest_err(path, row, "label column partially filled"));
        };
        for s in &mut samples {
            s.label = None;
        }
        Ok(FeatureTable::Unlabeled(UnlabeledDomain::new(name, samples, hidden)?))
    }
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    // csv counts the header as record 0, matching our 1-based data rows
    let row = e.position().map(|p| p.record() as usize).unwrap_or(row);
    ingest_err(path, row, e.to_string())
}

/// Writes samples in the CSV layout. `f64` values are written in shortest
/// round-trip form so a reload is bit-exact.
pub fn write_feature_table(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let d = samples.first().map_or(0, |s| s.features.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..d).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_error(path, 0, e))?;
    for (i, s) in samples.iter().enumerate() {
        let mut rec = vec![s.id.clone(), s.label.map(|c| c.to_string()).unwrap_or_default()];
        rec.extend(s.features.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| csv_error(path, i + 1, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-feature z-scoring with statistics from the pooled source domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(domains: &[LabeledDomain]) -> Result<Self> {
        let d = domains.first().map_or(0, LabeledDomain::dim);
        let mut n = 0usize;
        let mut mean = vec![0.0; d];
        for s in domains.iter().flat_map(|dm| dm.samples()) {
            if s.features.len() != d {
                return Err(Error::Data("source domains disagree on feature dimension".into()));
            }
            n += 1;
            for (m, v) in mean.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        if n == 0 {
            return Err(Error::Data("no source samples".into()));
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for s in domains.iter().flat_map(|dm| dm.samples()) {
            for ((acc, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            sources: 3,
            classes: 2,
            dim: 8,
            separation: 4.0,
            noise_sigma: 1.0,
            irrelevant_domains: vec![],
            samples_per_class: 50,
            teacher_samples_per_class: 5,
        }
    }

    #[test]
    fn synthetic_shapes() {
        let suite = generate_synthetic(&spec(), 7).unwrap();
        assert_eq!(suite.sources.len(), 3);
        assert!(suite.sources.iter().all(|d| d.len() == 100 && d.dim() == 8));
        assert_eq!(suite.target.len(), 100);
        assert_eq!(suite.target.hidden_labels().unwrap().len(), 100);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = serde_json::to_string(&generate_synthetic(&spec(), 7).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_synthetic(&spec(), 7).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_synthetic(&spec(), 8).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        crate::matrix::dot(a, b) / (crate::matrix::norm(a) * crate::matrix::norm(b))
    }

    #[test]
    fn irrelevant_domain_means_are_misaligned() {
        let mut s = spec();
        s.irrelevant_domains = vec![2];
        let mut total_irrelevant = 0.0;
        let seeds = 10;
        for seed in 0..seeds {
            let suite = generate_synthetic(&s, seed).unwrap();
            let tx = suite.target.features();
            let tm = class_mean_vectors(&tx, suite.target.hidden_labels().unwrap(), 2);
            let sim = |k: usize| {
                let d = &suite.sources[k];
                let m = class_mean_vectors(&d.features(), &d.labels(), 2);
                (0..2)
                    .map(|c| cosine(m[c].as_ref().unwrap(), tm[c].as_ref().unwrap()))
                    .sum::<f64>()
                    / 2.0
            };
            assert!(sim(0) > 0.9, "relevant domain should align with target");
            total_irrelevant += sim(2);
        }
        assert!(total_irrelevant / (seeds as f64) < 0.5);
    }

    #[test]
    fn relevant_class_means_match_target_within_noise_bound() {
        let s = spec();
        let suite = generate_synthetic(&s, 3).unwrap();
        let tm = class_mean_vectors(&suite.target.features(), suite.target.hidden_labels().unwrap(), 2);
        let n = s.samples_per_class as f64;
        // Difference of two means of n draws has sd sigma*sqrt(2/n); 3 sigma/sqrt(n)
        // per coordinate is exceeded rarely, so allow a few coordinates over.
        let bound = 3.0 * s.noise_sigma / n.sqrt();
        let mut over = 0;
        let mut total = 0;
        for d in &suite.sources {
            let m = class_mean_vectors(&d.features(), &d.labels(), 2);
            for c in 0..2 {
                for (a, b) in m[c].as_ref().unwrap().iter().zip(tm[c].as_ref().unwrap()) {
                    total += 1;
                    if (a - b).abs() >= bound {
                        over += 1;
                    }
                }
            }
        }
        assert!(over * 10 <= total, "{over}/{total} coordinates exceed 3σ/√n");
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = spec();
        s.irrelevant_domains = vec![3];
        assert!(matches!(generate_synthetic(&s, 1), Err(Error::Config(_))));
        let mut s = spec();
        s.classes = 1;
        assert!(generate_synthetic(&s, 1).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_labeled_table() {
        let f = write_tmp("id,label,f0,f1\na,0,1.0,2.0\nb,1,0.5,-1\nc,1,3,4\n");
        match load_feature_table(f.path(), true, None).unwrap() {
            FeatureTable::Labeled(d) => {
                assert_eq!(d.len(), 3);
                assert_eq!(d.dim(), 2);
                assert_eq!(d.class_count(), 2);
                assert_eq!(d.labels(), vec![0, 1, 1]);
            }
            other => panic!("expected labeled, got {other:?}"),
        }
    }

    #[test]
    fn loads_unlabeled_table() {
        let f = write_tmp("id,label,f0,f1\na,,1.0,2.0\nb,,0.5,-1\n");
        match load_feature_table(f.path(), false, None).unwrap() {
            FeatureTable::Unlabeled(d) => {
                assert_eq!(d.len(), 2);
                assert!(d.hidden_labels().is_none());
            }
            other => panic!("expected unlabeled, got {other:?}"),
        }
    }

    #[test]
    fn nan_row_is_named() {
        let f = write_tmp("id,label,f0,f1\na,0,1.0,2.0\nb,1,NaN,1\n");
        let err = load_feature_table(f.path(), true, None).unwrap_err();
        match err {
            Error::Ingest { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_out_of_range_rows_fail() {
        let f = write_tmp("id,label,f0,f1\na,0,1.0\n");
        assert!(matches!(load_feature_table(f.path(), true, None), Err(Error::Ingest { row: 1, .. })));
        let f = write_tmp("id,label,f0,f1\na,0,1.0,2.0\nb,5,1,1\n");
        assert!(matches!(load_feature_table(f.path(), true, Some(3)), Err(Error::Ingest { row: 2, .. })));
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let suite = generate_synthetic(&spec(), 1).unwrap();
        let st = Standardizer::fit(&suite.sources).unwrap();
        let z: Vec<_> = suite.sources.iter().map(|d| d.map_features(|x| st.apply(x))).collect();
        let again = Standardizer::fit(&z).unwrap();
        for (m, s) in again.mean.iter().zip(&again.std) {
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
