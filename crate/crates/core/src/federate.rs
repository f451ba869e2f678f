//! Weighted parameter averaging of per-domain models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateWeights {
    /// One weight per kept domain, in domain order.
    pub omega_kept: Vec<f64>,
    pub renormalized: bool,
}

impl AggregateWeights {
    /// Restricts `omega` to kept domains and rescales to sum 1. An all-zero
    /// kept set falls back to equal weights.
    pub fn renormalize(omega: &[f64], keep: &[bool]) -> Result<Self> {
        if omega.len() != keep.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} keep flags",
                omega.len(),
                keep.len()
            )));
        }
        let kept: Vec<f64> = omega.iter().zip(keep).filter(|(_, &k)| k).map(|(&w, _)| w).collect();
        if kept.is_empty() {
            return Err(Error::Config("no domain kept for aggregation".into()));
        }
        if kept.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::NonFinite("aggregation weight".into()));
        }
        let total: f64 = kept.iter().sum();
        let omega_kept = if total > 0.0 {
            kept.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / kept.len() as f64; kept.len()]
        };
        Ok(AggregateWeights {
            omega_kept,
            renormalized: true,
        })
    }
}

/// `Σ_kept ω̂_k · θ_k` over every parameter.
pub fn aggregate(models: &[Model], omega: &[f64], keep: &[bool]) -> Result<(Model, AggregateWeights)> {
    if models.len() != omega.len() {
        return Err(Error::Shape(format!("{} models for {} weights", models.len(), omega.len())));
    }
    let weights = AggregateWeights::renormalize(omega, keep)?;
    let kept: Vec<&Model> = models.iter().zip(keep).filter(|(_, &k)| k).map(|(m, _)| m).collect();
    let dims = kept[0].dims();
    let count = kept[0].param_count();
    if kept.iter().any(|m| m.dims() != dims || m.param_count() != count) {
        return Err(Error::Shape("models disagree on dimensions".into()));
    }
    let mut out = kept[0].zeros_like();
    for (m, &w) in kept.iter().zip(&weights.omega_kept) {
        out.add_scaled(m, w);
    }
    Ok((out, weights))
}

/// Target class probabilities `softmax(P(Φ(x)))`.
pub fn predict_target(model: &Model, x: &Matrix) -> Result<Matrix> {
    Ok(model.features_and_probs(x)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dims;
    use crate::rng::{self, Stream};
    use proptest::prelude::*;

    const DIMS: Dims = Dims {
        d_in: 3,
        hidden_width: 4,
        classes: 2,
    };

    fn model(seed: u64) -> Model {
        Model::init(&mut rng::stream(seed, Stream::Init), DIMS)
    }

    fn filled(v: f64) -> Model {
        let mut m = Model::zeros(DIMS);
        let n = m.param_count();
        m.set_flat(&vec![v; n]).unwrap();
        m
    }

    fn max_abs_diff(a: &Model, b: &Model) -> f64 {
        a.params().zip(b.params()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn single_kept_model_is_returned() {
        let a = model(1);
        let (out, w) = aggregate(&[a.clone(), model(2)], &[0.3, 0.9], &[true, false]).unwrap();
        assert_eq!(out, a);
        assert_eq!(w.omega_kept, vec![1.0]);
    }

    #[test]
    fn identical_models_fixed_point() {
        let a = model(3);
        let (out, _) = aggregate(&[a.clone(), a.clone()], &[0.3, 0.7], &[true, true]).unwrap();
        assert!(max_abs_diff(&out, &a) < 1e-12);
    }

    #[test]
    fn weighted_arithmetic() {
        let (out, _) = aggregate(&[filled(0.0), filled(1.0)], &[0.25, 0.75], &[true, true]).unwrap();
        assert!(out.params().all(|v| (v - 0.75).abs() < 1e-15));
        // unnormalized weights give the same result
        let (out, w) = aggregate(&[filled(0.0), filled(1.0)], &[0.1, 0.3], &[true, true]).unwrap();
        assert!(out.params().all(|v| (v - 0.75).abs() < 1e-12));
        assert!((w.omega_kept.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(aggregate(&[model(1)], &[1.0], &[false]).is_err());
        let other = Model::zeros(Dims {
            d_in: 5,
            hidden_width: 4,
            classes: 2,
        });
        assert!(matches!(
            aggregate(&[model(1), other], &[0.5, 0.5], &[true, true]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn prediction_matches_forward() {
        let m = model(5);
        let x = Matrix::from_rows(&[[0.1, -0.3, 2.0], [1.0, 1.0, 1.0]]).unwrap();
        let p = predict_target(&m, &x).unwrap();
        assert_eq!(p, m.forward(&x).unwrap().probs);
        let single = predict_target(&m, &x.select_rows(&[1])).unwrap();
        assert_eq!(single.row(0), p.row(1));
        let z = predict_target(&Model::zeros(DIMS), &x).unwrap();
        assert!(z.as_slice().iter().all(|v| *v == 0.5));
    }

    proptest! {
        #[test]
        fn permutation_invariant(w in proptest::collection::vec(0.01f64..1.0, 3)) {
            let ms = [model(1), model(2), model(3)];
            let (a, _) = aggregate(&ms, &w, &[true, true, true]).unwrap();
            let perm = [ms[2].clone(), ms[0].clone(), ms[1].clone()];
            let (b, _) = aggregate(&perm, &[w[2], w[0], w[1]], &[true, true, true]).unwrap();
            prop_assert!(max_abs_diff(&a, &b) < 1e-12);
        }

        #[test]
        fn zero_weight_model_is_irrelevant(w in proptest::collection::vec(0.01f64..1.0, 2)) {
            let ms = [model(1), model(2), model(3)];
            let (a, _) = aggregate(&ms[..2], &w, &[true, true]).unwrap();
            let (b, _) = aggregate(&ms, &[w[0], w[1], 0.0], &[true, true, true]).unwrap();
            prop_assert!(max_abs_diff(&a, &b) < 1e-12);
        }
    }
}
