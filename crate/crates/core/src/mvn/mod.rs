//! Rectangle probabilities of correlated normal vectors and the
//! equicoordinate quantiles built on them.
//!
//! The integral is written by sequential conditioning: a prioritised,
//! rank-revealing Cholesky factor turns `P(lower < X < upper)` into an
//! integral over the unit cube of dimension `rank - 1`. Rank one is closed
//! form, rank two uses adaptive Gauss-Kronrod, higher ranks a randomly
//! shifted lattice rule. Results depend only on the inputs and the seed.

mod factor;
mod quadrature;
mod quantile;

pub use quantile::{equicoord_quantile, equicoord_quantile_with, QuantileOptions, Tail};
pub(crate) use quantile::{polish_root, solve_boundary, solve_increasing};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CorrelationModel;
use crate::normal;
use crate::scalar::Scalar;

/// Axis-aligned box with possibly infinite limits.
#[derive(Clone, Debug, PartialEq)]
pub struct Rectangle<F> {
    lower: Vec<F>,
    upper: Vec<F>,
}

impl<F: Scalar> Rectangle<F> {
    pub fn new(lower: Vec<F>, upper: Vec<F>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::InvalidArgument("rectangle needs lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `(-c, c)^dim`.
    pub fn central(dim: usize, c: F) -> Self {
        Self {
            lower: vec![-c; dim],
            upper: vec![c; dim],
        }
    }

    /// `(-inf, c)^dim`.
    pub fn below(dim: usize, c: F) -> Self {
        Self {
            lower: vec![F::neg_infinity(); dim],
            upper: vec![c; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[F] {
        &self.lower
    }

    pub fn upper(&self) -> &[F] {
        &self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ProbResult<F> {
    pub value: F,
    pub err_est: F,
    pub n_points: u64,
}

/// Tuning for [`mvn_rect_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvnOptions<F> {
    /// Target absolute error.
    pub accuracy: F,
    pub seed: u64,
    /// Integrand evaluations allowed before giving up.
    pub max_points: u64,
    /// Random lattice shifts; the error estimate uses their spread.
    pub shifts: usize,
}

impl<F: Scalar> Default for MvnOptions<F> {
    fn default() -> Self {
        Self {
            accuracy: F::lit(1e-5),
            seed: 0,
            max_points: 1 << 24,
            shifts: 10,
        }
    }
}

impl<F: Scalar> MvnOptions<F> {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// `P(lower < X < upper)` for `X ~ N(mean, corr)`.
pub fn mvn_rect<F: Scalar>(
    mean: &[F],
    corr: &CorrelationModel<F>,
    rect: &Rectangle<F>,
    accuracy: F,
    seed: u64,
) -> Result<ProbResult<F>> {
    mvn_rect_with(
        mean,
        corr,
        rect,
        &MvnOptions {
            accuracy,
            seed,
            ..MvnOptions::default()
        },
    )
}

pub fn mvn_rect_with<F: Scalar>(
    mean: &[F],
    corr: &CorrelationModel<F>,
    rect: &Rectangle<F>,
    opts: &MvnOptions<F>,
) -> Result<ProbResult<F>> {
    let dim = corr.dim();
    for got in [mean.len(), rect.dim()] {
        if got != dim {
            return Err(Error::DimensionMismatch { expected: dim, got });
        }
    }
    if !(opts.accuracy > F::zero()) {
        return Err(Error::InvalidArgument("accuracy must be positive".into()));
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument("mean must be finite".into()));
    }
    let exact = |value: F| {
        Ok(ProbResult {
            value,
            err_est: F::zero(),
            n_points: 0,
        })
    };

    let mut active = Vec::with_capacity(dim);
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for d in 0..dim {
        let (a, b) = (rect.lower[d] - mean[d], rect.upper[d] - mean[d]);
        if a >= b {
            return exact(F::zero());
        }
        if a.is_finite() || b.is_finite() {
            active.push(d);
            lo.push(a);
            hi.push(b);
        }
    }
    if active.is_empty() {
        return exact(F::one());
    }
    let sub = if active.len() == dim {
        corr.clone()
    } else {
        corr.submatrix(&active)
    };
    let factor = factor::factorize(&sub, &lo, &hi)?;
    let rank = factor.rank();

    if rank == 1 {
        let (a, b) = factor.limits(0, &[]);
        return exact(normal::interval(a, b));
    }

    let tol = opts.accuracy.as_f64();
    let est = if rank == 2 {
        let mut w = [F::zero()];
        let mut y = [F::zero(); 2];
        quadrature::adaptive_gk(
            |x| {
                w[0] = F::lit(x);
                factor.integrand(&w, &mut y).as_f64()
            },
            tol * 0.5,
            2000,
        )
    } else {
        if rank - 1 > quadrature::MAX_QMC_DIM {
            return Err(Error::InvalidArgument(format!(
                "integration dimension {} exceeds {}",
                rank - 1,
                quadrature::MAX_QMC_DIM
            )));
        }
        quadrature::lattice_qmc(
            rank - 1,
            |w: &[F], y: &mut [F]| factor.integrand(w, y),
            rank,
            tol,
            opts.seed,
            opts.shifts.max(2),
            opts.max_points,
        )
    };
    let value = est.value.clamp(0.0, 1.0);
    if est.error > tol {
        return Err(Error::AccuracyNotReached {
            value,
            err_est: est.error,
            target: tol,
            points: est.points,
        });
    }
    Ok(ProbResult {
        value: F::lit(value),
        err_est: F::lit(est.error),
        n_points: est.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{correlation, ComparisonSet, Sided, TrialConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn univariate_central_interval() {
        let r = mvn_rect(
            &[0.0],
            &CorrelationModel::identity(1),
            &Rectangle::central(1, 1.959964),
            1e-5,
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(r.value, 0.95, epsilon = 1e-5);
        assert_eq!(r.err_est, 0.0);
    }

    #[test]
    fn independent_pair() {
        let r = mvn_rect(
            &[0.0, 0.0],
            &CorrelationModel::identity(2),
            &Rectangle::central(2, 1.959964),
            1e-5,
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(r.value, 0.9025, epsilon = 1e-4);
    }

    #[test]
    fn orthant_probabilities_have_closed_forms() {
        // P(X1 < 0, X2 < 0) = 1/4 + asin(rho) / (2 pi)
        for &rho in &[-0.9, -0.5, 0.0, 0.3, 0.8] {
            let corr = CorrelationModel::exchangeable(2, rho).unwrap();
            let r = mvn_rect(&[0.0, 0.0], &corr, &Rectangle::below(2, 0.0), 1e-8, 3).unwrap();
            let expected = 0.25 + f64::asin(rho) / (2.0 * std::f64::consts::PI);
            assert_abs_diff_eq!(r.value, expected, epsilon = 1e-8);
        }
        // trivariate: 1/8 + (asin r12 + asin r13 + asin r23) / (4 pi)
        let corr = CorrelationModel::exchangeable(3, 0.5).unwrap();
        let r = mvn_rect(&[0.0; 3], &corr, &Rectangle::below(3, 0.0), 1e-6, 3).unwrap();
        let expected = 0.125 + 3.0 * f64::asin(0.5) / (4.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(r.value, expected, epsilon = 1e-5);
        assert!(r.err_est <= 1e-6);
    }

    #[test]
    fn equicorrelated_orthant_in_five_dims() {
        // rho = 1/2 orthant probability is 1 / (d + 1)
        let corr = CorrelationModel::exchangeable(5, 0.5).unwrap();
        let r = mvn_rect(&[0.0; 5], &corr, &Rectangle::below(5, 0.0), 1e-5, 11).unwrap();
        assert_abs_diff_eq!(r.value, 1.0 / 6.0, epsilon = 3e-5);
    }

    #[test]
    fn perfectly_anticorrelated_pair_collapses() {
        // X2 = -X1: P(X1 < 1.5, X2 < 0.5) = P(-0.5 < X1 < 1.5)
        let corr = CorrelationModel::new(2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let r = mvn_rect(&[0.0, 0.0], &corr, &Rectangle::below(2, 0.0), 1e-6, 0).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-15);
        let rect = Rectangle::new(vec![f64::NEG_INFINITY; 2], vec![1.5, 0.5]).unwrap();
        let r = mvn_rect(&[0.0, 0.0], &corr, &rect, 1e-6, 0).unwrap();
        assert_abs_diff_eq!(r.value, normal::interval(-0.5, 1.5), epsilon = 1e-14);
    }

    #[test]
    fn singular_pairwise_matrix() {
        // K = 3: Z_23 is a linear combination of Z_12 and Z_13.
        let cfg = TrialConfig::<f64>::equal(3, 1.0, 10, Sided::TwoSided).unwrap();
        let corr = correlation(&cfg, &ComparisonSet::full(3), 1).unwrap();
        let r = mvn_rect(&[0.0; 3], &corr, &Rectangle::central(3, 2.0), 1e-7, 5).unwrap();
        let two = mvn_rect(
            &[0.0; 2],
            &corr.submatrix(&[0, 1]),
            &Rectangle::central(2, 2.0),
            1e-7,
            5,
        )
        .unwrap();
        assert!(r.value < two.value);
        assert!(r.value > 0.85 && r.value < 0.95);
    }

    #[test]
    fn rejects_indefinite_and_mismatched_input() {
        let bad = CorrelationModel::new(
            3,
            vec![1.0, 0.9, 0.9, 0.9, 1.0, -0.9, 0.9, -0.9, 1.0],
        )
        .unwrap();
        let err = mvn_rect(&[0.0; 3], &bad, &Rectangle::central(3, 1.0), 1e-5, 0);
        assert!(matches!(err, Err(Error::NotPositiveSemiDefinite { .. })));
        let id = CorrelationModel::<f64>::identity(2);
        assert!(mvn_rect(&[0.0], &id, &Rectangle::central(2, 1.0), 1e-5, 0).is_err());
        assert!(mvn_rect(&[0.0; 2], &id, &Rectangle::central(2, 1.0), 0.0, 0).is_err());
    }

    #[test]
    fn unreachable_accuracy_is_reported() {
        let corr = CorrelationModel::exchangeable(6, 0.3).unwrap();
        let opts = MvnOptions {
            accuracy: 1e-14,
            seed: 1,
            max_points: 1 << 14,
            shifts: 8,
        };
        let res = mvn_rect_with(&[0.0; 6], &corr, &Rectangle::central(6, 1.5), &opts);
        assert!(matches!(res, Err(Error::AccuracyNotReached { .. })));
    }

    #[test]
    fn unconstrained_coordinates_are_marginalised() {
        let corr = CorrelationModel::exchangeable(3, 0.4).unwrap();
        let rect = Rectangle::new(
            vec![-1.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![1.0, f64::INFINITY, f64::INFINITY],
        )
        .unwrap();
        let r = mvn_rect(&[0.0; 3], &corr, &rect, 1e-6, 0).unwrap();
        assert_abs_diff_eq!(r.value, normal::interval(-1.0, 1.0), epsilon = 1e-15);
        let empty = Rectangle::new(vec![0.5; 3], vec![0.5; 3]).unwrap();
        assert_eq!(mvn_rect(&[0.0; 3], &corr, &empty, 1e-6, 0).unwrap().value, 0.0);
    }

    #[test]
    fn single_precision_agrees() {
        let corr64 = CorrelationModel::<f64>::exchangeable(4, 0.5).unwrap();
        let corr32 = CorrelationModel::<f32>::exchangeable(4, 0.5).unwrap();
        let a = mvn_rect(&[0.0; 4], &corr64, &Rectangle::central(4, 2.0), 1e-5, 2).unwrap();
        let b = mvn_rect(&[0.0f32; 4], &corr32, &Rectangle::central(4, 2.0), 1e-4, 2).unwrap();
        assert_abs_diff_eq!(a.value, b.value as f64, epsilon = 3e-4);
    }
}
