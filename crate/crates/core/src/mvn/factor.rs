//! Rank-revealing, prioritised Cholesky factorisation that turns a
//! rectangle probability into a sequence of one-dimensional conditional
//! intervals.
//!
//! Coordinates whose conditional variance vanishes are not integrated over;
//! their limits become extra constraints on the last latent variable they
//! load on. A pair with correlation -1 therefore collapses to one variable
//! whose interval is the intersection of both sets of limits.

use crate::error::{Error, Result};
use crate::model::CorrelationModel;
use crate::normal;
use crate::scalar::Scalar;

/// `lo <= y_j + sum_l coeffs[l] * y_l <= hi` for the owning column `j`.
#[derive(Clone, Debug)]
pub(crate) struct Constraint<F> {
    pub coeffs: Vec<F>,
    pub lo: F,
    pub hi: F,
}

#[derive(Clone, Debug)]
pub(crate) struct Factor<F> {
    /// `groups[j]` constrains latent variable `j`.
    pub groups: Vec<Vec<Constraint<F>>>,
}

impl<F: Scalar> Factor<F> {
    pub fn rank(&self) -> usize {
        self.groups.len()
    }

    /// Conditional interval of latent `j` given `y[..j]`.
    #[inline]
    pub fn limits(&self, j: usize, y: &[F]) -> (F, F) {
        let mut lo = F::neg_infinity();
        let mut hi = F::infinity();
        for c in &self.groups[j] {
            let s = c
                .coeffs
                .iter()
                .zip(y)
                .fold(F::zero(), |acc, (&a, &b)| acc + a * b);
            lo = lo.max(c.lo - s);
            hi = hi.min(c.hi - s);
        }
        (lo, hi)
    }

    /// Probability integrand at `w` in the unit cube of dimension `rank - 1`.
    /// `y` is scratch of length `rank`.
    #[inline]
    pub fn integrand(&self, w: &[F], y: &mut [F]) -> F {
        let r = self.rank();
        let mut prod = F::one();
        for j in 0..r {
            let (lo, hi) = self.limits(j, &y[..j]);
            if hi <= lo {
                return F::zero();
            }
            prod = prod * normal::interval(lo, hi);
            if prod <= F::zero() {
                return F::zero();
            }
            if j + 1 < r {
                y[j] = sample_truncated(lo, hi, w[j]);
            }
        }
        prod
    }
}

/// Inverse-CDF draw from N(0, 1) truncated to `(lo, hi)` at quantile `w`.
#[inline]
pub(crate) fn sample_truncated<F: Scalar>(lo: F, hi: F, w: F) -> F {
    let y = if lo > F::zero() {
        let a = normal::sf(lo);
        let b = normal::sf(hi);
        -normal::quantile_rough(a - w * (a - b))
    } else {
        let a = normal::cdf(lo);
        let b = normal::cdf(hi);
        normal::quantile_rough(a + w * (b - a))
    };
    let y = y.max(lo).min(hi);
    if y.is_finite() {
        y
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        F::zero()
    }
}

fn truncated_mean<F: Scalar>(a: F, b: F, width: F) -> F {
    if width > F::lit(1e-30) {
        (normal::pdf(a) - normal::pdf(b)) / width
    } else if a > F::zero() {
        a
    } else if b < F::zero() {
        b
    } else {
        F::zero()
    }
}

/// Factorises `corr` restricted to standardised limits `lo`/`hi`.
pub(crate) fn factorize<F: Scalar>(corr: &CorrelationModel<F>, lo: &[F], hi: &[F]) -> Result<Factor<F>> {
    let n = corr.dim();
    let rank_tol = F::epsilon().sqrt() * F::lit(0.01);
    let psd_tol = F::epsilon().sqrt() * F::lit(10.0);
    let entry_tol = F::epsilon().sqrt() * F::lit(10.0);

    let mut sigma: Vec<F> = corr.values().to_vec();
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    let mut l = vec![F::zero(); n * n];
    let mut ybar = vec![F::zero(); n];
    let mut rank = 0;

    for j in 0..n {
        let mut best: Option<(usize, F, F, F, F)> = None;
        for i in j..n {
            let var = sigma[i * n + i] - (0..j).map(|c| l[i * n + c] * l[i * n + c]).sum::<F>();
            if var < -psd_tol {
                return Err(Error::NotPositiveSemiDefinite { residual: var.as_f64() });
            }
            if var <= rank_tol {
                continue;
            }
            let sd = var.sqrt();
            let s = (0..j).map(|c| l[i * n + c] * ybar[c]).sum::<F>();
            let a = (lo[i] - s) / sd;
            let b = (hi[i] - s) / sd;
            let width = normal::interval(a, b);
            if best.is_none_or(|(_, w, ..)| width < w) {
                best = Some((i, width, sd, a, b));
            }
        }
        let Some((p, width, sd, a, b)) = best else {
            break;
        };
        if p != j {
            for c in 0..n {
                sigma.swap(p * n + c, j * n + c);
            }
            for r in 0..n {
                sigma.swap(r * n + p, r * n + j);
            }
            for c in 0..j {
                l.swap(p * n + c, j * n + c);
            }
            lo.swap(p, j);
            hi.swap(p, j);
        }
        l[j * n + j] = sd;
        for i in j + 1..n {
            let dot = (0..j).map(|c| l[i * n + c] * l[j * n + c]).sum::<F>();
            l[i * n + j] = (sigma[i * n + j] - dot) / sd;
        }
        ybar[j] = truncated_mean(a, b, width);
        rank = j + 1;
    }

    for i in rank..n {
        let var = sigma[i * n + i] - (0..rank).map(|c| l[i * n + c] * l[i * n + c]).sum::<F>();
        if var.abs() > psd_tol {
            return Err(Error::NotPositiveSemiDefinite { residual: var.as_f64() });
        }
    }

    let mut groups: Vec<Vec<Constraint<F>>> = vec![Vec::new(); rank];
    for i in 0..n {
        let row = &l[i * n..i * n + rank.min(i + 1)];
        let Some(last) = (0..row.len()).rev().find(|&c| row[c].abs() > entry_tol) else {
            return Err(Error::NotPositiveSemiDefinite { residual: 0.0 });
        };
        let lead = row[last];
        let coeffs: Vec<F> = row[..last].iter().map(|&x| x / lead).collect();
        let (a, b) = (lo[i] / lead, hi[i] / lead);
        let (clo, chi) = if lead > F::zero() { (a, b) } else { (b, a) };
        groups[last].push(Constraint {
            coeffs,
            lo: clo,
            hi: chi,
        });
    }
    Ok(Factor { groups })
}
