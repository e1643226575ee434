use crate::error::{Error, Result};
use crate::model::CorrelationModel;
use crate::normal;
use crate::scalar::Scalar;

use super::{mvn_rect_with, MvnOptions, Rectangle};

/// Shape of the acceptance region whose probability is matched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tail {
    /// `(-c, c)^dim`
    TwoSided,
    /// `(-inf, c)^dim`
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileOptions<F> {
    pub tail: Tail,
    /// Absolute tolerance on the returned quantile.
    pub tolerance: F,
    /// Passed to every probability evaluation.
    pub mvn: MvnOptions<F>,
    pub bracket: (F, F),
}

impl<F: Scalar> Default for QuantileOptions<F> {
    fn default() -> Self {
        Self {
            tail: Tail::TwoSided,
            tolerance: F::lit(1e-4),
            mvn: MvnOptions {
                accuracy: F::lit(1e-5),
                ..MvnOptions::default()
            },
            bracket: (F::zero(), F::lit(6.0)),
        }
    }
}

/// `c` with `P(-c < Z_k < c for all k) = prob`.
pub fn equicoord_quantile<F: Scalar>(corr: &CorrelationModel<F>, prob: F, seed: u64) -> Result<F> {
    let mut opts = QuantileOptions::default();
    opts.mvn.seed = seed;
    equicoord_quantile_with(corr, prob, &opts)
}

pub fn equicoord_quantile_with<F: Scalar>(
    corr: &CorrelationModel<F>,
    prob: F,
    opts: &QuantileOptions<F>,
) -> Result<F> {
    if !(prob > F::zero() && prob < F::one()) {
        return Err(Error::InvalidArgument(format!("probability {prob} outside (0, 1)")));
    }
    let dim = corr.dim();
    if dim == 0 {
        return Err(Error::InvalidArgument("empty correlation matrix".into()));
    }
    if dim == 1 {
        return Ok(match opts.tail {
            Tail::TwoSided => normal::upper_quantile((F::one() - prob) / F::lit(2.0)),
            Tail::Upper => normal::quantile(prob),
        });
    }
    let mean = vec![F::zero(); dim];
    let target = prob.as_f64();
    let eval = |c: f64, mvn: &MvnOptions<F>| -> Result<f64> {
        let c = F::lit(c);
        let rect = match opts.tail {
            Tail::TwoSided => Rectangle::central(dim, c),
            Tail::Upper => Rectangle::below(dim, c),
        };
        Ok(mvn_rect_with(&mean, corr, &rect, mvn)?.value.as_f64())
    };
    let (mut lo, hi) = (opts.bracket.0.as_f64(), opts.bracket.1.as_f64());
    if opts.tail == Tail::Upper && lo >= 0.0 {
        // the upper-tail quantile can be negative for small prob
        lo = normal::quantile(prob).as_f64().min(lo);
    }
    let c = solve_boundary(eval, target, (lo, hi), opts)?;
    Ok(F::lit(c))
}

/// Solves `eval(c) = target` for a probability `eval` nondecreasing in `c`.
///
/// The root is located with cheap evaluations, then polished by secant
/// steps at full accuracy. Every evaluation reuses the same lattice shifts,
/// so the estimated probability is a smooth function of `c` and the secant
/// converges fast. Falls back to plain bracketing if the polish wanders.
pub(crate) fn solve_boundary<F: Scalar>(
    eval: impl Fn(f64, &MvnOptions<F>) -> Result<f64>,
    target: f64,
    (lo, hi): (f64, f64),
    opts: &QuantileOptions<F>,
) -> Result<f64> {
    let x_tol = opts.tolerance.as_f64();
    let accuracy = opts.mvn.accuracy.as_f64();
    // coarse evaluations must still resolve the spend 1 - target
    let coarse_acc = (0.05 * (1.0 - target)).min(1e-3);
    if accuracy < coarse_acc {
        let coarse = MvnOptions {
            accuracy: F::lit(coarse_acc),
            ..opts.mvn
        };
        let rough = solve_increasing(|c| eval(c, &coarse), target, lo, hi, 1e-3)?;
        let h = 0.02;
        let slope = (eval(rough + h, &coarse)? - eval(rough - h, &coarse)?) / (2.0 * h);
        if let Some(c) = polish_root(|c| eval(c, &opts.mvn), target, rough, slope, (lo, hi), x_tol)? {
            return Ok(c);
        }
    }
    solve_increasing(|c| eval(c, &opts.mvn), target, lo, hi, x_tol)
}

/// Secant iteration for `f(x) = target` from `x0` with initial slope
/// estimate `slope`. `None` when an iterate leaves `range` or the slope
/// turns nonpositive, so the caller can fall back to bracketing.
pub(crate) fn polish_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    target: f64,
    x0: f64,
    slope: f64,
    range: (f64, f64),
    x_tol: f64,
) -> Result<Option<f64>> {
    let mut x = x0;
    let mut fx = f(x)? - target;
    let mut s = slope;
    for _ in 0..30 {
        if !(s > 0.0 && s.is_finite()) {
            return Ok(None);
        }
        let step = -fx / s;
        let next = x + step;
        if !(next >= range.0 && next <= range.1) {
            return Ok(None);
        }
        if step.abs() <= 0.25 * x_tol {
            return Ok(Some(next));
        }
        let fn_ = f(next)? - target;
        s = (fn_ - fx) / step;
        x = next;
        fx = fn_;
        if fx == 0.0 {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// Root of `f(x) = target` for nondecreasing `f`, by Illinois-modified
/// regula falsi inside `[lo, hi]`. The upper end is doubled up to eight
/// times when it does not bracket the target.
pub(crate) fn solve_increasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    target: f64,
    lo: f64,
    hi: f64,
    x_tol: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)? - target;
    if fa > 0.0 {
        return Err(Error::Bracketing { lo: a, hi: b });
    }
    let mut fb = f(b)? - target;
    let mut grow = 0;
    while fb < 0.0 {
        if grow == 8 {
            return Err(Error::Bracketing { lo, hi: b });
        }
        a = b;
        fa = fb;
        b = 2.0 * b.max(1.0);
        fb = f(b)? - target;
        grow += 1;
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    let mut last = f64::NAN;
    for _ in 0..200 {
        if b - a <= x_tol {
            return Ok(0.5 * (a + b));
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        if (x - last).abs() <= 0.25 * x_tol {
            return Ok(x);
        }
        last = x;
        let fx = f(x)? - target;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NonConvergence(format!(
        "root bracket [{a}, {b}] did not shrink below {x_tol}"
    )))
}
