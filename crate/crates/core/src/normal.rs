//! Standard normal distribution functions, generic over the scalar type.

use crate::scalar::Scalar;

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn horner<F: Scalar>(x: F, coeffs: &[f64]) -> F {
    coeffs
        .iter()
        .fold(F::zero(), |acc, &c| acc * x + F::lit(c))
}

/// Density φ(x).
#[inline]
pub fn pdf<F: Scalar>(x: F) -> F {
    (-(x * x) / F::lit(2.0)).exp() / (F::TAU()).sqrt()
}

/// Distribution function Φ(x).
#[inline]
pub fn cdf<F: Scalar>(x: F) -> F {
    F::lit(0.5) * (-x / F::SQRT_2()).erfc()
}

/// Survival function 1 − Φ(x), accurate in the upper tail.
#[inline]
pub fn sf<F: Scalar>(x: F) -> F {
    F::lit(0.5) * (x / F::SQRT_2()).erfc()
}

/// P(lo < X < hi) for X ~ N(0, 1), evaluated on the side that avoids
/// cancellation.
#[inline]
pub fn interval<F: Scalar>(lo: F, hi: F) -> F {
    if hi <= lo {
        F::zero()
    } else if lo > F::zero() {
        (sf(lo) - sf(hi)).max(F::zero())
    } else {
        (cdf(hi) - cdf(lo)).max(F::zero())
    }
}

/// Lower-half quantile, `p <= 0.5`. Acklam's rational approximation
/// polished by one Halley step against `erfc` when `polish` is set.
#[inline]
fn lower_quantile<F: Scalar>(p: F, polish: bool) -> F {
    if p <= F::zero() {
        return F::neg_infinity();
    }
    let p_low = F::lit(0.02425);
    let x = if p < p_low {
        let q = (F::lit(-2.0) * p.ln()).sqrt();
        horner(q, &ACKLAM_C) / (horner(q, &ACKLAM_D) * q + F::one())
    } else {
        let q = p - F::lit(0.5);
        let r = q * q;
        horner(r, &ACKLAM_A) * q / (horner(r, &ACKLAM_B) * r + F::one())
    };
    if !polish {
        return x;
    }
    let e = cdf(x) - p;
    let u = e * F::TAU().sqrt() * (x * x / F::lit(2.0)).exp();
    let refined = x - u / (F::one() + x * u / F::lit(2.0));
    if refined.is_finite() {
        refined
    } else {
        x
    }
}

/// Quantile Φ⁻¹(p). Returns ∓∞ at 0 and 1 and NaN outside [0, 1].
pub fn quantile<F: Scalar>(p: F) -> F {
    if p.is_nan() || p < F::zero() || p > F::one() {
        return F::nan();
    }
    if p >= F::one() {
        return F::infinity();
    }
    if p <= F::lit(0.5) {
        lower_quantile(p, true)
    } else {
        -lower_quantile(F::one() - p, true)
    }
}

/// Unpolished quantile (relative error about 1e-9) for inner loops that
/// only need a consistent transform. `p` must lie in `[0, 1]`.
#[inline]
pub(crate) fn quantile_rough<F: Scalar>(p: F) -> F {
    if p <= F::lit(0.5) {
        lower_quantile(p, false)
    } else if p >= F::one() {
        F::infinity()
    } else {
        -lower_quantile(F::one() - p, false)
    }
}

/// Φ⁻¹(1 − q), accurate for small upper-tail probabilities `q`.
pub fn upper_quantile<F: Scalar>(q: F) -> F {
    if q.is_nan() || q < F::zero() || q > F::one() {
        return F::nan();
    }
    if q <= F::lit(0.5) {
        -lower_quantile(q, true)
    } else {
        quantile(F::one() - q)
    }
}
