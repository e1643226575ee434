//! Error-spending functions and their per-analysis schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::scalar::Scalar;

/// Cumulative type I error `alpha*(tau)` spent by information time `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SpendingFunction {
    /// `alpha * ln(1 + (e - 1) tau)`
    PocockType,
    /// `2 - 2 Phi(z_{alpha/2} / sqrt(tau))`
    ObrienFlemingType,
    /// `alpha * tau^rho`
    Power { rho: f64 },
    /// Piecewise-linear through `(tau, fraction of alpha)` knots; `(0, 0)`
    /// and `(1, 1)` are implied.
    Tabulated { tau: Vec<f64>, fraction: Vec<f64> },
}

impl SpendingFunction {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        match self {
            SpendingFunction::Power { rho } if !(rho.is_finite() && *rho > 0.0) => bad("power spending needs rho > 0"),
            SpendingFunction::Tabulated { tau, fraction } => {
                if tau.len() != fraction.len() {
                    return bad("tabulated spending needs as many fractions as times");
                }
                let mut t_prev = 0.0;
                let mut f_prev = 0.0;
                for (&t, &f) in tau.iter().zip(fraction) {
                    if !(t > t_prev && t <= 1.0) || !(f >= f_prev && f <= 1.0) {
                        return bad("tabulated spending must increase within [0, 1]");
                    }
                    t_prev = t;
                    f_prev = f;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `alpha*(tau)`, clamped to `[0, alpha]` and exact at `tau = 1`.
    pub fn spend<F: Scalar>(&self, alpha: F, tau: F) -> F {
        if tau <= F::zero() {
            return F::zero();
        }
        if tau >= F::one() {
            return alpha;
        }
        let a = alpha.as_f64();
        let t = tau.as_f64();
        let v = match self {
            SpendingFunction::PocockType => a * (1.0 + (std::f64::consts::E - 1.0) * t).ln(),
            SpendingFunction::ObrienFlemingType => {
                2.0 * normal::sf(normal::upper_quantile(a / 2.0) / t.sqrt())
            }
            SpendingFunction::Power { rho } => a * t.powf(*rho),
            SpendingFunction::Tabulated { tau: knots, fraction } => {
                let mut pts = vec![(0.0, 0.0)];
                pts.extend(knots.iter().copied().zip(fraction.iter().copied()));
                if pts.last().map(|p| p.0) != Some(1.0) {
                    pts.push((1.0, 1.0));
                }
                let i = pts.iter().rposition(|p| p.0 <= t).unwrap_or(0);
                let (t0, f0) = pts[i];
                let (t1, f1) = pts[(i + 1).min(pts.len() - 1)];
                let f = if t1 > t0 { f0 + (f1 - f0) * (t - t0) / (t1 - t0) } else { f0 };
                a * f
            }
        };
        F::lit(v.clamp(0.0, a))
    }
}

/// Spending evaluated at the planned analyses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SpendingSchedule<F> {
    pub alpha: F,
    pub function: SpendingFunction,
    pub info_times: Vec<F>,
    /// Cumulative spend `alpha^(q)`; the last entry is exactly `alpha`.
    pub cumulative: Vec<F>,
}

impl<F: Scalar> SpendingSchedule<F> {
    pub fn new(function: SpendingFunction, alpha: F, info_times: Vec<F>) -> Result<Self> {
        function.validate()?;
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
        }
        if info_times.is_empty() {
            return Err(Error::InvalidArgument("no analyses".into()));
        }
        let mut prev = F::zero();
        for &t in &info_times {
            if !(t > prev) {
                return Err(Error::InvalidArgument("information times must increase strictly".into()));
            }
            prev = t;
        }
        if (prev - F::one()).abs() > F::lit(1e-9) {
            return Err(Error::InvalidArgument("the last information time must be 1".into()));
        }
        let q = info_times.len();
        let mut cumulative: Vec<F> = info_times.iter().map(|&t| function.spend(alpha, t)).collect();
        cumulative[q - 1] = alpha;
        for i in 1..q {
            cumulative[i] = cumulative[i].max(cumulative[i - 1]);
        }
        Ok(Self {
            alpha,
            function,
            info_times,
            cumulative,
        })
    }

    pub fn stages(&self) -> usize {
        self.info_times.len()
    }

    /// Spend allotted to analysis `q` (0-based) alone.
    pub fn increment(&self, q: usize) -> F {
        if q == 0 {
            self.cumulative[0]
        } else {
            self.cumulative[q] - self.cumulative[q - 1]
        }
    }

    /// Same function and times at a different level.
    pub fn with_alpha(&self, alpha: F) -> Result<Self> {
        Self::new(self.function.clone(), alpha, self.info_times.clone())
    }
}
