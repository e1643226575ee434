//! Disjunctive power, the least favourable configuration and sample size.
//!
//! Under any mean vector the pairwise statistics keep their null
//! correlation and are shifted by `(mu_i - mu_j) / sigma_p`. The global
//! intersection is rejected iff some statistic leaves `(-C_F, C_F)`, and
//! by consonance that is exactly the event of at least one rejection.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::closed::{critical_values_with, signed_statistics, step_down};
use crate::error::{Error, Result};
use crate::model::{correlation, standard_errors, ComparisonSet, Sided, TrialConfig};
use crate::mvn::{equicoord_quantile_with, mvn_rect_with, polish_root, MvnOptions, QuantileOptions, Rectangle, Tail};
use crate::scalar::Scalar;
use crate::sim::{fill_normal, map_replicates, replicate_rng};

/// True arm means and, optionally, the clinically relevant difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MeanConfig<F> {
    pub mu: Vec<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<F>,
}

impl<F: Scalar> MeanConfig<F> {
    pub fn new(mu: Vec<F>, delta: Option<F>) -> Result<Self> {
        if mu.iter().any(|m| !m.is_finite()) || delta.is_some_and(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("means must be finite".into()));
        }
        Ok(Self { mu, delta })
    }

    pub fn global_null(arms: usize) -> Self {
        Self {
            mu: vec![F::zero(); arms],
            delta: None,
        }
    }

    /// Every mean moved by `c`.
    pub fn shifted(&self, c: F) -> Self {
        Self {
            mu: self.mu.iter().map(|&m| m + c).collect(),
            delta: self.delta,
        }
    }

    fn check(&self, arms: usize) -> Result<()> {
        if self.mu.len() != arms {
            return Err(Error::DimensionMismatch {
                expected: arms,
                got: self.mu.len(),
            });
        }
        Ok(())
    }
}

/// `(delta, 0, delta/2, ..., delta/2)`.
pub fn lfc<F: Scalar>(arms: usize, delta: F) -> Result<MeanConfig<F>> {
    if arms < 2 {
        return Err(Error::InvalidArgument("need at least 2 arms".into()));
    }
    if delta == F::zero() || !delta.is_finite() {
        return Err(Error::InvalidArgument("delta must be finite and nonzero".into()));
    }
    let mut mu = vec![delta / F::lit(2.0); arms];
    mu[0] = delta;
    mu[1] = F::zero();
    MeanConfig::new(mu, Some(delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMethod {
    Quadrature,
    Simulation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct PowerResult<F> {
    /// P(at least one rejection).
    pub disjunctive: F,
    /// Integration error, or the Monte Carlo standard error.
    pub err_est: F,
    /// P(exactly r rejections), r = 0..=m; simulation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_count: Option<Vec<F>>,
    /// P(H_k rejected) per comparison; simulation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_hypothesis: Option<Vec<F>>,
    pub method: PowerMethod,
    pub n_per_arm: Vec<u64>,
}

fn tail(sided: Sided) -> Tail {
    match sided {
        Sided::TwoSided => Tail::TwoSided,
        Sided::OneSided => Tail::Upper,
    }
}

fn sized<F: Scalar>(config: &TrialConfig<F>, n_per_arm: Option<&[u64]>) -> Result<TrialConfig<F>> {
    let n = n_per_arm.unwrap_or(config.final_n());
    TrialConfig::new(
        config.sigma2().to_vec(),
        config.alloc().to_vec(),
        vec![n.to_vec()],
        config.sided(),
    )
}

/// `E(Z_k)` at the final analysis.
pub fn noncentrality<F: Scalar>(config: &TrialConfig<F>, means: &MeanConfig<F>) -> Result<Vec<F>> {
    means.check(config.arms())?;
    let se = standard_errors(config, config.stages())?;
    Ok(config
        .comparisons()
        .iter()
        .zip(se)
        .map(|(&(i, j), s)| (means.mu[i] - means.mu[j]) / s)
        .collect())
}

/// `C_F` for `config` at its final analysis.
pub fn global_critical_value<F: Scalar>(config: &TrialConfig<F>, alpha: F, opts: &QuantileOptions<F>) -> Result<F> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    let corr = correlation(config, &ComparisonSet::full(config.m()), config.stages())?;
    let opts = QuantileOptions {
        tail: tail(config.sided()),
        ..*opts
    };
    equicoord_quantile_with(&corr, F::one() - alpha, &opts)
}

/// P(reject H_F) at a known `C_F`, by integration.
pub fn power_at_cut<F: Scalar>(config: &TrialConfig<F>, means: &MeanConfig<F>, cut: F, mvn: &MvnOptions<F>) -> Result<PowerResult<F>> {
    let mean = noncentrality(config, means)?;
    let m = config.m();
    let corr = correlation(config, &ComparisonSet::full(m), config.stages())?;
    let rect = match config.sided() {
        Sided::TwoSided => Rectangle::central(m, cut),
        Sided::OneSided => Rectangle::below(m, cut),
    };
    let inside = mvn_rect_with(&mean, &corr, &rect, mvn)?;
    Ok(PowerResult {
        disjunctive: (F::one() - inside.value).max(F::zero()),
        err_est: inside.err_est,
        per_count: None,
        per_hypothesis: None,
        method: PowerMethod::Quadrature,
        n_per_arm: config.final_n().to_vec(),
    })
}

/// Disjunctive power of the closed Dunnett procedure by integration.
/// `n_per_arm` overrides the final-stage sizes of `config`.
pub fn disjunctive_power<F: Scalar>(
    config: &TrialConfig<F>,
    means: &MeanConfig<F>,
    alpha: F,
    n_per_arm: Option<&[u64]>,
    seed: u64,
) -> Result<PowerResult<F>> {
    let cfg = sized(config, n_per_arm)?;
    let mut q = QuantileOptions::default();
    q.mvn.seed = seed;
    let cut = global_critical_value(&cfg, alpha, &q)?;
    power_at_cut(&cfg, means, cut, &MvnOptions::with_seed(seed))
}

/// Disjunctive power with the rejection-count distribution, by simulating
/// `replicates` trials of the closed Dunnett procedure.
pub fn simulate_power<F: Scalar>(
    config: &TrialConfig<F>,
    means: &MeanConfig<F>,
    alpha: F,
    n_per_arm: Option<&[u64]>,
    replicates: u64,
    seed: u64,
) -> Result<PowerResult<F>>
where
    StandardNormal: Distribution<F>,
{
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    let cfg = sized(config, n_per_arm)?;
    means.check(cfg.arms())?;
    let mut q = QuantileOptions::default();
    q.mvn.seed = seed;
    let table = critical_values_with(&cfg, 1, alpha, &q)?;
    let pairs = cfg.comparisons();
    let se = standard_errors(&cfg, 1)?;
    let sd: Vec<F> = cfg.mean_variances(1)?.iter().map(|v| v.sqrt()).collect();
    let m = pairs.len();
    let arms = cfg.arms();
    let (counts, per_k) = map_replicates(
        replicates,
        || (vec![0u64; m + 1], vec![0u64; m]),
        |(counts, per_k), r| {
            let mut rng = replicate_rng(seed, r);
            let mut e = vec![F::zero(); arms];
            fill_normal(&mut rng, &mut e);
            let xbar: Vec<F> = (0..arms).map(|i| means.mu[i] + sd[i] * e[i]).collect();
            let z: Vec<F> = pairs.iter().zip(&se).map(|(&(i, j), &s)| (xbar[i] - xbar[j]) / s).collect();
            let rejects = step_down(&signed_statistics(&z, cfg.sided()), |mask| table.by_mask(mask));
            counts[rejects.iter().filter(|&&x| x).count()] += 1;
            for (k, &x) in rejects.iter().enumerate() {
                per_k[k] += u64::from(x);
            }
        },
        |(c, p), (c2, p2)| {
            c.iter_mut().zip(c2).for_each(|(a, b)| *a += b);
            p.iter_mut().zip(p2).for_each(|(a, b)| *a += b);
        },
    );
    let n = replicates as f64;
    let frac = |c: u64| F::lit(c as f64 / n);
    let power = 1.0 - counts[0] as f64 / n;
    Ok(PowerResult {
        disjunctive: F::lit(power),
        err_est: F::lit((power * (1.0 - power) / n).sqrt()),
        per_count: Some(counts.into_iter().map(frac).collect()),
        per_hypothesis: Some(per_k.into_iter().map(frac).collect()),
        method: PowerMethod::Simulation,
        n_per_arm: cfg.final_n().to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SampleSize<F> {
    pub n_total: u64,
    pub n_per_arm: Vec<u64>,
    pub achieved_power: F,
    pub critical_value: F,
    pub method: PowerMethod,
}

/// Upper end of the sample-size search.
const N_MAX: u64 = 1 << 40;

/// Smallest total sample size whose disjunctive power reaches
/// `power_target`. Arm `i` receives `ceil(alloc_i * n)`; the reported total
/// is the sum of the rounded arms.
///
/// `C_F` depends only on the allocation ratios, so it is computed once from
/// them; the noncentrality uses the rounded arm sizes.
pub fn sample_size<F: Scalar>(
    config: &TrialConfig<F>,
    means: &MeanConfig<F>,
    alpha: F,
    power_target: F,
    seed: u64,
) -> Result<SampleSize<F>> {
    let mut q = QuantileOptions::default();
    q.mvn.seed = seed;
    sample_size_with(config, means, alpha, power_target, &q)
}

/// [`sample_size`] with explicit integration and quantile options.
pub fn sample_size_with<F: Scalar>(
    config: &TrialConfig<F>,
    means: &MeanConfig<F>,
    alpha: F,
    power_target: F,
    opts: &QuantileOptions<F>,
) -> Result<SampleSize<F>> {
    if !(power_target > F::zero() && power_target < F::one()) {
        return Err(Error::InvalidArgument(format!("power target {power_target} outside (0, 1)")));
    }
    means.check(config.arms())?;
    if means.mu.iter().all(|&m| m == means.mu[0]) {
        return Err(Error::NonConvergence("power equals alpha when all means are equal".into()));
    }
    // exact ratios: a large total makes rounding negligible
    let ratio_cfg = config.with_total_n(1 << 30)?;
    let cut = global_critical_value(&ratio_cfg, alpha, opts)?;
    let mvn = opts.mvn;
    let power = |n: u64| -> Result<(F, TrialConfig<F>)> {
        let cfg = config.with_total_n(n)?;
        Ok((power_at_cut(&cfg, means, cut, &mvn)?.disjunctive, cfg))
    };

    let arms = config.arms() as u64;
    let mut lo = arms;
    let (p_lo, cfg_lo) = power(lo)?;
    if p_lo >= power_target {
        return Ok(SampleSize {
            n_total: cfg_lo.total_n(),
            n_per_arm: cfg_lo.final_n().to_vec(),
            achieved_power: p_lo,
            critical_value: cut,
            method: PowerMethod::Quadrature,
        });
    }
    let mut hi = lo * 2;
    loop {
        let (p, _) = power(hi)?;
        if p >= power_target {
            break;
        }
        lo = hi;
        hi *= 2;
        if hi > N_MAX {
            return Err(Error::NonConvergence(format!(
                "power stays below {power_target} up to n = {N_MAX}"
            )));
        }
    }
    // power(lo) < target <= power(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if power(mid)?.0 >= power_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (p, cfg) = power(hi)?;
    Ok(SampleSize {
        n_total: cfg.total_n(),
        n_per_arm: cfg.final_n().to_vec(),
        achieved_power: p,
        critical_value: cut,
        method: PowerMethod::Quadrature,
    })
}

/// Common noncentrality scale `zeta` (in units of `delta / sigma_p`) with
/// the given disjunctive power at the least favourable configuration:
/// returns the `delta` that, for the sizes in `config`, gives `power`.
pub fn delta_for_power<F: Scalar>(config: &TrialConfig<F>, alpha: F, power: F, seed: u64) -> Result<F> {
    if !(power > alpha && power < F::one()) {
        return Err(Error::InvalidArgument(format!("power {power} outside (alpha, 1)")));
    }
    let mut q = QuantileOptions::default();
    q.mvn.seed = seed;
    let cut = global_critical_value(config, alpha, &q)?;
    let mvn = MvnOptions::with_seed(seed);
    let se = standard_errors(config, config.stages())?[0].as_f64();
    let eval = |d: f64| -> Result<f64> {
        let means = lfc(config.arms(), F::lit(d))?;
        Ok(power_at_cut(config, &means, cut, &mvn)?.disjunctive.as_f64())
    };
    let target = power.as_f64();
    let lo = 1e-6 * se;
    let mut hi = 4.0 * se;
    while eval(hi)? < target {
        hi *= 2.0;
        if hi > 1e6 * se {
            return Err(Error::Bracketing { lo, hi });
        }
    }
    let rough = crate::mvn::solve_increasing(eval, target, lo, hi, 1e-3 * se)?;
    let h = 1e-2 * se;
    let slope = (eval(rough + h)? - eval(rough - h)?) / (2.0 * h);
    let d = polish_root(eval, target, rough, slope, (lo, 1e6 * se), 1e-7 * se)?.unwrap_or(rough);
    Ok(F::lit(d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfcMode {
    /// Equal `sigma^2 / n`: compare the LFC with perturbed configurations.
    PerturbationCheck,
    /// Unequal `sigma^2 / n`: search the intermediate means for the minimum.
    NumericSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Perturbation<F> {
    pub epsilon: F,
    pub power: F,
    pub err_est: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LfcReport<F> {
    pub mode: LfcMode,
    pub lfc_power: F,
    pub lfc_err: F,
    pub perturbations: Vec<Perturbation<F>>,
    /// True when no perturbation beats the LFC by more than the combined
    /// error estimates.
    pub lfc_is_minimum: bool,
    /// Minimising scaling `a` with `mu = a * delta` (numeric search only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Vec<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum_power: Option<F>,
}

/// Power evaluator used by [`lfc_check_with`]: means to (power, error).
pub trait PowerFn<F>: Fn(&MeanConfig<F>) -> Result<(F, F)> {}
impl<F, T: Fn(&MeanConfig<F>) -> Result<(F, F)>> PowerFn<F> for T {}

/// Compares the single-stage LFC with `mu_3 = delta/2 + eps` for each
/// `eps` in `grid`. With unequal `sigma^2 / n` the intermediate means are
/// searched instead.
pub fn lfc_check<F: Scalar>(config: &TrialConfig<F>, delta: F, alpha: F, grid: &[F], seed: u64) -> Result<LfcReport<F>> {
    let cfg = sized(config, None)?;
    let mut q = QuantileOptions::default();
    q.mvn.seed = seed;
    let cut = global_critical_value(&cfg, alpha, &q)?;
    let mvn = MvnOptions::with_seed(seed);
    let power = |m: &MeanConfig<F>| -> Result<(F, F)> {
        let r = power_at_cut(&cfg, m, cut, &mvn)?;
        Ok((r.disjunctive, r.err_est))
    };
    let equal = cfg.mean_variances(1)?.windows(2).all(|w| (w[0] - w[1]).abs() <= F::epsilon() * w[0]);
    let mode = if equal { LfcMode::PerturbationCheck } else { LfcMode::NumericSearch };
    lfc_check_with(cfg.arms(), delta, grid, mode, power)
}

/// [`lfc_check`] with a caller-supplied power function, e.g. for staged
/// designs.
pub fn lfc_check_with<F: Scalar>(
    arms: usize,
    delta: F,
    grid: &[F],
    mode: LfcMode,
    power: impl PowerFn<F>,
) -> Result<LfcReport<F>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("perturbation grid is empty".into()));
    }
    let base = lfc(arms, delta)?;
    let (lfc_power, lfc_err) = power(&base)?;
    let mut perturbations = Vec::with_capacity(grid.len());
    if arms >= 3 {
        for &eps in grid {
            let mut m = base.clone();
            m.mu[2] = m.mu[2] + eps;
            let (p, e) = power(&m)?;
            perturbations.push(Perturbation {
                epsilon: eps,
                power: p,
                err_est: e,
            });
        }
    }
    let lfc_is_minimum = perturbations
        .iter()
        .all(|p| p.power >= lfc_power - p.err_est - lfc_err - F::lit(1e-9));
    let mut report = LfcReport {
        mode,
        lfc_power,
        lfc_err,
        perturbations,
        lfc_is_minimum,
        scaling: None,
        minimum_power: None,
    };
    if mode == LfcMode::NumericSearch && arms >= 3 {
        let (a, p) = search_intermediate(arms, delta, &power)?;
        report.scaling = Some(a);
        report.minimum_power = Some(p);
    }
    Ok(report)
}

/// Coordinate-wise golden-section search over `mu_i / delta` in `[0, 1]`
/// for `i >= 3`, holding `mu_1 = delta`, `mu_2 = 0`.
fn search_intermediate<F: Scalar>(arms: usize, delta: F, power: &impl PowerFn<F>) -> Result<(Vec<F>, F)> {
    let mut a = vec![0.5f64; arms];
    a[0] = 1.0;
    a[1] = 0.0;
    let eval = |a: &[f64]| -> Result<f64> {
        let mu = a.iter().map(|&x| F::lit(x) * delta).collect();
        Ok(power(&MeanConfig::new(mu, Some(delta))?)?.0.as_f64())
    };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = eval(&a)?;
    for _sweep in 0..4 {
        let before = best;
        for i in 2..arms {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut x1 = hi - golden * (hi - lo);
            let mut x2 = lo + golden * (hi - lo);
            let mut probe = a.clone();
            probe[i] = x1;
            let mut f1 = eval(&probe)?;
            probe[i] = x2;
            let mut f2 = eval(&probe)?;
            while hi - lo > 1e-3 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - golden * (hi - lo);
                    probe[i] = x1;
                    f1 = eval(&probe)?;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + golden * (hi - lo);
                    probe[i] = x2;
                    f2 = eval(&probe)?;
                }
            }
            let (x, f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            if f < best {
                a[i] = x;
                best = f;
            }
        }
        if before - best < 1e-6 {
            break;
        }
    }
    Ok((a.into_iter().map(F::lit).collect(), F::lit(best)))
}
