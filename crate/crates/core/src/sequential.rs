//! Group-sequential closed testing with error spending.
//!
//! Every intersection hypothesis gets its own boundary vector
//! `C^(1), ..., C^(Q)`, calibrated so that the probability under its null
//! of crossing at some analysis up to `q` equals the spend `alpha^(q)`.
//! The crossing probability is a rectangle probability of the stacked
//! cumulative statistics `(Z_k^(q))`, whose covariance follows from the
//! independent-increments structure of accumulating cohorts.
//!
//! Rejections are absorbing, and the local rejection regions are not
//! upward closed across analyses, so decisions walk the whole lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed::{signed_statistics, ClosureDecision, LocalDecision, Procedure};
use crate::design::{noncentrality, MeanConfig, PowerMethod, PowerResult};
use crate::error::{Error, Result};
use crate::model::{comparisons, difference_cov, standard_errors, ComparisonSet, CorrelationModel, Sided, TrialConfig};
use crate::mvn::{equicoord_quantile_with, mvn_rect_with, solve_boundary, MvnOptions, QuantileOptions, Rectangle, Tail};
use crate::normal;
use crate::scalar::Scalar;
use crate::spending::{SpendingFunction, SpendingSchedule};
use crate::subsets::SubsetClasses;

/// Spend increments below this get an infinite boundary.
pub const MIN_SPEND_INCREMENT: f64 = 1e-6;

/// Probability mass beyond this many standard deviations is negligible.
const FAR: f64 = 8.5;

impl<F: Scalar> SpendingSchedule<F> {
    /// Schedule at the information times of `config`.
    pub fn for_config(function: SpendingFunction, alpha: F, config: &TrialConfig<F>) -> Result<Self> {
        Self::new(function, alpha, config.info_times())
    }
}

/// Correlation of the stacked cumulative statistics, stage-major: entry
/// `q * m + k` is comparison `k` at analysis `q + 1`.
///
/// Arm means at two analyses share the earlier cohort, so their covariance
/// is the variance at the later one. With proportional allocation this
/// gives `rho_{k1 k2} * sqrt(t_min / t_max)`.
pub fn joint_covariance<F: Scalar>(config: &TrialConfig<F>) -> Result<CorrelationModel<F>> {
    let pairs = config.comparisons();
    let m = pairs.len();
    let stages = config.stages();
    let v: Vec<Vec<F>> = (1..=stages).map(|q| config.mean_variances(q)).collect::<Result<_>>()?;
    let se: Vec<Vec<F>> = (1..=stages).map(|q| standard_errors(config, q)).collect::<Result<_>>()?;
    Ok(CorrelationModel::from_fn(m * stages, |r, c| {
        let (q1, k1) = (r / m, r % m);
        let (q2, k2) = (c / m, c % m);
        difference_cov(&v[q1.max(q2)], pairs[k1], pairs[k2]) / (se[q1][k1] * se[q2][k2])
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// One boundary vector per intersection (closed test).
    Closed,
    /// The full-family boundary applied to every comparison.
    Generalised,
    /// A univariate boundary at level `alpha / m` per comparison.
    Bonferroni,
}

impl BoundaryKind {
    pub fn procedure(self) -> Procedure {
        match self {
            BoundaryKind::Closed => Procedure::Dunnett,
            BoundaryKind::Generalised => Procedure::TukeyGlobal,
            BoundaryKind::Bonferroni => Procedure::Bonferroni,
        }
    }
}

/// One row of a boundary listing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct BoundaryEntry<F> {
    pub class: usize,
    pub representative: Vec<usize>,
    pub size: usize,
    pub subsets: usize,
    pub stage: usize,
    /// `+inf` when the stage spends nothing.
    pub boundary: F,
}

#[derive(Clone, Debug)]
pub struct BoundarySchedule<F> {
    kind: BoundaryKind,
    sided: Sided,
    m: usize,
    spending: SpendingSchedule<F>,
    classes: Option<SubsetClasses>,
    /// `values[class][stage - 1]`
    values: Vec<Vec<F>>,
}

impl<F: Scalar> BoundarySchedule<F> {
    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn alpha(&self) -> F {
        self.spending.alpha
    }

    pub fn sided(&self) -> Sided {
        self.sided
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn stages(&self) -> usize {
        self.spending.stages()
    }

    pub fn spending(&self) -> &SpendingSchedule<F> {
        &self.spending
    }

    /// Boundary for the intersection `mask` at analysis `stage` (1-based).
    /// The generalised and Bonferroni schedules use one value for all.
    #[inline]
    pub fn boundary(&self, mask: u64, stage: usize) -> F {
        let class = self.classes.as_ref().map_or(0, |c| c.class_of(mask));
        self.values[class][stage - 1]
    }

    /// Boundaries of the full family.
    pub fn global(&self) -> Vec<F> {
        (1..=self.stages()).map(|q| self.boundary(full_mask(self.m), q)).collect()
    }

    pub fn entries(&self) -> Vec<BoundaryEntry<F>> {
        let rows: Vec<(Vec<usize>, usize)> = match (&self.classes, self.kind) {
            (Some(c), _) => (0..c.len()).map(|i| (c.representative(i).labels(), c.count(i))).collect(),
            (None, BoundaryKind::Bonferroni) => vec![(vec![1], self.m)],
            (None, _) => vec![((1..=self.m).collect(), 1)],
        };
        let mut out = Vec::new();
        for (class, (rep, subsets)) in rows.into_iter().enumerate() {
            for stage in 1..=self.stages() {
                out.push(BoundaryEntry {
                    class: class + 1,
                    size: rep.len(),
                    representative: rep.clone(),
                    subsets,
                    stage,
                    boundary: self.values[class][stage - 1],
                });
            }
        }
        out
    }

    /// `(smaller, larger, stage)` for nested intersections one element
    /// apart whose boundaries do not increase strictly. Infinite boundaries
    /// on both sides are not counted.
    pub fn consonance_violations(&self) -> Vec<(u64, u64, usize)> {
        let mut bad = Vec::new();
        if self.classes.is_none() {
            return bad;
        }
        for stage in 1..=self.stages() {
            for mask in 1..=full_mask(self.m) {
                let c = self.boundary(mask, stage);
                for k in 0..self.m {
                    let sub = mask & !(1 << k);
                    if sub != mask && sub != 0 {
                        let s = self.boundary(sub, stage);
                        if s >= c && !(s.is_infinite() && c.is_infinite()) {
                            bad.push((sub, mask, stage));
                        }
                    }
                }
            }
        }
        bad
    }
}

fn full_mask(m: usize) -> u64 {
    (1u64 << m) - 1
}

fn tail(sided: Sided) -> Tail {
    match sided {
        Sided::TwoSided => Tail::TwoSided,
        Sided::OneSided => Tail::Upper,
    }
}

fn check_schedule<F: Scalar>(config: &TrialConfig<F>, schedule: &SpendingSchedule<F>) -> Result<()> {
    if schedule.stages() != config.stages() {
        return Err(Error::DimensionMismatch {
            expected: config.stages(),
            got: schedule.stages(),
        });
    }
    Ok(())
}

/// Boundaries for the comparisons `members`, stage by stage.
fn stage_boundaries<F: Scalar>(
    joint: &CorrelationModel<F>,
    m: usize,
    members: &[usize],
    schedule: &SpendingSchedule<F>,
    opts: &QuantileOptions<F>,
) -> Result<Vec<F>> {
    let d = members.len();
    let mut out: Vec<F> = Vec::with_capacity(schedule.stages());
    for s in 0..schedule.stages() {
        let spend = schedule.increment(s).as_f64();
        if spend < MIN_SPEND_INCREMENT {
            out.push(F::infinity());
            continue;
        }
        if s == 0 {
            let corr = joint.submatrix(members);
            out.push(equicoord_quantile_with(&corr, F::one() - schedule.cumulative[0], opts)?);
            continue;
        }
        let idx: Vec<usize> = (0..=s).flat_map(|q| members.iter().map(move |&k| q * m + k)).collect();
        let corr = joint.submatrix(&idx);
        let mean = vec![F::zero(); idx.len()];
        let limits = |b: F| match opts.tail {
            Tail::TwoSided => (-b, b),
            Tail::Upper => (F::neg_infinity(), b),
        };
        let mut lower = Vec::with_capacity(idx.len());
        let mut upper = Vec::with_capacity(idx.len());
        for &b in &out {
            let (lo, hi) = limits(b);
            lower.extend(std::iter::repeat_n(lo, d));
            upper.extend(std::iter::repeat_n(hi, d));
        }
        let eval = |c: f64, mvn: &MvnOptions<F>| -> Result<f64> {
            let (lo, hi) = limits(F::lit(c));
            let mut l = lower.clone();
            let mut u = upper.clone();
            l.extend(std::iter::repeat_n(lo, d));
            u.extend(std::iter::repeat_n(hi, d));
            Ok(mvn_rect_with(&mean, &corr, &Rectangle::new(l, u)?, mvn)?.value.as_f64())
        };
        // P(no crossing before s) from the same integrator, so the target
        // stays reachable whatever the integration error of earlier stages
        let before = eval(FAR, &opts.mvn)?;
        let target = before - spend;
        let lo = match opts.tail {
            Tail::TwoSided => 0.0,
            Tail::Upper => normal::quantile(target.clamp(1e-12, 1.0 - 1e-12)).min(0.0),
        };
        out.push(F::lit(solve_boundary(eval, target, (lo, FAR), opts)?));
    }
    Ok(out)
}

fn quantile_options<F: Scalar>(sided: Sided, seed: u64) -> QuantileOptions<F> {
    let mut opts = QuantileOptions {
        tail: tail(sided),
        ..QuantileOptions::default()
    };
    opts.mvn.seed = seed;
    opts
}

/// Boundaries of every intersection hypothesis.
pub fn gs_boundaries<F: Scalar>(config: &TrialConfig<F>, schedule: &SpendingSchedule<F>, seed: u64) -> Result<BoundarySchedule<F>> {
    gs_boundaries_with(config, schedule, &quantile_options(config.sided(), seed))
}

/// [`gs_boundaries`] with explicit solver options; the tail follows the
/// configuration's sidedness.
pub fn gs_boundaries_with<F: Scalar>(
    config: &TrialConfig<F>,
    schedule: &SpendingSchedule<F>,
    opts: &QuantileOptions<F>,
) -> Result<BoundarySchedule<F>> {
    check_schedule(config, schedule)?;
    let opts = QuantileOptions {
        tail: tail(config.sided()),
        ..*opts
    };
    let m = config.m();
    // allocation is proportional, so every analysis shares the classes
    let weights: Vec<f64> = config.mean_variances(config.stages())?.iter().map(|v| v.as_f64()).collect();
    let classes = SubsetClasses::build(&config.comparisons(), &weights, config.sided())?;
    let joint = joint_covariance(config)?;
    let values = (0..classes.len())
        .into_par_iter()
        .map(|c| stage_boundaries(&joint, m, classes.representative(c).members(), schedule, &opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundarySchedule {
        kind: BoundaryKind::Closed,
        sided: config.sided(),
        m,
        spending: schedule.clone(),
        classes: Some(classes),
        values,
    })
}

/// Full-family boundaries `C_F^(q)`, used for every comparison.
pub fn generalised_boundaries<F: Scalar>(config: &TrialConfig<F>, schedule: &SpendingSchedule<F>, seed: u64) -> Result<BoundarySchedule<F>> {
    generalised_boundaries_with(config, schedule, &quantile_options(config.sided(), seed))
}

pub fn generalised_boundaries_with<F: Scalar>(
    config: &TrialConfig<F>,
    schedule: &SpendingSchedule<F>,
    opts: &QuantileOptions<F>,
) -> Result<BoundarySchedule<F>> {
    check_schedule(config, schedule)?;
    let opts = QuantileOptions {
        tail: tail(config.sided()),
        ..*opts
    };
    let m = config.m();
    if m > 64 {
        return Err(Error::TooManyComparisons { m, max: 64 });
    }
    let joint = joint_covariance(config)?;
    let all: Vec<usize> = (0..m).collect();
    let values = vec![stage_boundaries(&joint, m, &all, schedule, &opts)?];
    Ok(BoundarySchedule {
        kind: BoundaryKind::Generalised,
        sided: config.sided(),
        m,
        spending: schedule.clone(),
        classes: None,
        values,
    })
}

/// Univariate boundaries spending `alpha / m` per comparison.
pub fn bonferroni_gs_boundaries<F: Scalar>(config: &TrialConfig<F>, schedule: &SpendingSchedule<F>, seed: u64) -> Result<BoundarySchedule<F>> {
    bonferroni_gs_boundaries_with(config, schedule, &quantile_options(config.sided(), seed))
}

pub fn bonferroni_gs_boundaries_with<F: Scalar>(
    config: &TrialConfig<F>,
    schedule: &SpendingSchedule<F>,
    opts: &QuantileOptions<F>,
) -> Result<BoundarySchedule<F>> {
    check_schedule(config, schedule)?;
    let opts = QuantileOptions {
        tail: tail(config.sided()),
        ..*opts
    };
    let m = config.m();
    let per = schedule.with_alpha(schedule.alpha / F::from_usize_lossy(m))?;
    let joint = joint_covariance(config)?;
    let values = vec![stage_boundaries(&joint, m, &[0], &per, &opts)?];
    Ok(BoundarySchedule {
        kind: BoundaryKind::Bonferroni,
        sided: config.sided(),
        m,
        spending: schedule.clone(),
        classes: None,
        values,
    })
}

/// Pairwise statistics of the analyses performed so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StageData<F> {
    /// Cumulative `Z_k^(q)`, indexed `[analysis][comparison]`.
    pub z: Vec<Vec<F>>,
    /// Stage-wise `Z_k'^(q)` from the new cohort alone.
    pub z_stage: Vec<Vec<F>>,
    /// New patients per arm, `n'^(q) = n^(q) - n^(q-1)`.
    pub n_stage: Vec<Vec<u64>>,
}

fn stage_sizes<F: Scalar>(config: &TrialConfig<F>, analyses: usize) -> Result<Vec<Vec<u64>>> {
    if analyses == 0 || analyses > config.stages() {
        return Err(Error::InvalidArgument(format!(
            "{analyses} analyses for a design with {}",
            config.stages()
        )));
    }
    let n = config.stage_n();
    Ok((0..analyses)
        .map(|q| {
            (0..config.arms())
                .map(|i| n[q][i] - if q == 0 { 0 } else { n[q - 1][i] })
                .collect()
        })
        .collect())
}

fn check_rows<F: Scalar>(rows: &[Vec<F>], width: usize) -> Result<()> {
    for r in rows {
        if r.len() != width {
            return Err(Error::DimensionMismatch { expected: width, got: r.len() });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("staged values must be finite".into()));
        }
    }
    Ok(())
}

impl<F: Scalar> StageData<F> {
    /// From the sample means of each new cohort, `[analysis][arm]`.
    pub fn from_stage_means(config: &TrialConfig<F>, stage_means: &[Vec<F>]) -> Result<Self> {
        let n_stage = stage_sizes(config, stage_means.len())?;
        check_rows(stage_means, config.arms())?;
        let pairs = config.comparisons();
        let sigma2 = config.sigma2();
        let mut sum = vec![F::zero(); config.arms()];
        let mut z = Vec::new();
        let mut z_stage = Vec::new();
        for (q, (means, new)) in stage_means.iter().zip(&n_stage).enumerate() {
            let n = &config.stage_n()[q];
            for i in 0..config.arms() {
                sum[i] = sum[i] + means[i] * F::lit(new[i] as f64);
            }
            let cum: Vec<F> = (0..config.arms()).map(|i| sum[i] / F::lit(n[i] as f64)).collect();
            let se = standard_errors(config, q + 1)?;
            z.push(pairs.iter().zip(&se).map(|(&(i, j), &s)| (cum[i] - cum[j]) / s).collect());
            z_stage.push(
                pairs
                    .iter()
                    .map(|&(i, j)| {
                        let s = (sigma2[i] / F::lit(new[i] as f64) + sigma2[j] / F::lit(new[j] as f64)).sqrt();
                        (means[i] - means[j]) / s
                    })
                    .collect(),
            );
        }
        Ok(Self { z, z_stage, n_stage })
    }

    /// From cumulative sample means, `[analysis][arm]`.
    pub fn from_cumulative_means(config: &TrialConfig<F>, cumulative: &[Vec<F>]) -> Result<Self> {
        let n_stage = stage_sizes(config, cumulative.len())?;
        check_rows(cumulative, config.arms())?;
        let n = config.stage_n();
        let stage_means: Vec<Vec<F>> = (0..cumulative.len())
            .map(|q| {
                (0..config.arms())
                    .map(|i| {
                        let now = cumulative[q][i] * F::lit(n[q][i] as f64);
                        let before = if q == 0 { F::zero() } else { cumulative[q - 1][i] * F::lit(n[q - 1][i] as f64) };
                        (now - before) / F::lit(n_stage[q][i] as f64)
                    })
                    .collect()
            })
            .collect();
        Self::from_stage_means(config, &stage_means)
    }

    /// From cumulative z-statistics, `[analysis][comparison]`; the
    /// stage-wise values follow from the increments identity.
    pub fn from_cumulative_z(config: &TrialConfig<F>, z: Vec<Vec<F>>) -> Result<Self> {
        let n_stage = stage_sizes(config, z.len())?;
        check_rows(&z, config.m())?;
        let info = information(config, z.len())?;
        let z_stage = (0..z.len())
            .map(|q| {
                (0..config.m())
                    .map(|k| {
                        let now = info[q][k].sqrt() * z[q][k];
                        if q == 0 {
                            return z[q][k];
                        }
                        let before = info[q - 1][k].sqrt() * z[q - 1][k];
                        (now - before) / (info[q][k] - info[q - 1][k]).sqrt()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { z, z_stage, n_stage })
    }

    pub fn analyses(&self) -> usize {
        self.z.len()
    }

    /// Largest violation of `sqrt(I_q) Z_q = sqrt(I_{q-1}) Z_{q-1} + sqrt(I'_q) Z'_q`,
    /// with `I'_q` computed from the stage sizes.
    pub fn increment_residual(&self, config: &TrialConfig<F>) -> Result<F> {
        let info = information(config, self.analyses())?;
        let pairs = config.comparisons();
        let sigma2 = config.sigma2();
        let mut worst = F::zero();
        for q in 0..self.analyses() {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let new = &self.n_stage[q];
                let stage_info = F::one() / (sigma2[i] / F::lit(new[i] as f64) + sigma2[j] / F::lit(new[j] as f64));
                let before = if q == 0 { F::zero() } else { info[q - 1][k].sqrt() * self.z[q - 1][k] };
                let r = info[q][k].sqrt() * self.z[q][k] - before - stage_info.sqrt() * self.z_stage[q][k];
                worst = worst.max(r.abs() / info[q][k].sqrt());
            }
        }
        Ok(worst)
    }
}

/// `1 / sigma_p,k^2` for the first `analyses` analyses.
fn information<F: Scalar>(config: &TrialConfig<F>, analyses: usize) -> Result<Vec<Vec<F>>> {
    (1..=analyses)
        .map(|q| Ok(standard_errors(config, q)?.iter().map(|s| F::one() / (*s * *s)).collect()))
        .collect()
}

/// Outcome of a group-sequential closed test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GsDecision<F> {
    /// State after the last analysis. Local statistics and boundaries are
    /// those of the analysis that rejected, or of the last analysis.
    pub decision: ClosureDecision<F>,
    /// 1-based analysis at which each comparison was globally rejected.
    pub stopped_at: Vec<Option<usize>>,
    /// 1-based analysis at which each intersection was rejected, in mask
    /// order (same order as `decision.local_rejects`).
    pub subset_stopped_at: Vec<Option<usize>>,
    pub analyses: usize,
}

impl<F: Scalar> GsDecision<F> {
    /// Analysis at which the full intersection was rejected.
    pub fn global_stage(&self) -> Option<usize> {
        *self.subset_stopped_at.last().unwrap()
    }
}

/// Applies `boundaries` to the analyses in `data`, in order.
pub fn gs_closed_test<F: Scalar>(data: &StageData<F>, boundaries: &BoundarySchedule<F>) -> Result<GsDecision<F>> {
    let m = boundaries.m();
    if m > crate::subsets::MAX_LATTICE_M {
        return Err(Error::TooManyComparisons {
            m,
            max: crate::subsets::MAX_LATTICE_M,
        });
    }
    if data.analyses() == 0 || data.analyses() > boundaries.stages() {
        return Err(Error::InvalidArgument(format!(
            "{} analyses for boundaries with {} stages",
            data.analyses(),
            boundaries.stages()
        )));
    }
    check_rows(&data.z, m)?;
    let full = full_mask(m);
    let n_masks = full as usize;
    let mut subset_stage: Vec<Option<usize>> = vec![None; n_masks];
    let mut local_stat = vec![F::zero(); n_masks];
    let mut local_cut = vec![F::zero(); n_masks];
    let mut stopped_at: Vec<Option<usize>> = vec![None; m];
    let per_hypothesis = boundaries.kind() != BoundaryKind::Closed;

    for (q, z) in data.z.iter().enumerate() {
        let stage = q + 1;
        let stat = signed_statistics(z, boundaries.sided());
        if per_hypothesis {
            let cut = boundaries.boundary(full, stage);
            for k in 0..m {
                if stopped_at[k].is_none() && stat[k] > cut {
                    stopped_at[k] = Some(stage);
                }
            }
        }
        for mask in 1..=full {
            let idx = mask as usize - 1;
            if subset_stage[idx].is_some() {
                continue;
            }
            let s = (0..m).filter(|k| mask >> k & 1 == 1).map(|k| stat[k]).fold(F::neg_infinity(), F::max);
            let cut = boundaries.boundary(mask, stage);
            local_stat[idx] = s;
            local_cut[idx] = cut;
            let rejected = if per_hypothesis {
                (0..m).any(|k| mask >> k & 1 == 1 && stopped_at[k].is_some())
            } else {
                s > cut
            };
            if rejected {
                subset_stage[idx] = Some(stage);
            }
        }
        if !per_hypothesis {
            for (k, slot) in stopped_at.iter_mut().enumerate() {
                if slot.is_none() && (1..=full).filter(|mask| mask >> k & 1 == 1).all(|mask| subset_stage[mask as usize - 1].is_some()) {
                    *slot = Some(stage);
                }
            }
        }
    }

    let local_rejects = (1..=full)
        .map(|mask| {
            let idx = mask as usize - 1;
            LocalDecision {
                subset: ComparisonSet::from_mask(mask).labels(),
                statistic: local_stat[idx],
                critical: Some(local_cut[idx]),
                rejected: subset_stage[idx].is_some(),
            }
        })
        .collect();
    Ok(GsDecision {
        decision: ClosureDecision {
            procedure: boundaries.kind().procedure(),
            global_rejects: stopped_at.iter().map(Option::is_some).collect(),
            local_rejects,
        },
        stopped_at,
        subset_stopped_at: subset_stage,
        analyses: data.analyses(),
    })
}

/// Arms (1-based) all of whose comparisons are globally rejected.
pub fn drop_treatments(arms: usize, sided: Sided, global_rejects: &[bool]) -> Result<Vec<usize>> {
    let pairs = comparisons(arms, sided);
    if global_rejects.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            got: global_rejects.len(),
        });
    }
    Ok((0..arms)
        .filter(|&a| {
            pairs
                .iter()
                .zip(global_rejects)
                .filter(|((i, j), _)| *i == a || *j == a)
                .all(|(_, &r)| r)
        })
        .map(|a| a + 1)
        .collect())
}

/// P(at least one rejection at some analysis), by integration over the
/// stacked statistics.
///
/// For the closed and generalised schedules this is the probability that
/// the full intersection is rejected, which by stage-wise consonance is
/// the event of any rejection. For the Bonferroni schedule it is the
/// probability that some comparison crosses its own boundary.
pub fn gs_disjunctive_power<F: Scalar>(
    config: &TrialConfig<F>,
    means: &MeanConfig<F>,
    boundaries: &BoundarySchedule<F>,
    mvn: &MvnOptions<F>,
) -> Result<PowerResult<F>> {
    if boundaries.m() != config.m() || boundaries.stages() != config.stages() {
        return Err(Error::InvalidArgument("boundaries were computed for a different design".into()));
    }
    let m = config.m();
    let final_shift = noncentrality(config, means)?;
    let final_se = standard_errors(config, config.stages())?;
    let mut mean = Vec::with_capacity(m * config.stages());
    let mut lower = Vec::with_capacity(m * config.stages());
    let mut upper = Vec::with_capacity(m * config.stages());
    let cuts = boundaries.global();
    for q in 1..=config.stages() {
        let se = standard_errors(config, q)?;
        for k in 0..m {
            mean.push(final_shift[k] * final_se[k] / se[k]);
            let b = cuts[q - 1];
            lower.push(match config.sided() {
                Sided::TwoSided => -b,
                Sided::OneSided => F::neg_infinity(),
            });
            upper.push(b);
        }
    }
    let joint = joint_covariance(config)?;
    let inside = mvn_rect_with(&mean, &joint, &Rectangle::new(lower, upper)?, mvn)?;
    Ok(PowerResult {
        disjunctive: (F::one() - inside.value).max(F::zero()),
        err_est: inside.err_est,
        per_count: None,
        per_hypothesis: None,
        method: PowerMethod::Quadrature,
        n_per_arm: config.final_n().to_vec(),
    })
}
