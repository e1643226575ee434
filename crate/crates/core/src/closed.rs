//! Single-stage closed testing of all pairwise comparisons and the
//! comparator procedures.
//!
//! The intersection hypothesis for a subset `K` of comparisons is tested
//! with `max_{k in K} |Z_k|` (or `max Z_k` one-sided) against the
//! equicoordinate quantile of its own correlation matrix. The closure
//! rejects `H_k` when every intersection containing `k` is rejected.
//! Critical values grow with the subset, so the closure reduces to a
//! step-down: walk the statistics from largest to smallest and reject
//! while the current one beats the value for the set of those not yet
//! rejected.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{correlation, ComparisonSet, ComparisonStats, Sided, TrialConfig};
use crate::mvn::{equicoord_quantile_with, QuantileOptions, Tail};
use crate::normal;
use crate::scalar::Scalar;
use crate::subsets::SubsetClasses;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Dunnett,
    Bonferroni,
    Gatekeeping,
    TukeyGlobal,
    Unadjusted,
}

impl Procedure {
    pub fn label(self) -> &'static str {
        match self {
            Procedure::Dunnett => "Dunnett",
            Procedure::Bonferroni => "Bonferroni",
            Procedure::Gatekeeping => "Gatekeeping",
            Procedure::TukeyGlobal => "Global",
            Procedure::Unadjusted => "Unadjusted",
        }
    }
}

/// One row of a [`CriticalValueTable`] listing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ClassEntry<F> {
    pub class: usize,
    /// 1-based comparison labels of the smallest member subset.
    pub representative: Vec<usize>,
    pub size: usize,
    /// Number of subsets sharing this value.
    pub subsets: usize,
    pub critical: F,
}

/// Critical values `C_K` for every nonempty subset of comparisons, stored
/// once per correlation class.
#[derive(Clone, Debug)]
pub struct CriticalValueTable<F> {
    alpha: F,
    sided: Sided,
    classes: SubsetClasses,
    values: Vec<F>,
}

impl<F: Scalar> CriticalValueTable<F> {
    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn sided(&self) -> Sided {
        self.sided
    }

    pub fn m(&self) -> usize {
        self.classes.m()
    }

    pub fn classes(&self) -> &SubsetClasses {
        &self.classes
    }

    pub fn get(&self, set: &ComparisonSet) -> Result<F> {
        let mask = set.mask();
        if mask >> self.m() != 0 {
            return Err(Error::MissingSubset(set.labels()));
        }
        Ok(self.by_mask(mask))
    }

    #[inline]
    pub fn by_mask(&self, mask: u64) -> F {
        self.values[self.classes.class_of(mask)]
    }

    /// `C_F`, the value for the full family.
    pub fn global(&self) -> F {
        self.by_mask(full_mask(self.m()))
    }

    pub fn entries(&self) -> Vec<ClassEntry<F>> {
        (0..self.classes.len())
            .map(|c| {
                let rep = self.classes.representative(c);
                ClassEntry {
                    class: c + 1,
                    size: rep.len(),
                    representative: rep.labels(),
                    subsets: self.classes.count(c),
                    critical: self.values[c],
                }
            })
            .collect()
    }

    /// Pairs `(smaller, larger)` of masks, one element apart, whose values
    /// are not strictly increasing.
    pub fn consonance_violations(&self) -> Vec<(u64, u64)> {
        let mut bad = Vec::new();
        for mask in 1..=full_mask(self.m()) {
            let c = self.by_mask(mask);
            for k in 0..self.m() {
                let sub = mask & !(1 << k);
                if sub != mask && sub != 0 && self.by_mask(sub) >= c {
                    bad.push((sub, mask));
                }
            }
        }
        bad
    }
}

fn full_mask(m: usize) -> u64 {
    (1u64 << m) - 1
}

/// Critical values at the final analysis of `config`.
pub fn critical_values<F: Scalar>(config: &TrialConfig<F>, alpha: F, seed: u64) -> Result<CriticalValueTable<F>> {
    let mut opts = QuantileOptions::default();
    opts.mvn.seed = seed;
    critical_values_with(config, config.stages(), alpha, &opts)
}

/// Critical values from the information at analysis `stage`. The tail in
/// `opts` is overridden by the configuration's sidedness.
pub fn critical_values_with<F: Scalar>(
    config: &TrialConfig<F>,
    stage: usize,
    alpha: F,
    opts: &QuantileOptions<F>,
) -> Result<CriticalValueTable<F>> {
    check_alpha(alpha)?;
    let sided = config.sided();
    let weights: Vec<f64> = config.mean_variances(stage)?.iter().map(|v| v.as_f64()).collect();
    let classes = SubsetClasses::build(&config.comparisons(), &weights, sided)?;
    let opts = QuantileOptions {
        tail: match sided {
            Sided::TwoSided => Tail::TwoSided,
            Sided::OneSided => Tail::Upper,
        },
        ..*opts
    };
    let values = (0..classes.len())
        .into_par_iter()
        .map(|c| {
            let corr = correlation(config, &classes.representative(c), stage)?;
            equicoord_quantile_with(&corr, F::one() - alpha, &opts)
        })
        .collect::<Result<Vec<F>>>()?;
    Ok(CriticalValueTable {
        alpha,
        sided,
        classes,
        values,
    })
}

fn check_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if alpha > F::zero() && alpha < F::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Test statistic per comparison: `|Z|` two-sided, `Z` one-sided.
#[inline]
pub fn signed_statistics<F: Scalar>(z: &[F], sided: Sided) -> Vec<F> {
    match sided {
        Sided::TwoSided => z.iter().map(|x| x.abs()).collect(),
        Sided::OneSided => z.to_vec(),
    }
}

/// Local decision on one intersection hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LocalDecision<F> {
    /// 1-based comparison labels.
    pub subset: Vec<usize>,
    pub statistic: F,
    /// Absent for procedures without a per-intersection boundary.
    pub critical: Option<F>,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ClosureDecision<F> {
    pub procedure: Procedure,
    /// Indexed by 0-based comparison position.
    pub global_rejects: Vec<bool>,
    pub local_rejects: Vec<LocalDecision<F>>,
}

impl<F: Scalar> ClosureDecision<F> {
    pub fn rejected_labels(&self) -> Vec<usize> {
        (0..self.global_rejects.len())
            .filter(|&k| self.global_rejects[k])
            .map(|k| k + 1)
            .collect()
    }

    pub fn num_rejected(&self) -> usize {
        self.global_rejects.iter().filter(|&&r| r).count()
    }
}

fn check_z<F: Scalar>(z: &[F], m: usize) -> Result<()> {
    if z.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: z.len() });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("z-statistics must be finite".into()));
    }
    Ok(())
}

/// z-values in comparison order, checking the indices form `1..=m`.
pub fn z_vector<F: Scalar>(stats: &[ComparisonStats<F>]) -> Result<Vec<F>> {
    let mut z = vec![F::nan(); stats.len()];
    for s in stats {
        if s.index == 0 || s.index > stats.len() || !z[s.index - 1].is_nan() {
            return Err(Error::InvalidArgument(format!(
                "comparison indices must cover 1..={} once each",
                stats.len()
            )));
        }
        z[s.index - 1] = s.z;
    }
    Ok(z)
}

/// Global rejections of the closed Dunnett procedure by step-down.
/// `stat` holds the signed statistics of [`signed_statistics`].
pub fn step_down<F: Scalar>(stat: &[F], critical: impl Fn(u64) -> F) -> Vec<bool> {
    let m = stat.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| stat[b].partial_cmp(&stat[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut remaining = full_mask(m);
    let mut rejects = vec![false; m];
    for k in order {
        if stat[k] > critical(remaining) {
            rejects[k] = true;
            remaining &= !(1 << k);
        } else {
            break;
        }
    }
    rejects
}

/// Local decision for every nonempty subset, in mask order.
fn lattice<F: Scalar>(stat: &[F], critical: impl Fn(u64) -> Option<F>, reject: impl Fn(u64, F) -> bool) -> Vec<LocalDecision<F>> {
    (1..=full_mask(stat.len()))
        .map(|mask| {
            let set = ComparisonSet::from_mask(mask);
            let statistic = set
                .members()
                .iter()
                .map(|&k| stat[k])
                .fold(F::neg_infinity(), F::max);
            LocalDecision {
                subset: set.labels(),
                statistic,
                critical: critical(mask),
                rejected: reject(mask, statistic),
            }
        })
        .collect()
}

/// Globally rejected comparisons from a full set of local decisions.
fn close<F: Scalar>(m: usize, local: &[LocalDecision<F>]) -> Vec<bool> {
    let mut rejects = vec![true; m];
    for (idx, d) in local.iter().enumerate() {
        if !d.rejected {
            let mask = idx as u64 + 1;
            for (k, r) in rejects.iter_mut().enumerate() {
                if mask >> k & 1 == 1 {
                    *r = false;
                }
            }
        }
    }
    rejects
}

fn check_table<F: Scalar>(z: &[F], table: &CriticalValueTable<F>) -> Result<Vec<F>> {
    check_z(z, table.m())?;
    Ok(signed_statistics(z, table.sided()))
}

/// Closed Dunnett test from the statistics of every comparison.
pub fn closed_test<F: Scalar>(stats: &[ComparisonStats<F>], table: &CriticalValueTable<F>) -> Result<ClosureDecision<F>> {
    closed_test_z(&z_vector(stats)?, table)
}

/// As [`closed_test`] from a raw z-vector in comparison order.
pub fn closed_test_z<F: Scalar>(z: &[F], table: &CriticalValueTable<F>) -> Result<ClosureDecision<F>> {
    let stat = check_table(z, table)?;
    let global_rejects = step_down(&stat, |mask| table.by_mask(mask));
    let local_rejects = lattice(&stat, |mask| Some(table.by_mask(mask)), |mask, s| s > table.by_mask(mask));
    Ok(ClosureDecision {
        procedure: Procedure::Dunnett,
        global_rejects,
        local_rejects,
    })
}

/// Closed Dunnett test evaluated literally over the whole lattice.
pub fn closed_test_lattice<F: Scalar>(z: &[F], table: &CriticalValueTable<F>) -> Result<ClosureDecision<F>> {
    let stat = check_table(z, table)?;
    let local_rejects = lattice(&stat, |mask| Some(table.by_mask(mask)), |mask, s| s > table.by_mask(mask));
    Ok(ClosureDecision {
        procedure: Procedure::Dunnett,
        global_rejects: close(z.len(), &local_rejects),
        local_rejects,
    })
}

/// Single-step decisions and the closure they imply: an intersection is
/// rejected when any of its members is.
fn single_step<F: Scalar>(procedure: Procedure, stat: &[F], global_rejects: Vec<bool>, cut: Option<F>) -> ClosureDecision<F> {
    let local_rejects = lattice(stat, |_| cut, |mask, _| {
        (0..stat.len()).any(|k| mask >> k & 1 == 1 && global_rejects[k])
    });
    ClosureDecision {
        procedure,
        global_rejects,
        local_rejects,
    }
}

fn cut_test<F: Scalar>(procedure: Procedure, z: &[F], cut: F) -> ClosureDecision<F> {
    let stat = signed_statistics(z, Sided::TwoSided);
    let rejects = stat.iter().map(|&s| s > cut).collect();
    single_step(procedure, &stat, rejects, Some(cut))
}

/// Two-sided Bonferroni cut `Phi^-1(1 - alpha / (2m))`.
pub fn bonferroni_cut<F: Scalar>(alpha: F, m: usize) -> F {
    normal::upper_quantile(alpha / (F::lit(2.0) * F::from_usize_lossy(m)))
}

/// Two-sided unadjusted cut `Phi^-1(1 - alpha / 2)`.
pub fn unadjusted_cut<F: Scalar>(alpha: F) -> F {
    normal::upper_quantile(alpha / F::lit(2.0))
}

pub fn bonferroni_test<F: Scalar>(z: &[F], alpha: F, m: usize) -> Result<ClosureDecision<F>> {
    check_alpha(alpha)?;
    check_z(z, m)?;
    Ok(cut_test(Procedure::Bonferroni, z, bonferroni_cut(alpha, m)))
}

pub fn unadjusted_test<F: Scalar>(z: &[F], alpha: F) -> Result<ClosureDecision<F>> {
    check_alpha(alpha)?;
    check_z(z, z.len())?;
    Ok(cut_test(Procedure::Unadjusted, z, unadjusted_cut(alpha)))
}

/// Fixed-sequence test at full two-sided level along `order` (1-based
/// comparison labels), stopping at the first non-rejection.
pub fn gatekeeping_test<F: Scalar>(z: &[F], alpha: F, order: &[usize]) -> Result<ClosureDecision<F>> {
    check_alpha(alpha)?;
    check_z(z, z.len())?;
    let m = z.len();
    let mut seen = vec![false; m];
    if order.len() != m || order.iter().any(|&k| k == 0 || k > m || std::mem::replace(&mut seen[k - 1], true)) {
        return Err(Error::InvalidArgument(format!("order must be a permutation of 1..={m}")));
    }
    let cut = unadjusted_cut(alpha);
    let stat = signed_statistics(z, Sided::TwoSided);
    let mut rejects = vec![false; m];
    for &k in order {
        if stat[k - 1] > cut {
            rejects[k - 1] = true;
        } else {
            break;
        }
    }
    Ok(single_step(Procedure::Gatekeeping, &stat, rejects, None))
}

/// Single-step test of every comparison against `C_F`. Defined for equal
/// group sizes and variances only.
pub fn tukey_global_test<F: Scalar>(z: &[F], config: &TrialConfig<F>, alpha: F, seed: u64) -> Result<ClosureDecision<F>> {
    check_alpha(alpha)?;
    check_z(z, config.m())?;
    let cut = tukey_global_cut(config, alpha, seed)?;
    Ok(cut_test(Procedure::TukeyGlobal, z, cut))
}

/// `C_F` for the single-step global test.
pub fn tukey_global_cut<F: Scalar>(config: &TrialConfig<F>, alpha: F, seed: u64) -> Result<F> {
    check_alpha(alpha)?;
    if config.sided() != Sided::TwoSided || !config.equal_arms() {
        return Err(Error::InvalidConfig(
            "the global range test needs two-sided comparisons with equal group sizes and variances".into(),
        ));
    }
    let stage = config.stages();
    let corr = correlation(config, &ComparisonSet::full(config.m()), stage)?;
    let mut opts = QuantileOptions::default();
    opts.mvn.seed = seed;
    equicoord_quantile_with(&corr, F::one() - alpha, &opts)
}

/// Closed test of the `K(K-1)` directional hypotheses `mu_i <= mu_j`.
pub fn one_sided_closed_test<F: Scalar>(z: &[F], config: &TrialConfig<F>, alpha: F, seed: u64) -> Result<ClosureDecision<F>> {
    if config.sided() != Sided::OneSided {
        return Err(Error::InvalidConfig("one-sided closed test needs a one-sided configuration".into()));
    }
    let table = critical_values(config, alpha, seed)?;
    closed_test_z(z, &table)
}
