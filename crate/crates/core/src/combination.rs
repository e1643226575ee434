//! Flexible multi-stage closed testing with inverse-normal combination.
//!
//! Each stage is analysed on its own cohort: the intersection `K` gets the
//! p-value of `max_{k in K} |Z'_k|` under its null, computed from the
//! stage's actual sample sizes. Stage p-values are merged with weights
//! fixed in advance, so the final p-value stays valid whatever
//! data-dependent changes were made to later stage sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed::{ClosureDecision, LocalDecision, Procedure};
use crate::error::{Error, Result};
use crate::model::{comparisons, pair_correlation, ComparisonSet, CorrelationModel, Sided, TrialConfig};
use crate::mvn::{mvn_rect_with, MvnOptions, Rectangle};
use crate::normal;
use crate::scalar::Scalar;

/// Pre-specified stage weights with `sum w_q^2 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar", try_from = "Vec<F>", into = "Vec<F>")]
pub struct CombinationWeights<F> {
    w: Vec<F>,
}

impl<F: Scalar> CombinationWeights<F> {
    /// Normalises positive raw weights.
    pub fn new(raw: Vec<F>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|&w| !(w.is_finite() && w > F::zero())) {
            return Err(Error::InvalidArgument("weights must be finite and positive".into()));
        }
        let norm = raw.iter().map(|&w| w * w).sum::<F>().sqrt();
        Ok(Self {
            w: raw.into_iter().map(|w| w / norm).collect(),
        })
    }

    /// `w_q` proportional to the square root of the stage information.
    pub fn from_information(info: &[F]) -> Result<Self> {
        Self::new(info.iter().map(|i| i.sqrt()).collect())
    }

    /// Default weights from the planned per-stage patient numbers.
    pub fn planned(config: &TrialConfig<F>) -> Result<Self> {
        let totals: Vec<u64> = config.stage_n().iter().map(|r| r.iter().sum()).collect();
        let info: Vec<F> = (0..totals.len())
            .map(|q| F::lit((totals[q] - if q == 0 { 0 } else { totals[q - 1] }) as f64))
            .collect();
        Self::from_information(&info)
    }

    pub fn stages(&self) -> usize {
        self.w.len()
    }

    pub fn values(&self) -> &[F] {
        &self.w
    }
}

impl<F: Scalar> TryFrom<Vec<F>> for CombinationWeights<F> {
    type Error = Error;

    fn try_from(raw: Vec<F>) -> Result<Self> {
        Self::new(raw)
    }
}

impl<F: Scalar> From<CombinationWeights<F>> for Vec<F> {
    fn from(w: CombinationWeights<F>) -> Self {
        w.w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StagePValue<F> {
    /// 1-based comparison labels.
    pub subset: Vec<usize>,
    /// 1-based stage.
    pub stage: usize,
    pub p: F,
}

/// Null p-value of the intersection statistic at one stage.
///
/// `z` holds the stage-wise statistics of the members of `subset` and
/// `corr` their correlation. Two-sided, `p = 1 - P(all |Z| < z_obs)` with
/// `z_obs = max |z|`; one-sided the box is `(-inf, max z)`.
pub fn stage_pvalue<F: Scalar>(
    subset: &ComparisonSet,
    stage: usize,
    z: &[F],
    corr: &CorrelationModel<F>,
    sided: Sided,
    mvn: &MvnOptions<F>,
) -> Result<StagePValue<F>> {
    let d = subset.len();
    if z.len() != d || corr.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if z.len() != d { z.len() } else { corr.dim() },
        });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("stage statistics must be finite".into()));
    }
    let p = match sided {
        Sided::TwoSided => {
            let obs = z.iter().fold(F::zero(), |a, x| a.max(x.abs()));
            if obs == F::zero() {
                F::one()
            } else if d == 1 {
                F::lit(2.0) * normal::sf(obs)
            } else {
                let inside = mvn_rect_with(&vec![F::zero(); d], corr, &Rectangle::central(d, obs), mvn)?;
                F::one() - inside.value
            }
        }
        Sided::OneSided => {
            let obs = z.iter().copied().fold(F::neg_infinity(), F::max);
            if d == 1 {
                normal::sf(obs)
            } else {
                let inside = mvn_rect_with(&vec![F::zero(); d], corr, &Rectangle::below(d, obs), mvn)?;
                F::one() - inside.value
            }
        }
    };
    Ok(StagePValue {
        subset: subset.labels(),
        stage,
        p: p.max(F::zero()).min(F::one()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CombinedPValue<F> {
    pub p: F,
    /// `sum w_q Phi^-1(1 - p_q)`.
    pub z: F,
    /// Some input was 0 or 1 and was moved inside the open interval.
    pub clamped: bool,
}

/// Weighted inverse-normal combination `1 - Phi(sum w_q Phi^-1(1 - p_q))`.
pub fn combine<F: Scalar>(p: &[F], weights: &CombinationWeights<F>) -> Result<CombinedPValue<F>> {
    if p.len() != weights.stages() {
        return Err(Error::DimensionMismatch {
            expected: weights.stages(),
            got: p.len(),
        });
    }
    if p.iter().any(|&x| !(x >= F::zero() && x <= F::one())) {
        return Err(Error::InvalidArgument("p-values must lie in [0, 1]".into()));
    }
    let tiny = F::min_positive_value().max(F::lit(1e-300));
    let top = F::one() - F::epsilon();
    let mut clamped = false;
    let mut z = F::zero();
    for (&x, &w) in p.iter().zip(weights.values()) {
        let c = x.max(tiny).min(top);
        clamped |= c != x;
        z = z + w * normal::upper_quantile(c);
    }
    Ok(CombinedPValue {
        p: normal::sf(z),
        z,
        clamped,
    })
}

/// Newly recruited patients at one stage and their sample means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StageObservation<F> {
    pub n: Vec<u64>,
    pub means: Vec<F>,
}

/// Pre-registered flexible design. Fields are fixed at construction;
/// later stage sizes are free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FlexibleDesign<F> {
    sigma2: Vec<F>,
    sided: Sided,
    alpha: F,
    weights: CombinationWeights<F>,
}

impl<F: Scalar> FlexibleDesign<F> {
    pub fn new(sigma2: Vec<F>, sided: Sided, alpha: F, weights: CombinationWeights<F>) -> Result<Self> {
        if sigma2.len() < 2 || sigma2.iter().any(|&s| !(s.is_finite() && s > F::zero())) {
            return Err(Error::InvalidConfig("need at least 2 arms with positive variances".into()));
        }
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
        }
        Ok(Self {
            sigma2,
            sided,
            alpha,
            weights,
        })
    }

    /// Design with weights from the planned stage sizes of `config`.
    pub fn planned(config: &TrialConfig<F>, alpha: F) -> Result<Self> {
        Self::new(config.sigma2().to_vec(), config.sided(), alpha, CombinationWeights::planned(config)?)
    }

    pub fn arms(&self) -> usize {
        self.sigma2.len()
    }

    pub fn m(&self) -> usize {
        comparisons(self.arms(), self.sided).len()
    }

    pub fn sided(&self) -> Sided {
        self.sided
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn weights(&self) -> &CombinationWeights<F> {
        &self.weights
    }

    /// Stage-wise z-statistics and their correlation for one cohort.
    pub fn stage_statistics(&self, obs: &StageObservation<F>) -> Result<(Vec<F>, CorrelationModel<F>)> {
        let arms = self.arms();
        for got in [obs.n.len(), obs.means.len()] {
            if got != arms {
                return Err(Error::DimensionMismatch { expected: arms, got });
            }
        }
        if obs.n.contains(&0) {
            return Err(Error::InvalidArgument("every arm needs patients at every stage".into()));
        }
        if obs.means.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("sample means must be finite".into()));
        }
        let v: Vec<F> = self.sigma2.iter().zip(&obs.n).map(|(&s, &n)| s / F::lit(n as f64)).collect();
        let pairs = comparisons(arms, self.sided);
        let z = pairs
            .iter()
            .map(|&(i, j)| (obs.means[i] - obs.means[j]) / (v[i] + v[j]).sqrt())
            .collect();
        Ok((z, pair_correlation(&v, &pairs)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FlexibleDecision<F> {
    /// Local statistics are combined z-values against `Phi^-1(1 - alpha)`.
    pub decision: ClosureDecision<F>,
    /// Combined p per evaluated intersection, in mask order; `None` for
    /// intersections skipped because the closure was already settled.
    pub combined: Vec<Option<CombinedPValue<F>>>,
    /// `stage_p[mask - 1][q]` where evaluated.
    pub stage_p: Vec<Option<Vec<F>>>,
}

struct Stages<F> {
    z: Vec<Vec<F>>,
    corr: Vec<CorrelationModel<F>>,
}

fn intersection_p<F: Scalar>(
    design: &FlexibleDesign<F>,
    stages: &Stages<F>,
    mask: u64,
    mvn: &MvnOptions<F>,
) -> Result<(Vec<F>, CombinedPValue<F>)> {
    let set = ComparisonSet::from_mask(mask);
    let p = (0..stages.z.len())
        .map(|q| {
            let z: Vec<F> = set.members().iter().map(|&k| stages.z[q][k]).collect();
            let corr = stages.corr[q].submatrix(set.members());
            Ok(stage_pvalue(&set, q + 1, &z, &corr, design.sided, mvn)?.p)
        })
        .collect::<Result<Vec<F>>>()?;
    let c = combine(&p, &design.weights)?;
    Ok((p, c))
}

/// Closure over combined p-values at the final analysis.
///
/// With `lazy`, intersections are only evaluated until every elementary
/// decision is settled.
fn run<F: Scalar>(design: &FlexibleDesign<F>, observations: &[StageObservation<F>], mvn: &MvnOptions<F>, lazy: bool) -> Result<FlexibleDecision<F>> {
    if observations.len() != design.weights.stages() {
        return Err(Error::DimensionMismatch {
            expected: design.weights.stages(),
            got: observations.len(),
        });
    }
    let m = design.m();
    if m > crate::subsets::MAX_LATTICE_M {
        return Err(Error::TooManyComparisons {
            m,
            max: crate::subsets::MAX_LATTICE_M,
        });
    }
    let mut stages = Stages {
        z: Vec::new(),
        corr: Vec::new(),
    };
    for obs in observations {
        let (z, c) = design.stage_statistics(obs)?;
        stages.z.push(z);
        stages.corr.push(c);
    }
    let full = (1u64 << m) - 1;
    let n_masks = full as usize;
    let mut results: Vec<Option<(Vec<F>, CombinedPValue<F>)>> = vec![None; n_masks];
    let cut = normal::upper_quantile(design.alpha);
    let rejected = |c: &CombinedPValue<F>| c.p < design.alpha;

    if lazy {
        let eval = |mask: u64, results: &mut Vec<Option<(Vec<F>, CombinedPValue<F>)>>| -> Result<bool> {
            let idx = mask as usize - 1;
            if results[idx].is_none() {
                results[idx] = Some(intersection_p(design, &stages, mask, mvn)?);
            }
            Ok(rejected(&results[idx].as_ref().unwrap().1))
        };
        if eval(full, &mut results)? {
            for k in 0..m {
                for mask in (1..full).rev().filter(|mask| mask >> k & 1 == 1) {
                    if !eval(mask, &mut results)? {
                        break;
                    }
                }
            }
        }
    } else {
        let all = (1..=full)
            .into_par_iter()
            .map(|mask| intersection_p(design, &stages, mask, mvn))
            .collect::<Result<Vec<_>>>()?;
        results = all.into_iter().map(Some).collect();
    }

    let mut global_rejects = vec![true; m];
    for mask in 1..=full {
        let ok = results[mask as usize - 1].as_ref().is_some_and(|(_, c)| rejected(c));
        if !ok {
            for (k, r) in global_rejects.iter_mut().enumerate() {
                if mask >> k & 1 == 1 {
                    *r = false;
                }
            }
        }
    }
    let local_rejects = (1..=full)
        .map(|mask| {
            let r = results[mask as usize - 1].as_ref();
            LocalDecision {
                subset: ComparisonSet::from_mask(mask).labels(),
                statistic: r.map_or(F::nan(), |(_, c)| c.z),
                critical: Some(cut),
                rejected: r.is_some_and(|(_, c)| rejected(c)),
            }
        })
        .collect();
    Ok(FlexibleDecision {
        decision: ClosureDecision {
            procedure: Procedure::Dunnett,
            global_rejects,
            local_rejects,
        },
        combined: results.iter().map(|r| r.as_ref().map(|x| x.1)).collect(),
        stage_p: results.into_iter().map(|r| r.map(|x| x.0)).collect(),
    })
}

/// Closed test on combined p-values for every intersection.
pub fn flexible_closed_test<F: Scalar>(design: &FlexibleDesign<F>, observations: &[StageObservation<F>], seed: u64) -> Result<FlexibleDecision<F>> {
    run(design, observations, &MvnOptions::with_seed(seed), false)
}

/// Global rejections only, evaluating intersections as needed.
pub fn flexible_rejections<F: Scalar>(design: &FlexibleDesign<F>, observations: &[StageObservation<F>], mvn: &MvnOptions<F>) -> Result<Vec<bool>> {
    Ok(run(design, observations, mvn, true)?.decision.global_rejects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed::{closed_test_z, critical_values};
    use approx::assert_abs_diff_eq;

    #[test]
    fn singleton_and_zero() {
        let set = ComparisonSet::new([0], 1).unwrap();
        let corr = CorrelationModel::identity(1);
        let mvn = MvnOptions::default();
        let p = stage_pvalue(&set, 1, &[1.959964], &corr, Sided::TwoSided, &mvn).unwrap();
        assert_abs_diff_eq!(p.p, 0.05, epsilon = 1e-6);
        let full = ComparisonSet::full(3);
        let corr3 = CorrelationModel::exchangeable(3, 0.5).unwrap();
        let p0 = stage_pvalue(&full, 1, &[0.0; 3], &corr3, Sided::TwoSided, &mvn).unwrap();
        assert_eq!(p0.p, 1.0);
    }

    #[test]
    fn combination_examples() {
        let one = CombinationWeights::new(vec![3.0]).unwrap();
        assert_abs_diff_eq!(combine(&[0.037], &one).unwrap().p, 0.037, epsilon = 1e-12);
        let two = CombinationWeights::new(vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(two.values()[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(combine(&[0.5, 0.5], &two).unwrap().p, 0.5, epsilon = 1e-12);
        let c = combine(&[0.05, 0.05], &two).unwrap();
        assert_abs_diff_eq!(c.p, normal::sf(2.0f64.sqrt() * 1.6448536269514722), epsilon = 1e-10);
        assert_abs_diff_eq!(c.p, 0.0101, epsilon = 1e-4);
        assert!(!c.clamped);
        let edge = combine(&[0.0, 1.0], &two).unwrap();
        assert!(edge.clamped && edge.p.is_finite());
        assert!(combine(&[0.5], &two).is_err());
        assert!(combine(&[1.5, 0.5], &two).is_err());
        assert!(CombinationWeights::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn combine_decreases_in_each_p() {
        let w = CombinationWeights::new(vec![1.0, 2.0, 0.5]).unwrap();
        let base = [0.2, 0.3, 0.4];
        let c0 = combine(&base, &w).unwrap().p;
        for q in 0..3 {
            let mut p = base;
            p[q] -= 0.05;
            assert!(combine(&p, &w).unwrap().p < c0);
        }
    }

    #[test]
    fn single_stage_matches_closed_test() {
        let cfg = TrialConfig::equal(3, 1.0, 40, Sided::TwoSided).unwrap();
        let design = FlexibleDesign::planned(&cfg, 0.05).unwrap();
        let table = critical_values(&cfg, 0.05, 3).unwrap();
        for means in [[0.0, 0.0, 0.0], [0.6, 0.0, 0.1], [0.9, 0.0, 0.45], [0.3, -0.3, 0.0]] {
            let obs = StageObservation { n: vec![40; 3], means: means.to_vec() };
            let d = flexible_closed_test(&design, std::slice::from_ref(&obs), 3).unwrap();
            let (z, _) = design.stage_statistics(&obs).unwrap();
            let reference = closed_test_z(&z, &table).unwrap();
            assert_eq!(d.decision.global_rejects, reference.global_rejects, "means {means:?}");
            let lazy = flexible_rejections(&design, &[obs], &MvnOptions::with_seed(3)).unwrap();
            assert_eq!(lazy, reference.global_rejects);
        }
    }

    #[test]
    fn nothing_rejected_without_signal() {
        let design = FlexibleDesign::new(vec![1.0; 3], Sided::TwoSided, 0.05, CombinationWeights::new(vec![1.0, 1.0]).unwrap()).unwrap();
        let flat = StageObservation { n: vec![10; 3], means: vec![0.0; 3] };
        let d = flexible_closed_test(&design, &[flat.clone(), flat.clone()], 0).unwrap();
        assert_eq!(d.decision.num_rejected(), 0);
        assert!(d.combined.iter().all(|c| c.unwrap().p > 0.5));
        assert!(flexible_closed_test(&design, &[flat], 0).is_err());
    }

    #[test]
    fn unequal_stage_sizes_allowed() {
        let design = FlexibleDesign::new(vec![1.0; 3], Sided::TwoSided, 0.05, CombinationWeights::new(vec![1.0, 1.0]).unwrap()).unwrap();
        let s1 = StageObservation { n: vec![20; 3], means: vec![0.8, 0.0, 0.4] };
        let s2 = StageObservation { n: vec![60, 60, 30], means: vec![0.7, 0.0, 0.35] };
        let d = flexible_closed_test(&design, &[s1, s2], 1).unwrap();
        assert!(d.decision.global_rejects[0]);
    }
}
