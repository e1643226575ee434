//! Arms, pairwise comparisons and their joint normal model.
//!
//! Arms are labelled `1..=K` and comparisons `1..=m` in the public
//! index functions. Everything else in the crate works with 0-based
//! positions: comparison `k` (0-based) contrasts arms `comparisons()[k]`.
//!
//! Two-sided designs use the `m = K(K-1)/2` unordered pairs `i < j` in
//! lexicographic order. One-sided designs use the `K(K-1)` ordered pairs
//! `i != j`, again lexicographic, so comparison `(i, j)` tests `mu_i > mu_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sided {
    OneSided,
    TwoSided,
}

/// Number of elementary hypotheses for `arms` treatments.
pub fn num_comparisons(arms: usize, sided: Sided) -> usize {
    match sided {
        Sided::TwoSided => arms * arms.saturating_sub(1) / 2,
        Sided::OneSided => arms * arms.saturating_sub(1),
    }
}

/// A comparison index together with the arms it contrasts (all 1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairIndex {
    pub k: usize,
    pub i: usize,
    pub j: usize,
}

/// Maps the arm pair `(i, j)` to its comparison index.
///
/// Two-sided: `k = (i-1)K - i(i-1)/2 + (j-i)`, contiguous over `1..=K(K-1)/2`.
/// One-sided: `k = (i-1)(K-1) + j'` where `j' = j` for `j < i` and `j - 1` otherwise.
pub fn pair_to_index(i: usize, j: usize, arms: usize, sided: Sided) -> Result<PairIndex> {
    if arms < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 arms, got {arms}")));
    }
    if i == 0 || j == 0 || i > arms || j > arms {
        return Err(Error::InvalidArgument(format!(
            "arm labels ({i}, {j}) outside 1..={arms}"
        )));
    }
    if i == j {
        return Err(Error::InvalidArgument(format!("arm {i} compared with itself")));
    }
    let k = match sided {
        Sided::TwoSided => {
            if i > j {
                return Err(Error::InvalidArgument(format!(
                    "two-sided comparisons need i < j, got ({i}, {j})"
                )));
            }
            (i - 1) * arms - i * (i - 1) / 2 + (j - i)
        }
        Sided::OneSided => {
            let jj = if j < i { j } else { j - 1 };
            (i - 1) * (arms - 1) + jj
        }
    };
    Ok(PairIndex { k, i, j })
}

/// Inverse of [`pair_to_index`].
pub fn index_to_pair(k: usize, arms: usize, sided: Sided) -> Result<(usize, usize)> {
    let m = num_comparisons(arms, sided);
    if arms < 2 || k == 0 || k > m {
        return Err(Error::InvalidArgument(format!(
            "comparison index {k} outside 1..={m}"
        )));
    }
    match sided {
        Sided::TwoSided => {
            let mut start = 0;
            for i in 1..arms {
                let row = arms - i;
                if k <= start + row {
                    return Ok((i, i + (k - start)));
                }
                start += row;
            }
            unreachable!("index within range always resolves")
        }
        Sided::OneSided => {
            let i = (k - 1) / (arms - 1) + 1;
            let jj = (k - 1) % (arms - 1) + 1;
            let j = if jj < i { jj } else { jj + 1 };
            Ok((i, j))
        }
    }
}

/// 0-based arm pairs in comparison-index order.
pub fn comparisons(arms: usize, sided: Sided) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(num_comparisons(arms, sided));
    for i in 0..arms {
        for j in 0..arms {
            let keep = match sided {
                Sided::TwoSided => i < j,
                Sided::OneSided => i != j,
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct RawTrialConfig<F> {
    #[serde(rename = "K")]
    arms: usize,
    sigma2: Vec<F>,
    alloc: Vec<F>,
    stage_n: Vec<Vec<u64>>,
    sided: Sided,
}

/// Design of a (possibly multi-stage) multi-arm trial with known variances.
///
/// `stage_n[q][i]` is the cumulative sample size of arm `i` at analysis
/// `q + 1`. Allocation proportions are constant across stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "F: Scalar",
    try_from = "RawTrialConfig<F>",
    into = "RawTrialConfig<F>"
)]
pub struct TrialConfig<F> {
    arms: usize,
    sigma2: Vec<F>,
    alloc: Vec<F>,
    stage_n: Vec<Vec<u64>>,
    sided: Sided,
}

impl<F: Scalar> TryFrom<RawTrialConfig<F>> for TrialConfig<F> {
    type Error = Error;

    fn try_from(raw: RawTrialConfig<F>) -> Result<Self> {
        if raw.sigma2.len() != raw.arms {
            return Err(Error::InvalidConfig(format!(
                "K = {} but {} variances given",
                raw.arms,
                raw.sigma2.len()
            )));
        }
        TrialConfig::new(raw.sigma2, raw.alloc, raw.stage_n, raw.sided)
    }
}

impl<F: Scalar> From<TrialConfig<F>> for RawTrialConfig<F> {
    fn from(c: TrialConfig<F>) -> Self {
        RawTrialConfig {
            arms: c.arms,
            sigma2: c.sigma2,
            alloc: c.alloc,
            stage_n: c.stage_n,
            sided: c.sided,
        }
    }
}

impl<F: Scalar> TrialConfig<F> {
    pub fn new(
        sigma2: Vec<F>,
        alloc: Vec<F>,
        stage_n: Vec<Vec<u64>>,
        sided: Sided,
    ) -> Result<Self> {
        Self::build(sigma2, alloc, stage_n, sided, true)
    }

    fn build(
        sigma2: Vec<F>,
        alloc: Vec<F>,
        stage_n: Vec<Vec<u64>>,
        sided: Sided,
        strict_alloc: bool,
    ) -> Result<Self> {
        let arms = sigma2.len();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if arms < 2 {
            return bad(format!("need at least 2 arms, got {arms}"));
        }
        if sigma2.iter().any(|&v| !(v.is_finite() && v > F::zero())) {
            return bad("variances must be finite and positive".into());
        }
        if alloc.len() != arms {
            return bad(format!("{} allocation ratios for {arms} arms", alloc.len()));
        }
        if alloc.iter().any(|&r| !(r.is_finite() && r > F::zero())) {
            return bad("allocation ratios must be finite and positive".into());
        }
        let total: F = alloc.iter().copied().sum();
        if (total - F::one()).abs() > F::epsilon().sqrt() {
            return bad(format!("allocation ratios sum to {total}, not 1"));
        }
        if stage_n.is_empty() {
            return bad("at least one stage required".into());
        }
        for (q, row) in stage_n.iter().enumerate() {
            if row.len() != arms {
                return bad(format!("stage {} lists {} sizes for {arms} arms", q + 1, row.len()));
            }
            if row.contains(&0) {
                return bad(format!("stage {} has an arm with zero patients", q + 1));
            }
            if q > 0 && row.iter().zip(&stage_n[q - 1]).any(|(a, b)| a <= b) {
                return bad(format!("cumulative sizes must increase at stage {}", q + 1));
            }
        }
        let last = stage_n.last().unwrap();
        let last_total: u128 = last.iter().map(|&n| n as u128).sum();
        for (q, row) in stage_n.iter().enumerate() {
            let row_total: u128 = row.iter().map(|&n| n as u128).sum();
            let proportional = row
                .iter()
                .zip(last)
                .all(|(&a, &b)| a as u128 * last_total == b as u128 * row_total);
            if !proportional {
                return bad(format!(
                    "allocation at stage {} differs from the final stage",
                    q + 1
                ));
            }
        }
        let slack = F::lit(arms as f64 / last_total as f64 + 1e-6);
        for (i, (&r, &n)) in alloc.iter().zip(last).enumerate().filter(|_| strict_alloc) {
            let observed = F::lit(n as f64 / last_total as f64);
            if (observed - r).abs() > slack {
                return bad(format!(
                    "arm {} has allocation {r} but {observed} of the patients",
                    i + 1
                ));
            }
        }
        Ok(Self {
            arms,
            sigma2,
            alloc,
            stage_n,
            sided,
        })
    }

    /// Single-stage design with common variance and equal arm sizes.
    pub fn equal(arms: usize, sigma2: F, n_per_arm: u64, sided: Sided) -> Result<Self> {
        Self::equal_staged(arms, sigma2, &[n_per_arm], sided)
    }

    /// Multi-stage design with common variance; `cumulative[q]` patients per
    /// arm by analysis `q + 1`.
    pub fn equal_staged(arms: usize, sigma2: F, cumulative: &[u64], sided: Sided) -> Result<Self> {
        let share = F::one() / F::from_usize_lossy(arms);
        Self::new(
            vec![sigma2; arms],
            vec![share; arms],
            cumulative.iter().map(|&n| vec![n; arms]).collect(),
            sided,
        )
    }

    /// Single-stage copy sized for `n_total` patients: arm `i` receives
    /// `ceil(alloc_i * n_total)`.
    pub fn with_total_n(&self, n_total: u64) -> Result<Self> {
        let sizes: Vec<u64> = self
            .alloc
            .iter()
            .map(|&r| (r.as_f64() * n_total as f64 - 1e-9).ceil().max(1.0) as u64)
            .collect();
        // ceil() can shift the realised proportions slightly for small totals
        Self::build(self.sigma2.clone(), self.alloc.clone(), vec![sizes], self.sided, false)
    }

    /// Copy with a different sidedness.
    pub fn with_sided(&self, sided: Sided) -> Self {
        Self {
            sided,
            ..self.clone()
        }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn sigma2(&self) -> &[F] {
        &self.sigma2
    }

    pub fn alloc(&self) -> &[F] {
        &self.alloc
    }

    pub fn sided(&self) -> Sided {
        self.sided
    }

    pub fn stages(&self) -> usize {
        self.stage_n.len()
    }

    /// Cumulative per-arm sizes at analysis `stage` (1-based).
    pub fn n_at(&self, stage: usize) -> Result<&[u64]> {
        self.check_stage(stage)?;
        Ok(&self.stage_n[stage - 1])
    }

    pub fn stage_n(&self) -> &[Vec<u64>] {
        &self.stage_n
    }

    pub fn final_n(&self) -> &[u64] {
        self.stage_n.last().unwrap()
    }

    pub fn total_n(&self) -> u64 {
        self.final_n().iter().sum()
    }

    /// Number of elementary hypotheses.
    pub fn m(&self) -> usize {
        num_comparisons(self.arms, self.sided)
    }

    pub fn comparisons(&self) -> Vec<(usize, usize)> {
        comparisons(self.arms, self.sided)
    }

    /// Information times `n^(q) / n^(Q)`.
    pub fn info_times(&self) -> Vec<F> {
        let last = self.total_n() as f64;
        self.stage_n
            .iter()
            .map(|row| F::lit(row.iter().sum::<u64>() as f64 / last))
            .collect()
    }

    /// `sigma_i^2 / n_i` for every arm at analysis `stage`.
    pub fn mean_variances(&self, stage: usize) -> Result<Vec<F>> {
        let n = self.n_at(stage)?;
        Ok(self
            .sigma2
            .iter()
            .zip(n)
            .map(|(&s, &n)| s / F::lit(n as f64))
            .collect())
    }

    /// True when `sigma_i^2 / n_i` is the same for every arm.
    pub fn equal_precision(&self) -> bool {
        let v = self.mean_variances(self.stages()).unwrap();
        let tol = F::lit(1e-9) * v[0];
        v.iter().all(|&x| (x - v[0]).abs() <= tol)
    }

    /// True when every arm has the same variance and the same size.
    pub fn equal_arms(&self) -> bool {
        let n = self.final_n();
        self.sigma2.iter().all(|&s| s == self.sigma2[0]) && n.iter().all(|&x| x == n[0])
    }

    pub(crate) fn check_stage(&self, stage: usize) -> Result<()> {
        if stage == 0 || stage > self.stages() {
            Err(Error::InvalidArgument(format!(
                "stage {stage} outside 1..={}",
                self.stages()
            )))
        } else {
            Ok(())
        }
    }
}

/// Estimated difference, its standard error and z-statistic for one comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ComparisonStats<F> {
    /// 1-based comparison index.
    pub index: usize,
    /// 1-based arm labels; the statistic estimates `mu_i - mu_j`.
    pub i: usize,
    pub j: usize,
    pub theta_hat: F,
    pub sigma_p: F,
    pub z: F,
    /// 1-based analysis the statistic belongs to.
    pub stage: usize,
}

/// Standard errors `sigma_p,k` at analysis `stage`, in comparison order.
pub fn standard_errors<F: Scalar>(config: &TrialConfig<F>, stage: usize) -> Result<Vec<F>> {
    let v = config.mean_variances(stage)?;
    Ok(config
        .comparisons()
        .into_iter()
        .map(|(i, j)| (v[i] + v[j]).sqrt())
        .collect())
}

/// Pairwise z-statistics from per-arm sample means observed at `stage`.
pub fn z_statistics<F: Scalar>(
    config: &TrialConfig<F>,
    means: &[F],
    stage: usize,
) -> Result<Vec<ComparisonStats<F>>> {
    if means.len() != config.arms() {
        return Err(Error::DimensionMismatch {
            expected: config.arms(),
            got: means.len(),
        });
    }
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument("sample means must be finite".into()));
    }
    let se = standard_errors(config, stage)?;
    Ok(config
        .comparisons()
        .into_iter()
        .zip(se)
        .enumerate()
        .map(|(k, ((i, j), sigma_p))| {
            let theta_hat = means[i] - means[j];
            ComparisonStats {
                index: k + 1,
                i: i + 1,
                j: j + 1,
                theta_hat,
                sigma_p,
                z: theta_hat / sigma_p,
                stage,
            }
        })
        .collect())
}

/// A nonempty, sorted set of 0-based comparison positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComparisonSet {
    members: Vec<usize>,
}

impl ComparisonSet {
    pub fn new(members: impl IntoIterator<Item = usize>, m: usize) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty comparison set".into()));
        }
        if let Some(&bad) = members.iter().find(|&&k| k >= m) {
            return Err(Error::InvalidArgument(format!(
                "comparison {} outside 1..={m}",
                bad + 1
            )));
        }
        Ok(Self { members })
    }

    pub fn full(m: usize) -> Self {
        Self {
            members: (0..m).collect(),
        }
    }

    /// Set whose bit `k` is set in `mask`.
    pub fn from_mask(mask: u64) -> Self {
        assert!(mask != 0, "empty comparison set");
        Self {
            members: (0..64).filter(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> u64 {
        self.members.iter().fold(0, |acc, &k| acc | 1 << k)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// 1-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.members.iter().map(|k| k + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }
}

/// Symmetric unit-diagonal matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationModel<F> {
    dim: usize,
    values: Vec<F>,
}

impl<F: Scalar> CorrelationModel<F> {
    pub fn new(dim: usize, values: Vec<F>) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: values.len(),
            });
        }
        let tol = F::lit(1e3) * F::epsilon();
        for r in 0..dim {
            if (values[r * dim + r] - F::one()).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {} is {}, not 1",
                    r + 1,
                    values[r * dim + r]
                )));
            }
            for c in 0..r {
                let (a, b) = (values[r * dim + c], values[c * dim + r]);
                if !a.is_finite() || (a - b).abs() > tol || a.abs() > F::one() + tol {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({}, {}) is not a valid symmetric correlation",
                        r + 1,
                        c + 1
                    )));
                }
            }
        }
        Ok(Self { dim, values })
    }

    pub fn identity(dim: usize) -> Self {
        let mut values = vec![F::zero(); dim * dim];
        for d in 0..dim {
            values[d * dim + d] = F::one();
        }
        Self { dim, values }
    }

    /// Every off-diagonal entry equal to `rho`.
    pub fn exchangeable(dim: usize, rho: F) -> Result<Self> {
        let values = (0..dim * dim)
            .map(|x| if x / dim == x % dim { F::one() } else { rho })
            .collect();
        Self::new(dim, values)
    }

    pub(crate) fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut values = vec![F::zero(); dim * dim];
        for r in 0..dim {
            values[r * dim + r] = F::one();
            for c in 0..r {
                let v = f(r, c).max(-F::one()).min(F::one());
                values[r * dim + c] = v;
                values[c * dim + r] = v;
            }
        }
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.values[r * self.dim + c]
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Principal submatrix on `idx`, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |r, c| self.get(idx[r], idx[c]))
    }

    /// Eigenvalues by cyclic Jacobi rotations, ascending.
    pub fn eigenvalues(&self) -> Vec<F> {
        let n = self.dim;
        let mut a: Vec<F> = self.values.clone();
        let two = F::lit(2.0);
        for _sweep in 0..100 {
            let off: F = (0..n)
                .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
                .map(|(r, c)| a[r * n + c] * a[r * n + c])
                .sum();
            if off <= F::epsilon() * F::epsilon() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == F::zero() {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                    let c = F::one() / (t * t + F::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<F> = (0..n).map(|d| a[d * n + d]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }
}

/// Covariance of `mu_hat_a1 - mu_hat_b1` and `mu_hat_a2 - mu_hat_b2` given
/// the variance of each arm mean over the shared patients.
#[inline]
pub(crate) fn difference_cov<F: Scalar>(v: &[F], (i1, j1): (usize, usize), (i2, j2): (usize, usize)) -> F {
    let mut c = F::zero();
    if i1 == i2 {
        c = c + v[i1];
    }
    if j1 == j2 {
        c = c + v[j1];
    }
    if i1 == j2 {
        c = c - v[i1];
    }
    if j1 == i2 {
        c = c - v[j1];
    }
    c
}

/// Correlation of the z-statistics for `pairs` when arm means have
/// variances `v` (`sigma_i^2 / n_i`).
pub fn pair_correlation<F: Scalar>(v: &[F], pairs: &[(usize, usize)]) -> CorrelationModel<F> {
    let sd: Vec<F> = pairs.iter().map(|&(i, j)| (v[i] + v[j]).sqrt()).collect();
    CorrelationModel::from_fn(pairs.len(), |r, c| {
        difference_cov(v, pairs[r], pairs[c]) / (sd[r] * sd[c])
    })
}

/// Correlation of `(Z_k)_{k in set}` at analysis `stage`.
pub fn correlation<F: Scalar>(
    config: &TrialConfig<F>,
    set: &ComparisonSet,
    stage: usize,
) -> Result<CorrelationModel<F>> {
    let all = config.comparisons();
    if let Some(&k) = set.members().iter().find(|&&k| k >= all.len()) {
        return Err(Error::InvalidArgument(format!(
            "comparison {} outside 1..={}",
            k + 1,
            all.len()
        )));
    }
    let pairs: Vec<_> = set.members().iter().map(|&k| all[k]).collect();
    Ok(pair_correlation(&config.mean_variances(stage)?, &pairs))
}
