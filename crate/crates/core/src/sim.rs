//! Replicated trial simulation.
//!
//! Replicate `r` draws from its own ChaCha stream (`seed`, stream `r`), so
//! its data do not depend on the number of replicates or on scheduling.
//! Work is split into fixed chunks whose partial results are combined in
//! chunk order, which keeps floating-point totals reproducible too.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed::{bonferroni_cut, critical_values_with, signed_statistics, step_down, unadjusted_cut, CriticalValueTable};
use crate::combination::{flexible_rejections, CombinationWeights, FlexibleDesign, StageObservation};
use crate::design::{delta_for_power, MeanConfig};
use crate::error::{Error, Result};
use crate::model::{standard_errors, Sided, TrialConfig};
use crate::mvn::{MvnOptions, QuantileOptions};
use crate::scalar::Scalar;
use crate::sequential::{bonferroni_gs_boundaries, generalised_boundaries, gs_boundaries_with, gs_closed_test, BoundaryKind, BoundarySchedule, StageData};
use crate::spending::{SpendingFunction, SpendingSchedule};
use crate::stats::proportion_se;

const CHUNK: u64 = 1024;

/// Random stream of replicate `replicate` under master seed `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Fills `out` with standard normal draws.
#[inline]
pub fn fill_normal<F: Scalar>(rng: &mut ChaCha8Rng, out: &mut [F])
where
    StandardNormal: Distribution<F>,
{
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

/// Runs `body` for every replicate, folding into per-chunk accumulators
/// that are merged in chunk order.
pub fn map_replicates<A, Init, Body, Merge>(replicates: u64, init: Init, body: Body, merge: Merge) -> A
where
    A: Send,
    Init: Fn() -> A + Sync,
    Body: Fn(&mut A, u64) + Sync,
    Merge: Fn(&mut A, A),
{
    let chunks = replicates.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for r in c * CHUNK..((c + 1) * CHUNK).min(replicates) {
                body(&mut acc, r);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// Procedures the simulator can run side by side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureSpec {
    /// Closed all-pairwise Dunnett test (group-sequential when staged).
    Dunnett,
    /// Every comparison against the full-family value `C_F`.
    Global,
    Bonferroni,
    Unadjusted,
    /// Fixed sequence at full level; single-stage only.
    Gatekeeping,
    /// Inverse-normal combination closed test; staged only.
    Combination,
}

impl ProcedureSpec {
    pub fn label(self) -> &'static str {
        match self {
            ProcedureSpec::Dunnett => "Dunnett",
            ProcedureSpec::Global => "Global",
            ProcedureSpec::Bonferroni => "Bonferroni",
            ProcedureSpec::Unadjusted => "Unadjusted",
            ProcedureSpec::Gatekeeping => "Gatekeeping",
            ProcedureSpec::Combination => "Combination",
        }
    }
}

/// Multi-stage settings. Without one, only the final analysis of the
/// configuration is simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StagedSpec<F> {
    #[serde(default)]
    pub spending: Option<SpendingFunction>,
    /// Combination weights; defaults to the planned stage information.
    #[serde(default)]
    pub weights: Option<Vec<F>>,
    /// Stop recruiting an arm once all its comparisons are rejected.
    #[serde(default = "yes")]
    pub drop_arms: bool,
}

fn yes() -> bool {
    true
}

fn default_alpha<F: Scalar>() -> F {
    F::lit(0.05)
}

fn default_replicates() -> u64 {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SimScenario<F> {
    pub config: TrialConfig<F>,
    pub means: MeanConfig<F>,
    pub procedures: Vec<ProcedureSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: F,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    /// 1-based comparison order for gatekeeping; defaults to `1..=m`.
    #[serde(default)]
    pub gatekeeping_order: Option<Vec<usize>>,
    #[serde(default)]
    pub staged: Option<StagedSpec<F>>,
}

impl<F: Scalar> SimScenario<F> {
    pub fn new(config: TrialConfig<F>, means: MeanConfig<F>, procedures: Vec<ProcedureSpec>, replicates: u64, seed: u64) -> Self {
        Self {
            config,
            means,
            procedures,
            alpha: default_alpha(),
            replicates,
            seed,
            gatekeeping_order: None,
            staged: None,
        }
    }
}

/// Simulated operating characteristics of one procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureOc {
    pub procedure: ProcedureSpec,
    pub label: String,
    /// P(at least one rejection).
    pub reject_any: f64,
    pub reject_any_se: f64,
    /// P(exactly r rejections), r = 0..=m.
    pub per_count: Vec<f64>,
    pub per_count_se: Vec<f64>,
    /// P(H_k rejected).
    pub per_hypothesis: Vec<f64>,
    /// P(some true null rejected); absent when every null is false.
    pub fwer: Option<f64>,
    pub fwer_se: Option<f64>,
    /// Staged runs: mean number of patients recruited.
    pub mean_sample_size: Option<f64>,
    /// Staged runs: P(full intersection rejected by analysis q).
    pub cumulative_global: Option<Vec<f64>>,
    /// Replicates where this procedure rejects something Dunnett does not;
    /// present when Dunnett is simulated too.
    pub not_in_dunnett: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub replicates: u64,
    pub seed: u64,
    pub alpha: f64,
    pub procedures: Vec<ProcedureOc>,
}

impl OperatingCharacteristics {
    pub fn get(&self, procedure: ProcedureSpec) -> Option<&ProcedureOc> {
        self.procedures.iter().find(|p| p.procedure == procedure)
    }
}

enum Prepared<F> {
    Closed(CriticalValueTable<F>),
    Cut(F),
    Gate(Vec<usize>, F),
    Staged(BoundarySchedule<F>),
    Flexible(FlexibleDesign<F>),
}

#[derive(Clone)]
struct Tally {
    counts: Vec<u64>,
    per_k: Vec<u64>,
    fwer: u64,
    patients: u64,
    global_by_stage: Vec<u64>,
    not_in_dunnett: u64,
}

impl Tally {
    fn new(m: usize, stages: usize) -> Self {
        Self {
            counts: vec![0; m + 1],
            per_k: vec![0; m],
            fwer: 0,
            patients: 0,
            global_by_stage: vec![0; stages],
            not_in_dunnett: 0,
        }
    }

    fn merge(&mut self, o: Tally) {
        let add = |a: &mut Vec<u64>, b: Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.counts, o.counts);
        add(&mut self.per_k, o.per_k);
        add(&mut self.global_by_stage, o.global_by_stage);
        self.fwer += o.fwer;
        self.patients += o.patients;
        self.not_in_dunnett += o.not_in_dunnett;
    }
}

struct Outcome {
    rejects: Vec<bool>,
    patients: u64,
    global_stage: Option<usize>,
}

fn prepare<F: Scalar>(scenario: &SimScenario<F>) -> Result<Vec<Prepared<F>>> {
    let cfg = &scenario.config;
    let alpha = scenario.alpha;
    let m = cfg.m();
    let two_sided = cfg.sided() == Sided::TwoSided;
    let mut q = QuantileOptions::default();
    q.mvn.seed = scenario.seed;
    let needs_two_sided = |p: ProcedureSpec| {
        if two_sided {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{} needs two-sided comparisons", p.label())))
        }
    };
    let mut table: Option<CriticalValueTable<F>> = None;
    let mut table = |cfg: &TrialConfig<F>| -> Result<CriticalValueTable<F>> {
        if table.is_none() {
            table = Some(critical_values_with(cfg, cfg.stages(), alpha, &q)?);
        }
        Ok(table.clone().unwrap())
    };
    let mut out = Vec::with_capacity(scenario.procedures.len());
    match &scenario.staged {
        None => {
            let single = TrialConfig::new(cfg.sigma2().to_vec(), cfg.alloc().to_vec(), vec![cfg.final_n().to_vec()], cfg.sided())?;
            for &p in &scenario.procedures {
                out.push(match p {
                    ProcedureSpec::Dunnett => Prepared::Closed(table(&single)?),
                    ProcedureSpec::Global => {
                        needs_two_sided(p)?;
                        Prepared::Cut(table(&single)?.global())
                    }
                    ProcedureSpec::Bonferroni => {
                        needs_two_sided(p)?;
                        Prepared::Cut(bonferroni_cut(alpha, m))
                    }
                    ProcedureSpec::Unadjusted => {
                        needs_two_sided(p)?;
                        Prepared::Cut(unadjusted_cut(alpha))
                    }
                    ProcedureSpec::Gatekeeping => {
                        needs_two_sided(p)?;
                        let order = scenario.gatekeeping_order.clone().unwrap_or_else(|| (1..=m).collect());
                        let mut seen = vec![false; m];
                        if order.len() != m || order.iter().any(|&k| k == 0 || k > m || std::mem::replace(&mut seen[k - 1], true)) {
                            return Err(Error::InvalidArgument(format!("gatekeeping order must be a permutation of 1..={m}")));
                        }
                        Prepared::Gate(order.iter().map(|k| k - 1).collect(), unadjusted_cut(alpha))
                    }
                    ProcedureSpec::Combination => {
                        return Err(Error::InvalidArgument("the combination test needs a staged scenario".into()))
                    }
                });
            }
        }
        Some(staged) => {
            let schedule = match &staged.spending {
                Some(f) => Some(SpendingSchedule::for_config(f.clone(), alpha, cfg)?),
                None => None,
            };
            let schedule = |p: ProcedureSpec| {
                schedule
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument(format!("{} needs a spending function", p.label())))
            };
            for &p in &scenario.procedures {
                out.push(match p {
                    ProcedureSpec::Dunnett => Prepared::Staged(gs_boundaries_with(cfg, &schedule(p)?, &q)?),
                    ProcedureSpec::Global => Prepared::Staged(generalised_boundaries(cfg, &schedule(p)?, scenario.seed)?),
                    ProcedureSpec::Bonferroni => Prepared::Staged(bonferroni_gs_boundaries(cfg, &schedule(p)?, scenario.seed)?),
                    ProcedureSpec::Unadjusted => {
                        // per-comparison spending at the full level
                        let s = schedule(p)?;
                        let one = SpendingSchedule::new(s.function.clone(), s.alpha * F::from_usize_lossy(m), s.info_times.clone());
                        match one {
                            Ok(one) => Prepared::Staged(bonferroni_gs_boundaries(cfg, &one, scenario.seed)?),
                            Err(_) => return Err(Error::InvalidArgument("alpha * m must stay below 1 for the unadjusted staged test".into())),
                        }
                    }
                    ProcedureSpec::Gatekeeping => {
                        return Err(Error::InvalidArgument("gatekeeping is simulated single-stage only".into()))
                    }
                    ProcedureSpec::Combination => {
                        let weights = match &staged.weights {
                            Some(w) => CombinationWeights::new(w.clone())?,
                            None => CombinationWeights::planned(cfg)?,
                        };
                        if weights.stages() != cfg.stages() {
                            return Err(Error::DimensionMismatch {
                                expected: cfg.stages(),
                                got: weights.stages(),
                            });
                        }
                        Prepared::Flexible(FlexibleDesign::new(cfg.sigma2().to_vec(), cfg.sided(), alpha, weights)?)
                    }
                });
            }
        }
    }
    Ok(out)
}

/// Patients recruited when arms leave after all their comparisons are
/// rejected and the trial ends once every comparison is.
fn recruited<F: Scalar>(cfg: &TrialConfig<F>, stopped_at: &[Option<usize>], n_stage: &[Vec<u64>], drop_arms: bool) -> u64 {
    let q_max = cfg.stages();
    let pairs = cfg.comparisons();
    let end = stopped_at.iter().map(|s| s.unwrap_or(q_max)).max().unwrap_or(q_max);
    (0..cfg.arms())
        .map(|a| {
            let mut last = end;
            if drop_arms {
                let own = pairs.iter().zip(stopped_at).filter(|((i, j), _)| *i == a || *j == a);
                if let Some(d) = own.map(|(_, s)| s.unwrap_or(q_max)).max() {
                    last = last.min(d);
                }
            }
            n_stage[..last].iter().map(|row| row[a]).sum::<u64>()
        })
        .sum()
}

/// Simulates `scenario`, applying every procedure to the same trials.
pub fn run_scenario<F: Scalar>(scenario: &SimScenario<F>) -> Result<OperatingCharacteristics>
where
    StandardNormal: Distribution<F>,
{
    if scenario.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    if scenario.procedures.is_empty() {
        return Err(Error::InvalidArgument("no procedures to simulate".into()));
    }
    if !(scenario.alpha > F::zero() && scenario.alpha < F::one()) {
        return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", scenario.alpha)));
    }
    let cfg = &scenario.config;
    let means = &scenario.means;
    if means.mu.len() != cfg.arms() {
        return Err(Error::DimensionMismatch {
            expected: cfg.arms(),
            got: means.mu.len(),
        });
    }
    let prepared = prepare(scenario)?;
    let m = cfg.m();
    let arms = cfg.arms();
    let pairs = cfg.comparisons();
    let staged = scenario.staged.as_ref();
    let stages = if staged.is_some() { cfg.stages() } else { 1 };
    let true_null: Vec<bool> = pairs
        .iter()
        .map(|&(i, j)| match cfg.sided() {
            Sided::TwoSided => means.mu[i] == means.mu[j],
            Sided::OneSided => means.mu[i] <= means.mu[j],
        })
        .collect();
    let dunnett = scenario.procedures.iter().position(|&p| p == ProcedureSpec::Dunnett);
    let n_stage: Vec<Vec<u64>> = if staged.is_some() {
        (0..stages)
            .map(|q| (0..arms).map(|i| cfg.stage_n()[q][i] - if q == 0 { 0 } else { cfg.stage_n()[q - 1][i] }).collect())
            .collect()
    } else {
        vec![cfg.final_n().to_vec()]
    };
    let sd: Vec<Vec<F>> = n_stage
        .iter()
        .map(|row| cfg.sigma2().iter().zip(row).map(|(&s, &n)| (s / F::lit(n as f64)).sqrt()).collect())
        .collect();
    let se = standard_errors(cfg, cfg.stages())?;
    let mvn = MvnOptions::with_seed(scenario.seed);
    let drop_arms = staged.is_some_and(|s| s.drop_arms);
    let total_patients: u64 = cfg.final_n().iter().sum();

    let simulate = |r: u64| -> Result<Vec<Outcome>> {
        let mut rng = replicate_rng(scenario.seed, r);
        let mut e = vec![F::zero(); arms];
        let mut stage_means = Vec::with_capacity(stages);
        for q in 0..stages {
            fill_normal(&mut rng, &mut e);
            stage_means.push((0..arms).map(|i| means.mu[i] + sd[q][i] * e[i]).collect::<Vec<F>>());
        }
        let mut outcomes = Vec::with_capacity(prepared.len());
        if staged.is_none() {
            let xbar = &stage_means[0];
            let z: Vec<F> = pairs.iter().zip(&se).map(|(&(i, j), &s)| (xbar[i] - xbar[j]) / s).collect();
            let stat = signed_statistics(&z, cfg.sided());
            for p in &prepared {
                let rejects = match p {
                    Prepared::Closed(t) => step_down(&stat, |mask| t.by_mask(mask)),
                    Prepared::Cut(c) => stat.iter().map(|&s| s > *c).collect(),
                    Prepared::Gate(order, c) => {
                        let mut out = vec![false; m];
                        for &k in order {
                            if stat[k] > *c {
                                out[k] = true;
                            } else {
                                break;
                            }
                        }
                        out
                    }
                    Prepared::Staged(_) | Prepared::Flexible(_) => unreachable!("single-stage preparation"),
                };
                let global_stage = rejects.iter().any(|&x| x).then_some(1);
                outcomes.push(Outcome {
                    rejects,
                    patients: total_patients,
                    global_stage,
                });
            }
        } else {
            let data = StageData::from_stage_means(cfg, &stage_means)?;
            for p in &prepared {
                outcomes.push(match p {
                    Prepared::Staged(b) => {
                        let d = gs_closed_test(&data, b)?;
                        Outcome {
                            patients: recruited(cfg, &d.stopped_at, &n_stage, drop_arms),
                            global_stage: if b.kind() == BoundaryKind::Closed {
                                d.global_stage()
                            } else {
                                d.stopped_at.iter().flatten().min().copied()
                            },
                            rejects: d.decision.global_rejects,
                        }
                    }
                    Prepared::Flexible(design) => {
                        let obs: Vec<StageObservation<F>> = stage_means
                            .iter()
                            .zip(&n_stage)
                            .map(|(x, n)| StageObservation { n: n.clone(), means: x.clone() })
                            .collect();
                        let rejects = flexible_rejections(design, &obs, &mvn)?;
                        let global_stage = rejects.iter().any(|&x| x).then_some(stages);
                        Outcome {
                            rejects,
                            patients: total_patients,
                            global_stage,
                        }
                    }
                    _ => unreachable!("staged preparation"),
                });
            }
        }
        Ok(outcomes)
    };

    let n_proc = prepared.len();
    let (tallies, failure) = map_replicates(
        scenario.replicates,
        || (vec![Tally::new(m, stages); n_proc], None::<(u64, Error)>),
        |(tallies, failure), r| {
            if failure.is_some() {
                return;
            }
            let outcomes = match simulate(r) {
                Ok(o) => o,
                Err(e) => {
                    *failure = Some((r, e));
                    return;
                }
            };
            for (t, o) in tallies.iter_mut().zip(&outcomes) {
                t.counts[o.rejects.iter().filter(|&&x| x).count()] += 1;
                for (k, &x) in o.rejects.iter().enumerate() {
                    t.per_k[k] += u64::from(x);
                }
                if o.rejects.iter().zip(&true_null).any(|(&x, &t)| x && t) {
                    t.fwer += 1;
                }
                t.patients += o.patients;
                if let Some(s) = o.global_stage {
                    for slot in &mut t.global_by_stage[s - 1..] {
                        *slot += 1;
                    }
                }
                if let Some(d) = dunnett {
                    if o.rejects.iter().zip(&outcomes[d].rejects).any(|(&x, &y)| x && !y) {
                        t.not_in_dunnett += 1;
                    }
                }
            }
        },
        |(a, fa), (b, fb)| {
            if fa.is_none() {
                *fa = fb;
            }
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        },
    );
    if let Some((r, e)) = failure {
        return Err(Error::NonConvergence(format!("replicate {r}: {e}")));
    }

    let n = scenario.replicates;
    let frac = |c: u64| c as f64 / n as f64;
    let any_true_null = true_null.iter().any(|&t| t);
    let procedures = scenario
        .procedures
        .iter()
        .zip(tallies)
        .map(|(&p, t)| {
            let per_count: Vec<f64> = t.counts.iter().map(|&c| frac(c)).collect();
            let reject_any = 1.0 - per_count[0];
            let fwer = any_true_null.then(|| frac(t.fwer));
            ProcedureOc {
                procedure: p,
                label: p.label().to_string(),
                reject_any,
                reject_any_se: proportion_se(reject_any, n),
                per_count_se: per_count.iter().map(|&x| proportion_se(x, n)).collect(),
                per_count,
                per_hypothesis: t.per_k.iter().map(|&c| frac(c)).collect(),
                fwer_se: fwer.map(|f| proportion_se(f, n)),
                fwer,
                mean_sample_size: staged.map(|_| t.patients as f64 / n as f64),
                cumulative_global: staged.map(|_| t.global_by_stage.iter().map(|&c| frac(c)).collect()),
                not_in_dunnett: dunnett.map(|_| t.not_in_dunnett),
            }
        })
        .collect();
    Ok(OperatingCharacteristics {
        replicates: n,
        seed: scenario.seed,
        alpha: scenario.alpha.as_f64(),
        procedures,
    })
}

/// How the non-null rows of the replication are scaled: the pattern
/// `(10, 5, 5, 0)` is read as multiples of `delta / 10`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Calibration {
    /// `delta` giving this disjunctive power at the least favourable
    /// configuration.
    LfcPower { power: f64 },
    /// `delta` in units of the common standard deviation.
    Delta { delta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Options {
    pub n_per_arm: u64,
    pub replicates: u64,
    pub seed: u64,
    pub alpha: f64,
    pub calibration: Calibration,
}

impl Default for Table1Options {
    fn default() -> Self {
        Self {
            n_per_arm: 809,
            replicates: 100_000,
            seed: 20_240_601,
            alpha: 0.05,
            calibration: Calibration::LfcPower { power: 0.9 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    /// Mean pattern as printed, e.g. `(10,5,5,0)`.
    pub pattern: String,
    pub mu: Vec<f64>,
    pub procedure: String,
    pub reject_any: f64,
    pub reject_any_se: f64,
    /// P(exactly r rejections), r = 0..=6.
    pub per_count: Vec<f64>,
    pub per_count_se: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub options: Table1Options,
    pub delta: f64,
    pub rows: Vec<Table1Row>,
}

impl Table1Report {
    pub fn row(&self, pattern: &str, procedure: &str) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.pattern == pattern && r.procedure == procedure)
    }
}

impl fmt::Display for Table1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "K = 4, n = {} per arm, alpha = {}, delta = {:.4}, {} replicates (seed {})",
            self.options.n_per_arm, self.options.alpha, self.delta, self.options.replicates, self.options.seed
        )?;
        write!(f, "{:<12} {:<11} {:>10}", "mu", "test", "reject>=1")?;
        for r in 1..=6 {
            write!(f, " {r:>6}")?;
        }
        writeln!(f, " {:>8}", "se")?;
        let mut last = "";
        for row in &self.rows {
            if !last.is_empty() && row.pattern != last {
                writeln!(f)?;
            }
            last = &row.pattern;
            write!(f, "{:<12} {:<11} {:>10.4}", row.pattern, row.procedure, row.reject_any)?;
            for p in &row.per_count[1..] {
                write!(f, " {p:>6.4}")?;
            }
            writeln!(f, " {:>8.5}", row.reject_any_se)?;
        }
        Ok(())
    }
}

/// Replicates the four-arm comparison of Dunnett, Global, Bonferroni and
/// (under the null) unadjusted testing.
pub fn table1_report(opts: &Table1Options) -> Result<Table1Report> {
    let cfg = TrialConfig::equal(4, 1.0, opts.n_per_arm, Sided::TwoSided)?;
    let delta = match opts.calibration {
        Calibration::LfcPower { power } => delta_for_power(&cfg, opts.alpha, power, opts.seed)?,
        Calibration::Delta { delta } => delta,
    };
    let unit = delta / 10.0;
    let rows_spec: [(&str, [f64; 4], Vec<ProcedureSpec>); 3] = [
        ("(0,0,0,0)", [0.0; 4], vec![ProcedureSpec::Dunnett, ProcedureSpec::Global, ProcedureSpec::Bonferroni, ProcedureSpec::Unadjusted]),
        ("(10,5,5,0)", [10.0, 5.0, 5.0, 0.0], vec![ProcedureSpec::Dunnett, ProcedureSpec::Global, ProcedureSpec::Bonferroni]),
        ("(10,10,0,0)", [10.0, 10.0, 0.0, 0.0], vec![ProcedureSpec::Dunnett, ProcedureSpec::Global, ProcedureSpec::Bonferroni]),
    ];
    let mut rows = Vec::new();
    for (pattern, mu, procs) in rows_spec {
        let mu: Vec<f64> = mu.iter().map(|x| x * unit).collect();
        let mut scenario = SimScenario::new(cfg.clone(), MeanConfig::new(mu.clone(), Some(delta))?, procs, opts.replicates, opts.seed);
        scenario.alpha = opts.alpha;
        let oc = run_scenario(&scenario)?;
        for p in oc.procedures {
            rows.push(Table1Row {
                pattern: pattern.to_string(),
                mu: mu.clone(),
                procedure: p.label,
                reject_any: p.reject_any,
                reject_any_se: p.reject_any_se,
                per_count: p.per_count,
                per_count_se: p.per_count_se,
            });
        }
    }
    Ok(Table1Report {
        options: opts.clone(),
        delta,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_arm_null(replicates: u64, seed: u64) -> SimScenario<f64> {
        let cfg = TrialConfig::equal(4, 1.0, 100, Sided::TwoSided).unwrap();
        SimScenario::new(
            cfg,
            MeanConfig::global_null(4),
            vec![ProcedureSpec::Dunnett, ProcedureSpec::Global, ProcedureSpec::Bonferroni, ProcedureSpec::Unadjusted],
            replicates,
            seed,
        )
    }

    #[test]
    fn streams_do_not_depend_on_replicate_count() {
        let mut a = replicate_rng(9, 5);
        let mut b = replicate_rng(9, 5);
        let mut x = [0.0f64; 4];
        let mut y = [0.0f64; 4];
        fill_normal(&mut a, &mut x);
        fill_normal(&mut b, &mut y);
        assert_eq!(x, y);
        let mut c = replicate_rng(9, 6);
        fill_normal(&mut c, &mut y);
        assert_ne!(x, y);
    }

    #[test]
    fn single_replicate_is_reproducible() {
        let s = four_arm_null(1, 42);
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    }

    #[test]
    fn null_rates_and_partition() {
        let oc = run_scenario(&four_arm_null(20_000, 3)).unwrap();
        for p in &oc.procedures {
            assert!((p.per_count.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((p.fwer.unwrap() - p.reject_any).abs() < 1e-12);
            assert!(p.mean_sample_size.is_none());
        }
        let d = oc.get(ProcedureSpec::Dunnett).unwrap();
        let g = oc.get(ProcedureSpec::Global).unwrap();
        let b = oc.get(ProcedureSpec::Bonferroni).unwrap();
        let u = oc.get(ProcedureSpec::Unadjusted).unwrap();
        assert!((d.reject_any - 0.05).abs() < 4.0 * d.reject_any_se);
        // the global intersection is the same event for both
        assert_eq!(d.reject_any, g.reject_any);
        assert!(b.reject_any <= d.reject_any);
        assert!((u.reject_any - 0.2).abs() < 0.02);
        assert_eq!(b.not_in_dunnett, Some(0));
        assert_eq!(g.not_in_dunnett, Some(0));
    }

    #[test]
    fn staged_scenario_runs() {
        let cfg = TrialConfig::equal_staged(3, 1.0, &[20, 40], Sided::TwoSided).unwrap();
        let mut s = SimScenario::new(
            cfg,
            MeanConfig::new(vec![0.8, 0.0, 0.0], None).unwrap(),
            vec![ProcedureSpec::Dunnett, ProcedureSpec::Bonferroni, ProcedureSpec::Combination],
            2_000,
            1,
        );
        s.staged = Some(StagedSpec {
            spending: Some(SpendingFunction::ObrienFlemingType),
            weights: None,
            drop_arms: true,
        });
        let oc = run_scenario(&s).unwrap();
        let d = oc.get(ProcedureSpec::Dunnett).unwrap();
        let cum = d.cumulative_global.as_ref().unwrap();
        assert!(cum[0] <= cum[1] && cum[1] > 0.5);
        assert!(d.mean_sample_size.unwrap() < 120.0);
        assert_eq!(oc.get(ProcedureSpec::Combination).unwrap().mean_sample_size, Some(120.0));
        s.procedures = vec![ProcedureSpec::Gatekeeping];
        assert!(run_scenario(&s).is_err());
    }

    #[test]
    fn rejects_empty_input() {
        let mut s = four_arm_null(0, 0);
        assert!(run_scenario(&s).is_err());
        s.replicates = 10;
        s.procedures.clear();
        assert!(run_scenario(&s).is_err());
    }
}
