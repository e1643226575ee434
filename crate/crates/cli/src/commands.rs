use pairwise_closure::closed::{self, critical_values_with, Procedure};
use pairwise_closure::combination::{flexible_closed_test, flexible_rejections};
use pairwise_closure::design::{self, global_critical_value, lfc_check_with, power_at_cut, sample_size_with, LfcMode};
use pairwise_closure::model::z_statistics;
use pairwise_closure::sequential::{
    bonferroni_gs_boundaries_with, drop_treatments, generalised_boundaries_with, gs_boundaries_with,
    gs_closed_test, gs_disjunctive_power, BoundaryKind,
};
use pairwise_closure::sim::Table1Options;
use pairwise_closure::{
    closed_test_z, run_scenario, table1_report, BoundarySchedule, CombinationWeights, Error, FlexibleDesign,
    MeanConfig, QuantileOptions, Sided, SimScenario, SpendingFunction, SpendingSchedule, StageData,
    StageObservation, TrialConfig,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::output::{labels, to_value, Output, Table};
use crate::CliError;

/// Options shared by every command.
pub struct Ctx {
    pub seed: u64,
    /// True when `--seed` was given; it then overrides any seed in the input.
    pub seed_given: bool,
    pub accuracy: f64,
}

impl Ctx {
    pub fn quantile(&self) -> QuantileOptions {
        let mut q = QuantileOptions::default();
        q.mvn.seed = self.seed;
        q.mvn.accuracy = self.accuracy;
        q
    }
}

fn parse<T: for<'de> Deserialize<'de>>(input: &Value) -> Result<T, CliError> {
    T::deserialize(input).map_err(|e| CliError::Input(e.to_string()))
}

fn default_alpha() -> f64 {
    0.05
}

fn comparison_label(pair: (usize, usize), sided: Sided) -> String {
    match sided {
        Sided::TwoSided => format!("{}-{}", pair.0 + 1, pair.1 + 1),
        Sided::OneSided => format!("{}>{}", pair.0 + 1, pair.1 + 1),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignInput {
    config: TrialConfig,
    #[serde(default = "default_alpha")]
    alpha: f64,
    means: Option<MeanConfig>,
    /// Least favourable configuration with this clinically relevant difference.
    delta: Option<f64>,
    target_power: Option<f64>,
    /// Perturbations of the middle means, as fractions of `delta`.
    grid: Option<Vec<f64>>,
    spending: Option<SpendingFunction>,
}

pub fn design(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let inp: DesignInput = parse(input)?;
    let q = ctx.quantile();
    let means = match (&inp.means, inp.delta) {
        (Some(m), _) => Some(m.clone()),
        (None, Some(d)) => Some(design::lfc(inp.config.arms(), d)?),
        (None, None) => None,
    };
    let mut result = json!({ "alpha": inp.alpha, "m": inp.config.m() });
    let mut table = Table::new(&["quantity", "value", "err_est"]);

    let cut = global_critical_value(&inp.config, inp.alpha, &q)?;
    result["critical_value"] = json!(cut);
    table.push(vec!["critical_value".into(), cut.into(), "".into()]);

    if let Some(means) = &means {
        let p = power_at_cut(&inp.config, means, cut, &q.mvn)?;
        table.push(vec!["power".into(), p.disjunctive.into(), p.err_est.into()]);
        result["power"] = to_value(&p);
    }

    if let Some(function) = &inp.spending {
        let schedule = SpendingSchedule::for_config(function.clone(), inp.alpha, &inp.config)?;
        let bounds = gs_boundaries_with(&inp.config, &schedule, &q)?;
        for (s, b) in bounds.global().iter().enumerate() {
            table.push(vec![format!("global_boundary_stage{}", s + 1).into(), (*b).into(), "".into()]);
        }
        result["global_boundaries"] = json!(bounds.global());
        if let Some(means) = &means {
            let p = gs_disjunctive_power(&inp.config, means, &bounds, &q.mvn)?;
            table.push(vec!["gs_power".into(), p.disjunctive.into(), p.err_est.into()]);
            result["gs_power"] = to_value(&p);
        }
    }

    if let Some(target) = inp.target_power {
        let means = means
            .as_ref()
            .ok_or_else(|| CliError::Input("target_power needs means or delta".into()))?;
        let ss = sample_size_with(&inp.config, means, inp.alpha, target, &q)?;
        table.push(vec!["n_total".into(), ss.n_total.into(), "".into()]);
        table.push(vec!["n_per_arm".into(), labels(&ss.n_per_arm.iter().map(|&n| n as usize).collect::<Vec<_>>()).into(), "".into()]);
        table.push(vec!["achieved_power".into(), ss.achieved_power.into(), "".into()]);
        result["sample_size"] = to_value(&ss);
    }

    if let (Some(delta), Some(grid)) = (inp.delta, &inp.grid) {
        let cfg = TrialConfig::new(
            inp.config.sigma2().to_vec(),
            inp.config.alloc().to_vec(),
            vec![inp.config.final_n().to_vec()],
            inp.config.sided(),
        )?;
        let v = cfg.mean_variances(1)?;
        let mode = if v.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12 * w[0]) {
            LfcMode::PerturbationCheck
        } else {
            LfcMode::NumericSearch
        };
        let eps: Vec<f64> = grid.iter().map(|g| g * delta).collect();
        let power = |m: &MeanConfig| {
            let r = power_at_cut(&cfg, m, cut, &q.mvn)?;
            Ok((r.disjunctive, r.err_est))
        };
        let report = lfc_check_with(cfg.arms(), delta, &eps, mode, power)?;
        table.push(vec!["lfc_power".into(), report.lfc_power.into(), report.lfc_err.into()]);
        for p in &report.perturbations {
            table.push(vec![format!("perturbed_power_eps={}", crate::output::sig6(p.epsilon)).into(), p.power.into(), p.err_est.into()]);
        }
        table.push(vec!["lfc_is_minimum".into(), report.lfc_is_minimum.into(), "".into()]);
        result["lfc"] = to_value(&report);
    }
    Ok(Output { result, table })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CriticalValuesInput {
    config: TrialConfig,
    #[serde(default = "default_alpha")]
    alpha: f64,
    /// Analysis whose information is used; the last by default.
    stage: Option<usize>,
}

pub fn critical_values(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let inp: CriticalValuesInput = parse(input)?;
    let stage = inp.stage.unwrap_or(inp.config.stages());
    let table = critical_values_with(&inp.config, stage, inp.alpha, &ctx.quantile())?;
    let entries = table.entries();
    let mut out = Table::new(&["class", "subset", "size", "subsets", "critical"]);
    for e in &entries {
        out.push(vec![e.class.into(), labels(&e.representative).into(), e.size.into(), e.subsets.into(), e.critical.into()]);
    }
    let result = json!({
        "alpha": inp.alpha,
        "sided": inp.config.sided(),
        "m": table.m(),
        "stage": stage,
        "global": table.global(),
        "consonance_violations": table.consonance_violations().len(),
        "classes": entries,
    });
    Ok(Output { result, table: out })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyzeInput {
    config: TrialConfig,
    #[serde(default = "default_alpha")]
    alpha: f64,
    means: Option<Vec<f64>>,
    z: Option<Vec<f64>>,
    #[serde(default = "default_procedures")]
    procedures: Vec<Procedure>,
    gatekeeping_order: Option<Vec<usize>>,
}

fn default_procedures() -> Vec<Procedure> {
    vec![Procedure::Dunnett]
}

pub fn analyze(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let inp: AnalyzeInput = parse(input)?;
    let cfg = &inp.config;
    let stage = cfg.stages();
    let (stats, z) = match (&inp.means, &inp.z) {
        (Some(means), None) => {
            let stats = z_statistics(cfg, means, stage)?;
            let z = stats.iter().map(|s| s.z).collect::<Vec<_>>();
            (Some(stats), z)
        }
        (None, Some(z)) => (None, z.clone()),
        _ => return Err(CliError::Input("give exactly one of means or z".into())),
    };
    let mut decisions = Vec::new();
    for &p in &inp.procedures {
        let d = match p {
            Procedure::Dunnett => {
                let table = critical_values_with(cfg, stage, inp.alpha, &ctx.quantile())?;
                closed_test_z(&z, &table)?
            }
            Procedure::Bonferroni => closed::bonferroni_test(&z, inp.alpha, cfg.m())?,
            Procedure::Unadjusted => closed::unadjusted_test(&z, inp.alpha)?,
            Procedure::TukeyGlobal => closed::tukey_global_test(&z, cfg, inp.alpha, ctx.seed)?,
            Procedure::Gatekeeping => {
                let order = inp.gatekeeping_order.clone().unwrap_or_else(|| (1..=cfg.m()).collect());
                closed::gatekeeping_test(&z, inp.alpha, &order)?
            }
        };
        decisions.push(d);
    }
    let mut table = Table::new(&["procedure", "comparison", "z", "rejected"]);
    for d in &decisions {
        for (k, pair) in cfg.comparisons().into_iter().enumerate() {
            table.push(vec![
                d.procedure.label().into(),
                comparison_label(pair, cfg.sided()).into(),
                z[k].into(),
                d.global_rejects[k].into(),
            ]);
        }
    }
    let result = json!({
        "alpha": inp.alpha,
        "statistics": stats,
        "z": z,
        "decisions": decisions,
        "rejected": decisions.iter().map(|d| json!({
            "procedure": d.procedure.label(),
            "comparisons": d.rejected_labels(),
        })).collect::<Vec<_>>(),
    });
    Ok(Output { result, table })
}

fn default_kind() -> BoundaryKind {
    BoundaryKind::Closed
}

fn boundaries(
    config: &TrialConfig,
    alpha: f64,
    spending: SpendingFunction,
    kind: BoundaryKind,
    ctx: &Ctx,
) -> Result<BoundarySchedule, CliError> {
    let schedule = SpendingSchedule::for_config(spending, alpha, config)?;
    let q = ctx.quantile();
    Ok(match kind {
        BoundaryKind::Closed => gs_boundaries_with(config, &schedule, &q)?,
        BoundaryKind::Generalised => generalised_boundaries_with(config, &schedule, &q)?,
        BoundaryKind::Bonferroni => bonferroni_gs_boundaries_with(config, &schedule, &q)?,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StagedInput {
    config: TrialConfig,
    #[serde(default = "default_alpha")]
    alpha: f64,
    spending: SpendingFunction,
    #[serde(default = "default_kind")]
    kind: BoundaryKind,
    /// Means of each new cohort, `[analysis][arm]`.
    stage_means: Option<Vec<Vec<f64>>>,
    /// Cumulative means, `[analysis][arm]`.
    cumulative_means: Option<Vec<Vec<f64>>>,
    /// Cumulative z-statistics, `[analysis][comparison]`.
    z: Option<Vec<Vec<f64>>>,
}

pub fn analyze_staged(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let inp: StagedInput = parse(input)?;
    let cfg = &inp.config;
    let data = match (inp.stage_means, inp.cumulative_means, inp.z) {
        (Some(m), None, None) => StageData::from_stage_means(cfg, &m)?,
        (None, Some(m), None) => StageData::from_cumulative_means(cfg, &m)?,
        (None, None, Some(z)) => StageData::from_cumulative_z(cfg, z)?,
        _ => return Err(CliError::Input("give exactly one of stage_means, cumulative_means or z".into())),
    };
    let bounds = boundaries(cfg, inp.alpha, inp.spending, inp.kind, ctx)?;
    let decision = gs_closed_test(&data, &bounds)?;
    let dropped = drop_treatments(cfg.arms(), cfg.sided(), &decision.decision.global_rejects)?;
    let last = data.analyses() - 1;
    let mut table = Table::new(&["comparison", "z", "rejected", "stopped_at"]);
    for (k, pair) in cfg.comparisons().into_iter().enumerate() {
        table.push(vec![
            comparison_label(pair, cfg.sided()).into(),
            data.z[last][k].into(),
            decision.decision.global_rejects[k].into(),
            decision.stopped_at[k].map(|s| s.to_string()).unwrap_or_default().into(),
        ]);
    }
    let result = json!({
        "alpha": inp.alpha,
        "kind": inp.kind,
        "analyses": data.analyses(),
        "global_boundaries": bounds.global(),
        "data": data,
        "decision": decision,
        "rejected": decision.decision.rejected_labels(),
        "droppable_arms": dropped,
    });
    Ok(Output { result, table })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundariesInput {
    config: TrialConfig,
    #[serde(default = "default_alpha")]
    alpha: f64,
    spending: SpendingFunction,
    #[serde(default = "default_kind")]
    kind: BoundaryKind,
}

pub fn gs_boundaries(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let inp: BoundariesInput = parse(input)?;
    let bounds = boundaries(&inp.config, inp.alpha, inp.spending, inp.kind, ctx)?;
    let spending = bounds.spending();
    let entries = bounds.entries();
    let mut table = Table::new(&["class", "subset", "size", "subsets", "stage", "info_time", "cumulative_alpha", "boundary"]);
    for e in &entries {
        table.push(vec![
            e.class.into(),
            labels(&e.representative).into(),
            e.size.into(),
            e.subsets.into(),
            e.stage.into(),
            spending.info_times[e.stage - 1].into(),
            spending.cumulative[e.stage - 1].into(),
            e.boundary.into(),
        ]);
    }
    let result = json!({
        "kind": bounds.kind(),
        "alpha": bounds.alpha(),
        "sided": bounds.sided(),
        "m": bounds.m(),
        "stages": bounds.stages(),
        "spending": spending,
        "global": bounds.global(),
        "consonance_violations": bounds.consonance_violations().len(),
        "entries": entries,
    });
    Ok(Output { result, table })
}

fn default_sided() -> Sided {
    Sided::TwoSided
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CombineInput {
    sigma2: Vec<f64>,
    #[serde(default = "default_sided")]
    sided: Sided,
    #[serde(default = "default_alpha")]
    alpha: f64,
    /// Pre-registered stage weights; normalised to unit length.
    weights: Option<Vec<f64>>,
    /// Planned new patients per stage and arm, for default weights.
    planned_stage_n: Option<Vec<Vec<u64>>>,
    stages: Vec<StageObservation>,
    /// Evaluate only what the closure needs instead of every intersection.
    #[serde(default)]
    lazy: bool,
}

pub fn combine(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let inp: CombineInput = parse(input)?;
    let weights = match (inp.weights, &inp.planned_stage_n) {
        (Some(w), None) => CombinationWeights::new(w)?,
        (None, Some(n)) => {
            let info: Vec<f64> = n.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
            CombinationWeights::from_information(&info)?
        }
        _ => return Err(CliError::Input("give exactly one of weights or planned_stage_n".into())),
    };
    let design = FlexibleDesign::new(inp.sigma2, inp.sided, inp.alpha, weights)?;
    let pairs = pairwise_closure::model::comparisons(design.arms(), design.sided());

    if inp.lazy {
        let rejects = flexible_rejections(&design, &inp.stages, &ctx.quantile().mvn)?;
        let mut table = Table::new(&["comparison", "rejected"]);
        for (k, &pair) in pairs.iter().enumerate() {
            table.push(vec![comparison_label(pair, design.sided()).into(), rejects[k].into()]);
        }
        let rejected: Vec<usize> = (0..rejects.len()).filter(|&k| rejects[k]).map(|k| k + 1).collect();
        let result = json!({ "alpha": design.alpha(), "weights": design.weights(), "rejected": rejected, "global_rejects": rejects });
        return Ok(Output { result, table });
    }

    let d = flexible_closed_test(&design, &inp.stages, ctx.seed)?;
    let q = inp.stages.len();
    let mut header = vec!["subset".to_string()];
    header.extend((1..=q).map(|s| format!("p_stage{s}")));
    header.extend(["combined_p", "combined_z", "clamped", "rejected"].map(String::from));
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for local in &d.decision.local_rejects {
        let mask: u64 = local.subset.iter().map(|&k| 1u64 << (k - 1)).sum();
        let idx = mask as usize - 1;
        let Some(c) = &d.combined[idx] else { continue };
        let mut row = vec![labels(&local.subset).into()];
        let stage_p = d.stage_p[idx].clone().unwrap_or_default();
        row.extend((0..q).map(|s| stage_p.get(s).copied().unwrap_or(f64::NAN).into()));
        row.extend([c.p.into(), c.z.into(), c.clamped.into(), local.rejected.into()]);
        table.push(row);
    }
    let result = json!({
        "alpha": design.alpha(),
        "weights": design.weights(),
        "rejected": d.decision.rejected_labels(),
        "decision": d,
    });
    Ok(Output { result, table })
}

pub fn simulate(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let mut scenario: SimScenario = parse(input)?;
    if ctx.seed_given {
        scenario.seed = ctx.seed;
    }
    let oc = run_scenario(&scenario)?;
    let m = scenario.config.m();
    let mut header: Vec<String> = ["procedure", "reject_any", "reject_any_se", "fwer", "mean_sample_size"]
        .map(String::from)
        .to_vec();
    header.extend((0..=m).map(|r| format!("P{r}")));
    let mut table = Table { header, rows: Vec::new() };
    for p in &oc.procedures {
        let mut row = vec![
            p.label.clone().into(),
            p.reject_any.into(),
            p.reject_any_se.into(),
            p.fwer.map(Into::into).unwrap_or_else(|| "".into()),
            p.mean_sample_size.map(Into::into).unwrap_or_else(|| "".into()),
        ];
        row.extend(p.per_count.iter().map(|&x| x.into()));
        table.push(row);
    }
    Ok(Output { result: to_value(&oc), table })
}

/// Fills omitted fields of the options from their defaults.
fn table1_options(input: &Value) -> Result<Table1Options, CliError> {
    let mut merged = to_value(&Table1Options::default());
    match input {
        Value::Null => {}
        Value::Object(fields) => {
            for (k, v) in fields {
                if merged.get(k).is_none() {
                    return Err(CliError::Input(format!("unknown field `{k}` in table1 options")));
                }
                merged[k] = v.clone();
            }
        }
        _ => return Err(CliError::Input("table1 options must be a JSON object".into())),
    }
    parse(&merged)
}

pub fn table1(input: &Value, ctx: &Ctx) -> Result<Output, CliError> {
    let mut opts = table1_options(input)?;
    if ctx.seed_given {
        opts.seed = ctx.seed;
    }
    let report = table1_report(&opts)?;
    let m = report.rows.first().map_or(0, |r| r.per_count.len() - 1);
    let mut header: Vec<String> = ["pattern", "procedure", "reject_any", "reject_any_se"].map(String::from).to_vec();
    header.extend((0..=m).map(|r| format!("P{r}")));
    let mut table = Table { header, rows: Vec::new() };
    for r in &report.rows {
        let mut row = vec![r.pattern.clone().into(), r.procedure.clone().into(), r.reject_any.into(), r.reject_any_se.into()];
        row.extend(r.per_count.iter().map(|&x| x.into()));
        table.push(row);
    }
    Ok(Output { result: to_value(&report), table })
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
