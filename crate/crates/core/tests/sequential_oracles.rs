use std::sync::OnceLock;

use pairwise_closure::design::MeanConfig;
use pairwise_closure::model::{CorrelationModel, Sided, TrialConfig};
use pairwise_closure::mvn::{equicoord_quantile, MvnOptions};
use pairwise_closure::sequential::{
    bonferroni_gs_boundaries, generalised_boundaries, gs_boundaries, gs_closed_test, gs_disjunctive_power,
    BoundarySchedule, StageData,
};
use pairwise_closure::sim::{fill_normal, replicate_rng, run_scenario, ProcedureSpec, SimScenario, StagedSpec};
use pairwise_closure::spending::{SpendingFunction, SpendingSchedule};
use proptest::prelude::*;

const ALPHA: f64 = 0.05;

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Two equally spaced analyses of a single comparison: `(Z1, Z2)` with
/// correlation `sqrt(1/2)`.
fn two_look_draws(n: u64, seed: u64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut e = [0.0; 2];
            fill_normal(&mut rng, &mut e);
            (e[0], (e[0] + e[1]) / 2f64.sqrt())
        })
        .collect()
}

#[test]
fn pocock_constant_for_two_looks() {
    let r = 0.5f64.sqrt();
    let corr = CorrelationModel::new(2, vec![1.0, r, r, 1.0]).unwrap();
    let c = equicoord_quantile(&corr, 1.0 - ALPHA, 3).unwrap();
    // classical constant for two looks at two-sided 5%
    assert!((c - 2.178).abs() < 1e-3, "c = {c}");

    let n = 400_000;
    let inside = two_look_draws(n, 17).iter().filter(|(a, b)| a.abs() < c && b.abs() < c).count();
    let coverage = inside as f64 / n as f64;
    assert!((coverage - 0.95).abs() < 3.0 * binomial_se(0.95, n), "coverage {coverage}");
}

#[test]
fn spending_boundaries_hold_their_spend_by_simulation() {
    let cfg = TrialConfig::equal_staged(2, 1.0, &[50, 100], Sided::TwoSided).unwrap();
    for function in [SpendingFunction::PocockType, SpendingFunction::ObrienFlemingType] {
        let sched = SpendingSchedule::for_config(function.clone(), ALPHA, &cfg).unwrap();
        let b = gs_boundaries(&cfg, &sched, 5).unwrap().global();
        let n = 400_000;
        let draws = two_look_draws(n, 29);
        let first = draws.iter().filter(|(a, _)| a.abs() >= b[0]).count() as f64 / n as f64;
        let any = draws.iter().filter(|(a, z)| a.abs() >= b[0] || z.abs() >= b[1]).count() as f64 / n as f64;
        let a1 = sched.cumulative[0];
        assert!((first - a1).abs() < 3.0 * binomial_se(a1, n) + 1e-4, "{function:?}: stage 1 {first} vs {a1}");
        assert!((any - ALPHA).abs() < 3.0 * binomial_se(ALPHA, n) + 1e-4, "{function:?}: overall {any}");
    }
}

/// Design with its closed, generalised and Bonferroni boundaries.
type ThreeArm = (TrialConfig<f64>, BoundarySchedule<f64>, BoundarySchedule<f64>, BoundarySchedule<f64>);

fn three_arm() -> &'static ThreeArm {
    static B: OnceLock<ThreeArm> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = TrialConfig::equal_staged(3, 1.0, &[30, 60], Sided::TwoSided).unwrap();
        let sched = SpendingSchedule::for_config(SpendingFunction::PocockType, ALPHA, &cfg).unwrap();
        let closed = gs_boundaries(&cfg, &sched, 1).unwrap();
        let general = generalised_boundaries(&cfg, &sched, 1).unwrap();
        let bonf = bonferroni_gs_boundaries(&cfg, &sched, 1).unwrap();
        (cfg, closed, general, bonf)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generalised_rejections_are_closed_rejections(z in prop::collection::vec(-4.0f64..4.0, 6)) {
        let (cfg, closed, general, _) = three_arm();
        let data = StageData::from_cumulative_z(cfg, vec![z[..3].to_vec(), z[3..].to_vec()]).unwrap();
        let c = gs_closed_test(&data, closed).unwrap();
        let g = gs_closed_test(&data, general).unwrap();
        for k in 0..3 {
            if let Some(sg) = g.stopped_at[k] {
                let sc = c.stopped_at[k];
                prop_assert!(sc.is_some_and(|s| s <= sg), "k = {k}: closed {sc:?}, generalised {sg}");
            }
        }
    }
}

#[test]
fn closed_boundaries_beat_bonferroni_in_power() {
    let (cfg, closed, _, bonf) = three_arm();
    let mvn = MvnOptions::with_seed(2);
    let null = gs_disjunctive_power(cfg, &MeanConfig::global_null(3), closed, &mvn).unwrap();
    assert!((null.disjunctive - ALPHA).abs() < 2e-4);
    let bnull = gs_disjunctive_power(cfg, &MeanConfig::global_null(3), bonf, &mvn).unwrap();
    assert!(bnull.disjunctive <= ALPHA + 2e-4);
    for mu in [vec![0.5, 0.0, 0.0], vec![0.5, 0.25, 0.0], vec![0.3, 0.3, 0.0]] {
        let means = MeanConfig::new(mu.clone(), None).unwrap();
        let pc = gs_disjunctive_power(cfg, &means, closed, &mvn).unwrap();
        let pb = gs_disjunctive_power(cfg, &means, bonf, &mvn).unwrap();
        assert!(pc.disjunctive > pb.disjunctive, "{mu:?}: {} vs {}", pc.disjunctive, pb.disjunctive);
    }
}

#[test]
fn staged_procedures_control_fwer_under_partial_null() {
    let cfg = TrialConfig::equal_staged(3, 1.0, &[30, 60], Sided::TwoSided).unwrap();
    let mut scenario = SimScenario::new(
        cfg,
        MeanConfig::new(vec![0.0, 0.0, 0.4], None).unwrap(),
        vec![ProcedureSpec::Dunnett, ProcedureSpec::Global, ProcedureSpec::Bonferroni],
        20_000,
        44,
    );
    scenario.staged = Some(StagedSpec {
        spending: Some(SpendingFunction::ObrienFlemingType),
        weights: None,
        drop_arms: true,
    });
    let oc = run_scenario(&scenario).unwrap();
    let bound = ALPHA + 3.0 * binomial_se(ALPHA, scenario.replicates);
    for p in &oc.procedures {
        let fwer = p.fwer.unwrap();
        assert!(fwer <= bound, "{}: {fwer}", p.label);
    }
    let d = oc.get(ProcedureSpec::Dunnett).unwrap();
    let g = oc.get(ProcedureSpec::Global).unwrap();
    assert!(d.reject_any >= g.reject_any);
}
