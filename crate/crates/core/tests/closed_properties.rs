use std::sync::OnceLock;

use pairwise_closure::closed::{
    bonferroni_test, closed_test_lattice, closed_test_z, critical_values, critical_values_with,
    tukey_global_cut, CriticalValueTable,
};
use pairwise_closure::model::{correlation, ComparisonSet, Sided, TrialConfig};
use pairwise_closure::mvn::QuantileOptions;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loose() -> QuantileOptions<f64> {
    let mut o = QuantileOptions::default();
    o.tolerance = 1e-3;
    o.mvn.accuracy = 1e-4;
    o
}

fn table(arms: usize, sided: Sided, sigma2: &[f64]) -> CriticalValueTable<f64> {
    let cfg = TrialConfig::new(sigma2.to_vec(), vec![1.0 / arms as f64; arms], vec![vec![40; arms]], sided).unwrap();
    critical_values_with(&cfg, 1, 0.05, &loose()).unwrap()
}

fn four_arm() -> &'static CriticalValueTable<f64> {
    static T: OnceLock<CriticalValueTable<f64>> = OnceLock::new();
    T.get_or_init(|| critical_values(&TrialConfig::equal(4, 1.0, 40, Sided::TwoSided).unwrap(), 0.05, 9).unwrap())
}

fn check_agreement(t: &CriticalValueTable<f64>, seed: u64, scale: f64) {
    assert!(t.consonance_violations().is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let z: Vec<f64> = (0..t.m()).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let fast = closed_test_z(&z, t).unwrap();
        let slow = closed_test_lattice(&z, t).unwrap();
        assert_eq!(fast.global_rejects, slow.global_rejects, "z = {z:?}");
    }
}

#[test]
fn shortcut_matches_lattice_two_sided() {
    check_agreement(&table(3, Sided::TwoSided, &[1.0; 3]), 1, 4.0);
    check_agreement(four_arm(), 2, 4.0);
    check_agreement(&table(4, Sided::TwoSided, &[1.0, 2.0, 0.5, 1.0]), 3, 4.0);
    check_agreement(&table(5, Sided::TwoSided, &[1.0; 5]), 4, 4.5);
}

#[test]
fn shortcut_matches_lattice_one_sided() {
    check_agreement(&table(3, Sided::OneSided, &[1.0, 1.5, 1.0]), 5, 4.0);
}

#[test]
fn one_sided_never_rejects_both_directions() {
    let t = table(3, Sided::OneSided, &[1.0; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = TrialConfig::equal(3, 1.0, 40, Sided::OneSided).unwrap();
    let pairs = cfg.comparisons();
    for _ in 0..500 {
        // statistics of a realised mean vector are antisymmetric
        let means: Vec<f64> = (0..3).map(|_| 2.0 * (rng.random::<f64>() - 0.5)).collect();
        let z: Vec<f64> = pairs.iter().map(|&(i, j)| (means[i] - means[j]) * 4.0).collect();
        let d = closed_test_z(&z, &t).unwrap();
        for (a, &(i, j)) in pairs.iter().enumerate() {
            let b = pairs.iter().position(|&p| p == (j, i)).unwrap();
            assert!(!(d.global_rejects[a] && d.global_rejects[b]));
        }
    }
}

#[test]
fn classes_share_correlation_spectra() {
    let cfg = TrialConfig::new(vec![1.0, 2.0, 1.0, 1.0], vec![0.25; 4], vec![vec![30; 4]], Sided::TwoSided).unwrap();
    let t = critical_values_with(&cfg, 1, 0.05, &loose()).unwrap();
    let classes = t.classes();
    for mask in 1u64..64 {
        let rep = classes.representative(classes.class_of(mask));
        let a = correlation(&cfg, &ComparisonSet::from_mask(mask), 1).unwrap().eigenvalues();
        let b = correlation(&cfg, &rep, 1).unwrap().eigenvalues();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "mask {mask:b}: {a:?} vs {b:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn dunnett_dominates_bonferroni_and_global(z in proptest::collection::vec(-4.5f64..4.5, 6)) {
        let t = four_arm();
        let dunnett = closed_test_z(&z, t).unwrap();
        let bonf = bonferroni_test(&z, 0.05, 6).unwrap();
        let global: Vec<bool> = z.iter().map(|x| x.abs() > t.global()).collect();
        for k in 0..6 {
            prop_assert!(!bonf.global_rejects[k] || dunnett.global_rejects[k]);
            prop_assert!(!global[k] || dunnett.global_rejects[k]);
        }
        // a rejected global intersection yields at least one elementary rejection
        if dunnett.local_rejects.last().unwrap().rejected {
            prop_assert!(dunnett.num_rejected() >= 1);
        }
    }
}

#[test]
fn global_cut_matches_full_family_value() {
    let cfg = TrialConfig::equal(4, 1.0, 40, Sided::TwoSided).unwrap();
    let cut = tukey_global_cut(&cfg, 0.05, 9).unwrap();
    assert!((cut - four_arm().global()).abs() < 1e-4);
}
