use pairwise_closure::error::Error;
use pairwise_closure::model::{pair_correlation, CorrelationModel};
use pairwise_closure::mvn::{mvn_rect, Rectangle};
use proptest::prelude::*;

/// Correlation of pairwise differences among `arms` with the given
/// variances: singular whenever the pairs form a cycle.
fn arb_corr() -> impl Strategy<Value = CorrelationModel<f64>> {
    prop_oneof![
        (2usize..5, -0.2f64..0.9).prop_map(|(d, r)| CorrelationModel::exchangeable(d, r).unwrap()),
        proptest::collection::vec(0.2f64..3.0, 4).prop_map(|v| {
            pair_correlation(&v, &[(0, 1), (0, 2), (1, 2), (2, 3)])
        }),
        proptest::collection::vec(0.2f64..3.0, 3).prop_map(|v| {
            pair_correlation(&v, &[(0, 1), (1, 0), (0, 2)])
        }),
    ]
}

fn arb_case() -> impl Strategy<Value = (CorrelationModel<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    arb_corr().prop_flat_map(|c| {
        let d = c.dim();
        (
            Just(c),
            proptest::collection::vec(-1.0f64..1.0, d),
            proptest::collection::vec(-3.0f64..0.5, d),
            proptest::collection::vec(0.0f64..3.0, d),
        )
    })
}

fn rect(lo: &[f64], width: &[f64]) -> Rectangle<f64> {
    let hi = lo.iter().zip(width).map(|(a, w)| a + w).collect();
    Rectangle::new(lo.to_vec(), hi).unwrap()
}

fn prob(c: &CorrelationModel<f64>, mean: &[f64], r: &Rectangle<f64>) -> (f64, f64) {
    match mvn_rect(mean, c, r, 1e-5, 8) {
        Ok(p) => (p.value, p.err_est),
        Err(Error::AccuracyNotReached { value, err_est, .. }) => (value, err_est),
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn enlarging_never_decreases((c, mean, lo, width) in arb_case(), grow in 0.0f64..1.0) {
        let (small, e1) = prob(&c, &mean, &rect(&lo, &width));
        let lo2: Vec<f64> = lo.iter().map(|a| a - grow).collect();
        let w2: Vec<f64> = width.iter().map(|w| w + 2.0 * grow).collect();
        let (big, e2) = prob(&c, &mean, &rect(&lo2, &w2));
        prop_assert!(big >= small - e1 - e2 - 1e-12, "{big} < {small}");
    }

    #[test]
    fn permutation_invariant((c, mean, lo, width) in arb_case(), seed in any::<u64>()) {
        let d = c.dim();
        let mut perm: Vec<usize> = (0..d).collect();
        // a seeded rotation plus swap covers distinct orders
        perm.rotate_left((seed % d as u64) as usize);
        if d > 2 && seed % 2 == 1 {
            perm.swap(0, 1);
        }
        let pc = c.submatrix(&perm);
        let pm: Vec<f64> = perm.iter().map(|&i| mean[i]).collect();
        let pl: Vec<f64> = perm.iter().map(|&i| lo[i]).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| width[i]).collect();
        let (a, ea) = prob(&c, &mean, &rect(&lo, &width));
        let (b, eb) = prob(&pc, &pm, &rect(&pl, &pw));
        prop_assert!((a - b).abs() <= ea + eb + 1e-10, "{a} vs {b}");
    }

    #[test]
    fn deterministic_for_fixed_seed((c, mean, lo, width) in arb_case()) {
        let r = rect(&lo, &width);
        let a = mvn_rect(&mean, &c, &r, 1e-4, 3);
        let b = mvn_rect(&mean, &c, &r, 1e-4, 3);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn complement_by_inclusion_exclusion(
        (c, mean, lo, width) in arb_case().prop_filter("dim <= 3", |(c, ..)| c.dim() <= 3)
    ) {
        let d = c.dim();
        let (inside, mut err) = prob(&c, &mean, &rect(&lo, &width));
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(a, w)| a + w).collect();
        let mut outside = 0.0;
        for subset in 1u32..(1 << d) {
            let members: Vec<usize> = (0..d).filter(|&i| subset >> i & 1 == 1).collect();
            let sign = if members.len() % 2 == 1 { 1.0 } else { -1.0 };
            for sides in 0u32..(1 << members.len()) {
                let mut l = vec![f64::NEG_INFINITY; d];
                let mut u = vec![f64::INFINITY; d];
                for (b, &i) in members.iter().enumerate() {
                    if sides >> b & 1 == 0 {
                        u[i] = lo[i];
                    } else {
                        l[i] = hi[i];
                    }
                }
                let (p, e) = prob(&c, &mean, &Rectangle::new(l, u).unwrap());
                outside += sign * p;
                err += e;
            }
        }
        prop_assert!((inside + outside - 1.0).abs() <= 1e-4 + err, "{inside} + {outside}");
    }
}
