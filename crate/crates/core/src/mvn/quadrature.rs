//! Integration rules over the unit cube for the conditioned integrand.

#![allow(clippy::excessive_precision)]

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::Scalar;

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug)]
pub(crate) struct Estimate {
    pub value: f64,
    pub error: f64,
    pub points: u64,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod on `[0, 1]`.
pub(crate) fn adaptive_gk(mut f: impl FnMut(f64) -> f64, tol: f64, max_pieces: usize) -> Estimate {
    let mut heap = BinaryHeap::new();
    let (value, error) = gk15(&mut f, 0.0, 1.0);
    heap.push(Piece {
        a: 0.0,
        b: 1.0,
        value,
        error,
    });
    let mut total_err = error;
    let mut pieces = 1;
    while total_err > tol && pieces < max_pieces {
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        pieces += 1;
    }
    // re-sum to shed accumulated rounding from the running totals
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Estimate {
        value,
        error,
        points: 15 * (2 * pieces as u64 - 1),
    }
}

const PRIMES: [u32; 100] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293,
    307, 311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383, 389, 397, 401, 409, 419,
    421, 431, 433, 439, 443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521, 523, 541,
];

pub(crate) const MAX_QMC_DIM: usize = PRIMES.len();

/// Randomly shifted Richtmyer lattice rule with antithetic baker's
/// transform. The error is three standard errors across shifts.
///
/// The point count per shift doubles until the target is met or the
/// budget is spent; earlier points are reused.
pub(crate) fn lattice_qmc<F: Scalar>(
    dim: usize,
    integrand: impl Fn(&[F], &mut [F]) -> F + Sync,
    scratch_len: usize,
    tol: f64,
    seed: u64,
    shifts: usize,
    max_points: u64,
) -> Estimate {
    assert!((1..=MAX_QMC_DIM).contains(&dim));
    let alpha: Vec<f64> = PRIMES[..dim].iter().map(|&p| (p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift_vecs: Vec<Vec<f64>> = (0..shifts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut sums = vec![0.0f64; shifts];
    let mut done: u64 = 0;
    let mut block: u64 = 256;
    loop {
        let (start, end) = (done + 1, done + block);
        let partial: Vec<f64> = shift_vecs
            .par_iter()
            .map(|shift| {
                let mut w = vec![F::zero(); dim];
                let mut w2 = vec![F::zero(); dim];
                let mut y = vec![F::zero(); scratch_len];
                let mut acc = 0.0f64;
                for n in start..=end {
                    for d in 0..dim {
                        let x = (n as f64 * alpha[d] + shift[d]).fract();
                        let x = (2.0 * x - 1.0).abs();
                        w[d] = F::lit(x);
                        w2[d] = F::lit(1.0 - x);
                    }
                    acc += integrand(&w, &mut y).as_f64();
                    acc += integrand(&w2, &mut y).as_f64();
                }
                acc
            })
            .collect();
        for (s, p) in sums.iter_mut().zip(partial) {
            *s += p;
        }
        done = end;
        let per_shift = 2.0 * done as f64;
        let estimates: Vec<f64> = sums.iter().map(|s| s / per_shift).collect();
        let mean = estimates.iter().sum::<f64>() / shifts as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
            / (shifts as f64 * (shifts as f64 - 1.0));
        let error = 3.0 * var.sqrt();
        let points = 2 * done * shifts as u64;
        if error <= tol || points >= max_points {
            return Estimate {
                value: mean,
                error,
                points,
            };
        }
        block = done;
    }
}
