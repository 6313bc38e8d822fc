//! Empirical Bernstein concentration for martingale difference
//! sequences, and a Monte Carlo harness certifying its coverage level.
//!
//! For a martingale difference sequence with `|X_i| <= c` and
//! `delta in (0, e^-1)`, with probability at least
//! `1 - 2 (floor(log2 n) + 3) delta`:
//!
//! ```text
//! |sum_i X_i| <= 2 sqrt(sum_i X_i^2 * log(2/delta)) + 7 max{c, 1} log(2/delta)
//! ```
//!
//! The right-hand side depends only on the observed quadratic variation,
//! which is what makes it usable as an exploration-bonus ingredient.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;

/// Largest admissible confidence parameter, `e^-1`.
pub fn delta_upper_limit() -> f64 {
    (-1.0f64).exp()
}

fn check_delta(delta: f64, upper: f64) -> Result<()> {
    if !(delta > 0.0 && delta < upper) {
        return Err(Error::input(format!(
            "delta must lie in (0, {upper:.6}), got {delta}"
        )));
    }
    Ok(())
}

/// The empirical Bernstein bound on `|sum_i x_i|`.
pub fn empirical_bernstein_bound(xs: &[f64], c: f64, delta: f64) -> Result<f64> {
    check_delta(delta, delta_upper_limit())?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::input(format!("bound c must be positive, got {c}")));
    }
    if let Some(x) = xs.iter().find(|x| x.abs() > c) {
        return Err(Error::input(format!("|x| = {} exceeds the stated bound c = {c}", x.abs())));
    }
    let log_term = (2.0 / delta).ln();
    let quad: f64 = xs.iter().map(|x| x * x).sum();
    Ok(2.0 * (quad * log_term).sqrt() + 7.0 * c.max(1.0) * log_term)
}

/// Hoeffding's bound for martingales: `c sqrt(2 n log(2/delta))`, valid
/// with probability at least `1 - delta` for any `delta in (0, 1)`.
pub fn hoeffding_martingale_bound(n: usize, c: f64, delta: f64) -> Result<f64> {
    check_delta(delta, 1.0)?;
    Ok(c * (2.0 * n as f64 * (2.0 / delta).ln()).sqrt())
}

/// Failure budget of the empirical Bernstein bound at sample count `n`:
/// `2 (floor(log2 n) + 3) delta`.
pub fn coverage_budget(n: usize, delta: f64) -> f64 {
    assert!(n >= 1, "need at least one sample");
    2.0 * (n.ilog2() as f64 + 3.0) * delta
}

/// Generators of martingale difference sequences with `|X_i| <= c`,
/// used to probe the bound's coverage. All are conditionally mean-zero
/// by construction (an independent Rademacher sign at every step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MartingaleFamily {
    /// Independent signs: `X_i = R_i`.
    RademacherIid,
    /// Autoregressive magnitude with clipping:
    /// `X_i = clip(phi * X_{i-1}, -0.9, 0.9) * R_i`, seeded at `x0`.
    /// The magnitude depends on the whole past, so the sequence is not
    /// i.i.d.
    BoundedAr { phi: f64, x0: f64 },
    /// `X_i = sign(X_1 + ... + X_{i-1}) * R_i` with `sign(0) = 1`.
    SignOfPastSum,
    /// Degenerate all-zero sequence.
    AllZero,
}

impl MartingaleFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MartingaleFamily::RademacherIid => "rademacher-iid",
            MartingaleFamily::BoundedAr { .. } => "bounded-ar",
            MartingaleFamily::SignOfPastSum => "sign-of-past-sum",
            MartingaleFamily::AllZero => "all-zero",
        }
    }

    /// The almost-sure bound `c` on `|X_i|`.
    pub fn bound(&self) -> f64 {
        match self {
            MartingaleFamily::BoundedAr { .. } => 0.9,
            _ => 1.0,
        }
    }

    /// The families exercised by the verification harness.
    pub fn all() -> Vec<MartingaleFamily> {
        vec![
            MartingaleFamily::RademacherIid,
            MartingaleFamily::BoundedAr { phi: 1.5, x0: 0.3 },
            MartingaleFamily::SignOfPastSum,
            MartingaleFamily::AllZero,
        ]
    }

    /// Draw one length-`n` sequence.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut xs = Vec::with_capacity(n);
        let rademacher = |rng: &mut dyn rand::RngCore| -> f64 {
            if rng.next_u64() & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        match *self {
            MartingaleFamily::RademacherIid => {
                for _ in 0..n {
                    xs.push(rademacher(rng));
                }
            }
            MartingaleFamily::BoundedAr { phi, x0 } => {
                let mut prev = x0;
                for _ in 0..n {
                    let x = (phi * prev).clamp(-0.9, 0.9) * rademacher(rng);
                    xs.push(x);
                    prev = x;
                }
            }
            MartingaleFamily::SignOfPastSum => {
                let mut partial = 0.0;
                for _ in 0..n {
                    let sign = if partial < 0.0 { -1.0 } else { 1.0 };
                    let x = sign * rademacher(rng);
                    xs.push(x);
                    partial += x;
                }
            }
            MartingaleFamily::AllZero => {
                xs.resize(n, 0.0);
            }
        }
        xs
    }
}

/// Fraction of Monte Carlo trials in which `|sum_i X_i|` exceeds the
/// empirical Bernstein bound. Trials use independent `(seed, trial)`
/// streams and may run in parallel.
pub fn coverage_experiment(
    family: MartingaleFamily,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_delta(delta, delta_upper_limit())?;
    if trials < 1000 {
        return Err(Error::input(format!("need at least 1000 trials, got {trials}")));
    }
    if n == 0 {
        return Err(Error::input("sequence length must be positive"));
    }
    let c = family.bound();
    let violations: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::stream(seed, &[trial as u64]);
            let xs = family.sample(n, &mut rng);
            let bound =
                empirical_bernstein_bound(&xs, c, delta).expect("sample respects its bound");
            let total: f64 = xs.iter().sum();
            usize::from(total.abs() > bound)
        })
        .sum();
    Ok(violations as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bound_all_zero_sequence() {
        let xs = vec![0.0; 128];
        let b = empirical_bernstein_bound(&xs, 1.0, 0.01).unwrap();
        assert_relative_eq!(b, 7.0 * 200.0f64.ln(), max_relative = 1e-12);
        assert!((b - 37.088).abs() < 1e-2);
    }

    #[test]
    fn bound_rademacher_sequence() {
        let xs: Vec<f64> = (0..1024).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b = empirical_bernstein_bound(&xs, 1.0, 0.01).unwrap();
        let eta = 200.0f64.ln();
        assert_relative_eq!(b, 2.0 * (1024.0 * eta).sqrt() + 7.0 * eta, max_relative = 1e-12);
        assert!((b - 184.4).abs() < 0.1);
    }

    #[test]
    fn bound_rejects_bad_inputs() {
        assert!(empirical_bernstein_bound(&[0.0], 1.0, 0.5).is_err());
        assert!(empirical_bernstein_bound(&[2.0], 1.0, 0.01).is_err());
        assert!(empirical_bernstein_bound(&[0.0], 0.0, 0.01).is_err());
        // Just below e^-1 is fine.
        assert!(empirical_bernstein_bound(&[0.0], 1.0, 0.36).is_ok());
    }

    #[test]
    fn bound_monotonicity() {
        let small: Vec<f64> = vec![0.1; 64];
        let large: Vec<f64> = vec![0.9; 64];
        let b_small = empirical_bernstein_bound(&small, 1.0, 0.01).unwrap();
        let b_large = empirical_bernstein_bound(&large, 1.0, 0.01).unwrap();
        assert!(b_small < b_large);

        // c only matters once it exceeds 1.
        let b_c2 = empirical_bernstein_bound(&small, 2.0, 0.01).unwrap();
        assert!(b_c2 > b_small);
        let b_c05 = empirical_bernstein_bound(&small, 0.5, 0.01).unwrap();
        assert_relative_eq!(b_c05, b_small);

        // Tighter confidence means a larger bound.
        let b_tight = empirical_bernstein_bound(&small, 1.0, 0.001).unwrap();
        assert!(b_tight > b_small);
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_martingale_bound(0, 1.0, 0.01).unwrap(), 0.0);
        let b = hoeffding_martingale_bound(1024, 1.0, 0.01).unwrap();
        assert_relative_eq!(b, (2048.0 * 200.0f64.ln()).sqrt(), max_relative = 1e-12);
        assert!((b - 104.2).abs() < 0.1);
        let b2 = hoeffding_martingale_bound(1024, 2.0, 0.01).unwrap();
        assert_relative_eq!(b2, 2.0 * b, max_relative = 1e-12);
        assert!(hoeffding_martingale_bound(8, 1.0, 1.0).is_err());
    }

    #[test]
    fn bernstein_beats_hoeffding_on_low_variance() {
        // On the all-near-zero family with sum x^2 < n/8 the Bernstein
        // bound is the tighter of the two for this instance.
        let n = 1024;
        let xs = vec![0.01; n];
        let quad: f64 = xs.iter().map(|x| x * x).sum();
        assert!(quad < n as f64 / 8.0);
        let bern = empirical_bernstein_bound(&xs, 1.0, 0.01).unwrap();
        let hoef = hoeffding_martingale_bound(n, 1.0, 0.01).unwrap();
        assert!(bern < hoef, "bernstein {bern} should undercut hoeffding {hoef}");
    }

    #[test]
    fn budget_values() {
        assert_relative_eq!(coverage_budget(1024, 0.01), 0.26, max_relative = 1e-12);
        assert_relative_eq!(coverage_budget(64, 0.005), 0.09, max_relative = 1e-12);
    }

    #[test]
    fn coverage_all_zero_family() {
        let rate =
            coverage_experiment(MartingaleFamily::AllZero, 64, 0.01, 1000, 7).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn coverage_preconditions() {
        assert!(coverage_experiment(MartingaleFamily::RademacherIid, 64, 0.01, 10, 7).is_err());
        assert!(coverage_experiment(MartingaleFamily::RademacherIid, 64, 0.5, 1000, 7).is_err());
        assert!(coverage_experiment(MartingaleFamily::RademacherIid, 0, 0.01, 1000, 7).is_err());
    }

    #[test]
    fn coverage_is_deterministic() {
        let a = coverage_experiment(MartingaleFamily::SignOfPastSum, 128, 0.01, 2000, 3).unwrap();
        let b = coverage_experiment(MartingaleFamily::SignOfPastSum, 128, 0.01, 2000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn families_respect_their_bounds_and_zero_mean_signs() {
        let mut rng = crate::rng::stream(11, &[0]);
        for family in MartingaleFamily::all() {
            let xs = family.sample(512, &mut rng);
            assert_eq!(xs.len(), 512);
            let c = family.bound();
            assert!(xs.iter().all(|x| x.abs() <= c + 1e-15), "{} exceeded bound", family.name());
        }
    }
}
