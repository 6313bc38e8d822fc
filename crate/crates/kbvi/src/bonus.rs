//! The derived constant family and the exploration bonuses built on it.
//!
//! All constants are functions of `(delta, beta, sigma, H, K, lambda_p,
//! lambda_r)` and the kernel bounds `C1`, `C2`:
//!
//! ```text
//! eta     = log(2 / delta)
//! eta1    = C1 eta
//! eta2    = 7 max{C1, 1} eta + beta
//! eta4    = 16 eta1 + 2 eta2
//! gamma   = 4 sqrt(log(H K / beta + e))
//! eta3    = 8 lambda_p L1 eta gamma
//! D_delta = 16 sqrt(C2 eta1 eta / beta^3)
//!           + (C2 eta4 + 2 C2) sigma / (H beta^2)
//!           + lambda_p L1 sigma^2 / (K H^2)
//!           + eta3
//! ```
//!
//! The Bernstein bonus at a queried pair with estimated next-value
//! variance `v` and generalized count `C` is
//! `9 sqrt(v eta4 / C) + 162 H eta4 / C + sigma D_delta`. At theory
//! scale these dominate everything at desk-sized experiments, so runs
//! use a scaled mode that multiplies the whole expression by one
//! configurable factor.

use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::metric::LipschitzSpec;

/// The constant family, recomputed whenever any generating parameter
/// changes.
#[derive(Clone, Debug)]
pub struct TheoryConstants {
    pub eta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub gamma: f64,
    pub d_delta: f64,
    /// `L_h` for `h = 1..=H`, indexed by `h - 1`.
    pub lipschitz: Vec<f64>,
}

impl TheoryConstants {
    pub fn lipschitz_at(&self, step: usize) -> f64 {
        self.lipschitz[step - 1]
    }
}

#[allow(clippy::too_many_arguments)]
pub fn make_theory_constants(
    delta: f64,
    beta: f64,
    sigma: f64,
    horizon: usize,
    episodes: usize,
    lambda_p: f64,
    lambda_r: f64,
    kernel: &GaussianKernel,
) -> Result<TheoryConstants> {
    let delta_max = (-1.0f64).exp();
    if !(delta > 0.0 && delta < delta_max) {
        return Err(Error::input(format!("delta must lie in (0, e^-1), got {delta}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::input(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::input(format!("sigma must be positive, got {sigma}")));
    }
    if horizon == 0 || episodes == 0 {
        return Err(Error::input("horizon and episode count must be at least 1"));
    }
    let lip = LipschitzSpec::new(lambda_r, lambda_p, horizon)?;

    let c1 = GaussianKernel::C1;
    let c2 = kernel.c2();
    let eta = (2.0 / delta).ln();
    let eta1 = c1 * eta;
    let eta2 = 7.0 * c1.max(1.0) * eta + beta;
    let eta4 = 16.0 * eta1 + 2.0 * eta2;
    let hk = horizon as f64 * episodes as f64;
    let gamma = 4.0 * (hk / beta + std::f64::consts::E).ln().sqrt();
    let lipschitz = lip.profile();
    let l1 = lipschitz[0];
    let eta3 = 8.0 * lambda_p * l1 * eta * gamma;
    let d_delta = 16.0 * (c2 * eta1 * eta / beta.powi(3)).sqrt()
        + (c2 * eta4 + 2.0 * c2) * sigma / (horizon as f64 * beta * beta)
        + lambda_p * l1 * sigma * sigma / (episodes as f64 * (horizon as f64).powi(2))
        + eta3;

    Ok(TheoryConstants { eta, eta1, eta2, eta3, eta4, gamma, d_delta, lipschitz })
}

/// How bonus magnitudes are applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BonusMode {
    /// Use the constants exactly as derived.
    Theory,
    /// Multiply the whole bonus expression by `scale`.
    Scaled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BonusConfig {
    pub mode: BonusMode,
    pub scale: f64,
}

impl BonusConfig {
    pub fn theory() -> Self {
        BonusConfig { mode: BonusMode::Theory, scale: 1.0 }
    }

    pub fn scaled(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::input(format!("bonus scale must be positive, got {scale}")));
        }
        Ok(BonusConfig { mode: BonusMode::Scaled, scale })
    }

    fn multiplier(&self) -> f64 {
        match self.mode {
            BonusMode::Theory => 1.0,
            BonusMode::Scaled => self.scale,
        }
    }
}

/// Which exploration bonus an agent adds during backward induction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BonusKind {
    Bernstein,
    Hoeffding,
    Zero,
}

/// Variance-aware Bernstein bonus:
/// `9 sqrt(v_hat eta4 / count) + 162 H_eff eta4 / count + sigma D_delta`,
/// multiplied by the configured scale in scaled mode.
pub fn bernstein_bonus(
    v_hat: f64,
    count: f64,
    h_eff: f64,
    consts: &TheoryConstants,
    cfg: &BonusConfig,
    sigma: f64,
) -> Result<f64> {
    if v_hat < 0.0 {
        return Err(Error::input(format!("variance estimate must be >= 0, got {v_hat}")));
    }
    if !(count > 0.0) {
        return Err(Error::input(format!("generalized count must be positive, got {count}")));
    }
    let raw = 9.0 * (v_hat * consts.eta4 / count).sqrt()
        + 162.0 * h_eff * consts.eta4 / count
        + sigma * consts.d_delta;
    Ok(cfg.multiplier() * raw)
}

/// Variance-blind Hoeffding-type bonus used by the `kernel-ucbvi`
/// baseline: a confidence width uniform in the value range plus the
/// smoothing-bias term, `H_eff sqrt(2 log(2/delta) / count) + L1 sigma`,
/// multiplied by the configured scale in scaled mode.
pub fn hoeffding_bonus(
    count: f64,
    h_eff: f64,
    delta: f64,
    sigma: f64,
    consts: &TheoryConstants,
    cfg: &BonusConfig,
) -> f64 {
    debug_assert!(count > 0.0);
    let width = h_eff * (2.0 * (2.0 / delta).ln() / count).sqrt();
    let bias = consts.lipschitz[0] * sigma;
    cfg.multiplier() * (width + bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn consts(delta: f64, beta: f64) -> TheoryConstants {
        make_theory_constants(delta, beta, 0.025, 50, 300, 0.9, 10.0, &GaussianKernel).unwrap()
    }

    #[test]
    fn constants_hand_checked() {
        // delta = 2 e^-2 makes eta = 2; with beta = 1 and C1 = 1:
        // eta1 = 2, eta2 = 15, eta4 = 62.
        let delta = 2.0 * (-2.0f64).exp();
        let c = make_theory_constants(delta, 1.0, 0.01, 1, 1, 0.5, 1.0, &GaussianKernel).unwrap();
        assert_relative_eq!(c.eta, 2.0, max_relative = 1e-12);
        assert_relative_eq!(c.eta1, 2.0, max_relative = 1e-12);
        assert_relative_eq!(c.eta2, 15.0, max_relative = 1e-12);
        assert_relative_eq!(c.eta4, 62.0, max_relative = 1e-12);
        // H K = 1, beta = 1: gamma = 4 sqrt(log(1 + e)).
        assert_relative_eq!(
            c.gamma,
            4.0 * (1.0 + std::f64::consts::E).ln().sqrt(),
            max_relative = 1e-12
        );
        assert!((c.gamma - 4.584).abs() < 1e-3);
    }

    #[test]
    fn constants_reject_bad_parameters() {
        let k = &GaussianKernel;
        assert!(make_theory_constants(0.5, 0.05, 0.025, 50, 300, 0.9, 10.0, k).is_err());
        assert!(make_theory_constants(0.1, 0.0, 0.025, 50, 300, 0.9, 10.0, k).is_err());
        assert!(make_theory_constants(0.1, 0.05, 0.0, 50, 300, 0.9, 10.0, k).is_err());
        assert!(make_theory_constants(0.1, 0.05, 0.025, 0, 300, 0.9, 10.0, k).is_err());
        assert!(make_theory_constants(0.1, 0.05, 0.025, 50, 300, 1.0, 10.0, k).is_err());
    }

    #[test]
    fn bernstein_bonus_middle_term() {
        let mut c = consts(0.1, 0.05);
        c.eta4 = 1.0;
        c.d_delta = 0.0;
        let cfg = BonusConfig::theory();
        let b = bernstein_bonus(0.0, 1.0, 1.0, &c, &cfg, 0.025).unwrap();
        assert_relative_eq!(b, 162.0, max_relative = 1e-12);
        // Doubling the count halves it.
        let b2 = bernstein_bonus(0.0, 2.0, 1.0, &c, &cfg, 0.025).unwrap();
        assert_relative_eq!(b2, 81.0, max_relative = 1e-12);
    }

    #[test]
    fn bernstein_bonus_variance_term() {
        let mut c = consts(0.1, 0.05);
        c.eta4 = 1.0;
        c.d_delta = 0.0;
        let cfg = BonusConfig::theory();
        let b = bernstein_bonus(4.0, 4.0, 0.0, &c, &cfg, 0.0).unwrap();
        assert_relative_eq!(b, 9.0, max_relative = 1e-12);
    }

    #[test]
    fn bernstein_bonus_rejects_negative_variance() {
        let c = consts(0.1, 0.05);
        assert!(bernstein_bonus(-1.0, 1.0, 1.0, &c, &BonusConfig::theory(), 0.0).is_err());
    }

    #[test]
    fn hoeffding_bonus_examples() {
        let mut c = consts(0.1, 0.05);
        c.lipschitz[0] = 0.0;
        let delta = 0.1f64;
        let count = 2.0 * (2.0 / delta).ln();
        let b = hoeffding_bonus(count, 1.0, delta, 0.025, &c, &BonusConfig::theory());
        assert_relative_eq!(b, 1.0, max_relative = 1e-12);
        let half = hoeffding_bonus(count, 1.0, delta, 0.025, &c, &BonusConfig::scaled(0.5).unwrap());
        assert_relative_eq!(half, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn hoeffding_bonus_vanishes_to_bias() {
        let c = consts(0.1, 0.05);
        let sigma = 0.025;
        let b = hoeffding_bonus(1e12, 100.0, 0.1, sigma, &c, &BonusConfig::theory());
        assert_relative_eq!(b, c.lipschitz[0] * sigma, max_relative = 1e-3);
    }

    #[test]
    fn bernstein_dominates_hoeffding_width_at_max_variance() {
        // With v_hat = H_eff^2 and theory constants, the Bernstein
        // variance term alone exceeds the Hoeffding width at equal
        // counts; checked on concrete instances.
        let c = consts(0.1, 0.05);
        let cfg = BonusConfig::theory();
        for &count in &[0.5, 1.0, 7.0, 133.0] {
            for &h_eff in &[1.0, 50.0, 5000.0] {
                let bern = bernstein_bonus(h_eff * h_eff, count, h_eff, &c, &cfg, 0.0).unwrap();
                let hoef = hoeffding_bonus(count, h_eff, 0.1, 0.0, &c, &cfg);
                assert!(bern >= hoef, "count={count} h={h_eff}: {bern} < {hoef}");
            }
        }
    }

    proptest! {
        #[test]
        fn eta4_identity(delta in 0.001f64..0.36, beta in 0.001f64..1.0) {
            let c = make_theory_constants(delta, beta, 0.025, 20, 100, 0.9, 5.0, &GaussianKernel).unwrap();
            prop_assert!((c.eta4 - 16.0 * c.eta1 - 2.0 * c.eta2).abs() < 1e-12 * c.eta4);
            prop_assert!(c.eta > 0.0 && c.eta1 > 0.0 && c.eta2 > 0.0);
            prop_assert!(c.eta3 > 0.0 && c.gamma > 0.0 && c.d_delta > 0.0);
        }

        #[test]
        fn bernstein_bonus_monotone(
            v in 0.0f64..100.0,
            count in 0.05f64..50.0,
        ) {
            let c = consts(0.1, 0.05);
            let cfg = BonusConfig::scaled(0.01).unwrap();
            let b = bernstein_bonus(v, count, 10.0, &c, &cfg, 0.025).unwrap();
            let b_more_var = bernstein_bonus(v + 1.0, count, 10.0, &c, &cfg, 0.025).unwrap();
            let b_more_count = bernstein_bonus(v, count * 2.0, 10.0, &c, &cfg, 0.025).unwrap();
            prop_assert!(b_more_var >= b);
            prop_assert!(b_more_count < b);
            prop_assert!(b > 0.0);
        }
    }
}
