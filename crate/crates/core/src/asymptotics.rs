//! Large-`n` limits of the REML equations under a sparse truth, with
//! `n/p → τ` and `m/p → ω`.
//!
//! Every formula is a rational function of the resolvent moments
//! [`h_kl`](crate::spectral::h_kl) evaluated on the Marčenko–Pastur law. The
//! unadjusted ratio converges to `γ* = ωγ₀`, so `(p/m)γ̂` is the consistent
//! estimator of `γ₀`.

use std::io::Write;

use serde::Serialize;

use crate::spectral::{h_kl, MpLaw, QuadratureRule};
use crate::{Error, Result};

/// Sparsity below which `γ*` is reported as near-degenerate.
pub const NEAR_DEGENERATE_OMEGA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSpec {
    pub tau: f64,
    pub omega: f64,
    pub gamma0: f64,
    pub sigma_eps0_sq: f64,
}

impl LimitSpec {
    pub fn new(tau: f64, omega: f64, gamma0: f64, sigma_eps0_sq: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::domain(format!("tau {tau} outside (0, 1]")));
        }
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(Error::domain(format!("omega {omega} outside (0, 1]")));
        }
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(Error::domain(format!("gamma0 {gamma0} must be positive")));
        }
        if !(sigma_eps0_sq > 0.0 && sigma_eps0_sq.is_finite()) {
            return Err(Error::domain(format!("error variance {sigma_eps0_sq} must be positive")));
        }
        Ok(Self { tau, omega, gamma0, sigma_eps0_sq })
    }

    pub fn gamma_star(&self) -> f64 {
        self.omega * self.gamma0
    }

    /// `ω` small enough that a few causal columns drive the whole signal.
    pub fn near_degenerate(&self) -> bool {
        self.omega < NEAR_DEGENERATE_OMEGA
    }

    /// `ωγ₀ / (1 + ωγ₀)`; equals the true heritability
    /// `ωσα² / (ωσα² + σε²)`.
    pub fn h2_limit(&self) -> f64 {
        let g = self.gamma_star();
        g / (1.0 + g)
    }

    pub fn law(&self) -> Result<MpLaw> {
        MpLaw::new(self.tau)
    }
}

pub fn gamma_star(spec: &LimitSpec) -> f64 {
    spec.gamma_star()
}

fn check_law(spec: &LimitSpec, law: &MpLaw) -> Result<()> {
    if (law.tau() - spec.tau).abs() > 1e-15 {
        return Err(Error::domain(format!("law tau {} differs from spec tau {}", law.tau(), spec.tau)));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma {gamma} must be positive")))
    }
}

struct Moments<'a> {
    gamma: f64,
    law: &'a MpLaw,
    rule: &'a QuadratureRule,
}

impl Moments<'_> {
    fn h(&self, k: u32, l: u32) -> Result<f64> {
        h_kl(k, l, self.gamma, self.law, self.rule)
    }

    /// `h₂₀/h₁₀ − h₂₁/h₁₁`, positive by Cauchy–Schwarz.
    fn ratio_gap(&self) -> Result<f64> {
        Ok(self.h(2, 0)? / self.h(1, 0)? - self.h(2, 1)? / self.h(1, 1)?)
    }
}

/// `σε₀²(γ*/γ − 1)(h₂₀/h₁₀ − h₂₁/h₁₁)` at `γ`.
pub fn delta_inf(gamma: f64, spec: &LimitSpec, law: &MpLaw, rule: &QuadratureRule) -> Result<f64> {
    check_gamma(gamma)?;
    check_law(spec, law)?;
    let m = Moments { gamma, law, rule };
    Ok(spec.sigma_eps0_sq * (spec.gamma_star() / gamma - 1.0) * m.ratio_gap()?)
}

/// Derivative of [`delta_inf`] at its root `γ*`.
pub fn delta_inf_prime_at_star(spec: &LimitSpec, law: &MpLaw, rule: &QuadratureRule) -> Result<f64> {
    check_law(spec, law)?;
    let g = spec.gamma_star();
    if !(g > 0.0) {
        return Err(Error::domain("gamma_star must be positive"));
    }
    let m = Moments { gamma: g, law, rule };
    Ok(-spec.sigma_eps0_sq / g * m.ratio_gap()?)
}

/// Limit of `s(γ) = y'P²y / tr(P)`: `σε₀²(h₂₀ + γ*h₂₁)/h₁₀`.
pub fn s_inf(gamma: f64, spec: &LimitSpec, law: &MpLaw, rule: &QuadratureRule) -> Result<f64> {
    check_gamma(gamma)?;
    check_law(spec, law)?;
    let m = Moments { gamma, law, rule };
    Ok(spec.sigma_eps0_sq * (m.h(2, 0)? + spec.gamma_star() * m.h(2, 1)?) / m.h(1, 0)?)
}

/// Derivative of [`s_inf`] in `γ`:
/// `σε₀²[h₂₁(h₂₀ + γ*h₂₁)/h₁₀² − 2(h₃₁ + γ*h₃₂)/h₁₀]`.
pub fn s_inf_prime(gamma: f64, spec: &LimitSpec, law: &MpLaw, rule: &QuadratureRule) -> Result<f64> {
    check_gamma(gamma)?;
    check_law(spec, law)?;
    let m = Moments { gamma, law, rule };
    let g = spec.gamma_star();
    let (h10, h20, h21) = (m.h(1, 0)?, m.h(2, 0)?, m.h(2, 1)?);
    let (h31, h32) = (m.h(3, 1)?, m.h(3, 2)?);
    Ok(spec.sigma_eps0_sq * (h21 * (h20 + g * h21) / (h10 * h10) - 2.0 * (h31 + g * h32) / h10))
}

/// Limits of `(n-q)^{-1}` times the traces `b₁ = tr(Σ⁻¹ŪΣ⁻¹Σ₁₀)`,
/// `b₂ = tr(Σ⁻²Σ₁₀)`, `c₁ = tr(Σ⁻¹Ū)`, `c₂ = tr(Σ⁻¹)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BcLimits {
    pub b1_inf: f64,
    pub b2_inf: f64,
    pub c1_inf: f64,
    pub c2_inf: f64,
}

pub fn bc_limits(gamma: f64, spec: &LimitSpec, law: &MpLaw, rule: &QuadratureRule) -> Result<BcLimits> {
    check_gamma(gamma)?;
    check_law(spec, law)?;
    let m = Moments { gamma, law, rule };
    let g = spec.gamma_star();
    let tau = spec.tau;
    let (h10, h11, h20, h21) = (m.h(1, 0)?, m.h(1, 1)?, m.h(2, 0)?, m.h(2, 1)?);
    let factor = g / (1.0 + tau * g * h10).powi(2);
    Ok(BcLimits {
        b1_inf: h21 + factor * (tau * h10 * h10 + h21),
        b2_inf: h20 + factor * h20,
        c1_inf: h11,
        c2_inf: h10,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRow {
    pub tau: f64,
    pub omega: f64,
    pub gamma0: f64,
    pub gamma: f64,
    pub delta_inf: f64,
    pub s_inf_prime: f64,
    pub b1_inf: f64,
    pub b2_inf: f64,
    pub c1_inf: f64,
    pub c2_inf: f64,
}

pub fn limit_row(gamma: f64, spec: &LimitSpec, rule: &QuadratureRule) -> Result<LimitRow> {
    let law = spec.law()?;
    let bc = bc_limits(gamma, spec, &law, rule)?;
    Ok(LimitRow {
        tau: spec.tau,
        omega: spec.omega,
        gamma0: spec.gamma0,
        gamma,
        delta_inf: delta_inf(gamma, spec, &law, rule)?,
        s_inf_prime: s_inf_prime(gamma, spec, &law, rule)?,
        b1_inf: bc.b1_inf,
        b2_inf: bc.b2_inf,
        c1_inf: bc.c1_inf,
        c2_inf: bc.c2_inf,
    })
}

/// Rows for every `LimitSpec`, at each `γ` of `gammas` plus its own `γ*`.
pub fn limit_table(specs: &[LimitSpec], gammas: &[f64], rule: &QuadratureRule) -> Result<Vec<LimitRow>> {
    let mut rows = Vec::new();
    for spec in specs {
        let mut grid: Vec<f64> = gammas.to_vec();
        grid.push(spec.gamma_star());
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        for g in grid {
            rows.push(limit_row(g, spec, rule)?);
        }
    }
    Ok(rows)
}

/// CSV with header
/// `tau,omega,gamma0,gamma,delta_inf,s_inf_prime,b1_inf,b2_inf,c1_inf,c2_inf`.
pub fn write_limit_csv<W: Write>(writer: W, rows: &[LimitRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_specs() -> Vec<LimitSpec> {
        let mut v = Vec::new();
        for tau in [0.1, 0.5, 0.9] {
            for omega in [0.01, 0.1, 0.5, 1.0] {
                for gamma0 in [0.5, 1.5, 4.0] {
                    v.push(LimitSpec::new(tau, omega, gamma0, 0.4).unwrap());
                }
            }
        }
        v
    }

    #[test]
    fn gamma_star_examples() {
        assert_eq!(LimitSpec::new(0.1, 1.0, 1.5, 0.4).unwrap().gamma_star(), 1.5);
        assert_eq!(LimitSpec::new(0.1, 0.5, 1.5, 0.4).unwrap().gamma_star(), 0.75);
        let sparse = LimitSpec::new(0.1, 0.0005, 1.5, 0.4).unwrap();
        assert_relative_eq!(sparse.gamma_star(), 0.00075, epsilon = 1e-18);
        assert!(sparse.near_degenerate());
        assert!(!LimitSpec::new(0.1, 0.01, 1.5, 0.4).unwrap().near_degenerate());
        assert!(LimitSpec::new(0.0, 0.5, 1.5, 0.4).is_err());
        assert!(LimitSpec::new(1.1, 0.5, 1.5, 0.4).is_err());
        assert!(LimitSpec::new(0.5, 0.0, 1.5, 0.4).is_err());
        assert!(LimitSpec::new(0.5, 0.5, 1.5, 0.0).is_err());
    }

    #[test]
    fn delta_inf_vanishes_at_star_with_one_sign_change() {
        let rule = QuadratureRule::default();
        for spec in grid_specs() {
            let law = spec.law().unwrap();
            let g = spec.gamma_star();
            assert_eq!(delta_inf(g, &spec, &law, &rule).unwrap(), 0.0);
            let mut changes = 0;
            let mut prev = None;
            for i in 0..50 {
                // log grid over [γ*/100, 100γ*], skipping γ* itself
                let gamma = g * 10f64.powf(-2.0 + 4.0 * (i as f64 + 0.5) / 50.0);
                let d = delta_inf(gamma, &spec, &law, &rule).unwrap();
                assert_eq!(d > 0.0, gamma < g, "{spec:?} at {gamma}: {d}");
                if let Some(p) = prev {
                    if (p > 0.0) != (d > 0.0) {
                        changes += 1;
                    }
                }
                prev = Some(d);
            }
            assert_eq!(changes, 1);
        }
    }

    #[test]
    fn well_specified_model_reduces() {
        let spec = LimitSpec::new(0.1, 1.0, 1.5, 0.4).unwrap();
        let law = spec.law().unwrap();
        assert_eq!(spec.gamma_star(), spec.gamma0);
        assert_eq!(delta_inf(1.5, &spec, &law, &QuadratureRule::default()).unwrap(), 0.0);
    }

    #[test]
    fn derivative_at_star_matches_finite_difference() {
        let rule = QuadratureRule::default();
        for spec in grid_specs() {
            let law = spec.law().unwrap();
            let g = spec.gamma_star();
            let d = delta_inf_prime_at_star(&spec, &law, &rule).unwrap();
            assert!(d < 0.0);
            let h = 1e-5 * g;
            let fd = (delta_inf(g + h, &spec, &law, &rule).unwrap() - delta_inf(g - h, &spec, &law, &rule).unwrap())
                / (2.0 * h);
            assert_relative_eq!(d, fd, max_relative = 1e-6);

            let doubled = LimitSpec { sigma_eps0_sq: 0.8, ..spec };
            assert_relative_eq!(
                delta_inf_prime_at_star(&doubled, &law, &rule).unwrap(),
                2.0 * d,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn s_inf_prime_matches_finite_difference_of_s_inf() {
        let rule = QuadratureRule::default();
        for spec in grid_specs() {
            let law = spec.law().unwrap();
            let g = spec.gamma_star();
            for gamma in [0.5 * g, g, 2.0 * g] {
                let h = 1e-5 * gamma;
                let fd = (s_inf(gamma + h, &spec, &law, &rule).unwrap()
                    - s_inf(gamma - h, &spec, &law, &rule).unwrap())
                    / (2.0 * h);
                let d = s_inf_prime(gamma, &spec, &law, &rule).unwrap();
                assert_relative_eq!(d, fd, max_relative = 1e-6, epsilon = 1e-9);
            }
            let doubled = LimitSpec { sigma_eps0_sq: 0.8, ..spec };
            assert_relative_eq!(
                s_inf_prime(g, &doubled, &law, &rule).unwrap(),
                2.0 * s_inf_prime(g, &spec, &law, &rule).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn s_inf_at_star_is_true_error_variance() {
        let rule = QuadratureRule::default();
        for spec in grid_specs() {
            let law = spec.law().unwrap();
            assert_relative_eq!(
                s_inf(spec.gamma_star(), &spec, &law, &rule).unwrap(),
                spec.sigma_eps0_sq,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn b_over_c_ratios_are_one_at_star() {
        let rule = QuadratureRule::default();
        for spec in grid_specs() {
            let law = spec.law().unwrap();
            let bc = bc_limits(spec.gamma_star(), &spec, &law, &rule).unwrap();
            assert_relative_eq!(bc.b2_inf / bc.c2_inf, 1.0, max_relative = 1e-8);
            assert!((bc.b1_inf / bc.c1_inf - bc.b2_inf / bc.c2_inf).abs() < 1e-8);
        }
    }

    #[test]
    fn heritability_first_order_identity() {
        for spec in grid_specs() {
            let sigma_alpha_sq = spec.gamma0 * spec.sigma_eps0_sq;
            let signal = spec.omega * sigma_alpha_sq;
            let h2_true = signal / (signal + spec.sigma_eps0_sq);
            assert_relative_eq!(spec.h2_limit(), h2_true, max_relative = 1e-15);
        }
    }

    #[test]
    fn table_includes_star_and_header() {
        let specs = [LimitSpec::new(0.1, 0.5, 1.5, 0.4).unwrap()];
        let rows = limit_table(&specs, &[0.5, 0.75, 1.0], &QuadratureRule::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].delta_inf, 0.0);
        let mut buf = Vec::new();
        write_limit_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "tau,omega,gamma0,gamma,delta_inf,s_inf_prime,b1_inf,b2_inf,c1_inf,c2_inf"
        );
    }

    #[test]
    fn inputs_are_validated() {
        let spec = LimitSpec::new(0.1, 0.5, 1.5, 0.4).unwrap();
        let law = spec.law().unwrap();
        let other = MpLaw::new(0.2).unwrap();
        let rule = QuadratureRule::default();
        assert!(delta_inf(0.0, &spec, &law, &rule).is_err());
        assert!(delta_inf(1.0, &spec, &other, &rule).is_err());
        assert!(s_inf_prime(-1.0, &spec, &law, &rule).is_err());
    }
}
