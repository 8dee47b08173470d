//! Marčenko–Pastur law, resolvent moments and spectral diagnostics.
//!
//! All limit formulas in [`crate::asymptotics`] are built from the functional
//!
//! ```text
//! h_{k,l}(γ) = ∫ x^l (1 + γx)^{-k} f_τ(x) dx
//! ```
//!
//! where `f_τ` is the Marčenko–Pastur density with aspect ratio `τ`. The
//! integral is evaluated after the substitution `x = (1+τ) + 2√τ·t`, which
//! maps the support onto `[-1, 1]` and turns the density's square-root edge
//! behaviour into the Chebyshev weight `√(1-t²)`:
//!
//! ```text
//! ∫ g(x) f_τ(x) dx = (2/π) ∫ g(x(t)) / x(t) · √(1-t²) dt
//! ```
//!
//! The right-hand side is integrated with Gauss–Chebyshev nodes of the second
//! kind.

mod hanson_wright;

pub use hanson_wright::{
    calibrate_hanson_wright_constant, hanson_wright_bound, hanson_wright_check,
    hanson_wright_exponent, EntryDistribution, HansonWrightReport, QuadraticKind,
};

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::{Error, Result};

/// Default number of quadrature nodes.
pub const DEFAULT_NODE_COUNT: usize = 256;

/// Largest `k` or `l` accepted by [`h_kl`].
pub const MAX_ORDER: u32 = 8;

/// Above this aspect ratio the `1/x` factor of the density has a pole close
/// to the left edge of the support, so `l = 0` moments are reduced to `l = 1`
/// moments through the recurrence instead of being integrated directly.
const DIRECT_TAU_MAX: f64 = 0.9;

/// Agreement required between the `N`- and `2N`-node evaluations.
const REFINEMENT_TOL: f64 = 1e-9;

/// Eigenvalues in `[-CLAMP_TOL, 0)` are treated as roundoff and set to zero.
pub const CLAMP_TOL: f64 = 1e-10;

/// The Marčenko–Pastur law with aspect ratio `tau ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpLaw {
    tau: f64,
    support_lo: f64,
    support_hi: f64,
}

impl MpLaw {
    pub fn new(tau: f64) -> Result<Self> {
        let (support_lo, support_hi) = mp_support(tau)?;
        Ok(Self { tau, support_lo, support_hi })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support_lo, self.support_hi)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        mp_pdf(x, self)
    }

    /// Distribution function, in closed form.
    ///
    /// With `x = 1 + τ - 2√τ cos θ` the integral of the density reduces to
    /// elementary functions of `θ`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support_lo {
            return 0.0;
        }
        if x >= self.support_hi {
            return 1.0;
        }
        let tau = self.tau;
        let sqrt_tau = tau.sqrt();
        let cos_theta = ((1.0 + tau - x) / (2.0 * sqrt_tau)).clamp(-1.0, 1.0);
        let theta = cos_theta.acos();
        let mut value = theta.sin() / (2.0 * sqrt_tau) + (1.0 + tau) * theta / (4.0 * tau);
        if tau < 1.0 {
            let ratio = (1.0 + sqrt_tau) / (1.0 - sqrt_tau);
            value -= (1.0 - tau) / (2.0 * tau) * (ratio * (theta / 2.0).tan()).atan();
        }
        (2.0 / PI * value).clamp(0.0, 1.0)
    }

    /// Maps a Chebyshev abscissa `t ∈ [-1, 1]` onto the support.
    fn abscissa(&self, t: f64) -> f64 {
        (1.0 + self.tau) + 2.0 * self.tau.sqrt() * t
    }

    /// `∫ g(x) f_τ(x) dx` with the given rule.
    ///
    /// Accurate when `g(x)/x` is smooth on the support; for `τ` close to one
    /// the support reaches towards zero and integrands without a factor of
    /// `x` converge slowly.
    pub fn integrate<F: Fn(f64) -> f64>(&self, rule: &QuadratureRule, g: F) -> f64 {
        self.integrate_reduced(rule.pairs(), |x| g(x) / x)
    }

    /// `(2/π) Σ w_i φ(x(t_i))`, i.e. `∫ x φ(x) f_τ(x) dx`.
    fn integrate_reduced<F: Fn(f64) -> f64>(&self, pairs: &[(f64, f64)], phi: F) -> f64 {
        let sum: f64 = pairs.iter().map(|&(t, w)| w * phi(self.abscissa(t))).sum();
        2.0 / PI * sum
    }
}

/// Support `[(1-√τ)², (1+√τ)²]` of the Marčenko–Pastur law.
pub fn mp_support(tau: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(format!("aspect ratio {tau} outside (0, 1]")));
    }
    let s = tau.sqrt();
    Ok(((1.0 - s).powi(2), (1.0 + s).powi(2)))
}

/// Marčenko–Pastur density; zero outside the support.
pub fn mp_pdf(x: f64, law: &MpLaw) -> f64 {
    let (lo, hi) = law.support();
    if x < lo || x > hi || x <= 0.0 {
        return 0.0;
    }
    ((hi - x) * (x - lo)).max(0.0).sqrt() / (2.0 * PI * law.tau * x)
}

/// Gauss–Chebyshev rule of the second kind on `[-1, 1]`, i.e. for
/// `∫ φ(t) √(1-t²) dt`.
///
/// Carries a second rule with twice the nodes, used to check convergence.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    node_count: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pairs: Vec<(f64, f64)>,
    refined: Vec<(f64, f64)>,
}

impl QuadratureRule {
    pub fn new(node_count: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::domain("quadrature rule needs at least one node"));
        }
        let pairs = chebyshev_u_pairs(node_count);
        let refined = chebyshev_u_pairs(2 * node_count);
        Ok(Self {
            node_count,
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            pairs,
            refined,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::new(DEFAULT_NODE_COUNT).expect("default node count is positive")
    }
}

fn chebyshev_u_pairs(n: usize) -> Vec<(f64, f64)> {
    let h = PI / (n as f64 + 1.0);
    (1..=n)
        .map(|i| {
            let theta = h * i as f64;
            // -cos gives ascending nodes
            (-theta.cos(), h * theta.sin().powi(2))
        })
        .collect()
}

/// `h_{k,l}(γ) = ∫ x^l (1+γx)^{-k} f_τ(x) dx`.
///
/// For `l ≥ 1` the reduced integrand `x^{l-1}(1+γx)^{-k}` is smooth on the
/// support and is integrated directly. For `l = 0` and `τ > 0.9` the value is
/// obtained from `h_{k,0} = h_{k-1,0} - γ h_{k,1}` with `h_{0,0} = 1`.
pub fn h_kl(k: u32, l: u32, gamma: f64, law: &MpLaw, rule: &QuadratureRule) -> Result<f64> {
    if k > MAX_ORDER || l > MAX_ORDER {
        return Err(Error::domain(format!(
            "h_{{{k},{l}}}: orders above {MAX_ORDER} are not supported"
        )));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("h_{{{k},{l}}}: gamma {gamma} must be finite and >= 0")));
    }
    if l == 0 && law.tau > DIRECT_TAU_MAX {
        let mut value = 1.0;
        for j in 1..=k {
            value -= gamma * h_kl_direct(j, 1, gamma, law, rule)?;
        }
        return Ok(value);
    }
    h_kl_direct(k, l, gamma, law, rule)
}

fn h_kl_direct(k: u32, l: u32, gamma: f64, law: &MpLaw, rule: &QuadratureRule) -> Result<f64> {
    let phi = |x: f64| x.powi(l as i32 - 1) / (1.0 + gamma * x).powi(k as i32);
    let coarse = law.integrate_reduced(&rule.pairs, phi);
    let fine = law.integrate_reduced(&rule.refined, phi);
    let gap = (fine - coarse).abs();
    if !(gap <= REFINEMENT_TOL * fine.abs().max(1.0)) {
        return Err(Error::numeric(format!(
            "h_{{{k},{l}}}({gamma}) at tau={}: refinement gap {gap:e} with {} nodes",
            law.tau, rule.node_count
        )));
    }
    Ok(fine)
}

/// Spectrum with its Kolmogorov–Smirnov distance to a Marčenko–Pastur law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EsdSummary {
    pub eigenvalues: Vec<f64>,
    pub ks_distance: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn esd_summary(eigenvalues: &[f64], law: &MpLaw) -> Result<EsdSummary> {
    if eigenvalues.is_empty() {
        return Err(Error::domain("empty spectrum"));
    }
    let mut sorted = clamp_spectrum(eigenvalues)?;
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let ks_distance = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(EsdSummary {
        lambda_min: sorted[0],
        lambda_max: sorted[sorted.len() - 1],
        eigenvalues: sorted,
        ks_distance,
    })
}

/// Validates eigenvalues and clamps roundoff negatives to zero.
pub(crate) fn clamp_spectrum(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    eigenvalues
        .iter()
        .map(|&x| {
            if !x.is_finite() || x < -CLAMP_TOL {
                Err(Error::domain(format!("eigenvalue {x} is not finite and nonnegative")))
            } else {
                Ok(x.max(0.0))
            }
        })
        .collect()
}

/// One row of the `h_{k,l}` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HklRow {
    pub tau: f64,
    pub gamma: f64,
    pub k: u32,
    pub l: u32,
    pub value: f64,
}

pub fn hkl_table(
    taus: &[f64],
    gammas: &[f64],
    k_max: u32,
    l_max: u32,
    rule: &QuadratureRule,
) -> Result<Vec<HklRow>> {
    let mut rows = Vec::with_capacity(taus.len() * gammas.len() * ((k_max + 1) * (l_max + 1)) as usize);
    for &tau in taus {
        let law = MpLaw::new(tau)?;
        for &gamma in gammas {
            for k in 0..=k_max {
                for l in 0..=l_max {
                    let value = h_kl(k, l, gamma, &law, rule)?;
                    rows.push(HklRow { tau, gamma, k, l, value });
                }
            }
        }
    }
    Ok(rows)
}

/// Writes rows with header `tau,gamma,k,l,value`.
pub fn write_hkl_csv<W: Write>(writer: W, rows: &[HklRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}
