//! REML for `y = Xβ + Z̃α + ε` with a single variance ratio `γ = σα²/σε²`.
//!
//! The fixed effects are projected out once and `Ū = A'Z̃Z̃'A` is
//! eigendecomposed once; afterwards every quantity in the two REML equations
//! is a scalar sum over the eigenpairs, `O(n)` per value of `γ`.

mod dense;
pub mod roots;

pub use dense::{dense_oracle_kernel, dense_sigma_eps_sq, fit_dense_oracle, restricted_loglik, DENSE_MAX_N};

use faer::MatRef;
use serde::Serialize;

use crate::linalg::{symmetric_eigen, ComplementBasis};
use crate::simulate::StandardizedDesign;
use crate::spectral::clamp_spectrum;
use crate::{Error, Result};

/// Eigenvalues `λ_k` of `Ū` and coordinates `w_k = v_k'A'y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSpectrum {
    lambdas: Vec<f64>,
    w: Vec<f64>,
    n: usize,
    p: usize,
    q: usize,
}

impl ProjectedSpectrum {
    /// Validates and clamps a spectrum given directly. `lambdas` need not be
    /// sorted; `w` is permuted with them.
    pub fn from_parts(lambdas: Vec<f64>, w: Vec<f64>, n: usize, p: usize, q: usize) -> Result<Self> {
        if lambdas.len() != w.len() || lambdas.is_empty() {
            return Err(Error::domain(format!(
                "{} eigenvalues with {} coordinates",
                lambdas.len(),
                w.len()
            )));
        }
        if q >= n || lambdas.len() != n - q {
            return Err(Error::domain(format!("spectrum of length {} for n={n}, q={q}", lambdas.len())));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("response coordinates must be finite"));
        }
        let clamped = clamp_spectrum(&lambdas)?;
        let mut order: Vec<usize> = (0..clamped.len()).collect();
        order.sort_by(|&a, &b| clamped[a].total_cmp(&clamped[b]));
        Ok(Self {
            lambdas: order.iter().map(|&i| clamped[i]).collect(),
            w: order.iter().map(|&i| w[i]).collect(),
            n,
            p,
            q,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `n - q`.
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    fn equal_eigenvalues(&self) -> bool {
        let lo = self.lambdas[0];
        let hi = self.lambdas[self.dim() - 1];
        hi - lo <= 1e-12 * hi
    }

    fn is_zero_kernel(&self) -> bool {
        self.lambdas.iter().all(|&l| l == 0.0)
    }

    /// The four resolvent traces `(Σλw²/D², Σλ/D, Σw²/D², Σ1/D)` with
    /// `D = 1 + γλ`.
    pub fn traces(&self, gamma: f64) -> [f64; 4] {
        let mut t = [0.0; 4];
        for (&l, &w) in self.lambdas.iter().zip(&self.w) {
            let inv = 1.0 / (1.0 + gamma * l);
            let w2 = w * w * inv * inv;
            t[0] += l * w2;
            t[1] += l * inv;
            t[2] += w2;
            t[3] += inv;
        }
        t
    }
}

/// Projects out `col(X)` and eigendecomposes `Ū = A'Z̃Z̃'A`.
pub fn project(y: &[f64], x_design: MatRef<'_, f64>, design: &StandardizedDesign) -> Result<ProjectedSpectrum> {
    let basis = ComplementBasis::new(x_design)?;
    project_with_basis(y, &basis, design)
}

pub fn project_with_basis(
    y: &[f64],
    basis: &ComplementBasis,
    design: &StandardizedDesign,
) -> Result<ProjectedSpectrum> {
    if basis.n() != design.n() {
        return Err(Error::domain("design and fixed effects have different n"));
    }
    project_kernel(y, basis, design.kernel().as_ref(), design.p())
}

/// Same as [`project`] for an arbitrary symmetric PSD kernel `K` in place
/// of `Z̃Z̃'`; `p` is carried along for the adjusted estimator.
pub fn project_kernel(
    y: &[f64],
    basis: &ComplementBasis,
    kernel: MatRef<'_, f64>,
    p: usize,
) -> Result<ProjectedSpectrum> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("response has non-finite entries"));
    }
    let ubar = basis.project_symmetric(kernel)?;
    let ay = basis.project_vector(y)?;
    let (lambdas, vectors) = symmetric_eigen(ubar.as_ref())?;
    let w: Vec<f64> = (0..lambdas.len())
        .map(|k| vectors.col(k).iter().zip(&ay).map(|(v, a)| v * a).sum())
        .collect();
    ProjectedSpectrum::from_parts(lambdas, w, basis.n(), p, basis.q())
}

/// `Σλw²/D² / Σλ/D − Σw²/D² / Σ1/D`; the REML equation for `γ` is
/// `delta(γ) = 0`.
pub fn delta(gamma: f64, spec: &ProjectedSpectrum) -> Result<f64> {
    check_gamma(gamma)?;
    if spec.is_zero_kernel() {
        return Err(Error::DegenerateKernel);
    }
    let t = spec.traces(gamma);
    Ok(t[0] / t[1] - t[2] / t[3])
}

/// `y'P_γ²y / tr(P_γ)`, the profiled `σε²` at `γ`.
pub fn s_of_gamma(gamma: f64, spec: &ProjectedSpectrum) -> Result<f64> {
    check_gamma(gamma)?;
    let t = spec.traces(gamma);
    Ok(t[2] / t[3])
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma {gamma} must be finite and >= 0")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Largest `γ` tried while expanding the bracket.
    pub gamma_cap: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { gamma_cap: 1e6, rel_tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemlFit {
    pub gamma_hat: f64,
    pub sigma_eps_sq_hat: f64,
    pub sigma_alpha_sq_hat: f64,
    pub h2_hat: f64,
    /// `(p/m)γ̂` when `m` was supplied.
    pub adjusted_gamma: Option<f64>,
    /// `γ̂ = 0` because the equation has no positive root.
    pub boundary: bool,
    pub iterations: usize,
    /// Interval that contained the root.
    #[serde(skip)]
    pub bracket: Option<(f64, f64)>,
    /// All eigenvalues equal, so `delta ≡ 0` and `γ` is not identified.
    #[serde(skip)]
    pub non_identifiable: bool,
}

impl RemlFit {
    fn at(gamma_hat: f64, sigma_eps_sq_hat: f64, spec: &ProjectedSpectrum, m_hint: Option<usize>) -> Self {
        Self {
            gamma_hat,
            sigma_eps_sq_hat,
            sigma_alpha_sq_hat: gamma_hat * sigma_eps_sq_hat,
            h2_hat: gamma_hat / (1.0 + gamma_hat),
            adjusted_gamma: m_hint.map(|m| spec.p as f64 / m as f64 * gamma_hat),
            boundary: false,
            iterations: 0,
            bracket: None,
            non_identifiable: false,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn fit(spec: &ProjectedSpectrum, m_hint: Option<usize>) -> Result<RemlFit> {
    fit_with(spec, m_hint, &FitOptions::default())
}

pub fn fit_with(spec: &ProjectedSpectrum, m_hint: Option<usize>, opts: &FitOptions) -> Result<RemlFit> {
    if m_hint == Some(0) {
        return Err(Error::domain("m must be at least 1"));
    }
    if spec.is_zero_kernel() {
        return Err(Error::DegenerateKernel);
    }
    let boundary = |non_identifiable: bool| -> Result<RemlFit> {
        let mut f = RemlFit::at(0.0, s_of_gamma(0.0, spec)?, spec, m_hint);
        f.boundary = true;
        f.non_identifiable = non_identifiable;
        Ok(f)
    };
    if spec.equal_eigenvalues() {
        return boundary(true);
    }
    let d0 = delta(0.0, spec)?;
    if d0 <= 0.0 {
        return boundary(false);
    }

    let (mut lo, mut dlo) = (0.0, d0);
    let mut hi = 1.0;
    let mut steps = 1;
    let mut dhi = delta(hi, spec)?;
    while dhi > 0.0 {
        if hi >= opts.gamma_cap {
            return Err(Error::numeric(format!(
                "REML equation has no sign change on [0, {}]: delta({hi}) = {dhi:e}",
                opts.gamma_cap
            )));
        }
        (lo, dlo) = (hi, dhi);
        hi = (2.0 * hi).min(opts.gamma_cap);
        dhi = delta(hi, spec)?;
        steps += 1;
    }
    let root = roots::brent(
        |g| delta(g, spec).unwrap_or(f64::NAN),
        lo,
        hi,
        dlo,
        dhi,
        opts.rel_tol,
        opts.max_iter,
    )?;
    let mut f = RemlFit::at(root.x, s_of_gamma(root.x, spec)?, spec, m_hint);
    f.iterations = steps + root.iterations;
    f.bracket = Some((lo, hi));
    Ok(f)
}
