//! Brute-force restricted likelihood on small instances, used as an oracle
//! for the spectral solver.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use super::roots::golden_max;
use super::RemlFit;
use crate::simulate::StandardizedDesign;
use crate::{Error, Result};

/// Largest `n` the dense oracle accepts.
pub const DENSE_MAX_N: usize = 200;

#[derive(Debug, Clone, Copy)]
struct DenseEval {
    loglik: f64,
    /// `y'P²y / tr(P)`
    sigma_eps_sq: f64,
}

fn evaluate(y: &[f64], x: MatRef<'_, f64>, kernel: MatRef<'_, f64>, gamma: f64) -> Result<DenseEval> {
    let n = y.len();
    let q = x.ncols();
    let v = Mat::<f64>::from_fn(n, n, |i, j| gamma * kernel[(i, j)] + if i == j { 1.0 } else { 0.0 });
    let llt = v
        .llt(Side::Lower)
        .map_err(|e| Error::numeric(format!("V not positive definite at gamma={gamma}: {e:?}")))?;
    let logdet_v: f64 = (0..n).map(|i| 2.0 * llt.L()[(i, i)].ln()).sum();
    let vinv = llt.solve(Mat::<f64>::identity(n, n));
    let vinv_x = &vinv * x;
    let xtvx = x.transpose() * &vinv_x;
    let llt_x = xtvx
        .llt(Side::Lower)
        .map_err(|e| Error::numeric(format!("X'V^-1X not positive definite: {e:?}")))?;
    let logdet_x: f64 = (0..q).map(|i| 2.0 * llt_x.L()[(i, i)].ln()).sum();
    let correction = &vinv_x * llt_x.solve(vinv_x.transpose());
    let p = &vinv - &correction;

    let ycol = Mat::<f64>::from_fn(n, 1, |i, _| y[i]);
    let py = &p * &ycol;
    let ypy: f64 = (0..n).map(|i| y[i] * py[(i, 0)]).sum();
    let yp2y: f64 = (0..n).map(|i| py[(i, 0)] * py[(i, 0)]).sum();
    let trace_p: f64 = (0..n).map(|i| p[(i, i)]).sum();
    let loglik = -0.5 * ((n - q) as f64 * ypy.ln() + logdet_v + logdet_x);
    Ok(DenseEval { loglik, sigma_eps_sq: yp2y / trace_p })
}

/// Restricted log-likelihood with `σε²` profiled out, up to a constant:
/// `-½[(n-q) ln(y'Py) + ln|V| + ln|X'V⁻¹X|]` with `V = I + γK`.
pub fn restricted_loglik(y: &[f64], x: MatRef<'_, f64>, kernel: MatRef<'_, f64>, gamma: f64) -> Result<f64> {
    check_inputs(y, x, kernel)?;
    Ok(evaluate(y, x, kernel, gamma)?.loglik)
}

fn check_inputs(y: &[f64], x: MatRef<'_, f64>, kernel: MatRef<'_, f64>) -> Result<()> {
    let n = y.len();
    if n > DENSE_MAX_N {
        return Err(Error::domain(format!("dense oracle refuses n = {n} > {DENSE_MAX_N}")));
    }
    if x.nrows() != n || kernel.nrows() != n || kernel.ncols() != n || x.ncols() >= n {
        return Err(Error::domain("dense oracle inputs have inconsistent dimensions"));
    }
    Ok(())
}

/// Maximizes the dense restricted likelihood over `grid` (sorted, `γ ≥ 0`)
/// and refines the best grid point by golden-section search between its
/// neighbours.
pub fn fit_dense_oracle(
    y: &[f64],
    x: MatRef<'_, f64>,
    design: &StandardizedDesign,
    grid: &[f64],
    m_hint: Option<usize>,
) -> Result<RemlFit> {
    dense_oracle_kernel(y, x, design.kernel().as_ref(), design.p(), grid, m_hint)
}

pub fn dense_oracle_kernel(
    y: &[f64],
    x: MatRef<'_, f64>,
    kernel: MatRef<'_, f64>,
    p: usize,
    grid: &[f64],
    m_hint: Option<usize>,
) -> Result<RemlFit> {
    check_inputs(y, x, kernel)?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] < 0.0 {
        return Err(Error::domain("grid needs at least two increasing values >= 0"));
    }
    let profile: Vec<f64> = grid
        .iter()
        .map(|&g| evaluate(y, x, kernel, g).map(|e| e.loglik))
        .collect::<Result<_>>()?;
    let best = (0..grid.len())
        .max_by(|&a, &b| profile[a].total_cmp(&profile[b]))
        .expect("nonempty grid");
    let (lo_ll, hi_ll) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let flat = hi_ll - lo_ll <= 1e-9 * (1.0 + hi_ll.abs());

    let mut boundary = false;
    let gamma_hat = if flat {
        boundary = true;
        0.0
    } else {
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(grid.len() - 1)];
        let tol = 1e-10 * (1.0 + hi);
        let (x_star, ll_star) = golden_max(
            |g| evaluate(y, x, kernel, g).map(|e| e.loglik).unwrap_or(f64::NEG_INFINITY),
            lo,
            hi,
            tol,
        );
        if best == 0 && grid[0] == 0.0 && profile[0] >= ll_star {
            boundary = true;
            0.0
        } else if profile[best] > ll_star {
            grid[best]
        } else {
            x_star
        }
    };
    let sigma_eps_sq_hat = evaluate(y, x, kernel, gamma_hat)?.sigma_eps_sq;
    Ok(RemlFit {
        gamma_hat,
        sigma_eps_sq_hat,
        sigma_alpha_sq_hat: gamma_hat * sigma_eps_sq_hat,
        h2_hat: gamma_hat / (1.0 + gamma_hat),
        adjusted_gamma: m_hint.map(|m| p as f64 / m as f64 * gamma_hat),
        boundary,
        iterations: grid.len(),
        bracket: Some((grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)])),
        non_identifiable: flat,
    })
}

/// `σε²` at a fixed `γ` evaluated densely, `y'P²y / tr(P)`.
pub fn dense_sigma_eps_sq(y: &[f64], x: MatRef<'_, f64>, kernel: MatRef<'_, f64>, gamma: f64) -> Result<f64> {
    check_inputs(y, x, kernel)?;
    Ok(evaluate(y, x, kernel, gamma)?.sigma_eps_sq)
}
