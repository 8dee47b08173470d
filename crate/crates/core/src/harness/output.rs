use std::io::Write;

use serde::Serialize;

use super::{CellSummary, SweepResult};
use crate::asymptotics::{limit_row, write_limit_csv, LimitSpec};
use crate::spectral::QuadratureRule;
use crate::Result;

#[derive(Serialize)]
struct ReplicationRow<'a> {
    config_hash: &'a str,
    cell: usize,
    index: u64,
    gamma_hat: Option<f64>,
    sigma_eps_sq_hat: Option<f64>,
    sigma_alpha_sq_hat: Option<f64>,
    h2_hat: Option<f64>,
    adjusted_gamma: Option<f64>,
    boundary: Option<bool>,
    error: &'a str,
}

/// One row per replication; failed replications leave the estimate columns
/// empty and carry the message in `error`.
pub fn write_replications_csv<W: Write>(writer: W, sweep: &SweepResult) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for cell in &sweep.cells {
        for rep in &cell.replications {
            let fit = rep.fit();
            csv.serialize(ReplicationRow {
                config_hash: &sweep.config_hash,
                cell: rep.cell,
                index: rep.index,
                gamma_hat: fit.map(|f| f.gamma_hat),
                sigma_eps_sq_hat: fit.map(|f| f.sigma_eps_sq_hat),
                sigma_alpha_sq_hat: fit.map(|f| f.sigma_alpha_sq_hat),
                h2_hat: fit.map(|f| f.h2_hat),
                adjusted_gamma: fit.and_then(|f| f.adjusted_gamma),
                boundary: fit.map(|f| f.boundary),
                error: rep.result.as_ref().err().map_or("", |e| e.as_str()),
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    config_hash: &'a str,
    cell: usize,
    n: usize,
    p: usize,
    m: usize,
    replications: usize,
    succeeded: usize,
    failed: usize,
    boundary: Option<usize>,
    h2_mean: Option<f64>,
    h2_sd: Option<f64>,
    h2_bias: Option<f64>,
    sigma_eps_sq_mean: Option<f64>,
    sigma_eps_sq_sd: Option<f64>,
    sigma_eps_sq_bias: Option<f64>,
    adjusted_gamma_mean: Option<f64>,
    adjusted_gamma_sd: Option<f64>,
    adjusted_gamma_bias: Option<f64>,
    gamma_hat_mean: Option<f64>,
    gamma_hat_sd: Option<f64>,
    h2_true: f64,
    gamma0: f64,
    gamma_star: f64,
    h2_limit: f64,
}

/// One row per cell; a cell whose replications all failed has empty
/// statistics.
pub fn write_summary_csv<W: Write>(writer: W, sweep: &SweepResult) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for cell in &sweep.cells {
        let s: Option<&CellSummary> = cell.summary.as_ref();
        let gamma_star = cell.model.gamma_star();
        csv.serialize(SummaryRow {
            config_hash: &sweep.config_hash,
            cell: cell.cell.index,
            n: cell.cell.n,
            p: cell.cell.p,
            m: cell.cell.m,
            replications: cell.replications.len(),
            succeeded: cell.replications.len() - cell.failed(),
            failed: cell.failed(),
            boundary: s.map(|s| s.boundary),
            h2_mean: s.map(|s| s.h2.mean),
            h2_sd: s.and_then(|s| s.h2.sd),
            h2_bias: s.map(|s| s.h2.bias),
            sigma_eps_sq_mean: s.map(|s| s.sigma_eps_sq.mean),
            sigma_eps_sq_sd: s.and_then(|s| s.sigma_eps_sq.sd),
            sigma_eps_sq_bias: s.map(|s| s.sigma_eps_sq.bias),
            adjusted_gamma_mean: s.map(|s| s.adjusted_gamma.mean),
            adjusted_gamma_sd: s.and_then(|s| s.adjusted_gamma.sd),
            adjusted_gamma_bias: s.map(|s| s.adjusted_gamma.bias),
            gamma_hat_mean: s.map(|s| s.gamma_hat.mean),
            gamma_hat_sd: s.and_then(|s| s.gamma_hat.sd),
            h2_true: cell.model.h2_true,
            gamma0: cell.model.gamma0(),
            gamma_star,
            h2_limit: gamma_star / (1.0 + gamma_star),
        })?;
    }
    csv.flush()?;
    Ok(())
}

/// Limits at each cell's finite-sample `τ = n/p`, `ω = m/p`, evaluated at
/// `γ*`. Cells with `n > p` or a null truth are skipped.
pub fn write_limits_csv<W: Write>(writer: W, sweep: &SweepResult) -> Result<()> {
    let rule = QuadratureRule::default();
    let mut rows = Vec::new();
    for cell in &sweep.cells {
        let (n, p, m) = (cell.cell.n as f64, cell.cell.p as f64, cell.cell.m as f64);
        if n > p || cell.model.gamma0() == 0.0 {
            continue;
        }
        let spec = LimitSpec::new(n / p, m / p, cell.model.gamma0(), cell.model.sigma_eps_sq)?;
        rows.push(limit_row(spec.gamma_star(), &spec, &rule)?);
    }
    write_limit_csv(writer, &rows)
}
