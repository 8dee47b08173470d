//! Monte Carlo experiments: configuration, replications, sweeps, summaries
//! and their CSV output.
//!
//! A config expands into cells `(n, p, m)`. Replication `r` of cell `c` runs
//! on stream `r` of a generator keyed by a seed mixed from the master seed
//! and `c`, so every replication can be recomputed on its own.

mod config;
mod output;

pub use config::{
    Cell, DesignKind, ExperimentConfig, OneOrMany, SweepMode, DESK_SCALE_MAX_NP,
};
pub use output::{write_limits_csv, write_replications_csv, write_summary_csv};

use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{symmetric_eigenvalues, ComplementBasis};
use crate::reml::{fit, project_with_basis, RemlFit};
use crate::simulate::{
    draw_allele_freqs, draw_genotypes_with, draw_phenotypes, gaussian_design, replication_stream, standardize,
    DegeneratePolicy, TrueModel,
};
use crate::spectral::{esd_summary, EsdSummary, MpLaw};
use crate::{Error, Result};

/// Seed of a cell's generator.
pub fn cell_seed(master_seed: u64, cell: usize) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = master_seed ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of a single replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub cell: usize,
    pub index: u64,
    pub result: std::result::Result<RemlFit, String>,
}

impl Replication {
    pub fn fit(&self) -> Option<&RemlFit> {
        self.result.as_ref().ok()
    }
}

/// Simulate, project and fit once on stream `index` of `cell`.
pub fn run_replication(cfg: &ExperimentConfig, cell: &Cell, index: u64) -> Result<RemlFit> {
    let model = cfg.true_model(cell)?;
    replicate(cfg, cell, &model, index).map_err(|e| Error::Replication { index, source: Box::new(e) })
}

fn replicate(cfg: &ExperimentConfig, cell: &Cell, model: &TrueModel, index: u64) -> Result<RemlFit> {
    let mut rng = replication_stream(cell_seed(cfg.master_seed, cell.index), index);
    let design = match cfg.design_kind {
        DesignKind::Snp => {
            let panel = draw_allele_freqs(cell.p, &mut rng)?;
            standardize(&draw_genotypes_with(&panel, cell.n, cfg.degenerate, &mut rng)?)?
        }
        DesignKind::Gaussian => gaussian_design(cell.n, cell.p, true, &mut rng)?,
    };
    let ph = draw_phenotypes(&design, model, cfg.causal, &mut rng)?;
    let basis = ComplementBasis::intercept(cell.n)?;
    let spec = project_with_basis(&ph.y, &basis, &design)?;
    fit(&spec, Some(cell.m))
}

/// Mean, sample standard deviation (divisor `r-1`, absent for `r = 1`) and
/// bias against a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: Option<f64>,
    pub bias: f64,
}

impl Stat {
    pub fn from_values(values: &[f64], truth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("no values to summarize"));
        }
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let sd = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt());
        Ok(Self { mean, sd, bias: mean - truth })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    /// Number of successful fits summarized.
    pub replications: usize,
    pub boundary: usize,
    pub h2: Stat,
    pub sigma_eps_sq: Stat,
    pub adjusted_gamma: Stat,
    pub gamma_hat: Stat,
    pub h2_true: f64,
    pub gamma0: f64,
    pub sigma_eps_sq_true: f64,
    /// `(m/p)γ₀` at the finite-sample ratio.
    pub gamma_star: f64,
    /// `γ*/(1+γ*)`.
    pub h2_limit: f64,
}

/// Summary of the successful fits of one cell against its true model.
pub fn summarize(cell: &Cell, fits: &[RemlFit], truth: &TrueModel) -> Result<CellSummary> {
    if fits.is_empty() {
        return Err(Error::domain(format!("cell {} has no successful fits", cell.index)));
    }
    let col = |f: fn(&RemlFit) -> f64| fits.iter().map(f).collect::<Vec<_>>();
    let adjusted = col(|f| f.adjusted_gamma.unwrap_or(f64::NAN));
    let gamma_star = truth.gamma_star();
    Ok(CellSummary {
        cell: cell.index,
        n: cell.n,
        p: cell.p,
        m: cell.m,
        replications: fits.len(),
        boundary: fits.iter().filter(|f| f.boundary).count(),
        h2: Stat::from_values(&col(|f| f.h2_hat), truth.h2_true)?,
        sigma_eps_sq: Stat::from_values(&col(|f| f.sigma_eps_sq_hat), truth.sigma_eps_sq)?,
        adjusted_gamma: Stat::from_values(&adjusted, truth.gamma0())?,
        gamma_hat: Stat::from_values(&col(|f| f.gamma_hat), gamma_star)?,
        h2_true: truth.h2_true,
        gamma0: truth.gamma0(),
        sigma_eps_sq_true: truth.sigma_eps_sq,
        gamma_star,
        h2_limit: gamma_star / (1.0 + gamma_star),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub model: TrueModel,
    pub replications: Vec<Replication>,
    /// `None` when every replication failed.
    pub summary: Option<CellSummary>,
}

impl CellResult {
    pub fn fits(&self) -> Vec<RemlFit> {
        self.replications.iter().filter_map(|r| r.fit().copied()).collect()
    }

    pub fn failed(&self) -> usize {
        self.replications.iter().filter(|r| r.result.is_err()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config_hash: String,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    /// Writes `replications.csv`, `summary.csv` and, on request,
    /// `limits.csv` into `dir`.
    pub fn write_outputs(&self, dir: &std::path::Path, limits: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let file = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
        write_replications_csv(file("replications.csv")?, self)?;
        write_summary_csv(file("summary.csv")?, self)?;
        if limits {
            write_limits_csv(file("limits.csv")?, self)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Allow cells above the desk-scale size limit.
    pub full_scale: bool,
    /// Worker threads; `None` uses the config value, then rayon's default.
    pub threads: Option<usize>,
}

/// Runs every replication of every cell. Failed replications are kept as
/// error rows; a cell where all of them fail has no summary.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    if !opts.full_scale {
        if let Some(c) = cells.iter().find(|c| c.n * c.p > DESK_SCALE_MAX_NP) {
            return Err(Error::Config(format!(
                "cell n={}, p={} exceeds desk scale; pass --full-scale to run it",
                c.n, c.p
            )));
        }
    }
    let models: Vec<TrueModel> = cells.iter().map(|c| cfg.true_model(c)).collect::<Result<_>>()?;
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications as u64).map(move |r| (c, r)))
        .collect();
    let work = || -> Vec<Replication> {
        tasks
            .par_iter()
            .map(|&(c, r)| Replication {
                cell: cells[c].index,
                index: r,
                result: replicate(cfg, &cells[c], &models[c], r).map_err(|e| e.to_string()),
            })
            .collect()
    };
    let threads = opts.threads.or(cfg.threads);
    let mut reps = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut out = Vec::with_capacity(cells.len());
    for (cell, model) in cells.into_iter().zip(models).rev() {
        let split = reps.len() - cfg.replications;
        let replications = reps.split_off(split);
        let fits: Vec<RemlFit> = replications.iter().filter_map(|r| r.fit().copied()).collect();
        let summary = if fits.is_empty() { None } else { Some(summarize(&cell, &fits, &model)?) };
        out.push(CellResult { cell, model, replications, summary });
    }
    out.reverse();
    Ok(SweepResult { config_hash: cfg.hash()?, cells: out })
}

/// Eigenvalues of `Z̃Z̃'` (or of `A'Z̃Z̃'A` with `A` the complement of the
/// intercept) for one simulated design, compared with the Marčenko–Pastur
/// law at `τ = n/p`. Gaussian designs are left unstandardized.
pub fn design_spectrum(
    n: usize,
    p: usize,
    kind: DesignKind,
    project_intercept: bool,
    seed: u64,
) -> Result<EsdSummary> {
    if n > p {
        return Err(Error::domain(format!("spectrum diagnostics need n <= p, got n={n}, p={p}")));
    }
    let mut rng = replication_stream(seed, 0);
    let design = match kind {
        DesignKind::Snp => {
            let panel = draw_allele_freqs(p, &mut rng)?;
            standardize(&draw_genotypes_with(&panel, n, DegeneratePolicy::Resample, &mut rng)?)?
        }
        DesignKind::Gaussian => gaussian_design(n, p, false, &mut rng)?,
    };
    let kernel = design.kernel();
    let eigenvalues = if project_intercept {
        let basis = ComplementBasis::intercept(n)?;
        symmetric_eigenvalues(basis.project_symmetric(kernel.as_ref())?.as_ref())?
    } else {
        symmetric_eigenvalues(kernel.as_ref())?
    };
    esd_summary(&eigenvalues, &MpLaw::new(n as f64 / p as f64)?)
}
