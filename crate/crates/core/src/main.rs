use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use misreml::asymptotics::{limit_table, write_limit_csv, LimitSpec};
use misreml::harness::{
    cell_seed, design_spectrum, run_sweep, DesignKind, ExperimentConfig, RunOptions, DESK_SCALE_MAX_NP,
};
use misreml::linalg::ComplementBasis;
use misreml::reml::{fit, project_with_basis};
use misreml::simulate::{
    draw_allele_freqs, draw_genotypes_with, draw_phenotypes, gaussian_design, read_design, replication_stream,
    standardize, write_design, TrueModel,
};
use misreml::spectral::QuadratureRule;
use misreml::{Error, Result};

#[derive(Parser)]
#[command(name = "misreml", version, about = "REML under a misspecified high-dimensional LMM")]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Allow cells with n·p above the desk-scale limit.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one design/phenotype bundle from the first cell of a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Replication index within the cell.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a bundle written by `simulate`; prints the fit as JSON.
    Fit {
        /// Bundle directory.
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell and replication of a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides output_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a table of closed-form limits.
    Limits {
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        tau: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5,1")]
        omega: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1.5")]
        gamma0: Vec<f64>,
        #[arg(long, default_value_t = 0.4)]
        sigma_eps_sq: f64,
        /// Extra γ values; γ* of each parameter set is always included.
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the spectrum of one simulated kernel with the Marčenko–Pastur law.
    Spectra {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10000)]
        p: usize,
        #[arg(long, value_enum, default_value_t = Kind::Gaussian)]
        design: Kind,
        /// Project out the intercept first.
        #[arg(long)]
        intercept: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV of eigenvalue, empirical CDF and limiting CDF.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Snp,
    Gaussian,
}

impl From<Kind> for DesignKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Snp => DesignKind::Snp,
            Kind::Gaussian => DesignKind::Gaussian,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    y: Vec<f64>,
    m: usize,
    truth: TrueModel,
    causal: Vec<usize>,
    config_hash: String,
    index: u64,
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn warn_full_scale(n: usize, p: usize) {
    if n * p > DESK_SCALE_MAX_NP {
        eprintln!("warning: n={n}, p={p} is beyond desk scale and may take hours");
    }
}

fn simulate(cli: &Cli, config: &Path, seed: Option<u64>, index: u64, out: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let cell = cfg.cells()?[0];
    if cell.n * cell.p > DESK_SCALE_MAX_NP && !cli.full_scale {
        return Err(Error::Config("design exceeds desk scale; pass --full-scale".into()));
    }
    warn_full_scale(cell.n, cell.p);
    let model = cfg.true_model(&cell)?;
    let mut rng = replication_stream(cell_seed(cfg.master_seed, cell.index), index);
    let design = match cfg.design_kind {
        DesignKind::Snp => {
            let panel = draw_allele_freqs(cell.p, &mut rng)?;
            standardize(&draw_genotypes_with(&panel, cell.n, cfg.degenerate, &mut rng)?)?
        }
        DesignKind::Gaussian => gaussian_design(cell.n, cell.p, true, &mut rng)?,
    };
    let ph = draw_phenotypes(&design, &model, cfg.causal, &mut rng)?;
    std::fs::create_dir_all(out)?;
    let generation = serde_json::json!({
        "master_seed": cfg.master_seed,
        "index": index,
        "design_kind": cfg.design_kind,
        "config_hash": cfg.hash()?,
    });
    write_design(&out.join("design.bin"), &design, generation)?;
    let bundle = Bundle { y: ph.y, m: cell.m, truth: model, causal: ph.causal, config_hash: cfg.hash()?, index };
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("bundle.json"))?), &bundle)?;
    Ok(())
}

fn fit_bundle(bundle: &Path, out: Option<&Path>) -> Result<()> {
    let design = read_design(&bundle.join("design.bin"))?;
    let text = std::fs::read_to_string(bundle.join("bundle.json"))?;
    let b: Bundle = serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad bundle: {e}")))?;
    let basis = ComplementBasis::intercept(design.n())?;
    let spec = project_with_basis(&b.y, &basis, &design)?;
    let f = fit(&spec, Some(b.m))?;
    let mut w = writer(out)?;
    writeln!(w, "{}", f.to_json()?)?;
    Ok(())
}

fn sweep(cli: &Cli, config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_path.clone())
        .ok_or_else(|| Error::Config("no output directory: set output_path or pass --out".into()))?;
    if cli.full_scale {
        for c in cfg.cells()? {
            warn_full_scale(c.n, c.p);
        }
    }
    let result = run_sweep(&cfg, &RunOptions { full_scale: cli.full_scale, threads: cli.threads })?;
    result.write_outputs(&dir, cfg.emit_limits)?;
    for cell in &result.cells {
        match &cell.summary {
            Some(s) => eprintln!(
                "cell {} (n={}, p={}, m={}): h2 {:.4}, sigma_eps_sq {:.4}, adjusted gamma {:.4}, {} failed",
                s.cell,
                s.n,
                s.p,
                s.m,
                s.h2.mean,
                s.sigma_eps_sq.mean,
                s.adjusted_gamma.mean,
                cell.failed()
            ),
            None => eprintln!("cell {}: every replication failed", cell.cell.index),
        }
    }
    Ok(())
}

fn limits(tau: &[f64], omega: &[f64], gamma0: &[f64], sigma: f64, gamma: &[f64], out: Option<&Path>) -> Result<()> {
    let mut specs = Vec::new();
    for &t in tau {
        for &o in omega {
            for &g in gamma0 {
                specs.push(LimitSpec::new(t, o, g, sigma)?);
            }
        }
    }
    let rows = limit_table(&specs, gamma, &QuadratureRule::default())?;
    write_limit_csv(writer(out)?, &rows)
}

#[derive(Serialize)]
struct SpectraReport {
    n: usize,
    p: usize,
    tau: f64,
    support: (f64, f64),
    lambda_min: f64,
    lambda_max: f64,
    ks_distance: f64,
}

fn spectra(n: usize, p: usize, kind: Kind, intercept: bool, seed: u64, out: Option<&Path>) -> Result<()> {
    let summary = design_spectrum(n, p, kind.into(), intercept, seed)?;
    let law = misreml::spectral::MpLaw::new(n as f64 / p as f64)?;
    let report = SpectraReport {
        n,
        p,
        tau: law.tau(),
        support: law.support(),
        lambda_min: summary.lambda_min,
        lambda_max: summary.lambda_max,
        ks_distance: summary.ks_distance,
    };
    println!("{}", serde_json::to_string(&report)?);
    if let Some(path) = out {
        let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        csv.write_record(["eigenvalue", "esd_cdf", "mp_cdf"])?;
        let k = summary.eigenvalues.len() as f64;
        for (i, &x) in summary.eigenvalues.iter().enumerate() {
            csv.write_record([x.to_string(), ((i as f64 + 1.0) / k).to_string(), law.cdf(x).to_string()])?;
        }
        csv.flush()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    // replications are the unit of parallelism; keep the kernels serial
    faer::set_global_parallelism(faer::Par::Seq);
    match &cli.command {
        Command::Simulate { config, seed, index, out } => simulate(cli, config, *seed, *index, out),
        Command::Fit { bundle, out } => fit_bundle(bundle, out.as_deref()),
        Command::Sweep { config, seed, out } => sweep(cli, config, *seed, out.as_deref()),
        Command::Limits { tau, omega, gamma0, sigma_eps_sq, gamma, out } => {
            limits(tau, omega, gamma0, *sigma_eps_sq, gamma, out.as_deref())
        }
        Command::Spectra { n, p, design, intercept, seed, out } => {
            spectra(*n, *p, *design, *intercept, *seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
