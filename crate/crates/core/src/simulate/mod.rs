//! Data-generating process: allele frequencies, genotypes, standardized or
//! Gaussian designs and phenotypes under a sparse true model.
//!
//! Every generator takes an explicit random stream. Replication streams are
//! derived from `(master_seed, index)` with [`replication_stream`], so that
//! replications can run in any order or in parallel and still reproduce.

mod io;

pub use io::{read_design, write_design, DesignSidecar, DESIGN_MAGIC};

use faer::Mat;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::gram;
use crate::{Error, Result};

/// Lower and upper bounds of simulated allele frequencies.
pub const FREQ_RANGE: (f64, f64) = (0.05, 0.5);

/// Counter-based stream: the master seed keys the generator, the
/// replication index selects the stream.
pub fn replication_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnpPanel {
    freqs: Vec<f64>,
}

impl SnpPanel {
    pub fn new(freqs: Vec<f64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::domain("empty SNP panel"));
        }
        if let Some(f) = freqs.iter().find(|f| !(FREQ_RANGE.0..=FREQ_RANGE.1).contains(*f)) {
            return Err(Error::domain(format!("allele frequency {f} outside [0.05, 0.5]")));
        }
        Ok(Self { freqs })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// `n × p` matrix of genotype codes in `{0, 1, 2}`, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    n: usize,
    p: usize,
    values: Vec<u8>,
}

impl GenotypeMatrix {
    pub fn from_columns(n: usize, p: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != n * p {
            return Err(Error::domain(format!("{} codes for a {n}x{p} matrix", values.len())));
        }
        if values.iter().any(|&v| v > 2) {
            return Err(Error::domain("genotype codes must be 0, 1 or 2"));
        }
        Ok(Self { n, p, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn column(&self, j: usize) -> &[u8] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[j * self.n + i]
    }
}

/// Column-standardized `n × p` design `Z`; the model uses `Z̃ = p^{-1/2} Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDesign {
    z: Mat<f64>,
    standardized: bool,
}

impl StandardizedDesign {
    /// Wraps a matrix as-is, without standardizing.
    pub fn from_raw(z: Mat<f64>) -> Result<Self> {
        if z.nrows() < 2 || z.ncols() == 0 {
            return Err(Error::domain("design needs at least two rows and one column"));
        }
        Ok(Self { z, standardized: false })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn z(&self) -> &Mat<f64> {
        &self.z
    }

    /// Whether columns were standardized to sample mean 0 and variance 1.
    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// The `p^{-1/2}` factor of `Z̃`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.p() as f64).sqrt()
    }

    /// `Z̃Z̃' = p^{-1} Z Z'`.
    pub fn kernel(&self) -> Mat<f64> {
        gram(self.z.as_ref(), 1.0 / self.p() as f64)
    }

    /// `p^{-1} Z_S Z_S'` for a subset `S` of columns.
    pub fn subset_kernel(&self, columns: &[usize]) -> Mat<f64> {
        let sub = Mat::<f64>::from_fn(self.n(), columns.len(), |i, j| self.z[(i, columns[j])]);
        gram(sub.as_ref(), 1.0 / self.p() as f64)
    }
}

/// Draws `p` allele frequencies i.i.d. Uniform[0.05, 0.5].
pub fn draw_allele_freqs<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<SnpPanel> {
    if p == 0 {
        return Err(Error::domain("p must be at least 1"));
    }
    let freqs = (0..p).map(|_| rng.random_range(FREQ_RANGE.0..=FREQ_RANGE.1)).collect();
    SnpPanel::new(freqs)
}

/// What to do with a simulated column that came out constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Leave it; [`standardize`] will report it.
    #[default]
    Error,
    /// Redraw the column until it varies.
    Resample,
}

const MAX_RESAMPLES: usize = 10_000;

/// Genotype codes with `P(0) = (1-f)²`, `P(1) = 2f(1-f)`, `P(2) = f²`.
pub fn draw_genotypes<R: Rng + ?Sized>(panel: &SnpPanel, n: usize, rng: &mut R) -> Result<GenotypeMatrix> {
    draw_genotypes_with(panel, n, DegeneratePolicy::Error, rng)
}

pub fn draw_genotypes_with<R: Rng + ?Sized>(
    panel: &SnpPanel,
    n: usize,
    policy: DegeneratePolicy,
    rng: &mut R,
) -> Result<GenotypeMatrix> {
    if n < 2 {
        return Err(Error::domain("n must be at least 2"));
    }
    let p = panel.len();
    let mut values = vec![0u8; n * p];
    for (j, &f) in panel.freqs().iter().enumerate() {
        let col = &mut values[j * n..(j + 1) * n];
        let p0 = (1.0 - f) * (1.0 - f);
        let p01 = 1.0 - f * f;
        let mut attempts = 0;
        loop {
            for v in col.iter_mut() {
                let u: f64 = rng.random();
                *v = if u < p0 { 0 } else if u < p01 { 1 } else { 2 };
            }
            let constant = col.iter().all(|&v| v == col[0]);
            if !constant || policy == DegeneratePolicy::Error {
                break;
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLES {
                return Err(Error::DegenerateColumn { index: j });
            }
        }
    }
    GenotypeMatrix::from_columns(n, p, values)
}

/// `z_ik = (u_ik - ū_k) / s_k` with `s_k²` the sample variance (divisor `n-1`).
pub fn standardize(geno: &GenotypeMatrix) -> Result<StandardizedDesign> {
    let z = Mat::<f64>::from_fn(geno.n(), geno.p(), |i, j| geno.get(i, j) as f64);
    standardize_columns(z)
}

/// Standardizes every column of a real matrix in place.
pub fn standardize_columns(mut z: Mat<f64>) -> Result<StandardizedDesign> {
    let n = z.nrows();
    if n < 2 || z.ncols() == 0 {
        return Err(Error::domain("design needs at least two rows and one column"));
    }
    for j in 0..z.ncols() {
        let mean = z.col(j).iter().sum::<f64>() / n as f64;
        let ss: f64 = z.col(j).iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::DegenerateColumn { index: j });
        }
        z.col_mut(j).iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(StandardizedDesign { z, standardized: true })
}

/// i.i.d. standard normal design, column-standardized on request.
pub fn gaussian_design<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    standardized: bool,
    rng: &mut R,
) -> Result<StandardizedDesign> {
    if n < 2 || p == 0 {
        return Err(Error::domain("gaussian design needs n >= 2 and p >= 1"));
    }
    let mut z = Mat::<f64>::zeros(n, p);
    for j in 0..p {
        z.col_mut(j).iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
    }
    if standardized {
        standardize_columns(z)
    } else {
        StandardizedDesign::from_raw(z)
    }
}

/// Sparse true model: `m` of the `p` effects are `N(0, σα²)`, the rest zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub p: usize,
    pub m: usize,
    pub sigma_alpha_sq: f64,
    pub sigma_eps_sq: f64,
    pub mu: f64,
    pub h2_true: f64,
}

impl TrueModel {
    /// Model with a given per-effect variance ratio `γ₀ = σα²/σε² ≥ 0`;
    /// `γ₀ = 0` is the null model.
    pub fn from_gamma0(p: usize, m: usize, sigma_eps_sq: f64, gamma0: f64) -> Result<Self> {
        check_dims(p, m, sigma_eps_sq)?;
        if !(gamma0 >= 0.0 && gamma0.is_finite()) {
            return Err(Error::domain(format!("gamma0 {gamma0} must be finite and >= 0")));
        }
        let sigma_alpha_sq = gamma0 * sigma_eps_sq;
        let signal = m as f64 / p as f64 * sigma_alpha_sq;
        Ok(Self {
            p,
            m,
            sigma_alpha_sq,
            sigma_eps_sq,
            mu: 0.0,
            h2_true: signal / (signal + sigma_eps_sq),
        })
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }

    /// True `γ₀ = σα²/σε²`.
    pub fn gamma0(&self) -> f64 {
        self.sigma_alpha_sq / self.sigma_eps_sq
    }

    /// `m/p`.
    pub fn omega(&self) -> f64 {
        self.m as f64 / self.p as f64
    }

    /// `(m/p)·γ₀`, the limit of the unadjusted REML ratio.
    pub fn gamma_star(&self) -> f64 {
        self.omega() * self.gamma0()
    }
}

fn check_dims(p: usize, m: usize, sigma_eps_sq: f64) -> Result<()> {
    if m == 0 || m > p {
        return Err(Error::domain(format!("need 1 <= m <= p, got m={m}, p={p}")));
    }
    if !(sigma_eps_sq > 0.0 && sigma_eps_sq.is_finite()) {
        return Err(Error::domain(format!("error variance {sigma_eps_sq} must be positive")));
    }
    Ok(())
}

/// Model whose heritability `(m/p)σα² / ((m/p)σα² + σε²)` equals `h2_target`,
/// i.e. `σα² = (p/m) · h2 σε² / (1 - h2)`.
pub fn make_true_model(p: usize, m: usize, sigma_eps_sq: f64, h2_target: f64) -> Result<TrueModel> {
    check_dims(p, m, sigma_eps_sq)?;
    if !(h2_target > 0.0 && h2_target < 1.0) {
        return Err(Error::domain(format!("heritability {h2_target} outside (0, 1)")));
    }
    let sigma_alpha_sq = p as f64 / m as f64 * h2_target * sigma_eps_sq / (1.0 - h2_target);
    Ok(TrueModel { p, m, sigma_alpha_sq, sigma_eps_sq, mu: 0.0, h2_true: h2_target })
}

/// Which columns carry the nonzero effects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalPlacement {
    /// The first `m` columns.
    #[default]
    Leading,
    /// A uniformly random `m`-subset, drawn from the stream.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phenotypes {
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    /// Column indices of the causal effects, in the order of `alpha`.
    pub causal: Vec<usize>,
}

/// `y = 1ₙμ + Z̃_(1)α_(1) + ε`.
pub fn draw_phenotypes<R: Rng + ?Sized>(
    design: &StandardizedDesign,
    model: &TrueModel,
    placement: CausalPlacement,
    rng: &mut R,
) -> Result<Phenotypes> {
    let (n, p) = (design.n(), design.p());
    if model.p != p || model.m > p {
        return Err(Error::domain(format!(
            "model with p={}, m={} does not fit a design with p={p}",
            model.p, model.m
        )));
    }
    let causal: Vec<usize> = match placement {
        CausalPlacement::Leading => (0..model.m).collect(),
        CausalPlacement::Random => {
            let mut idx = sample(rng, p, model.m).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let effect = Normal::new(0.0, model.sigma_alpha_sq.sqrt())
        .map_err(|e| Error::domain(format!("effect distribution: {e}")))?;
    let noise = Normal::new(0.0, model.sigma_eps_sq.sqrt())
        .map_err(|e| Error::domain(format!("error distribution: {e}")))?;
    let alpha: Vec<f64> = (0..model.m).map(|_| effect.sample(rng)).collect();
    let eps: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();

    let scale = design.scale();
    let mut y: Vec<f64> = eps.iter().map(|e| model.mu + e).collect();
    for (&j, &a) in causal.iter().zip(&alpha) {
        let coef = a * scale;
        for (yi, zij) in y.iter_mut().zip(design.z().col(j).iter()) {
            *yi += coef * zij;
        }
    }
    Ok(Phenotypes { y, alpha, eps, causal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn column_moments(z: &Mat<f64>, j: usize) -> (f64, f64) {
        let n = z.nrows() as f64;
        let mean = z.col(j).iter().sum::<f64>() / n;
        let var = z.col(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn allele_freqs_range_mean_and_determinism() {
        let mut rng = replication_stream(7, 0);
        let panel = draw_allele_freqs(3, &mut rng).unwrap();
        assert!(panel.freqs().iter().all(|f| (0.05..=0.5).contains(f)));

        let big = draw_allele_freqs(100_000, &mut replication_stream(8, 0)).unwrap();
        let mean = big.freqs().iter().sum::<f64>() / 1e5;
        assert!((mean - 0.275).abs() < 0.005, "mean {mean}");

        let a = draw_allele_freqs(50, &mut replication_stream(9, 3)).unwrap();
        let b = draw_allele_freqs(50, &mut replication_stream(9, 3)).unwrap();
        let c = draw_allele_freqs(50, &mut replication_stream(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(draw_allele_freqs(0, &mut rng).is_err());
    }

    #[test]
    fn genotype_frequencies() {
        let panel = SnpPanel::new(vec![0.5, 0.05, 0.3]).unwrap();
        let n = 100_000;
        let g = draw_genotypes(&panel, n, &mut replication_stream(1, 1)).unwrap();
        let col = |j: usize| g.column(j).iter().map(|&v| v as f64).collect::<Vec<_>>();
        let mean0 = col(0).iter().sum::<f64>() / n as f64;
        assert!((mean0 - 1.0).abs() < 0.01);
        let twos = g.column(1).iter().filter(|&&v| v == 2).count() as f64 / n as f64;
        assert!((twos - 0.0025).abs() < 0.0006, "P(2) = {twos}");
        for (j, &f) in panel.freqs().iter().enumerate() {
            let c = col(j);
            let m = c.iter().sum::<f64>() / n as f64;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let target = 2.0 * f * (1.0 - f);
            // sd of the sample variance is below 0.006·target here
            assert!((v - target).abs() < 0.025 * target, "col {j}: {v} vs {target}");
        }
    }

    #[test]
    fn standardize_hand_column() {
        let g = GenotypeMatrix::from_columns(3, 1, vec![0, 1, 2]).unwrap();
        let d = standardize(&g).unwrap();
        let col: Vec<f64> = d.z().col(0).iter().copied().collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
        let bad = GenotypeMatrix::from_columns(3, 2, vec![0, 1, 2, 1, 1, 1]).unwrap();
        assert!(matches!(standardize(&bad), Err(Error::DegenerateColumn { index: 1 })));
        assert!(GenotypeMatrix::from_columns(2, 1, vec![0, 3]).is_err());
    }

    #[test]
    fn standardized_columns_are_exact_and_idempotent() {
        let mut rng = replication_stream(3, 0);
        let panel = draw_allele_freqs(40, &mut rng).unwrap();
        let g = draw_genotypes_with(&panel, 30, DegeneratePolicy::Resample, &mut rng).unwrap();
        let d = standardize(&g).unwrap();
        for j in 0..40 {
            let (m, v) = column_moments(d.z(), j);
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        let again = standardize_columns(d.z().clone()).unwrap();
        assert!((again.z() - d.z()).norm_max() < 1e-12);

        // population pre-standardization leaves the result unchanged
        let pre = Mat::<f64>::from_fn(30, 40, |i, j| {
            let f = panel.freqs()[j];
            (g.get(i, j) as f64 - 2.0 * f) / (2.0 * f * (1.0 - f)).sqrt()
        });
        let pre = standardize_columns(pre).unwrap();
        assert!((pre.z() - d.z()).norm_max() < 1e-12);
    }

    #[test]
    fn resample_policy_removes_constant_columns() {
        let panel = SnpPanel::new(vec![0.05; 20]).unwrap();
        let g = draw_genotypes_with(&panel, 2, DegeneratePolicy::Resample, &mut replication_stream(5, 0)).unwrap();
        for j in 0..20 {
            assert_ne!(g.column(j)[0], g.column(j)[1]);
        }
    }

    #[test]
    fn gaussian_design_determinism_and_standardization() {
        let a = gaussian_design(2, 2, false, &mut replication_stream(11, 0)).unwrap();
        let b = gaussian_design(2, 2, false, &mut replication_stream(11, 0)).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_standardized());
        let s = gaussian_design(25, 7, true, &mut replication_stream(11, 1)).unwrap();
        assert!(s.is_standardized());
        for j in 0..7 {
            let (m, v) = column_moments(s.z(), j);
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn true_model_values() {
        let dense = make_true_model(20_000, 20_000, 0.4, 0.6).unwrap();
        assert_relative_eq!(dense.sigma_alpha_sq, 0.6, epsilon = 1e-12);
        assert_relative_eq!(dense.gamma0(), 1.5, epsilon = 1e-12);
        let sparse = make_true_model(20_000, 200, 0.4, 0.6).unwrap();
        assert_relative_eq!(sparse.sigma_alpha_sq, 60.0, epsilon = 1e-10);
        assert_relative_eq!(sparse.gamma_star(), 1.5, epsilon = 1e-12);
        let implied = |t: &TrueModel| {
            let s = t.omega() * t.sigma_alpha_sq;
            s / (s + t.sigma_eps_sq)
        };
        assert_relative_eq!(implied(&sparse), 0.6, epsilon = 1e-12);
        assert!(make_true_model(10, 5, 0.4, 0.0).is_err());
        assert!(make_true_model(10, 5, 0.4, 1.0).is_err());
        assert!(make_true_model(10, 0, 0.4, 0.5).is_err());
        assert!(make_true_model(10, 11, 0.4, 0.5).is_err());
        let g = TrueModel::from_gamma0(5000, 2500, 0.4, 1.5).unwrap();
        assert_relative_eq!(g.h2_true, 0.75 / 1.75, epsilon = 1e-12);
        assert_relative_eq!(g.gamma_star(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn phenotypes_reproducible_and_null_signal() {
        let design = gaussian_design(20, 30, true, &mut replication_stream(1, 0)).unwrap();
        let model = TrueModel::from_gamma0(30, 10, 0.5, 1e-12).unwrap().with_mu(2.0);
        let a = draw_phenotypes(&design, &model, CausalPlacement::Leading, &mut replication_stream(2, 0)).unwrap();
        let b = draw_phenotypes(&design, &model, CausalPlacement::Leading, &mut replication_stream(2, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.causal, (0..10).collect::<Vec<_>>());
        for (y, e) in a.y.iter().zip(&a.eps) {
            assert!((y - 2.0 - e).abs() < 1e-5);
        }
        let r = draw_phenotypes(&design, &model, CausalPlacement::Random, &mut replication_stream(2, 1)).unwrap();
        assert_eq!(r.causal.len(), 10);
        assert!(r.causal.windows(2).all(|w| w[0] < w[1]));

        let other = gaussian_design(20, 31, true, &mut replication_stream(1, 0)).unwrap();
        assert!(draw_phenotypes(&other, &model, CausalPlacement::Leading, &mut replication_stream(2, 0)).is_err());
    }

    #[test]
    fn phenotype_variance_matches_kernel_trace() {
        // Var(y_i | Z) = σα² (Z̃_(1)Z̃_(1)')_ii + σε², averaged over i and
        // replications; with m = p the average diagonal is (n-1)/n·... ≈ 1.
        let n = 200;
        let p = 400;
        let design = gaussian_design(n, p, true, &mut replication_stream(4, 0)).unwrap();
        let model = TrueModel::from_gamma0(p, p, 0.4, 1.5).unwrap();
        let kernel = design.kernel();
        let mean_diag = (0..n).map(|i| kernel[(i, i)]).sum::<f64>() / n as f64;
        let target = model.sigma_alpha_sq * mean_diag + model.sigma_eps_sq;
        let reps = 400;
        let mut per_rep = Vec::with_capacity(reps);
        for r in 0..reps {
            let ph = draw_phenotypes(&design, &model, CausalPlacement::Leading, &mut replication_stream(5, r as u64))
                .unwrap();
            per_rep.push(ph.y.iter().map(|y| y * y).sum::<f64>() / n as f64);
        }
        let mean = per_rep.iter().sum::<f64>() / reps as f64;
        let sd = (per_rep.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
    }
}
