//! Empirical concentration of quadratic forms `ξ'Aξ` around `tr(A)`.
//!
//! The tail bound `2 exp{-c · min(t²/‖A‖_F², t/‖A‖)}` holds for some
//! universal `c`, which is not constructive. [`calibrate_hanson_wright_constant`]
//! estimates the largest `c` compatible with Gaussian draws; checks against
//! other sub-Gaussian inputs then test only the shape of the tail.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::linalg::{symmetric_eigenvalues, ComplementBasis};
use crate::{Error, Result};

/// Matrix in the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraticKind {
    Zero,
    Identity,
    /// Orthogonal projection onto a uniformly random subspace.
    RandomProjection { rank: usize },
}

/// Law of the independent, mean-zero, unit-variance entries of `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    /// Genotype code `Binomial(2, f)` standardized by its population moments.
    StandardizedGenotype { freq: f64 },
}

impl EntryDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryDistribution::Gaussian => StandardNormal.sample(rng),
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::StandardizedGenotype { freq } => {
                let code = (rng.random::<f64>() < freq) as u8 + (rng.random::<f64>() < freq) as u8;
                let mean = 2.0 * freq;
                let sd = (2.0 * freq * (1.0 - freq)).sqrt();
                (code as f64 - mean) / sd
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HansonWrightReport {
    pub trials: usize,
    pub dim: usize,
    pub tail_t: f64,
    pub exceedances: usize,
    pub rate: f64,
    pub frobenius_norm: f64,
    pub operator_norm: f64,
}

impl HansonWrightReport {
    /// `min(t²/‖A‖_F², t/‖A‖)`, or `∞` for the zero matrix.
    pub fn exponent(&self) -> f64 {
        hanson_wright_exponent(self.tail_t, self.frobenius_norm, self.operator_norm)
    }

    pub fn bound(&self, constant: f64) -> f64 {
        hanson_wright_bound(self.tail_t, self.frobenius_norm, self.operator_norm, constant)
    }
}

pub fn hanson_wright_exponent(t: f64, frobenius: f64, operator: f64) -> f64 {
    if frobenius == 0.0 {
        return f64::INFINITY;
    }
    (t * t / (frobenius * frobenius)).min(t / operator)
}

/// `min(1, 2 exp{-c · min(t²/‖A‖_F², t/‖A‖)})`.
pub fn hanson_wright_bound(t: f64, frobenius: f64, operator: f64, constant: f64) -> f64 {
    (2.0 * (-constant * hanson_wright_exponent(t, frobenius, operator)).exp()).min(1.0)
}

fn build_matrix<R: Rng + ?Sized>(kind: QuadraticKind, dim: usize, rng: &mut R) -> Result<Mat<f64>> {
    Ok(match kind {
        QuadraticKind::Zero => Mat::zeros(dim, dim),
        QuadraticKind::Identity => Mat::identity(dim, dim),
        QuadraticKind::RandomProjection { rank } => {
            if rank == 0 || rank >= dim {
                return Err(Error::domain(format!("projection rank {rank} must lie in 1..{dim}")));
            }
            // The complement of a Gaussian (dim - rank)-frame is a uniform
            // rank-dimensional subspace.
            let g = Mat::<f64>::from_fn(dim, dim - rank, |_, _| StandardNormal.sample(rng));
            let a = ComplementBasis::new(g.as_ref())?.explicit();
            &a * a.transpose()
        }
    })
}

/// Fraction of `trials` draws with `|ξ'Aξ - tr(A)| > tail_t`.
pub fn hanson_wright_check<R: Rng + ?Sized>(
    trials: usize,
    dim: usize,
    kind: QuadraticKind,
    entries: EntryDistribution,
    tail_t: f64,
    rng: &mut R,
) -> Result<HansonWrightReport> {
    if trials < 1000 {
        return Err(Error::domain(format!("at least 1000 trials required, got {trials}")));
    }
    if dim == 0 || !(tail_t > 0.0) {
        return Err(Error::domain("dimension and tail threshold must be positive"));
    }
    let a = build_matrix(kind, dim, rng)?;
    let trace: f64 = (0..dim).map(|i| a[(i, i)]).sum();
    let frobenius_norm = a.norm_l2();
    let operator_norm = match kind {
        QuadraticKind::Zero => 0.0,
        _ => symmetric_eigenvalues(a.as_ref())?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let mut xi = vec![0.0; dim];
    let mut exceedances = 0;
    for _ in 0..trials {
        xi.iter_mut().for_each(|v| *v = entries.sample(rng));
        let form = quadratic_form(&a, &xi, kind);
        if (form - trace).abs() > tail_t {
            exceedances += 1;
        }
    }
    Ok(HansonWrightReport {
        trials,
        dim,
        tail_t,
        exceedances,
        rate: exceedances as f64 / trials as f64,
        frobenius_norm,
        operator_norm,
    })
}

fn quadratic_form(a: &Mat<f64>, xi: &[f64], kind: QuadraticKind) -> f64 {
    match kind {
        QuadraticKind::Zero => 0.0,
        QuadraticKind::Identity => xi.iter().map(|v| v * v).sum(),
        QuadraticKind::RandomProjection { .. } => {
            let n = xi.len();
            (0..n)
                .map(|c| xi[c] * a.col(c).iter().zip(xi).map(|(x, y)| x * y).sum::<f64>())
                .sum()
        }
    }
}

/// Largest `c` with `rate(t) ≤ 2 exp{-c · exponent(t)}` at every `t` of the
/// grid, using Gaussian entries. Grid points with no exceedances do not
/// constrain `c`; the result is `∞` if none do.
pub fn calibrate_hanson_wright_constant<R: Rng + ?Sized>(
    trials: usize,
    dim: usize,
    kind: QuadraticKind,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let mut constant = f64::INFINITY;
    for &t in t_grid {
        let report = hanson_wright_check(trials, dim, kind, EntryDistribution::Gaussian, t, rng)?;
        if report.exceedances > 0 {
            let c = -(report.rate / 2.0).ln() / report.exponent();
            constant = constant.min(c);
        }
    }
    Ok(constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_matrix_never_exceeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in [1e-6, 0.5, 3.0] {
            let r = hanson_wright_check(1000, 20, QuadraticKind::Zero, EntryDistribution::Gaussian, t, &mut rng)
                .unwrap();
            assert_eq!(r.rate, 0.0);
            assert_eq!(r.bound(1.0), 0.0);
        }
    }

    #[test]
    fn random_projection_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let r = hanson_wright_check(
            20_000,
            n,
            QuadraticKind::RandomProjection { rank: 20 },
            EntryDistribution::Gaussian,
            4.0 * (n as f64).sqrt(),
            &mut rng,
        )
        .unwrap();
        assert!(r.rate < 0.05, "rate {}", r.rate);
        assert!((r.operator_norm - 1.0).abs() < 1e-10);
        assert!((r.frobenius_norm - 20f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn rademacher_identity_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = hanson_wright_check(1000, 15, QuadraticKind::Identity, EntryDistribution::Rademacher, 1e-9, &mut rng)
            .unwrap();
        assert_eq!(r.exceedances, 0);
    }

    #[test]
    fn rejects_small_trial_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(hanson_wright_check(999, 5, QuadraticKind::Identity, EntryDistribution::Gaussian, 1.0, &mut rng).is_err());
    }
}
