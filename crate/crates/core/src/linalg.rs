//! Dense linear-algebra helpers shared by the projection and the oracles.

use faer::linalg::matmul::triangular::{matmul, BlockStructure};
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::{Error, Result};

/// Orthonormal basis `A` of the orthogonal complement of `col(X)`, kept in
/// factored form as the Householder reflectors of a column-pivoted QR of `X`.
///
/// With `Q = H_1 ⋯ H_q`, `A` is the trailing `n - q` columns of `Q`, so
/// `A'v` is `Q'v` without its first `q` entries and `A'KA` is the trailing
/// block of `Q'KQ`. `A` itself is never formed.
#[derive(Debug, Clone)]
pub struct ComplementBasis {
    n: usize,
    // (v, β) with H = I - β v v'; v is zero above its pivot row
    reflectors: Vec<(Vec<f64>, f64)>,
}

impl ComplementBasis {
    /// Factors `x` (n×q). Fails unless `x` has full column rank `q < n`,
    /// with rank judged against `n · ε · |R₁₁|`.
    pub fn new(x: MatRef<'_, f64>) -> Result<Self> {
        let (n, q) = (x.nrows(), x.ncols());
        if q >= n {
            return Err(Error::domain(format!("fixed-effect design has {q} columns for {n} rows")));
        }
        let mut work: Vec<Vec<f64>> = (0..q).map(|j| x.col(j).iter().copied().collect()).collect();
        if work.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("fixed-effect design has non-finite entries"));
        }
        let mut reflectors = Vec::with_capacity(q);
        let mut r11 = 0.0;
        for j in 0..q {
            // pivot: largest remaining column norm
            let norms: Vec<f64> = work[j..].iter().map(|c| norm(&c[j..])).collect();
            let (offset, &alpha) = norms
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("at least one remaining column");
            work.swap(j, j + offset);
            if j == 0 {
                r11 = alpha;
            }
            if alpha <= n as f64 * f64::EPSILON * r11 || alpha == 0.0 {
                return Err(Error::domain(format!(
                    "fixed-effect design is rank deficient (rank {j} < {q})"
                )));
            }
            let col = &work[j];
            let mut v = vec![0.0; n];
            v[j..].copy_from_slice(&col[j..]);
            let sign = if col[j] >= 0.0 { 1.0 } else { -1.0 };
            v[j] += sign * alpha;
            let vtv: f64 = v[j..].iter().map(|a| a * a).sum();
            let beta = 2.0 / vtv;
            for c in work.iter_mut().skip(j + 1) {
                apply_reflector(&v, beta, j, c);
            }
            reflectors.push((v, beta));
        }
        Ok(Self { n, reflectors })
    }

    /// Basis for the complement of the intercept column `1ₙ`.
    pub fn intercept(n: usize) -> Result<Self> {
        Self::new(Mat::<f64>::from_fn(n, 1, |_, _| 1.0).as_ref())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Rank of the fixed-effect design.
    pub fn q(&self) -> usize {
        self.reflectors.len()
    }

    pub fn dim(&self) -> usize {
        self.n - self.q()
    }

    /// `A'v`.
    pub fn project_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::domain(format!("vector of length {} for n = {}", v.len(), self.n)));
        }
        let mut out = v.to_vec();
        for (j, (h, beta)) in self.reflectors.iter().enumerate() {
            apply_reflector(h, *beta, j, &mut out);
        }
        out.drain(..self.q());
        Ok(out)
    }

    /// `A'KA` for a symmetric `n × n` matrix `K`.
    pub fn project_symmetric(&self, kernel: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let n = self.n;
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(Error::domain("kernel dimensions do not match the fixed-effect design"));
        }
        let mut k = kernel.to_owned();
        let mut w = vec![0.0; n];
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            // H K H = K - v u' - u v' with u = βKv - (β²/2)(v'Kv) v
            for (i, wi) in w.iter_mut().enumerate() {
                let row = k.row(i);
                *wi = beta * (j..n).map(|c| row[c] * v[c]).sum::<f64>();
            }
            let alpha = 0.5 * beta * (j..n).map(|c| v[c] * w[c]).sum::<f64>();
            for c in j..n {
                w[c] -= alpha * v[c];
            }
            for c in 0..n {
                for r in 0..n {
                    k[(r, c)] -= v[r] * w[c] + w[r] * v[c];
                }
            }
        }
        let q = self.q();
        Ok(k.submatrix(q, q, n - q, n - q).to_owned())
    }

    /// `A` as an explicit `n × (n-q)` matrix (tests and small problems).
    pub fn explicit(&self) -> Mat<f64> {
        let (n, q) = (self.n, self.q());
        let mut a = Mat::<f64>::zeros(n, n - q);
        for c in 0..n - q {
            let mut e = vec![0.0; n];
            e[q + c] = 1.0;
            for (j, (h, beta)) in self.reflectors.iter().enumerate().rev() {
                apply_reflector(h, *beta, j, &mut e);
            }
            for r in 0..n {
                a[(r, c)] = e[r];
            }
        }
        a
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn apply_reflector(v: &[f64], beta: f64, start: usize, x: &mut [f64]) {
    let dot: f64 = v[start..].iter().zip(&x[start..]).map(|(a, b)| a * b).sum();
    let s = beta * dot;
    for (xi, vi) in x[start..].iter_mut().zip(&v[start..]) {
        *xi -= s * vi;
    }
}

/// `scale · M M'`, computed on the lower triangle and mirrored.
pub fn gram(m: MatRef<'_, f64>, scale: f64) -> Mat<f64> {
    let n = m.nrows();
    let mut k = Mat::<f64>::zeros(n, n);
    matmul(
        k.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        m,
        BlockStructure::Rectangular,
        m.transpose(),
        BlockStructure::Rectangular,
        scale,
        Par::Seq,
    );
    for c in 1..n {
        for r in 0..c {
            k[(r, c)] = k[(c, r)];
        }
    }
    k
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numeric(format!("symmetric eigensolver failed: {e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    Ok((values, evd.U().to_owned()))
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numeric(format!("symmetric eigensolver failed: {e:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::matmul::matmul as gemm;

    fn sample_x() -> Mat<f64> {
        Mat::from_fn(7, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * 5 + 3) % 7) as f64 - 2.5,
        })
    }

    #[test]
    fn basis_is_orthonormal_and_annihilates_x() {
        let x = sample_x();
        let basis = ComplementBasis::new(x.as_ref()).unwrap();
        assert_eq!((basis.q(), basis.dim()), (3, 4));
        let a = basis.explicit();
        let ata = a.transpose() * &a;
        let atx = a.transpose() * &x;
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((ata[(i, j)] - e).abs() < 1e-13);
            }
            for j in 0..3 {
                assert!(atx[(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn implicit_products_match_explicit_basis() {
        let x = sample_x();
        let basis = ComplementBasis::new(x.as_ref()).unwrap();
        let a = basis.explicit();
        let m = Mat::<f64>::from_fn(7, 5, |i, j| ((i * 3 + j * 7) % 11) as f64 / 3.0 - 1.0);
        let k = gram(m.as_ref(), 0.2);
        let projected = basis.project_symmetric(k.as_ref()).unwrap();
        let mut explicit = Mat::<f64>::zeros(4, 4);
        let ak = a.transpose() * &k;
        gemm(explicit.as_mut(), Accum::Replace, ak.as_ref(), a.as_ref(), 1.0, Par::Seq);
        for i in 0..4 {
            for j in 0..4 {
                assert!((projected[(i, j)] - explicit[(i, j)]).abs() < 1e-12);
            }
        }
        let y: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let ay = basis.project_vector(&y).unwrap();
        for c in 0..4 {
            let e: f64 = (0..7).map(|r| a[(r, c)] * y[r]).sum();
            assert!((ay[c] - e).abs() < 1e-13);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let x = Mat::<f64>::from_fn(6, 3, |i, j| if j == 2 { 2.0 * i as f64 + 1.0 } else if j == 0 { 1.0 } else { i as f64 });
        assert!(matches!(ComplementBasis::new(x.as_ref()), Err(Error::Domain(_))));
        let zero = Mat::<f64>::zeros(5, 1);
        assert!(ComplementBasis::new(zero.as_ref()).is_err());
        let wide = Mat::<f64>::from_fn(2, 2, |i, j| (i + j) as f64);
        assert!(ComplementBasis::new(wide.as_ref()).is_err());
    }

    #[test]
    fn gram_is_symmetric() {
        let m = Mat::<f64>::from_fn(4, 9, |i, j| ((i + 2 * j) % 5) as f64);
        let k = gram(m.as_ref(), 1.0 / 9.0);
        let full = &m * m.transpose();
        for i in 0..4 {
            for j in 0..4 {
                assert!((k[(i, j)] - full[(i, j)] / 9.0).abs() < 1e-13);
            }
        }
    }
}
