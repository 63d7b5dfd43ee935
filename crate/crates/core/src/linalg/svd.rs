//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Rotating column pairs of `A` until they are mutually orthogonal is the
//! implicit Jacobi eigenvalue iteration on the Gram matrix `AᵀA`, but never
//! forms `AᵀA`, so small singular values keep full relative accuracy.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Relative off-diagonal tolerance `|aᵢ·aⱼ| / (‖aᵢ‖‖aⱼ‖)`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
/// Singular values below this fraction of `σ_max` count as zero for conditioning.
pub const RANK_TOL: f64 = 1e-12;

/// Rank-`r` factorization `W ≈ U·diag(σ)·Vᵀ` plus the full spectrum of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactorization {
    /// `m x r`, orthonormal columns.
    pub u: Matrix,
    /// Top `r` singular values, nonincreasing.
    pub sigma: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: Matrix,
    /// All `min(m, n)` singular values of the source matrix, nonincreasing.
    pub full_spectrum: Vec<f64>,
}

impl SvdFactorization {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U·diag(σ)·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let (m, n, r) = (self.u.rows(), self.v.rows(), self.rank());
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let row = out.row_mut(i);
            for k in 0..r {
                let a = self.u.get(i, k) * self.sigma[k];
                if a == 0.0 {
                    continue;
                }
                for (j, o) in row.iter_mut().enumerate() {
                    *o += a * self.v.get(j, k);
                }
            }
        }
        out
    }

    /// `U·diag(√σ)` (m x r), the down-projection seed.
    pub fn left_factor_sqrt(&self) -> Matrix {
        let s: Vec<f64> = self.sigma.iter().map(|v| v.sqrt()).collect();
        Matrix::from_fn(self.u.rows(), self.rank(), |i, k| self.u.get(i, k) * s[k])
    }

    /// `diag(√σ)·Vᵀ` (r x n), the up-projection seed.
    pub fn right_factor_sqrt(&self) -> Matrix {
        let s: Vec<f64> = self.sigma.iter().map(|v| v.sqrt()).collect();
        Matrix::from_fn(self.rank(), self.v.rows(), |k, j| s[k] * self.v.get(j, k))
    }

    /// Keep only the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> Result<SvdFactorization> {
        if r == 0 || r > self.full_spectrum.len() {
            return Err(Error::range("rank", r, format!("1..={}", self.full_spectrum.len())));
        }
        if r > self.rank() {
            return Err(Error::range("rank", r, format!("1..={} (stored triplets)", self.rank())));
        }
        Ok(SvdFactorization {
            u: self.u.columns(0, r),
            sigma: self.sigma[..r].to_vec(),
            v: self.v.columns(0, r),
            full_spectrum: self.full_spectrum.clone(),
        })
    }
}

/// Full thin SVD: `r = min(m, n)`.
pub fn svd(w: &Matrix) -> Result<SvdFactorization> {
    let (m, n) = w.shape();
    if m == 0 || n == 0 {
        return Err(Error::shape("svd", "non-empty matrix", format!("{m}x{n}")));
    }
    if !w.is_finite() {
        return Err(Error::Degenerate("svd input contains non-finite entries".into()));
    }
    let transposed = m < n;
    let a = if transposed { w.transpose() } else { w.clone() };
    let (p, q) = a.shape();

    // Column-major working copy: column k occupies cols[k*p..(k+1)*p].
    let mut cols = vec![0.0; p * q];
    for i in 0..p {
        for k in 0..q {
            cols[k * p + i] = a.get(i, k);
        }
    }
    let mut vcols = vec![0.0; q * q];
    for k in 0..q {
        vcols[k * q + k] = 1.0;
    }

    // Columns this small are rounding noise; their relative angle to other
    // columns never settles, so they are left out of the convergence test.
    let frob_sq = dot(&cols, &cols);
    let negligible = frob_sq * f64::EPSILON * f64::EPSILON;
    let mut converged = q < 2;
    let mut residual = 0.0;
    for _ in 0..MAX_SWEEPS {
        residual = 0.0f64;
        for i in 0..q {
            for j in (i + 1)..q {
                let (ci, cj) = pair_mut(&mut cols, p, i, j);
                let alpha = dot(ci, ci);
                let beta = dot(cj, cj);
                let gamma = dot(ci, cj);
                if alpha <= negligible || beta <= negligible || gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                residual = residual.max(rel);
                if rel <= OFF_DIAGONAL_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(ci, cj, c, s);
                let (vi, vj) = pair_mut(&mut vcols, q, i, j);
                rotate(vi, vj, c, s);
            }
        }
        if residual <= OFF_DIAGONAL_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "one-sided Jacobi SVD",
            iterations: MAX_SWEEPS,
            residual,
        });
    }

    let norms: Vec<f64> = (0..q)
        .map(|k| {
            let c = &cols[k * p..(k + 1) * p];
            dot(c, c).sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let sigma: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let sigma_max = sigma[0];
    let degenerate_below = sigma_max * (p as f64) * f64::EPSILON;

    // Left vectors: normalized columns, completed to an orthonormal set where
    // the singular value is numerically zero.
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(q);
    for (rank_pos, &k) in order.iter().enumerate() {
        let c = &cols[k * p..(k + 1) * p];
        let s = sigma[rank_pos];
        let vec = if s > degenerate_below && s > 0.0 {
            c.iter().map(|v| v / s).collect::<Vec<f64>>()
        } else {
            // The coordinate axis with the largest component outside the
            // current span; its residual norm is at least sqrt((p - k) / p).
            let (norm, x) = (0..p)
                .map(|i| {
                    let mut e = vec![0.0; p];
                    e[i] = 1.0;
                    let x = project_out(&e, &left);
                    (dot(&x, &x).sqrt(), x)
                })
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("p >= 1");
            if norm < 1e-8 {
                return Err(Error::NonConvergence {
                    what: "orthonormal completion",
                    iterations: p,
                    residual: norm,
                });
            }
            x.iter().map(|v| v / norm).collect()
        };
        left.push(vec);
    }

    let mut u_a = Matrix::zeros(p, q);
    let mut v_a = Matrix::zeros(q, q);
    for (pos, &k) in order.iter().enumerate() {
        for i in 0..p {
            u_a.set(i, pos, left[pos][i]);
        }
        for i in 0..q {
            v_a.set(i, pos, vcols[k * q + i]);
        }
    }

    let (mut u, mut v) = if transposed { (v_a, u_a) } else { (u_a, v_a) };
    apply_sign_convention(&mut u, &mut v);

    Ok(SvdFactorization {
        u,
        full_spectrum: sigma.clone(),
        sigma,
        v,
    })
}

/// Leading `r` singular triplets of `w`, with the full spectrum retained.
pub fn truncated_svd(w: &Matrix, r: usize) -> Result<SvdFactorization> {
    let k = w.rows().min(w.cols());
    if r == 0 || r > k {
        return Err(Error::range("rank", r, format!("1..={k} for a {}x{} matrix", w.rows(), w.cols())));
    }
    svd(w)?.truncate(r)
}

/// Singular values of `w`, nonincreasing.
pub fn singular_values(w: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(w)?.full_spectrum)
}

/// `σ_max / σ_min` over the numerically nonzero part of the spectrum.
pub fn condition_number(w: &Matrix) -> Result<f64> {
    let s = singular_values(w)?;
    condition_number_of_spectrum(&s)
}

pub fn condition_number_of_spectrum(spectrum: &[f64]) -> Result<f64> {
    let max = spectrum.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate("condition number of an all-zero matrix".into()));
    }
    let min = spectrum
        .iter()
        .copied()
        .filter(|&s| s > RANK_TOL * max)
        .fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

fn pair_mut(buf: &mut [f64], len: usize, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (head, tail) = buf.split_at_mut(j * len);
    (&mut head[i * len..(i + 1) * len], &mut tail[..len])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Twice-applied Gram-Schmidt; `None` if `e` is (nearly) in the span.
fn project_out(e: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut x = e.to_vec();
    for _ in 0..2 {
        for b in basis {
            let d = dot(&x, b);
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= d * bi;
            }
        }
    }
    x
}

/// Largest-magnitude entry of each left singular vector is made nonnegative.
fn apply_sign_convention(u: &mut Matrix, v: &mut Matrix) {
    for k in 0..u.cols() {
        let mut best = 0usize;
        for i in 1..u.rows() {
            if u.get(i, k).abs() > u.get(best, k).abs() {
                best = i;
            }
        }
        if u.get(best, k) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, k, -u.get(i, k));
            }
            for i in 0..v.rows() {
                v.set(i, k, -v.get(i, k));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Philox;

    fn gram_deviation(q: &Matrix) -> f64 {
        let g = crate::linalg::matmul_tn(q, q).unwrap();
        g.max_abs_diff(&Matrix::identity(q.cols())).unwrap()
    }

    #[test]
    fn identity_rank_two() {
        let f = truncated_svd(&Matrix::identity(3), 2).unwrap();
        assert_eq!(f.sigma.len(), 2);
        for s in &f.sigma {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let err = Matrix::identity(3).sub(&f.reconstruct()).unwrap().frobenius_norm();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_truncation_error() {
        let w = Matrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let f = truncated_svd(&w, 2).unwrap();
        assert_eq!(f.full_spectrum.len(), 3);
        let err = w.sub(&f.reconstruct()).unwrap().frobenius_norm();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let w = Matrix::identity(3);
        assert!(matches!(truncated_svd(&w, 0), Err(Error::Range { .. })));
        assert!(matches!(truncated_svd(&w, 4), Err(Error::Range { .. })));
    }

    #[test]
    fn wide_and_tall_inputs() {
        let mut rng = Philox::new(9, 0);
        for &(m, n) in &[(8, 5), (5, 8), (1, 6), (6, 1), (12, 12)] {
            let w = Matrix::random_normal(m, n, &mut rng);
            let f = svd(&w).unwrap();
            assert!(w.max_abs_diff(&f.reconstruct()).unwrap() < 1e-10, "{m}x{n}");
            assert!(gram_deviation(&f.u) < 1e-8);
            assert!(gram_deviation(&f.v) < 1e-8);
            assert!(f.sigma.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn rank_deficient_completion_is_orthonormal() {
        let mut rng = Philox::new(10, 0);
        let a = Matrix::random_normal(7, 2, &mut rng);
        let b = Matrix::random_normal(2, 5, &mut rng);
        let w = a.matmul(&b).unwrap();
        let f = svd(&w).unwrap();
        assert!(f.full_spectrum[2] < 1e-12 * f.full_spectrum[0]);
        assert!(gram_deviation(&f.u) < 1e-8);
        assert!(gram_deviation(&f.v) < 1e-8);
        let zero = svd(&Matrix::zeros(4, 3)).unwrap();
        assert!(gram_deviation(&zero.u) < 1e-12);
        assert!(zero.full_spectrum.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn many_zero_singular_values_converge() {
        // rank 11 with 89 noise-level columns
        let w = Matrix::from_fn(100, 100, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let f = svd(&w).unwrap();
        assert!(w.max_abs_diff(&f.reconstruct()).unwrap() < 1e-9);
        assert!(gram_deviation(&f.u) < 1e-8);
        assert!(gram_deviation(&f.v) < 1e-8);
        assert!(f.full_spectrum[11] < 1e-10 * f.full_spectrum[0]);
    }

    #[test]
    fn sign_convention_is_applied() {
        let mut rng = Philox::new(12, 0);
        let w = Matrix::random_normal(6, 4, &mut rng);
        let f = svd(&w).unwrap();
        for k in 0..f.u.cols() {
            let col = f.u.column(k);
            let best = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(best >= 0.0);
        }
        assert_eq!(svd(&w).unwrap(), f);
    }

    #[test]
    fn condition_numbers() {
        assert!((condition_number(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-14);
        let d = Matrix::from_diag(2, 2, &[10.0, 1.0]);
        assert!((condition_number(&d).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(condition_number(&Matrix::zeros(2, 2)), Err(Error::Degenerate(_))));
        // rank-deficient: the zero singular value is ignored
        let d = Matrix::from_diag(3, 3, &[4.0, 2.0, 0.0]);
        assert!((condition_number(&d).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut w = Matrix::identity(2);
        w.set(0, 1, f64::NAN);
        assert!(svd(&w).is_err());
    }
}
