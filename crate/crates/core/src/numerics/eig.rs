use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `M = Q · diag(eigenvalues) · Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl SymEig {
    /// `Q · diag(f(λ)) · Qᵀ`
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let scaled = Matrix::from_fn(n, n, |i, k| q[(i, k)] * f(self.eigenvalues[k]));
        scaled.matmul_t(q)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.map_eigenvalues(|x| x)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(M + Mᵀ)/2` before rotation; inputs whose
/// asymmetry exceeds `1e-9 · max(1, ‖M‖_max)` are rejected.
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Numeric(
            "non-finite entry in eigendecomposition input".into(),
        ));
    }
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    if !m.is_symmetric(1e-9 * scale) {
        return Err(Error::Argument(
            "eigendecomposition input is not symmetric".into(),
        ));
    }
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let mut d = a.diag();
    let mut b = d.clone();
    let mut z = vec![0.0; n];
    let frob = a.frobenius_norm();

    let mut converged = n <= 1;
    for sweep in 1..=MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].abs();
            }
        }
        if off == 0.0 || off <= 1e-300 || off < 1e-17 * frob {
            converged = true;
            break;
        }
        let thresh = if sweep < 4 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = 100.0 * apq.abs();
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[(p, q)] = 0.0;
                } else if apq.abs() > thresh {
                    let h = d[q] - d[p];
                    let t = if h.abs() + g == h.abs() {
                        apq / h
                    } else {
                        let theta = 0.5 * h / apq;
                        let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                        if theta < 0.0 {
                            -t
                        } else {
                            t
                        }
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    let h = t * apq;
                    z[p] -= h;
                    z[q] += h;
                    d[p] -= h;
                    d[q] += h;
                    a[(p, q)] = 0.0;
                    for j in 0..p {
                        rotate(&mut a, (j, p), (j, q), s, tau);
                    }
                    for j in (p + 1)..q {
                        rotate(&mut a, (p, j), (j, q), s, tau);
                    }
                    for j in (q + 1)..n {
                        rotate(&mut a, (p, j), (q, j), s, tau);
                    }
                    for j in 0..n {
                        rotate(&mut v, (j, p), (j, q), s, tau);
                    }
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi eigendecomposition did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

#[inline]
fn rotate(a: &mut Matrix, x: (usize, usize), y: (usize, usize), s: f64, tau: f64) {
    let g = a[x];
    let h = a[y];
    a[x] = g - s * (h + g * tau);
    a[y] = h + s * (g - h * tau);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        let r = Matrix::from_fn(n, n, |_, _| rng.uniform_range(-1.0, 1.0));
        r.symmetrize()
    }

    fn orthogonality_error(q: &Matrix) -> f64 {
        q.t_matmul(q).max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_case_is_a_permutation() {
        let e = sym_eig(&Matrix::from_diag(&[5.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![2.0, 5.0]);
        for k in 0..2 {
            let col = e.eigenvectors.col_vec(k);
            let ones = col.iter().filter(|x| x.abs() == 1.0).count();
            let zeros = col.iter().filter(|x| **x == 0.0).count();
            assert_eq!((ones, zeros), (1, 1));
        }
    }

    #[test]
    fn random_8x8_reconstructs() {
        let m = random_symmetric(8, 7);
        let e = sym_eig(&m).unwrap();
        assert!(orthogonality_error(&e.eigenvectors) <= 1e-10);
        assert!(e.reconstruct().max_abs_diff(&m) <= 1e-10);
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(sym_eig(&m), Err(Error::Argument(_))));
    }

    #[test]
    fn reconstruction_holds_at_large_scale() {
        for seed in 0..5 {
            let m = random_symmetric(30, seed).scale(1e3);
            let e = sym_eig(&m).unwrap();
            assert!(orthogonality_error(&e.eigenvectors) <= 1e-10);
            let err = e.reconstruct().max_abs_diff(&m);
            assert!(err <= 1e-8 * m.max_abs(), "seed {seed}: {err}");
        }
    }
}
