//! One-sided Jacobi SVD, enough for numerical ranks and rowspace bases of
//! desk-scale matrices. Rotations are applied to column pairs of a working
//! copy until all columns are mutually orthogonal; the accumulated rotations
//! are exactly the right singular vectors.

use crate::dense::Matrix;

pub struct Svd {
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors as columns of a cols x cols orthogonal matrix,
    /// ordered to match `sigma`.
    pub v: Matrix,
}

const MAX_SWEEPS: usize = 64;
const ORTHO_TOL: f64 = 1e-14;

pub fn jacobi_svd(a: &Matrix) -> Svd {
    let n = a.rows();
    let d = a.cols();
    let mut b: Vec<Vec<f64>> = (0..d).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..d {
            for j in (i + 1)..d {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for r in 0..n {
                    aii += b[i][r] * b[i][r];
                    ajj += b[j][r] * b[j][r];
                    aij += b[i][r] * b[j][r];
                }
                if aij.abs() <= ORTHO_TOL * (aii * ajj).sqrt() || aij == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (ajj - aii) / (2.0 * aij);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let bi = b[i][r];
                    let bj = b[j][r];
                    b[i][r] = c * bi - s * bj;
                    b[j][r] = s * bi + c * bj;
                }
                for r in 0..d {
                    let vi = v[i][r];
                    let vj = v[j][r];
                    v[i][r] = c * vi - s * vj;
                    v[j][r] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = b
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let vmat = Matrix::from_fn(d, d, |r, c| v[order[c]][r]);
    Svd { sigma, v: vmat }
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(sigma: &[f64], rel_tol: f64) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::operator_norm;
    use crate::rng::{sample_gaussian_matrix, SeededRng};

    #[test]
    fn diagonal_singular_values() {
        let a = Matrix::new(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let svd = jacobi_svd(&a);
        assert!((svd.sigma[0] - 3.0).abs() < 1e-12);
        assert!((svd.sigma[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = [1.0, 2.0, -1.0];
        let w = [0.5, 1.0, 2.0, -3.0];
        let a = Matrix::from_fn(3, 4, |i, j| u[i] * w[j]);
        let svd = jacobi_svd(&a);
        assert_eq!(numerical_rank(&svd.sigma, 1e-9), 1);
        // sigma_1 = |u| |w| for a rank-one outer product.
        let expect = (6.0f64).sqrt() * (14.25f64).sqrt();
        assert!((svd.sigma[0] - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn right_vectors_orthonormal_and_match_power_iteration() {
        let mut rng = SeededRng::new(11);
        let a = sample_gaussian_matrix(&mut rng, 8, 6, 1.0).unwrap();
        let svd = jacobi_svd(&a);
        let v = &svd.v;
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = (0..6).map(|r| v.get(r, i) * v.get(r, j)).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "V'V[{i}{j}] = {dot}");
            }
        }
        // Cross-check the top singular value against the independent power
        // iteration route.
        let pi = operator_norm(&a);
        assert!((svd.sigma[0] - pi).abs() < 1e-7 * pi, "jacobi {} vs power {}", svd.sigma[0], pi);
    }

    #[test]
    fn zero_matrix_rank_zero() {
        let a = Matrix::zeros(3, 3);
        let svd = jacobi_svd(&a);
        assert_eq!(numerical_rank(&svd.sigma, 1e-9), 0);
    }
}
