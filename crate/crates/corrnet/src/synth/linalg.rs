//! Dense symmetric linear algebra for correlation-matrix validation.

/// Lower Cholesky factor of a symmetric positive semi-definite matrix.
///
/// Pivots within `tolerance` of zero are treated as exact zeros so
/// that rank-deficient matrices (perfectly correlated instruments)
/// still factor. Returns `None` when a pivot falls below `-tolerance`
/// or a zeroed column turns out to be inconsistent, i.e. the matrix is
/// not PSD.
pub(crate) fn cholesky_psd(matrix: &[Vec<f64>], tolerance: f64) -> Option<Vec<Vec<f64>>> {
    let n = matrix.len();
    let mut lower = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut pivot = matrix[j][j];
        for k in 0..j {
            pivot -= lower[j][k] * lower[j][k];
        }
        if pivot < -tolerance {
            return None;
        }
        if pivot <= tolerance {
            // dependent column; for a true PSD matrix the residuals
            // below the pivot must vanish as well
            lower[j][j] = 0.0;
            for i in (j + 1)..n {
                let mut s = matrix[i][j];
                for k in 0..j {
                    s -= lower[i][k] * lower[j][k];
                }
                if s.abs() > tolerance.sqrt() {
                    return None;
                }
            }
            continue;
        }
        lower[j][j] = pivot.sqrt();
        for i in (j + 1)..n {
            let mut s = matrix[i][j];
            for k in 0..j {
                s -= lower[i][k] * lower[j][k];
            }
            lower[i][j] = s / lower[j][j];
        }
    }
    Some(lower)
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
/// Used only to report how far a rejected matrix is from PSD.
pub(crate) fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-15 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(lower: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = lower.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i][j] += lower[i][k] * lower[j][k];
                }
            }
        }
        out
    }

    #[test]
    fn factor_reconstructs_a_definite_matrix() {
        let m = vec![
            vec![1.0, 0.5, 0.2],
            vec![0.5, 1.0, 0.3],
            vec![0.2, 0.3, 1.0],
        ];
        let l = cholesky_psd(&m, 1e-10).unwrap();
        let back = reconstruct(&l);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[i][j] - m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_but_psd_matrix_factors() {
        // perfectly correlated pair
        let m = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let l = cholesky_psd(&m, 1e-10).unwrap();
        assert_eq!(l[1][1], 0.0);
        let back = reconstruct(&l);
        assert!((back[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = vec![
            vec![1.0, -0.9, -0.9],
            vec![-0.9, 1.0, -0.9],
            vec![-0.9, -0.9, 1.0],
        ];
        assert!(cholesky_psd(&m, 1e-10).is_none());
        let mut eig = symmetric_eigenvalues(&m);
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eig[0] + 0.8).abs() < 1e-9, "smallest eigenvalue {}", eig[0]);
        assert!((eig[2] - 1.9).abs() < 1e-9);
    }

    #[test]
    fn eigenvalues_of_diagonal_matrix_are_its_entries() {
        let m = vec![vec![2.0, 0.0], vec![0.0, 3.0]];
        let mut eig = symmetric_eigenvalues(&m);
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(eig, vec![2.0, 3.0]);
    }
}
