//! Symmetric-matrix feature variants and the small dense eigensolver
//! behind them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// How a symmetric bivariate matrix is flattened into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixVariant {
    /// Upper triangle, diagonal excluded.
    Matrix,
    /// Sorted eigenvalues + leading eigenvector + per-row off-diagonal max.
    Eigen,
    /// Matrix followed by Eigen.
    Combined,
}

impl MatrixVariant {
    pub const ALL: [MatrixVariant; 3] =
        [MatrixVariant::Matrix, MatrixVariant::Eigen, MatrixVariant::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            MatrixVariant::Matrix => "matrix",
            MatrixVariant::Eigen => "eigen",
            MatrixVariant::Combined => "combined",
        }
    }

    /// Feature count for an n x n symmetric matrix.
    pub fn dim(self, n: usize) -> usize {
        let tri = n * (n - 1) / 2;
        match self {
            MatrixVariant::Matrix => tri,
            MatrixVariant::Eigen => 3 * n,
            MatrixVariant::Combined => tri + 3 * n,
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns), sorted descending.
pub fn symmetric_eigen(mat: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = mat.nrows();
    assert_eq!(n, mat.ncols());
    let mut a = mat.clone();
    let mut v = Array2::<f64>::eye(n);

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (aip, aiq) = (a[[i, p]], a[[i, q]]);
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let (apj, aqj) = (a[[p, j]], a[[q, j]]);
                    a[[p, j]] = c * apj - s * aqj;
                    a[[q, j]] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let (vip, viq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap());
    let evals: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut evecs = Array2::<f64>::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            evecs[[i, new_col]] = v[[i, old_col]];
        }
    }
    (evals, evecs)
}

/// Flatten a symmetric matrix according to the variant.
///
/// Eigen layout: eigenvalues descending, then the leading eigenvector with
/// its largest-magnitude entry made positive, then the per-row maximum of
/// the off-diagonal entries.
pub fn variant_transform(mat: &Array2<f64>, variant: MatrixVariant) -> Vec<f64> {
    let n = mat.nrows();
    let upper = || -> Vec<f64> {
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(mat[[i, j]]);
            }
        }
        out
    };
    let eigenish = || -> Vec<f64> {
        let (evals, evecs) = symmetric_eigen(mat);
        let mut out = evals.clone();
        let mut lead: Vec<f64> = (0..n).map(|i| evecs[[i, 0]]).collect();
        let dominant = lead
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if lead[dominant] < 0.0 {
            for x in &mut lead {
                *x = -*x;
            }
        }
        out.extend(lead);
        for i in 0..n {
            let row_max = (0..n)
                .filter(|&j| j != i)
                .map(|j| mat[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(row_max);
        }
        out
    };
    match variant {
        MatrixVariant::Matrix => upper(),
        MatrixVariant::Eigen => eigenish(),
        MatrixVariant::Combined => {
            let mut out = upper();
            out.extend(eigenish());
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_matrix_variants() {
        let m = Array2::<f64>::eye(3);
        assert_eq!(variant_transform(&m, MatrixVariant::Matrix), vec![0.0, 0.0, 0.0]);
        let e = variant_transform(&m, MatrixVariant::Eigen);
        assert_eq!(e.len(), 9);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12 && (e[2] - 1.0).abs() < 1e-12);
        // off-diagonal row maxima are all 0
        assert!(e[6..9].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_matrix_spectrum() {
        let v = [0.5, -1.5, 2.0];
        let mut m = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                m[[i, j]] = v[i] * v[j];
            }
        }
        let (evals, evecs) = symmetric_eigen(&m);
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        assert!((evals[0] - norm2).abs() < 1e-9);
        assert!(evals[1].abs() < 1e-9 && evals[2].abs() < 1e-9);
        // Leading eigenvector parallel to v.
        let dot: f64 = (0..3).map(|i| evecs[[i, 0]] * v[i]).sum();
        assert!((dot.abs() - norm2.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn combined_is_concat_of_matrix_and_eigen() {
        let m = array![[1.0, 0.3, -0.2], [0.3, 1.0, 0.5], [-0.2, 0.5, 1.0]];
        let mut expect = variant_transform(&m, MatrixVariant::Matrix);
        expect.extend(variant_transform(&m, MatrixVariant::Eigen));
        assert_eq!(variant_transform(&m, MatrixVariant::Combined), expect);
        assert_eq!(MatrixVariant::Combined.dim(3), 3 + 9);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // Diagonalize then check A v = lambda v.
        let m = array![
            [4.0, 1.0, 0.5, 0.0],
            [1.0, 3.0, -0.7, 0.2],
            [0.5, -0.7, 2.0, 0.9],
            [0.0, 0.2, 0.9, 1.0]
        ];
        let (evals, evecs) = symmetric_eigen(&m);
        for k in 0..4 {
            for i in 0..4 {
                let av: f64 = (0..4).map(|j| m[[i, j]] * evecs[[j, k]]).sum();
                assert!((av - evals[k] * evecs[[i, k]]).abs() < 1e-9);
            }
        }
        for w in evals.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn leading_eigenvector_sign_is_normalized() {
        let v = [-0.8, 0.2, 0.1];
        let mut m = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                m[[i, j]] = v[i] * v[j];
            }
        }
        let e = variant_transform(&m, MatrixVariant::Eigen);
        // Largest-magnitude entry of the leading eigenvector is positive.
        let lead = &e[3..6];
        let dom = lead
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap();
        assert!(dom > 0.0);
    }
}
