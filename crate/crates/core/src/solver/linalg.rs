//! Dense helpers: LAPACK-backed solves plus a small Householder QR with
//! explicit access to the orthogonal complement.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, SolveH, UPLO};

use crate::error::{Error, Result};

/// Solve a symmetric indefinite system via Bunch-Kaufman factorization.
pub fn solve_sym_indef(matrix: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let x = matrix
        .solveh(rhs)
        .map_err(|e| Error::numerical(format!("symmetric-indefinite solve failed: {e}")))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("solve produced non-finite coefficients"));
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending.
pub fn eigh_sym(matrix: Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    matrix
        .eigh(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("symmetric eigendecomposition failed: {e}")))
}

/// Householder QR of a tall matrix, keeping the reflectors so that Q^T (and
/// hence the orthogonal complement block Q2) can be applied without ever
/// materialising the full N x N factor.
pub struct HouseholderQr {
    reflectors: Vec<Array1<f64>>,
    betas: Vec<f64>,
    r_diag: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl HouseholderQr {
    pub fn new(mut a: Array2<f64>) -> Self {
        let (rows, cols) = a.dim();
        assert!(rows >= cols, "QR helper expects a tall matrix");
        let mut reflectors = Vec::with_capacity(cols);
        let mut betas = Vec::with_capacity(cols);
        let mut r_diag = Vec::with_capacity(cols);

        for k in 0..cols {
            let mut v = Array1::zeros(rows);
            let mut norm2 = 0.0;
            for i in k..rows {
                let x = a[(i, k)];
                v[i] = x;
                norm2 += x * x;
            }
            let norm = norm2.sqrt();
            if norm == 0.0 {
                reflectors.push(v);
                betas.push(0.0);
                r_diag.push(0.0);
                continue;
            }
            let sign = if v[k] >= 0.0 { 1.0 } else { -1.0 };
            v[k] += sign * norm;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            let beta = 2.0 / vnorm2;
            // apply H = I - beta v v^T to the remaining columns
            for j in k..cols {
                let mut dot = 0.0;
                for i in k..rows {
                    dot += v[i] * a[(i, j)];
                }
                let scale = beta * dot;
                for i in k..rows {
                    a[(i, j)] -= scale * v[i];
                }
            }
            r_diag.push(a[(k, k)]);
            reflectors.push(v);
            betas.push(beta);
        }

        HouseholderQr {
            reflectors,
            betas,
            r_diag,
            rows,
            cols,
        }
    }

    pub fn r_diag(&self) -> &[f64] {
        &self.r_diag
    }

    /// v <- Q^T v (reflectors applied in elimination order).
    pub fn apply_qt_vec(&self, v: &mut Array1<f64>) {
        for k in 0..self.cols {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let refl = &self.reflectors[k];
            let mut dot = 0.0;
            for i in k..self.rows {
                dot += refl[i] * v[i];
            }
            let scale = beta * dot;
            for i in k..self.rows {
                v[i] -= scale * refl[i];
            }
        }
    }

    /// a <- Q^T a Q for a symmetric N x N matrix.
    pub fn apply_qt_two_sided(&self, a: &mut Array2<f64>) {
        let n = self.rows;
        debug_assert_eq!(a.dim(), (n, n));
        for k in 0..self.cols {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let refl = &self.reflectors[k];
            // rows: a <- H_k a
            for j in 0..n {
                let mut dot = 0.0;
                for i in k..n {
                    dot += refl[i] * a[(i, j)];
                }
                let scale = beta * dot;
                for i in k..n {
                    a[(i, j)] -= scale * refl[i];
                }
            }
        }
        for k in 0..self.cols {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let refl = &self.reflectors[k];
            // columns: a <- a H_k
            for i in 0..n {
                let mut dot = 0.0;
                for j in k..n {
                    dot += a[(i, j)] * refl[j];
                }
                let scale = beta * dot;
                for j in k..n {
                    a[(i, j)] -= scale * refl[j];
                }
            }
        }
    }
}

/// Column-pivoted Householder QR used only for rank detection: returns the
/// pivot order and the diagonal of R (non-increasing in magnitude).
pub struct PivotedQr {
    pub pivots: Vec<usize>,
    pub r_diag: Vec<f64>,
}

impl PivotedQr {
    pub fn new(mut a: Array2<f64>) -> Self {
        let (rows, cols) = a.dim();
        let steps = rows.min(cols);
        let mut pivots: Vec<usize> = (0..cols).collect();
        let mut r_diag = Vec::with_capacity(steps);

        for k in 0..steps {
            // pivot on the largest remaining column norm (recomputed; the
            // matrices here are tiny so downdating is not worth the drift)
            let mut best = k;
            let mut best_norm2 = -1.0;
            for j in k..cols {
                let norm2: f64 = (k..rows).map(|i| a[(i, j)] * a[(i, j)]).sum();
                if norm2 > best_norm2 {
                    best_norm2 = norm2;
                    best = j;
                }
            }
            if best != k {
                pivots.swap(k, best);
                for i in 0..rows {
                    let tmp = a[(i, k)];
                    a[(i, k)] = a[(i, best)];
                    a[(i, best)] = tmp;
                }
            }
            let norm = best_norm2.max(0.0).sqrt();
            if norm == 0.0 {
                r_diag.push(0.0);
                continue;
            }
            let mut v = vec![0.0; rows];
            for i in k..rows {
                v[i] = a[(i, k)];
            }
            let sign = if v[k] >= 0.0 { 1.0 } else { -1.0 };
            v[k] += sign * norm;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            let beta = 2.0 / vnorm2;
            for j in k..cols {
                let mut dot = 0.0;
                for i in k..rows {
                    dot += v[i] * a[(i, j)];
                }
                let scale = beta * dot;
                for i in k..rows {
                    a[(i, j)] -= scale * v[i];
                }
            }
            r_diag.push(a[(k, k)]);
        }

        PivotedQr { pivots, r_diag }
    }

    /// Number of diagonal entries above `tol` relative to the largest.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let largest = self.r_diag.first().map(|v| v.abs()).unwrap_or(0.0);
        if largest == 0.0 {
            return 0;
        }
        self.r_diag
            .iter()
            .take_while(|v| v.abs() > rel_tol * largest)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::seeded_rng(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn sym_indef_solve_round_trips() {
        // A saddle-like symmetric indefinite matrix.
        let a = array![[2.0, 1.0, 1.0], [1.0, -3.0, 0.5], [1.0, 0.5, 0.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = solve_sym_indef(&a, &b).unwrap();
        for i in 0..3 {
            assert_relative_eq!(x[i], x_true[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_an_error() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![1.0, 2.0];
        assert!(solve_sym_indef(&a, &b).is_err());
    }

    #[test]
    fn householder_qt_is_orthogonal() {
        let p = random_matrix(30, 5, 1);
        let qr = HouseholderQr::new(p.clone());
        // Q^T applied to each basis vector assembles Q^T; check orthonormality
        // through ||Q^T e_i|| = 1 and (Q^T e_i) . (Q^T e_j) = 0.
        let mut qt_cols = Vec::new();
        for i in 0..30 {
            let mut e = Array1::zeros(30);
            e[i] = 1.0;
            qr.apply_qt_vec(&mut e);
            qt_cols.push(e);
        }
        for i in 0..30 {
            for j in i..30 {
                let dot: f64 = qt_cols[i]
                    .iter()
                    .zip(qt_cols[j].iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(dot, expect, epsilon = 1e-12);
            }
        }
        // Q^T P has zeros below the diagonal of the leading block.
        for j in 0..5 {
            let mut col = p.column(j).to_owned();
            qr.apply_qt_vec(&mut col);
            for i in (j + 1)..30 {
                assert!(col[i].abs() < 1e-12, "column {j} row {i}: {}", col[i]);
            }
        }
    }

    #[test]
    fn two_sided_application_matches_explicit() {
        let p = random_matrix(12, 3, 2);
        let sym_seed = random_matrix(12, 12, 3);
        let sym = &sym_seed + &sym_seed.t();

        let qr = HouseholderQr::new(p);
        let mut projected = sym.clone();
        qr.apply_qt_two_sided(&mut projected);

        // Explicit route: Q^T columns as in the previous test.
        let mut qt = Array2::<f64>::zeros((12, 12));
        for i in 0..12 {
            let mut e = Array1::zeros(12);
            e[i] = 1.0;
            qr.apply_qt_vec(&mut e);
            qt.column_mut(i).assign(&e); // column i of Q^T ... = Q^T e_i
        }
        let explicit = qt.dot(&sym).dot(&qt.t());
        for i in 0..12 {
            for j in 0..12 {
                assert_relative_eq!(projected[(i, j)], explicit[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn pivoted_qr_detects_rank() {
        // Third column is a combination of the first two.
        let mut p = random_matrix(20, 3, 4);
        let combo: Vec<f64> = (0..20).map(|i| 2.0 * p[(i, 0)] - p[(i, 1)]).collect();
        for i in 0..20 {
            p[(i, 2)] = combo[i];
        }
        let qr = PivotedQr::new(p);
        assert_eq!(qr.rank(1e-10), 2);

        let full = random_matrix(20, 3, 5);
        assert_eq!(PivotedQr::new(full).rank(1e-10), 3);
    }
}
