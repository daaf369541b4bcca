//! Thin helpers over `nalgebra_sparse` CSR matrices.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type SparseMatrix = CsrMatrix<f64>;

/// CSR matrix from (row, col, value) triplets; duplicates are summed in
/// input order, so the result is deterministic for a deterministic input.
pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> SparseMatrix {
    let mut coo = CooMatrix::new(rows, cols);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

/// `y = A x`, rows processed in parallel.
pub fn spmv(a: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    let (offsets, cols, vals) = a.csr_data();
    y.par_iter_mut()
        .enumerate()
        .with_min_len(256)
        .for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in offsets[i]..offsets[i + 1] {
                acc += vals[k] * x[cols[k]];
            }
            *yi = acc;
        });
}

pub fn mul_vec(a: &SparseMatrix, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    spmv(a, x.as_slice(), y.as_mut_slice());
    y
}

pub fn to_dense(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

pub fn from_dense(d: &DMatrix<f64>) -> SparseMatrix {
    let mut t = Vec::new();
    for j in 0..d.ncols() {
        for i in 0..d.nrows() {
            if d[(i, j)] != 0.0 {
                t.push((i, j, d[(i, j)]));
            }
        }
    }
    t.sort_by_key(|&(i, j, _)| (i, j));
    from_triplets(d.nrows(), d.ncols(), &t)
}

pub fn is_symmetric(a: &SparseMatrix, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let at = a.transpose();
    let scale = a
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let diff = a - &at;
    diff.values().iter().all(|v| v.abs() <= tol * scale)
}

/// Writes `a` in Matrix Market coordinate format.
pub fn save_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    nalgebra_sparse::io::save_to_matrix_market_file(a, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = from_triplets(
            2,
            2,
            &[
                (0, 0, 1.0),
                (0, 0, 2.0),
                (1, 0, -1.0),
                (0, 1, -1.0),
                (1, 1, 2.0),
            ],
        );
        let d = to_dense(&a);
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 2.0]));
        assert!(is_symmetric(&a, 0.0));
        let y = mul_vec(&a, &DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(y.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn matrix_market_output() {
        let a = from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        save_matrix_market(&a, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text
            .to_lowercase()
            .starts_with("%%matrixmarket matrix coordinate real general"));
        let back: CsrMatrix<f64> = CsrMatrix::from(
            &nalgebra_sparse::io::load_coo_from_matrix_market_file::<f64, _>(&p).unwrap(),
        );
        assert_eq!(to_dense(&back), to_dense(&a));
    }
}
