//! Preconditioned conjugate gradients with the lumped diagonal
//! preconditioner, and transfer-matrix evaluation.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{spmv, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    /// Lumped diagonal: row sums of absolute entries.
    Ldp,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcgConfig {
    /// Relative residual `‖Ax − b‖/‖b‖` to reach.
    pub tolerance: f64,
    /// `None` selects `5·√n + 1000`.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: None,
            preconditioner: Preconditioner::Ldp,
        }
    }
}

impl PcgConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    pub fn iteration_limit(&self, n: usize) -> usize {
        self.max_iterations
            .unwrap_or_else(|| (5.0 * (n as f64).sqrt()) as usize + 1000)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Parameter(format!(
                "PCG tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Parameter("PCG needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

/// Lumped diagonal preconditioner `d_i = Σ_j |a_ij|`.
pub fn ldp(a: &SparseMatrix) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Parameter("LDP needs a square matrix".into()));
    }
    let (offsets, _, vals) = a.csr_data();
    let mut d = DVector::zeros(a.nrows());
    for i in 0..a.nrows() {
        let s: f64 = vals[offsets[i]..offsets[i + 1]]
            .iter()
            .map(|v| v.abs())
            .sum();
        if s == 0.0 {
            return Err(Error::SingularPreconditioner(i));
        }
        d[i] = s;
    }
    Ok(d)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// Starts from `x = 0`. On failure to reach the tolerance the error carries
/// the iterate with the smallest residual seen.
pub fn pcg_solve(a: &SparseMatrix, b: &DVector<f64>, cfg: &PcgConfig) -> Result<PcgSolution> {
    cfg.validate()?;
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Parameter(format!(
            "dimension mismatch: A is {}x{}, b has {} entries",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Ldp => ldp(a)?.iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(PcgSolution {
            x: DVector::zeros(n),
            iterations: 0,
            residual: 0.0,
        });
    }
    let max_iter = cfg.iteration_limit(n);
    let mut x = vec![0.0; n];
    let mut r = b.as_slice().to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut best = (1.0, x.clone());

    for it in 1..=max_iter {
        spmv(a, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!(
                "PCG breakdown at iteration {it}: pᵀAp = {pap:e} (matrix not positive definite?)"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / b_norm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= cfg.tolerance {
            debug!("pcg converged: {it} iterations, relative residual {rel:e}");
            return Ok(PcgSolution {
                x: DVector::from_vec(x),
                iterations: it,
                residual: rel,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: best.0,
        column: None,
        best: Box::new(DVector::from_vec(best.1)),
    })
}

/// `T = A⁻¹B`, one PCG solve per column of `B`, columns solved in parallel.
/// Each column is computed independently, so the result does not depend on
/// the number of worker threads.
pub fn transfer_matrix(
    a: &SparseMatrix,
    b: &SparseMatrix,
    cfg: &PcgConfig,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Parameter("B must have as many rows as A".into()));
    }
    let bt = b.transpose();
    let columns: Vec<Result<DVector<f64>>> = (0..b.ncols())
        .into_par_iter()
        .map(|l| {
            let mut rhs = DVector::zeros(n);
            let row = bt.row(l);
            for (&i, &v) in row.col_indices().iter().zip(row.values()) {
                rhs[i] = v;
            }
            pcg_solve(a, &rhs, cfg).map(|s| s.x).map_err(|e| match e {
                Error::Convergence {
                    iterations,
                    residual,
                    best,
                    ..
                } => Error::Convergence {
                    iterations,
                    residual,
                    column: Some(l),
                    best,
                },
                other => other,
            })
        })
        .collect();
    let mut t = DMatrix::zeros(n, b.ncols());
    for (l, col) in columns.into_iter().enumerate() {
        t.set_column(l, &col?);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{from_dense, from_triplets, to_dense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1
    }

    #[test]
    fn ldp_examples() {
        let i = from_dense(&DMatrix::identity(3, 3));
        assert_eq!(ldp(&i).unwrap().as_slice(), &[1.0, 1.0, 1.0]);
        let a = from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        assert_eq!(ldp(&a).unwrap().as_slice(), &[3.0, 3.0]);
        let z = from_triplets(2, 2, &[(0, 0, 1.0)]);
        assert!(matches!(ldp(&z), Err(Error::SingularPreconditioner(1))));
    }

    #[test]
    fn identity_one_iteration() {
        let i = from_dense(&DMatrix::identity(5, 5));
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, 7.0]);
        let s = pcg_solve(&i, &b, &PcgConfig::default()).unwrap();
        assert_eq!(s.iterations, 1);
        assert!((s.x - b).amax() < 1e-15);
    }

    #[test]
    fn two_by_two_direct() {
        let a = from_dense(&DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]));
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let s = pcg_solve(&a, &b, &PcgConfig::with_tolerance(1e-14)).unwrap();
        assert!((s.x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((s.x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!(s.iterations <= 2);
    }

    #[test]
    fn random_spd_matches_cholesky() {
        let n = 50;
        let dense = random_spd(n, 42);
        let a = from_dense(&dense);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let exact = dense.clone().cholesky().unwrap().solve(&b);
        for pre in [Preconditioner::Ldp, Preconditioner::None] {
            let cfg = PcgConfig {
                tolerance: 1e-10,
                max_iterations: None,
                preconditioner: pre,
            };
            let s = pcg_solve(&a, &b, &cfg).unwrap();
            assert!((&s.x - &exact).norm() / exact.norm() < 1e-8);
            assert!(s.iterations <= n + 5);
        }
    }

    #[test]
    fn zero_rhs() {
        let a = from_dense(&random_spd(4, 1));
        let s = pcg_solve(&a, &DVector::zeros(4), &PcgConfig::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.x.amax(), 0.0);
    }

    #[test]
    fn convergence_error_carries_best_iterate() {
        let a = from_dense(&random_spd(30, 5));
        let b = DVector::from_element(30, 1.0);
        let cfg = PcgConfig {
            tolerance: 1e-14,
            max_iterations: Some(2),
            preconditioner: Preconditioner::Ldp,
        };
        match pcg_solve(&a, &b, &cfg) {
            Err(Error::Convergence {
                iterations,
                best,
                residual,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.len(), 30);
                assert!(residual < 1.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn transfer_identity_and_scaling() {
        let b = from_triplets(4, 2, &[(0, 0, 1.0), (2, 0, -2.0), (3, 1, 0.5), (1, 1, 4.0)]);
        let i = from_dense(&DMatrix::identity(4, 4));
        let t = transfer_matrix(&i, &b, &PcgConfig::with_tolerance(1e-14)).unwrap();
        assert!((t - to_dense(&b)).amax() < 1e-15);
        let two = from_dense(&(DMatrix::identity(4, 4) * 2.0));
        let t = transfer_matrix(&two, &b, &PcgConfig::with_tolerance(1e-14)).unwrap();
        assert!((t - to_dense(&b) / 2.0).amax() < 1e-15);
    }

    #[test]
    fn transfer_reports_column() {
        let a = from_dense(&random_spd(20, 9));
        let b = from_triplets(20, 3, &[(0, 0, 1.0), (5, 1, 1.0), (9, 2, 1.0)]);
        let cfg = PcgConfig {
            tolerance: 1e-15,
            max_iterations: Some(1),
            preconditioner: Preconditioner::Ldp,
        };
        assert!(matches!(
            transfer_matrix(&a, &b, &cfg),
            Err(Error::Convergence {
                column: Some(0),
                ..
            })
        ));
    }

    #[test]
    fn invalid_config() {
        let a = from_dense(&DMatrix::identity(2, 2));
        let b = DVector::from_element(2, 1.0);
        assert!(pcg_solve(&a, &b, &PcgConfig::with_tolerance(0.0)).is_err());
    }
}
