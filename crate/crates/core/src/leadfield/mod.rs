//! EEG lead fields, the nonlinear CEM forward map for current injection, and
//! the linearized EIT lead field.
//!
//! With the transfer matrix `T = A⁻¹B` and `M = C − BᵀT`:
//!
//! ```text
//! EEG:  L = −R M⁻¹ Tᵀ G
//! EIT:  y = R M⁻¹ I,   ∂y/∂s_m = −R M⁻¹ Tᵀ (∂A/∂s_m) T M⁻¹ I
//! ```

mod eit;
mod io;

use log::info;
use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use eit::{adjacent_patterns, eit_leadfield, eit_leadfield_with, EitDofMap};
pub use io::LeadFieldHeader;

use crate::error::{Error, Result};
use crate::fem::CemSystem;
use crate::meshgen::{OrientationMode, SigmaField, SourceSpace};
use crate::solver::{transfer_matrix, PcgConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Eeg,
    Eit,
}

/// Dense lead field with one column per inverse DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    /// Rows are electrodes (EEG) or `pattern·L + electrode` (EIT).
    pub matrix: DMatrix<f64>,
    /// Position of each column's DOF.
    pub positions: Vec<Point3<f64>>,
    /// Orientation of each column's DOF (EEG only; empty for EIT).
    pub orientations: Vec<Vector3<f64>>,
    pub modality: Modality,
    /// SHA-256 of the background conductivity (EIT only).
    pub sigma_hash: Option<String>,
    /// Data at the expansion point (EIT only).
    pub background: Option<DVector<f64>>,
}

impl LeadField {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dofs(&self) -> usize {
        self.matrix.ncols()
    }

    /// `L x` plus the background data, if any.
    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dofs() {
            return Err(Error::Data(format!(
                "expected {} DOF amplitudes, got {}",
                self.dofs(),
                x.len()
            )));
        }
        let mut y = &self.matrix * x;
        if let Some(bg) = &self.background {
            y += bg;
        }
        Ok(y)
    }

    /// Lead field with rows reordered: row `k` of the result is row
    /// `order[k]` of `self` (EEG).
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let matrix = DMatrix::from_fn(order.len(), self.dofs(), |k, j| self.matrix[(order[k], j)]);
        Self {
            matrix,
            ..self.clone()
        }
    }
}

/// Hex SHA-256 of a conductivity field.
pub fn sigma_hash(sigma: &SigmaField) -> String {
    Sha256::digest(sigma.to_le_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Transfer matrix and the reduced electrode operator `M⁻¹` shared by all
/// lead-field evaluations on one system.
#[derive(Debug, Clone)]
pub struct CemOperator {
    pub t: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub m_inv: DMatrix<f64>,
}

/// Ratio of extreme singular values of `M` below which it counts as singular.
const SINGULAR_RCOND: f64 = 1e-13;

impl CemOperator {
    pub fn new(sys: &CemSystem, cfg: &PcgConfig) -> Result<Self> {
        let t = transfer_matrix(&sys.a, &sys.b, cfg)?;
        let btt = crate::sparse::to_dense(&sys.b).transpose() * &t;
        let mut m = sys.c_matrix() - btt;
        m = (&m + m.transpose()) * 0.5;
        Self::from_parts(t, m)
    }

    /// Builds the operator from a precomputed transfer matrix and `M`.
    pub fn from_parts(t: DMatrix<f64>, m: DMatrix<f64>) -> Result<Self> {
        let sv = m.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax > 0.0) || smin / smax < SINGULAR_RCOND {
            return Err(Error::SingularSystem(format!(
                "M = C − BᵀA⁻¹B is singular (singular values {smin:e} .. {smax:e})"
            )));
        }
        let m_inv = m
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem("LU factorisation of M failed".into()))?;
        Ok(Self { t, m, m_inv })
    }

    pub fn electrode_count(&self) -> usize {
        self.m.nrows()
    }

    /// `−R M⁻¹ X` for an `L × k` block `X`.
    fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = -(&self.m_inv * x);
        center_columns(&mut y);
        y
    }
}

/// Subtracts the column mean from every column (applies `R`).
pub(crate) fn center_columns(y: &mut DMatrix<f64>) {
    for mut col in y.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// Column positions and orientations of a source space.
fn source_columns(sources: &SourceSpace) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
    let mut pos = Vec::with_capacity(sources.dof_count());
    let mut dir = Vec::with_capacity(sources.dof_count());
    for (s, p) in sources.positions.iter().enumerate() {
        match sources.mode {
            OrientationMode::Constrained => {
                pos.push(*p);
                dir.push(sources.orientations[s]);
            }
            OrientationMode::Cartesian => {
                for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
                    pos.push(*p);
                    dir.push(axis);
                }
            }
        }
    }
    (pos, dir)
}

/// EEG lead field `L = −R M⁻¹ Tᵀ G` using a precomputed operator.
pub fn eeg_leadfield_with(
    op: &CemOperator,
    sys: &CemSystem,
    sources: &SourceSpace,
) -> Result<LeadField> {
    if sys.g.ncols() == 0 {
        return Err(Error::Parameter(
            "source matrix G is empty; attach sources first".into(),
        ));
    }
    if sys.g.ncols() != sources.dof_count() {
        return Err(Error::Parameter(format!(
            "G has {} columns but the source space has {} DOFs",
            sys.g.ncols(),
            sources.dof_count()
        )));
    }
    let gt_t: DMatrix<f64> = &sys.g.transpose() * &op.t;
    let matrix = op.project(&gt_t.transpose());
    let (positions, orientations) = source_columns(sources);
    Ok(LeadField {
        matrix,
        positions,
        orientations,
        modality: Modality::Eeg,
        sigma_hash: None,
        background: None,
    })
}

/// EEG lead field for the sources attached to `sys`.
pub fn eeg_leadfield(sys: &CemSystem, sources: &SourceSpace, cfg: &PcgConfig) -> Result<LeadField> {
    let op = CemOperator::new(sys, cfg)?;
    info!(
        "eeg lead field: {} electrodes, {} DOFs",
        op.electrode_count(),
        sources.dof_count()
    );
    eeg_leadfield_with(&op, sys, sources)
}

/// Checks that every column of `currents` sums to zero.
fn check_patterns(currents: &DMatrix<f64>, l: usize) -> Result<()> {
    if currents.nrows() != l {
        return Err(Error::Parameter(format!(
            "current patterns have {} rows for {} electrodes",
            currents.nrows(),
            l
        )));
    }
    for col in currents.column_iter() {
        let sum = col.sum();
        let norm = col.norm();
        if sum.abs() > 1e-12 * norm {
            return Err(Error::CurrentPattern { sum, norm });
        }
    }
    Ok(())
}

/// Electrode voltages `y = R M⁻¹ I` for each current pattern (column of
/// `currents`).
pub fn eit_forward_with(op: &CemOperator, currents: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_patterns(currents, op.electrode_count())?;
    let mut y = &op.m_inv * currents;
    center_columns(&mut y);
    Ok(y)
}

pub fn eit_forward(
    sys: &CemSystem,
    currents: &DMatrix<f64>,
    cfg: &PcgConfig,
) -> Result<DMatrix<f64>> {
    check_patterns(currents, sys.electrode_count())?;
    eit_forward_with(&CemOperator::new(sys, cfg)?, currents)
}

/// Stacks pattern columns into one data vector, index `pattern·L + electrode`.
pub fn stack_patterns(y: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(y.as_slice())
}

#[cfg(test)]
mod tests;
