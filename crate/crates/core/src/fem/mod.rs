//! Complete-electrode-model system assembly.
//!
//! The block system couples nodal potentials `z` and electrode voltages `v`:
//!
//! ```text
//! [  A   -B ] [z]   [-G x]
//! [ -Bᵀ   C ] [v] = [  I ]
//! ```

mod assembly;
mod electrodes;
mod source_model;

use std::path::Path;

use nalgebra::{DMatrix, DVector};

pub use assembly::{
    assemble_a, assemble_b_c_r, assemble_b_c_r_with, assemble_volume_stiffness, element_stiffness,
    grounding_node, mean_free_projector, unit_stiffness, Coupling,
};
pub use electrodes::{cap_positions, ring_positions, Electrode, ElectrodeSet};
pub use source_model::{assemble_face_g, assemble_g, FaceFunction, SourceModel};

use crate::error::{Error, Result};
use crate::meshgen::{SourceSpace, TetMesh};
use crate::sparse::{self, SparseMatrix};

#[derive(Debug, Clone)]
pub struct CemSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    /// Diagonal of `C`.
    pub c: DVector<f64>,
    pub r: DMatrix<f64>,
    /// Source matrix; empty (n×0) until sources are attached.
    pub g: SparseMatrix,
    pub ground: usize,
}

impl CemSystem {
    pub fn assemble(mesh: &TetMesh, electrodes: &ElectrodeSet) -> Result<Self> {
        Self::assemble_with(mesh, electrodes, Coupling::default())
    }

    pub fn assemble_with(
        mesh: &TetMesh,
        electrodes: &ElectrodeSet,
        coupling: Coupling,
    ) -> Result<Self> {
        if electrodes.is_empty() {
            return Err(Error::Electrode(
                "at least one electrode is required".into(),
            ));
        }
        let ground = grounding_node(mesh, electrodes)?;
        let a = assemble_a(mesh, electrodes, ground)?;
        let (b, c, r) = assemble_b_c_r_with(mesh, electrodes, coupling)?;
        Ok(Self {
            a,
            b,
            c,
            r,
            g: sparse::from_triplets(mesh.node_count(), 0, &[]),
            ground,
        })
    }

    pub fn with_sources(mut self, mesh: &TetMesh, sources: &SourceSpace) -> Result<Self> {
        self.g = assemble_g(mesh, sources)?;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.a.nrows()
    }

    pub fn electrode_count(&self) -> usize {
        self.c.len()
    }

    pub fn c_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.c)
    }

    /// Writes `A`, `B`, `C`, `R` and `G` as Matrix Market files into `dir`.
    pub fn export_matrix_market(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        sparse::save_matrix_market(&self.a, dir.join("A.mtx"))?;
        sparse::save_matrix_market(&self.b, dir.join("B.mtx"))?;
        sparse::save_matrix_market(&sparse::from_dense(&self.c_matrix()), dir.join("C.mtx"))?;
        sparse::save_matrix_market(&sparse::from_dense(&self.r), dir.join("R.mtx"))?;
        sparse::save_matrix_market(&self.g, dir.join("G.mtx"))
    }
}

#[cfg(test)]
mod tests;
