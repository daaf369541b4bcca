use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::electrodes::ElectrodeSet;
use crate::error::{Error, Result};
use crate::geometry::triangle_area;
use crate::meshgen::{SigmaField, TetMesh};
use crate::sparse::{from_triplets, SparseMatrix};

/// Local P1 stiffness `V ∇ψiᵀ Σ ∇ψj` of element `e`.
pub fn element_stiffness(mesh: &TetMesh, e: usize, sigma: &Matrix3<f64>) -> Matrix4<f64> {
    let g = mesh.gradients(e);
    let v = mesh.volume(e);
    Matrix4::from_fn(|i, j| v * g[i].dot(&(sigma * g[j])))
}

fn check_sigma(mesh: &TetMesh) -> Result<()> {
    match mesh.sigma() {
        SigmaField::Scalar(s) => {
            if let Some(e) = s.iter().position(|&x| !(x >= 0.0)) {
                return Err(Error::Assembly(format!(
                    "element {e} has invalid conductivity {}",
                    s[e]
                )));
            }
        }
        SigmaField::Tensor(rows) => {
            if let Some(e) = rows.iter().position(|r| !crate::geometry::tensor_is_spd(r)) {
                return Err(Error::Assembly(format!(
                    "conductivity tensor of element {e} is not positive definite"
                )));
            }
        }
    }
    if let Some(e) = (0..mesh.element_count()).find(|&e| !(mesh.signed_volume(e) > 0.0)) {
        return Err(Error::Assembly(format!(
            "element {e} has non-positive volume"
        )));
    }
    Ok(())
}

fn stiffness_triplets(mesh: &TetMesh, elements: &[usize], unit: bool) -> Vec<(usize, usize, f64)> {
    elements
        .par_iter()
        .map(|&e| {
            let s = if unit {
                Matrix3::identity()
            } else {
                mesh.sigma().matrix(e)
            };
            let k = element_stiffness(mesh, e, &s);
            let t = mesh.tetra()[e];
            let mut out = Vec::with_capacity(16);
            for i in 0..4 {
                for j in 0..4 {
                    out.push((t[i], t[j], k[(i, j)]));
                }
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Volume term `∫σ∇ψi·∇ψj dV` only: no electrode terms, no grounding.
pub fn assemble_volume_stiffness(mesh: &TetMesh) -> Result<SparseMatrix> {
    check_sigma(mesh)?;
    let all: Vec<usize> = (0..mesh.element_count()).collect();
    let n = mesh.node_count();
    Ok(from_triplets(n, n, &stiffness_triplets(mesh, &all, false)))
}

/// Unit-conductivity stiffness restricted to `elements` (the derivative of
/// the volume term with respect to a piecewise-constant conductivity
/// parameter on those elements).
pub fn unit_stiffness(mesh: &TetMesh, elements: &[usize]) -> SparseMatrix {
    let n = mesh.node_count();
    from_triplets(n, n, &stiffness_triplets(mesh, elements, true))
}

/// Surface mass terms `Σ (1/(Z_ℓ A_ℓ)) ∫ψiψj dS` over electrode triangles.
fn electrode_mass_triplets(mesh: &TetMesh, electrodes: &ElectrodeSet) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for el in electrodes.electrodes() {
        let w = 1.0 / (el.impedance * el.area);
        for t in &el.triangles {
            let at = triangle_area(
                &mesh.nodes()[t[0]],
                &mesh.nodes()[t[1]],
                &mesh.nodes()[t[2]],
            );
            for i in 0..3 {
                for j in 0..3 {
                    let m = if i == j { at / 6.0 } else { at / 12.0 };
                    out.push((t[i], t[j], w * m));
                }
            }
        }
    }
    out
}

/// Lowest-index boundary node not covered by any electrode.
pub fn grounding_node(mesh: &TetMesh, electrodes: &ElectrodeSet) -> Result<usize> {
    let covered = electrodes.covered_nodes();
    let boundary: HashSet<usize> = mesh.boundary_faces().into_iter().flatten().collect();
    boundary
        .into_iter()
        .filter(|n| !covered.contains(n))
        .min()
        .ok_or_else(|| {
            Error::Electrode("electrodes cover the whole boundary; no grounding node".into())
        })
}

/// Stiffness matrix `A` with electrode terms and the grounding row/column
/// replaced by the identity at `ground`.
pub fn assemble_a(
    mesh: &TetMesh,
    electrodes: &ElectrodeSet,
    ground: usize,
) -> Result<SparseMatrix> {
    check_sigma(mesh)?;
    let all: Vec<usize> = (0..mesh.element_count()).collect();
    let mut triplets = stiffness_triplets(mesh, &all, false);
    triplets.extend(electrode_mass_triplets(mesh, electrodes));
    triplets.retain(|&(i, j, _)| i != ground && j != ground);
    triplets.push((ground, ground, 1.0));
    let n = mesh.node_count();
    Ok(from_triplets(n, n, &triplets))
}

/// Scaling of the electrode coupling blocks `B` and `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// `b_iℓ = ∫ψi dS/(Z_ℓA_ℓ)`, `c_ℓℓ = 1/Z_ℓ`: the discretization of the weak
    /// form, for which constants are in the kernel of the block system.
    #[default]
    Consistent,
    /// `b_iℓ = (1/Z_ℓ)∫ψi dS`, `c_ℓℓ = A_ℓ/Z_ℓ`. Equals `Consistent` with
    /// electrode ℓ rescaled by `A_ℓ`; only self-consistent for equal areas.
    Literal,
}

impl std::str::FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "consistent" => Ok(Self::Consistent),
            "literal" => Ok(Self::Literal),
            _ => Err(Error::Config(format!(
                "unknown electrode coupling '{s}' (expected consistent or literal)"
            ))),
        }
    }
}

/// Electrode coupling `B`, diagonal of `C`, and the mean-free projector
/// `R = I − (1/L)·1·1ᵀ`.
pub fn assemble_b_c_r(
    mesh: &TetMesh,
    electrodes: &ElectrodeSet,
) -> Result<(SparseMatrix, DVector<f64>, DMatrix<f64>)> {
    assemble_b_c_r_with(mesh, electrodes, Coupling::default())
}

pub fn assemble_b_c_r_with(
    mesh: &TetMesh,
    electrodes: &ElectrodeSet,
    coupling: Coupling,
) -> Result<(SparseMatrix, DVector<f64>, DMatrix<f64>)> {
    let l = electrodes.len();
    let mut triplets = Vec::new();
    let mut c = DVector::zeros(l);
    for (k, el) in electrodes.electrodes().iter().enumerate() {
        if !(el.area > 0.0) {
            return Err(Error::Electrode(format!(
                "electrode {} covers zero area",
                k + 1
            )));
        }
        let scale = match coupling {
            Coupling::Consistent => 1.0 / (el.impedance * el.area),
            Coupling::Literal => 1.0 / el.impedance,
        };
        for t in &el.triangles {
            let at = triangle_area(
                &mesh.nodes()[t[0]],
                &mesh.nodes()[t[1]],
                &mesh.nodes()[t[2]],
            );
            for &i in t {
                triplets.push((i, k, at * scale / 3.0));
            }
        }
        c[k] = el.area * scale;
    }
    let b = from_triplets(mesh.node_count(), l, &triplets);
    Ok((b, c, mean_free_projector(l)))
}

pub fn mean_free_projector(l: usize) -> DMatrix<f64> {
    let lf = l as f64;
    DMatrix::from_fn(l, l, |i, j| if i == j { 1.0 - 1.0 / lf } else { -1.0 / lf })
}
