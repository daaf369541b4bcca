//! Lowest-order Whitney (RT0) face functions as primary-current basis.
//!
//! A face function has unit flux through its face and constant divergence
//! `±1/V` on each adjoining element (positive on the host element, where it
//! points outward). Since `∫ψi dV = V/4`, every node of an adjoining element
//! receives `±1/4` in the corresponding column of `G`.

use std::collections::HashMap;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::meshgen::{OrientationMode, SourceSpace, TetMesh, LOCAL_FACES};
use crate::sparse::{from_triplets, SparseMatrix};

/// Face function `f` of host element `e`, with its neighbour across the face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceFunction {
    pub host: usize,
    pub local_face: usize,
    pub neighbor: Option<(usize, usize)>,
}

/// The four face functions of each source element together with their
/// dipole moments.
#[derive(Debug, Clone)]
pub struct SourceModel {
    faces: HashMap<[usize; 3], Vec<(usize, usize)>>,
}

impl SourceModel {
    pub fn new(mesh: &TetMesh) -> Self {
        Self {
            faces: mesh.face_map(),
        }
    }

    pub fn face_functions(&self, mesh: &TetMesh, e: usize) -> [FaceFunction; 4] {
        let t = mesh.tetra()[e];
        std::array::from_fn(|f| {
            let lf = LOCAL_FACES[f];
            let mut key = [t[lf[0]], t[lf[1]], t[lf[2]]];
            key.sort_unstable();
            let neighbor = self.faces[&key]
                .iter()
                .copied()
                .find(|&(other, _)| other != e);
            FaceFunction {
                host: e,
                local_face: f,
                neighbor,
            }
        })
    }

    /// `∫ w dV` over the support. On the host it is `(face centroid − opposite
    /// vertex)/4`; on the neighbour `(opposite vertex' − face centroid)/4`.
    pub fn moment(&self, mesh: &TetMesh, ff: &FaceFunction) -> Vector3<f64> {
        let face_centroid = |e: usize, f: usize| {
            let t = mesh.tetra()[e];
            let lf = LOCAL_FACES[f];
            (mesh.nodes()[t[lf[0]]].coords
                + mesh.nodes()[t[lf[1]]].coords
                + mesh.nodes()[t[lf[2]]].coords)
                / 3.0
        };
        let opposite = |e: usize, f: usize| mesh.nodes()[mesh.tetra()[e][f]].coords;
        let mut m =
            (face_centroid(ff.host, ff.local_face) - opposite(ff.host, ff.local_face)) / 4.0;
        if let Some((e2, f2)) = ff.neighbor {
            m += (opposite(e2, f2) - face_centroid(e2, f2)) / 4.0;
        }
        m
    }

    /// Nodal entries `(node, g)` of the `G` column of a face function.
    pub fn column(&self, mesh: &TetMesh, ff: &FaceFunction) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = mesh.tetra()[ff.host].iter().map(|&n| (n, 0.25)).collect();
        if let Some((e2, _)) = ff.neighbor {
            out.extend(mesh.tetra()[e2].iter().map(|&n| (n, -0.25)));
        }
        out
    }

    /// Coefficients of the minimum-norm combination of the four face
    /// functions of `e` whose total moment equals `target`.
    pub fn moment_matching(
        &self,
        mesh: &TetMesh,
        e: usize,
        target: &Vector3<f64>,
    ) -> Result<Vector4<f64>> {
        let ffs = self.face_functions(mesh, e);
        let m = Matrix3x4::from_columns(&[
            self.moment(mesh, &ffs[0]),
            self.moment(mesh, &ffs[1]),
            self.moment(mesh, &ffs[2]),
            self.moment(mesh, &ffs[3]),
        ]);
        let gram: Matrix3<f64> = m * m.transpose();
        let inv = gram.try_inverse().ok_or_else(|| {
            Error::Assembly(format!("face moments of element {e} are degenerate"))
        })?;
        Ok(m.transpose() * (inv * target))
    }
}

/// `G` with four columns per source: the face functions of its element.
pub fn assemble_face_g(mesh: &TetMesh, sources: &SourceSpace) -> Result<SparseMatrix> {
    check_sources(mesh, sources)?;
    let model = SourceModel::new(mesh);
    let mut triplets = Vec::new();
    for (s, &e) in sources.elements.iter().enumerate() {
        for (f, ff) in model.face_functions(mesh, e).iter().enumerate() {
            for (n, g) in model.column(mesh, ff) {
                triplets.push((n, 4 * s + f, g));
            }
        }
    }
    Ok(from_triplets(
        mesh.node_count(),
        4 * sources.len(),
        &triplets,
    ))
}

/// `G` with one column per source component: the source orientation in
/// constrained mode, or the x, y, z unit dipoles in Cartesian mode, each
/// realised by moment matching over the four face functions.
pub fn assemble_g(mesh: &TetMesh, sources: &SourceSpace) -> Result<SparseMatrix> {
    check_sources(mesh, sources)?;
    let model = SourceModel::new(mesh);
    let comps = sources.mode.components();
    let mut triplets = Vec::new();
    for (s, &e) in sources.elements.iter().enumerate() {
        let ffs = model.face_functions(mesh, e);
        let cols: Vec<Vec<(usize, f64)>> = ffs.iter().map(|ff| model.column(mesh, ff)).collect();
        let targets: Vec<Vector3<f64>> = match sources.mode {
            OrientationMode::Constrained => vec![sources.orientations[s]],
            OrientationMode::Cartesian => vec![Vector3::x(), Vector3::y(), Vector3::z()],
        };
        for (k, target) in targets.iter().enumerate() {
            let alpha = model.moment_matching(mesh, e, target)?;
            for (f, col) in cols.iter().enumerate() {
                for &(n, g) in col {
                    triplets.push((n, comps * s + k, alpha[f] * g));
                }
            }
        }
    }
    Ok(from_triplets(
        mesh.node_count(),
        comps * sources.len(),
        &triplets,
    ))
}

fn check_sources(mesh: &TetMesh, sources: &SourceSpace) -> Result<()> {
    for (s, (&e, p)) in sources.elements.iter().zip(&sources.positions).enumerate() {
        if e >= mesh.element_count() || !mesh.contains(e, p) {
            return Err(Error::Location(format!(
                "source {s} at {p} is not inside its host element"
            )));
        }
    }
    Ok(())
}
