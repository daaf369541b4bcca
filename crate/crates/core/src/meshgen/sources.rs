use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::mesh::TetMesh;
use crate::error::{Error, Result};
use crate::geometry::raycast::closest_point_on_triangle;
use crate::geometry::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationMode {
    /// One component per position, along the outward surface normal.
    Constrained,
    /// Three components per position ordered x, y, z.
    Cartesian,
}

impl OrientationMode {
    pub fn components(self) -> usize {
        match self {
            OrientationMode::Constrained => 1,
            OrientationMode::Cartesian => 3,
        }
    }
}

/// Source positions, their host elements and (constrained mode) unit
/// orientations. In Cartesian mode `orientations` is empty and the lead
/// field columns run "position 1 xyz, position 2 xyz, ...".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpace {
    pub positions: Vec<Point3<f64>>,
    pub orientations: Vec<Vector3<f64>>,
    pub elements: Vec<usize>,
    pub mode: OrientationMode,
}

impl SourceSpace {
    pub fn new(
        positions: Vec<Point3<f64>>,
        orientations: Vec<Vector3<f64>>,
        elements: Vec<usize>,
        mode: OrientationMode,
    ) -> Result<Self> {
        if elements.len() != positions.len() {
            return Err(Error::Parameter(
                "one host element per source position is required".into(),
            ));
        }
        match mode {
            OrientationMode::Cartesian if !orientations.is_empty() => {
                return Err(Error::Parameter(
                    "Cartesian source spaces carry no orientations".into(),
                ))
            }
            OrientationMode::Constrained => {
                if orientations.len() != positions.len() {
                    return Err(Error::Parameter(
                        "one orientation per source position is required".into(),
                    ));
                }
                if orientations.iter().any(|o| (o.norm() - 1.0).abs() > 1e-9) {
                    return Err(Error::Parameter(
                        "source orientations must have unit norm".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(Self {
            positions,
            orientations,
            elements,
            mode,
        })
    }

    /// Builds a source space from positions, locating each host element.
    pub fn locate(
        mesh: &TetMesh,
        positions: Vec<Point3<f64>>,
        orientations: Vec<Vector3<f64>>,
        mode: OrientationMode,
    ) -> Result<Self> {
        let elements = positions
            .iter()
            .map(|p| {
                mesh.locate(p)
                    .ok_or_else(|| Error::Location(format!("source at {p} lies outside the mesh")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(positions, orientations, elements, mode)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dof_count(&self) -> usize {
        self.len() * self.mode.components()
    }

    pub fn nearest(&self, p: &Point3<f64>) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| {
            (self.positions[a] - p)
                .norm_squared()
                .total_cmp(&(self.positions[b] - p).norm_squared())
        })
    }
}

/// Samples `n` source positions uniformly over the active compartments.
///
/// A host element is drawn with probability proportional to its volume, then
/// a uniform point inside it. Constrained sources point along the outward
/// normal of the nearest triangle of any active compartment surface.
pub fn place_sources(
    mesh: &TetMesh,
    seg: &Segmentation,
    n: usize,
    mode: OrientationMode,
    seed: u64,
) -> Result<SourceSpace> {
    if n == 0 {
        return Err(Error::Parameter("at least one source is required".into()));
    }
    let active = seg.active_indices();
    if active.is_empty() {
        return Err(Error::Config(
            "no active compartment for source placement".into(),
        ));
    }
    let candidates: Vec<usize> = (0..mesh.element_count())
        .filter(|&e| active.contains(&mesh.labels()[e]))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Config(
            "active compartments contain no mesh element".into(),
        ));
    }
    let weights: Vec<f64> = candidates.iter().map(|&e| mesh.volume(e)).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    let mut elements = Vec::with_capacity(n);
    for _ in 0..n {
        let e = candidates[picker.sample(&mut rng)];
        let w: [f64; 4] = std::array::from_fn(|_| Exp1.sample(&mut rng));
        let total: f64 = w.iter().sum();
        let verts = mesh.vertices(e);
        let p = verts
            .iter()
            .zip(w.iter())
            .fold(Vector3::zeros(), |acc, (v, wi)| {
                acc + v.coords * (wi / total)
            });
        positions.push(Point3::from(p));
        elements.push(e);
    }
    let orientations = match mode {
        OrientationMode::Cartesian => Vec::new(),
        OrientationMode::Constrained => positions
            .iter()
            .map(|p| nearest_surface_normal(seg, &active, p))
            .collect(),
    };
    SourceSpace::new(positions, orientations, elements, mode)
}

fn nearest_surface_normal(seg: &Segmentation, active: &[usize], p: &Point3<f64>) -> Vector3<f64> {
    let mut best = (f64::INFINITY, Vector3::z());
    for &c in active {
        for mesh in seg.compartments()[c].sub_meshes() {
            for t in 0..mesh.triangles().len() {
                let [a, b, cc] = mesh.triangle(t);
                let d = (p - closest_point_on_triangle(p, &a, &b, &cc)).norm_squared();
                if d < best.0 {
                    best = (d, mesh.normal(t));
                }
            }
        }
    }
    best.1
}
