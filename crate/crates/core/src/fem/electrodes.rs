use std::collections::{HashMap, HashSet};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::triangle_area;
use crate::meshgen::TetMesh;

/// One surface electrode: the mesh boundary triangles it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub triangles: Vec<[usize; 3]>,
    /// Contact impedance (Ohm).
    pub impedance: f64,
    /// Contact area (m²).
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeSet {
    electrodes: Vec<Electrode>,
}

impl ElectrodeSet {
    /// Electrodes from explicit boundary triangles (node triples) and
    /// impedances. Every triangle must be a boundary face of `mesh`, and no
    /// triangle may belong to two electrodes.
    pub fn from_triangles(mesh: &TetMesh, specs: Vec<(Vec<[usize; 3]>, f64)>) -> Result<Self> {
        let boundary: HashSet<[usize; 3]> = mesh.boundary_faces().iter().map(sorted).collect();
        let mut seen: HashSet<[usize; 3]> = HashSet::new();
        let mut electrodes = Vec::with_capacity(specs.len());
        for (l, (triangles, impedance)) in specs.into_iter().enumerate() {
            if !(impedance > 0.0) {
                return Err(Error::Electrode(format!(
                    "electrode {} has non-positive impedance {impedance}",
                    l + 1
                )));
            }
            for t in &triangles {
                let key = sorted(t);
                if !boundary.contains(&key) {
                    return Err(Error::Electrode(format!(
                        "electrode {} covers a triangle that is not on the mesh boundary",
                        l + 1
                    )));
                }
                if !seen.insert(key) {
                    return Err(Error::Electrode(format!(
                        "electrode {} shares a triangle with another electrode",
                        l + 1
                    )));
                }
            }
            let area: f64 = triangles
                .iter()
                .map(|t| {
                    triangle_area(
                        &mesh.nodes()[t[0]],
                        &mesh.nodes()[t[1]],
                        &mesh.nodes()[t[2]],
                    )
                })
                .sum();
            if !(area > 0.0) {
                return Err(Error::Electrode(format!(
                    "electrode {} covers zero area",
                    l + 1
                )));
            }
            electrodes.push(Electrode {
                triangles,
                impedance,
                area,
            });
        }
        Ok(Self { electrodes })
    }

    /// Disc-like electrodes: each boundary triangle whose centroid lies within
    /// `radius` of some center is assigned to the nearest such center.
    pub fn from_centers(
        mesh: &TetMesh,
        centers: &[Point3<f64>],
        radius: f64,
        impedances: &[f64],
    ) -> Result<Self> {
        if impedances.len() != centers.len() {
            return Err(Error::Electrode(
                "one impedance per electrode center is required".into(),
            ));
        }
        let mut groups: Vec<Vec<[usize; 3]>> = vec![Vec::new(); centers.len()];
        for tri in mesh.boundary_faces() {
            let c = Point3::from(
                (mesh.nodes()[tri[0]].coords
                    + mesh.nodes()[tri[1]].coords
                    + mesh.nodes()[tri[2]].coords)
                    / 3.0,
            );
            let nearest = centers
                .iter()
                .enumerate()
                .map(|(l, p)| (l, (p - c).norm()))
                .filter(|(_, d)| *d <= radius)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((l, _)) = nearest {
                groups[l].push(tri);
            }
        }
        if let Some(l) = groups.iter().position(Vec::is_empty) {
            return Err(Error::Electrode(format!(
                "electrode {} at {} covers no boundary triangle (radius {radius})",
                l + 1,
                centers[l]
            )));
        }
        Self::from_triangles(
            mesh,
            groups.into_iter().zip(impedances.iter().copied()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.electrodes
    }

    pub fn get(&self, l: usize) -> &Electrode {
        &self.electrodes[l]
    }

    /// Same electrodes in a different order: `order[k]` is the old index of
    /// new electrode `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            electrodes: order.iter().map(|&k| self.electrodes[k].clone()).collect(),
        }
    }

    pub fn covered_nodes(&self) -> HashSet<usize> {
        self.electrodes
            .iter()
            .flat_map(|e| e.triangles.iter().flatten().copied())
            .collect()
    }

    /// Electrode index per covered node (nodes on an electrode boundary may
    /// touch two electrodes; the first wins).
    pub fn node_owner(&self) -> HashMap<usize, usize> {
        let mut m = HashMap::new();
        for (l, e) in self.electrodes.iter().enumerate() {
            for &n in e.triangles.iter().flatten() {
                m.entry(n).or_insert(l);
            }
        }
        m
    }
}

fn sorted(t: &[usize; 3]) -> [usize; 3] {
    let mut k = *t;
    k.sort_unstable();
    k
}

/// Evenly spread points on the upper part of a sphere (Fibonacci lattice
/// over polar angles up to `max_polar` radians).
pub fn cap_positions(
    center: Point3<f64>,
    radius: f64,
    count: usize,
    max_polar: f64,
) -> Vec<Point3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let z_min = max_polar.cos();
    (0..count)
        .map(|k| {
            let z = 1.0 - (1.0 - z_min) * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            Point3::new(
                center.x + radius * r * phi.cos(),
                center.y + radius * r * phi.sin(),
                center.z + radius * z,
            )
        })
        .collect()
}

/// Points on a horizontal ring around a sphere, tilted `elevation` radians
/// above the equator.
pub fn ring_positions(
    center: Point3<f64>,
    radius: f64,
    count: usize,
    elevation: f64,
) -> Vec<Point3<f64>> {
    (0..count)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            Point3::new(
                center.x + radius * elevation.cos() * phi.cos(),
                center.y + radius * elevation.cos() * phi.sin(),
                center.z + radius * elevation.sin(),
            )
        })
        .collect()
}
