use std::collections::HashSet;

use nalgebra::Point3;

use super::mesh::{tet_signed_volume, TetMesh};
use crate::error::{Error, Result};

pub const DEFAULT_SMOOTHING_STEP: f64 = 0.3;
pub const DEFAULT_SMOOTHING_ITERATIONS: usize = 2;

/// Sign-alternating Laplacian smoothing of compartment interfaces.
///
/// Only nodes where two labels meet, and which are not on the outer
/// boundary, move. Each iteration is a pass with `+step` followed by one
/// with `-step`, each pulling a node toward the mean of its interface
/// neighbours. A move that would leave any adjacent element with
/// non-positive volume is skipped for that node.
pub fn smooth_mesh(mesh: &TetMesh, iterations: usize, step: f64) -> Result<TetMesh> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::Parameter(format!(
            "smoothing step must lie in (0, 1), got {step}"
        )));
    }
    if iterations == 0 {
        return Ok(mesh.clone());
    }
    let node_elements = mesh.node_elements();
    let labels = mesh.labels();
    let boundary: HashSet<usize> = mesh.boundary_faces().into_iter().flatten().collect();
    let interface: Vec<bool> = (0..mesh.node_count())
        .map(|n| {
            let first = labels[node_elements[n][0]];
            !boundary.contains(&n) && node_elements[n].iter().any(|&e| labels[e] != first)
        })
        .collect();
    let neighbors: Vec<Vec<usize>> = mesh
        .node_neighbors()
        .into_iter()
        .enumerate()
        .map(|(n, nb)| {
            if interface[n] {
                nb.into_iter().filter(|&m| interface[m]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();

    let mut nodes = mesh.nodes().to_vec();
    for _ in 0..iterations {
        for lambda in [step, -step] {
            let targets: Vec<Option<Point3<f64>>> = (0..nodes.len())
                .map(|n| {
                    if neighbors[n].is_empty() {
                        return None;
                    }
                    let mean = neighbors[n]
                        .iter()
                        .map(|&m| nodes[m].coords)
                        .sum::<nalgebra::Vector3<f64>>()
                        / neighbors[n].len() as f64;
                    Some(Point3::from(
                        nodes[n].coords + lambda * (mean - nodes[n].coords),
                    ))
                })
                .collect();
            for (n, target) in targets.into_iter().enumerate() {
                let Some(target) = target else { continue };
                let old = nodes[n];
                nodes[n] = target;
                let valid = node_elements[n].iter().all(|&e| {
                    let t = mesh.tetra()[e];
                    tet_signed_volume(&nodes[t[0]], &nodes[t[1]], &nodes[t[2]], &nodes[t[3]]) > 0.0
                });
                if !valid {
                    nodes[n] = old;
                }
            }
        }
    }
    Ok(mesh.with_nodes_unchecked(nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{shapes, Compartment, Conductivity, Segmentation};
    use crate::meshgen::generate_mesh;

    fn two_spheres() -> TetMesh {
        let seg = Segmentation::new(vec![
            Compartment::new(
                "inner",
                vec![shapes::icosphere("i", Point3::origin(), 0.5, 2)],
                Conductivity::Isotropic(0.33),
                0,
                true,
            )
            .unwrap(),
            Compartment::new(
                "outer",
                vec![shapes::icosphere("o", Point3::origin(), 1.0, 2)],
                Conductivity::Isotropic(0.43),
                0,
                false,
            )
            .unwrap(),
        ])
        .unwrap();
        generate_mesh(&seg, 0.2).unwrap()
    }

    #[test]
    fn zero_iterations_is_identity() {
        let m = two_spheres();
        assert_eq!(smooth_mesh(&m, 0, 0.3).unwrap(), m);
    }

    #[test]
    fn step_out_of_range() {
        let m = two_spheres();
        assert!(matches!(smooth_mesh(&m, 1, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(smooth_mesh(&m, 1, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn smoothing_keeps_volumes_positive_and_moves_interface() {
        let m = two_spheres();
        let s = smooth_mesh(&m, 3, 0.5).unwrap();
        assert!(s.min_signed_volume() > 0.0);
        assert_eq!(s.tetra(), m.tetra());
        assert_eq!(s.labels(), m.labels());
        let moved = m
            .nodes()
            .iter()
            .zip(s.nodes())
            .filter(|(a, b)| (*a - *b).norm() > 0.0)
            .count();
        assert!(moved > 0);
    }

    #[test]
    fn symmetric_cube_centroid_preserved() {
        let cube = shapes::box_surface(
            "c",
            Point3::new(-1.0, -1.0, -1.0),
            Point3::new(1.0, 1.0, 1.0),
        );
        let seg = Segmentation::new(vec![Compartment::new(
            "c",
            vec![cube],
            Conductivity::Isotropic(1.0),
            0,
            true,
        )
        .unwrap()])
        .unwrap();
        let m = generate_mesh(&seg, 0.5).unwrap();
        let c0: nalgebra::Vector3<f64> = m
            .nodes()
            .iter()
            .map(|p| p.coords)
            .sum::<nalgebra::Vector3<f64>>()
            / m.node_count() as f64;
        let s = smooth_mesh(&m, 2, 0.3).unwrap();
        let c1: nalgebra::Vector3<f64> = s
            .nodes()
            .iter()
            .map(|p| p.coords)
            .sum::<nalgebra::Vector3<f64>>()
            / s.node_count() as f64;
        assert!((c0 - c1).norm() < 1e-12);
    }
}
