use std::collections::BTreeSet;

use nalgebra::Point3;
use rayon::prelude::*;

use super::mesh::{tet_signed_volume, SigmaField, TetMesh};
use crate::error::{Error, Result};
use crate::geometry::{Conductivity, Segmentation};

const AXIS_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// The six Kuhn tetrahedra of a unit cube as corner indices (bit k of a
/// corner index is the offset along axis k). All share the 0–7 diagonal.
pub fn kuhn_tetrahedra() -> [[usize; 4]; 6] {
    let mut out = [[0usize; 4]; 6];
    for (t, perm) in AXIS_PERMUTATIONS.iter().enumerate() {
        let v1 = 1 << perm[0];
        let v2 = v1 | (1 << perm[1]);
        let mut tet = [0, v1, v2, 7];
        let corner =
            |c: usize| Point3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64);
        if tet_signed_volume(
            &corner(tet[0]),
            &corner(tet[1]),
            &corner(tet[2]),
            &corner(tet[3]),
        ) < 0.0
        {
            tet.swap(1, 2);
        }
        out[t] = tet;
    }
    out
}

/// Uniform structured tetrahedral mesh labeled by the segmentation.
///
/// The bounding box of the segmentation is covered by cubes of edge `h`,
/// each split into six Kuhn tetrahedra. An element takes the label of the
/// innermost compartment containing its centroid and is dropped if the
/// centroid lies outside every compartment. When the element's nodes fall in
/// several compartments, the one with the lowest priority value among them
/// (and the centroid's) wins.
pub fn generate_mesh(seg: &Segmentation, h: f64) -> Result<TetMesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!(
            "mesh resolution must be positive, got {h}"
        )));
    }
    let (lo, hi) = seg.bounding_box();
    if !(0..3).all(|k| lo[k].is_finite() && hi[k].is_finite()) {
        return Err(Error::Parameter(
            "segmentation bounding box is not finite".into(),
        ));
    }
    let dims: [usize; 3] =
        std::array::from_fn(|k| (((hi[k] - lo[k]) / h - 1e-9).ceil() as usize).max(1));
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let grid_index = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let grid_point = |i: usize, j: usize, k: usize| {
        Point3::new(
            lo.x + i as f64 * h,
            lo.y + j as f64 * h,
            lo.z + k as f64 * h,
        )
    };

    let node_count = (nx + 1) * (ny + 1) * (nz + 1);
    let priorities_differ = {
        let p: BTreeSet<i32> = seg.compartments().iter().map(|c| c.priority).collect();
        p.len() > 1
    };
    let node_labels: Vec<Option<usize>> = if priorities_differ {
        (0..node_count)
            .into_par_iter()
            .map(|g| {
                let i = g % (nx + 1);
                let j = (g / (nx + 1)) % (ny + 1);
                let k = g / ((nx + 1) * (ny + 1));
                seg.point_in_compartment(&grid_point(i, j, k))
            })
            .collect()
    } else {
        Vec::new()
    };

    let kuhn = kuhn_tetrahedra();
    let cubes: Vec<Vec<([usize; 4], usize)>> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|c| {
            let i = c % nx;
            let j = (c / nx) % ny;
            let k = c / (nx * ny);
            let corner = |b: usize| grid_index(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
            let corner_pt =
                |b: usize| grid_point(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
            let mut out = Vec::new();
            for tet in &kuhn {
                let centroid = Point3::from(
                    (corner_pt(tet[0]).coords
                        + corner_pt(tet[1]).coords
                        + corner_pt(tet[2]).coords
                        + corner_pt(tet[3]).coords)
                        / 4.0,
                );
                let Some(mut label) = seg.point_in_compartment(&centroid) else {
                    continue;
                };
                let nodes = [
                    corner(tet[0]),
                    corner(tet[1]),
                    corner(tet[2]),
                    corner(tet[3]),
                ];
                if priorities_differ {
                    label =
                        resolve_priority(seg, label, nodes.iter().filter_map(|&n| node_labels[n]));
                }
                out.push((nodes, label));
            }
            out
        })
        .collect();

    let mut remap = vec![usize::MAX; node_count];
    let mut nodes = Vec::new();
    let mut tetra = Vec::new();
    let mut labels = Vec::new();
    for (t, label) in cubes.into_iter().flatten() {
        let mut local = [0usize; 4];
        for (slot, &g) in local.iter_mut().zip(t.iter()) {
            if remap[g] == usize::MAX {
                remap[g] = nodes.len();
                let i = g % (nx + 1);
                let j = (g / (nx + 1)) % (ny + 1);
                let k = g / ((nx + 1) * (ny + 1));
                nodes.push(grid_point(i, j, k));
            }
            *slot = remap[g];
        }
        tetra.push(local);
        labels.push(label);
    }
    if tetra.is_empty() {
        return Err(Error::EmptyMesh(h));
    }
    let sigma = sigma_from_labels(seg, &labels);
    TetMesh::new(nodes, tetra, labels, sigma)
}

fn resolve_priority(
    seg: &Segmentation,
    centroid_label: usize,
    node_labels: impl Iterator<Item = usize>,
) -> usize {
    let comps = seg.compartments();
    let mut involved: BTreeSet<usize> = node_labels.collect();
    involved.insert(centroid_label);
    if involved.len() < 2 {
        return centroid_label;
    }
    let best = involved
        .iter()
        .map(|&c| comps[c].priority)
        .min()
        .expect("non-empty");
    if comps[centroid_label].priority == best {
        return centroid_label;
    }
    *involved
        .iter()
        .find(|&&c| comps[c].priority == best)
        .expect("minimum attained")
}

/// Per-element conductivity from compartment values; tensor storage is used
/// as soon as one compartment is anisotropic.
pub fn sigma_from_labels(seg: &Segmentation, labels: &[usize]) -> SigmaField {
    let comps = seg.compartments();
    let any_tensor = comps
        .iter()
        .any(|c| matches!(c.conductivity, Conductivity::Tensor(_)));
    if any_tensor {
        SigmaField::Tensor(
            labels
                .iter()
                .map(|&l| match comps[l].conductivity {
                    Conductivity::Isotropic(s) => [s, s, s, 0.0, 0.0, 0.0],
                    Conductivity::Tensor(t) => t,
                })
                .collect(),
        )
    } else {
        SigmaField::Scalar(
            labels
                .iter()
                .map(|&l| match comps[l].conductivity {
                    Conductivity::Isotropic(s) => s,
                    Conductivity::Tensor(_) => unreachable!(),
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{shapes, Compartment};

    fn cube_seg() -> Segmentation {
        let cube = shapes::box_surface("cube", Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        Segmentation::new(vec![Compartment::new(
            "cube",
            vec![cube],
            Conductivity::Isotropic(1.0),
            0,
            true,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn kuhn_tets_fill_cube() {
        let corner =
            |c: usize| Point3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64);
        let mut total = 0.0;
        for t in kuhn_tetrahedra() {
            let v = tet_signed_volume(&corner(t[0]), &corner(t[1]), &corner(t[2]), &corner(t[3]));
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
            total += v;
        }
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_cube_half_resolution() {
        let m = generate_mesh(&cube_seg(), 0.5).unwrap();
        assert_eq!(m.element_count(), 48);
        assert_eq!(m.node_count(), 27);
        assert!(m.min_signed_volume() > 0.0);
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_coarse_is_empty() {
        let tet = shapes::tetrahedron_surface(1.0);
        let seg = Segmentation::new(vec![Compartment::new(
            "t",
            vec![tet],
            Conductivity::Isotropic(1.0),
            0,
            true,
        )
        .unwrap()])
        .unwrap();
        // one cube of edge 10: every Kuhn centroid lies far outside the tetrahedron
        assert!(matches!(
            generate_mesh(&seg, 10.0),
            Err(Error::EmptyMesh(_))
        ));
    }

    #[test]
    fn bad_resolution() {
        assert!(matches!(
            generate_mesh(&cube_seg(), 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn priority_resolves_straddling_elements() {
        // skull shell between radii 0.6 and 0.8 with priority 1, scalp priority 2
        let skull = shapes::icosphere("skull", Point3::origin(), 0.8, 3);
        let scalp = shapes::icosphere("scalp", Point3::origin(), 1.0, 3);
        let seg = Segmentation::new(vec![
            Compartment::new(
                "skull",
                vec![skull],
                Conductivity::Isotropic(0.0064),
                1,
                false,
            )
            .unwrap(),
            Compartment::new(
                "scalp",
                vec![scalp],
                Conductivity::Isotropic(0.43),
                2,
                false,
            )
            .unwrap(),
        ])
        .unwrap();
        let m = generate_mesh(&seg, 0.1).unwrap();
        let mut relabeled = 0;
        for e in 0..m.element_count() {
            let c = seg.point_in_compartment(&m.centroid(e)).unwrap();
            let node_in_skull = m.tetra()[e]
                .iter()
                .any(|&n| seg.point_in_compartment(&m.nodes()[n]) == Some(0));
            if node_in_skull {
                assert_eq!(m.labels()[e], 0);
                if c == 1 {
                    relabeled += 1;
                }
            } else {
                assert_eq!(m.labels()[e], c);
            }
        }
        assert!(relabeled > 0);
    }
}
