//! Closed test surfaces: regular tetrahedron, axis-aligned box, icosphere.

use std::collections::HashMap;

use nalgebra::Point3;

use super::SurfaceMesh;

/// Regular tetrahedron with edge length `edge`, centroid at the origin.
pub fn tetrahedron_surface(edge: f64) -> SurfaceMesh {
    let s = edge / (2.0 * std::f64::consts::SQRT_2);
    let nodes = vec![
        Point3::new(s, s, s),
        Point3::new(s, -s, -s),
        Point3::new(-s, s, -s),
        Point3::new(-s, -s, s),
    ];
    let tris = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    SurfaceMesh::new("tetrahedron", nodes, tris).expect("valid tetrahedron")
}

pub fn box_surface(name: &str, lo: Point3<f64>, hi: Point3<f64>) -> SurfaceMesh {
    let mut nodes = Vec::with_capacity(8);
    for k in 0..8 {
        nodes.push(Point3::new(
            if k & 1 == 0 { lo.x } else { hi.x },
            if k & 2 == 0 { lo.y } else { hi.y },
            if k & 4 == 0 { lo.z } else { hi.z },
        ));
    }
    let quads = [
        [0, 2, 3, 1], // z = lo
        [4, 5, 7, 6], // z = hi
        [0, 1, 5, 4], // y = lo
        [2, 6, 7, 3], // y = hi
        [0, 4, 6, 2], // x = lo
        [1, 3, 7, 5], // x = hi
    ];
    let tris = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    SurfaceMesh::new(name, nodes, tris).expect("valid box")
}

/// Sphere approximated by a subdivided icosahedron. `subdivisions = 0` is the
/// icosahedron itself; every level multiplies the triangle count by four.
pub fn icosphere(name: &str, center: Point3<f64>, radius: f64, subdivisions: usize) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    for v in &mut verts {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.iter_mut().for_each(|c| *c /= n);
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                let mut m = [
                    (p[0] + q[0]) / 2.0,
                    (p[1] + q[1]) / 2.0,
                    (p[2] + q[2]) / 2.0,
                ];
                let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                m.iter_mut().for_each(|c| *c /= n);
                verts.push(m);
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let nodes = verts
        .iter()
        .map(|v| {
            Point3::new(
                center.x + radius * v[0],
                center.y + radius * v[1],
                center.z + radius * v[2],
            )
        })
        .collect();
    SurfaceMesh::new(name, nodes, faces).expect("valid icosphere")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts_and_volume() {
        let s = icosphere("s", Point3::origin(), 1.0, 3);
        assert_eq!(s.triangles().len(), 20 * 64);
        assert_eq!(s.euler_characteristic(), 2);
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((s.volume() - exact).abs() / exact < 0.02);
    }
}
