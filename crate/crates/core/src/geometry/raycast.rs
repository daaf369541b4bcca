//! Point-in-surface queries by ray-casting parity.

use nalgebra::{Point3, Vector3};

use super::SurfaceMesh;

/// Fixed query direction; deliberately not aligned with any axis or with the
/// diagonals of a structured grid.
pub const DEFAULT_RAY: [f64; 3] = [0.577_215_664_9, 0.318_309_886_2, 0.751_988_482_6];

const FALLBACK_RAYS: [[f64; 3]; 4] = [
    [-0.267_949_192_4, 0.841_470_984_8, 0.469_846_310_4],
    [0.707_106_781_2, -0.412_310_562_6, -0.574_712_643_7],
    [-0.613_125_929_8, -0.577_350_269_2, 0.539_692_243_2],
    [0.141_592_653_6, 0.271_828_182_8, -0.951_056_516_3],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// Number of proper crossings along the ray.
    Count(usize),
    /// The point lies on the surface.
    OnSurface,
    /// The ray grazes an edge or vertex; parity is unreliable.
    Ambiguous,
}

/// Counts crossings of the ray `p + t·dir`, `t > 0`, with all triangles of
/// `mesh`. Brute force over every triangle.
pub fn ray_crossings(mesh: &SurfaceMesh, p: &Point3<f64>, dir: &Vector3<f64>) -> Crossing {
    crossings_over(mesh, p, dir, 0..mesh.triangles().len(), tolerance(mesh))
}

fn tolerance(mesh: &SurfaceMesh) -> f64 {
    let (lo, hi) = mesh.bounding_box();
    1e-12 * (hi - lo).norm().max(1e-300)
}

fn crossings_over(
    mesh: &SurfaceMesh,
    p: &Point3<f64>,
    dir: &Vector3<f64>,
    candidates: impl IntoIterator<Item = usize>,
    eps: f64,
) -> Crossing {
    let mut count = 0;
    let mut ambiguous = false;
    for t in candidates {
        let [a, b, c] = mesh.triangle(t);
        if point_triangle_distance(p, &a, &b, &c) <= eps {
            return Crossing::OnSurface;
        }
        match intersect(p, dir, &a, &b, &c) {
            Hit::Miss => {}
            Hit::Proper => count += 1,
            Hit::Grazing => ambiguous = true,
        }
    }
    if ambiguous {
        Crossing::Ambiguous
    } else {
        Crossing::Count(count)
    }
}

enum Hit {
    Miss,
    Proper,
    Grazing,
}

// Möller–Trumbore with an explicit band around triangle edges.
fn intersect(
    p: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Hit {
    const BAND: f64 = 1e-10;
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * scale {
        return Hit::Miss;
    }
    let inv = 1.0 / det;
    let s = p - a;
    let u = inv * s.dot(&h);
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    let t = inv * e2.dot(&q);
    if t <= 0.0 {
        return Hit::Miss;
    }
    let w = 1.0 - u - v;
    if u < -BAND || v < -BAND || w < -BAND {
        return Hit::Miss;
    }
    if u <= BAND || v <= BAND || w <= BAND {
        return Hit::Grazing;
    }
    Hit::Proper
}

pub fn point_triangle_distance(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Brute-force containment: parity along the default ray, retrying with
/// fallback rays when the default grazes an edge. On-surface points are
/// inside.
pub fn contains_point(mesh: &SurfaceMesh, p: &Point3<f64>) -> bool {
    let eps = tolerance(mesh);
    for dir in std::iter::once(DEFAULT_RAY).chain(FALLBACK_RAYS) {
        let d = Vector3::from(dir).normalize();
        match crossings_over(mesh, p, &d, 0..mesh.triangles().len(), eps) {
            Crossing::OnSurface => return true,
            Crossing::Count(n) => return n % 2 == 1,
            Crossing::Ambiguous => continue,
        }
    }
    // every ray grazed; fall back to the winding number
    winding_number(mesh, p).abs() > 0.5
}

/// Generalized winding number (solid-angle sum / 4π).
pub fn winding_number(mesh: &SurfaceMesh, p: &Point3<f64>) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(t);
        let (a, b, c) = (a - p, b - p, c - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Accelerated containment oracle for one surface along [`DEFAULT_RAY`].
///
/// Triangles are binned on a uniform grid in the plane orthogonal to the
/// ray; a query only visits the triangles whose projected bounding box covers
/// the query's projection.
#[derive(Debug, Clone)]
pub struct SurfaceLocator {
    mesh: SurfaceMesh,
    dir: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    bins: Vec<Vec<u32>>,
    eps: f64,
}

impl SurfaceLocator {
    pub fn new(mesh: SurfaceMesh) -> Self {
        let dir = Vector3::from(DEFAULT_RAY).normalize();
        let helper = if dir.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = dir.cross(&helper).normalize();
        let v = dir.cross(&u);
        let proj: Vec<[f64; 2]> = mesh
            .nodes()
            .iter()
            .map(|p| [p.coords.dot(&u), p.coords.dot(&v)])
            .collect();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for q in &proj {
            for k in 0..2 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        let ntri = mesh.triangles().len();
        let per_axis = ((ntri as f64).sqrt().ceil() as usize).clamp(1, 512);
        let extent = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let pad = [extent[0] * 1e-9, extent[1] * 1e-9];
        let origin = [lo[0] - pad[0], lo[1] - pad[1]];
        let cell = [
            (extent[0] + 2.0 * pad[0]) / per_axis as f64,
            (extent[1] + 2.0 * pad[1]) / per_axis as f64,
        ];
        let dims = [per_axis, per_axis];
        let mut bins = vec![Vec::new(); per_axis * per_axis];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &i in tri {
                for k in 0..2 {
                    tlo[k] = tlo[k].min(proj[i][k]);
                    thi[k] = thi[k].max(proj[i][k]);
                }
            }
            let i0 = clamp_cell(((tlo[0] - pad[0] - origin[0]) / cell[0]).floor(), dims[0]);
            let i1 = clamp_cell(((thi[0] + pad[0] - origin[0]) / cell[0]).floor(), dims[0]);
            let j0 = clamp_cell(((tlo[1] - pad[1] - origin[1]) / cell[1]).floor(), dims[1]);
            let j1 = clamp_cell(((thi[1] + pad[1] - origin[1]) / cell[1]).floor(), dims[1]);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    bins[i * dims[1] + j].push(t as u32);
                }
            }
        }
        let eps = tolerance(&mesh);
        Self {
            mesh,
            dir,
            u,
            v,
            origin,
            cell,
            dims,
            bins,
            eps,
        }
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let a = p.coords.dot(&self.u) - self.origin[0];
        let b = p.coords.dot(&self.v) - self.origin[1];
        if a < 0.0 || b < 0.0 {
            return false;
        }
        let i = (a / self.cell[0]).floor() as usize;
        let j = (b / self.cell[1]).floor() as usize;
        if i >= self.dims[0] || j >= self.dims[1] {
            return false;
        }
        let bin = &self.bins[i * self.dims[1] + j];
        match crossings_over(
            &self.mesh,
            p,
            &self.dir,
            bin.iter().map(|&t| t as usize),
            self.eps,
        ) {
            Crossing::OnSurface => true,
            Crossing::Count(n) => n % 2 == 1,
            Crossing::Ambiguous => contains_point(&self.mesh, p),
        }
    }
}

fn clamp_cell(x: f64, n: usize) -> usize {
    if x < 0.0 {
        0
    } else {
        (x as usize).min(n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tetrahedron_centroid_inside() {
        let m = shapes::tetrahedron_surface(1.0);
        assert!(contains_point(&m, &Point3::origin()));
        assert!(SurfaceLocator::new(m).contains(&Point3::origin()));
    }

    #[test]
    fn far_point_outside() {
        let m = shapes::tetrahedron_surface(1.0);
        let p = Point3::new(10.0, 0.3, -0.2);
        assert!(!contains_point(&m, &p));
        assert!(!SurfaceLocator::new(m).contains(&p));
    }

    #[test]
    fn vertex_and_face_points_are_inside() {
        let m = shapes::box_surface("b", Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        let loc = SurfaceLocator::new(m.clone());
        for p in [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.5, 0.5),
            Point3::new(0.5, 0.5, 1.0),
            Point3::new(1.0, 1.0, 0.3),
        ] {
            assert!(contains_point(&m, &p), "{p}");
            assert!(loc.contains(&p), "{p}");
        }
    }

    #[test]
    fn parity_independent_of_direction() {
        let m = shapes::icosphere("s", Point3::origin(), 1.0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = Point3::new(
                rng.random_range(-1.3..1.3),
                rng.random_range(-1.3..1.3),
                rng.random_range(-1.3..1.3),
            );
            let mut answers = Vec::new();
            for _ in 0..10 {
                let d = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                match ray_crossings(&m, &p, &d) {
                    Crossing::Count(n) => answers.push(n % 2 == 1),
                    Crossing::OnSurface => unreachable!(),
                    Crossing::Ambiguous => {}
                }
            }
            assert!(!answers.is_empty());
            assert!(answers.iter().all(|&a| a == answers[0]));
            assert_eq!(answers[0], winding_number(&m, &p) > 0.5);
        }
    }

    #[test]
    fn locator_agrees_with_brute_force() {
        let m = shapes::icosphere("s", Point3::new(0.1, -0.2, 0.05), 0.8, 3);
        let loc = SurfaceLocator::new(m.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            assert_eq!(loc.contains(&p), contains_point(&m, &p));
        }
    }
}
