use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tensor_is_spd, tensor_matrix, Conductivity};

/// Per-element conductivity field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SigmaField {
    Scalar(Vec<f64>),
    /// Rows `(σ11, σ22, σ33, σ12, σ13, σ23)`.
    Tensor(Vec<[f64; 6]>),
}

impl SigmaField {
    pub fn len(&self) -> usize {
        match self {
            SigmaField::Scalar(v) => v.len(),
            SigmaField::Tensor(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, e: usize) -> Conductivity {
        match self {
            SigmaField::Scalar(v) => Conductivity::Isotropic(v[e]),
            SigmaField::Tensor(v) => Conductivity::Tensor(v[e]),
        }
    }

    pub fn matrix(&self, e: usize) -> Matrix3<f64> {
        match self {
            SigmaField::Scalar(v) => Matrix3::identity() * v[e],
            SigmaField::Tensor(v) => tensor_matrix(&v[e]),
        }
    }

    /// Adds an isotropic increment to element `e`.
    pub fn add_isotropic(&mut self, e: usize, delta: f64) {
        match self {
            SigmaField::Scalar(v) => v[e] += delta,
            SigmaField::Tensor(v) => {
                for k in 0..3 {
                    v[e][k] += delta;
                }
            }
        }
    }

    /// Little-endian bytes of every entry, for hashing snapshots.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            SigmaField::Scalar(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            SigmaField::Tensor(v) => v.iter().flatten().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

/// Labeled linear tetrahedral mesh.
///
/// Every element has positive signed volume under the ordering
/// `det[p1-p0, p2-p0, p3-p0] > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    nodes: Vec<Point3<f64>>,
    tetra: Vec<[usize; 4]>,
    labels: Vec<usize>,
    sigma: SigmaField,
}

/// Local face `f` of a tetrahedron is the face opposite local vertex `f`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

impl TetMesh {
    pub fn new(
        nodes: Vec<Point3<f64>>,
        tetra: Vec<[usize; 4]>,
        labels: Vec<usize>,
        sigma: SigmaField,
    ) -> Result<Self> {
        if labels.len() != tetra.len() || sigma.len() != tetra.len() {
            return Err(Error::Parameter(format!(
                "{} elements but {} labels and {} conductivities",
                tetra.len(),
                labels.len(),
                sigma.len()
            )));
        }
        for (e, t) in tetra.iter().enumerate() {
            if t.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::Index(format!(
                    "element {e} references a missing node"
                )));
            }
        }
        let mesh = Self {
            nodes,
            tetra,
            labels,
            sigma,
        };
        for e in 0..mesh.tetra.len() {
            if !(mesh.signed_volume(e) > 0.0) {
                return Err(Error::Topology(format!(
                    "element {e} has non-positive volume"
                )));
            }
        }
        if let SigmaField::Tensor(rows) = &mesh.sigma {
            if let Some(e) = rows.iter().position(|r| !tensor_is_spd(r)) {
                return Err(Error::Parameter(format!(
                    "conductivity tensor of element {e} is not positive definite"
                )));
            }
        }
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[Point3<f64>] {
        &self.nodes
    }

    pub fn tetra(&self) -> &[[usize; 4]] {
        &self.tetra
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sigma(&self) -> &SigmaField {
        &self.sigma
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.tetra.len()
    }

    pub fn with_sigma(&self, sigma: SigmaField) -> Result<Self> {
        Self::new(
            self.nodes.clone(),
            self.tetra.clone(),
            self.labels.clone(),
            sigma,
        )
    }

    pub(crate) fn with_nodes_unchecked(&self, nodes: Vec<Point3<f64>>) -> Self {
        Self {
            nodes,
            tetra: self.tetra.clone(),
            labels: self.labels.clone(),
            sigma: self.sigma.clone(),
        }
    }

    pub fn vertices(&self, e: usize) -> [Point3<f64>; 4] {
        let t = self.tetra[e];
        [
            self.nodes[t[0]],
            self.nodes[t[1]],
            self.nodes[t[2]],
            self.nodes[t[3]],
        ]
    }

    pub fn signed_volume(&self, e: usize) -> f64 {
        let [a, b, c, d] = self.vertices(e);
        tet_signed_volume(&a, &b, &c, &d)
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.signed_volume(e).abs()
    }

    pub fn centroid(&self, e: usize) -> Point3<f64> {
        let [a, b, c, d] = self.vertices(e);
        Point3::from((a.coords + b.coords + c.coords + d.coords) / 4.0)
    }

    /// Gradients of the four barycentric (P1 nodal) functions on element `e`.
    pub fn gradients(&self, e: usize) -> [Vector3<f64>; 4] {
        let [a, b, c, d] = self.vertices(e);
        let j = Matrix3::from_columns(&[b - a, c - a, d - a]);
        let jinv_t = j
            .try_inverse()
            .expect("positive-volume element has an invertible Jacobian")
            .transpose();
        let g1 = jinv_t.column(0).into_owned();
        let g2 = jinv_t.column(1).into_owned();
        let g3 = jinv_t.column(2).into_owned();
        [-(g1 + g2 + g3), g1, g2, g3]
    }

    /// Barycentric coordinates of `p` with respect to element `e`.
    pub fn barycentric(&self, e: usize, p: &Point3<f64>) -> [f64; 4] {
        let [a, b, c, d] = self.vertices(e);
        let j = Matrix3::from_columns(&[b - a, c - a, d - a]);
        let l = j.try_inverse().expect("invertible Jacobian") * (p - a);
        [1.0 - l.x - l.y - l.z, l.x, l.y, l.z]
    }

    pub fn contains(&self, e: usize, p: &Point3<f64>) -> bool {
        self.barycentric(e, p).iter().all(|&l| l >= -1e-12)
    }

    /// Element containing `p`, brute force.
    pub fn locate(&self, p: &Point3<f64>) -> Option<usize> {
        (0..self.tetra.len()).find(|&e| self.contains(e, p))
    }

    /// Map from sorted face node triple to the (element, local face) pairs
    /// sharing it.
    pub fn face_map(&self) -> HashMap<[usize; 3], Vec<(usize, usize)>> {
        let mut faces: HashMap<[usize; 3], Vec<(usize, usize)>> =
            HashMap::with_capacity(self.tetra.len() * 3);
        for (e, t) in self.tetra.iter().enumerate() {
            for (f, lf) in LOCAL_FACES.iter().enumerate() {
                let mut key = [t[lf[0]], t[lf[1]], t[lf[2]]];
                key.sort_unstable();
                faces.entry(key).or_default().push((e, f));
            }
        }
        faces
    }

    /// Boundary faces as outward-oriented node triples, sorted for
    /// deterministic ordering.
    pub fn boundary_faces(&self) -> Vec<[usize; 3]> {
        let mut out: Vec<[usize; 3]> = self
            .face_map()
            .into_iter()
            .filter(|(_, v)| v.len() == 1)
            .map(|(_, v)| {
                let (e, f) = v[0];
                self.outward_face(e, f)
            })
            .collect();
        out.sort_unstable_by_key(|t| {
            let mut k = *t;
            k.sort_unstable();
            k
        });
        out
    }

    /// Node triple of local face `f` of `e`, ordered so its normal points
    /// out of `e`.
    pub fn outward_face(&self, e: usize, f: usize) -> [usize; 3] {
        let t = self.tetra[e];
        let lf = LOCAL_FACES[f];
        let mut tri = [t[lf[0]], t[lf[1]], t[lf[2]]];
        let (a, b, c) = (self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&(a - self.nodes[t[f]])) < 0.0 {
            tri.swap(1, 2);
        }
        tri
    }

    /// Node adjacency lists (sorted, without self).
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.nodes.len()];
        for t in &self.tetra {
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        nb[t[i]].push(t[j]);
                    }
                }
            }
        }
        for v in &mut nb {
            v.sort_unstable();
            v.dedup();
        }
        nb
    }

    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut ne = vec![Vec::new(); self.nodes.len()];
        for (e, t) in self.tetra.iter().enumerate() {
            for &i in t {
                ne[i].push(e);
            }
        }
        ne
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tetra.len()).map(|e| self.volume(e)).sum()
    }

    pub fn labeled_volume(&self, label: usize) -> f64 {
        (0..self.tetra.len())
            .filter(|&e| self.labels[e] == label)
            .map(|e| self.volume(e))
            .sum()
    }

    pub fn min_signed_volume(&self) -> f64 {
        (0..self.tetra.len())
            .map(|e| self.signed_volume(e))
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `nodes.dat`, `tetra.dat` (one-based), `labels.dat` (one-based
    /// compartment index) and `sigma.dat` (1 or 6 columns) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut s = String::new();
        for p in &self.nodes {
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", p.x, p.y, p.z));
        }
        write(dir.join("nodes.dat"), &s)?;
        let mut s = String::new();
        for t in &self.tetra {
            s.push_str(&format!(
                "{} {} {} {}\n",
                t[0] + 1,
                t[1] + 1,
                t[2] + 1,
                t[3] + 1
            ));
        }
        write(dir.join("tetra.dat"), &s)?;
        let mut s = String::new();
        for l in &self.labels {
            s.push_str(&format!("{}\n", l + 1));
        }
        write(dir.join("labels.dat"), &s)?;
        let mut s = String::new();
        match &self.sigma {
            SigmaField::Scalar(v) => v.iter().for_each(|x| s.push_str(&format!("{x:.16e}\n"))),
            SigmaField::Tensor(v) => v.iter().for_each(|r| {
                s.push_str(&format!(
                    "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}\n",
                    r[0], r[1], r[2], r[3], r[4], r[5]
                ))
            }),
        }
        write(dir.join("sigma.dat"), &s)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let nodes = read_rows(&dir.join("nodes.dat"))?
            .into_iter()
            .map(|(ln, r, path)| {
                let v = parse_reals(&r, &path, ln)?;
                if v.len() != 3 {
                    return Err(fmt_err(&path, ln, "expected 3 coordinates"));
                }
                Ok(Point3::new(v[0], v[1], v[2]))
            })
            .collect::<Result<Vec<_>>>()?;
        let tetra = read_rows(&dir.join("tetra.dat"))?
            .into_iter()
            .map(|(ln, r, path)| {
                let v: Vec<usize> = r
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| fmt_err(&path, ln, "expected 4 one-based indices"))?;
                if v.len() != 4 || v.contains(&0) {
                    return Err(fmt_err(&path, ln, "expected 4 one-based indices"));
                }
                Ok([v[0] - 1, v[1] - 1, v[2] - 1, v[3] - 1])
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = read_rows(&dir.join("labels.dat"))?
            .into_iter()
            .map(|(ln, r, path)| match r.trim().parse::<usize>() {
                Ok(l) if l >= 1 => Ok(l - 1),
                _ => Err(fmt_err(&path, ln, "expected a one-based label")),
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = read_rows(&dir.join("sigma.dat"))?
            .into_iter()
            .map(|(ln, r, path)| parse_reals(&r, &path, ln))
            .collect::<Result<Vec<_>>>()?;
        let sigma = if rows.iter().all(|r| r.len() == 1) {
            SigmaField::Scalar(rows.into_iter().map(|r| r[0]).collect())
        } else if rows.iter().all(|r| r.len() == 6) {
            SigmaField::Tensor(
                rows.into_iter()
                    .map(|r| [r[0], r[1], r[2], r[3], r[4], r[5]])
                    .collect(),
            )
        } else {
            return Err(Error::Format {
                path: dir.join("sigma.dat").display().to_string(),
                line: 0,
                message: "every row must have 1 or 6 entries".into(),
            });
        };
        Self::new(nodes, tetra, labels, sigma)
    }
}

pub fn tet_signed_volume(
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
    d: &Point3<f64>,
) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

fn write(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path) -> Result<Vec<(usize, String, std::path::PathBuf)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string(), path.to_path_buf()))
        .collect())
}

fn parse_reals(line: &str, path: &Path, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| fmt_err(path, ln, "expected real numbers"))
        })
        .collect()
}

fn fmt_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_tet() -> TetMesh {
        TetMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
            vec![0],
            SigmaField::Scalar(vec![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn gradients_partition_unity() {
        let m = unit_tet();
        let g = m.gradients(0);
        let sum = g[0] + g[1] + g[2] + g[3];
        assert!(sum.norm() < 1e-15);
        assert!((g[1] - Vector3::x()).norm() < 1e-15);
        assert!((m.volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn negative_volume_rejected() {
        let m = unit_tet();
        let err = TetMesh::new(
            m.nodes().to_vec(),
            vec![[0, 2, 1, 3]],
            vec![0],
            SigmaField::Scalar(vec![1.0]),
        );
        assert!(matches!(err, Err(Error::Topology(_))));
    }

    #[test]
    fn boundary_faces_point_outward() {
        let m = unit_tet();
        let c = m.centroid(0);
        let faces = m.boundary_faces();
        assert_eq!(faces.len(), 4);
        for f in faces {
            let (a, b, cc) = (m.nodes()[f[0]], m.nodes()[f[1]], m.nodes()[f[2]]);
            let n = (b - a).cross(&(cc - a));
            assert!(n.dot(&(a - c)) > 0.0);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let m = unit_tet();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(TetMesh::load(dir.path()).unwrap(), m);
    }
}
