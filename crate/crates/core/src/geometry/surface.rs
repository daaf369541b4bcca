use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Closed, consistently oriented triangle surface bounding one tissue region.
///
/// Triangles are stored with outward-facing normals (right-hand rule); the
/// constructor flips the whole mesh if the input winding encloses a negative
/// volume.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    name: String,
    nodes: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Point3<f64>>,
        mut triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let name = name.into();
        if triangles.is_empty() {
            return Err(Error::Topology(format!(
                "surface '{name}' has no triangles"
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= nodes.len() {
                    return Err(Error::Index(format!(
                        "surface '{name}': triangle {} references node {} but only {} nodes exist",
                        t + 1,
                        i + 1,
                        nodes.len()
                    )));
                }
            }
        }
        let scale = bbox_diagonal(&nodes).max(f64::MIN_POSITIVE);
        for (t, tri) in triangles.iter().enumerate() {
            let area = triangle_area(&nodes[tri[0]], &nodes[tri[1]], &nodes[tri[2]]);
            if !(area > 1e-14 * scale * scale) {
                return Err(Error::Topology(format!(
                    "surface '{name}': triangle {} is degenerate",
                    t + 1
                )));
            }
        }
        check_closed_orientable(&name, &triangles)?;

        let mesh_volume = signed_volume(&nodes, &triangles);
        if mesh_volume < 0.0 {
            for tri in &mut triangles {
                tri.swap(1, 2);
            }
        }
        Ok(Self {
            name,
            nodes,
            triangles,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Point3<f64>] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Unit outward normal of triangle `t`.
    pub fn normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn edge_count(&self) -> usize {
        // closed surface: every edge is shared by exactly two triangles
        self.triangles.len() * 3 / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }

    /// Enclosed volume (positive after orientation normalization).
    pub fn volume(&self) -> f64 {
        signed_volume(&self.nodes, &self.triangles)
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        bounding_box(&self.nodes)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|p| Point3::from(p.coords * factor))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Reads a node file (`x y z` per line) and a triangle file (one-based
    /// `i j k` per line). Coordinates are multiplied by `unit_scale`.
    pub fn load_dat(
        name: impl Into<String>,
        nodes_file: impl AsRef<Path>,
        triangles_file: impl AsRef<Path>,
        unit_scale: f64,
    ) -> Result<Self> {
        let nodes_file = nodes_file.as_ref();
        let triangles_file = triangles_file.as_ref();
        let text = fs::read_to_string(nodes_file).map_err(|e| Error::io(nodes_file, e))?;
        let nodes = parse_nodes(&text, nodes_file, 0, unit_scale)?;
        let text = fs::read_to_string(triangles_file).map_err(|e| Error::io(triangles_file, e))?;
        let triangles = parse_triangles(&text, triangles_file, 0)?;
        Self::new(name, nodes, triangles)
    }

    /// Reads the combined ASCII layout: a header line `n_nodes n_triangles`,
    /// then the node lines, then the one-based triangle lines. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn load_asc(
        name: impl Into<String>,
        file: impl AsRef<Path>,
        unit_scale: f64,
    ) -> Result<Self> {
        let file = file.as_ref();
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let mut lines = content_lines(&text);
        let (hline, header) = lines
            .next()
            .ok_or_else(|| format_err(file, 1, "missing header"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err(file, hline, "header must be `n_nodes n_triangles`"))?;
        if counts.len() != 2 {
            return Err(format_err(
                file,
                hline,
                "header must be `n_nodes n_triangles`",
            ));
        }
        let rest: Vec<(usize, &str)> = lines.collect();
        if rest.len() != counts[0] + counts[1] {
            return Err(format_err(
                file,
                hline,
                &format!(
                    "header announces {} lines but {} follow",
                    counts[0] + counts[1],
                    rest.len()
                ),
            ));
        }
        let mut nodes = Vec::with_capacity(counts[0]);
        for &(ln, line) in &rest[..counts[0]] {
            nodes.push(parse_point(line, file, ln, unit_scale)?);
        }
        let mut triangles = Vec::with_capacity(counts[1]);
        for &(ln, line) in &rest[counts[0]..] {
            triangles.push(parse_triangle(line, file, ln)?);
        }
        Self::new(name, nodes, triangles)
    }

    pub fn save_dat(
        &self,
        nodes_file: impl AsRef<Path>,
        triangles_file: impl AsRef<Path>,
    ) -> Result<()> {
        write_file(nodes_file.as_ref(), &self.nodes_text())?;
        write_file(triangles_file.as_ref(), &self.triangles_text())
    }

    pub fn save_asc(&self, file: impl AsRef<Path>) -> Result<()> {
        let text = format!(
            "{} {}\n{}{}",
            self.nodes.len(),
            self.triangles.len(),
            self.nodes_text(),
            self.triangles_text()
        );
        write_file(file.as_ref(), &text)
    }

    fn nodes_text(&self) -> String {
        let mut s = String::with_capacity(self.nodes.len() * 72);
        for p in &self.nodes {
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", p.x, p.y, p.z));
        }
        s
    }

    fn triangles_text(&self) -> String {
        let mut s = String::with_capacity(self.triangles.len() * 24);
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn format_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    }
}

fn parse_point(line: &str, path: &Path, ln: usize, scale: f64) -> Result<Point3<f64>> {
    let v: Vec<f64> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format_err(path, ln, "expected three real numbers"))?;
    if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
        return Err(format_err(path, ln, "expected three finite real numbers"));
    }
    Ok(Point3::new(v[0] * scale, v[1] * scale, v[2] * scale))
}

fn parse_triangle(line: &str, path: &Path, ln: usize) -> Result<[usize; 3]> {
    let v: Vec<usize> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format_err(path, ln, "expected three positive integer indices"))?;
    if v.len() != 3 {
        return Err(format_err(
            path,
            ln,
            "expected three positive integer indices",
        ));
    }
    if v.contains(&0) {
        return Err(Error::Index(format!(
            "{}:{ln}: node indices are one-based, found 0",
            path.display()
        )));
    }
    Ok([v[0] - 1, v[1] - 1, v[2] - 1])
}

fn parse_nodes(text: &str, path: &Path, skip: usize, scale: f64) -> Result<Vec<Point3<f64>>> {
    content_lines(text)
        .skip(skip)
        .map(|(ln, l)| parse_point(l, path, ln, scale))
        .collect()
}

fn parse_triangles(text: &str, path: &Path, skip: usize) -> Result<Vec<[usize; 3]>> {
    content_lines(text)
        .skip(skip)
        .map(|(ln, l)| parse_triangle(l, path, ln))
        .collect()
}

fn check_closed_orientable(name: &str, triangles: &[[usize; 3]]) -> Result<()> {
    // directed edge -> count; a closed, consistently oriented surface has each
    // directed edge exactly once and its reverse exactly once
    let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(triangles.len() * 3);
    for tri in triangles {
        for k in 0..3 {
            *directed.entry((tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    let mut reversed_winding = false;
    for (&(a, b), &count) in &directed {
        let back = directed.get(&(b, a)).copied().unwrap_or(0);
        if count + back != 2 {
            if count + back < 2 {
                return Err(Error::Topology(format!(
                    "surface '{name}' is open: edge ({}, {}) belongs to {} triangle(s)",
                    a + 1,
                    b + 1,
                    count + back
                )));
            }
            return Err(Error::Topology(format!(
                "surface '{name}' is non-manifold: edge ({}, {}) belongs to {} triangles",
                a + 1,
                b + 1,
                count + back
            )));
        }
        if count != 1 {
            reversed_winding = true;
        }
    }
    if reversed_winding {
        return Err(Error::Topology(format!(
            "surface '{name}' is not consistently oriented"
        )));
    }
    Ok(())
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn signed_volume(nodes: &[Point3<f64>], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (nodes[t[0]].coords, nodes[t[1]].coords, nodes[t[2]].coords);
            a.dot(&b.cross(&c))
        })
        .sum::<f64>()
        / 6.0
}

pub(crate) fn bounding_box(points: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn bbox_diagonal(points: &[Point3<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (lo, hi) = bounding_box(points);
    (hi - lo).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn tetrahedron_is_closed() {
        let m = shapes::tetrahedron_surface(1.0);
        assert_eq!(m.nodes().len(), 4);
        assert_eq!(m.triangles().len(), 4);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.volume() > 0.0);
    }

    #[test]
    fn cube_euler_characteristic() {
        let m = shapes::box_surface("cube", Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        assert_eq!(m.nodes().len(), 8);
        assert_eq!(m.triangles().len(), 12);
        assert_eq!(m.edge_count(), 18);
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn open_surface_rejected() {
        let m = shapes::tetrahedron_surface(1.0);
        let tris = m.triangles()[..3].to_vec();
        let err = SurfaceMesh::new("open", m.nodes().to_vec(), tris).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "{err}");
    }

    #[test]
    fn out_of_range_index_rejected() {
        let m = shapes::tetrahedron_surface(1.0);
        let mut tris = m.triangles().to_vec();
        tris[0][1] = 8;
        let err = SurfaceMesh::new("bad", m.nodes().to_vec(), tris).unwrap_err();
        assert!(matches!(err, Error::Index(_)));
    }

    #[test]
    fn inward_winding_is_flipped() {
        let m = shapes::tetrahedron_surface(1.0);
        let tris: Vec<_> = m.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
        let flipped = SurfaceMesh::new("in", m.nodes().to_vec(), tris).unwrap();
        assert!(flipped.volume() > 0.0);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let nodes = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let tris = vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]];
        assert!(matches!(
            SurfaceMesh::new("flat", nodes, tris),
            Err(Error::Topology(_))
        ));
    }
}
