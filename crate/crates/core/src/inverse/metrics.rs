use nalgebra::{DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose DOF position lies within `radius` of `center`.
pub fn roi_indices(positions: &[Point3<f64>], center: &Point3<f64>, radius: f64) -> Vec<usize> {
    positions
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - center).norm() <= radius)
        .map(|(j, _)| j)
        .collect()
}

/// Source-wise weights and current vectors: consecutive columns sharing a
/// position are one source, weighted by `Σ|x_j|` with current vector
/// `Σ x_j o_j`. Without orientations every column is a scalar source.
fn sources(
    x: &DVector<f64>,
    positions: &[Point3<f64>],
    orientations: &[Vector3<f64>],
    columns: &[usize],
) -> Vec<(Point3<f64>, f64, Vector3<f64>)> {
    let mut out: Vec<(Point3<f64>, f64, Vector3<f64>)> = Vec::new();
    let mut last: Option<usize> = None;
    for &j in columns {
        let p = positions[j];
        let v = orientations
            .get(j)
            .map(|o| o * x[j])
            .unwrap_or_else(Vector3::zeros);
        let same =
            last.is_some_and(|i| i + 1 == j && positions[i] == p) && !orientations.is_empty();
        match out.last_mut() {
            Some(s) if same => {
                s.1 += x[j].abs();
                s.2 += v;
            }
            _ => out.push((p, x[j].abs(), v)),
        }
        last = Some(j);
    }
    out
}

/// Amplitude-weighted center of mass over `columns`, or `None` if every
/// amplitude is zero.
pub fn center_of_mass(
    x: &DVector<f64>,
    positions: &[Point3<f64>],
    orientations: &[Vector3<f64>],
    columns: &[usize],
) -> Option<Point3<f64>> {
    let src = sources(x, positions, orientations, columns);
    let total: f64 = src.iter().map(|s| s.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let acc = src
        .iter()
        .fold(Vector3::zeros(), |a, s| a + s.0.coords * s.1);
    Some(Point3::from(acc / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiMetrics {
    pub center_of_mass: [f64; 3],
    pub position_error_mm: f64,
    pub angle_error_deg: Option<f64>,
    pub dofs: usize,
}

/// Localization error of a reconstruction inside a ball.
///
/// Positions are in metres; the position error is reported in millimetres.
/// The angle compares the summed current vector of the ROI with
/// `true_orientation` and is `None` for scalar DOFs.
pub fn roi_metrics(
    x: &DVector<f64>,
    positions: &[Point3<f64>],
    orientations: &[Vector3<f64>],
    roi_center: &Point3<f64>,
    roi_radius: f64,
    true_position: &Point3<f64>,
    true_orientation: Option<&Vector3<f64>>,
) -> Result<RoiMetrics> {
    if x.len() != positions.len() {
        return Err(Error::Data(format!(
            "{} amplitudes for {} DOF positions",
            x.len(),
            positions.len()
        )));
    }
    let columns = roi_indices(positions, roi_center, roi_radius);
    if columns.is_empty() {
        return Err(Error::Roi);
    }
    let com = center_of_mass(x, positions, orientations, &columns)
        .ok_or_else(|| Error::UndefinedMetric("all amplitudes in the ROI are zero".into()))?;
    let angle_error_deg = match true_orientation {
        Some(t) if !orientations.is_empty() => {
            let v = sources(x, positions, orientations, &columns)
                .iter()
                .fold(Vector3::zeros(), |a, s| a + s.2);
            if v.norm() == 0.0 || t.norm() == 0.0 {
                return Err(Error::UndefinedMetric(
                    "reconstructed or true orientation is zero".into(),
                ));
            }
            let c = (v.dot(t) / (v.norm() * t.norm())).clamp(-1.0, 1.0);
            Some(c.acos().to_degrees())
        }
        _ => None,
    };
    Ok(RoiMetrics {
        center_of_mass: [com.x, com.y, com.z],
        position_error_mm: (com - true_position).norm() * 1e3,
        angle_error_deg,
        dofs: columns.len(),
    })
}
