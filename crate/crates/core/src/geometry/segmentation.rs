use nalgebra::{Matrix3, Point3};
use serde::{Deserialize, Serialize};

use super::raycast::SurfaceLocator;
use super::surface::bounding_box;
use super::SurfaceMesh;
use crate::error::{Error, Result};

pub const MAX_COMPARTMENTS: usize = 27;

/// Default compartment conductivities (S/m).
pub mod defaults {
    pub const WHITE_MATTER: f64 = 0.14;
    pub const GREY_MATTER: f64 = 0.33;
    pub const CSF: f64 = 1.79;
    pub const SKULL: f64 = 0.0064;
    pub const SCALP: f64 = 0.43;
}

/// Scalar or symmetric-tensor conductivity. Tensor rows are
/// `(σ11, σ22, σ33, σ12, σ13, σ23)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Conductivity {
    Isotropic(f64),
    Tensor([f64; 6]),
}

impl Conductivity {
    pub fn matrix(&self) -> Matrix3<f64> {
        match *self {
            Conductivity::Isotropic(s) => Matrix3::identity() * s,
            Conductivity::Tensor(t) => tensor_matrix(&t),
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        match *self {
            Conductivity::Isotropic(s) => s > 0.0,
            Conductivity::Tensor(t) => tensor_is_spd(&t),
        }
    }
}

pub fn tensor_matrix(t: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(t[0], t[3], t[4], t[3], t[1], t[5], t[4], t[5], t[2])
}

/// Sylvester criterion on the leading minors.
pub fn tensor_is_spd(t: &[f64; 6]) -> bool {
    let m = tensor_matrix(t);
    let d1 = m[(0, 0)];
    let d2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    d1 > 0.0 && d2 > 0.0 && m.determinant() > 0.0
}

#[derive(Debug, Clone)]
pub struct Compartment {
    pub name: String,
    pub conductivity: Conductivity,
    /// Lower value wins when an element has nodes in several compartments.
    pub priority: i32,
    pub active: bool,
    locators: Vec<SurfaceLocator>,
}

impl Compartment {
    pub fn new(
        name: impl Into<String>,
        sub_meshes: Vec<SurfaceMesh>,
        conductivity: Conductivity,
        priority: i32,
        active: bool,
    ) -> Result<Self> {
        let name = name.into();
        if sub_meshes.is_empty() {
            return Err(Error::Config(format!(
                "compartment '{name}' has no surface mesh"
            )));
        }
        Ok(Self {
            name,
            conductivity,
            priority,
            active,
            locators: sub_meshes.into_iter().map(SurfaceLocator::new).collect(),
        })
    }

    pub fn sub_meshes(&self) -> impl Iterator<Item = &SurfaceMesh> {
        self.locators.iter().map(|l| l.mesh())
    }

    pub fn sub_mesh_count(&self) -> usize {
        self.locators.len()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.locators.iter().any(|l| l.contains(p))
    }
}

/// Ordered list of compartments, innermost first.
#[derive(Debug, Clone)]
pub struct Segmentation {
    compartments: Vec<Compartment>,
}

impl Segmentation {
    pub fn new(compartments: Vec<Compartment>) -> Result<Self> {
        if compartments.is_empty() {
            return Err(Error::Config("segmentation has no compartment".into()));
        }
        if compartments.len() > MAX_COMPARTMENTS {
            return Err(Error::Config(format!(
                "{} compartments given, at most {MAX_COMPARTMENTS} are supported",
                compartments.len()
            )));
        }
        Ok(Self { compartments })
    }

    pub fn compartments(&self) -> &[Compartment] {
        &self.compartments
    }

    pub fn len(&self) -> usize {
        self.compartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compartments.is_empty()
    }

    /// Innermost compartment enclosing `p` (first in order), or `None`.
    pub fn point_in_compartment(&self, p: &Point3<f64>) -> Option<usize> {
        self.compartments.iter().position(|c| c.contains(p))
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let pts: Vec<Point3<f64>> = self
            .compartments
            .iter()
            .flat_map(|c| c.sub_meshes())
            .flat_map(|m| {
                let (lo, hi) = m.bounding_box();
                [lo, hi]
            })
            .collect();
        bounding_box(&pts)
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.compartments.len())
            .filter(|&i| self.compartments[i].active)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    fn nested() -> Segmentation {
        let inner = shapes::icosphere("inner", Point3::origin(), 0.5, 2);
        let outer = shapes::icosphere("outer", Point3::origin(), 1.0, 2);
        Segmentation::new(vec![
            Compartment::new("inner", vec![inner], Conductivity::Isotropic(0.33), 1, true).unwrap(),
            Compartment::new(
                "outer",
                vec![outer],
                Conductivity::Isotropic(0.43),
                1,
                false,
            )
            .unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn innermost_wins() {
        let seg = nested();
        assert_eq!(
            seg.point_in_compartment(&Point3::new(0.1, 0.0, 0.0)),
            Some(0)
        );
        assert_eq!(
            seg.point_in_compartment(&Point3::new(0.8, 0.0, 0.0)),
            Some(1)
        );
        assert_eq!(seg.point_in_compartment(&Point3::new(10.0, 0.0, 0.0)), None);
    }

    #[test]
    fn compartment_cap() {
        let comps: Vec<_> = (0..28)
            .map(|i| {
                Compartment::new(
                    format!("c{i}"),
                    vec![shapes::tetrahedron_surface(1.0)],
                    Conductivity::Isotropic(1.0),
                    0,
                    false,
                )
                .unwrap()
            })
            .collect();
        assert!(matches!(Segmentation::new(comps), Err(Error::Config(_))));
    }

    #[test]
    fn tensor_spd() {
        assert!(tensor_is_spd(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]));
        assert!(tensor_is_spd(&[2.0, 2.0, 2.0, 0.5, 0.1, -0.3]));
        assert!(!tensor_is_spd(&[1.0, 1.0, 1.0, 2.0, 0.0, 0.0]));
        assert!(!tensor_is_spd(&[-1.0, 1.0, 1.0, 0.0, 0.0, 0.0]));
    }
}
