//! Triangulated compartment surfaces and point classification.

pub mod raycast;
mod segmentation;
pub mod shapes;
mod surface;

pub use raycast::SurfaceLocator;
pub use segmentation::{
    defaults, tensor_is_spd, tensor_matrix, Compartment, Conductivity, Segmentation,
    MAX_COMPARTMENTS,
};
pub use surface::SurfaceMesh;
pub(crate) use surface::{bounding_box, triangle_area};
