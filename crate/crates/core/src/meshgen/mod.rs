//! Uniform labeled tetrahedral meshes, interface smoothing and source
//! placement.

mod generate;
mod mesh;
mod smooth;
mod sources;

pub use generate::{generate_mesh, kuhn_tetrahedra, sigma_from_labels};
pub use mesh::{tet_signed_volume, SigmaField, TetMesh, LOCAL_FACES};
pub use smooth::{smooth_mesh, DEFAULT_SMOOTHING_ITERATIONS, DEFAULT_SMOOTHING_STEP};
pub use sources::{place_sources, OrientationMode, SourceSpace};
