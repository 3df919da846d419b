//! Volumetric universal atrial coordinates.

pub mod coords;
pub mod locate;
pub mod param;
pub mod relax;

pub use coords::{compute_uac, UacBuild, UacCoordinates};
pub use locate::{UacLocator, UacPoint, DEFAULT_WEIGHTS};
pub use param::{parametrize_boundary, BoundaryParametrization};
pub use relax::{relax_orifices, RelaxationSpec};
