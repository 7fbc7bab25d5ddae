//! Stress- and fatigue-constrained topology optimization of periodic unit
//! cells by inverse homogenization.
//!
//! The pipeline is
//!
//! ```text
//! rho --filter--> rho_tilde --projection--> rho_bar --SIMP--> K(rho_bar)
//!     --unit-strain solves--> C^H, element stress cycles --> criteria g
//! ```
//!
//! wrapped in an augmented-Lagrangian outer loop with an MMA inner solver
//! ([`alopt`]) and adjoint sensitivities ([`adjoint`]).

pub mod adjoint;
pub mod alopt;
pub mod criteria;
pub mod error;
pub mod field;
pub mod homogenize;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod problem;

pub use error::{Error, Result};
pub use material::Material;
pub use mesh::{Dim, DofMap, ElementMatrices, RucMesh};
