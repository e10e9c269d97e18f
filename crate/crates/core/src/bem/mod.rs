//! Collocation boundary-element method for the Laplace problem between an inclusion surface
//! with a homogeneous Dirichlet condition and an outer boundary carrying Neumann data.
//!
//! Unknowns are piecewise constant per panel and collocated at panel centroids. The block
//! system couples the flux on the inclusion with the potential trace on the outer boundary:
//!
//! ```text
//! [  S_GG        -K_GS      ] [ dn u | G ]   [ -S_GS ]
//! [ -S_SG   1/2 I + K_SS    ] [  u  | S  ] = [  S_SS ] g
//! ```
//!
//! Normals are outward from the conducting region: into the inclusion on its surface, away
//! from the origin on the outer sphere.

pub mod kernel;
pub mod quadrature;
mod system;

pub use kernel::{greens_kernel, greens_normal_derivative};
pub use system::{
    assemble, factorization_count, layer_potentials, solve_adjoint, solve_forward, BieSystem, CurrentPattern, FieldSolution,
    SolveDiagnostics, CONDITION_WARNING,
};
