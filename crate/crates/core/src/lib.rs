//! Reconstruction of perfectly conducting inclusions from boundary voltage data.
//!
//! The inclusion boundary is the zero level set of a latent implicit function. Forward and
//! adjoint potentials are computed with a collocation boundary-element method on the
//! inclusion surface and the outer measurement sphere, and the latent code is updated with
//! Adam using the adjoint-based latent gradient.

pub mod bem;
pub mod error;
pub mod gradient;
pub mod harmonics;
pub mod marching;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod patterns;
pub mod problem;
pub mod shape;

pub use error::{Error, Result};
pub use mesh::{area_matched_sphere, icosphere, Point, TriangleMesh};
pub use shape::{LatentCode, LatentShapeModel};
