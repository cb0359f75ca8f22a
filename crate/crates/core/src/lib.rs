//! driftlab: a numerical laboratory for finite-particle drifting dynamics.
//!
//! Two interacting-particle flows move a model cloud toward a data
//! distribution through bandwidth-h kernel smoothing:
//!
//! - the conservative flow follows the smoothed-score residual
//!   `b_x = grad log rho_target - grad log q_x`, a gradient field;
//! - the Laplace displacement flow follows the mean-shift difference
//!   `u_x = M_target - M_model`, which is generally not a gradient field but
//!   decomposes through a sharp companion kernel into a positively scaled
//!   score mismatch plus a scale-mismatch residual.
//!
//! The crate provides the kernels and measures behind these fields, frozen
//! -field time integration, the diagnostic functionals (mean squared speed,
//! Stein drift, smoothed Fisher discrepancy, reciprocal KDE), occupancy
//! certificates, rate-bound evaluators, and the independent finite-difference
//! and quadrature oracles used to verify the identities connecting them all.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod kernels;
pub mod measures;
pub mod numerics;
pub mod vecops;

pub use error::{Error, Result};
pub use fields::{FieldKind, FieldSpec, ModelSource};
pub use kernels::{Family, KernelSpec, MomentOrder};
pub use measures::{Measure, ParticleConfig};
pub use numerics::{GridSpec, QuadratureRule};
