//! Existence of the maximum likelihood estimate in high-dimensional binary
//! response GLMs with elliptical covariates.
//!
//! The crate is organised bottom-up:
//!
//! * [`radial`] – the radial law `R` of an elliptical vector, calibrated so that
//!   `E R² = p·α0² + 1`.
//! * [`elliptical`] – sampling `μ + R·A·U`, the scalar projection `U^(p)` and
//!   its moments (with a Carleman divergence diagnostic).
//! * [`glm`] – link functions, coefficient construction and dataset generation.
//! * [`simplex`] / [`separability`] – a dense bounded-variable simplex and the
//!   overlap / quasi-complete / complete trichotomy built on it.
//! * [`hmle`] – sample-average approximation of the threshold `h_MLE`.
//! * [`sweep`] – the `(γ0, κ)` grid harness, transition summaries and exports.
//! * [`theory`] – G-functions, the pG conditions and the exact probability of
//!   univariate separation.

pub mod elliptical;
pub mod glm;
pub mod hmle;
pub mod radial;
pub mod seeding;
pub mod separability;
pub mod simplex;
pub mod stats;
pub mod sweep;
pub mod theory;

pub use elliptical::{EllipticalSpec, Mixing, ProjectionMoments};
pub use glm::{Dataset, LinkFn, ModelParams};
pub use hmle::{HmleEstimate, SaaSample};
pub use radial::{RadialFamily, RadialSpec};
pub use separability::{LpTolerance, SeparationKind, SeparationStatus};
pub use sweep::{PhaseGrid, SweepConfig, TransitionSummary};
