//! Adaptive proportional-integral feedback models: simulation, closed-form
//! stability analysis, and numerical checks of dynamical compensation and
//! P-invariance.
//!
//! The crate is organized bottom-up:
//!
//! * [`expr`]: infix arithmetic expressions used for user-defined systems and
//!   equivariance candidates.
//! * [`model`]: the four built-in ODE systems and expression-defined systems.
//! * [`signals`]: seeded piecewise-constant input schedules.
//! * [`integrate`]: fixed-step RK4 integration.
//! * [`analysis`]: equilibria, Jacobians, eigenvalues, phase portraits.
//! * [`invariance`]: equivariance residuals and paired-simulation tests.
//! * [`output`]: CSV and SVG emission.

pub mod analysis;
pub mod expr;
pub mod integrate;
pub mod invariance;
pub mod model;
pub mod output;
pub mod signals;

pub use analysis::{Classification, Equilibrium, StabilityReport};
pub use expr::{Bindings, Expr};
pub use integrate::Trajectory;
pub use invariance::{Decision, Equivariance, InvarianceVerdict};
pub use model::{ExtendedParams, Model, OriginalParams, State, System};
pub use signals::{Schedule, Segment};
