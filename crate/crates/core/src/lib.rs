//! Optimal control of hybrid systems with sliding modes.
//!
//! The forward trajectory is integrated with three-stage Radau IIA. ODE phases
//! and sliding DAE phases use the same scheme, and switching times are located
//! on a cubic Hermite interpolant. Gradients of endpoint functionals with
//! respect to piecewise-constant controls come from the discrete adjoint of
//! that recursion, including the adjoint jumps at switching times. An SQP
//! method with damped BFGS updates drives the optimization.

pub mod adjoint;
pub mod config;
pub mod error;
pub mod forward;
pub mod gradient;
pub mod model;
pub mod nlp;
pub mod par;
pub mod problems;
pub mod study;
pub mod tableau;

pub use error::{Error, Result};
pub use model::{ControlGrid, Field, Functional, HybridModel, Matrix, PhaseLabel, Vector};
pub use tableau::{radau_iia, Tableau};
