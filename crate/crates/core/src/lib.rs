//! Tightness diagnostics for Markov processes with fixed times of discontinuity.
//!
//! * [`path`], [`metric`], [`io`]: càdlàg step paths, monotone controls, metrics, CSV files.
//! * [`modulus`]: exact moduli over sparse subdivisions, with an exhaustive oracle.
//! * [`subdivision`]: constructive control-adapted subdivisions and their matching across `n`.
//! * [`sim`]: exact simulators (logistic branching with catastrophes, Galton–Watson in
//!   varying environment) and a positivity-preserving scheme for the diffusion limit.
//! * [`verify`]: Monte Carlo checks of compact containment, oscillation bounds,
//!   stopping-time decompositions and tightness curves.

pub mod fuzz;
pub mod io;
pub mod metric;
pub mod modulus;
pub mod path;
pub mod sim;
pub mod subdivision;
pub mod verify;

pub use metric::Metric;
pub use modulus::{ModulusResult, Sparsity, Subdivision};
pub use path::{MonotoneControl, PiecewiseLinearTimeChange, StepPath};
