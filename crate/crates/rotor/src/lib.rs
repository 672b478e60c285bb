//! Numerical laboratory for XY (planar-rotor) lattice spins under
//! infinite-temperature diffusive dynamics.
//!
//! The crate is organised around the two-layer picture of a rotor system
//! observed at times 0 and `t` simultaneously:
//!
//! - [`kernel`] — the heat kernel on the circle, its logarithm, the
//!   low-order expansion of `log p_t` at the all-π conditioning, and
//!   wrapped-Gaussian sampling of the dynamics;
//! - [`lattice`] — finite boxes of circle-valued spins and the initial,
//!   dynamical (two-layer) and restricted three-term Hamiltonians;
//! - [`ground_state`] — the single-site effective potential of the
//!   conditioned system, its maximizers, the `ε_t` correction and the
//!   degeneracy (bifurcation) window in `t`;
//! - [`mc`] — seeded Metropolis sampling with checkerboard sweeps and
//!   symmetry-breaking observables;
//! - [`probe`] — conditional-density estimates of the evolved measure
//!   under competing boundary conditions, with a transfer-matrix oracle
//!   for one-dimensional cross-checks.

pub mod angle;
pub mod error;
pub mod ground_state;
pub mod kernel;
pub mod lattice;
pub mod mc;
pub mod probe;

pub use angle::Angle;
pub use error::{Error, Result};
