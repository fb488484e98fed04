//! Gray-box falsification of closed-loop control systems with neural-network
//! controllers.
//!
//! The crate searches for initial conditions and input signals that drive a
//! closed loop `x' = f(x, w)` to violate a Signal Temporal Logic requirement.
//! The local search integrates a co-state backward in time over a schedule of
//! finite-difference linearizations and steps along the resulting descent
//! directions; the global layer wraps it with uniform random sampling or
//! simulated annealing.
//!
//! Everything here is allocation-only (`no_std` + `alloc`). File formats, the
//! command line and wall-clock timing live in the `gbf` companion crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod adjoint;
pub mod benchmarks;
pub mod error;
pub mod linalg;
pub mod linearize;
pub mod nn;
pub mod search;
pub mod signals;
pub mod sim;
pub mod stl;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use signals::{BoxSet, PiecewiseLinearSignal, StateVector, TimeGrid, Trajectory};
