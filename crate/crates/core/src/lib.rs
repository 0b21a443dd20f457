//! Numerical laboratory for the N-counter race process.
//!
//! `N` integer counters evolve by repeatedly choosing a uniformly random pair
//! of distinct counters: the smaller one is incremented, or both when they are
//! equal. The long-run number of counters updated per step is the speed
//! `V(N)`. This crate provides
//!
//! * [`dynamics`]: the exact one-step law of the gap chain, Monte Carlo speed
//!   estimates, empirical level tails and Foster–Lyapunov drift evaluation;
//! * [`exact_small`]: closed-form `N = 3` and truncated `N = 4` stationary solves;
//! * [`config_algebra`]: configurations, expected gap increments and the
//!   test-function drift functional with its merge/rebalance calculus;
//! * [`bounds`]: finite-N and asymptotic upper bounds, and the asymptotic lower
//!   bound optimisation;
//! * [`lp`]: LP-optimal test functions via an exact/floating revised simplex;
//! * [`meanfield`]: the mean-field ODE hierarchy and travelling-wave speed.

pub mod bounds;
pub mod config_algebra;
pub mod dynamics;
pub mod error;
pub mod exact_small;
pub mod lp;
pub mod meanfield;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact arithmetic used for every identity that must hold with zero tolerance.
pub type Rational = num_rational::BigRational;

/// Floating scalar used for simulation, ODE integration and the large LPs.
pub type Real = f64;

/// Mean-field integrator state in double precision.
pub type MeanFieldStateF64 = meanfield::MeanFieldState<f64>;

/// Test function over exact rationals.
pub type ExactTestFunction = config_algebra::TestFunction<Rational>;
