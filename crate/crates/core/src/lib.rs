//! Constrained optimal impulse control with discounted costs.
//!
//! A controlled system drifts along a deterministic flow and may be moved
//! by impulses at chosen instants; each impulse incurs a lump cost and the
//! drift accrues cost at state-dependent rates, everything discounted at a
//! fixed rate. The problem of minimizing the main cost subject to bounds on
//! the remaining cost functionals is handled through its reduction to a
//! killed discrete-stage decision process and Lagrangian duality:
//!
//! * [`model`] — the problem datum, one-step costs and transitions;
//! * [`rollout`] — exact strategy evaluation with geometric cycle closure,
//!   a Monte Carlo cross-check and trajectory export;
//! * [`grid`] — value iteration on a discretized decision set, the
//!   feasibility residual and greedy strategy extraction;
//! * [`dual`] — the dual functional, its concave maximization and the
//!   complementary-slackness certificate;
//! * [`occupation`] — atomic occupation measures, their balance equation
//!   and cost integrals;
//! * [`inventory`] — the discounted inventory model in closed form, used
//!   as the exact oracle for every numeric route.

pub mod dual;
pub mod error;
pub mod grid;
pub mod inventory;
pub mod model;
pub mod occupation;
pub mod quad;
pub mod rollout;
pub mod solve;

pub use error::{Error, Result};
pub use model::{ImpulseAction, ImpulseModel, State, TransitionOutcome, Wait};
pub use rollout::{CostVector, StationaryStrategy};
