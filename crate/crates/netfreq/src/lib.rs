//! Distributed optimal frequency control for multi-area power networks.
//!
//! The crate has three layers:
//! * a closed-loop simulator for the projected primal-dual controller coupled
//!   to the swing-equation plant ([`sim`], [`plant`], [`controller`]),
//! * an independent constrained-QP oracle for the network balancing objective
//!   ([`nbo`], built on the dense active-set solver in [`qp`]),
//! * numerical audits of the optimality / invariance / Lyapunov claims
//!   ([`lyapunov`]).
//!
//! All quantities are deviations from a nominal operating point: power in MW,
//! angles in rad, frequency in rad/s.

pub mod controller;
pub mod lyapunov;
pub mod model;
pub mod nbo;
pub mod plant;
pub mod qp;
pub mod sim;
