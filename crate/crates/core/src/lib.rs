//! Load frequency control workbench for a two-area reheat-thermal system.
//!
//! * [`numkern`]: dense matrices, LU, RK4.
//! * [`plant`]: the 11-state linearized model.
//! * [`simkit`]: closed-loop simulation, ISE, response metrics.
//! * [`lqrsyn`]: Riccati solution and LQR gain.
//! * [`psoopt`]: particle swarm tuning of feedback gains.

pub mod lqrsyn;
pub mod numkern;
pub mod plant;
pub mod psoopt;
pub mod simkit;

pub use lqrsyn::{care_residual, lqr_gain, solve_care, CareOptions, CareSolution, LqrError};
pub use numkern::{Matrix, Vector};
pub use plant::{area_swap, from_params, paper_model, PlantParams, TwoAreaModel};
pub use psoopt::{fitness, optimize, FitnessSettings, PsoResult, SwarmConfig};
pub use simkit::{
    closed_loop_matrix, ise, metrics, quadratic_cost, simulate, Area, Channel, FeedbackGain,
    GainMask, ResponseMetrics, Scenario, Settling, Trajectory,
};
