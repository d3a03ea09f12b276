//! Static network model: case data, admittance assembly, power flow and the
//! classical-model reduction to machine internal nodes.

mod case;
mod kron;
mod powerflow;
mod ybus;

use thiserror::Error;

pub use case::{load_case, Branch, BranchId, BranchStatus, Bus, BusType, CaseError, GridCase, Machine};
pub use kron::{internal_emfs, kron_reduce, load_admittances, machine_currents, solve_network, ReducedNetwork};
pub use powerflow::{branch_flows, run_power_flow, PowerFlowError, PowerFlowSolution};
pub use ybus::{build_ybus, YbusMatrix};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unknown branch index {0}")]
    UnknownBranch(usize),
    #[error("singular bus admittance block (a bus group has no path to a machine or ground)")]
    SingularBusBlock,
}

/// The bundled IEEE 39-bus case.
pub const IEEE39_JSON: &str = include_str!("../../data/ieee39.json");

pub fn ieee39() -> GridCase {
    GridCase::from_json(IEEE39_JSON).expect("bundled case is valid")
}
