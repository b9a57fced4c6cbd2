//! Lumped-capacitance model of the coolant loop and its time integration.

mod layout;
mod params;
mod physics;
mod sim;

pub use layout::FlowLayout;
pub use params::{LoadVector, ThermalParams};
pub use physics::{
    BoundClass, Convection, FlowSource, PhysicsGraph, StateVector, Stream, ThermalNode,
    MERGE_FLOW_EPS,
};
pub use sim::{
    endurance_from_trajectory, simulate, simulate_endurance, simulate_from, write_trajectory_csv,
    ConstantFlows, FlowPolicy, InterpolatedFlows, Trajectory,
};
