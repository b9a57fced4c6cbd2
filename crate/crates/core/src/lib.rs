//! Coolant-loop topology design for pumped two-phase thermal management:
//! configuration enumeration, lumped thermal simulation, open-loop optimal
//! flow control, labelled studies, k-NN design rules and composition of
//! designs for multi-junction systems.

pub mod composer;
pub mod config;
pub mod error;
pub mod fsio;
pub mod knowledge;
pub mod oloc;
pub mod scalar;
pub mod study;
pub mod thermal;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ThermalParamsF64 = thermal::ThermalParams<f64>;
pub type ThermalParamsF32 = thermal::ThermalParams<f32>;
pub type PhysicsGraphF64 = thermal::PhysicsGraph<f64>;
pub type PhysicsGraphF32 = thermal::PhysicsGraph<f32>;
pub type TrajectoryF64 = thermal::Trajectory<f64>;
pub type TrajectoryF32 = thermal::Trajectory<f32>;
pub type OlocSolutionF64 = oloc::OlocSolution<f64>;
pub type OlocSolutionF32 = oloc::OlocSolution<f32>;
pub type KnnModelF64 = knowledge::KnnModel<f64>;
pub type KnnModelF32 = knowledge::KnnModel<f32>;
