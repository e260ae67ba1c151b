//! Multi-objective neural architecture search.
//!
//! The crate bundles two search strategies that trade accuracy against
//! device cost: a policy-gradient controller that samples whole-network
//! hyperparameter sequences under accuracy/energy/power rewards, and a
//! progressive model-based search that grows Norm/Conv cells layer by layer
//! and keeps the Pareto-optimal candidates under a learned accuracy
//! predictor. Random search and a tournament-selection evolutionary
//! baseline run against the same evaluation interface.
//!
//! Accuracy comes from a deterministic synthetic oracle or a tabular
//! benchmark; parameters and FLOPs are counted exactly and device metrics
//! (latency, energy, power, memory) are estimated from [`DeviceProfile`]
//! coefficients.

pub mod archspace;
pub mod config;
pub mod costmodel;
pub mod engines;
pub mod error;
pub mod evaluator;
pub mod neuralcore;
pub mod pareto;
pub mod report;
pub mod reward;
pub mod stats;

pub use archspace::{ArchSpec, MacroSpace, MicroSpace, SearchSpace, SpaceKind};
pub use costmodel::{DeviceProfile, MetricVector};
pub use error::{NasError, Result};
pub use pareto::{Direction, Objective, ObjectiveSpec, ParetoFront};
pub use reward::RewardConfig;
