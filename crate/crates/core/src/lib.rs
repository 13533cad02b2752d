//! Diffusion of multiple costly behaviors over resource-constrained social
//! networks.
//!
//! Each node holds a resource budget and adopts the payoff-maximizing subset
//! of behaviors whose social signal has reached its threshold and that it can
//! afford. The crate provides the epoch engine, seven seed-selection
//! heuristics, seed behavior allocations, the evaluation metrics, and a
//! Monte Carlo harness that parallelizes over runs (feature `parallel`,
//! on by default).

pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod par;
pub mod seeding;

pub use diffusion::{DiffusionConfig, DiffusionOutcome};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Regime, SeedPlan, Topology};
pub use graph::{Graph, NodeId};
pub use metrics::{Estimate, FullSeedMode, MetricsReport};
pub use model::{Behavior, BehaviorMask, BehaviorSet, Population, Roster};
pub use seeding::{Distribution, Heuristic, SeedAssignment, SeedBudget};
