//! Constraint-aware early stopping for hyperparameter tuning.
//!
//! The cost model, history and schedulers are generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the scalar. The simulator and the
//! experiment layer work in `f64`.

pub mod cost_model;
pub mod experiment;
pub mod num;
pub mod rng;
pub mod schedulers;
pub mod search_space;
pub mod sim;
pub mod trial_history;

pub use num::Scalar;

pub type CostSetting64 = cost_model::CostSetting<f64>;
pub type CostSetting32 = cost_model::CostSetting<f32>;
pub type CostParams64 = cost_model::CostParams<f64>;
pub type CostParams32 = cost_model::CostParams<f32>;

pub type ConstraintSpec64 = trial_history::ConstraintSpec<f64>;
pub type ConstraintSpec32 = trial_history::ConstraintSpec<f32>;
pub type CheckpointRecord64 = trial_history::CheckpointRecord<f64>;
pub type CheckpointRecord32 = trial_history::CheckpointRecord<f32>;
pub type CostLedger64 = trial_history::CostLedger<f64>;
pub type CostLedger32 = trial_history::CostLedger<f32>;
pub type RunningHistory64 = trial_history::RunningHistory<f64>;
pub type RunningHistory32 = trial_history::RunningHistory<f32>;

pub type AceConfig64 = schedulers::AceConfig<f64>;
pub type AceConfig32 = schedulers::AceConfig<f32>;
pub type AceScheduler64 = schedulers::AceScheduler<f64>;
pub type AceScheduler32 = schedulers::AceScheduler<f32>;
pub type AshaConfig64 = schedulers::AshaConfig<f64>;
pub type AshaConfig32 = schedulers::AshaConfig<f32>;
pub type AshaScheduler64 = schedulers::AshaScheduler<f64>;
pub type AshaScheduler32 = schedulers::AshaScheduler<f32>;
pub type CheckpointContext64 = schedulers::CheckpointContext<f64>;
pub type CheckpointContext32 = schedulers::CheckpointContext<f32>;
