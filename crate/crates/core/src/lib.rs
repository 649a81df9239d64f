//! Causal explanations of interactions between vehicles.
//!
//! The crate learns a per-decision reward profile for an agent from a single
//! observed action, and tests whether one agent's action was necessary for
//! another's by planning the affected agent in a factual world and in a twin
//! world where the candidate cause never happened.
// Negated float comparisons are used on purpose so NaN is rejected, and the
// linear algebra reads more clearly with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agent;
pub mod causal;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod map;
pub mod reward;
pub mod scm;
pub mod world;

pub use agent::{Action, Goal, PlannerConfig};
pub use causal::{
    action_distance, discover, explain, extract_actions, test_causal_link, CausalError, CausalGraph, CausalLink,
    Discovery, SceneAnalysis, TimeActionPair,
};
pub use config::AnalysisConfig;
pub use data::{
    read_scene, synth_scene, write_scene, AgentPair, AgentTrack, DataError, ScenarioSpec, SceneModel, Template,
};
pub use eval::{confusion, metrics, roc_sweep, ConfusionCounts, MetricReport};
pub use reward::{learn_profile, reward, Outcome, RewardProfile};
pub use world::{AgentId, SceneWorld};
