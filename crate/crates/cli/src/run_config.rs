//! Run configuration assembled from defaults, command-line flags and an
//! optional TOML file. The file has the last word.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use causaldrive::agent::PlannerConfig;
use causaldrive::causal::{ActionDistanceConfig, ExtractionConfig};
use causaldrive::config::AnalysisConfig;
use causaldrive::data::ConvoyConfig;
use causaldrive::reward::{OutcomeDistanceConfig, RewardConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Scene file for `learn-profile` and `discover`.
    pub scene: Option<PathBuf>,
    /// Directory of scene files for `evaluate`.
    pub scenes_dir: Option<PathBuf>,
    /// Directory of highD-layout recordings for `evaluate`.
    pub highd_dir: Option<PathBuf>,
    /// Sweep for `evaluate`.
    pub thresholds: Vec<f64>,
    pub template: Option<String>,
    pub count: usize,
    pub reward: RewardConfig,
    pub outcome_distance: OutcomeDistanceConfig,
    pub action_distance: ActionDistanceConfig,
    pub planner: PlannerConfig,
    pub extraction: ExtractionConfig,
    pub convoy: ConvoyConfig,
    pub time_step: f64,
    pub include_observed_action: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            scene: None,
            scenes_dir: None,
            highd_dir: None,
            thresholds: causaldrive::eval::default_thresholds(),
            template: None,
            count: 1,
            reward: a.reward,
            outcome_distance: a.outcome_distance,
            action_distance: a.action_distance,
            planner: a.planner,
            extraction: a.extraction,
            convoy: a.convoy,
            time_step: a.time_step,
            include_observed_action: a.include_observed_action,
        }
    }
}

impl RunConfig {
    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            reward: self.reward,
            outcome_distance: self.outcome_distance,
            action_distance: self.action_distance,
            planner: self.planner.clone(),
            extraction: self.extraction,
            convoy: self.convoy,
            time_step: self.time_step,
            include_observed_action: self.include_observed_action,
        }
    }

    /// Overlays `file` (if any) on `flags` (keys set on the command line) on
    /// the defaults, then validates the result.
    pub fn resolve(flags: toml::Table, file: Option<&Path>) -> Result<Self> {
        let mut merged = toml::Table::try_from(RunConfig::default()).context("serialising defaults")?;
        merge(&mut merged, flags);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let table: toml::Table = text
                .parse()
                .with_context(|| format!("parsing config {}", path.display()))?;
            // Validate the file on its own so unknown keys are reported against it.
            RunConfig::deserialize(toml::Value::Table(table.clone()))
                .with_context(|| format!("invalid config {}", path.display()))?;
            merge(&mut merged, table);
        }
        let cfg = RunConfig::deserialize(toml::Value::Table(merged)).context("invalid configuration")?;
        cfg.analysis().validate().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }
}

/// Deep merge of `over` into `base`; tables merge key by key, anything else
/// is replaced.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
