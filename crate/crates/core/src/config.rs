//! Bundled analysis parameters.

use serde::{Deserialize, Serialize};

use crate::agent::PlannerConfig;
use crate::causal::{ActionDistanceConfig, ExtractionConfig};
use crate::data::ConvoyConfig;
use crate::reward::{OutcomeDistanceConfig, RewardConfig};

/// Everything the discovery pipeline needs. Missing fields take their
/// defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub reward: RewardConfig,
    pub outcome_distance: OutcomeDistanceConfig,
    pub action_distance: ActionDistanceConfig,
    pub planner: PlannerConfig,
    pub extraction: ExtractionConfig,
    pub convoy: ConvoyConfig,
    /// Simulation step (s).
    pub time_step: f64,
    /// Add the observed action to the hypothetical set when learning a profile.
    pub include_observed_action: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            outcome_distance: OutcomeDistanceConfig::default(),
            action_distance: ActionDistanceConfig::default(),
            planner: PlannerConfig::default(),
            extraction: ExtractionConfig::default(),
            convoy: ConvoyConfig::default(),
            time_step: 0.04,
            include_observed_action: true,
        }
    }
}

impl AnalysisConfig {
    /// Checks value ranges that serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("reward.beta_dh", self.reward.beta_dh),
            ("reward.beta_fs", self.reward.beta_fs),
            ("reward.beta_ef", self.reward.beta_ef),
            ("outcome_distance.alpha_o", self.outcome_distance.alpha_o),
            ("outcome_distance.alpha_lt", self.outcome_distance.alpha_lt),
            ("outcome_distance.alpha_fs", self.outcome_distance.alpha_fs),
            ("outcome_distance.alpha_dh", self.outcome_distance.alpha_dh),
            ("outcome_distance.alpha_ef", self.outcome_distance.alpha_ef),
            ("outcome_distance.alpha_ad", self.outcome_distance.alpha_ad),
            ("action_distance.alpha_a", self.action_distance.alpha_a),
            ("action_distance.alpha_vl", self.action_distance.alpha_vl),
            ("planner.horizon", self.planner.horizon),
            ("planner.goal_lead_time", self.planner.goal_lead_time),
            ("extraction.hysteresis", self.extraction.hysteresis),
            ("convoy.window", self.convoy.window),
            ("time_step", self.time_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.action_distance.threshold >= 0.0) {
            return Err(format!(
                "action_distance.threshold must be non-negative, got {}",
                self.action_distance.threshold
            ));
        }
        if self.planner.speed_deltas.iter().any(|d| !d.is_finite()) {
            return Err("planner.speed_deltas must be finite".into());
        }
        if self.planner.horizon < self.time_step {
            return Err("planner.horizon must cover at least one time step".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_constants() {
        let c = AnalysisConfig::default();
        assert_eq!(
            (c.reward.beta_dh, c.reward.beta_fs, c.reward.beta_ef),
            (2.0, 31.3, 1000.0)
        );
        let d = c.outcome_distance;
        assert_eq!(
            (d.alpha_o, d.alpha_lt, d.alpha_fs, d.alpha_dh, d.alpha_ef, d.alpha_ad),
            (0.1, 100.0, 1.0, 0.1, 0.01, 100.0)
        );
        assert_eq!((c.action_distance.alpha_a, c.action_distance.alpha_vl), (0.1, 10.0));
        assert_eq!(c.action_distance.threshold, 0.0);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<AnalysisConfig>(r#"{"reward": {"beta_xx": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("beta_xx"));
        let err = serde_json::from_str::<AnalysisConfig>(r#"{"planer": {}}"#).unwrap_err();
        assert!(err.to_string().contains("planer"));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: AnalysisConfig = serde_json::from_str(r#"{"action_distance": {"threshold": 0.1}}"#).unwrap();
        assert_eq!(c.action_distance.threshold, 0.1);
        assert_eq!(c.action_distance.alpha_vl, 10.0);
    }
}
