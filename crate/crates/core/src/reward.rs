//! Reward metrics, outcome similarity and one-shot reward-profile regression.
//!
//! An [`Outcome`] summarises what happened to an agent over a planning
//! horizon. Six features are extracted from it (five metrics plus a bias) and
//! a [`RewardProfile`] weights them linearly. Given the observed outcome of a
//! decision and the simulated outcomes of the alternatives the agent could
//! have chosen, [`learn_profile`] regresses the features of each alternative
//! onto `exp(-d(observed, alternative))`, so alternatives resembling what the
//! agent actually did are assigned the highest reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{residual_norm, ColPivQr, Matrix};

pub const FEATURE_COUNT: usize = 6;

/// Result of executing an action for one planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Lane transitions.
    pub lt: i32,
    /// Final speed (m/s).
    pub fs: f64,
    /// Distance headway to the leading vehicle (m); `None` without a leader.
    pub dh: Option<f64>,
    /// Maximum environmental force magnitude (N).
    pub ef: f64,
    /// Whether the action's goals were accomplished.
    pub ad: bool,
}

/// Weights `γ0..γ5` over the reward features; `γ5` multiplies the bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardProfile(pub [f64; FEATURE_COUNT]);

impl RewardProfile {
    pub fn weights(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.map(|w| w * c))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|w| w.is_finite())
    }
}

impl std::ops::Add for RewardProfile {
    type Output = RewardProfile;
    fn add(self, rhs: RewardProfile) -> RewardProfile {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        RewardProfile(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Time headway of the two-second rule (s).
    pub beta_dh: f64,
    /// Reference speed limit (m/s).
    pub beta_fs: f64,
    /// Environmental force beyond which an outcome is unsafe (N).
    pub beta_ef: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta_dh: 2.0,
            beta_fs: 31.3,
            beta_ef: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeDistanceConfig {
    pub alpha_o: f64,
    pub alpha_lt: f64,
    pub alpha_fs: f64,
    pub alpha_dh: f64,
    pub alpha_ef: f64,
    pub alpha_ad: f64,
    /// Time headway (s) substituted for an outcome without a leader when the
    /// other outcome has one.
    pub leaderless_time_headway: f64,
}

impl Default for OutcomeDistanceConfig {
    fn default() -> Self {
        Self {
            alpha_o: 0.1,
            alpha_lt: 100.0,
            alpha_fs: 1.0,
            alpha_dh: 0.1,
            alpha_ef: 0.01,
            alpha_ad: 100.0,
            leaderless_time_headway: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("no hypothetical outcomes to regress against")]
    EmptyHypotheticalSet,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The feature row `[r0, r1, r2, r3, r4, 1]` of an outcome.
pub fn reward_features(o: &Outcome, cfg: &RewardConfig) -> [f64; FEATURE_COUNT] {
    let r0 = sigmoid(-(o.lt as f64));
    let r1 = match o.dh {
        None => 1.0,
        Some(_) if o.fs <= 0.0 => {
            log::debug!("degenerate speed: headway treated as satisfied at standstill");
            1.0
        }
        Some(dh) => (dh / (cfg.beta_dh * o.fs)).min(1.0),
    };
    let r2 = (0.05 * (o.fs - cfg.beta_fs)).exp();
    let r3 = (-0.05 * o.fs).exp();
    let r4 = if o.ef <= cfg.beta_ef { 1.0 } else { 0.0 };
    [r0, r1, r2, r3, r4, 1.0]
}

/// Scalar reward `r(o) · p`.
pub fn reward(o: &Outcome, p: &RewardProfile, cfg: &RewardConfig) -> f64 {
    reward_features(o, cfg).iter().zip(p.0.iter()).map(|(f, w)| f * w).sum()
}

/// Time headway `dh / fs`, or `None` when it is unbounded (no leader or
/// standing still).
fn time_headway(o: &Outcome) -> Option<f64> {
    match o.dh {
        Some(dh) if o.fs > 0.0 => Some(dh / o.fs),
        _ => None,
    }
}

/// Weighted distance between two outcomes.
pub fn outcome_distance(o: &Outcome, other: &Outcome, cfg: &OutcomeDistanceConfig) -> f64 {
    let lt = (o.lt - other.lt) as f64;
    let speed_sum = o.fs + other.fs;
    let fs = if speed_sum > 0.0 {
        2.0 * (o.fs - other.fs) / speed_sum
    } else {
        log::debug!("degenerate speed pair: speed term dropped");
        0.0
    };
    let dh = match (time_headway(o), time_headway(other)) {
        (None, None) => 0.0,
        (a, b) => a.unwrap_or(cfg.leaderless_time_headway) - b.unwrap_or(cfg.leaderless_time_headway),
    };
    let ef = o.ef - other.ef;
    let ad = f64::from(u8::from(o.ad)) - f64::from(u8::from(other.ad));
    cfg.alpha_o
        * (cfg.alpha_lt * lt * lt
            + cfg.alpha_fs * fs * fs
            + cfg.alpha_dh * dh * dh
            + cfg.alpha_ef * ef * ef
            + cfg.alpha_ad * ad * ad)
            .sqrt()
}

/// A learned profile with the regression diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub profile: RewardProfile,
    /// Numerical rank of the feature matrix.
    pub rank: usize,
    pub rank_deficient: bool,
    /// `‖A p − b‖₂`.
    pub residual: f64,
    pub candidates: usize,
    /// Regression targets `exp(-d(observed, hypothetical))`.
    pub targets: Vec<f64>,
}

/// Feature matrix and regression targets for one observed decision.
pub fn regression_system(
    observed: &Outcome,
    hypothetical: &[Outcome],
    cfg_r: &RewardConfig,
    cfg_d: &OutcomeDistanceConfig,
) -> (Matrix, Vec<f64>) {
    let rows: Vec<Vec<f64>> = hypothetical
        .iter()
        .map(|h| reward_features(h, cfg_r).to_vec())
        .collect();
    let targets = hypothetical
        .iter()
        .map(|h| (-outcome_distance(observed, h, cfg_d)).exp())
        .collect();
    (Matrix::from_rows(&rows), targets)
}

/// Least-squares reward profile explaining the choice that produced `observed`.
pub fn learn_profile(
    observed: &Outcome,
    hypothetical: &[Outcome],
    cfg_r: &RewardConfig,
    cfg_d: &OutcomeDistanceConfig,
) -> Result<ProfileFit, RewardError> {
    if hypothetical.is_empty() {
        return Err(RewardError::EmptyHypotheticalSet);
    }
    let (a, b) = regression_system(observed, hypothetical, cfg_r, cfg_d);
    Ok(solve_profile(&a, b))
}

/// Solves `A p ≈ b` for a profile; `A` must have six columns.
pub fn solve_profile(a: &Matrix, b: Vec<f64>) -> ProfileFit {
    assert_eq!(a.cols(), FEATURE_COUNT);
    let qr = ColPivQr::new(a);
    let x = qr.solve(&b);
    let residual = residual_norm(a, &x, &b);
    let mut weights = [0.0; FEATURE_COUNT];
    weights.copy_from_slice(&x);
    ProfileFit {
        profile: RewardProfile(weights),
        rank: qr.rank(),
        rank_deficient: !qr.is_full_column_rank(),
        residual,
        candidates: a.rows(),
        targets: b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Outcome {
        Outcome {
            lt: 0,
            fs: 31.3,
            dh: None,
            ef: 0.0,
            ad: true,
        }
    }

    #[test]
    fn anchor_features() {
        let f = reward_features(&base(), &RewardConfig::default());
        assert_eq!(f[0], 0.5);
        assert_eq!(f[1], 1.0);
        assert_eq!(f[2], 1.0);
        assert!((f[3] - (-1.565f64).exp()).abs() < 1e-15);
        assert_eq!(f[4], 1.0);
        assert_eq!(f[5], 1.0);
    }

    #[test]
    fn lane_transition_feature() {
        let o = Outcome { lt: 1, ..base() };
        let f = reward_features(&o, &RewardConfig::default());
        assert!((f[0] - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert!((f[0] - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn two_second_boundary() {
        let o = Outcome {
            dh: Some(62.6),
            ..base()
        };
        assert_eq!(reward_features(&o, &RewardConfig::default())[1], 1.0);
        let close = Outcome {
            dh: Some(31.3),
            ..base()
        };
        assert!((reward_features(&close, &RewardConfig::default())[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn standstill_headway() {
        let o = Outcome {
            fs: 0.0,
            dh: Some(3.0),
            ..base()
        };
        assert_eq!(reward_features(&o, &RewardConfig::default())[1], 1.0);
    }

    #[test]
    fn unsafe_force() {
        let o = Outcome { ef: 1000.0, ..base() };
        assert_eq!(reward_features(&o, &RewardConfig::default())[4], 1.0);
        let o = Outcome { ef: 1000.5, ..base() };
        assert_eq!(reward_features(&o, &RewardConfig::default())[4], 0.0);
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        let o = base();
        assert_eq!(reward(&o, &RewardProfile([0.0; 6]), &cfg), 0.0);
        assert_eq!(reward(&o, &RewardProfile([0.0, 0.0, 0.0, 0.0, 0.0, 2.5]), &cfg), 2.5);
        let all = reward(&o, &RewardProfile([1.0; 6]), &cfg);
        assert!((all - (4.5 + (-1.565f64).exp())).abs() < 1e-12);
        assert!((all - 4.70909).abs() < 1e-5);
    }

    #[test]
    fn distance_anchors() {
        let cfg = OutcomeDistanceConfig::default();
        let o = base();
        assert_eq!(outcome_distance(&o, &o, &cfg), 0.0);
        let lt = Outcome { lt: 1, ..o };
        assert!((outcome_distance(&o, &lt, &cfg) - 1.0).abs() < 1e-12);
        let ad = Outcome { ad: false, ..o };
        assert!((outcome_distance(&o, &ad, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_with_one_leader() {
        let cfg = OutcomeDistanceConfig::default();
        let a = Outcome {
            fs: 20.0,
            dh: Some(20.0),
            ..base()
        };
        let b = Outcome {
            fs: 20.0,
            dh: None,
            ..base()
        };
        // dh/fs = 1 against the substituted 2 s.
        let expected = 0.1 * (0.1f64 * 1.0).sqrt();
        assert!((outcome_distance(&a, &b, &cfg) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_speed_pair() {
        let cfg = OutcomeDistanceConfig::default();
        let a = Outcome { fs: 0.0, ..base() };
        assert_eq!(outcome_distance(&a, &a, &cfg), 0.0);
    }

    #[test]
    fn empty_hypotheticals() {
        let err = learn_profile(
            &base(),
            &[],
            &RewardConfig::default(),
            &OutcomeDistanceConfig::default(),
        );
        assert_eq!(err, Err(RewardError::EmptyHypotheticalSet));
    }

    #[test]
    fn single_hypothetical_is_underdetermined() {
        let o = base();
        let fit = learn_profile(&o, &[o], &RewardConfig::default(), &OutcomeDistanceConfig::default()).unwrap();
        assert_eq!(fit.targets, vec![1.0]);
        assert!(fit.rank_deficient);
        assert_eq!(fit.rank, 1);
        assert!((reward(&o, &fit.profile, &RewardConfig::default()) - 1.0).abs() < 1e-12);
    }
}
