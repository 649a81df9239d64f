//! Agent cognition: the controller that turns an action into actuator commands
//! and the planner that picks the reward-maximising action.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{action_distance, ActionDistanceConfig};
use crate::dynamics::{RigidBodyState, VehicleParams};
use crate::map::{Lane, LaneId, LaneMap};
use crate::reward::{reward, Outcome, RewardConfig, RewardProfile};
use crate::world::{SceneWorld, WorldError};

/// A target value to reach by an absolute scene time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal<T> {
    pub target: T,
    /// Seconds, scene time.
    pub time: f64,
}

/// A speed goal paired with a lane goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub speed: Goal<f64>,
    pub lane: Goal<LaneId>,
}

impl Action {
    pub fn new(speed: f64, speed_time: f64, lane: LaneId, lane_time: f64) -> Self {
        Self {
            speed: Goal {
                target: speed,
                time: speed_time,
            },
            lane: Goal {
                target: lane,
                time: lane_time,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlOutput {
    /// N·m, negative values brake.
    pub motor_torque: f64,
    /// Front wheel angle (rad), positive steers left.
    pub steer: f64,
}

/// Proportional-derivative gains.
///
/// The speed loop commands `kp·(v* − v) − kd·v̇` as an acceleration which is
/// converted to motor torque through the vehicle mass and wheel radius. The
/// lateral loop commands a lateral acceleration `−kp·e − kd·ė` from the offset
/// `e` to the target lane centreline; it is converted to a steering angle with
/// the kinematic relation `δ = L·a_y / v²`, so the closed-loop response does
/// not depend on speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlGains {
    pub speed_kp: f64,
    pub speed_kd: f64,
    /// 1/s².
    pub lateral_kp: f64,
    /// 1/s.
    pub lateral_kd: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            speed_kp: 0.8,
            speed_kd: 0.1,
            lateral_kp: 1.5,
            lateral_kd: 2.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneOption {
    Stay,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Simulation horizon τ (s).
    pub horizon: f64,
    /// Offsets added to the current speed (m/s).
    pub speed_deltas: Vec<f64>,
    pub lane_options: Vec<LaneOption>,
    /// Candidate goals are due this long after the decision (s).
    pub goal_lead_time: f64,
    pub gains: ControlGains,
    /// A speed goal counts as accomplished within this band (m/s).
    pub speed_tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            speed_deltas: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            lane_options: vec![LaneOption::Stay, LaneOption::Left, LaneOption::Right],
            goal_lead_time: 4.0,
            gains: ControlGains::default(),
            speed_tolerance: 1.0,
        }
    }
}

/// Lower bound on the speed used when converting lateral acceleration to steer.
const STEER_SPEED_FLOOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("vehicle at ({x:.2}, {y:.2}) is not on any lane")]
    OffMap { x: f64, y: f64 },
    #[error("lane goal {0} does not exist")]
    UnknownLane(LaneId),
}

/// Motor torque and steering that drive `s` towards the goals of `a`.
/// Goals are held once their target time has passed.
pub fn control(
    a: &Action,
    s: &RigidBodyState,
    p: &VehicleParams,
    lanes: &LaneMap,
    cfg: &PlannerConfig,
) -> Result<ControlOutput, ControlError> {
    let pos = s.position();
    if lanes.locate(pos).is_none() {
        return Err(ControlError::OffMap { x: pos.x, y: pos.y });
    }
    let target = lanes
        .lane(a.lane.target)
        .ok_or(ControlError::UnknownLane(a.lane.target))?;
    let g = &cfg.gains;

    let heading = s.heading();
    let v = s.longitudinal_speed();
    let v_dot = s.linear.acceleration.dot(heading);
    let accel = g.speed_kp * (a.speed.target - v) - g.speed_kd * v_dot;
    let motor_torque = (accel * s.linear.mass * p.wheel_radius).clamp(-p.max_motor_torque, p.max_motor_torque);

    let proj = target.project(pos);
    let lane_left = crate::geometry::Vec2::from_angle(proj.heading).perp();
    let offset_rate = s.velocity().dot(lane_left);
    let lateral_accel = -g.lateral_kp * proj.offset - g.lateral_kd * offset_rate;
    let v_steer = v.abs().max(STEER_SPEED_FLOOR);
    let steer = (p.wheelbase * lateral_accel / (v_steer * v_steer)).clamp(-p.max_steer, p.max_steer);

    Ok(ControlOutput { motor_torque, steer })
}

/// The do-nothing action: keep the current speed and lane.
pub fn maintain_action(s: &RigidBodyState, lane: &Lane, t: f64, cfg: &PlannerConfig) -> Action {
    let due = t + cfg.goal_lead_time;
    Action::new(s.speed(), due, lane.id, due)
}

/// Candidate actions: every speed offset crossed with every reachable lane
/// option. Speed targets are floored at zero and duplicates dropped; the
/// maintain action always comes first.
pub fn generate_candidates(s: &RigidBodyState, lane: &Lane, t: f64, cfg: &PlannerConfig) -> Vec<Action> {
    let due = t + cfg.goal_lead_time;
    let speed = s.speed();
    let maintain = maintain_action(s, lane, t, cfg);
    let mut out = vec![maintain];
    let mut lanes = vec![LaneOption::Stay];
    lanes.extend(cfg.lane_options.iter().copied().filter(|o| *o != LaneOption::Stay));
    for option in lanes {
        let target = match option {
            LaneOption::Stay => Some(lane.id),
            LaneOption::Left => lane.left,
            LaneOption::Right => lane.right,
        };
        let Some(target) = target else { continue };
        if option != LaneOption::Stay && !cfg.lane_options.contains(&option) {
            continue;
        }
        for delta in &cfg.speed_deltas {
            let a = Action::new((speed + delta).max(0.0), due, target, due);
            if !out.contains(&a) {
                out.push(a);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("every candidate simulation failed (first failure: {0})")]
    AllCandidatesDiverged(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// One simulated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub action: Action,
    pub outcome: Outcome,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub best: Action,
    /// Candidates whose simulation succeeded, in candidate-list order.
    pub outcomes: Vec<ScoredCandidate>,
    /// Candidates whose simulation failed.
    pub failed: usize,
}

/// Simulates every candidate of `agent` at time `t` in `world` and returns the
/// one maximising the profile's reward. Ties go to the candidate closest to
/// the maintain action, then to the earlier candidate.
pub fn plan(
    world: &SceneWorld,
    agent: &str,
    profile: &RewardProfile,
    t: f64,
    cfg: &PlannerConfig,
    reward_cfg: &RewardConfig,
) -> Result<Plan, PlanError> {
    let (candidates, simulated) = world.simulate_candidates(agent, t, cfg)?;
    let maintain = candidates[0];
    let mut outcomes = Vec::with_capacity(candidates.len());
    let mut first_error = None;
    for (action, result) in candidates.iter().zip(simulated) {
        match result {
            Ok(outcome) => outcomes.push(ScoredCandidate {
                action: *action,
                outcome,
                reward: reward(&outcome, profile, reward_cfg),
            }),
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failed = candidates.len() - outcomes.len();
    let best = select_best(&outcomes, &maintain)
        .ok_or_else(|| PlanError::AllCandidatesDiverged(first_error.unwrap_or_default()))?;
    Ok(Plan { best, outcomes, failed })
}

/// Deterministic argmax over scored candidates.
pub fn select_best(scored: &[ScoredCandidate], maintain: &Action) -> Option<Action> {
    let tie_cfg = ActionDistanceConfig::default();
    let mut best: Option<(&ScoredCandidate, f64)> = None;
    for c in scored {
        let d = action_distance(&c.action, maintain, &tie_cfg);
        best = match best {
            None => Some((c, d)),
            Some((b, bd)) => {
                let tol = 1e-12 * b.reward.abs().max(1.0);
                if c.reward > b.reward + tol || ((c.reward - b.reward).abs() <= tol && d < bd) {
                    Some((c, d))
                } else {
                    Some((b, bd))
                }
            }
        };
    }
    best.map(|(c, _)| c.action)
}

/// Simulates candidates in parallel, preserving list order.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn highway() -> LaneMap {
        LaneMap::straight(3, 3.5, -100.0, 5000.0, 0.0, true)
    }

    fn car(lane: usize, speed: f64) -> RigidBodyState {
        RigidBodyState::vehicle(
            4.5,
            1.8,
            Vec2::new(0.0, 1.75 + 3.5 * lane as f64),
            0.0,
            Vec2::new(speed, 0.0),
        )
    }

    #[test]
    fn zero_error_gives_zero_output() {
        let map = highway();
        let s = car(1, 25.0);
        let p = VehicleParams::from_dimensions(4.5, 1.8);
        let a = Action::new(25.0, 4.0, 1, 4.0);
        let out = control(&a, &s, &p, &map, &PlannerConfig::default()).unwrap();
        assert!(out.motor_torque.abs() < 1e-9);
        assert!(out.steer.abs() < 1e-9);
    }

    #[test]
    fn below_target_accelerates() {
        let map = highway();
        let p = VehicleParams::from_dimensions(4.5, 1.8);
        let a = Action::new(30.0, 4.0, 1, 4.0);
        let out = control(&a, &car(1, 25.0), &p, &map, &PlannerConfig::default()).unwrap();
        assert!(out.motor_torque > 0.0);
        let brake = Action::new(20.0, 4.0, 1, 4.0);
        let out = control(&brake, &car(1, 25.0), &p, &map, &PlannerConfig::default()).unwrap();
        assert!(out.motor_torque < 0.0);
    }

    #[test]
    fn lane_goal_to_the_left_steers_left() {
        let map = highway();
        let p = VehicleParams::from_dimensions(4.5, 1.8);
        let a = Action::new(25.0, 4.0, 2, 4.0);
        let out = control(&a, &car(1, 25.0), &p, &map, &PlannerConfig::default()).unwrap();
        assert!(out.steer > 0.0);
        let a = Action::new(25.0, 4.0, 0, 4.0);
        let out = control(&a, &car(1, 25.0), &p, &map, &PlannerConfig::default()).unwrap();
        assert!(out.steer < 0.0);
    }

    #[test]
    fn outputs_are_clamped() {
        let map = highway();
        let p = VehicleParams::from_dimensions(4.5, 1.8);
        let a = Action::new(80.0, 4.0, 2, 4.0);
        let out = control(&a, &car(0, 1.0), &p, &map, &PlannerConfig::default()).unwrap();
        assert!(out.motor_torque <= p.max_motor_torque);
        assert!(out.steer.abs() <= p.max_steer);
    }

    #[test]
    fn off_map_is_an_error() {
        let map = highway();
        let p = VehicleParams::from_dimensions(4.5, 1.8);
        let mut s = car(1, 25.0);
        s.linear.position.y = 40.0;
        let a = Action::new(25.0, 4.0, 1, 4.0);
        assert!(matches!(
            control(&a, &s, &p, &map, &PlannerConfig::default()),
            Err(ControlError::OffMap { .. })
        ));
    }

    #[test]
    fn candidate_counts() {
        let map = highway();
        let cfg = PlannerConfig::default();
        let middle = generate_candidates(&car(1, 25.0), &map.lanes[1], 0.0, &cfg);
        assert_eq!(middle.len(), 15);
        let leftmost = generate_candidates(&car(2, 25.0), &map.lanes[2], 0.0, &cfg);
        assert_eq!(leftmost.len(), 10);
        assert!(leftmost.iter().all(|a| a.lane.target != 3));
        assert_eq!(middle[0], maintain_action(&car(1, 25.0), &map.lanes[1], 0.0, &cfg));
        assert!(middle.iter().all(|a| a.speed.time == 4.0 && a.lane.time == 4.0));
    }

    #[test]
    fn candidate_speeds_floored() {
        let map = highway();
        let cfg = PlannerConfig::default();
        let c = generate_candidates(&car(0, 2.0), &map.lanes[0], 1.0, &cfg);
        assert!(c.iter().all(|a| a.speed.target >= 0.0));
        assert!(c.iter().any(|a| a.speed.target == 0.0));
        assert!(c.iter().any(|a| a.speed.target == 2.0 && a.lane.target == 0));
    }
}
