//! Synthetic labelled scenes produced by the simulation stack itself.
//!
//! Every template places an interacting pair `c0`/`c1` (unless it is the
//! independent template) and a number of independent vehicles `i0, i1, …`
//! at least 250 m away from everyone else. All vehicles follow scripted goal
//! schedules; the interacting follower's schedule reacts to the leader's.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Action, PlannerConfig};
use crate::data::{AgentPair, AgentTrack, DataError, Frame, SceneModel, VehicleClass};
use crate::dynamics::{RigidBodyState, VehicleParams};
use crate::geometry::Vec2;
use crate::map::{BranchPoint, LaneMap};
use crate::world::{AgentSetup, SceneWorld};

const LANE_WIDTH: f64 = 3.5;
const CAR_LENGTH: f64 = 4.5;
const CAR_WIDTH: f64 = 1.8;
/// Minimum distance between an independent vehicle and any other vehicle (m).
const INDEPENDENT_SPACING: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    ConvoyBrake,
    Merge,
    Overtake,
    Independent,
}

impl Template {
    pub const ALL: [Template; 4] = [
        Template::ConvoyBrake,
        Template::Merge,
        Template::Overtake,
        Template::Independent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::ConvoyBrake => "convoy-brake",
            Template::Merge => "merge",
            Template::Overtake => "overtake",
            Template::Independent => "independent",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Template::ALL.iter().map(|t| t.name()).collect();
            DataError::UnknownTemplate {
                name: s.to_string(),
                valid: valid.join(", "),
            }
        })
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub template: Template,
    /// Independent vehicles added to the interacting pair. The independent
    /// template uses `independents + 2` vehicles in total.
    #[serde(default = "default_independents")]
    pub independents: usize,
    /// Scene length (s).
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
}

fn default_independents() -> usize {
    2
}
fn default_duration() -> f64 {
    12.0
}
fn default_frame_rate() -> f64 {
    25.0
}

impl ScenarioSpec {
    pub fn new(template: Template) -> Self {
        Self {
            template,
            independents: default_independents(),
            duration: default_duration(),
            frame_rate: default_frame_rate(),
        }
    }
}

fn car(id: &str, x: f64, y: f64, speed: f64, schedule: Vec<(f64, Action)>) -> AgentSetup {
    AgentSetup::new(
        id,
        VehicleParams::from_dimensions(CAR_LENGTH, CAR_WIDTH),
        RigidBodyState::vehicle(CAR_LENGTH, CAR_WIDTH, Vec2::new(x, y), 0.0, Vec2::new(speed, 0.0)),
        schedule,
    )
}

fn lane_y(lane: usize) -> f64 {
    (lane as f64 + 0.5) * LANE_WIDTH
}

/// Goals are due this long after they are set (s).
const LEAD: f64 = 4.0;

fn act(t: f64, speed: f64, lane: usize) -> (f64, Action) {
    (t, Action::new(speed, t + LEAD, lane, t + LEAD))
}

/// Three eastbound lanes; lane 0 is an on-ramp ending at x = 500 when
/// `with_ramp`.
fn road(with_ramp: bool) -> LaneMap {
    let mut map = LaneMap::straight(3, LANE_WIDTH, -2500.0, 8000.0, 0.0, true);
    if with_ramp {
        map.lanes[0].centreline = vec![Vec2::new(-300.0, lane_y(0)), Vec2::new(500.0, lane_y(0))];
        map.branch_points.push(BranchPoint {
            from: 0,
            into: 1,
            s: map.lanes[0].length(),
        });
    }
    map
}

/// Generates one labelled scene. The same spec and seed always give the same
/// scene.
pub fn synth_scene(spec: &ScenarioSpec, seed: u64) -> Result<SceneModel, DataError> {
    if !(spec.duration > 0.0) || !(spec.frame_rate > 0.0) {
        return Err(DataError::Invalid("duration and frame rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (spec.template as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut agents = Vec::new();
    let mut occupied: Vec<f64> = Vec::new();
    let with_ramp = spec.template == Template::Merge;

    match spec.template {
        Template::ConvoyBrake => {
            let v = rng.random_range(25.0..32.0);
            let gap = rng.random_range(18.0..30.0);
            let t_brake = rng.random_range(1.5..3.0);
            let drop = rng.random_range(8.0..14.0);
            let delay = rng.random_range(0.6..1.2);
            let x0 = 0.0;
            let x1 = x0 - gap - CAR_LENGTH;
            agents.push(car(
                "c0",
                x0,
                lane_y(0),
                v,
                vec![act(0.0, v, 0), act(t_brake, v - drop, 0)],
            ));
            agents.push(car(
                "c1",
                x1,
                lane_y(0),
                v,
                vec![
                    act(0.0, v, 0),
                    act(t_brake + delay, v - drop - rng.random_range(0.0..2.0), 0),
                ],
            ));
            occupied.extend([x0, x1]);
        }
        Template::Merge => {
            let v_ramp = rng.random_range(22.0..27.0);
            let v_main = v_ramp + rng.random_range(1.0..4.0);
            let t_merge = rng.random_range(1.0..2.0);
            let behind = rng.random_range(8.0..18.0);
            let delay = rng.random_range(0.6..1.2);
            let x0 = 0.0;
            let x1 = x0 - behind - CAR_LENGTH;
            agents.push(car(
                "c0",
                x0,
                lane_y(0),
                v_ramp,
                vec![act(0.0, v_ramp, 0), act(t_merge, v_ramp, 1)],
            ));
            agents.push(car(
                "c1",
                x1,
                lane_y(1),
                v_main,
                vec![
                    act(0.0, v_main, 1),
                    act(t_merge + delay, v_ramp - rng.random_range(3.0..6.0), 1),
                ],
            ));
            occupied.extend([x0, x1]);
        }
        Template::Overtake => {
            let v = rng.random_range(26.0..31.0);
            let gap = rng.random_range(20.0..30.0);
            let t_slow = rng.random_range(1.5..3.0);
            let drop = rng.random_range(7.0..11.0);
            let delay = rng.random_range(0.8..1.4);
            let x0 = 0.0;
            let x1 = x0 - gap - CAR_LENGTH;
            agents.push(car(
                "c0",
                x0,
                lane_y(0),
                v,
                vec![act(0.0, v, 0), act(t_slow, v - drop, 0)],
            ));
            agents.push(car(
                "c1",
                x1,
                lane_y(0),
                v,
                vec![act(0.0, v, 0), act(t_slow + delay, v + rng.random_range(0.0..3.0), 1)],
            ));
            occupied.extend([x0, x1]);
        }
        Template::Independent => {}
    }

    let independents = if spec.template == Template::Independent {
        spec.independents + 2
    } else {
        spec.independents
    };
    for n in 0..independents {
        // Alternate ahead and behind of everything placed so far.
        let x = if n % 2 == 0 {
            occupied
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                .max(-INDEPENDENT_SPACING)
                + INDEPENDENT_SPACING
        } else {
            occupied
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
                .min(INDEPENDENT_SPACING)
                - INDEPENDENT_SPACING
        };
        occupied.push(x);
        let lane = if with_ramp { 1 + n % 2 } else { (n + 1) % 3 };
        let v = rng.random_range(24.0..32.0);
        let t_change = rng.random_range(1.0..6.0);
        let dv = rng.random_range(4.0..8.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        agents.push(car(
            &format!("i{n}"),
            x,
            lane_y(lane),
            v,
            vec![act(0.0, v, lane), act(t_change, v + dv, lane)],
        ));
    }

    let lanes = Arc::new(road(with_ramp));
    let dt = 1.0 / spec.frame_rate;
    let world = SceneWorld::new(agents, Arc::clone(&lanes), 0.0, dt, &PlannerConfig::default())
        .map_err(|e| DataError::Invalid(format!("scene simulation failed: {e}")))?;
    let rollout = world
        .simulate(spec.duration)
        .map_err(|e| DataError::Invalid(format!("scene simulation failed: {e}")))?;

    let tracks = world
        .agents()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let frames = (0..rollout.slices())
                .map(|k| {
                    let b = rollout.body(i, k);
                    Frame {
                        position: b.position(),
                        velocity: b.velocity(),
                        acceleration: b.linear.acceleration,
                        lane: lanes.nearest(b.position()).unwrap_or(0),
                    }
                })
                .collect();
            AgentTrack {
                agent: a.id.clone(),
                frame_rate: spec.frame_rate,
                start_time: 0.0,
                frames,
                length: CAR_LENGTH,
                width: CAR_WIDTH,
                class: VehicleClass::Car,
            }
        })
        .collect();

    let labels = if spec.template == Template::Independent {
        BTreeSet::new()
    } else {
        BTreeSet::from([AgentPair::new("c0", "c1")])
    };
    Ok(SceneModel {
        name: format!("{}-{seed}", spec.template),
        lane_map: (*lanes).clone(),
        tracks,
        time_range: (0.0, rollout.time_of(rollout.slices() - 1)),
        labels: Some(labels),
    })
}
