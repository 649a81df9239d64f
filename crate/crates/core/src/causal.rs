//! Causal discovery between agent actions.
//!
//! Actions are extracted from observed tracks as time-action pairs. For a
//! candidate cause `(C, t_c, a_C)` and effect `(A, t_e, a_A)` with `t_c < t_e`
//! the affected agent's reward profile is learned from its observed decision,
//! and the agent is then planned at `t_e` in two simulated worlds started at
//! `t_c`: the factual one and a twin in which `C` keeps its previous action.
//! The cause is deemed necessary when the two planned actions differ by more
//! than a threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{plan, Action, PlanError};
use crate::config::AnalysisConfig;
use crate::data::{AgentPair, AgentTrack, SceneModel};
use crate::dynamics::{environment_forces, headway, VehicleParams};
use crate::map::{LaneMap, Side};
use crate::reward::{learn_profile, Outcome, ProfileFit, RewardError, RewardProfile};
use crate::world::{AgentId, AgentSetup, SceneWorld, WorldError};

/// Times closer than this are considered equal (s).
const TIME_EPS: f64 = 1e-6;

/// An action taken by an agent at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeActionPair {
    pub agent: AgentId,
    pub t_a: f64,
    pub action: Action,
}

impl TimeActionPair {
    pub fn new(agent: impl Into<AgentId>, t_a: f64, action: Action) -> Self {
        Self {
            agent: agent.into(),
            t_a,
            action,
        }
    }
}

/// Weights of the action distance and the causal threshold `λ_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionDistanceConfig {
    pub alpha_a: f64,
    /// Contribution of differing lane targets.
    pub alpha_vl: f64,
    /// A link is causal when the distance is strictly greater than this.
    pub threshold: f64,
}

impl Default for ActionDistanceConfig {
    fn default() -> Self {
        Self {
            alpha_a: 0.1,
            alpha_vl: 10.0,
            threshold: 0.0,
        }
    }
}

/// Distance between two actions: relative speed-target difference, goal time
/// differences and a fixed penalty for differing lane targets.
pub fn action_distance(a: &Action, b: &Action, cfg: &ActionDistanceConfig) -> f64 {
    let speed_sum = a.speed.target + b.speed.target;
    let speed = if speed_sum > 0.0 {
        2.0 * (a.speed.target - b.speed.target) / speed_sum
    } else {
        log::debug!("action distance with zero speed targets; speed term dropped");
        0.0
    };
    let lane = if a.lane.target == b.lane.target {
        0.0
    } else {
        cfg.alpha_vl
    };
    let dts = a.speed.time - b.speed.time;
    let dtl = a.lane.time - b.lane.time;
    cfg.alpha_a * (speed * speed + dts * dts + lane + dtl * dtl).sqrt()
}

/// Thresholds used to segment a track into actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// Longitudinal acceleration separating cruising from speed changes (m/s²).
    pub acceleration_threshold: f64,
    /// Phases shorter than this are absorbed by their neighbours (s).
    pub hysteresis: f64,
    /// Lateral speed towards a new lane that marks the start of a lane change (m/s).
    pub lateral_speed_threshold: f64,
    /// Consecutive actions whose speed targets differ by less than this and
    /// share a lane target are merged (m/s).
    pub merge_speed_tolerance: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            acceleration_threshold: 0.3,
            hysteresis: 0.5,
            lateral_speed_threshold: 0.2,
            merge_speed_tolerance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CausalError {
    #[error("track of agent {0} has fewer than two frames")]
    TrackTooShort(AgentId),
    #[error("agent {0} is not in the scene")]
    UnknownAgent(AgentId),
    #[error("agent {agent} has no action at t = {t}")]
    NoActionAt { agent: AgentId, t: f64 },
    #[error("agent {agent} is not observed at t = {t}")]
    NotObserved { agent: AgentId, t: f64 },
    #[error("planning failed for agent {agent} at t = {t}: {source}")]
    PlanningFailed {
        agent: AgentId,
        t: f64,
        #[source]
        source: PlanError,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("cause at t = {cause} does not precede effect at t = {effect}")]
    NotPrecedent { cause: f64, effect: f64 },
    #[error("cause and effect belong to the same agent {0}")]
    SameAgent(AgentId),
}

/// Longitudinal regime of a track segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Cruise,
    Accelerate,
    Decelerate,
}

#[derive(Debug, Clone, Copy)]
struct Phase {
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, Copy)]
struct LaneChange {
    start: usize,
    crossing: usize,
    end: usize,
    to: usize,
}

fn longitudinal_acceleration(track: &AgentTrack, i: usize) -> f64 {
    let f = &track.frames[i];
    match f.velocity.normalized() {
        Some(dir) if f.velocity.norm() > 0.1 => f.acceleration.dot(dir),
        _ => f.acceleration.norm() * f.acceleration.dot(f.velocity).signum(),
    }
}

fn phases(track: &AgentTrack, cfg: &ExtractionConfig) -> Vec<Phase> {
    let regime = |i: usize| {
        let a = longitudinal_acceleration(track, i);
        if a > cfg.acceleration_threshold {
            Regime::Accelerate
        } else if a < -cfg.acceleration_threshold {
            Regime::Decelerate
        } else {
            Regime::Cruise
        }
    };
    let mut runs: Vec<(Regime, usize, usize)> = Vec::new();
    for i in 0..track.frames.len() {
        let r = regime(i);
        match runs.last_mut() {
            Some((last, _, end)) if *last == r => *end = i,
            _ => runs.push((r, i, i)),
        }
    }
    // Absorb short runs into their predecessor (the first run into its
    // successor), shortest first, until every run lasts the hysteresis.
    let min_frames = (cfg.hysteresis * track.frame_rate).round().max(1.0) as usize;
    loop {
        let short = runs
            .iter()
            .enumerate()
            .filter(|(_, (_, s, e))| e - s + 1 < min_frames)
            .min_by_key(|(i, (_, s, e))| (e - s, *i))
            .map(|(i, _)| i);
        let Some(i) = short else { break };
        if runs.len() == 1 {
            break;
        }
        let (_, s, e) = runs[i];
        if i == 0 {
            runs[1].1 = s;
        } else {
            runs[i - 1].2 = e;
        }
        runs.remove(i);
        let mut merged: Vec<(Regime, usize, usize)> = Vec::with_capacity(runs.len());
        for r in runs.drain(..) {
            match merged.last_mut() {
                Some(last) if last.0 == r.0 => last.2 = r.2,
                _ => merged.push(r),
            }
        }
        runs = merged;
    }
    runs.into_iter().map(|(_, start, end)| Phase { start, end }).collect()
}

fn lane_changes(track: &AgentTrack, lanes: &LaneMap, cfg: &ExtractionConfig) -> Vec<LaneChange> {
    let frames = &track.frames;
    let mut out = Vec::new();
    for i in 1..frames.len() {
        let (from, to) = (frames[i - 1].lane, frames[i].lane);
        if from == to {
            continue;
        }
        let Some(lane) = lanes.lane(from) else { continue };
        let sign = match lanes.side_of(from, to) {
            Some(Side::Left) => 1.0,
            Some(Side::Right) => -1.0,
            None => continue,
        };
        let lateral = |k: usize| {
            let normal = lane.direction_at(frames[k].position).perp();
            sign * frames[k].velocity.dot(normal)
        };
        let mut start = i - 1;
        while start > 0 && lateral(start) > cfg.lateral_speed_threshold {
            start -= 1;
        }
        let mut end = i;
        while end + 1 < frames.len() && lateral(end) > cfg.lateral_speed_threshold {
            end += 1;
        }
        out.push(LaneChange {
            start,
            crossing: i,
            end,
            to,
        });
    }
    out
}

/// Segments a track into time-action pairs.
///
/// Longitudinal phases come from thresholding the acceleration along the
/// velocity with hysteresis; each phase sets a speed goal equal to the speed
/// at its end. Lane changes start at the last frame before the lateral speed
/// towards the new lane exceeds its threshold and set a lane goal due when
/// the lateral motion dies down. Consecutive equivalent actions are merged, so
/// a steady track yields a single action at its first frame.
pub fn extract_actions(
    track: &AgentTrack,
    lanes: &LaneMap,
    cfg: &ExtractionConfig,
) -> Result<Vec<TimeActionPair>, CausalError> {
    if track.frames.len() < 2 {
        return Err(CausalError::TrackTooShort(track.agent.clone()));
    }
    let phases = phases(track, cfg);
    let changes = lane_changes(track, lanes, cfg);
    let speed_at = |i: usize| track.frames[i].velocity.norm();

    let mut events: BTreeSet<usize> = BTreeSet::from([0]);
    events.extend(phases.iter().map(|p| p.start));
    events.extend(changes.iter().map(|c| c.start));

    let mut out: Vec<TimeActionPair> = Vec::new();
    for &e in &events {
        let phase = phases
            .iter()
            .find(|p| p.start <= e && e <= p.end)
            .expect("phases cover the track");
        let speed_time = track.time_of(phase.end);
        let (lane, lane_time) = match changes.iter().find(|c| c.start <= e && e < c.crossing) {
            Some(c) => (c.to, track.time_of(c.end)),
            None => (track.frames[e].lane, speed_time),
        };
        let action = Action::new(speed_at(phase.end), speed_time, lane, lane_time);
        if let Some(prev) = out.last() {
            if prev.action.lane.target == action.lane.target
                && (prev.action.speed.target - action.speed.target).abs() < cfg.merge_speed_tolerance
            {
                continue;
            }
        }
        out.push(TimeActionPair::new(track.agent.clone(), track.time_of(e), action));
    }
    Ok(out)
}

/// Coarse description of an action relative to a reference action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manoeuvre {
    Accelerate,
    SlowDown,
    ChangeLaneLeft,
    ChangeLaneRight,
    Maintain,
}

/// Speed-target differences below this are not worth a verb (m/s).
const SPEED_VERB_TOLERANCE: f64 = 0.5;

impl Manoeuvre {
    /// How `action` differs from `reference`.
    pub fn between(reference: &Action, action: &Action, lanes: &LaneMap) -> Self {
        if action.lane.target != reference.lane.target {
            return match lanes.side_of(reference.lane.target, action.lane.target) {
                Some(Side::Right) => Manoeuvre::ChangeLaneRight,
                _ => Manoeuvre::ChangeLaneLeft,
            };
        }
        let dv = action.speed.target - reference.speed.target;
        if dv > SPEED_VERB_TOLERANCE {
            Manoeuvre::Accelerate
        } else if dv < -SPEED_VERB_TOLERANCE {
            Manoeuvre::SlowDown
        } else {
            Manoeuvre::Maintain
        }
    }

    pub fn verb(self) -> &'static str {
        match self {
            Manoeuvre::Accelerate => "accelerate",
            Manoeuvre::SlowDown => "slow down",
            Manoeuvre::ChangeLaneLeft => "change lane to the left",
            Manoeuvre::ChangeLaneRight => "change lane to the right",
            Manoeuvre::Maintain => "maintain its course",
        }
    }

    pub fn gerund(self) -> &'static str {
        match self {
            Manoeuvre::Accelerate => "accelerating",
            Manoeuvre::SlowDown => "slowing down",
            Manoeuvre::ChangeLaneLeft => "changing lane to the left",
            Manoeuvre::ChangeLaneRight => "changing lane to the right",
            Manoeuvre::Maintain => "maintaining its course",
        }
    }
}

/// Motive phrase for each non-bias reward feature.
pub const MOTIVES: [&str; 5] = [
    "lane progress",
    "safe headway",
    "higher speed",
    "lower speed",
    "collision avoidance",
];

/// Motive of the largest-magnitude non-bias weight; ties go to the lower index.
pub fn top_motive(profile: &RewardProfile) -> &'static str {
    let w = profile.weights();
    let mut best = 0;
    for i in 1..MOTIVES.len() {
        if w[i].abs() > w[best].abs() {
            best = i;
        }
    }
    MOTIVES[best]
}

/// A cause action found necessary for an effect action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalLink {
    pub cause: TimeActionPair,
    pub effect: TimeActionPair,
    /// Distance between the two planned actions.
    pub distance: f64,
    pub factual_plan: Action,
    pub counterfactual_plan: Action,
    /// What the cause agent did relative to its previous action.
    pub cause_manoeuvre: Manoeuvre,
    /// What the effect agent planned relative to its counterfactual plan.
    pub effect_manoeuvre: Manoeuvre,
}

/// One-sentence explanation of a link.
pub fn explain(link: &CausalLink, profile: &RewardProfile) -> String {
    let a = &link.effect.agent;
    format!(
        "{} {} caused {a} to {}, as {a} wishes to prioritise {}",
        link.cause.agent,
        link.cause_manoeuvre.gerund(),
        link.effect_manoeuvre.verb(),
        top_motive(profile)
    )
}

/// Actions as vertices, causal links as edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CausalGraph {
    pub vertices: Vec<TimeActionPair>,
    pub edges: Vec<CausalLink>,
}

impl CausalGraph {
    /// Undirected agent pairs joined by at least one link.
    pub fn agent_adjacency(&self) -> BTreeSet<AgentPair> {
        self.edges
            .iter()
            .map(|e| AgentPair::new(e.cause.agent.clone(), e.effect.agent.clone()))
            .collect()
    }
}

/// A learned profile for one observed decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectProfile {
    pub effect: TimeActionPair,
    pub observed: Outcome,
    pub fit: ProfileFit,
    /// Candidates whose simulation failed and were left out.
    pub failed_candidates: usize,
}

/// Result of testing one cause-effect pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PairResult {
    /// Both worlds were planned in.
    Tested {
        distance: f64,
        factual_plan: Action,
        counterfactual_plan: Action,
    },
    /// The cause repeats the agent's previous action, so the twin world is
    /// the factual world and the distance is zero.
    Unchanged,
    Failed {
        error: String,
    },
}

impl PairResult {
    pub fn distance(&self) -> Option<f64> {
        match self {
            PairResult::Tested { distance, .. } => Some(*distance),
            PairResult::Unchanged => Some(0.0),
            PairResult::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub cause: TimeActionPair,
    pub effect: TimeActionPair,
    pub result: PairResult,
}

/// Everything computed by one discovery pass. Distances are kept so the graph
/// can be re-thresholded without simulating again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub scene: String,
    pub agents: Vec<AgentId>,
    pub actions: Vec<TimeActionPair>,
    pub profiles: Vec<EffectProfile>,
    pub tests: Vec<PairTest>,
    /// Agents whose actions could not be extracted, and why.
    pub extraction_failures: BTreeMap<AgentId, String>,
    #[serde(skip)]
    lanes: Arc<LaneMap>,
    #[serde(skip)]
    previous: BTreeMap<AgentId, Vec<TimeActionPair>>,
}

impl Discovery {
    /// Graph of the links whose distance exceeds `threshold`.
    pub fn graph(&self, threshold: f64) -> CausalGraph {
        let edges = self
            .tests
            .iter()
            .filter_map(|t| match &t.result {
                PairResult::Tested {
                    distance,
                    factual_plan,
                    counterfactual_plan,
                } if *distance > threshold => Some(CausalLink {
                    cause: t.cause.clone(),
                    effect: t.effect.clone(),
                    distance: *distance,
                    factual_plan: *factual_plan,
                    counterfactual_plan: *counterfactual_plan,
                    cause_manoeuvre: Manoeuvre::between(
                        &previous_action(&self.previous, &t.cause).action,
                        &t.cause.action,
                        &self.lanes,
                    ),
                    effect_manoeuvre: Manoeuvre::between(counterfactual_plan, factual_plan, &self.lanes),
                }),
                _ => None,
            })
            .collect();
        CausalGraph {
            vertices: self.actions.clone(),
            edges,
        }
    }

    pub fn profile_for(&self, effect: &TimeActionPair) -> Option<&EffectProfile> {
        self.profiles.iter().find(|p| &p.effect == effect)
    }

    /// Explanation for every link of `graph`.
    pub fn explanations(&self, graph: &CausalGraph) -> Vec<String> {
        graph
            .edges
            .iter()
            .map(|l| {
                let profile = self
                    .profile_for(&l.effect)
                    .map(|p| p.fit.profile)
                    .unwrap_or(RewardProfile([0.0; 6]));
                explain(l, &profile)
            })
            .collect()
    }
}

/// The action preceding `pair` in its agent's list, or `pair` itself when it
/// is the first.
fn previous_action<'a>(
    actions: &'a BTreeMap<AgentId, Vec<TimeActionPair>>,
    pair: &'a TimeActionPair,
) -> &'a TimeActionPair {
    actions
        .get(&pair.agent)
        .and_then(|list| {
            let idx = list.iter().position(|a| a == pair)?;
            Some(&list[idx.saturating_sub(1)])
        })
        .unwrap_or(pair)
}

/// A scene prepared for causal analysis: extracted actions and a factory for
/// simulated worlds.
#[derive(Debug, Clone)]
pub struct SceneAnalysis<'a> {
    pub scene: &'a SceneModel,
    pub cfg: &'a AnalysisConfig,
    lanes: Arc<LaneMap>,
    actions: BTreeMap<AgentId, Vec<TimeActionPair>>,
    failures: BTreeMap<AgentId, String>,
}

impl<'a> SceneAnalysis<'a> {
    pub fn new(scene: &'a SceneModel, cfg: &'a AnalysisConfig) -> Self {
        let mut actions = BTreeMap::new();
        let mut failures = BTreeMap::new();
        for track in &scene.tracks {
            match extract_actions(track, &scene.lane_map, &cfg.extraction) {
                Ok(list) => {
                    actions.insert(track.agent.clone(), list);
                }
                Err(e) => {
                    failures.insert(track.agent.clone(), e.to_string());
                }
            }
        }
        Self {
            scene,
            cfg,
            lanes: Arc::new(scene.lane_map.clone()),
            actions,
            failures,
        }
    }

    pub fn actions(&self) -> &BTreeMap<AgentId, Vec<TimeActionPair>> {
        &self.actions
    }

    /// All actions ordered by time, then agent.
    pub fn all_actions(&self) -> Vec<TimeActionPair> {
        let mut all: Vec<TimeActionPair> = self.actions.values().flatten().cloned().collect();
        all.sort_by(|a, b| a.t_a.total_cmp(&b.t_a).then_with(|| a.agent.cmp(&b.agent)));
        all
    }

    pub fn action_of(&self, agent: &str, t: f64) -> Result<&TimeActionPair, CausalError> {
        if self.scene.track(agent).is_none() {
            return Err(CausalError::UnknownAgent(agent.to_string()));
        }
        self.actions
            .get(agent)
            .and_then(|list| {
                list.iter()
                    .find(|a| (a.t_a - t).abs() < TIME_EPS.max(0.5 / self.frame_rate(agent)))
            })
            .ok_or(CausalError::NoActionAt {
                agent: agent.to_string(),
                t,
            })
    }

    fn frame_rate(&self, agent: &str) -> f64 {
        self.scene.track(agent).map_or(25.0, |t| t.frame_rate)
    }

    /// Factual world started at `t` from the observed states of every agent
    /// observed at `t`; agents follow their extracted action schedules.
    pub fn world_at(&self, t: f64) -> Result<SceneWorld, CausalError> {
        let agents = self
            .scene
            .tracks
            .iter()
            .filter_map(|track| {
                let body = track.body_at(t, &self.lanes)?;
                let schedule: Vec<(f64, Action)> = self
                    .actions
                    .get(&track.agent)?
                    .iter()
                    .map(|a| (a.t_a, a.action))
                    .collect();
                Some(AgentSetup::new(
                    track.agent.clone(),
                    VehicleParams::from_dimensions(track.length, track.width),
                    body,
                    schedule,
                ))
            })
            .collect();
        Ok(SceneWorld::new(
            agents,
            Arc::clone(&self.lanes),
            t,
            self.cfg.time_step,
            &self.cfg.planner,
        )?)
    }

    /// Twin world of `world` in which the cause agent keeps the action it
    /// had before `cause`.
    pub fn counterfactual_world(&self, world: &SceneWorld, cause: &TimeActionPair) -> Result<SceneWorld, CausalError> {
        let previous = previous_action(&self.actions, cause);
        Ok(world.with_action(&cause.agent, cause.t_a, previous.action)?)
    }

    /// Outcome of the effect agent's observed behaviour over the planning
    /// horizon following `effect`.
    pub fn observed_outcome(&self, effect: &TimeActionPair) -> Result<Outcome, CausalError> {
        let track = self
            .scene
            .track(&effect.agent)
            .ok_or_else(|| CausalError::UnknownAgent(effect.agent.clone()))?;
        let not_observed = || CausalError::NotObserved {
            agent: effect.agent.clone(),
            t: effect.t_a,
        };
        let first = track.frame_index(effect.t_a).ok_or_else(not_observed)?;
        let end_time = effect.t_a + self.cfg.planner.horizon;
        let last = track.frame_index(end_time).unwrap_or(track.frames.len() - 1).max(first);
        let params = VehicleParams::from_dimensions(track.length, track.width);

        let others_at = |t: f64| -> Vec<_> {
            self.scene
                .tracks
                .iter()
                .filter(|o| o.agent != track.agent)
                .filter_map(|o| o.body_at(t, &self.lanes))
                .collect()
        };
        let mut lt = 0;
        let mut ef: f64 = 0.0;
        for i in first..=last {
            if i > first && track.frames[i].lane != track.frames[i - 1].lane {
                lt += 1;
            }
            let body = track.body(i, &self.lanes);
            ef = ef.max(environment_forces(&body, &params, &others_at(track.time_of(i))).magnitude);
        }
        let body = track.body(last, &self.lanes);
        let t_last = track.time_of(last);
        let lane_id = track.frames[last].lane;
        let dh = self.lanes.lane(lane_id).and_then(|lane| {
            others_at(t_last)
                .iter()
                .filter_map(|o| headway(&body, o, lane))
                .min_by(f64::total_cmp)
        });
        let fs = body.speed();
        Ok(Outcome {
            lt,
            fs,
            dh,
            ef,
            ad: lane_id == effect.action.lane.target
                && (fs - effect.action.speed.target).abs() <= self.cfg.planner.speed_tolerance,
        })
    }

    /// Learns the profile explaining `effect` from the simulated outcomes of
    /// the alternatives its agent had.
    pub fn learn_effect_profile(&self, effect: &TimeActionPair) -> Result<EffectProfile, CausalError> {
        let observed = self.observed_outcome(effect)?;
        let world = self.world_at(effect.t_a)?;
        let (world, mut candidates) = world.candidates(&effect.agent, effect.t_a, &self.cfg.planner)?;
        if self.cfg.include_observed_action && !candidates.contains(&effect.action) {
            candidates.push(effect.action);
        }
        let results = world.simulate_actions(&effect.agent, &candidates, &self.cfg.planner)?;
        let total = results.len();
        let hypothetical: Vec<Outcome> = results.into_iter().filter_map(Result::ok).collect();
        let fit = learn_profile(&observed, &hypothetical, &self.cfg.reward, &self.cfg.outcome_distance)?;
        Ok(EffectProfile {
            effect: effect.clone(),
            observed,
            failed_candidates: total - hypothetical.len(),
            fit,
        })
    }

    fn plan_in(&self, world: &SceneWorld, agent: &str, profile: &RewardProfile, t: f64) -> Result<Action, CausalError> {
        plan(world, agent, profile, t, &self.cfg.planner, &self.cfg.reward)
            .map(|p| p.best)
            .map_err(|source| CausalError::PlanningFailed {
                agent: agent.to_string(),
                t,
                source,
            })
    }

    /// Plans the effect agent in the factual and twin worlds and measures how
    /// far apart the two plans are.
    pub fn test_pair(
        &self,
        cause: &TimeActionPair,
        effect: &TimeActionPair,
        profile: &RewardProfile,
    ) -> Result<PairResult, CausalError> {
        if cause.agent == effect.agent {
            return Err(CausalError::SameAgent(cause.agent.clone()));
        }
        if cause.t_a >= effect.t_a - TIME_EPS {
            return Err(CausalError::NotPrecedent {
                cause: cause.t_a,
                effect: effect.t_a,
            });
        }
        if previous_action(&self.actions, cause).action == cause.action {
            return Ok(PairResult::Unchanged);
        }
        let factual = self.world_at(cause.t_a)?;
        factual.agent_index(&effect.agent)?;
        let twin = self.counterfactual_world(&factual, cause)?;
        let factual_plan = self.plan_in(&factual, &effect.agent, profile, effect.t_a)?;
        let counterfactual_plan = self.plan_in(&twin, &effect.agent, profile, effect.t_a)?;
        Ok(PairResult::Tested {
            distance: action_distance(&factual_plan, &counterfactual_plan, &self.cfg.action_distance),
            factual_plan,
            counterfactual_plan,
        })
    }

    /// Ordered (cause, effect) pairs of distinct agents with the cause
    /// strictly first.
    pub fn candidate_pairs(&self) -> Vec<(TimeActionPair, TimeActionPair)> {
        let all = self.all_actions();
        let mut pairs = Vec::new();
        for c in &all {
            for e in &all {
                if c.agent != e.agent && c.t_a < e.t_a - TIME_EPS {
                    pairs.push((c.clone(), e.clone()));
                }
            }
        }
        pairs
    }
}

/// Full test of one pair: learns the effect profile, plans in both worlds and
/// applies the threshold.
pub fn test_causal_link(
    scene: &SceneModel,
    cause: &TimeActionPair,
    effect: &TimeActionPair,
    cfg: &AnalysisConfig,
) -> Result<Option<CausalLink>, CausalError> {
    let analysis = SceneAnalysis::new(scene, cfg);
    let profile = analysis.learn_effect_profile(effect)?;
    let result = analysis.test_pair(cause, effect, &profile.fit.profile)?;
    match result {
        PairResult::Tested {
            distance,
            factual_plan,
            counterfactual_plan,
        } if distance > cfg.action_distance.threshold => Ok(Some(CausalLink {
            cause: cause.clone(),
            effect: effect.clone(),
            distance,
            factual_plan,
            counterfactual_plan,
            cause_manoeuvre: Manoeuvre::between(
                &previous_action(&analysis.actions, cause).action,
                &cause.action,
                &scene.lane_map,
            ),
            effect_manoeuvre: Manoeuvre::between(&counterfactual_plan, &factual_plan, &scene.lane_map),
        })),
        _ => Ok(None),
    }
}

/// Tests every temporally ordered cross-agent pair of actions in `scene`.
/// Failures are recorded per pair; the result is deterministic.
pub fn discover(scene: &SceneModel, cfg: &AnalysisConfig) -> Discovery {
    let analysis = SceneAnalysis::new(scene, cfg);
    let pairs = analysis.candidate_pairs();

    // Effects that need a profile: those of pairs whose twin world differs.
    let mut effects: Vec<TimeActionPair> = Vec::new();
    for (c, e) in &pairs {
        if previous_action(&analysis.actions, c).action != c.action && !effects.contains(e) {
            effects.push(e.clone());
        }
    }
    let learned: Vec<(TimeActionPair, Result<EffectProfile, CausalError>)> = effects
        .par_iter()
        .map(|e| (e.clone(), analysis.learn_effect_profile(e)))
        .collect();

    let tests: Vec<PairTest> = pairs
        .par_iter()
        .map(|(c, e)| {
            let result = if previous_action(&analysis.actions, c).action == c.action {
                PairResult::Unchanged
            } else {
                match learned.iter().find(|(x, _)| x == e).map(|(_, r)| r) {
                    Some(Ok(p)) => analysis
                        .test_pair(c, e, &p.fit.profile)
                        .unwrap_or_else(|err| PairResult::Failed { error: err.to_string() }),
                    Some(Err(err)) => PairResult::Failed {
                        error: format!("profile learning failed: {err}"),
                    },
                    None => PairResult::Failed {
                        error: "no profile".into(),
                    },
                }
            };
            PairTest {
                cause: c.clone(),
                effect: e.clone(),
                result,
            }
        })
        .collect();

    Discovery {
        scene: scene.name.clone(),
        agents: scene.tracks.iter().map(|t| t.agent.clone()).collect(),
        actions: analysis.all_actions(),
        profiles: learned.into_iter().filter_map(|(_, r)| r.ok()).collect(),
        tests,
        extraction_failures: analysis.failures.clone(),
        lanes: Arc::clone(&analysis.lanes),
        previous: analysis.actions.clone(),
    }
}
