//! Scene-level structural causal model.
//!
//! Every agent contributes the same set of variables, keyed by
//! `("<agent>.<module>", <name>)`:
//!
//! | variable                 | parents (slice)                              |
//! |--------------------------|----------------------------------------------|
//! | `controller/input`       | none: the agent's scheduled action at `t`    |
//! | `controller/output`      | input, body (t)                              |
//! | `vehicle/drive`          | output, body (t)                             |
//! | `entity/disturbance`     | exogenous scalar force along the heading     |
//! | `entity/env`             | disturbance, own and other bodies (t)        |
//! | `link/headway`           | own and other bodies (t)                     |
//! | `body/state`             | body, drive, env (t − 1)                     |
//!
//! The body at slice 0 is the agent's initial state, and the forces computed
//! at slice `t` move the body to slice `t + 1`. Replacing an agent's plan is a
//! `do()` on its `controller/input`.

use std::sync::Arc;

use thiserror::Error;

use crate::agent::{control, generate_candidates, par_map, Action, ControlOutput, PlannerConfig};
use crate::dynamics::{
    environment_forces, headway, step_rigid_body, vehicle_forces, EnvForce, RigidBodyState, VehicleParams,
};
use crate::geometry::Vec2;
use crate::map::{LaneId, LaneMap};
use crate::reward::Outcome;
use crate::scm::{
    build_model, equation, BuildError, CausalModel, Distribution, EquationError, EquationFn, EvalContext,
    ExogenousSpec, InterveneError, Intervention, ParentRef, Rollout, SimulateError, SliceSpan, SlotValue,
    StructuralEquation, VarKey,
};

pub type AgentId = String;

/// Value of any scene variable.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneValue {
    Scalar(f64),
    Action(Action),
    Control(ControlOutput),
    Wrench { force: Vec2, torque: f64 },
    Env(EnvForce),
    Headway(Option<f64>),
    Body(RigidBodyState),
}

impl SlotValue for SceneValue {
    fn is_finite(&self) -> bool {
        match self {
            SceneValue::Scalar(x) => x.is_finite(),
            SceneValue::Action(a) => a.speed.target.is_finite() && a.speed.time.is_finite() && a.lane.time.is_finite(),
            SceneValue::Control(c) => c.motor_torque.is_finite() && c.steer.is_finite(),
            SceneValue::Wrench { force, torque } => force.is_finite() && torque.is_finite(),
            SceneValue::Env(e) => e.force.is_finite() && e.torque.is_finite() && e.magnitude.is_finite(),
            SceneValue::Headway(h) => h.is_none_or(f64::is_finite),
            SceneValue::Body(b) => b.is_finite(),
        }
    }

    fn from_scalar(x: f64) -> Option<Self> {
        Some(SceneValue::Scalar(x))
    }
}

fn mismatch(expected: &str) -> EquationError {
    EquationError(format!("expected a {expected} value"))
}

impl SceneValue {
    fn scalar(&self) -> Result<f64, EquationError> {
        match self {
            SceneValue::Scalar(x) => Ok(*x),
            _ => Err(mismatch("scalar")),
        }
    }

    fn action(&self) -> Result<&Action, EquationError> {
        match self {
            SceneValue::Action(a) => Ok(a),
            _ => Err(mismatch("action")),
        }
    }

    fn control(&self) -> Result<&ControlOutput, EquationError> {
        match self {
            SceneValue::Control(c) => Ok(c),
            _ => Err(mismatch("control")),
        }
    }

    fn wrench(&self) -> Result<(Vec2, f64), EquationError> {
        match self {
            SceneValue::Wrench { force, torque } => Ok((*force, *torque)),
            _ => Err(mismatch("wrench")),
        }
    }

    fn env(&self) -> Result<&EnvForce, EquationError> {
        match self {
            SceneValue::Env(e) => Ok(e),
            _ => Err(mismatch("environment force")),
        }
    }

    fn body(&self) -> Result<&RigidBodyState, EquationError> {
        match self {
            SceneValue::Body(b) => Ok(b),
            _ => Err(mismatch("body")),
        }
    }
}

/// Static description of one simulated agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSetup {
    pub id: AgentId,
    pub params: VehicleParams,
    pub initial: RigidBodyState,
    /// `(start time, action)` sorted by time. Before the first entry the first
    /// action applies.
    pub schedule: Vec<(f64, Action)>,
    /// Exogenous force along the heading (N).
    pub disturbance: Distribution<SceneValue>,
}

impl AgentSetup {
    pub fn new(
        id: impl Into<AgentId>,
        params: VehicleParams,
        initial: RigidBodyState,
        schedule: Vec<(f64, Action)>,
    ) -> Self {
        Self {
            id: id.into(),
            params,
            initial,
            schedule,
            disturbance: Distribution::Point(SceneValue::Scalar(0.0)),
        }
    }

    /// Action scheduled at time `t`.
    pub fn action_at(&self, t: f64) -> Option<&Action> {
        let idx = self.schedule.partition_point(|(start, _)| *start <= t + TIME_EPS);
        self.schedule.get(idx.saturating_sub(1)).map(|(_, a)| a)
    }
}

/// Slack used when comparing times to slice boundaries.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Intervene(#[from] InterveneError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {0} has an empty action schedule")]
    EmptySchedule(AgentId),
    #[error("time {t} is before the world start {start}")]
    BeforeStart { t: f64, start: f64 },
    #[error("agent {0} is not on any lane")]
    OffMap(AgentId),
}

pub fn var(agent: &str, module: &str, name: &str) -> VarKey {
    VarKey::new(format!("{agent}.{module}"), name)
}

fn input_key(agent: &str) -> VarKey {
    var(agent, "controller", "input")
}
fn output_key(agent: &str) -> VarKey {
    var(agent, "controller", "output")
}
fn drive_key(agent: &str) -> VarKey {
    var(agent, "vehicle", "drive")
}
fn disturbance_key(agent: &str) -> VarKey {
    var(agent, "entity", "disturbance")
}
fn env_key(agent: &str) -> VarKey {
    var(agent, "entity", "env")
}
fn headway_key(agent: &str) -> VarKey {
    var(agent, "link", "headway")
}
fn body_key(agent: &str) -> VarKey {
    var(agent, "body", "state")
}

/// An action held by an agent from some time onwards.
#[derive(Debug, Clone, PartialEq)]
struct Hold {
    agent: usize,
    from: f64,
    action: Action,
}

/// A scene model plus the bookkeeping needed to intervene on and read back
/// agent-level quantities.
#[derive(Clone)]
pub struct SceneWorld {
    model: CausalModel<SceneValue>,
    agents: Arc<Vec<AgentSetup>>,
    lanes: Arc<LaneMap>,
    start: f64,
    time_step: f64,
    cfg: Arc<PlannerConfig>,
    holds: Vec<Hold>,
}

impl std::fmt::Debug for SceneWorld {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SceneWorld")
            .field("agents", &self.agents.iter().map(|a| &a.id).collect::<Vec<_>>())
            .field("start", &self.start)
            .field("time_step", &self.time_step)
            .field("holds", &self.holds)
            .finish()
    }
}

impl SceneWorld {
    /// Builds the scene model. Agents are ordered as given.
    pub fn new(
        agents: Vec<AgentSetup>,
        lanes: Arc<LaneMap>,
        start: f64,
        time_step: f64,
        cfg: &PlannerConfig,
    ) -> Result<Self, WorldError> {
        for a in &agents {
            if a.schedule.is_empty() {
                return Err(WorldError::EmptySchedule(a.id.clone()));
            }
        }
        let agents = Arc::new(agents);
        let cfg = Arc::new(cfg.clone());
        let model = assemble(&agents, &lanes, &cfg)?.with_origin(start);
        Ok(Self {
            model,
            agents,
            lanes,
            start,
            time_step,
            cfg,
            holds: Vec::new(),
        })
    }

    pub fn model(&self) -> &CausalModel<SceneValue> {
        &self.model
    }

    pub fn agents(&self) -> &[AgentSetup] {
        &self.agents
    }

    pub fn lanes(&self) -> &LaneMap {
        &self.lanes
    }

    pub fn lanes_arc(&self) -> Arc<LaneMap> {
        Arc::clone(&self.lanes)
    }

    pub fn start_time(&self) -> f64 {
        self.start
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn planner_config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn agent_index(&self, agent: &str) -> Result<usize, WorldError> {
        self.agents
            .iter()
            .position(|a| a.id == agent)
            .ok_or_else(|| WorldError::UnknownAgent(agent.to_string()))
    }

    /// Slice at or just after time `t`.
    pub fn slice_of(&self, t: f64) -> usize {
        (((t - self.start) / self.time_step) - TIME_EPS).ceil().max(0.0) as usize
    }

    /// `do(agent.controller/input = action)` from time `from` onwards.
    pub fn with_action(&self, agent: &str, from: f64, action: Action) -> Result<Self, WorldError> {
        let idx = self.agent_index(agent)?;
        let span = if from <= self.start + TIME_EPS {
            SliceSpan::All
        } else {
            SliceSpan::From(self.slice_of(from))
        };
        let model = self
            .model
            .intervene(Intervention::set(input_key(agent), span, SceneValue::Action(action)))?;
        let mut holds = self.holds.clone();
        holds.push(Hold {
            agent: idx,
            from,
            action,
        });
        Ok(Self {
            model,
            holds,
            ..self.clone()
        })
    }

    /// Rolls the scene out for `horizon` seconds.
    pub fn simulate(&self, horizon: f64) -> Result<SceneRollout, WorldError> {
        let rollout = self.model.simulate(self.time_step, horizon, 0)?;
        Ok(SceneRollout {
            rollout,
            agents: Arc::clone(&self.agents),
            lanes: Arc::clone(&self.lanes),
        })
    }

    /// The same world restarted at time `t` from its own simulated state.
    /// Interventions carry over.
    pub fn advance_to(&self, t: f64) -> Result<Self, WorldError> {
        if t < self.start - TIME_EPS {
            return Err(WorldError::BeforeStart { t, start: self.start });
        }
        let k = self.slice_of(t);
        if k == 0 {
            return Ok(self.clone());
        }
        let rollout = self.simulate(k as f64 * self.time_step)?;
        let new_start = rollout.rollout.time_of(k);
        let agents: Vec<AgentSetup> = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| AgentSetup {
                initial: *rollout.body(i, k),
                ..a.clone()
            })
            .collect();
        let mut world = SceneWorld::new(agents, Arc::clone(&self.lanes), new_start, self.time_step, &self.cfg)?;
        for h in &self.holds {
            world = world.with_action(&self.agents[h.agent].id, h.from, h.action)?;
        }
        Ok(world)
    }

    /// State of `agent` at the world start.
    pub fn initial_state(&self, agent: &str) -> Result<&RigidBodyState, WorldError> {
        Ok(&self.agents[self.agent_index(agent)?].initial)
    }

    /// Candidate actions for `agent` at time `t`, maintain action first.
    /// Returns the world restarted at `t` alongside.
    pub fn candidates(
        &self,
        agent: &str,
        t: f64,
        cfg: &PlannerConfig,
    ) -> Result<(SceneWorld, Vec<Action>), WorldError> {
        let world = self.advance_to(t)?;
        let s = *world.initial_state(agent)?;
        let lane_id = world
            .lanes
            .locate(s.position())
            .ok_or_else(|| WorldError::OffMap(agent.to_string()))?;
        let lane = &world.lanes.lanes[lane_id];
        let t0 = world.start;
        Ok((world.clone(), generate_candidates(&s, lane, t0, cfg)))
    }

    /// Simulates each action for `agent` from the world start over the
    /// planning horizon and extracts its outcome. Runs in parallel; results
    /// keep the order of `actions`.
    pub fn simulate_actions(
        &self,
        agent: &str,
        actions: &[Action],
        cfg: &PlannerConfig,
    ) -> Result<Vec<Result<Outcome, WorldError>>, WorldError> {
        let idx = self.agent_index(agent)?;
        Ok(par_map(actions, |a| {
            let world = self.with_action(agent, self.start, *a)?;
            let rollout = world.simulate(cfg.horizon)?;
            Ok(rollout.outcome(idx, a, 0, rollout.slices() - 1, cfg.speed_tolerance))
        }))
    }

    /// Candidates for `agent` at `t` and their simulated outcomes.
    #[allow(clippy::type_complexity)]
    pub fn simulate_candidates(
        &self,
        agent: &str,
        t: f64,
        cfg: &PlannerConfig,
    ) -> Result<(Vec<Action>, Vec<Result<Outcome, WorldError>>), WorldError> {
        let (world, candidates) = self.candidates(agent, t, cfg)?;
        let outcomes = world.simulate_actions(agent, &candidates, cfg)?;
        Ok((candidates, outcomes))
    }
}

fn scene_eq<F>(f: F) -> EquationFn<SceneValue>
where
    F: Fn(&EvalContext, &[&SceneValue]) -> Result<SceneValue, EquationError> + Send + Sync + 'static,
{
    equation(f)
}

fn assemble(
    agents: &[AgentSetup],
    lanes: &Arc<LaneMap>,
    cfg: &Arc<PlannerConfig>,
) -> Result<CausalModel<SceneValue>, BuildError> {
    let mut equations = Vec::new();
    let mut exo = Vec::new();
    for (i, a) in agents.iter().enumerate() {
        let id = a.id.as_str();
        let others: Vec<ParentRef> = agents
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, o)| ParentRef::current(body_key(&o.id)))
            .collect();

        let schedule = a.clone();
        equations.push(StructuralEquation::new(
            input_key(id),
            vec![],
            scene_eq(move |ctx, _| {
                schedule
                    .action_at(ctx.time)
                    .or_else(|| schedule.schedule.first().map(|(_, a)| a))
                    .map(|a| SceneValue::Action(*a))
                    .ok_or_else(|| EquationError("empty schedule".into()))
            }),
        ));

        let (params, map, cfg_c) = (a.params, Arc::clone(lanes), Arc::clone(cfg));
        equations.push(StructuralEquation::new(
            output_key(id),
            vec![ParentRef::current(input_key(id)), ParentRef::current(body_key(id))],
            scene_eq(move |_, p| {
                let out = control(p[0].action()?, p[1].body()?, &params, &map, &cfg_c)
                    .map_err(|e| EquationError(e.to_string()))?;
                Ok(SceneValue::Control(out))
            }),
        ));

        equations.push(StructuralEquation::new(
            drive_key(id),
            vec![ParentRef::current(output_key(id)), ParentRef::current(body_key(id))],
            scene_eq(move |_, p| {
                let c = p[0].control()?;
                let (force, torque) = vehicle_forces(p[1].body()?, &params, c.motor_torque, c.steer);
                Ok(SceneValue::Wrench { force, torque })
            }),
        ));

        exo.push(ExogenousSpec {
            variable: disturbance_key(id),
            distribution: a.disturbance.clone(),
        });

        let mut env_parents = vec![
            ParentRef::current(body_key(id)),
            ParentRef::current(disturbance_key(id)),
        ];
        env_parents.extend(others.iter().cloned());
        equations.push(StructuralEquation::new(
            env_key(id),
            env_parents,
            scene_eq(move |_, p| {
                let body = p[0].body()?;
                let push = p[1].scalar()?;
                let others = p[2..]
                    .iter()
                    .map(|v| v.body().copied())
                    .collect::<Result<Vec<_>, _>>()?;
                let mut env = environment_forces(body, &params, &others);
                if push != 0.0 {
                    env = EnvForce::new(env.force + body.heading() * push, env.torque);
                }
                Ok(SceneValue::Env(env))
            }),
        ));

        let mut link_parents = vec![ParentRef::current(body_key(id))];
        link_parents.extend(others.iter().cloned());
        let map = Arc::clone(lanes);
        equations.push(StructuralEquation::new(
            headway_key(id),
            link_parents,
            scene_eq(move |_, p| {
                let body = p[0].body()?;
                let Some(lane) = map.locate(body.position()).and_then(|l| map.lane(l)) else {
                    return Ok(SceneValue::Headway(None));
                };
                let mut best: Option<f64> = None;
                for o in &p[1..] {
                    if let Some(h) = headway(body, o.body()?, lane) {
                        best = Some(best.map_or(h, |b| b.min(h)));
                    }
                }
                Ok(SceneValue::Headway(best))
            }),
        ));

        equations.push(
            StructuralEquation::new(
                body_key(id),
                vec![
                    ParentRef::previous(body_key(id)),
                    ParentRef::previous(drive_key(id)),
                    ParentRef::previous(env_key(id)),
                ],
                scene_eq(move |ctx, p| {
                    let body = p[0].body()?;
                    let (force, torque) = p[1].wrench()?;
                    let env = p[2].env()?;
                    Ok(SceneValue::Body(step_rigid_body(
                        body,
                        force + env.force,
                        torque + env.torque,
                        ctx.time_step,
                    )))
                }),
            )
            .with_initial(SceneValue::Body(a.initial)),
        );
    }
    build_model(equations, exo)
}

/// A scene rollout with typed accessors.
#[derive(Debug, Clone)]
pub struct SceneRollout {
    rollout: Rollout<SceneValue>,
    agents: Arc<Vec<AgentSetup>>,
    lanes: Arc<LaneMap>,
}

impl SceneRollout {
    pub fn raw(&self) -> &Rollout<SceneValue> {
        &self.rollout
    }

    pub fn slices(&self) -> usize {
        self.rollout.slices()
    }

    pub fn time_of(&self, slice: usize) -> f64 {
        self.rollout.time_of(slice)
    }

    fn get(&self, key: &VarKey, slice: usize) -> &SceneValue {
        self.rollout.value(key, slice).expect("scene variable present")
    }

    pub fn body(&self, agent: usize, slice: usize) -> &RigidBodyState {
        match self.get(&body_key(&self.agents[agent].id), slice) {
            SceneValue::Body(b) => b,
            _ => unreachable!("body variable holds a body"),
        }
    }

    pub fn action(&self, agent: usize, slice: usize) -> &Action {
        match self.get(&input_key(&self.agents[agent].id), slice) {
            SceneValue::Action(a) => a,
            _ => unreachable!("input variable holds an action"),
        }
    }

    pub fn env(&self, agent: usize, slice: usize) -> &EnvForce {
        match self.get(&env_key(&self.agents[agent].id), slice) {
            SceneValue::Env(e) => e,
            _ => unreachable!("env variable holds a force"),
        }
    }

    pub fn headway(&self, agent: usize, slice: usize) -> Option<f64> {
        match self.get(&headway_key(&self.agents[agent].id), slice) {
            SceneValue::Headway(h) => *h,
            _ => unreachable!("headway variable holds a headway"),
        }
    }

    pub fn lane(&self, agent: usize, slice: usize) -> Option<LaneId> {
        self.lanes.nearest(self.body(agent, slice).position())
    }

    /// Outcome of `agent` executing `action` between two slices (inclusive).
    pub fn outcome(&self, agent: usize, action: &Action, from: usize, to: usize, speed_tolerance: f64) -> Outcome {
        let mut lt = 0;
        let mut prev = self.lane(agent, from);
        let mut ef: f64 = 0.0;
        for k in from..=to {
            let lane = self.lane(agent, k);
            if lane != prev {
                lt += 1;
                prev = lane;
            }
            ef = ef.max(self.env(agent, k).magnitude);
        }
        let fs = self.body(agent, to).speed();
        Outcome {
            lt,
            fs,
            dh: self.headway(agent, to),
            ef,
            ad: prev == Some(action.lane.target) && (fs - action.speed.target).abs() <= speed_tolerance,
        }
    }
}
