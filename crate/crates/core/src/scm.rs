//! Structural causal models with a single-lag temporal rollout.
//!
//! A model is a set of variables keyed by `(module, name)`. Each endogenous
//! variable owns one structural equation which is stamped across every time
//! slice of a rollout; exogenous variables are sampled from their
//! [`Distribution`]. Parents are either in the same slice or in the previous
//! one, so slice `t + 1` is a pure function of slice `t`, the exogenous draws
//! of slice `t + 1` and whatever interventions are active.
//!
//! Interventions (`do(V = v)`) replace the equation of a variable over a span
//! of slices, either with a constant or with a new equation. They produce a new
//! model; the original is left untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use thiserror::Error;

/// Values stored in a model. Non-finite values abort a rollout.
pub trait SlotValue: Clone + Send + Sync + 'static {
    fn is_finite(&self) -> bool;

    /// Conversion used for sampled exogenous variables. Types that return
    /// `None` may only use [`Distribution::Point`].
    fn from_scalar(_x: f64) -> Option<Self> {
        None
    }
}

impl SlotValue for f64 {
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn from_scalar(x: f64) -> Option<Self> {
        Some(x)
    }
}

/// Name of a variable independent of time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub module: String,
    pub name: String,
}

impl VarKey {
    pub fn new(module: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            module: module.into(),
            name: name.into(),
        }
    }

    pub fn at(&self, time_index: usize) -> VariableId {
        VariableId {
            module_name: self.module.clone(),
            variable_name: self.name.clone(),
            time_index,
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.module, self.name)
    }
}

/// A variable at one time slice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId {
    pub module_name: String,
    pub variable_name: String,
    pub time_index: usize,
}

impl VariableId {
    pub fn key(&self) -> VarKey {
        VarKey::new(self.module_name.clone(), self.variable_name.clone())
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}@{}", self.module_name, self.variable_name, self.time_index)
    }
}

/// Reference from an equation to one of its parents.
///
/// `offset` is relative to the slice being evaluated: `0` for the same slice,
/// `-1` for the previous one. Anything else is rejected when the model is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentRef {
    pub key: VarKey,
    pub offset: i64,
}

impl ParentRef {
    pub fn current(key: VarKey) -> Self {
        Self { key, offset: 0 }
    }

    pub fn previous(key: VarKey) -> Self {
        Self { key, offset: -1 }
    }
}

/// Information about the slice under evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalContext {
    pub slice: usize,
    /// `origin + slice * time_step`, in seconds.
    pub time: f64,
    pub time_step: f64,
}

/// Failure raised from inside a structural equation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct EquationError(pub String);

pub type EquationFn<V> = Arc<dyn Fn(&EvalContext, &[&V]) -> Result<V, EquationError> + Send + Sync>;

/// Wraps a closure as an [`EquationFn`].
pub fn equation<V, F>(f: F) -> EquationFn<V>
where
    F: Fn(&EvalContext, &[&V]) -> Result<V, EquationError> + Send + Sync + 'static,
{
    Arc::new(f)
}

/// Structural equation for one endogenous variable.
#[derive(Clone)]
pub struct StructuralEquation<V> {
    pub target: VarKey,
    pub parents: Vec<ParentRef>,
    pub map: EquationFn<V>,
    /// Value at slice 0. Required when any parent is lagged.
    pub initial: Option<V>,
}

impl<V> StructuralEquation<V> {
    pub fn new(target: VarKey, parents: Vec<ParentRef>, map: EquationFn<V>) -> Self {
        Self {
            target,
            parents,
            map,
            initial: None,
        }
    }

    pub fn with_initial(mut self, value: V) -> Self {
        self.initial = Some(value);
        self
    }
}

impl<V> fmt::Debug for StructuralEquation<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructuralEquation")
            .field("target", &self.target)
            .field("parents", &self.parents)
            .finish_non_exhaustive()
    }
}

/// Distribution over an exogenous variable. Sampled values are drawn per slice.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution<V> {
    Point(V),
    Normal { mean: f64, std_dev: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousSpec<V> {
    pub variable: VarKey,
    pub distribution: Distribution<V>,
}

impl<V> ExogenousSpec<V> {
    pub fn point(variable: VarKey, value: V) -> Self {
        Self {
            variable,
            distribution: Distribution::Point(value),
        }
    }
}

/// Slices covered by an intervention. `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceSpan {
    All,
    From(usize),
    Range { start: usize, end: usize },
}

impl SliceSpan {
    pub fn contains(&self, slice: usize) -> bool {
        match *self {
            SliceSpan::All => true,
            SliceSpan::From(start) => slice >= start,
            SliceSpan::Range { start, end } => slice >= start && slice < end,
        }
    }
}

/// What an intervention puts in place of the original equation.
#[derive(Clone)]
pub enum Forced<V> {
    Value(V),
    Equation {
        parents: Vec<ParentRef>,
        map: EquationFn<V>,
    },
}

#[derive(Clone)]
pub struct Intervention<V> {
    pub target: VarKey,
    pub span: SliceSpan,
    pub forced: Forced<V>,
}

impl<V> Intervention<V> {
    /// `do(target = value)` over `span`.
    pub fn set(target: VarKey, span: SliceSpan, value: V) -> Self {
        Self {
            target,
            span,
            forced: Forced::Value(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("cycle within a time slice involving {0:?}")]
    CycleDetected(Vec<String>),
    #[error("unbound variable {variable} referenced by {referenced_by}: {reason}")]
    UnboundVariable {
        variable: String,
        referenced_by: String,
        reason: String,
    },
    #[error("variable {0} is defined more than once")]
    DuplicateVariable(String),
    #[error("variable {0} has a lagged parent but no initial value")]
    MissingInitialValue(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterveneError {
    #[error("no such variable: {0}")]
    NoSuchVariable(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("time step must be positive and horizon at least one step (dt={time_step}, horizon={horizon})")]
    InvalidHorizon { time_step: f64, horizon: f64 },
    #[error("non-finite value for {variable}")]
    NumericOverflow { variable: VariableId },
    #[error("equation for {variable} failed: {source}")]
    Equation {
        variable: VariableId,
        source: EquationError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lag {
    Current,
    Previous,
}

#[derive(Clone)]
struct CompiledEquation<V> {
    parents: Vec<(usize, Lag)>,
    map: EquationFn<V>,
}

#[derive(Clone)]
enum NodeKind<V> {
    Exogenous(Distribution<V>),
    Endogenous {
        equation: CompiledEquation<V>,
        initial: Option<V>,
    },
}

#[derive(Clone)]
struct Node<V> {
    key: VarKey,
    kind: NodeKind<V>,
}

#[derive(Clone)]
enum CompiledForced<V> {
    Value(V),
    Equation(CompiledEquation<V>),
}

#[derive(Clone)]
struct Override<V> {
    span: SliceSpan,
    forced: CompiledForced<V>,
}

/// An immutable structural causal model ready for rollout.
#[derive(Clone)]
pub struct CausalModel<V> {
    nodes: Arc<Vec<Node<V>>>,
    index: Arc<BTreeMap<VarKey, usize>>,
    order: Arc<Vec<usize>>,
    overrides: BTreeMap<usize, Vec<Override<V>>>,
    origin: f64,
}

impl<V> fmt::Debug for CausalModel<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CausalModel")
            .field("variables", &self.index.len())
            .field("interventions", &self.overrides.len())
            .field("origin", &self.origin)
            .finish()
    }
}

/// Builds a model from equations and exogenous specs.
pub fn build_model<V: SlotValue>(
    equations: Vec<StructuralEquation<V>>,
    exo: Vec<ExogenousSpec<V>>,
) -> Result<CausalModel<V>, BuildError> {
    CausalModel::build(equations, exo)
}

impl<V: SlotValue> CausalModel<V> {
    pub fn build(equations: Vec<StructuralEquation<V>>, exo: Vec<ExogenousSpec<V>>) -> Result<Self, BuildError> {
        let mut index = BTreeMap::new();
        let mut keys = Vec::with_capacity(equations.len() + exo.len());
        for key in exo
            .iter()
            .map(|e| &e.variable)
            .chain(equations.iter().map(|e| &e.target))
        {
            if index.insert(key.clone(), keys.len()).is_some() {
                return Err(BuildError::DuplicateVariable(key.to_string()));
            }
            keys.push(key.clone());
        }

        let mut nodes = Vec::with_capacity(keys.len());
        for spec in exo {
            nodes.push(Node {
                key: spec.variable,
                kind: NodeKind::Exogenous(spec.distribution),
            });
        }
        for eq in equations {
            let compiled = compile_parents(&index, &eq.target, &eq.parents)?;
            let lagged = compiled.iter().any(|(_, lag)| *lag == Lag::Previous);
            if lagged && eq.initial.is_none() {
                return Err(BuildError::MissingInitialValue(eq.target.to_string()));
            }
            nodes.push(Node {
                key: eq.target,
                kind: NodeKind::Endogenous {
                    equation: CompiledEquation {
                        parents: compiled,
                        map: eq.map,
                    },
                    initial: eq.initial,
                },
            });
        }

        let order = topological_order(&nodes, &BTreeMap::new())?;
        Ok(Self {
            nodes: Arc::new(nodes),
            index: Arc::new(index),
            order: Arc::new(order),
            overrides: BTreeMap::new(),
            origin: 0.0,
        })
    }

    /// Sets the scene time of slice 0.
    pub fn with_origin(mut self, origin: f64) -> Self {
        self.origin = origin;
        self
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = &VarKey> {
        self.nodes.iter().map(|n| &n.key)
    }

    /// Returns a new model with `iv` applied. Later interventions on the same
    /// slice take precedence over earlier ones.
    pub fn intervene(&self, iv: Intervention<V>) -> Result<Self, InterveneError> {
        let target = self
            .index_of(&iv.target)
            .ok_or_else(|| InterveneError::NoSuchVariable(iv.target.to_string()))?;
        let forced = match iv.forced {
            Forced::Value(v) => CompiledForced::Value(v),
            Forced::Equation { parents, map } => {
                let parents = compile_parents(&self.index, &iv.target, &parents)?;
                CompiledForced::Equation(CompiledEquation { parents, map })
            }
        };
        let mut overrides = self.overrides.clone();
        overrides
            .entry(target)
            .or_default()
            .push(Override { span: iv.span, forced });
        let order = if overrides
            .values()
            .flatten()
            .any(|o| matches!(o.forced, CompiledForced::Equation(_)))
        {
            Arc::new(topological_order(&self.nodes, &overrides)?)
        } else {
            Arc::clone(&self.order)
        };
        Ok(Self {
            nodes: Arc::clone(&self.nodes),
            index: Arc::clone(&self.index),
            order,
            overrides,
            origin: self.origin,
        })
    }

    /// Rolls the model out over `[0, horizon]` in steps of `time_step`.
    pub fn simulate(&self, time_step: f64, horizon: f64, seed: u64) -> Result<Rollout<V>, SimulateError> {
        if !(time_step > 0.0) || !(horizon >= time_step * (1.0 - 1e-9)) || !horizon.is_finite() {
            return Err(SimulateError::InvalidHorizon { time_step, horizon });
        }
        let slices = (horizon / time_step).round() as usize + 1;
        let width = self.nodes.len();
        let mut rngs: Vec<Option<ChaCha8Rng>> = self
            .nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Exogenous(Distribution::Point(_)) | NodeKind::Endogenous { .. } => None,
                NodeKind::Exogenous(_) => Some(ChaCha8Rng::seed_from_u64(mix_seed(seed, &n.key))),
            })
            .collect();

        let mut values: Vec<Option<V>> = Vec::with_capacity(slices * width);
        for slice in 0..slices {
            values.extend(std::iter::repeat_with(|| None).take(width));
            let ctx = EvalContext {
                slice,
                time: self.origin + slice as f64 * time_step,
                time_step,
            };
            for &node_idx in self.order.iter() {
                let node = &self.nodes[node_idx];
                let active = self
                    .overrides
                    .get(&node_idx)
                    .and_then(|list| list.iter().rev().find(|o| o.span.contains(slice)));
                let value = match active {
                    Some(Override {
                        forced: CompiledForced::Value(v),
                        ..
                    }) => Ok(v.clone()),
                    Some(Override {
                        forced: CompiledForced::Equation(eq),
                        ..
                    }) => {
                        if slice == 0 && eq.parents.iter().any(|(_, l)| *l == Lag::Previous) {
                            // Lagged replacement equations fall back to the
                            // original slice-0 value.
                            match &node.kind {
                                NodeKind::Endogenous {
                                    initial: Some(init), ..
                                } => Ok(init.clone()),
                                _ => Err(EquationError("lagged replacement equation has no slice-0 value".into())),
                            }
                        } else {
                            evaluate(eq, &ctx, &values, width, slice)
                        }
                    }
                    None => match &node.kind {
                        NodeKind::Exogenous(dist) => sample(dist, rngs[node_idx].as_mut()),
                        NodeKind::Endogenous { initial, .. } if slice == 0 && initial.is_some() => {
                            Ok(initial.clone().unwrap())
                        }
                        NodeKind::Endogenous { equation, .. } => evaluate(equation, &ctx, &values, width, slice),
                    },
                };
                let value = value.map_err(|source| SimulateError::Equation {
                    variable: node.key.at(slice),
                    source,
                })?;
                if !value.is_finite() {
                    return Err(SimulateError::NumericOverflow {
                        variable: node.key.at(slice),
                    });
                }
                values[slice * width + node_idx] = Some(value);
            }
        }

        Ok(Rollout {
            time_step,
            horizon,
            origin: self.origin,
            slices,
            width,
            index: Arc::clone(&self.index),
            values: values.into_iter().map(|v| v.expect("every slot evaluated")).collect(),
        })
    }
}

/// Free-function form of [`CausalModel::intervene`].
pub fn intervene<V: SlotValue>(model: &CausalModel<V>, iv: Intervention<V>) -> Result<CausalModel<V>, InterveneError> {
    model.intervene(iv)
}

/// Free-function form of [`CausalModel::simulate`].
pub fn simulate<V: SlotValue>(
    model: &CausalModel<V>,
    time_step: f64,
    horizon: f64,
    seed: u64,
) -> Result<Rollout<V>, SimulateError> {
    model.simulate(time_step, horizon, seed)
}

fn compile_parents(
    index: &BTreeMap<VarKey, usize>,
    target: &VarKey,
    parents: &[ParentRef],
) -> Result<Vec<(usize, Lag)>, BuildError> {
    parents
        .iter()
        .map(|p| {
            let lag = match p.offset {
                0 => Lag::Current,
                -1 => Lag::Previous,
                off => {
                    return Err(BuildError::UnboundVariable {
                        variable: p.key.to_string(),
                        referenced_by: target.to_string(),
                        reason: format!("slice offset {off} violates the single-lag rule"),
                    })
                }
            };
            let idx = index.get(&p.key).ok_or_else(|| BuildError::UnboundVariable {
                variable: p.key.to_string(),
                referenced_by: target.to_string(),
                reason: "no equation or exogenous spec".into(),
            })?;
            Ok((*idx, lag))
        })
        .collect()
}

/// Kahn's algorithm over same-slice edges, ties broken by `(module, name)`.
fn topological_order<V>(
    nodes: &[Node<V>],
    overrides: &BTreeMap<usize, Vec<Override<V>>>,
) -> Result<Vec<usize>, BuildError> {
    let n = nodes.len();
    let mut children: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut add_edges = |target: usize, eq: &CompiledEquation<V>| {
        for &(p, lag) in &eq.parents {
            if lag == Lag::Current {
                children[p].insert(target);
            }
        }
    };
    for (i, node) in nodes.iter().enumerate() {
        if let NodeKind::Endogenous { equation, .. } = &node.kind {
            add_edges(i, equation);
        }
    }
    for (&i, list) in overrides {
        for o in list {
            if let CompiledForced::Equation(eq) = &o.forced {
                add_edges(i, eq);
            }
        }
    }
    let mut indegree = vec![0usize; n];
    for set in &children {
        for &c in set {
            indegree[c] += 1;
        }
    }
    let mut ready: BTreeSet<(&VarKey, usize)> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| (&nodes[i].key, i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((&nodes[c].key, c));
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| nodes[i].key.to_string())
            .collect();
        return Err(BuildError::CycleDetected(stuck));
    }
    Ok(order)
}

fn evaluate<V: SlotValue>(
    eq: &CompiledEquation<V>,
    ctx: &EvalContext,
    values: &[Option<V>],
    width: usize,
    slice: usize,
) -> Result<V, EquationError> {
    let parents: Vec<&V> = eq
        .parents
        .iter()
        .map(|&(p, lag)| {
            let s = match lag {
                Lag::Current => slice,
                Lag::Previous => slice - 1,
            };
            values[s * width + p]
                .as_ref()
                .expect("parents are evaluated before children")
        })
        .collect();
    (eq.map)(ctx, &parents)
}

fn sample<V: SlotValue>(dist: &Distribution<V>, rng: Option<&mut ChaCha8Rng>) -> Result<V, EquationError> {
    let draw = match dist {
        Distribution::Point(v) => return Ok(v.clone()),
        Distribution::Normal { mean, std_dev } => {
            let rng = rng.expect("sampled variables own an rng");
            Normal::new(*mean, std_dev.abs())
                .map_err(|e| EquationError(e.to_string()))?
                .sample(rng)
        }
        Distribution::Uniform { low, high } => {
            let rng = rng.expect("sampled variables own an rng");
            if high > low {
                rng.random_range(*low..*high)
            } else {
                *low
            }
        }
    };
    V::from_scalar(draw).ok_or_else(|| EquationError("value type cannot be sampled".into()))
}

fn mix_seed(seed: u64, key: &VarKey) -> u64 {
    // FNV-1a over the key, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.module.bytes().chain([0u8]).chain(key.name.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Values of every variable at every slice.
#[derive(Clone)]
pub struct Rollout<V> {
    pub time_step: f64,
    pub horizon: f64,
    origin: f64,
    slices: usize,
    width: usize,
    index: Arc<BTreeMap<VarKey, usize>>,
    values: Vec<V>,
}

impl<V> fmt::Debug for Rollout<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rollout")
            .field("time_step", &self.time_step)
            .field("horizon", &self.horizon)
            .field("slices", &self.slices)
            .field("variables", &self.width)
            .finish()
    }
}

impl<V: PartialEq> PartialEq for Rollout<V> {
    fn eq(&self, other: &Self) -> bool {
        self.time_step == other.time_step
            && self.horizon == other.horizon
            && self.origin == other.origin
            && self.slices == other.slices
            && self.index == other.index
            && self.values == other.values
    }
}

impl<V> Rollout<V> {
    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn time_of(&self, slice: usize) -> f64 {
        self.origin + slice as f64 * self.time_step
    }

    pub fn get(&self, id: &VariableId) -> Option<&V> {
        let idx = self.index.get(&id.key())?;
        self.at(*idx, id.time_index)
    }

    pub fn value(&self, key: &VarKey, slice: usize) -> Option<&V> {
        let idx = self.index.get(key)?;
        self.at(*idx, slice)
    }

    /// Value by variable index (see [`CausalModel::index_of`]).
    pub fn at(&self, index: usize, slice: usize) -> Option<&V> {
        (slice < self.slices && index < self.width).then(|| &self.values[slice * self.width + index])
    }

    /// Every value of one slice, in variable-index order.
    pub fn slice(&self, slice: usize) -> &[V] {
        &self.values[slice * self.width..(slice + 1) * self.width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(name: &str) -> VarKey {
        VarKey::new("m", name)
    }

    fn chain() -> CausalModel<f64> {
        // U -> V -> W with V = 2U, W = V + 1
        build_model(
            vec![
                StructuralEquation::new(
                    key("V"),
                    vec![ParentRef::current(key("U"))],
                    equation(|_, p: &[&f64]| Ok(2.0 * p[0])),
                ),
                StructuralEquation::new(
                    key("W"),
                    vec![ParentRef::current(key("V"))],
                    equation(|_, p: &[&f64]| Ok(p[0] + 1.0)),
                ),
            ],
            vec![ExogenousSpec::point(key("U"), 3.0)],
        )
        .unwrap()
    }

    #[test]
    fn chain_substitution() {
        let r = chain().simulate(1.0, 1.0, 0).unwrap();
        assert_eq!(r.value(&key("V"), 0), Some(&6.0));
        assert_eq!(r.value(&key("W"), 1), Some(&7.0));
        assert_eq!(r.slices(), 2);
    }

    #[test]
    fn do_operator_severs_parents() {
        let m = chain()
            .intervene(Intervention::set(key("V"), SliceSpan::All, 5.0))
            .unwrap();
        let r = m.simulate(0.5, 2.0, 7).unwrap();
        for s in 0..r.slices() {
            assert_eq!(r.value(&key("W"), s), Some(&6.0));
        }
        // Original untouched.
        let r0 = chain().simulate(0.5, 2.0, 7).unwrap();
        assert_eq!(r0.value(&key("W"), 0), Some(&7.0));
    }

    #[test]
    fn future_reference_rejected() {
        let err = build_model(
            vec![StructuralEquation::new(
                key("V"),
                vec![ParentRef {
                    key: key("V"),
                    offset: 1,
                }],
                equation(|_, p: &[&f64]| Ok(*p[0])),
            )
            .with_initial(0.0)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::UnboundVariable { .. }));
    }

    #[test]
    fn same_slice_cycle_detected() {
        let err = build_model(
            vec![
                StructuralEquation::new(
                    key("A"),
                    vec![ParentRef::current(key("B"))],
                    equation(|_, p: &[&f64]| Ok(*p[0])),
                ),
                StructuralEquation::new(
                    key("B"),
                    vec![ParentRef::current(key("A"))],
                    equation(|_, p: &[&f64]| Ok(*p[0])),
                ),
            ],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::CycleDetected(_)));
    }

    #[test]
    fn unbound_parent() {
        let err = build_model(
            vec![StructuralEquation::new(
                key("A"),
                vec![ParentRef::current(key("ghost"))],
                equation(|_, p: &[&f64]| Ok(*p[0])),
            )],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::UnboundVariable { .. }));
    }

    #[test]
    fn lagged_parent_needs_initial() {
        let err = build_model(
            vec![StructuralEquation::new(
                key("X"),
                vec![ParentRef::previous(key("X"))],
                equation(|_, p: &[&f64]| Ok(*p[0] + 1.0)),
            )],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::MissingInitialValue(_)));
    }

    #[test]
    fn constant_model_is_fixed_point() {
        let m = build_model(
            vec![StructuralEquation::new(
                key("C"),
                vec![ParentRef::previous(key("C"))],
                equation(|_, p: &[&f64]| Ok(*p[0])),
            )
            .with_initial(4.0)],
            vec![],
        )
        .unwrap();
        let r = m.simulate(0.1, 1.0, 0).unwrap();
        assert_eq!(r.slices(), 11);
        assert!((0..r.slices()).all(|s| r.slice(s) == r.slice(0)));
    }

    #[test]
    fn unknown_intervention_target() {
        let err = chain()
            .intervene(Intervention::set(key("nope"), SliceSpan::All, 1.0))
            .unwrap_err();
        assert!(matches!(err, InterveneError::NoSuchVariable(_)));
    }

    #[test]
    fn divergence_aborts() {
        let m = build_model(
            vec![StructuralEquation::new(
                key("X"),
                vec![ParentRef::previous(key("X"))],
                equation(|_, p: &[&f64]| Ok(*p[0] * 1e200)),
            )
            .with_initial(1e200)],
            vec![],
        )
        .unwrap();
        let err = m.simulate(1.0, 5.0, 0).unwrap_err();
        assert!(matches!(err, SimulateError::NumericOverflow { .. }));
    }

    #[test]
    fn invalid_horizon() {
        assert!(matches!(
            chain().simulate(0.0, 1.0, 0),
            Err(SimulateError::InvalidHorizon { .. })
        ));
        assert!(matches!(
            chain().simulate(1.0, 0.5, 0),
            Err(SimulateError::InvalidHorizon { .. })
        ));
    }

    #[test]
    fn sampled_exogenous_is_seeded() {
        let m = build_model(
            vec![StructuralEquation::new(
                key("Y"),
                vec![ParentRef::current(key("N"))],
                equation(|_, p: &[&f64]| Ok(*p[0] * 2.0)),
            )],
            vec![ExogenousSpec {
                variable: key("N"),
                distribution: Distribution::Normal {
                    mean: 0.0,
                    std_dev: 1.0,
                },
            }],
        )
        .unwrap();
        let a = m.simulate(0.1, 2.0, 11).unwrap();
        let b = m.simulate(0.1, 2.0, 11).unwrap();
        let c = m.simulate(0.1, 2.0, 12).unwrap();
        assert!(a == b);
        assert!(a != c);
    }
}
