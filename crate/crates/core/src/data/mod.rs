//! Scene data: agent tracks, the native scene file format, recording loaders,
//! convoy scene extraction and synthetic scene generation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::RigidBodyState;
use crate::geometry::Vec2;
use crate::map::{LaneId, LaneMap, MapError};
use crate::world::AgentId;

mod convoy;
mod highd;
mod synth;

pub use convoy::{extract_convoy_scenes, is_convoy, ConvoyConfig};
pub use highd::{load_recording, Recording};
pub use synth::{synth_scene, ScenarioSpec, Template};

/// Tag written at the top of every native scene document.
pub const SCENE_FORMAT: &str = "causaldrive-scene/1";

/// Trucks are told apart from cars by length alone.
pub const TRUCK_MIN_LENGTH: f64 = 8.0;

/// One observation of an agent, ground frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub lane: LaneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn from_length(length: f64) -> Self {
        if length > TRUCK_MIN_LENGTH {
            VehicleClass::Truck
        } else {
            VehicleClass::Car
        }
    }
}

/// Uniformly sampled trajectory of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent: AgentId,
    /// Hz.
    pub frame_rate: f64,
    /// Time of the first frame (s).
    pub start_time: f64,
    pub frames: Vec<Frame>,
    pub length: f64,
    pub width: f64,
    pub class: VehicleClass,
}

impl AgentTrack {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        self.start_time + frame as f64 / self.frame_rate
    }

    pub fn end_time(&self) -> f64 {
        self.time_of(self.frames.len().saturating_sub(1))
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time
    }

    /// Frame closest to `t`, or `None` when `t` lies outside the track.
    pub fn frame_index(&self, t: f64) -> Option<usize> {
        let slack = 0.5 / self.frame_rate;
        if self.frames.is_empty() || t < self.start_time - slack || t > self.end_time() + slack {
            return None;
        }
        let i = ((t - self.start_time) * self.frame_rate).round().max(0.0) as usize;
        Some(i.min(self.frames.len() - 1))
    }

    pub fn frame_at(&self, t: f64) -> Option<&Frame> {
        self.frame_index(t).map(|i| &self.frames[i])
    }

    /// True when the track has a frame within half a period of both ends.
    pub fn covers(&self, from: f64, to: f64) -> bool {
        self.frame_index(from).is_some() && self.frame_index(to).is_some()
    }

    /// Rigid body matching frame `i`. The body is aligned with its velocity,
    /// or with the lane when nearly stationary.
    pub fn body(&self, i: usize, lanes: &LaneMap) -> RigidBodyState {
        let f = &self.frames[i];
        let rotation = if f.velocity.norm() > 0.5 {
            f.velocity.angle()
        } else {
            lanes
                .lane(f.lane)
                .map(|l| l.project(f.position).heading)
                .unwrap_or_else(|| f.velocity.angle())
        };
        let mut body = RigidBodyState::vehicle(self.length, self.width, f.position, rotation, f.velocity);
        body.linear.acceleration = f.acceleration;
        body
    }

    pub fn body_at(&self, t: f64, lanes: &LaneMap) -> Option<RigidBodyState> {
        self.frame_index(t).map(|i| self.body(i, lanes))
    }

    /// Copy restricted to frames within `[from, to]`.
    pub fn clipped(&self, from: f64, to: f64) -> AgentTrack {
        let slack = 1e-9;
        let keep: Vec<usize> = (0..self.frames.len())
            .filter(|&i| {
                let t = self.time_of(i);
                t >= from - slack && t <= to + slack
            })
            .collect();
        AgentTrack {
            start_time: keep.first().map_or(from, |&i| self.time_of(i)),
            frames: keep.iter().map(|&i| self.frames[i]).collect(),
            ..self.clone()
        }
    }
}

/// Unordered pair of agents, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[AgentId; 2]", into = "[AgentId; 2]")]
pub struct AgentPair(AgentId, AgentId);

impl AgentPair {
    pub fn new(a: impl Into<AgentId>, b: impl Into<AgentId>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }

    pub fn contains(&self, agent: &str) -> bool {
        self.0 == agent || self.1 == agent
    }
}

impl From<[AgentId; 2]> for AgentPair {
    fn from([a, b]: [AgentId; 2]) -> Self {
        AgentPair::new(a, b)
    }
}

impl From<AgentPair> for [AgentId; 2] {
    fn from(p: AgentPair) -> Self {
        [p.0, p.1]
    }
}

impl fmt::Display for AgentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}–{}", self.0, self.1)
    }
}

/// A scene ready for causal analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    pub name: String,
    pub lane_map: LaneMap,
    pub tracks: Vec<AgentTrack>,
    /// `[start, end]` in seconds.
    pub time_range: (f64, f64),
    /// Ground-truth agent adjacency, when known.
    #[serde(default)]
    pub labels: Option<BTreeSet<AgentPair>>,
}

impl SceneModel {
    pub fn track(&self, agent: &str) -> Option<&AgentTrack> {
        self.tracks.iter().find(|t| t.agent == agent)
    }

    pub fn agents(&self) -> Vec<&str> {
        self.tracks.iter().map(|t| t.agent.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.lane_map.validate()?;
        let (start, end) = self.time_range;
        if !(start <= end) {
            return Err(DataError::Invalid(format!("empty time range {start}..{end}")));
        }
        let mut seen = BTreeSet::new();
        for t in &self.tracks {
            if !seen.insert(t.agent.as_str()) {
                return Err(DataError::Invalid(format!("duplicate agent {}", t.agent)));
            }
            if !(t.frame_rate > 0.0) || !(t.length > 0.0) || !(t.width > 0.0) {
                return Err(DataError::Invalid(format!(
                    "agent {} has non-positive rate or size",
                    t.agent
                )));
            }
            let slack = 0.5 / t.frame_rate;
            if !t.frames.is_empty() && (t.start_time < start - slack || t.end_time() > end + slack) {
                return Err(DataError::Invalid(format!(
                    "agent {} lies outside the scene time range",
                    t.agent
                )));
            }
            if let Some(f) = t.frames.iter().find(|f| self.lane_map.lane(f.lane).is_none()) {
                return Err(DataError::Invalid(format!(
                    "agent {} references unknown lane {}",
                    t.agent, f.lane
                )));
            }
        }
        if let Some(labels) = &self.labels {
            for p in labels {
                if !seen.contains(p.first()) || !seen.contains(p.second()) {
                    return Err(DataError::Invalid(format!("label {p} names an unknown agent")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, DataError> {
        let doc = SceneDocumentRef {
            format: SCENE_FORMAT,
            scene: self,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let doc: SceneDocument = serde_json::from_str(text)?;
        if doc.format != SCENE_FORMAT {
            return Err(DataError::UnknownFormat(doc.format));
        }
        doc.scene.validate()?;
        Ok(doc.scene)
    }
}

#[derive(Serialize)]
struct SceneDocumentRef<'a> {
    format: &'a str,
    scene: &'a SceneModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDocument {
    format: String,
    scene: SceneModel,
}

pub fn read_scene(path: &Path) -> Result<SceneModel, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SceneModel::from_json(&text)
}

pub fn write_scene(path: &Path, scene: &SceneModel) -> Result<(), DataError> {
    let mut text = scene.to_json()?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported scene format {0:?}")]
    UnknownFormat(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown template {name:?}; valid templates: {valid}")]
    UnknownTemplate { name: String, valid: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scene() -> SceneModel {
        let lane_map = LaneMap::straight(2, 3.5, 0.0, 200.0, 0.0, true);
        let frames = (0..5)
            .map(|i| Frame {
                position: Vec2::new(10.0 + i as f64 * 0.1 / 3.0, 1.75),
                velocity: Vec2::new(0.1 / 0.3, 0.0),
                acceleration: Vec2::ZERO,
                lane: 0,
            })
            .collect();
        SceneModel {
            name: "tiny".into(),
            lane_map,
            tracks: vec![AgentTrack {
                agent: "a".into(),
                frame_rate: 25.0,
                start_time: 0.0,
                frames,
                length: 4.5,
                width: 1.8,
                class: VehicleClass::Car,
            }],
            time_range: (0.0, 0.16),
            labels: Some(BTreeSet::new()),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let scene = tiny_scene();
        let text = scene.to_json().unwrap();
        assert!(text.contains(SCENE_FORMAT));
        assert_eq!(SceneModel::from_json(&text).unwrap(), scene);
    }

    #[test]
    fn wrong_format_tag_rejected() {
        let text = tiny_scene().to_json().unwrap().replace(SCENE_FORMAT, "other/9");
        assert!(matches!(SceneModel::from_json(&text), Err(DataError::UnknownFormat(_))));
    }

    #[test]
    fn pair_is_unordered() {
        assert_eq!(AgentPair::new("c1", "c0"), AgentPair::new("c0", "c1"));
        assert_eq!(
            serde_json::to_string(&AgentPair::new("b", "a")).unwrap(),
            r#"["a","b"]"#
        );
    }

    #[test]
    fn frame_lookup() {
        let s = tiny_scene();
        let t = &s.tracks[0];
        assert_eq!(t.frame_index(0.0), Some(0));
        assert_eq!(t.frame_index(0.081), Some(2));
        assert_eq!(t.frame_index(0.5), None);
        assert!((t.duration() - 0.16).abs() < 1e-12);
        let c = t.clipped(0.04, 0.12);
        assert_eq!(c.frames.len(), 3);
        assert!((c.start_time - 0.04).abs() < 1e-12);
    }
}
