//! Lane geometry: polyline centrelines with widths and left/right adjacency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

pub type LaneId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    /// Centreline points in driving order.
    pub centreline: Vec<Vec2>,
    pub width: f64,
    #[serde(default)]
    pub left: Option<LaneId>,
    #[serde(default)]
    pub right: Option<LaneId>,
}

/// Where a lane feeds into another (ramps, lane drops).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub from: LaneId,
    pub into: LaneId,
    /// Arc length along `from` at which the branch happens.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneMap {
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub branch_points: Vec<BranchPoint>,
}

/// Projection of a point onto a lane centreline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePosition {
    /// Arc length of the foot point, extrapolated past either end.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the driving direction.
    pub offset: f64,
    /// Tangent direction at the foot point (radians).
    pub heading: f64,
    /// Whether the foot point lies between the first and last centreline point.
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("lane {0} needs at least two distinct centreline points")]
    DegenerateLane(LaneId),
    #[error("lane ids must equal their index; lane at index {index} has id {id}")]
    BadLaneId { index: usize, id: LaneId },
    #[error("lane {lane} references missing neighbour {neighbour}")]
    MissingNeighbour { lane: LaneId, neighbour: LaneId },
    #[error("adjacent lanes {0} and {1} run in opposite directions")]
    OppositeNeighbours(LaneId, LaneId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Lane {
    pub fn length(&self) -> f64 {
        self.centreline.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Projects `p` onto the centreline. The end segments are extended so that
    /// points slightly past either end still get a meaningful offset.
    pub fn project(&self, p: Vec2) -> LanePosition {
        let pts = &self.centreline;
        let nseg = pts.len() - 1;
        let mut best: Option<(f64, LanePosition)> = None;
        let mut s0 = 0.0;
        for (i, w) in pts.windows(2).enumerate() {
            let d = w[1] - w[0];
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let dir = d / len;
            let mut t = (p - w[0]).dot(dir);
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.0 };
            let hi = if i == nseg - 1 { f64::INFINITY } else { len };
            t = t.clamp(lo, hi);
            let foot = w[0] + dir * t;
            let rel = p - foot;
            let dist = rel.norm();
            let pos = LanePosition {
                s: s0 + t,
                offset: dir.cross(rel),
                heading: dir.angle(),
                within: (i > 0 || t >= 0.0) && (i < nseg - 1 || t <= len),
            };
            if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                best = Some((dist, pos));
            }
            s0 += len;
        }
        best.map(|(_, p)| p).expect("validated lanes have a segment")
    }

    /// True when `p` lies on the lane surface.
    pub fn contains(&self, p: Vec2) -> bool {
        let pos = self.project(p);
        pos.within && pos.offset.abs() <= self.width / 2.0
    }

    pub fn direction_at(&self, p: Vec2) -> Vec2 {
        Vec2::from_angle(self.project(p).heading)
    }
}

impl LaneMap {
    pub fn new(lanes: Vec<Lane>, branch_points: Vec<BranchPoint>) -> Result<Self, MapError> {
        let map = Self { lanes, branch_points };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        for (index, lane) in self.lanes.iter().enumerate() {
            if lane.id != index {
                return Err(MapError::BadLaneId { index, id: lane.id });
            }
            if lane.centreline.len() < 2 || lane.length() <= 0.0 {
                return Err(MapError::DegenerateLane(lane.id));
            }
        }
        for lane in &self.lanes {
            for n in [lane.left, lane.right].into_iter().flatten() {
                let other = self.lanes.get(n).ok_or(MapError::MissingNeighbour {
                    lane: lane.id,
                    neighbour: n,
                })?;
                let a = lane.direction_at(other.centreline[0]);
                let b = other.direction_at(other.centreline[0]);
                if a.dot(b) <= 0.0 {
                    return Err(MapError::OppositeNeighbours(lane.id, n));
                }
            }
        }
        Ok(())
    }

    /// `n` straight parallel lanes running along +x (`forward`) or −x, lane 0
    /// rightmost with respect to the driving direction.
    pub fn straight(n: usize, width: f64, x_start: f64, x_end: f64, y_right: f64, forward: bool) -> Self {
        let sign = if forward { 1.0 } else { -1.0 };
        let lanes = (0..n)
            .map(|i| {
                let y = y_right + sign * (i as f64 + 0.5) * width;
                let (a, b) = if forward {
                    (Vec2::new(x_start, y), Vec2::new(x_end, y))
                } else {
                    (Vec2::new(x_end, y), Vec2::new(x_start, y))
                };
                Lane {
                    id: i,
                    centreline: vec![a, b],
                    width,
                    left: (i + 1 < n).then_some(i + 1),
                    right: i.checked_sub(1),
                }
            })
            .collect();
        Self {
            lanes,
            branch_points: Vec::new(),
        }
    }

    pub fn lane(&self, id: LaneId) -> Option<&Lane> {
        self.lanes.get(id)
    }

    /// The lane whose surface contains `p`; the closest centreline wins when
    /// surfaces overlap.
    pub fn locate(&self, p: Vec2) -> Option<LaneId> {
        self.lanes
            .iter()
            .filter_map(|l| {
                let pos = l.project(p);
                (pos.within && pos.offset.abs() <= l.width / 2.0).then_some((pos.offset.abs(), l.id))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, id)| id)
    }

    /// Closest lane by centreline distance, preferring lanes whose extent
    /// covers `p`.
    pub fn nearest(&self, p: Vec2) -> Option<LaneId> {
        self.locate(p).or_else(|| {
            self.lanes
                .iter()
                .map(|l| {
                    let pos = l.project(p);
                    (!pos.within, pos.offset.abs(), l.id)
                })
                .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
                .map(|(_, _, id)| id)
        })
    }

    /// Which side `to` lies on when seen from `from`, following adjacency.
    pub fn side_of(&self, from: LaneId, to: LaneId) -> Option<Side> {
        if from == to {
            return None;
        }
        let walk = |side: Side| {
            let mut cur = from;
            for _ in 0..self.lanes.len() {
                let lane = self.lanes.get(cur)?;
                let next = match side {
                    Side::Left => lane.left,
                    Side::Right => lane.right,
                }?;
                if next == to {
                    return Some(side);
                }
                cur = next;
            }
            None
        };
        walk(Side::Left).or_else(|| walk(Side::Right)).or_else(|| {
            // Not connected by adjacency: fall back to geometry.
            let a = self.lanes.get(from)?;
            let b = self.lanes.get(to)?;
            let off = a.project(b.centreline[b.centreline.len() / 2]).offset;
            Some(if off > 0.0 { Side::Left } else { Side::Right })
        })
    }
}
