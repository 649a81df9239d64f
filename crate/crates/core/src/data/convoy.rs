//! Leader/follower scene extraction from long recordings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{AgentPair, AgentTrack, Recording, SceneModel};
use crate::dynamics::headway;
use crate::map::LaneMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvoyConfig {
    /// Largest bumper-to-bumper gap for two vehicles to count as a convoy (m).
    pub gap_max: f64,
    /// Minimum time the pair must stay a convoy (s).
    pub window: f64,
}

impl Default for ConvoyConfig {
    fn default() -> Self {
        Self {
            gap_max: 50.0,
            window: 5.0,
        }
    }
}

/// Whether `follower` trails `leader` in the same lane within `gap_max` at time `t`.
fn in_convoy(leader: &AgentTrack, follower: &AgentTrack, t: f64, lanes: &LaneMap, gap_max: f64) -> bool {
    let (Some(i), Some(j)) = (leader.frame_index(t), follower.frame_index(t)) else {
        return false;
    };
    let (fl, ff) = (&leader.frames[i], &follower.frames[j]);
    if fl.lane != ff.lane {
        return false;
    }
    let Some(lane) = lanes.lane(ff.lane) else {
        return false;
    };
    headway(&follower.body(j, lanes), &leader.body(i, lanes), lane).is_some_and(|gap| gap <= gap_max)
}

/// Every maximal stretch of time during which one vehicle follows another
/// closely for at least the configured window becomes a scene. The pair is
/// renamed `c0` (front) and `c1` (rear); vehicles present for the whole
/// stretch that never share a lane with either become `i0`, `i1`, … in id
/// order. Ground truth is `{c0–c1}`.
pub fn extract_convoy_scenes(recording: &Recording, cfg: &ConvoyConfig) -> Vec<SceneModel> {
    let lanes = &recording.lane_map;
    let mut scenes = Vec::new();
    for leader in &recording.tracks {
        for follower in &recording.tracks {
            if leader.agent == follower.agent {
                continue;
            }
            let from = leader.start_time.max(follower.start_time);
            let to = leader.end_time().min(follower.end_time());
            if to - from < cfg.window {
                continue;
            }
            let dt = follower.dt();
            let steps = ((to - from) / dt).round() as usize;
            let mut run_start: Option<f64> = None;
            let close_run = |start: f64, end: f64, scenes: &mut Vec<SceneModel>| {
                if end - start >= cfg.window - 1e-9 {
                    scenes.push(build_scene(recording, leader, follower, start, end));
                }
            };
            for k in 0..=steps {
                let t = from + k as f64 * dt;
                let ok = in_convoy(leader, follower, t, lanes, cfg.gap_max);
                match (ok, run_start) {
                    (true, None) => run_start = Some(t),
                    (false, Some(s)) => {
                        close_run(s, t - dt, &mut scenes);
                        run_start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = run_start {
                close_run(s, from + steps as f64 * dt, &mut scenes);
            }
        }
    }
    scenes
}

fn build_scene(recording: &Recording, leader: &AgentTrack, follower: &AgentTrack, start: f64, end: f64) -> SceneModel {
    let lanes_of = |track: &AgentTrack| -> Vec<(usize, usize)> {
        let clipped = track.clipped(start, end);
        (0..clipped.frames.len())
            .map(|i| {
                (
                    (((clipped.time_of(i) - start) * clipped.frame_rate).round()) as usize,
                    clipped.frames[i].lane,
                )
            })
            .collect()
    };
    let convoy_lanes: BTreeSet<(usize, usize)> = lanes_of(leader).into_iter().chain(lanes_of(follower)).collect();
    let shares_lane = |track: &AgentTrack| {
        lanes_of(track)
            .iter()
            .any(|(k, lane)| convoy_lanes.contains(&(*k, *lane)))
    };

    let mut tracks = vec![
        AgentTrack {
            agent: "c0".into(),
            ..leader.clipped(start, end)
        },
        AgentTrack {
            agent: "c1".into(),
            ..follower.clipped(start, end)
        },
    ];
    let independents = recording
        .tracks
        .iter()
        .filter(|t| t.agent != leader.agent && t.agent != follower.agent)
        .filter(|t| t.covers(start, end) && !shares_lane(t));
    for (n, t) in independents.enumerate() {
        tracks.push(AgentTrack {
            agent: format!("i{n}"),
            ..t.clipped(start, end)
        });
    }
    SceneModel {
        name: format!("convoy-{}-{}-{:.2}", leader.agent, follower.agent, start),
        lane_map: recording.lane_map.clone(),
        tracks,
        time_range: (start, end),
        labels: Some(BTreeSet::from([AgentPair::new("c0", "c1")])),
    }
}

/// Re-checks the convoy predicate on an extracted scene.
pub fn is_convoy(scene: &SceneModel, cfg: &ConvoyConfig) -> bool {
    let (Some(c0), Some(c1)) = (scene.track("c0"), scene.track("c1")) else {
        return false;
    };
    let (start, end) = scene.time_range;
    if end - start < cfg.window - 1e-9 {
        return false;
    }
    (0..c1.frames.len()).all(|i| in_convoy(c0, c1, c1.time_of(i), &scene.lane_map, cfg.gap_max))
}
