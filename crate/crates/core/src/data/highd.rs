//! Loader for recordings in the highD layout: a `tracks.csv` with one row per
//! vehicle and frame, and a `recordingMeta.csv` carrying the frame rate and
//! the lateral positions of the lane markings.
//!
//! Positions in the files are top-left bounding-box corners in an image-like
//! frame whose y axis points down. They are converted to box centres in a
//! right-handed ground frame (y up). Vehicles on the upper carriageway drive
//! towards −x.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{AgentTrack, DataError, Frame, VehicleClass};
use crate::geometry::Vec2;
use crate::map::{Lane, LaneMap};

/// Loaded vehicle tracks and the road they drive on.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub tracks: Vec<AgentTrack>,
    pub lane_map: LaneMap,
    pub frame_rate: f64,
}

/// Plausible highway speeds (m/s).
const SPEED_RANGE: (f64, f64) = (0.0, 70.0);
/// Road extends this far past the outermost observed vehicle (m).
const ROAD_MARGIN: f64 = 50.0;

/// Loads a recording. With `lanes_source` the lane map is read from a native
/// JSON lane map instead of being rebuilt from the lane markings.
pub fn load_recording(
    tracks_file: &Path,
    meta_file: &Path,
    lanes_source: Option<&Path>,
) -> Result<Recording, DataError> {
    let meta = read_meta(meta_file)?;
    let rows = read_rows(tracks_file)?;

    let (x_min, x_max) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.x), hi.max(r.x + r.length))
    });
    let (x_min, x_max) = if x_min.is_finite() {
        (x_min, x_max)
    } else {
        (0.0, 400.0)
    };

    let lane_map = match lanes_source {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let map: LaneMap = serde_json::from_str(&text)?;
            map.validate()?;
            map
        }
        None => lanes_from_markings(&meta.upper, &meta.lower, x_min - ROAD_MARGIN, x_max + ROAD_MARGIN)?,
    };

    let mut by_id: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
    for r in rows {
        by_id.entry(r.id).or_default().push(r);
    }
    let mut tracks = Vec::with_capacity(by_id.len());
    for (id, mut rows) in by_id {
        rows.sort_by_key(|r| r.frame);
        for w in rows.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return Err(DataError::MalformedRecord {
                    line: w[1].line,
                    reason: format!("vehicle {id} skips from frame {} to {}", w[0].frame, w[1].frame),
                });
            }
        }
        let length = rows[0].length;
        let width = rows[0].width;
        let frames = rows
            .iter()
            .map(|r| {
                let position = Vec2::new(r.x + r.length / 2.0, -(r.y + r.width / 2.0));
                let lane = lane_map.nearest(position).ok_or_else(|| DataError::MalformedRecord {
                    line: r.line,
                    reason: "no lane to attach the vehicle to".into(),
                })?;
                Ok(Frame {
                    position,
                    velocity: Vec2::new(r.vx, -r.vy),
                    acceleration: Vec2::new(r.ax, -r.ay),
                    lane,
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        tracks.push(AgentTrack {
            agent: id.to_string(),
            frame_rate: meta.frame_rate,
            start_time: rows[0].frame as f64 / meta.frame_rate,
            frames,
            length,
            width,
            class: VehicleClass::from_length(length),
        });
    }
    Ok(Recording {
        tracks,
        lane_map,
        frame_rate: meta.frame_rate,
    })
}

struct Meta {
    frame_rate: f64,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

struct Row {
    line: u64,
    frame: u64,
    id: u64,
    x: f64,
    y: f64,
    length: f64,
    width: f64,
    vx: f64,
    vy: f64,
    ax: f64,
    ay: f64,
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn number(record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, DataError> {
    let cell = record.get(idx).unwrap_or("");
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::MalformedRecord {
            line: line_of(record),
            reason: format!("{name} is not a number: {cell:?}"),
        })
}

fn integer(record: &csv::StringRecord, idx: usize, name: &str) -> Result<u64, DataError> {
    let cell = record.get(idx).unwrap_or("");
    cell.parse::<u64>().map_err(|_| DataError::MalformedRecord {
        line: line_of(record),
        reason: format!("{name} is not a non-negative integer: {cell:?}"),
    })
}

fn read_meta(path: &Path) -> Result<Meta, DataError> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let rate = column(&headers, "frameRate")?;
    let upper = column(&headers, "upperLaneMarkings")?;
    let lower = column(&headers, "lowerLaneMarkings")?;
    let record = reader.records().next().ok_or(DataError::MalformedRecord {
        line: 2,
        reason: "recording metadata has no data row".into(),
    })??;
    let frame_rate = number(&record, rate, "frameRate")?;
    if frame_rate <= 0.0 {
        return Err(DataError::MalformedRecord {
            line: line_of(&record),
            reason: "frameRate must be positive".into(),
        });
    }
    let markings = |idx: usize, name: &str| -> Result<Vec<f64>, DataError> {
        let cell = record.get(idx).unwrap_or("");
        if cell.is_empty() {
            return Ok(Vec::new());
        }
        cell.split(';')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| DataError::MalformedRecord {
                    line: line_of(&record),
                    reason: format!("{name} entry is not a number: {s:?}"),
                })
            })
            .collect()
    };
    Ok(Meta {
        frame_rate,
        upper: markings(upper, "upperLaneMarkings")?,
        lower: markings(lower, "lowerLaneMarkings")?,
    })
}

fn read_rows(path: &Path) -> Result<Vec<Row>, DataError> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let cols = [
        "frame",
        "id",
        "x",
        "y",
        "width",
        "height",
        "xVelocity",
        "yVelocity",
        "xAcceleration",
        "yAcceleration",
    ]
    .map(|name| column(&headers, name));
    let [frame, id, x, y, w, h, vx, vy, ax, ay] = cols;
    let (frame, id, x, y, w, h, vx, vy, ax, ay) = (frame?, id?, x?, y?, w?, h?, vx?, vy?, ax?, ay?);

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let row = Row {
            line,
            frame: integer(&record, frame, "frame")?,
            id: integer(&record, id, "id")?,
            x: number(&record, x, "x")?,
            y: number(&record, y, "y")?,
            length: number(&record, w, "width")?,
            width: number(&record, h, "height")?,
            vx: number(&record, vx, "xVelocity")?,
            vy: number(&record, vy, "yVelocity")?,
            ax: number(&record, ax, "xAcceleration")?,
            ay: number(&record, ay, "yAcceleration")?,
        };
        let speed = row.vx.hypot(row.vy);
        if speed < SPEED_RANGE.0 || speed > SPEED_RANGE.1 {
            return Err(DataError::MalformedRecord {
                line,
                reason: format!("speed {speed:.2} m/s outside the plausible range"),
            });
        }
        if row.length <= 0.0 || row.width <= 0.0 {
            return Err(DataError::MalformedRecord {
                line,
                reason: "vehicle dimensions must be positive".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Straight lanes between consecutive markings. Marking values are image y
/// coordinates. The lower carriageway drives towards +x and gets the first
/// lane ids, rightmost lane first; the upper carriageway follows.
fn lanes_from_markings(upper: &[f64], lower: &[f64], x_start: f64, x_end: f64) -> Result<LaneMap, DataError> {
    let mut lanes = Vec::new();
    let mut add = |marks: &[f64], forward: bool| {
        let mut ys: Vec<f64> = marks.iter().map(|m| -m).collect();
        // Rightmost first: lowest ground y when driving +x, highest otherwise.
        ys.sort_by(|a, b| if forward { a.total_cmp(b) } else { b.total_cmp(a) });
        let base = lanes.len();
        let n = ys.len().saturating_sub(1);
        for i in 0..n {
            let y = (ys[i] + ys[i + 1]) / 2.0;
            let (a, b) = if forward {
                (Vec2::new(x_start, y), Vec2::new(x_end, y))
            } else {
                (Vec2::new(x_end, y), Vec2::new(x_start, y))
            };
            lanes.push(Lane {
                id: base + i,
                centreline: vec![a, b],
                width: (ys[i + 1] - ys[i]).abs(),
                left: (i + 1 < n).then_some(base + i + 1),
                right: (i > 0).then(|| base + i - 1),
            });
        }
    };
    add(lower, true);
    add(upper, false);
    Ok(LaneMap::new(lanes, Vec::new())?)
}
