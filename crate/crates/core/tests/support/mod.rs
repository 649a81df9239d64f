//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod scm;

use std::path::Path;

use causaldrive::linalg::Matrix;
use causaldrive::reward::{reward, Outcome, RewardConfig, RewardProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Least squares through the normal equations `AᵀA x = Aᵀb`, solved by
/// Gaussian elimination with partial pivoting.
pub fn normal_equations(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut g = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = (0..m).map(|r| a.get(r, i) * a.get(r, j)).sum();
        }
        g[i][n] = (0..m).map(|r| a.get(r, i) * b[r]).sum();
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| g[x][col].abs().total_cmp(&g[y][col].abs()))
            .unwrap();
        g.swap(col, pivot);
        for row in col + 1..n {
            let f = g[row][col] / g[col][col];
            for k in col..=n {
                g[row][k] -= f * g[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| g[i][k] * x[k]).sum();
        x[i] = (g[i][n] - s) / g[i][i];
    }
    x
}

pub fn residual(a: &Matrix, x: &[f64], b: &[f64]) -> f64 {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Matrix::from_rows(&data)
}

/// Outcomes of a simple closed-form planner: the agent can keep its lane
/// behind a leader or move to either neighbour, at five speed offsets.
pub fn planner_candidates(rng: &mut ChaCha8Rng) -> Vec<Outcome> {
    let v0: f64 = rng.random_range(15.0..32.0);
    let leader_speed: f64 = rng.random_range(10.0..32.0);
    let gap: f64 = rng.random_range(5.0..80.0);
    let free = [rng.random_bool(0.6), rng.random_bool(0.6)];
    let horizon = 5.0;
    let mut out = Vec::with_capacity(15);
    for lane in 0..3 {
        for dv in [-10.0, -5.0, 0.0, 5.0, 10.0] {
            let fs = (v0 + dv).max(0.0);
            let (dh, lt): (Option<f64>, i32) = if lane == 0 {
                (Some(gap + (leader_speed - (v0 + fs) / 2.0) * horizon), 0)
            } else if free[lane - 1] {
                (None, 1)
            } else {
                (Some(rng.random_range(-5.0..30.0)), 1)
            };
            let crash = dh.is_some_and(|d| d < 0.0);
            let ef = 0.45 * fs * fs + if crash { -1e5 * dh.unwrap() } else { 0.0 };
            out.push(Outcome {
                lt,
                fs,
                dh: dh.map(|d| d.max(0.0)),
                ef,
                ad: !crash,
            });
        }
    }
    out
}

/// First index of the highest reward.
pub fn argmax(outcomes: &[Outcome], p: &RewardProfile, cfg: &RewardConfig) -> usize {
    let mut best = 0;
    for i in 1..outcomes.len() {
        if reward(&outcomes[i], p, cfg) > reward(&outcomes[best], p, cfg) {
            best = i;
        }
    }
    best
}

/// Profiles used to drive the synthetic planner.
pub const TRUE_PROFILES: [[f64; 6]; 5] = [
    [1.0, 2.0, 0.5, 0.5, 3.0, 0.0],
    [0.2, 1.0, 1.0, 0.0, 2.0, 0.0],
    [0.0, 0.5, 0.0, 1.0, 1.0, 0.0],
    [2.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.1, 0.3, 0.6, 0.2, 0.8, 0.1],
];

/// Writes a two-vehicle recording in the highD layout: a leader and a
/// follower 25 m behind it in the same lane of the lower carriageway, 8 s at
/// 25 Hz. The leader brakes from 30 to 22 m/s at t = 2 s; the follower does
/// the same 1 s later.
pub fn write_highd_fixture(dir: &Path, prefix: &str) {
    let rate = 25.0;
    let frames = 200;
    let speed = |t: f64, start: f64| 30.0 - 2.0 * (t - start).clamp(0.0, 4.0);
    let accel = |t: f64, start: f64| if (start..start + 4.0).contains(&t) { -2.0 } else { 0.0 };
    let mut rows = String::from("frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n");
    for (id, x0, brake) in [(1, 100.0, 2.0), (2, 70.5, 3.0)] {
        let mut x: f64 = x0;
        for f in 0..frames {
            let t = f as f64 / rate;
            let v = speed(t, brake);
            if f > 0 {
                x += v / rate;
            }
            // Image-frame y of the box top edge; the lane centre is at 22.
            rows.push_str(&format!(
                "{},{id},{x:.4},{:.4},4.5,1.8,{v:.4},0,{:.4},0,5\n",
                f + 1,
                22.0 - 0.9,
                accel(t, brake)
            ));
        }
    }
    std::fs::write(dir.join(format!("{prefix}tracks.csv")), rows).unwrap();
    std::fs::write(
        dir.join(format!("{prefix}recordingMeta.csv")),
        "id,frameRate,upperLaneMarkings,lowerLaneMarkings\n1,25,8.0;12.0;16.0,20.0;24.0;28.0\n",
    )
    .unwrap();
}
