//! Scoring predicted agent adjacency against ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{discover, Discovery};
use crate::config::AnalysisConfig;
use crate::data::{AgentPair, SceneModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("edge {0} joins an agent outside the scene")]
    EdgeOutsideAgentSet(AgentPair),
    #[error("scene {0} has no ground-truth labels")]
    UnlabelledScene(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Counts over the undirected pairs of `agents`.
pub fn confusion(
    pred: &BTreeSet<AgentPair>,
    truth: &BTreeSet<AgentPair>,
    agents: &BTreeSet<String>,
) -> Result<ConfusionCounts, EvalError> {
    for e in pred.iter().chain(truth) {
        if !agents.contains(e.first()) || !agents.contains(e.second()) || e.first() == e.second() {
            return Err(EvalError::EdgeOutsideAgentSet(e.clone()));
        }
    }
    let n = agents.len() as u64;
    let pairs = n * n.saturating_sub(1) / 2;
    let tp = pred.intersection(truth).count() as u64;
    let fp = pred.difference(truth).count() as u64;
    let fn_ = truth.difference(pred).count() as u64;
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: pairs - tp - fp - fn_,
    })
}

/// Rates at one threshold; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: ConfusionCounts, threshold: f64) -> MetricReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    MetricReport {
        threshold,
        counts: c,
        precision,
        recall,
        fpr: ratio(c.fp, c.fp + c.tn),
        f1,
    }
}

/// The default sweep `0.0, 0.1, …, 1.0`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Counts for one discovered scene at `threshold`.
pub fn scene_counts(scene: &SceneModel, discovery: &Discovery, threshold: f64) -> Result<ConfusionCounts, EvalError> {
    let truth = scene
        .labels
        .as_ref()
        .ok_or_else(|| EvalError::UnlabelledScene(scene.name.clone()))?;
    let agents: BTreeSet<String> = scene.tracks.iter().map(|t| t.agent.clone()).collect();
    confusion(&discovery.graph(threshold).agent_adjacency(), truth, &agents)
}

/// Micro-averaged metrics per threshold from already computed discoveries.
pub fn sweep(
    scenes: &[SceneModel],
    discoveries: &[Discovery],
    thresholds: &[f64],
) -> Result<Vec<MetricReport>, EvalError> {
    thresholds
        .iter()
        .map(|&th| {
            let mut total = ConfusionCounts::default();
            for (s, d) in scenes.iter().zip(discoveries) {
                total += scene_counts(s, d, th)?;
            }
            Ok(metrics(total, th))
        })
        .collect()
}

/// Runs discovery once per scene (in parallel) and re-thresholds the cached
/// distances for every entry of `thresholds`.
pub fn roc_sweep(
    scenes: &[SceneModel],
    thresholds: &[f64],
    cfg: &AnalysisConfig,
) -> Result<Vec<MetricReport>, EvalError> {
    if let Some(s) = scenes.iter().find(|s| s.labels.is_none()) {
        return Err(EvalError::UnlabelledScene(s.name.clone()));
    }
    let discoveries: Vec<Discovery> = scenes.par_iter().map(|s| discover(s, cfg)).collect();
    sweep(scenes, &discoveries, thresholds)
}

/// Report with the highest F1; ties go to the lower threshold.
pub fn best_f1(reports: &[MetricReport]) -> Option<&MetricReport> {
    reports
        .iter()
        .filter(|r| r.f1.is_some())
        .fold(None, |best: Option<&MetricReport>, r| match best {
            Some(b) if b.f1 >= r.f1 => Some(b),
            _ => Some(r),
        })
}

/// Delimited table with one row per report. Undefined rates are left empty.
pub fn roc_csv(reports: &[MetricReport]) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("threshold,tp,fp,fn,tn,precision,recall,fpr,f1\n");
    for r in reports {
        let c = r.counts;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.threshold,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            cell(r.precision),
            cell(r.recall),
            cell(r.fpr),
            cell(r.f1)
        );
    }
    out
}
