//! Leave-one-subject-out evaluation, source-only hyperparameter tuning and metrics.

use std::ops::Range;

use log::{info, warn};
use nalgebra::DMatrix;

use crate::benchmarks::{majority_vote, BenchmarkConfig};
use crate::error::{data, param, Result};
use crate::onda::{run_stream, Hyperparams, Label};

/// Feature stream of one subject at a fixed cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectStream {
    pub id: String,
    /// One row per frame.
    pub features: DMatrix<f64>,
    pub labels: Vec<Label>,
    pub cadence_minutes: usize,
    /// Frames around the transition that are never scored or used for training.
    pub excluded: Range<usize>,
}

impl SubjectStream {
    pub fn new(
        id: impl Into<String>,
        features: DMatrix<f64>,
        labels: Vec<Label>,
        cadence_minutes: usize,
        excluded: Range<usize>,
    ) -> Result<Self> {
        let id = id.into();
        if labels.len() != features.nrows() {
            return Err(data(format!(
                "subject {id}: {} labels for {} frames",
                labels.len(),
                features.nrows()
            )));
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(data(format!("subject {id}: labels must be +1 or -1")));
        }
        let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
        if changes > 1 {
            return Err(data(format!(
                "subject {id}: labels change {changes} times; at most one transition is allowed"
            )));
        }
        if excluded.start > excluded.end || excluded.end > labels.len() {
            return Err(data(format!("subject {id}: excluded window outside the stream")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(data(format!("subject {id}: non-finite features")));
        }
        Ok(Self {
            id,
            features,
            labels,
            cadence_minutes,
            excluded,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_scored(&self, frame: usize) -> bool {
        !self.excluded.contains(&frame)
    }

    pub fn scored_count(&self) -> usize {
        self.len() - self.excluded.len()
    }

    /// Frames outside the excluded window with their labels.
    pub fn training_set(&self) -> (DMatrix<f64>, Vec<Label>) {
        let keep: Vec<usize> = (0..self.len()).filter(|&t| self.is_scored(t)).collect();
        let x = self.features.select_rows(keep.iter());
        let y = keep.iter().map(|&t| self.labels[t]).collect();
        (x, y)
    }
}

/// A single-source streaming classifier.
pub trait StreamMethod {
    fn name(&self) -> String;

    /// One label per target frame. Implementations must only use source labels and
    /// target features up to the frame being predicted.
    fn predict_stream(
        &self,
        source: &SubjectStream,
        target: &SubjectStream,
        refresh_every: usize,
    ) -> Result<Vec<Label>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Proposed(Hyperparams),
    Benchmark(BenchmarkConfig),
}

impl StreamMethod for Method {
    fn name(&self) -> String {
        match self {
            Method::Proposed(_) => "proposed".to_string(),
            Method::Benchmark(cfg) => cfg.method.name().to_string(),
        }
    }

    fn predict_stream(
        &self,
        source: &SubjectStream,
        target: &SubjectStream,
        refresh_every: usize,
    ) -> Result<Vec<Label>> {
        let (sx, sy) = source.training_set();
        match self {
            Method::Proposed(hp) => Ok(run_stream(&sx, &sy, &target.features, hp, refresh_every)?
                .predictions
                .iter()
                .map(|p| p.label)
                .collect()),
            Method::Benchmark(cfg) => cfg.run(&sx, &sy, &target.features),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// NaN when nothing is predicted positive.
    pub precision: f64,
    /// NaN when there are no positives.
    pub recall: f64,
}

impl Metrics {
    pub fn nan() -> Self {
        Self {
            accuracy: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
        }
    }
}

/// Accuracy, precision and recall with `+1` as the positive class.
pub fn metrics(truth: &[Label], predicted: &[Label]) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(data("metrics of an empty label set"));
    }
    if truth.len() != predicted.len() {
        return Err(data(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.iter().chain(predicted).any(|&y| y != 1 && y != -1) {
        return Err(data("labels must be +1 or -1"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (-1, 1) => fp += 1,
            (1, -1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Ok(Metrics {
        accuracy: (tp + tn) as f64 / truth.len() as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// Predictions and scores for one held-out target subject.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub target_id: String,
    pub source_ids: Vec<String>,
    /// Majority-vote label for every target frame (empty if the fold failed).
    pub predicted: Vec<Label>,
    pub truth: Vec<Label>,
    pub scored: Vec<bool>,
    pub metrics: Metrics,
    pub error: Option<String>,
}

impl FoldResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub folds: Vec<FoldResult>,
}

impl EvalReport {
    /// Mean of each metric over the successful folds. NaN entries propagate.
    pub fn average(&self) -> Metrics {
        let ok: Vec<&Metrics> = self
            .folds
            .iter()
            .filter(|f| !f.failed())
            .map(|f| &f.metrics)
            .collect();
        if ok.is_empty() {
            return Metrics::nan();
        }
        let n = ok.len() as f64;
        Metrics {
            accuracy: ok.iter().map(|m| m.accuracy).sum::<f64>() / n,
            precision: ok.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: ok.iter().map(|m| m.recall).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// Target frames between model refreshes.
    pub refresh_every: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { refresh_every: 6 }
    }
}

fn run_fold(
    streams: &[SubjectStream],
    target_idx: usize,
    method: &dyn StreamMethod,
    cfg: &EvalConfig,
) -> Result<(Vec<String>, Vec<Label>)> {
    let target = &streams[target_idx];
    let mut votes: Vec<Vec<Label>> = Vec::new();
    let mut ids = Vec::new();
    for (s, source) in streams.iter().enumerate() {
        if s == target_idx {
            continue;
        }
        if source.features.ncols() != target.features.ncols() {
            return Err(data(format!(
                "subjects {} and {} have different feature dimensions",
                source.id, target.id
            )));
        }
        let pred = method.predict_stream(source, target, cfg.refresh_every)?;
        if pred.len() != target.len() {
            return Err(data(format!(
                "method returned {} labels for {} frames",
                pred.len(),
                target.len()
            )));
        }
        ids.push(source.id.clone());
        votes.push(pred);
    }
    let combined = (0..target.len())
        .map(|t| majority_vote(&votes.iter().map(|v| v[t]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, combined))
}

/// Each subject in turn is the target; every other subject is a single source and
/// the per-frame labels are combined by majority vote. Only frames outside the
/// target's excluded window are scored. A failing fold is recorded and skipped.
pub fn loso_evaluate(
    streams: &[SubjectStream],
    method: &dyn StreamMethod,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if streams.len() < 2 {
        return Err(data("leave-one-subject-out needs at least 2 subjects"));
    }
    if cfg.refresh_every == 0 {
        return Err(param("refresh interval must be at least 1"));
    }
    let mut folds = Vec::with_capacity(streams.len());
    for (t, target) in streams.iter().enumerate() {
        let scored: Vec<bool> = (0..target.len()).map(|i| target.is_scored(i)).collect();
        let fold = match run_fold(streams, t, method, cfg) {
            Ok((source_ids, predicted)) => {
                let pick = |v: &[Label]| -> Vec<Label> {
                    v.iter().zip(&scored).filter(|(_, &s)| s).map(|(&y, _)| y).collect()
                };
                let m = metrics(&pick(&target.labels), &pick(&predicted))?;
                FoldResult {
                    target_id: target.id.clone(),
                    source_ids,
                    predicted,
                    truth: target.labels.clone(),
                    scored,
                    metrics: m,
                    error: None,
                }
            }
            Err(e) => {
                warn!("{} fold for target {} failed: {e}", method.name(), target.id);
                FoldResult {
                    target_id: target.id.clone(),
                    source_ids: Vec::new(),
                    predicted: Vec::new(),
                    truth: target.labels.clone(),
                    scored,
                    metrics: Metrics::nan(),
                    error: Some(e.to_string()),
                }
            }
        };
        folds.push(fold);
    }
    Ok(EvalReport {
        method: method.name(),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl Default for TuningGrid {
    /// `lambda1 = 20, 40, ..., 200` and `lambda2 = 0.002, 0.004, ..., 0.020`.
    fn default() -> Self {
        Self {
            lambda1: (1..=10).map(|i| 20.0 * i as f64).collect(),
            lambda2: (1..=10).map(|i| 0.002 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Mean inner-fold accuracy, rows indexed by `lambda1`, columns by `lambda2`
    /// in ascending order.
    pub scores: DMatrix<f64>,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
}

/// Picks `(lambda1, lambda2)` by leave-one-out over the source subjects only.
/// Ties go to the smallest `lambda1`, then the smallest `lambda2`.
pub fn tune(
    sources: &[SubjectStream],
    grid: &TuningGrid,
    base: &Hyperparams,
    cfg: &EvalConfig,
) -> Result<TuneResult> {
    tune_with(sources, grid, cfg, |l1, l2| {
        Method::Proposed(Hyperparams {
            lambda1: l1,
            lambda2: l2,
            ..base.clone()
        })
    })
}

/// [`tune`] with an arbitrary method family indexed by the grid.
pub fn tune_with<M, F>(
    sources: &[SubjectStream],
    grid: &TuningGrid,
    cfg: &EvalConfig,
    make: F,
) -> Result<TuneResult>
where
    M: StreamMethod,
    F: Fn(f64, f64) -> M,
{
    if grid.lambda1.is_empty() || grid.lambda2.is_empty() {
        return Err(param("tuning grid is empty"));
    }
    if sources.len() < 2 {
        return Err(data("tuning needs at least 2 source subjects"));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    };
    let l1s = sorted(&grid.lambda1);
    let l2s = sorted(&grid.lambda2);
    let mut scores = DMatrix::from_element(l1s.len(), l2s.len(), f64::NAN);
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, &l1) in l1s.iter().enumerate() {
        for (j, &l2) in l2s.iter().enumerate() {
            let report = loso_evaluate(sources, &make(l1, l2), cfg)?;
            let acc = report.average().accuracy;
            scores[(i, j)] = acc;
            info!("tune lambda1={l1} lambda2={l2} accuracy={acc:.4}");
            // Strict improvement keeps the earliest (smallest) cell on ties; NaN never wins.
            if acc.is_finite() && best.is_none_or(|(b, _, _)| acc > b) {
                best = Some((acc, i, j));
            }
        }
    }
    let (_, i, j) = best.ok_or_else(|| data("every tuning cell failed"))?;
    Ok(TuneResult {
        lambda1: l1s[i],
        lambda2: l2s[j],
        scores,
        lambda1_grid: l1s,
        lambda2_grid: l2s,
    })
}
