//! Trial-averaged alignment fitness of a rule on a dataset and on a batch of
//! datasets from a task family.
//!
//! Per trial the score is `|cos ∠(w_i, PC₀)| - α |‖w_i‖₂ - 1|`, averaged over
//! the post-update weights `w_1 ..= w_M`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plasticity::{run_trials, PlasticityRule};
use crate::tasks::{Dataset, PcMode};

/// Per-trial norm penalty ceiling; also the penalty of diverged trials.
pub const NORM_PENALTY_CAP: f64 = 10.0;
/// Below this norm the alignment term is taken to be zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessConfig {
    /// Weight α of the norm regularizer.
    pub alpha: f64,
    /// Learning rate η.
    pub eta: f64,
    /// Datasets per family evaluation (K).
    pub k: usize,
    /// Trials per dataset (M).
    pub m: usize,
    /// Input dimension n of generated datasets.
    pub dim: usize,
    /// Source of the reference principal component of generated datasets.
    pub pc_mode: PcMode,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            eta: 0.01,
            k: 10,
            m: 1000,
            dim: 2,
            pc_mode: PcMode::Generator,
        }
    }
}

impl FitnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Contract(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Contract(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.k == 0 || self.m == 0 {
            return Err(Error::Contract("K and M must be at least 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::Contract(format!("dimension must be >= 2, got {}", self.dim)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub per_trial_alignment: Vec<f64>,
    pub per_trial_norm_penalty: Vec<f64>,
    pub dataset_score: f64,
    pub diverged_at: Option<usize>,
}

impl FitnessReport {
    /// CSV with columns `trial, alignment, norm_penalty`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["trial", "alignment", "norm_penalty"])?;
        for (i, (a, p)) in self.per_trial_alignment.iter().zip(&self.per_trial_norm_penalty).enumerate() {
            writer.write_record([(i + 1).to_string(), format!("{a:?}"), format!("{p:?}")])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// JSON summary without the per-trial traces.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dataset_score": self.dataset_score,
            "diverged_at": self.diverged_at,
            "trials": self.per_trial_alignment.len(),
        })
    }
}

/// `(|cos ∠(w, pc0)|, min(|‖w‖ - 1|, cap))`; non-finite or vanishing weights
/// give alignment 0.
fn trial_terms(w: &[f64], pc0: &[f64]) -> (f64, f64) {
    if w.iter().any(|v| !v.is_finite()) {
        return (0.0, NORM_PENALTY_CAP);
    }
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (norm, dot) = if scale > 1e-150 && scale < 1e150 {
        (w.iter().map(|v| v * v).sum::<f64>().sqrt(), w.iter().zip(pc0).map(|(a, b)| a * b).sum::<f64>())
    } else if scale == 0.0 {
        (0.0, 0.0)
    } else {
        // rescale to avoid overflow or underflow in the squares
        let norm = w.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt();
        let dot = w.iter().zip(pc0).map(|(a, b)| (a / scale) * b).sum::<f64>();
        (norm * scale, dot * scale)
    };
    if norm < ZERO_NORM {
        return (0.0, 1.0);
    }
    let alignment = (dot.abs() / norm).min(1.0);
    let penalty = (norm - 1.0).abs().min(NORM_PENALTY_CAP);
    (alignment, penalty)
}

/// Per-trial fitness term, with `w = 0` scored as alignment 0 and penalty 1.
pub fn degenerate_trial_score(w: &[f64], pc0: &[f64], alpha: f64) -> f64 {
    let (alignment, penalty) = trial_terms(w, pc0);
    alignment - alpha * penalty
}

fn score_rule<F>(rule: &PlasticityRule, dataset: &Dataset, cfg: &FitnessConfig, mut record: F) -> (f64, Option<usize>)
where
    F: FnMut(f64, f64),
{
    let m = dataset.len();
    let mut total = 0.0;
    let diverged_at = run_trials(rule, dataset, &dataset.w0, cfg.eta, dataset.presentation_order(), |_, w, _| {
        let (a, p) = trial_terms(w, &dataset.pc0);
        total += a - cfg.alpha * p;
        record(a, p);
    });
    if let Some(at) = diverged_at {
        for _ in at..m {
            total += -cfg.alpha * NORM_PENALTY_CAP;
            record(0.0, NORM_PENALTY_CAP);
        }
    }
    (total / m as f64, diverged_at)
}

/// Trains `rule` from the dataset's `w0` in its fixed presentation order and
/// averages the per-trial terms.
pub fn dataset_fitness(rule: &PlasticityRule, dataset: &Dataset, cfg: &FitnessConfig) -> FitnessReport {
    let mut per_trial_alignment = Vec::with_capacity(dataset.len());
    let mut per_trial_norm_penalty = Vec::with_capacity(dataset.len());
    let (dataset_score, diverged_at) = score_rule(rule, dataset, cfg, |a, p| {
        per_trial_alignment.push(a);
        per_trial_norm_penalty.push(p);
    });
    FitnessReport {
        per_trial_alignment,
        per_trial_norm_penalty,
        dataset_score,
        diverged_at,
    }
}

/// `dataset_fitness(..).dataset_score` without recording the traces.
pub fn dataset_score(rule: &PlasticityRule, dataset: &Dataset, cfg: &FitnessConfig) -> f64 {
    score_rule(rule, dataset, cfg, |_, _| {}).0
}

/// Scores an existing weight sequence `w_1 ..= w_M` against `pc0`.
pub fn score_weights<'a, I>(weights: I, pc0: &[f64], alpha: f64) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for w in weights {
        total += degenerate_trial_score(w, pc0, alpha);
        count += 1;
    }
    total / count as f64
}

/// Mean dataset score over the batch, summed in batch order.
pub fn family_fitness(rule: &PlasticityRule, datasets: &[Dataset], cfg: &FitnessConfig) -> f64 {
    assert!(!datasets.is_empty(), "family fitness needs at least one dataset");
    let scores: Vec<f64> = datasets.par_iter().map(|d| dataset_score(rule, d, cfg)).collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}
