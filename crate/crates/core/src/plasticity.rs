//! Online training of the linear single-output neuron `y = w · x` with a
//! plasticity rule `Δw_j = η f(w_j, x_j, y)`.

use std::io::Write;

use crate::cgp::{parse_rule, to_infix, RuleExpression};
use crate::error::{Error, Result};
use crate::tasks::Dataset;

/// Names accepted by [`PlasticityRule::builtin`] with their kernels.
pub const BUILTIN_RULES: [(&str, &str); 5] = [
    ("oja", "y*(x - w*y)"),
    ("lr1", "(2*y + 1.0 + w)*(x - w*y)"),
    ("lr2", "2*y*(x - w*y)"),
    ("lr3", "(-x)*(x - w*y)"),
    ("lr4", "(y + w*x)*(x - w*y)"),
];

/// A plasticity kernel `f`; the learning rate is supplied at training time.
#[derive(Clone, Debug, PartialEq)]
pub struct PlasticityRule {
    pub kernel: RuleExpression,
    pub name: Option<String>,
}

impl PlasticityRule {
    pub fn new(kernel: RuleExpression) -> Self {
        Self { kernel, name: None }
    }

    pub fn named(name: impl Into<String>, kernel: RuleExpression) -> Self {
        Self {
            kernel,
            name: Some(name.into()),
        }
    }

    /// One of `oja`, `lr1`, `lr2`, `lr3`, `lr4`.
    pub fn builtin(name: &str) -> Result<Self> {
        let (name, source) = BUILTIN_RULES
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownRule {
                name: name.to_string(),
                valid: BUILTIN_RULES.map(|(n, _)| n).join(", "),
            })?;
        Ok(Self::named(*name, parse_rule(source)?))
    }

    /// Parses a kernel written in the rule language.
    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self::new(parse_rule(source)?))
    }

    /// The name if set, otherwise the simplified infix kernel.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| to_infix(&self.kernel))
    }

    #[inline]
    pub fn apply(&self, w: f64, x: f64, y: f64) -> f64 {
        self.kernel.evaluate(w, x, y)
    }
}

/// Output of the linear neuron.
///
/// # Panics
///
/// If `w` and `x` differ in length.
#[inline]
pub fn forward(w: &[f64], x: &[f64]) -> f64 {
    assert_eq!(w.len(), x.len(), "weight and input dimensions differ");
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Weights before and after every trial, and the output of every trial.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTrajectory {
    /// `w_0 ..= w_M`; truncated after the last finite vector on divergence.
    pub weights: Vec<Vec<f64>>,
    /// `y^(1) ..= y^(M)`, up to and including the diverging trial.
    pub outputs: Vec<f64>,
    /// 1-based trial whose update produced a non-finite weight.
    pub diverged_at: Option<usize>,
}

impl WeightTrajectory {
    pub fn final_weights(&self) -> &[f64] {
        self.weights.last().expect("trajectory holds w0")
    }

    /// CSV with columns `trial, w_0..w_{n-1}, y` (trial 0 has an empty `y`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let n = self.weights[0].len();
        let mut header = vec!["trial".to_string()];
        header.extend((0..n).map(|j| format!("w_{j}")));
        header.push("y".into());
        writer.write_record(&header)?;
        for (trial, w) in self.weights.iter().enumerate() {
            let mut record = vec![trial.to_string()];
            record.extend(w.iter().map(|v| format!("{v:?}")));
            record.push(if trial == 0 {
                String::new()
            } else {
                format!("{:?}", self.outputs[trial - 1])
            });
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Shared training loop. Calls `visit(trial, w_trial, y_trial)` after each
/// update and returns the diverging trial, if any.
pub(crate) fn run_trials<F>(
    rule: &PlasticityRule,
    dataset: &Dataset,
    w0: &[f64],
    eta: f64,
    order: &[usize],
    mut visit: F,
) -> Option<usize>
where
    F: FnMut(usize, &[f64], f64),
{
    let n = w0.len();
    let mut w = w0.to_vec();
    let mut next = vec![0.0; n];
    for (i, &row) in order.iter().enumerate() {
        let x = dataset.row(row);
        let y = forward(&w, x);
        // synchronous: every component reads the pre-update weights
        for j in 0..n {
            next[j] = w[j] + eta * rule.apply(w[j], x[j], y);
        }
        std::mem::swap(&mut w, &mut next);
        let trial = i + 1;
        visit(trial, &w, y);
        if w.iter().any(|v| !v.is_finite()) {
            return Some(trial);
        }
    }
    None
}

fn check_training_inputs(dataset: &Dataset, w0: &[f64], eta: f64, order: &[usize]) -> Result<()> {
    if w0.len() != dataset.dim() {
        return Err(Error::Contract(format!(
            "w0 has {} components, dataset has {}",
            w0.len(),
            dataset.dim()
        )));
    }
    let norm = w0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("w0 must have unit norm, got {norm}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Contract(format!("learning rate must be positive, got {eta}")));
    }
    let m = dataset.len();
    let mut seen = vec![false; m];
    if order.len() != m || !order.iter().all(|&i| i < m && !std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Contract("presentation order is not a permutation of the dataset".into()));
    }
    Ok(())
}

/// Presents every sample once in `order`, updating the weights after each.
pub fn train(rule: &PlasticityRule, dataset: &Dataset, w0: &[f64], eta: f64, order: &[usize]) -> Result<WeightTrajectory> {
    check_training_inputs(dataset, w0, eta, order)?;
    let mut weights = Vec::with_capacity(order.len() + 1);
    weights.push(w0.to_vec());
    let mut outputs = Vec::with_capacity(order.len());
    let diverged_at = run_trials(rule, dataset, w0, eta, order, |_, w, y| {
        outputs.push(y);
        if w.iter().all(|v| v.is_finite()) {
            weights.push(w.to_vec());
        }
    });
    Ok(WeightTrajectory {
        weights,
        outputs,
        diverged_at,
    })
}

/// [`train`] from the dataset's own `w0` and presentation order.
pub fn train_on(rule: &PlasticityRule, dataset: &Dataset, eta: f64) -> Result<WeightTrajectory> {
    train(rule, dataset, &dataset.w0, eta, dataset.presentation_order())
}
