//! Expected-update dynamics of plasticity rules: vector fields, fixed points,
//! phase planes, trajectories and held-out generalization tables.
//!
//! Fields report the expected update per unit learning rate; the Euler step
//! of [`integrate_trajectory`] plays the role of η.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{dataset_score, FitnessConfig};
use crate::plasticity::{forward, PlasticityRule};
use crate::seed::{derive_seed, stream};
use crate::tasks::{gaussian_samples, validate_covariance, Dataset, TaskFamily};

/// Smallest Monte-Carlo sample count accepted by the estimators.
pub const MIN_MC_SAMPLES: usize = 1000;
/// Residual a Newton iterate must reach to be reported as a fixed point.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-10;
/// Fixed points closer than this are merged.
pub const DEDUP_DISTANCE: f64 = 1e-6;
/// Central-difference step of the Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Field norm below which a trajectory counts as converged.
pub const CONVERGENCE_NORM: f64 = 1e-8;
/// Weight norm beyond which a trajectory counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e3;

const MC_CHUNK: usize = 4096;
const NEWTON_ITERATIONS: usize = 100;
const BACKTRACK_HALVINGS: usize = 30;

/// Closed-form expected lr₃ update `(w_j² − 1)Σ_jj + w_j Σ_{i≠j} w_i Σ_ij`.
///
/// Even in `w` bit for bit: every term is either a square or a product of
/// two sign-flipped factors.
pub fn expected_update_lr3(sigma: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let n = w.len();
    assert_eq!(sigma.nrows(), n, "weight and covariance dimensions differ");
    (0..n)
        .map(|j| {
            let cross: f64 = (0..n).filter(|&i| i != j).map(|i| w[i] * sigma[(i, j)]).sum();
            (w[j] * w[j] - 1.0) * sigma[(j, j)] + w[j] * cross
        })
        .collect()
}

/// Monte-Carlo estimate of an expected update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// Kernel moments over fixed samples; chunks are merged in order so the
/// result does not depend on the thread count.
fn sample_moments(rule: &PlasticityRule, samples: &[f64], w: &[f64]) -> McEstimate {
    let n = w.len();
    let partials: Vec<Vec<Moments>> = samples
        .par_chunks(MC_CHUNK * n)
        .map(|chunk| {
            let mut acc = vec![Moments::default(); n];
            for x in chunk.chunks_exact(n) {
                let y = forward(w, x);
                for j in 0..n {
                    acc[j].push(rule.apply(w[j], x[j], y));
                }
            }
            acc
        })
        .collect();
    let total = partials.into_iter().fold(vec![Moments::default(); n], |acc, part| {
        acc.into_iter().zip(part).map(|(a, b)| a.merge(b)).collect()
    });
    McEstimate {
        mean: total.iter().map(|m| m.mean).collect(),
        stderr: total
            .iter()
            .map(|m| {
                let variance = if m.count > 1.0 { m.m2 / (m.count - 1.0) } else { 0.0 };
                (variance / m.count).sqrt()
            })
            .collect(),
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Contract(format!(
            "need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {samples}"
        )));
    }
    Ok(())
}

/// Draws `samples` inputs from N(0, Σ), sets `y = w·x` and averages the
/// kernel componentwise.
pub fn expected_update_mc(
    rule: &PlasticityRule,
    sigma: &DMatrix<f64>,
    w: &[f64],
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_samples(samples)?;
    validate_covariance(sigma)?;
    if w.len() != sigma.nrows() {
        return Err(Error::Contract("weight and covariance dimensions differ".into()));
    }
    let xs = gaussian_samples(sigma, samples, &mut stream(seed))?;
    Ok(sample_moments(rule, &xs, w))
}

/// How a [`VectorField`] computes its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ClosedFormLr3,
    MonteCarlo { rule: String, samples: usize, seed: u64 },
}

#[derive(Clone, Debug)]
enum Evaluator {
    ClosedFormLr3,
    /// Common random numbers: every evaluation reuses the same samples, so
    /// the field is a deterministic smooth function of `w`.
    MonteCarlo { rule: PlasticityRule, samples: Vec<f64> },
}

/// The map `w ↦ E[Δw]` for a fixed input covariance.
#[derive(Clone, Debug)]
pub struct VectorField {
    sigma: DMatrix<f64>,
    evaluator: Evaluator,
    provenance: Provenance,
}

impl VectorField {
    pub fn closed_form_lr3(sigma: DMatrix<f64>) -> Result<Self> {
        validate_covariance(&sigma)?;
        Ok(Self {
            sigma,
            evaluator: Evaluator::ClosedFormLr3,
            provenance: Provenance::ClosedFormLr3,
        })
    }

    pub fn monte_carlo(rule: PlasticityRule, sigma: DMatrix<f64>, samples: usize, seed: u64) -> Result<Self> {
        check_samples(samples)?;
        validate_covariance(&sigma)?;
        let xs = gaussian_samples(&sigma, samples, &mut stream(seed))?;
        Ok(Self {
            provenance: Provenance::MonteCarlo {
                rule: rule.label(),
                samples,
                seed,
            },
            sigma,
            evaluator: Evaluator::MonteCarlo { rule, samples: xs },
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn evaluate(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim(), "weight and field dimensions differ");
        match &self.evaluator {
            Evaluator::ClosedFormLr3 => expected_update_lr3(&self.sigma, w),
            Evaluator::MonteCarlo { rule, samples } => sample_moments(rule, samples, w).mean,
        }
    }

    /// Central-difference Jacobian, row `i` holding `∂F_i/∂w_j`.
    pub fn jacobian(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut probe = w.to_vec();
        for j in 0..n {
            probe[j] = w[j] + JACOBIAN_STEP;
            let plus = self.evaluate(&probe);
            probe[j] = w[j] - JACOBIAN_STEP;
            let minus = self.evaluate(&probe);
            probe[j] = w[j];
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * JACOBIAN_STEP);
            }
        }
        jac
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn require_planar(field: &VectorField) -> Result<()> {
    if field.dim() != 2 {
        return Err(Error::Contract(format!(
            "planar analysis needs a 2-dimensional field, got {}",
            field.dim()
        )));
    }
    Ok(())
}

/// Axis-aligned rectangle in the weight plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl SearchBox {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        if !(0..2).all(|k| lower[k].is_finite() && upper[k].is_finite() && lower[k] < upper[k]) {
            return Err(Error::Contract(format!("empty or unbounded box {lower:?}..{upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    /// `[-half, half]²`.
    pub fn symmetric(half: f64) -> Result<Self> {
        Self::new([-half, -half], [half, half])
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        (0..2).all(|k| self.lower[k] <= w[k] && w[k] <= self.upper[k])
    }

    /// `grid` evenly spaced coordinates spanning axis `k` end to end.
    /// Mirror-symmetric boxes yield exactly negated coordinates.
    fn axis(&self, k: usize, grid: usize) -> Vec<f64> {
        let center = 0.5 * (self.lower[k] + self.upper[k]);
        let half = 0.5 * (self.upper[k] - self.lower[k]);
        if grid == 1 {
            return vec![center];
        }
        let last = (grid - 1) as f64;
        (0..grid)
            .map(|i| center + half * ((2 * i) as f64 - last) / last)
            .collect()
    }

    /// Centers of a `grid × grid` cell partition along axis `k`.
    fn cell_centers(&self, k: usize, grid: usize) -> Vec<f64> {
        let width = (self.upper[k] - self.lower[k]) / grid as f64;
        (0..grid).map(|i| self.lower[k] + (i as f64 + 0.5) * width).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    /// Mixed-sign eigenvalue real parts; non-hyperbolic points also land here.
    Saddle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub location: Vec<f64>,
    /// Norm of the field at `location`.
    pub residual: f64,
    pub stability: Stability,
    /// Real parts of the Jacobian eigenvalues, ascending.
    pub eigenvalue_real_parts: [f64; 2],
}

/// Real parts of the eigenvalues of a 2×2 matrix, ascending.
fn eigenvalue_real_parts(jac: &DMatrix<f64>) -> [f64; 2] {
    let trace = jac[(0, 0)] + jac[(1, 1)];
    let det = jac[(0, 0)] * jac[(1, 1)] - jac[(0, 1)] * jac[(1, 0)];
    let disc = trace * trace - 4.0 * det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        [0.5 * (trace - root), 0.5 * (trace + root)]
    } else {
        [0.5 * trace; 2]
    }
}

pub fn classify(field: &VectorField, w: &[f64]) -> (Stability, [f64; 2]) {
    let re = eigenvalue_real_parts(&field.jacobian(w));
    let stability = if re[1] < 0.0 {
        Stability::Stable
    } else if re[0] > 0.0 {
        Stability::Unstable
    } else {
        Stability::Saddle
    };
    (stability, re)
}

/// Damped Newton iteration; `None` when the iterate stalls or runs off.
fn newton(field: &VectorField, start: [f64; 2]) -> Option<([f64; 2], f64)> {
    let mut w = start;
    let mut f = field.evaluate(&w);
    let mut residual = norm(&f);
    for _ in 0..NEWTON_ITERATIONS {
        if !residual.is_finite() {
            return None;
        }
        if residual <= FIXED_POINT_RESIDUAL {
            return Some((w, residual));
        }
        let jac = field.jacobian(&w);
        let det = jac[(0, 0)] * jac[(1, 1)] - jac[(0, 1)] * jac[(1, 0)];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step = [
            -(jac[(1, 1)] * f[0] - jac[(0, 1)] * f[1]) / det,
            -(jac[(0, 0)] * f[1] - jac[(1, 0)] * f[0]) / det,
        ];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..BACKTRACK_HALVINGS {
            let trial = [w[0] + t * step[0], w[1] + t * step[1]];
            let f_trial = field.evaluate(&trial);
            let r_trial = norm(&f_trial);
            if r_trial < residual {
                w = trial;
                f = f_trial;
                residual = r_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || norm(&w) > DIVERGENCE_NORM {
            return None;
        }
    }
    (residual <= FIXED_POINT_RESIDUAL).then_some((w, residual))
}

/// Newton-polished zeros of a planar field, seeded from the centers of a
/// `grid × grid` partition of `search_box`. Points outside the box and
/// seeds whose iteration fails are dropped. Results are sorted by location.
pub fn find_fixed_points(field: &VectorField, search_box: &SearchBox, grid: usize) -> Result<Vec<FixedPointReport>> {
    require_planar(field)?;
    if grid == 0 {
        return Err(Error::Contract("grid must be at least 1".into()));
    }
    let xs = search_box.cell_centers(0, grid);
    let ys = search_box.cell_centers(1, grid);
    let seeds: Vec<[f64; 2]> = xs.iter().flat_map(|&a| ys.iter().map(move |&b| [a, b])).collect();
    let roots: Vec<([f64; 2], f64)> = seeds
        .par_iter()
        .filter_map(|&seed| newton(field, seed))
        .filter(|(w, _)| search_box.contains(w))
        .collect();

    let mut unique: Vec<([f64; 2], f64)> = Vec::new();
    for (w, residual) in roots {
        let duplicate = unique
            .iter()
            .any(|(u, _)| ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2)).sqrt() < DEDUP_DISTANCE);
        if !duplicate {
            unique.push((w, residual));
        }
    }
    unique.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    Ok(unique
        .into_iter()
        .map(|(w, residual)| {
            let (stability, re) = classify(field, &w);
            FixedPointReport {
                location: w.to_vec(),
                residual,
                stability,
                eigenvalue_real_parts: re,
            }
        })
        .collect())
}

/// One phase-plane sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub w: [f64; 2],
    pub dw: [f64; 2],
}

/// Field values on a uniform `grid × grid` lattice spanning `plane`,
/// `w1` varying slowest.
pub fn phase_plane(field: &VectorField, plane: &SearchBox, grid: usize) -> Result<Vec<FieldSample>> {
    require_planar(field)?;
    if grid == 0 {
        return Err(Error::Contract("grid must be at least 1".into()));
    }
    let xs = plane.axis(0, grid);
    let ys = plane.axis(1, grid);
    let points: Vec<[f64; 2]> = xs.iter().flat_map(|&a| ys.iter().map(move |&b| [a, b])).collect();
    Ok(points
        .into_par_iter()
        .map(|w| {
            let dw = field.evaluate(&w);
            FieldSample { w, dw: [dw[0], dw[1]] }
        })
        .collect())
}

pub fn write_phase_plane_csv<W: Write>(samples: &[FieldSample], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["w1", "w2", "dw1", "dw2"])?;
    for s in samples {
        writer.write_record([s.w[0], s.w[1], s.dw[0], s.dw[1]].map(|v| format!("{v:?}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Visited points, starting with `w0`.
    pub path: Vec<Vec<f64>>,
    pub converged: bool,
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_point(&self) -> &[f64] {
        self.path.last().expect("path holds the start point")
    }

    /// CSV with columns `step, w1..wn`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let n = self.path[0].len();
        let mut header = vec!["step".to_string()];
        header.extend((1..=n).map(|j| format!("w{j}")));
        writer.write_record(&header)?;
        for (step, w) in self.path.iter().enumerate() {
            let mut record = vec![step.to_string()];
            record.extend(w.iter().map(|v| format!("{v:?}")));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Explicit Euler on `dw/dt = F(w)` until `‖F‖ < 1e-8`, `max_steps` steps,
/// or `‖w‖ > 1e3`.
pub fn integrate_trajectory(field: &VectorField, w0: &[f64], step: f64, max_steps: usize) -> Result<Trajectory> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Contract(format!("step must be positive, got {step}")));
    }
    if w0.len() != field.dim() {
        return Err(Error::Contract("start point and field dimensions differ".into()));
    }
    let mut w = w0.to_vec();
    let mut path = vec![w.clone()];
    let mut converged = false;
    let mut diverged = false;
    for taken in 0..=max_steps {
        let f = field.evaluate(&w);
        if norm(&f) < CONVERGENCE_NORM {
            converged = true;
            break;
        }
        if taken == max_steps {
            break;
        }
        w.iter_mut().zip(&f).for_each(|(wj, fj)| *wj += step * fj);
        path.push(w.clone());
        let size = norm(&w);
        if !size.is_finite() || size > DIVERGENCE_NORM {
            diverged = true;
            break;
        }
    }
    Ok(Trajectory {
        path,
        converged,
        diverged,
    })
}

/// One cell of the long-form generalization table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub rule: String,
    pub family: TaskFamily,
    pub dataset_seed: u64,
    pub score: f64,
}

/// Seed of held-out dataset `index` of `family`. The purpose string keeps
/// these disjoint from the training batches of any run.
pub fn heldout_seed(master_seed: u64, family: TaskFamily, index: usize) -> u64 {
    derive_seed(master_seed, &format!("heldout-{}", family.label()), index as u64)
}

/// Scores every rule on `n_eval` fresh datasets per family. Rows are ordered
/// by family, then rule, then dataset.
pub fn generalization_matrix(
    rules: &[PlasticityRule],
    families: &[TaskFamily],
    n_eval: usize,
    cfg: &FitnessConfig,
    master_seed: u64,
) -> Result<Vec<GeneralizationRow>> {
    if n_eval == 0 {
        return Err(Error::Contract("n_eval must be at least 1".into()));
    }
    cfg.validate()?;
    let mut rows = Vec::with_capacity(rules.len() * families.len() * n_eval);
    for &family in families {
        let datasets: Vec<Dataset> = (0..n_eval)
            .into_par_iter()
            .map(|i| Dataset::generate(family, cfg.dim, cfg.m, heldout_seed(master_seed, family, i), cfg.pc_mode))
            .collect::<Result<_>>()?;
        for rule in rules {
            let label = rule.label();
            let scores: Vec<f64> = datasets.par_iter().map(|d| dataset_score(rule, d, cfg)).collect();
            rows.extend(datasets.iter().zip(scores).map(|(d, score)| GeneralizationRow {
                rule: label.clone(),
                family,
                dataset_seed: d.seed,
                score,
            }));
        }
    }
    Ok(rows)
}

pub fn write_generalization_csv<W: Write>(rows: &[GeneralizationRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["rule", "family", "dataset_seed", "score"])?;
    for row in rows {
        writer.write_record([
            row.rule.clone(),
            row.family.label().to_string(),
            row.dataset_seed.to_string(),
            format!("{:?}", row.score),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
