//! Covariance task families, Gaussian datasets and reference principal
//! components.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, derived_stream, stream};

/// Smallest admissible ratio between the two largest eigenvalues.
pub const EIGENGAP_FLOOR: f64 = 1.1;
/// Eigenvalues are drawn uniformly from this range.
pub const EIGENVALUE_RANGE: (f64, f64) = (0.1, 2.0);
/// Largest angle between a T1 principal component and the diagonal.
pub const T1_MAX_TILT_DEG: f64 = 5.0;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskFamily {
    /// Unconstrained eigenbasis.
    T0,
    /// Principal component within a few degrees of a ±diagonal.
    T1,
    /// Principal component on a coordinate axis.
    T2,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 3] = [TaskFamily::T0, TaskFamily::T1, TaskFamily::T2];

    pub fn label(self) -> &'static str {
        match self {
            TaskFamily::T0 => "t0",
            TaskFamily::T1 => "t1",
            TaskFamily::T2 => "t2",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t0" => Ok(TaskFamily::T0),
            "t1" => Ok(TaskFamily::T1),
            "t2" => Ok(TaskFamily::T2),
            _ => Err(format!("unknown task family '{s}' (valid: t0, t1, t2)")),
        }
    }
}

/// How the reference principal component of a dataset is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcMode {
    /// Top eigenvector of the generating covariance.
    #[default]
    Generator,
    /// Top eigenvector of the sample covariance of the drawn inputs.
    Empirical,
}

/// A validated covariance matrix together with its family tag and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpec {
    sigma: DMatrix<f64>,
    pub family: TaskFamily,
    pub seed: u64,
}

impl CovarianceSpec {
    /// Checks symmetry, positive definiteness and the eigengap floor.
    pub fn new(sigma: DMatrix<f64>, family: TaskFamily, seed: u64) -> Result<Self> {
        validate_covariance(&sigma)?;
        let eigenvalues = sorted_eigenvalues(&sigma);
        let ratio = eigenvalues[0] / eigenvalues[1];
        if ratio < EIGENGAP_FLOOR {
            return Err(Error::Degenerate {
                ratio,
                floor: EIGENGAP_FLOOR,
            });
        }
        Ok(Self { sigma, family, seed })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma_rows(&self) -> Vec<Vec<f64>> {
        self.sigma.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.sigma)
    }
}

/// Symmetric (within 1e-12) with strictly positive eigenvalues, n ≥ 2.
pub fn validate_covariance(sigma: &DMatrix<f64>) -> Result<()> {
    let n = sigma.nrows();
    if n < 2 || sigma.ncols() != n {
        return Err(Error::Contract(format!(
            "covariance must be square with n >= 2, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    for i in 0..n {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Contract(format!("covariance not symmetric at ({i}, {j})")));
            }
        }
    }
    if sigma.clone().cholesky().is_none() || sorted_eigenvalues(sigma).last().is_none_or(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

fn sorted_eigenvalues(sigma: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(sigma.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Flips `v` so its first nonzero component is positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(&first) = v.iter().find(|c| **c != 0.0) {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
    v
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / norm).collect()
}

/// Unit top eigenvector of a symmetric matrix, without any gap check.
fn top_eigenvector(sigma: &DMatrix<f64>) -> Vec<f64> {
    let n = sigma.nrows();
    let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || sigma[(i, j)] == 0.0));
    if is_diagonal {
        // exact axis for diagonal matrices
        let axis = (0..n)
            .max_by(|&a, &b| sigma[(a, a)].total_cmp(&sigma[(b, b)]).then(b.cmp(&a)))
            .unwrap_or(0);
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        return v;
    }
    let eigen = SymmetricEigen::new(sigma.clone());
    let (top, _) = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    canonical_sign(normalized(eigen.eigenvectors.column(top).iter().copied().collect()))
}

/// First principal component of the generating covariance.
pub fn principal_component(spec: &CovarianceSpec) -> Result<Vec<f64>> {
    let eigenvalues = spec.eigenvalues();
    let ratio = eigenvalues[0] / eigenvalues[1];
    if ratio < EIGENGAP_FLOOR {
        return Err(Error::Degenerate {
            ratio,
            floor: EIGENGAP_FLOOR,
        });
    }
    Ok(top_eigenvector(&spec.sigma))
}

/// First principal component of the sample covariance `(1/M) Σ x xᵀ`
/// (the mean is known to be zero).
pub fn empirical_principal_component(inputs: &[f64], dim: usize) -> Vec<f64> {
    let rows = inputs.len() / dim;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in inputs.chunks_exact(dim) {
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += row[i] * row[j];
            }
        }
    }
    cov /= rows as f64;
    top_eigenvector(&cov)
}

fn draw_eigenvalues<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = EIGENVALUE_RANGE;
    loop {
        let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        if values[0] / values[1] >= EIGENGAP_FLOOR {
            return values;
        }
    }
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Orthonormal basis whose first column is `first` (unit); the remaining
/// columns are random.
fn complete_basis<R: Rng + ?Sized>(first: &DVector<f64>, rng: &mut R) -> DMatrix<f64> {
    let n = first.len();
    let mut columns: Vec<DVector<f64>> = vec![first.clone()];
    while columns.len() < n {
        let mut v = gaussian_vector(n, rng);
        for c in &columns {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            columns.push(v / norm);
        }
    }
    DMatrix::from_columns(&columns)
}

fn compose(basis: &DMatrix<f64>, eigenvalues: &[f64]) -> DMatrix<f64> {
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    let sigma = basis * lambda * basis.transpose();
    (&sigma + sigma.transpose()) * 0.5
}

/// Draws a covariance matrix from a task family.
///
/// - T0: uniformly random orthonormal eigenbasis.
/// - T1: top eigenvector `(1, …, 1)/√n` tilted by at most 5° in a random
///   direction, so all inputs are positively correlated along it.
/// - T2: diagonal, with the largest variance on a random axis.
///
/// Eigenvalues are uniform in (0.1, 2.0), redrawn until λ₁/λ₂ ≥ 1.1.
pub fn sample_covariance(family: TaskFamily, n: usize, seed: u64) -> Result<CovarianceSpec> {
    if n < 2 {
        return Err(Error::Contract(format!("task dimension must be >= 2, got {n}")));
    }
    let mut rng = stream(seed);
    let eigenvalues = draw_eigenvalues(n, &mut rng);
    let sigma = match family {
        TaskFamily::T0 => {
            let first = gaussian_vector(n, &mut rng).normalize();
            compose(&complete_basis(&first, &mut rng), &eigenvalues)
        }
        TaskFamily::T1 => {
            let diagonal = DVector::from_element(n, 1.0 / (n as f64).sqrt());
            let mut tilt = gaussian_vector(n, &mut rng);
            let proj = diagonal.dot(&tilt);
            tilt -= &diagonal * proj;
            let tilt = tilt.normalize();
            let angle = rng.random_range(0.0..T1_MAX_TILT_DEG).to_radians();
            let first = (&diagonal * angle.cos() + tilt * angle.sin()).normalize();
            compose(&complete_basis(&first, &mut rng), &eigenvalues)
        }
        TaskFamily::T2 => {
            let mut axes: Vec<usize> = (0..n).collect();
            axes.shuffle(&mut rng);
            let mut diagonal = vec![0.0; n];
            for (value, axis) in eigenvalues.iter().zip(axes) {
                diagonal[axis] = *value;
            }
            DMatrix::from_diagonal(&DVector::from_vec(diagonal))
        }
    };
    CovarianceSpec::new(sigma, family, seed)
}

/// A finite sample from a zero-mean Gaussian task plus the data every
/// individual is trained and scored against.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub spec: CovarianceSpec,
    /// Reference first principal component (unit, canonical sign).
    pub pc0: Vec<f64>,
    /// Initial weights shared by every evaluation on this dataset.
    pub w0: Vec<f64>,
    dim: usize,
    inputs: Vec<f64>,
    order: Vec<usize>,
}

/// Draws `m` samples `x = L z` with `L` the lower Cholesky factor of Σ.
///
/// The samples, initial weights and presentation order use independent
/// streams derived from `seed`.
pub fn generate_dataset(spec: CovarianceSpec, m: usize, seed: u64, pc_mode: PcMode) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::Contract("dataset needs at least one sample".into()));
    }
    let dim = spec.dim();
    let inputs = gaussian_samples(&spec.sigma, m, &mut derived_stream(seed, "samples", 0))?;
    let pc0 = match pc_mode {
        PcMode::Generator => principal_component(&spec)?,
        PcMode::Empirical => empirical_principal_component(&inputs, dim),
    };
    let w0 = random_unit_vector(dim, derive_seed(seed, "w0", 0));
    let order = presentation_order(m, derive_seed(seed, "order", 0));
    Ok(Dataset {
        seed,
        spec,
        pc0,
        w0,
        dim,
        inputs,
        order,
    })
}

/// `m` zero-mean draws from N(0, Σ), row-major.
pub fn gaussian_samples<R: Rng + ?Sized>(sigma: &DMatrix<f64>, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    let dim = sigma.nrows();
    let lower = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let mut samples = Vec::with_capacity(m * dim);
    for _ in 0..m {
        let z = gaussian_vector(dim, rng);
        samples.extend((&lower * z).iter().copied());
    }
    Ok(samples)
}

/// Uniform draw from the unit sphere.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed);
    loop {
        let v = gaussian_vector(dim, &mut rng);
        if v.norm() > 1e-6 {
            return v.normalize().iter().copied().collect();
        }
    }
}

/// Uniformly random permutation of `0..m`.
pub fn presentation_order(m: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut stream(seed));
    order
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    family: TaskFamily,
    seed: u64,
    sigma: Vec<Vec<f64>>,
    pc0: Vec<f64>,
    w0: Vec<f64>,
    #[serde(rename = "M")]
    m: usize,
    n: usize,
}

impl Dataset {
    /// Samples a covariance from `family` and draws a dataset from it; every
    /// random choice is a function of `seed`.
    pub fn generate(family: TaskFamily, dim: usize, m: usize, seed: u64, pc_mode: PcMode) -> Result<Self> {
        let spec = sample_covariance(family, dim, derive_seed(seed, "covariance", 0))?;
        generate_dataset(spec, m, seed, pc_mode)
    }

    /// Builds a dataset from explicit rows (row-major, `dim` columns).
    pub fn from_rows(spec: CovarianceSpec, inputs: Vec<f64>, pc0: Vec<f64>, w0: Vec<f64>, seed: u64) -> Result<Self> {
        let dim = spec.dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(dim) || pc0.len() != dim || w0.len() != dim {
            return Err(Error::Contract("dataset shape mismatch".into()));
        }
        let order = presentation_order(inputs.len() / dim, derive_seed(seed, "order", 0));
        Ok(Self {
            seed,
            spec,
            pc0,
            w0,
            dim,
            inputs,
            order,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples M.
    pub fn len(&self) -> usize {
        self.inputs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.inputs[index * self.dim..(index + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    /// Row-major samples.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Fixed presentation order used whenever a rule is trained on this dataset.
    pub fn presentation_order(&self) -> &[usize] {
        &self.order
    }

    pub fn with_w0(mut self, w0: Vec<f64>) -> Self {
        assert_eq!(w0.len(), self.dim);
        self.w0 = w0;
        self
    }

    /// Digest of everything an evaluation depends on.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for v in self.inputs.iter().chain(&self.pc0).chain(&self.w0) {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for i in &self.order {
            hasher.update((*i as u64).to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes `meta.json` and `inputs.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = DatasetMeta {
            family: self.spec.family,
            seed: self.seed,
            sigma: self.spec.sigma_rows(),
            pc0: self.pc0.clone(),
            w0: self.w0.clone(),
            m: self.len(),
            n: self.dim,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        let mut writer = csv::Writer::from_path(dir.join("inputs.csv"))?;
        writer.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        for row in self.rows() {
            writer.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a dataset directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let n = meta.n;
        let sigma = DMatrix::from_row_iterator(n, n, meta.sigma.iter().flatten().copied());
        if meta.sigma.len() != n || meta.sigma.iter().any(|r| r.len() != n) {
            return Err(Error::Format("sigma is not n x n".into()));
        }
        let spec = CovarianceSpec::new(sigma, meta.family, derive_seed(meta.seed, "covariance", 0))?;
        let mut reader = csv::Reader::from_path(dir.join("inputs.csv"))?;
        let mut inputs = Vec::with_capacity(meta.m * n);
        for record in reader.records() {
            let record = record?;
            if record.len() != n {
                return Err(Error::Format(format!("row has {} columns, expected {n}", record.len())));
            }
            for field in &record {
                inputs.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad number '{field}': {e}")))?,
                );
            }
        }
        if inputs.len() != meta.m * n {
            return Err(Error::Format(format!("expected {} rows", meta.m)));
        }
        Self::from_rows(spec, inputs, meta.pc0, meta.w0, meta.seed)
    }
}
