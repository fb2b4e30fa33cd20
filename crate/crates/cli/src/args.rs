use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use plastigen::tasks::TaskFamily;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "plastigen", version, about = "Evolve and analyse synaptic plasticity rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Evolve a plasticity rule on one task family
    Evolve(EvolveArgs),
    /// Score rules on held-out datasets
    Eval(EvalArgs),
    /// Expected-update field, fixed points and trajectories of a rule
    PhasePlane(PhasePlaneArgs),
    /// Write a dataset directory
    GenData(GenDataArgs),
    /// Re-run the command recorded in a manifest
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveArgs {
    #[arg(long, default_value = "t0")]
    pub family: TaskFamily,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub generations: usize,
    #[arg(long, default_value_t = 1)]
    pub mu: usize,
    #[arg(long, default_value_t = 4)]
    pub lambda: usize,
    #[arg(long, default_value_t = 0.1)]
    pub mutation_rate: f64,
    /// Datasets per fitness evaluation
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Samples per dataset
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Input dimension
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Draw a fresh dataset batch every generation
    #[arg(long)]
    pub reseed_datasets: bool,
    /// Score against the sample principal component
    #[arg(long)]
    pub empirical_pc: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    /// oja, lr1..lr4, expr:'KERNEL' or file:PATH (repeatable)
    #[arg(long = "rule", required = true)]
    pub rules: Vec<String>,
    /// Task family (repeatable)
    #[arg(long = "family", default_value = "t0")]
    pub families: Vec<TaskFamily>,
    #[arg(long, default_value_t = 100)]
    pub n_eval: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long)]
    pub empirical_pc: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePlaneArgs {
    #[arg(long)]
    pub rule: String,
    #[arg(long)]
    pub var1: f64,
    #[arg(long)]
    pub var2: f64,
    #[arg(long)]
    pub cov: f64,
    /// Half-width of the square [-box, box]²
    #[arg(long = "box", default_value_t = 2.0)]
    #[serde(rename = "box")]
    pub half_width: f64,
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    /// Monte-Carlo samples (forces the sampled field for lr3)
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Monte-Carlo seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory start 'w1,w2' (repeatable)
    #[arg(long = "trajectory", allow_hyphen_values = true)]
    pub trajectories: Vec<Point>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, default_value = "t0")]
    pub family: TaskFamily,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub empirical_pc: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A point of the weight plane given as `w1,w2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [a, b] = parts.as_slice() else {
            return Err(format!("expected 'w1,w2', got '{s}'"));
        };
        let parse = |v: &str| v.parse::<f64>().map_err(|e| format!("bad coordinate '{v}': {e}"));
        Ok(Point([parse(a)?, parse(b)?]))
    }
}
