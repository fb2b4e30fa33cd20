//! Elitist (μ+λ) evolution strategy with neutral drift over CGP genomes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgp::{to_infix, Genome, GenomeShape, OperatorSet};
use crate::error::{Error, Result};
use crate::fitness::{family_fitness, FitnessConfig};
use crate::plasticity::PlasticityRule;
use crate::seed::derived_stream;
use crate::tasks::{Dataset, TaskFamily};

pub use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub mu: usize,
    pub lambda: usize,
    pub generations: usize,
    pub per_gene_rate: f64,
    pub master_seed: u64,
    pub family: TaskFamily,
    pub fitness: FitnessConfig,
    /// Draw a fresh dataset batch every generation instead of one per run.
    pub reseed_datasets_every_generation: bool,
    pub shape: GenomeShape,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            mu: 1,
            lambda: 4,
            generations: 1000,
            per_gene_rate: 0.1,
            master_seed: 0,
            family: TaskFamily::T0,
            fitness: FitnessConfig::default(),
            reseed_datasets_every_generation: false,
            shape: GenomeShape::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.lambda == 0 {
            return Err(Error::Contract("mu and lambda must be at least 1".into()));
        }
        if !(self.per_gene_rate > 0.0 && self.per_gene_rate <= 1.0) {
            return Err(Error::Contract(format!(
                "mutation rate must be in (0, 1], got {}",
                self.per_gene_rate
            )));
        }
        self.fitness.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    /// Simplified infix kernel of the best individual.
    pub best_expression: String,
    /// Fitness evaluations performed in this generation.
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Champion {
    pub genome: Genome,
    pub expression: String,
    /// Fitness on the batch the champion was selected on.
    pub fitness: f64,
}

impl Champion {
    pub fn rule(&self, ops: &OperatorSet) -> Result<PlasticityRule> {
        Ok(PlasticityRule::new(self.genome.decode(ops)?))
    }
}

#[derive(Clone, Debug)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
}

#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub history: Vec<GenerationRecord>,
    pub champion: Champion,
    pub population: Vec<Individual>,
    /// Batch the final population was scored on.
    pub datasets: Vec<Dataset>,
}

/// The K datasets individuals are scored on in `generation`. Without
/// reseeding every generation shares the batch of generation 0.
pub fn dataset_batch(config: &EvolutionConfig, generation: usize) -> Result<Vec<Dataset>> {
    let round = if config.reseed_datasets_every_generation { generation } else { 0 };
    let k = config.fitness.k;
    (0..k)
        .map(|i| {
            let seed = derive_seed(config.master_seed, "dataset", (round * k + i) as u64);
            Dataset::generate(config.family, config.fitness.dim, config.fitness.m, seed, config.fitness.pc_mode)
        })
        .collect()
}

/// Family fitness of a genome's phenotype on `datasets`.
pub fn genome_fitness(genome: &Genome, ops: &OperatorSet, datasets: &[Dataset], cfg: &FitnessConfig) -> f64 {
    let rule = PlasticityRule::new(genome.decode(ops).expect("evolved genomes are valid"));
    family_fitness(&rule, datasets, cfg)
}

fn sanitize(fitness: f64) -> f64 {
    if fitness.is_nan() {
        f64::NEG_INFINITY
    } else {
        // -0.0 and 0.0 must tie under total_cmp
        fitness + 0.0
    }
}

/// Keeps the best `mu` of parents and offspring. An offspring whose fitness
/// equals a parent's wins the tie, which lets neutral mutations drift.
pub fn select(parents: Vec<Individual>, offspring: Vec<Individual>, mu: usize) -> Vec<Individual> {
    // offspring first so that the stable sort ranks them above equal parents
    let mut pool: Vec<Individual> = offspring.into_iter().chain(parents).collect();
    pool.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    pool.truncate(mu);
    pool
}

type FitnessFn<'a> = Box<dyn Fn(&Genome, &[Dataset]) -> f64 + Sync + 'a>;

/// Configurable evolutionary run.
pub struct Evolution<'a> {
    config: EvolutionConfig,
    ops: OperatorSet,
    initial: Option<Vec<Genome>>,
    fitness_fn: Option<FitnessFn<'a>>,
}

impl<'a> Evolution<'a> {
    pub fn new(config: EvolutionConfig) -> Self {
        Self {
            config,
            ops: OperatorSet::default(),
            initial: None,
            fitness_fn: None,
        }
    }

    /// Replaces the random initial population.
    pub fn with_initial_population(mut self, genomes: Vec<Genome>) -> Self {
        self.initial = Some(genomes);
        self
    }

    /// Replaces the family-fitness evaluator.
    pub fn with_fitness_fn<F>(mut self, f: F) -> Self
    where
        F: Fn(&Genome, &[Dataset]) -> f64 + Sync + 'a,
    {
        self.fitness_fn = Some(Box::new(f));
        self
    }

    fn evaluate(&self, genomes: Vec<Genome>, datasets: &[Dataset]) -> Vec<Individual> {
        let fitness: Vec<f64> = genomes
            .par_iter()
            .map(|g| match &self.fitness_fn {
                Some(f) => f(g, datasets),
                None => genome_fitness(g, &self.ops, datasets, &self.config.fitness),
            })
            .collect();
        genomes
            .into_iter()
            .zip(fitness)
            .map(|(genome, fitness)| Individual {
                genome,
                fitness: sanitize(fitness),
            })
            .collect()
    }

    fn champion(&self, best: &Individual) -> Champion {
        let expression = best
            .genome
            .decode(&self.ops)
            .map(|e| to_infix(&e))
            .unwrap_or_default();
        Champion {
            genome: best.genome.clone(),
            expression,
            fitness: best.fitness,
        }
    }

    /// Runs every generation, calling `observer` after each selection step.
    pub fn run<O>(self, mut observer: O) -> Result<EvolutionOutcome>
    where
        O: FnMut(&GenerationRecord, &Champion),
    {
        let config = &self.config;
        config.validate()?;
        let initial = match &self.initial {
            Some(genomes) => {
                if genomes.is_empty() {
                    return Err(Error::Contract("initial population is empty".into()));
                }
                for g in genomes {
                    g.validate(&self.ops)?;
                }
                genomes.clone()
            }
            None => {
                let mut rng = derived_stream(config.master_seed, "init", 0);
                (0..config.mu)
                    .map(|_| Genome::random(config.shape, &self.ops, &mut rng))
                    .collect()
            }
        };

        let mut datasets = dataset_batch(config, 0)?;
        let mut population = self.evaluate(initial, &datasets);
        // stable: first of the equally fit wins
        let best = population
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.fitness.total_cmp(&b.1.fitness).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("non-empty population");
        population.swap(0, best);

        let mut history = Vec::with_capacity(config.generations);
        for generation in 1..=config.generations {
            let mut evaluations = 0;
            if config.reseed_datasets_every_generation {
                datasets = dataset_batch(config, generation)?;
                let genomes = population.into_iter().map(|i| i.genome).collect();
                population = self.evaluate(genomes, &datasets);
                evaluations += population.len();
            }
            let mut rng = derived_stream(config.master_seed, "mutation", generation as u64);
            let children: Vec<Genome> = (0..config.lambda)
                .map(|_| {
                    let parent = &population[rng.random_range(0..population.len())];
                    parent.genome.mutate(config.per_gene_rate, &self.ops, &mut rng)
                })
                .collect();
            let offspring = self.evaluate(children, &datasets);
            evaluations += offspring.len();
            population = select(population, offspring, config.mu);

            let champion = self.champion(&population[0]);
            let record = GenerationRecord {
                generation,
                best_fitness: champion.fitness,
                best_expression: champion.expression.clone(),
                evaluations,
            };
            observer(&record, &champion);
            history.push(record);
        }

        let champion = self.champion(&population[0]);
        Ok(EvolutionOutcome {
            history,
            champion,
            population,
            datasets,
        })
    }
}

/// Runs an evolution with the default operator set and evaluator.
pub fn run(config: EvolutionConfig) -> Result<EvolutionOutcome> {
    Evolution::new(config).run(|_, _| {})
}
