use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use plastigen::analysis::{
    find_fixed_points, generalization_matrix, integrate_trajectory, phase_plane, write_generalization_csv,
    write_phase_plane_csv, SearchBox, VectorField,
};
use plastigen::cgp::GenomeShape;
use plastigen::evolve::{Champion, Evolution, EvolutionConfig};
use plastigen::fitness::FitnessConfig;
use plastigen::tasks::{validate_covariance, Dataset, PcMode};
use serde::Serialize;
use serde_json::json;

use crate::args::{Command, EvalArgs, EvolveArgs, GenDataArgs, PhasePlaneArgs, ReplayArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::rule_spec;

const DEFAULT_MC_SAMPLES: usize = 100_000;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Evolve(args) => evolve(args),
        Command::Eval(args) => eval(args),
        Command::PhasePlane(args) => phase_plane_cmd(args),
        Command::GenData(args) => gen_data(args),
        Command::Replay(args) => replay(args),
    }
}

fn pc_mode(empirical: bool) -> PcMode {
    if empirical {
        PcMode::Empirical
    } else {
        PcMode::Generator
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(value).map_err(plastigen::Error::from)?)
}

/// Writes through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

fn champion_json(champion: &Champion) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(champion).map_err(plastigen::Error::from)? + "\n")
}

fn evolve(args: EvolveArgs) -> CliResult<()> {
    let config = EvolutionConfig {
        mu: args.mu,
        lambda: args.lambda,
        generations: args.generations,
        per_gene_rate: args.mutation_rate,
        master_seed: args.seed,
        family: args.family,
        fitness: FitnessConfig {
            alpha: args.alpha,
            eta: args.eta,
            k: args.k,
            m: args.m,
            dim: args.n,
            pc_mode: pc_mode(args.empirical_pc),
        },
        reseed_datasets_every_generation: args.reseed_datasets,
        shape: GenomeShape::default(),
    };
    config.validate()?;

    let dir = &args.out;
    create_dir(dir)?;
    let manifest_path = dir.join("manifest.json");
    let generations_path = dir.join("generations.jsonl");
    let champion_path = dir.join("champion.json");
    let mut manifest = RunManifest::start(
        Command::Evolve(args.clone()),
        args.seed,
        to_json(&config)?,
        vec![generations_path.clone(), champion_path.clone()],
    );
    manifest.save(&manifest_path)?;

    let file = File::create(&generations_path).map_err(CliError::io(&generations_path))?;
    let mut lines = BufWriter::new(file);
    let mut failure: Option<CliError> = None;
    let outcome = Evolution::new(config).run(|record, champion| {
        if failure.is_some() {
            return;
        }
        let written = serde_json::to_string(record)
            .map_err(|e| CliError::from(plastigen::Error::from(e)))
            .and_then(|line| {
                writeln!(lines, "{line}")
                    .and_then(|_| lines.flush())
                    .map_err(CliError::io(&generations_path))
            })
            .and_then(|_| champion_json(champion))
            .and_then(|text| write_atomic(&champion_path, &text));
        failure = written.err();
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    write_atomic(&champion_path, &champion_json(&outcome.champion)?)?;

    manifest.finish();
    manifest.save(&manifest_path)?;
    println!(
        "champion fitness {:?}: {}",
        outcome.champion.fitness, outcome.champion.expression
    );
    Ok(())
}

fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut path: OsString = out.as_os_str().to_owned();
    path.push(".manifest.json");
    PathBuf::from(path)
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let rules = args
        .rules
        .iter()
        .map(|spec| rule_spec::resolve(spec))
        .collect::<CliResult<Vec<_>>>()?;
    let cfg = FitnessConfig {
        alpha: args.alpha,
        eta: args.eta,
        m: args.m,
        dim: args.n,
        pc_mode: pc_mode(args.empirical_pc),
        ..FitnessConfig::default()
    };
    cfg.validate()?;
    if args.n_eval == 0 {
        return Err(CliError::Usage("--n-eval must be at least 1".into()));
    }

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let manifest_path = sidecar_manifest(&args.out);
    let mut manifest = RunManifest::start(
        Command::Eval(args.clone()),
        args.seed,
        json!({ "fitness": cfg, "families": args.families, "n_eval": args.n_eval }),
        vec![args.out.clone()],
    );
    manifest.save(&manifest_path)?;

    let rows = generalization_matrix(&rules, &args.families, args.n_eval, &cfg, args.seed)?;
    let file = File::create(&args.out).map_err(CliError::io(&args.out))?;
    write_generalization_csv(&rows, BufWriter::new(file))?;

    manifest.finish();
    manifest.save(&manifest_path)?;
    println!("{} scores written to {}", rows.len(), args.out.display());
    Ok(())
}

fn phase_plane_cmd(args: PhasePlaneArgs) -> CliResult<()> {
    let sigma = DMatrix::from_row_slice(2, 2, &[args.var1, args.cov, args.cov, args.var2]);
    validate_covariance(&sigma)?;
    let rule = rule_spec::resolve(&args.rule)?;
    let search_box = SearchBox::symmetric(args.half_width)?;
    if args.grid == 0 {
        return Err(CliError::Usage("--grid must be at least 1".into()));
    }
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let field = match args.mc_samples {
        None if rule_spec::is_lr3(&args.rule) => VectorField::closed_form_lr3(sigma)?,
        samples => VectorField::monte_carlo(rule, sigma, samples.unwrap_or(DEFAULT_MC_SAMPLES), args.seed)?,
    };

    let dir = &args.out;
    create_dir(dir)?;
    let field_path = dir.join("field.csv");
    let points_path = dir.join("fixed_points.json");
    let trajectory_paths: Vec<PathBuf> = (1..=args.trajectories.len())
        .map(|k| dir.join(format!("trajectory_{k}.csv")))
        .collect();
    let manifest_path = dir.join("manifest.json");
    let mut outputs = vec![field_path.clone(), points_path.clone()];
    outputs.extend(trajectory_paths.iter().cloned());
    let mut manifest = RunManifest::start(
        Command::PhasePlane(args.clone()),
        args.seed,
        json!({ "provenance": field.provenance(), "box": search_box }),
        outputs,
    );
    manifest.save(&manifest_path)?;

    let samples = phase_plane(&field, &search_box, args.grid)?;
    let file = File::create(&field_path).map_err(CliError::io(&field_path))?;
    write_phase_plane_csv(&samples, BufWriter::new(file))?;

    let points = find_fixed_points(&field, &search_box, args.grid)?;
    let report = json!({
        "provenance": field.provenance(),
        "sigma": [[args.var1, args.cov], [args.cov, args.var2]],
        "box": search_box,
        "grid": args.grid,
        "fixed_points": points,
    });
    let text = serde_json::to_string_pretty(&report).map_err(plastigen::Error::from)? + "\n";
    fs::write(&points_path, text).map_err(CliError::io(&points_path))?;
    for p in &points {
        println!("{:?} fixed point at {:?}", p.stability, p.location);
    }

    for (start, path) in args.trajectories.iter().zip(&trajectory_paths) {
        let traj = integrate_trajectory(&field, &start.0, args.step, args.max_steps)?;
        let file = File::create(path).map_err(CliError::io(path))?;
        traj.write_csv(BufWriter::new(file))?;
        let status = match (traj.converged, traj.diverged) {
            (true, _) => "converged",
            (_, true) => "diverged",
            _ => "stopped",
        };
        println!(
            "trajectory from {:?} {status} after {} steps at {:?}",
            start.0,
            traj.path.len() - 1,
            traj.final_point()
        );
    }

    manifest.finish();
    manifest.save(&manifest_path)?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> CliResult<()> {
    let dataset = Dataset::generate(args.family, args.n, args.m, args.seed, pc_mode(args.empirical_pc))?;
    let dir = &args.out;
    create_dir(dir)?;
    let manifest_path = dir.join("manifest.json");
    let mut manifest = RunManifest::start(
        Command::GenData(args.clone()),
        args.seed,
        to_json(&args)?,
        vec![dir.join("meta.json"), dir.join("inputs.csv")],
    );
    manifest.save(&manifest_path)?;
    dataset.save(dir)?;
    manifest.finish();
    manifest.save(&manifest_path)?;
    println!("dataset {} written to {}", dataset.fingerprint(), dir.display());
    Ok(())
}

fn replay(args: ReplayArgs) -> CliResult<()> {
    let mut command = RunManifest::load(&args.manifest)?.invocation;
    if let Some(out) = args.out {
        match &mut command {
            Command::Evolve(a) => a.out = out,
            Command::Eval(a) => a.out = out,
            Command::PhasePlane(a) => a.out = out,
            Command::GenData(a) => a.out = out,
            Command::Replay(_) => unreachable!("manifests never record a replay"),
        }
    }
    run(command)
}
