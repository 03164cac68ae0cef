//! Subcommand pipelines: design, verify, simulate, sweep and compare.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use oaccomp::{
    compare_designs, design as solve, evaluate_design, parse_columns, run_mse, verify_feasibility,
    AggregationFunction, AggregationKind, ConstraintSet, DesignProblem, DesignResult,
    DistanceMetric, ModulationVector, QuantizedAlphabet, SimulationConfig, DEFAULT_PROFILE_CAP,
    FEASIBILITY_TOL,
};
use serde_json::{json, Value};

use crate::config::{Overrides, RunConfig, MAX_LEVELS, MAX_NODES};
use crate::output;
use crate::CliError;

/// The run's design: the configured vector when frozen, the solver's
/// otherwise.
fn obtain(cfg: &RunConfig, problem: &DesignProblem) -> Result<DesignResult, CliError> {
    match cfg.frozen()? {
        Some(x) => Ok(evaluate_design(problem, &x, cfg.solver.feasibility_tol)?),
        None => Ok(solve(problem, &cfg.solver)?),
    }
}

fn summary(label: &str, r: &DesignResult) -> String {
    format!(
        "{label}: margin {} ({:?}) log-margin {} feasible {} method {}",
        r.margin, r.margin_kind, r.log_margin, r.feasible, r.report.method
    )
}

fn infeasible(r: &DesignResult) -> CliError {
    CliError::Infeasible(format!(
        "constellation is infeasible: log-margin {}",
        r.log_margin
    ))
}

fn metadata(cfg: &RunConfig) -> Value {
    json!({
        "function": cfg.function,
        "k": cfg.k,
        "q": cfg.q,
        "seed": cfg.seed,
        "trials": cfg.simulation.trials,
        "input_law": cfg.simulation.input_law,
        "rule": cfg.simulation.rule,
        "noise": cfg.noise,
    })
}

pub fn design(config: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, overrides)?;
    let problem = primary(&cfg)?;
    let result = obtain(&cfg, &problem)?;
    let dir = cfg.out_dir();
    output::ensure_dir(&dir)?;
    output::write_constellation(&dir, "constellation.csv", &result.x)?;
    output::write_json(&dir, "result.json", &result.to_json())?;
    println!("{}", summary(result.metric.tag(), &result));
    if !result.feasible {
        return Err(infeasible(&result));
    }
    Ok(())
}

/// The top-level design; `designs` only matters to sweeps.
fn primary(cfg: &RunConfig) -> Result<DesignProblem, CliError> {
    cfg.problem(cfg.metric, cfg.gap_exponent)
}

fn simulation_base(cfg: &RunConfig, result: &DesignResult) -> Result<SimulationConfig, CliError> {
    let constraints = cfg.constraints()?;
    let mut base = SimulationConfig::new(result, constraints.profiles().to_vec(), cfg.noise()?);
    base.fading = cfg.fading_model()?;
    base.trials = cfg.simulation.trials;
    base.seed = cfg.seed;
    base.input_law = cfg.simulation.input_law;
    base.rule = cfg.simulation.rule;
    Ok(base)
}

pub fn simulate(config: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, overrides)?;
    let noise = cfg.noise()?;
    let problem = primary(&cfg)?;
    let result = obtain(&cfg, &problem)?;
    if !result.feasible {
        return Err(infeasible(&result));
    }
    let est = run_mse(&simulation_base(&cfg, &result)?)?;
    let finite = noise.has_finite_variance();
    let dir = cfg.out_dir();
    output::ensure_dir(&dir)?;
    output::write_constellation(&dir, "constellation.csv", &result.x)?;
    output::write_json(&dir, "result.json", &result.to_json())?;
    output::write_json(
        &dir,
        "simulate.json",
        &json!({
            "metadata": metadata(&cfg),
            "infinite_variance": !finite,
            "mse": finite.then_some(est.mse),
            "mse_stderr": finite.then_some(est.stderr),
            "mae": est.mae,
            "mae_stderr": est.mae_stderr,
            "trials": est.trials,
        }),
    )?;
    println!("{}", summary(result.metric.tag(), &result));
    if finite {
        println!("mse {} +/- {}", est.mse, est.stderr);
    }
    println!("mae {} +/- {}", est.mae, est.mae_stderr);
    Ok(())
}

pub fn sweep(config: &Path, overrides: &Overrides, rank: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, overrides)?;
    let (axis, grid) = cfg.grid()?;
    let problems = cfg.problems()?;
    let mut labels = Vec::new();
    let mut results = Vec::new();
    for (label, problem) in &problems {
        let r = obtain(&cfg, problem)?;
        println!("{}", summary(label, &r));
        if !r.feasible {
            return Err(infeasible(&r));
        }
        labels.push(label.clone());
        results.push(r);
    }
    let base = simulation_base(&cfg, &results[0])?;
    let cmp = compare_designs(&results, &base, axis, &grid)?;

    let dir = cfg.out_dir();
    output::ensure_dir(&dir)?;
    let noise_tag = cfg.noise()?.tag();
    let quantity = if cmp.sweeps[0].infinite_variance {
        "mae_db"
    } else {
        "mse_db"
    };
    let header = format!(
        "function={} K={} q={} noise={noise_tag} trials={} seed={} quantity={quantity}",
        cfg.function, cfg.k, cfg.q, cfg.simulation.trials, cfg.seed
    );
    output::write_text(
        &dir,
        "sweep.dat",
        &output::sweep_dat(&header, &labels, &cmp),
    )?;
    let designs: Vec<Value> = labels
        .iter()
        .zip(&results)
        .zip(&cmp.sweeps)
        .map(|((label, r), s)| {
            json!({
                "label": label,
                "design": r.to_json(),
                "sweep": s,
            })
        })
        .collect();
    output::write_json(
        &dir,
        "sweep.json",
        &json!({
            "metadata": metadata(&cfg),
            "axis": axis,
            "infinite_variance": cmp.sweeps[0].infinite_variance,
            "designs": designs,
        }),
    )?;
    let table = output::ranking_table(&labels, &cmp);
    if rank {
        output::write_text(&dir, "compare.txt", &table)?;
        output::write_json(
            &dir,
            "compare.json",
            &json!({ "labels": labels, "rows": cmp.rows }),
        )?;
    }
    print!("{table}");
    Ok(())
}

pub enum VerifyTarget {
    Config(PathBuf),
    Inline {
        kind: AggregationKind,
        k: usize,
        q: usize,
    },
}

fn load_constellation(path: &Path) -> Result<Vec<Complex64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let pairs: Vec<[f64; 2]> =
            serde_json::from_value(v.get("x").cloned().unwrap_or(Value::Null))
                .map_err(|e| CliError::Config(format!("{}: key `x`: {e}", path.display())))?;
        return Ok(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect());
    }
    Ok(parse_columns(&text)?)
}

/// Checks a constellation file; the margin is reported only for vectors
/// within the power budget.
pub fn verify(
    constellation: &Path,
    target: VerifyTarget,
    overrides: &Overrides,
) -> Result<(), CliError> {
    let points = load_constellation(constellation)?;
    let (problem, tol, out) = match target {
        VerifyTarget::Config(path) => {
            let cfg = RunConfig::load(&path, overrides)?;
            let out = cfg.output_dir.clone();
            (primary(&cfg)?, cfg.solver.feasibility_tol, out)
        }
        VerifyTarget::Inline { kind, k, q } => {
            if kind == AggregationKind::Custom {
                return Err(CliError::Config(
                    "custom functions cannot be verified from the command line".into(),
                ));
            }
            if !overrides.allow_blowup && (k > MAX_NODES || q > MAX_LEVELS) {
                return Err(CliError::Config(format!(
                    "K={k} q={q} exceeds K<={MAX_NODES}, q<={MAX_LEVELS}; pass --allow-blowup to run it"
                )));
            }
            let set = ConstraintSet::from_function(
                &AggregationFunction::new(kind),
                k,
                &QuantizedAlphabet::uniform(q),
                DEFAULT_PROFILE_CAP,
            )?;
            let problem = DesignProblem::new(set, DistanceMetric::Euclidean);
            (problem, FEASIBILITY_TOL, overrides.out.clone())
        }
    };
    let report = verify_feasibility(&points[..], &problem.constraints, tol)?;
    println!(
        "pairs {} min-separation {} feasible {}",
        report.separations.len(),
        report.min_separation,
        report.feasible
    );
    let result = match ModulationVector::new(points) {
        Ok(x) => {
            let r = evaluate_design(&problem, &x, tol)?;
            println!("{}", summary(problem.metric.tag(), &r));
            r.to_json()
        }
        Err(e) => {
            println!("margin not reported: {e}");
            Value::Null
        }
    };
    if let Some(dir) = out {
        output::ensure_dir(&dir)?;
        let min = report.min_separation;
        output::write_json(
            &dir,
            "verify.json",
            &json!({
                "feasible": report.feasible,
                "pairs": report.separations.len(),
                "min_separation": if min.is_finite() { json!(min) } else { json!("inf") },
                "result": result,
            }),
        )?;
    }
    if !report.feasible {
        return Err(CliError::Infeasible(format!(
            "constellation overlaps: min separation {}",
            report.min_separation
        )));
    }
    Ok(())
}
