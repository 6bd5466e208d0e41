use std::path::{Path, PathBuf};

use influence_core::dynamics::simulate_trajectory;
use influence_core::equilibrium::equilibrate;
use influence_core::single::solve_single;
use influence_core::verification::{run_suite, Suite};

use crate::error::CliError;
use crate::output::{
    to_json, trace_csv, trajectory_csv, write_atomic, EquilibriumDocument, SolveDocument, VerifyDocument,
};
use crate::scenario::{reference_scenario, seed_override, PlansFile, ScenarioFile};

/// Where the game comes from.
#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Reference,
}

impl Source {
    pub fn new(path: Option<PathBuf>, reference: bool) -> Result<Self, CliError> {
        match (path, reference) {
            (Some(_), true) => Err(CliError::Parse(
                "give either a scenario file or --paper-example, not both".into(),
            )),
            (Some(p), false) => Ok(Source::File(p)),
            (None, true) => Ok(Source::Reference),
            (None, false) => Err(CliError::Parse("a scenario file or --paper-example is required".into())),
        }
    }

    pub fn load(&self) -> Result<ScenarioFile, CliError> {
        match self {
            Source::File(p) => ScenarioFile::load(p),
            Source::Reference => Ok(reference_scenario()),
        }
    }
}

/// `samples` evenly spaced times over the horizon merged with the campaign
/// times.
pub fn sample_grid(times: &[f64], samples: usize) -> Vec<f64> {
    let (t0, tf) = (times[0], times[times.len() - 1]);
    let mut grid: Vec<f64> = match samples {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..samples)
            .map(|s| if s + 1 == samples { tf } else { t0 + (tf - t0) * s as f64 / (samples - 1) as f64 })
            .collect(),
    };
    grid.extend_from_slice(&times[1..times.len() - 1]);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

pub fn simulate(source: &Source, plans: Option<&Path>, samples: usize, out: &Path) -> Result<String, CliError> {
    let spec = source.load()?.to_spec()?;
    let plans = match plans {
        Some(p) => PlansFile::load(p)?.to_plans(&spec)?,
        None => spec.zero_plans(),
    };
    let grid = sample_grid(spec.schedule().times(), samples);
    let points = simulate_trajectory(spec.network(), spec.schedule(), spec.x0(), &plans, &grid)?;
    write_atomic(out, &trajectory_csv(&points))?;
    Ok(format!("wrote {} samples to {}", points.len(), out.display()))
}

pub fn solve(source: &Source, out: &Path) -> Result<String, CliError> {
    let scenario = source.load()?;
    let spec = scenario.to_spec()?;
    if spec.m() != 1 {
        return Err(CliError::WrongMode(format!(
            "scenario has {} players; use `equilibrate` for multiplayer games",
            spec.m()
        )));
    }
    let report = solve_single(&spec, &scenario.solve_options()?)?;
    write_atomic(out, &to_json(&SolveDocument::new(&report)))?;
    Ok(format!(
        "objective {} after {} iterations (KKT residual {:e}); wrote {}",
        report.objective,
        report.iterations,
        report.kkt_residual,
        out.display()
    ))
}

/// Output paths `<prefix>.trace.csv` and `<prefix>.result.json`.
pub fn output_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with(".trace.csv"), with(".result.json"))
}

pub fn equilibrate_cmd(source: &Source, iterations: Option<usize>, out: &Path) -> Result<String, CliError> {
    let scenario = source.load()?;
    let spec = scenario.to_spec()?;
    let config = scenario.no_regret_config(iterations)?;
    let (trace, result) = equilibrate(&spec, &config)?;
    let (trace_path, result_path) = output_paths(out);
    let trace_bytes = trace_csv(&trace);
    let result_bytes = to_json(&EquilibriumDocument::new(&result, &config));
    write_atomic(&trace_path, &trace_bytes)?;
    write_atomic(&result_path, &result_bytes)?;
    let mut summary = format!(
        "T = {}: exploitability {:e}\n",
        result.iterations, result.exploitability.value
    );
    for (j, r) in result.regrets.iter().enumerate() {
        summary.push_str(&format!(
            "player {}: payoff {}, regret {} (per round {:e})\n",
            j + 1,
            result.payoffs[j],
            r.value,
            r.value / result.iterations as f64
        ));
    }
    summary.push_str(&format!("wrote {} and {}", trace_path.display(), result_path.display()));
    Ok(summary)
}

pub fn verify(suite: Suite, seed: Option<u64>, out: Option<&Path>) -> Result<String, CliError> {
    let seed = match seed {
        Some(s) => s,
        None => seed_override()?.unwrap_or(0),
    };
    let report = run_suite(suite, seed)?;
    let bytes = to_json(&VerifyDocument::new(&report));
    if let Some(path) = out {
        write_atomic(path, &bytes)?;
    }
    let text = String::from_utf8(bytes).expect("json is utf-8");
    if report.pass() {
        Ok(text.trim_end().to_string())
    } else {
        let failed: Vec<&str> = report
            .properties
            .iter()
            .filter(|p| !p.pass)
            .map(|p| p.name.as_str())
            .collect();
        println!("{}", text.trim_end());
        Err(CliError::Verify(failed.join(", ")))
    }
}
