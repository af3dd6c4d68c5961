use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use atsd_core::config::{self, PopulationSource, Scenario};
use atsd_core::cost::{effort_plan, EffortPlan};
use atsd_core::montecarlo::{run_experiment, write_replicates_csv, ExperimentTable, OracleCoefficients};
use atsd_core::population::render_population;
use atsd_core::rng::DrawRng;

use crate::{resolve_seed, CliResult, Failure};

pub struct RunOptions {
    pub replicates: Option<usize>,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub keep_replicates: bool,
    pub populations: usize,
}

pub fn load_scenario(name: &str) -> CliResult<(Scenario, Option<PathBuf>)> {
    let (text, path) = config::read_config(name)?;
    let scenario = Scenario::parse(&text, path.as_deref().and_then(Path::parent))?;
    Ok((scenario, path))
}

#[derive(Serialize)]
struct OutputFile {
    path: String,
    fnv1a64: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    arguments: Vec<String>,
    reproduce: String,
    config: &'a str,
    master_seed: u64,
    population_seed: u64,
    population_checksum: String,
    arm_seeds: &'a [(&'static str, u64)],
    replicates: usize,
    threads: usize,
    plan: &'a EffortPlan,
    oracle: &'a OracleCoefficients,
    started_unix: f64,
    finished_unix: f64,
    wall_seconds: f64,
    outputs: Vec<OutputFile>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_tracked(dir: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<OutputFile>) -> CliResult<()> {
    std::fs::write(dir.join(name), bytes)?;
    outputs.push(OutputFile { path: name.to_string(), fnv1a64: format!("{:016x}", atsd_core::fnv1a64(bytes)) });
    Ok(())
}

/// Runs one scenario into `dir` and returns its table.
fn run_one(scenario: &Scenario, opts: &RunOptions, dir: &Path) -> CliResult<ExperimentTable> {
    let started = (unix_now(), Instant::now());
    let pop = scenario.population.build()?;
    let plan = effort_plan(&pop, &scenario.request)?;
    let config = scenario.experiment_config(plan, opts.threads, opts.keep_replicates);
    let output = run_experiment(&pop, &config)?;

    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let mut csv = Vec::new();
    output.table.write_csv(&mut csv)?;
    write_tracked(dir, "table.csv", &csv, &mut outputs)?;
    write_tracked(dir, "table.md", output.table.to_text().as_bytes(), &mut outputs)?;
    if opts.keep_replicates {
        let mut rows = Vec::new();
        write_replicates_csv(&output.replicate_rows, &mut rows)?;
        write_tracked(dir, "replicates.csv", &rows, &mut outputs)?;
    }
    let population_text = render_population(&pop);
    write_tracked(dir, "population.txt", population_text.as_bytes(), &mut outputs)?;
    let resolved = scenario.to_ini();
    write_tracked(dir, "config.ini", resolved.as_bytes(), &mut outputs)?;

    let finished = unix_now();
    let manifest = Manifest {
        tool: "atsd",
        version: env!("CARGO_PKG_VERSION"),
        arguments: std::env::args().collect(),
        reproduce: format!(
            "atsd run config.ini --out-dir <dir>{}",
            if opts.keep_replicates { " --keep-replicates" } else { "" }
        ),
        config: &resolved,
        master_seed: scenario.seed,
        population_seed: pop.seed(),
        population_checksum: format!("{:016x}", atsd_core::fnv1a64(population_text.as_bytes())),
        arm_seeds: &output.arm_seeds,
        replicates: scenario.replicates,
        threads: opts.threads,
        plan: &config.plan,
        oracle: &output.oracle,
        started_unix: started.0,
        finished_unix: finished,
        wall_seconds: started.1.elapsed().as_secs_f64(),
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure { code: 4, message: e.to_string() })?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(output.table)
}

fn spread(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Mean and spread of eff and rbias across populations.
fn population_summary(tables: &[ExperimentTable]) -> String {
    let mut out = String::from("estimator,populations,eff_mean,eff_sd,eff_min,eff_max,rbias_mean,rbias_sd\n");
    let cells = |values: &[f64], with_range: bool| -> String {
        if values.is_empty() {
            return if with_range { "NA,NA,NA,NA".into() } else { "NA,NA".into() };
        }
        let (mean, sd) = spread(values);
        if !with_range {
            return format!("{mean},{sd}");
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("{mean},{sd},{lo},{hi}")
    };
    for row in &tables[0].rows {
        let rows: Vec<_> = tables.iter().filter_map(|t| t.row(&row.estimator)).collect();
        let eff: Vec<f64> = rows.iter().filter_map(|r| r.eff).collect();
        let rbias: Vec<f64> = rows.iter().filter_map(|r| r.rbias).collect();
        let _ = writeln!(out, "{},{},{},{}", row.estimator, rows.len(), cells(&eff, true), cells(&rbias, false));
    }
    out
}

pub fn run(config_name: &str, opts: &RunOptions) -> CliResult<()> {
    let (mut scenario, _) = load_scenario(config_name)?;
    scenario.seed = resolve_seed(None, scenario.seed)?;
    if let Some(r) = opts.replicates {
        scenario.replicates = r;
    }
    if opts.populations == 0 {
        return Err(Failure::config("--populations must be at least 1"));
    }
    if opts.populations == 1 {
        let table = run_one(&scenario, opts, &opts.out_dir)?;
        out!("{}", table.to_text());
        outln!("written to {}", opts.out_dir.display());
        return Ok(());
    }
    let PopulationSource::Spec(spec) = &scenario.population else {
        return Err(Failure::config("--populations needs a generated population, not a population file"));
    };
    let mut tables = Vec::with_capacity(opts.populations);
    for k in 0..opts.populations {
        let mut variant = scenario.clone();
        let mut s = spec.clone();
        // the first population is the configured one
        if k > 0 {
            s.seed = DrawRng::derive_seed(spec.seed, &format!("population-{k}"));
        }
        variant.population = PopulationSource::Spec(s);
        let dir = opts.out_dir.join(format!("population_{k}"));
        tables.push(run_one(&variant, opts, &dir)?);
        eprintln!("population {} of {} done", k + 1, opts.populations);
    }
    let summary = population_summary(&tables);
    std::fs::write(opts.out_dir.join("summary.csv"), &summary)?;
    out!("{summary}");
    outln!("written to {}", opts.out_dir.display());
    Ok(())
}
