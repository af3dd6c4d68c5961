use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use atsd_core::config::{self, Ini, PopulationSource, Scenario};
use atsd_core::population::{PopulationSpec, Table1Target};
use atsd_core::verify::{self, Suite};
use atsd_core::Error;

/// Stdout writes that stop quietly when the reader goes away.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod report;
mod run;

#[derive(Parser)]
#[command(name = "atsd", version, about = "Adaptive two-stage sequential double sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a population file and print its summary statistics.
    Generate {
        /// Preset name or path to a config file.
        config: String,
        /// Population seed; overrides ATSD_SEED and the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Calibration targets to check against. Inferred for the shipped presets.
        #[arg(long, value_enum)]
        target: Option<TargetName>,
    },
    /// Run a replicated design comparison and write the result table.
    Run {
        config: String,
        #[arg(long)]
        replicates: Option<usize>,
        /// Worker threads, 0 for the machine default. Results do not depend on it.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write every per-replicate estimate.
        #[arg(long)]
        keep_replicates: bool,
        /// Repeat the experiment on this many regenerated populations.
        #[arg(long, default_value_t = 1)]
        populations: usize,
    },
    /// Run the exact enumeration checks.
    Verify {
        /// One suite; all suites when omitted.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Print the effort-matched sample sizes of a scenario.
    CostPlan {
        config: String,
        #[arg(long)]
        json: bool,
    },
    /// Search generator parameters that reproduce a set of population statistics.
    Calibrate {
        #[arg(long, value_enum)]
        target: TargetName,
        #[arg(long, default_value_t = 20_000)]
        restarts: usize,
        #[arg(long, default_value_t = 1)]
        search_seed: u64,
        /// Write the accepted spec as a config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TargetName {
    Population1,
    Population2,
}

impl TargetName {
    fn target(self) -> Table1Target {
        match self {
            TargetName::Population1 => Table1Target::population1(),
            TargetName::Population2 => Table1Target::population2(),
        }
    }

    fn from_preset(name: &str) -> Option<Self> {
        match name {
            "population1" => Some(TargetName::Population1),
            "population2" => Some(TargetName::Population2),
            _ => None,
        }
    }
}

/// Failure with its process exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidSpec(_)
            | Error::InvalidPopulation(_)
            | Error::InvalidDesign(_)
            | Error::UnknownVariable(_)
            | Error::Parse { .. }
            | Error::Checksum { .. }
            | Error::BudgetTooSmall { .. }
            | Error::Config(_)
            | Error::Io(_) => 2,
            Error::ExperimentQuality { .. } => 3,
            Error::Degenerate(_) | Error::UndefinedVariance(_) | Error::EnumerationTooLarge { .. } | Error::Csv(_) => 4,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Seed precedence: flag, then ATSD_SEED, then the config.
pub fn resolve_seed(flag: Option<u64>, config_seed: u64) -> CliResult<u64> {
    Ok(flag.or(config::seed_override()?).unwrap_or(config_seed))
}

/// A config that is either a bare population or a full scenario.
fn population_from_config(name: &str) -> CliResult<(PopulationSource, Option<TargetName>)> {
    let (text, path) = config::read_config(name)?;
    let ini = Ini::parse(&text)?;
    let base = path.as_deref().and_then(Path::parent);
    let inferred =
        TargetName::from_preset(name).or_else(|| ini.get("population", "preset").and_then(TargetName::from_preset));
    if ini.has_section("scenario") {
        return Ok((Scenario::from_ini(&ini, base)?.population, inferred));
    }
    let source = config::population_source(&ini, base)?;
    ini.finish()?;
    Ok((source, inferred))
}

fn generate(config_name: &str, seed: Option<u64>, out: &Path, target: Option<TargetName>) -> CliResult<()> {
    let (source, inferred) = population_from_config(config_name)?;
    let PopulationSource::Spec(mut spec) = source else {
        return Err(Failure::config("config points at a population file; there is nothing to generate"));
    };
    spec.seed = resolve_seed(seed, spec.seed)?;
    let pop = atsd_core::population::generate_population(&spec)?;
    atsd_core::population::save_population(&pop, out)?;
    out!("{}", report::population_report(&pop, target.or(inferred).map(TargetName::target).as_ref()));
    outln!("written {} (checksum {:016x})", out.display(), atsd_core::fnv1a64(&std::fs::read(out)?));
    Ok(())
}

fn run_verify(suite: Option<&str>) -> CliResult<()> {
    let suites = match suite {
        Some(s) => vec![s.parse::<Suite>()?],
        None => Suite::ALL.to_vec(),
    };
    let mut failed = 0;
    let mut total = 0;
    for suite in suites {
        let start = std::time::Instant::now();
        let checks = verify::run_suite(suite)?;
        outln!("== {suite} ({} checks, {:.2}s)", checks.len(), start.elapsed().as_secs_f64());
        for c in &checks {
            outln!("{c}");
        }
        failed += checks.iter().filter(|c| !c.passed()).count();
        total += checks.len();
    }
    outln!("{} of {total} checks passed", total - failed);
    if failed > 0 {
        return Err(Failure { code: 4, message: format!("{failed} checks failed") });
    }
    Ok(())
}

fn cost_plan(config_name: &str, json: bool) -> CliResult<()> {
    let (scenario, _) = run::load_scenario(config_name)?;
    let pop = scenario.population.build()?;
    let plan = atsd_core::cost::effort_plan(&pop, &scenario.request)?;
    if json {
        outln!("{}", serde_json::to_string_pretty(&plan).map_err(|e| Failure { code: 4, message: e.to_string() })?);
    } else {
        out!("{}", report::plan_report(&plan));
    }
    Ok(())
}

fn calibrate(target: TargetName, restarts: usize, search_seed: u64, out: Option<&Path>) -> CliResult<()> {
    let base_text = config::preset("population1").expect("shipped preset");
    let base_ini = Ini::parse(base_text)?;
    let base: PopulationSpec = config::population_spec(&base_ini)?;
    let goal = target.target();
    let outcome = atsd_core::population::calibrate(&base, &goal, &Default::default(), restarts, search_seed);
    outln!(
        "{} after {} candidates",
        if outcome.accepted { "accepted" } else { "no candidate met every tolerance; closest shown" },
        outcome.attempts
    );
    out!("{}", report::check_table(&goal, &outcome.stats));
    let ini = format!("[population]\n{}", config::render_spec(&outcome.spec));
    match out {
        Some(path) => std::fs::write(path, &ini)?,
        None => out!("\n{ini}"),
    }
    if !outcome.accepted {
        return Err(Failure { code: 3, message: "calibration did not converge".into() });
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { config, seed, out, target } => generate(&config, seed, &out, target),
        Command::Run { config, replicates, threads, out_dir, keep_replicates, populations } => {
            run::run(&config, &run::RunOptions { replicates, threads, out_dir, keep_replicates, populations })
        }
        Command::Verify { suite } => run_verify(suite.as_deref()),
        Command::CostPlan { config, json } => cost_plan(&config, json),
        Command::Calibrate { target, restarts, search_seed, out } => {
            calibrate(target, restarts, search_seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(code(Error::Config("x".into())), 2);
        assert_eq!(code(Error::Checksum { expected: 1, found: 2 }), 2);
        assert_eq!(code(Error::Io(std::io::Error::other("x"))), 2);
        assert_eq!(code(Error::ExperimentQuality { errored: 2, replicates: 10 }), 3);
        assert_eq!(code(Error::EnumerationTooLarge { estimate: 1e9, limit: 1e7 }), 4);
    }
}
