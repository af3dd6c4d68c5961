//! Browser demo: three operations on the built-in presets, each returning JSON.
//!
//! The plain functions are native Rust so they can be tested without a browser;
//! the `#[wasm_bindgen]` wrappers at the bottom only map errors to `JsError`.

use serde::Serialize;

use atsd_core::config::{self, Ini, Scenario};
use atsd_core::cost::effort_plan;
use atsd_core::designs::run_atsd;
use atsd_core::estimators::{AtsdSummary, Degeneracy};
use atsd_core::montecarlo::run_experiment;
use atsd_core::population::{compute_stats, generate_population, Condition, Population, Variable};
use atsd_core::rng::DrawRng;

pub const POPULATIONS: [&str; 2] = ["population1", "population2"];
pub const SCENARIOS: [&str; 3] = ["table2", "table3", "table4"];
/// Keeps a browser tab responsive.
pub const MAX_REPLICATES: usize = 20_000;

#[derive(Debug, Serialize)]
struct Grid {
    side: usize,
    psus: usize,
    /// Row-major cells: `[psu, y, x, z]`.
    cells: Vec<[f64; 4]>,
}

#[derive(Debug, Serialize)]
struct PopulationView {
    seed: u64,
    grid: Grid,
    mean_y: f64,
    corr_xy: Option<f64>,
    corr_zy: Option<f64>,
    occupied_y: usize,
}

#[derive(Debug, Serialize)]
struct Estimate {
    name: &'static str,
    value: f64,
    fallback: bool,
}

#[derive(Debug, Serialize)]
struct DrawView {
    scenario: String,
    population: PopulationView,
    condition: String,
    /// Row-major role codes: 0 unselected PSU, 1 selected PSU, 2 phase one,
    /// 3 initial phase two, 4 adaptive addition.
    roles: Vec<u8>,
    n_aux: usize,
    n_target: usize,
    true_mean: f64,
    estimates: Vec<Estimate>,
}

#[derive(Debug, Serialize)]
struct ExperimentView {
    scenario: String,
    replicates: usize,
    seed: u64,
    true_mean: f64,
    rows: Vec<ExperimentRow>,
}

#[derive(Debug, Serialize)]
struct ExperimentRow {
    estimator: String,
    design: String,
    mean: f64,
    mse: f64,
    eff: Option<f64>,
    rbias: Option<f64>,
    fallback_rate: f64,
    mean_cost: f64,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parse_seed(seed: &str) -> Result<Option<u64>, String> {
    let s = seed.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("seed `{s}` is not a non-negative integer"))
}

fn preset_text(name: &str, allowed: &[&str]) -> Result<&'static str, String> {
    if !allowed.contains(&name) {
        return Err(format!("unknown preset `{name}`; expected one of {}", allowed.join(", ")));
    }
    config::preset(name).ok_or_else(|| format!("preset `{name}` is missing"))
}

fn build_population(name: &str, seed: Option<u64>) -> Result<Population, String> {
    let ini = Ini::parse(preset_text(name, &POPULATIONS)?).map_err(err)?;
    let mut spec = config::population_spec(&ini).map_err(err)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    generate_population(&spec).map_err(err)
}

fn view(pop: &Population) -> Result<PopulationView, String> {
    let side = pop.grid_side();
    if side == 0 {
        return Err("population has no spatial layout".into());
    }
    let mut cells = vec![[0.0; 4]; side * side];
    for h in 0..pop.psu_count() {
        for (j, u) in pop.psu(h).iter().enumerate() {
            let (r, c) = pop.cell_of(h, j).expect("spatial population");
            cells[r * side + c] = [h as f64, u.y, u.x, u.z];
        }
    }
    let stats = compute_stats(pop, Condition::on(Variable::Y), 0.0);
    Ok(PopulationView {
        seed: pop.seed(),
        grid: Grid { side, psus: pop.psu_count(), cells },
        mean_y: stats.y.mean,
        corr_xy: stats.corr_xy,
        corr_zy: stats.corr_zy,
        occupied_y: stats.condition_counts.iter().sum(),
    })
}

/// Grid of y, x and z for a population preset; an empty `seed` keeps the preset's.
pub fn population_json(preset: &str, seed: &str) -> Result<String, String> {
    let pop = build_population(preset, parse_seed(seed)?)?;
    serde_json::to_string(&view(&pop)?).map_err(err)
}

fn scenario(name: &str) -> Result<Scenario, String> {
    Scenario::parse(preset_text(name, &SCENARIOS)?, None).map_err(err)
}

/// One ATSD draw on a scenario preset: which cells each phase touched and the
/// resulting estimates.
pub fn draw_json(name: &str, seed: u64) -> Result<String, String> {
    let s = scenario(name)?;
    let pop = s.population.build().map_err(err)?;
    let plan = effort_plan(&pop, &s.request).map_err(err)?;
    let sample = run_atsd(&pop, &plan.atsd, &mut DrawRng::new(seed, 0).rng()).map_err(err)?;

    let side = pop.grid_side();
    let mut roles = vec![0u8; side * side];
    let mut mark = |h: usize, j: usize, role: u8| {
        let (r, c) = pop.cell_of(h, j).expect("spatial population");
        let cell = &mut roles[r * side + c];
        *cell = (*cell).max(role);
    };
    for p in &sample.psus {
        let h = p.frame.psu;
        (0..pop.psu_size(h)).for_each(|j| mark(h, j, 1));
        p.frame.units.iter().for_each(|&(j, _)| mark(h, j, 2));
        p.initial.iter().for_each(|&i| mark(h, p.frame.units[i].0, 3));
        p.adaptive.iter().for_each(|&i| mark(h, p.frame.units[i].0, 4));
    }

    let summary = AtsdSummary::new(&sample, s.target, s.aux).map_err(err)?;
    let tol = Degeneracy::for_population(&pop, s.aux);
    let aux = s.aux.name();
    let ybar = summary.ybar_n2();
    let reg = |name, beta| {
        let r = summary.mu_reg(beta);
        Estimate { name, value: r.estimate, fallback: r.fallback_used }
    };
    let estimates = vec![
        Estimate { name: "ybar_n2", value: ybar, fallback: false },
        reg("Reg1", summary.beta1_hat(&tol)),
        reg("Regopt", summary.beta_opt_hat(&tol)),
    ];
    let out = DrawView {
        scenario: format!("{name} (aux {aux})"),
        population: view(&pop)?,
        condition: plan.atsd.condition.to_string(),
        roles,
        n_aux: sample.n_aux(),
        n_target: sample.n_target(),
        true_mean: pop.mean(s.target),
        estimates,
    };
    serde_json::to_string(&out).map_err(err)
}

/// A short single-threaded Monte Carlo run of a scenario preset.
pub fn experiment_json(name: &str, replicates: usize, seed: u64) -> Result<String, String> {
    if replicates == 0 || replicates > MAX_REPLICATES {
        return Err(format!("replicates must be between 1 and {MAX_REPLICATES}"));
    }
    let mut s = scenario(name)?;
    s.replicates = replicates;
    s.seed = seed;
    s.oracle_outer = s.oracle_outer.min(200);
    let pop = s.population.build().map_err(err)?;
    let plan = effort_plan(&pop, &s.request).map_err(err)?;
    let out = run_experiment(&pop, &s.experiment_config(plan, 1, false)).map_err(err)?;
    let rows = out
        .table
        .rows
        .into_iter()
        .map(|r| ExperimentRow {
            estimator: r.estimator,
            design: r.design,
            mean: r.mean,
            mse: r.mse,
            eff: r.eff,
            rbias: r.rbias,
            fallback_rate: r.fallback_rate,
            mean_cost: r.mean_cost,
        })
        .collect();
    let view = ExperimentView { scenario: name.to_string(), replicates, seed, true_mean: out.table.true_mean, rows };
    serde_json::to_string(&view).map_err(err)
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    fn js(r: Result<String, String>) -> Result<String, JsError> {
        r.map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn population(preset: &str, seed: &str) -> Result<String, JsError> {
        js(super::population_json(preset, seed))
    }

    #[wasm_bindgen]
    pub fn draw(scenario: &str, seed: u32) -> Result<String, JsError> {
        js(super::draw_json(scenario, u64::from(seed)))
    }

    #[wasm_bindgen]
    pub fn experiment(scenario: &str, replicates: u32, seed: u32) -> Result<String, JsError> {
        js(super::experiment_json(scenario, replicates as usize, u64::from(seed)))
    }
}
