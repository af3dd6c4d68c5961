//! Built-in tiny fixtures and the exact checks run by `atsd verify`.
//!
//! Every expectation here comes from exhaustive enumeration of the design, so
//! agreement is limited only by floating-point rounding.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cost::{effort_plan, expected_ny, CostSpec, PlanRequest};
use crate::designs::{run_atsd, AtsdParams, DesignParams, Draw, Frame};
use crate::error::{Error, Result};
use crate::estimators::{
    between_psu_term_expectation, murthy_total, phase_two_covariance, phase_two_moments, v3_hat, var_mu_reg_exact,
    within_variance_expectation, AtsdSummary, MomentMethod, RegressionCoefficient,
};
use crate::montecarlo::{enumerate_design, exact_moments, frame_expectation};
use crate::population::{Condition, Population, Unit, Variable};
use crate::rng::DrawRng;

/// Agreement required of exact checks, relative to max(1, |expected|).
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Unbiasedness,
    Variance,
    Cost,
    Murthy,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Murthy, Suite::Unbiasedness, Suite::Variance, Suite::Cost];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Unbiasedness => "unbiasedness",
            Suite::Variance => "variance",
            Suite::Cost => "cost",
            Suite::Murthy => "murthy",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    /// Absolute tolerance actually applied.
    pub tolerance: f64,
}

impl Check {
    fn exact(suite: Suite, name: impl Into<String>, expected: f64, observed: f64) -> Self {
        Self { suite, name: name.into(), expected, observed, tolerance: EXACT_TOLERANCE * expected.abs().max(1.0) }
    }

    pub fn passed(&self) -> bool {
        (self.observed - self.expected).abs() <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: expected {:.15e}, observed {:.15e}, gap {:.2e}",
            if self.passed() { "ok  " } else { "FAIL" },
            self.suite,
            self.name,
            self.expected,
            self.observed,
            (self.observed - self.expected).abs()
        )
    }
}

/// A tiny population with an ATSD plan and a fixed slope.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub population: Population,
    pub params: AtsdParams,
    pub target: Variable,
    pub aux: Variable,
    pub beta: f64,
}

fn psu(pairs: &[(f64, f64)]) -> Vec<Unit> {
    pairs.iter().map(|&(y, x)| Unit::new(y, x, 0.0)).collect()
}

pub fn fixtures() -> Vec<Fixture> {
    let xy = Condition::any_of(&[Variable::X, Variable::Y]);
    vec![
        Fixture {
            name: "two PSUs of five, both selected, capped expansion",
            population: Population::from_psus(vec![
                psu(&[(0.0, 1.0), (0.0, 0.0), (5.0, 4.0), (3.0, 3.0), (0.0, 0.0)]),
                psu(&[(2.0, 1.0), (0.0, 1.0), (0.0, 0.0), (0.0, 0.0), (7.0, 5.0)]),
            ])
            .expect("valid fixture"),
            params: AtsdParams { m: 2, n1h: 4, n2h1: 2, d: 2, condition: xy },
            target: Variable::Y,
            aux: Variable::X,
            beta: 0.8,
        },
        Fixture {
            name: "two PSUs of four, one selected",
            population: Population::from_psus(vec![
                psu(&[(0.0, 0.0), (4.0, 2.0), (1.0, 1.0), (0.0, 0.5)]),
                psu(&[(0.0, 0.0), (0.0, 0.0), (6.0, 5.0), (2.0, 0.0)]),
            ])
            .expect("valid fixture"),
            params: AtsdParams { m: 1, n1h: 3, n2h1: 2, d: 1, condition: xy },
            target: Variable::Y,
            aux: Variable::X,
            beta: 1.3,
        },
        Fixture {
            name: "three PSUs of four, two selected, target-only condition",
            population: Population::from_psus(vec![
                psu(&[(0.0, 1.0), (3.0, 2.0), (0.0, 0.0), (1.0, 2.0)]),
                psu(&[(0.0, 0.0), (0.0, 2.0), (8.0, 6.0), (0.0, 0.0)]),
                psu(&[(2.0, 2.0), (1.0, 0.0), (0.0, 1.0), (4.0, 3.0)]),
            ])
            .expect("valid fixture"),
            params: AtsdParams { m: 2, n1h: 3, n2h1: 2, d: 2, condition: Condition::on(Variable::Y) },
            target: Variable::Y,
            aux: Variable::X,
            beta: -0.4,
        },
    ]
}

fn adaptive(d: &Draw) -> &crate::designs::AtsdSample {
    match d {
        Draw::Adaptive(s) => s,
        _ => unreachable!("ATSD enumeration yields adaptive draws"),
    }
}

/// Frames used by the Murthy suite: `(label, frame values (y, x), n, d, condition)`.
type FrameCase = (&'static str, Vec<(f64, f64)>, usize, usize, Condition);

fn frame_cases() -> Vec<FrameCase> {
    vec![
        (
            "y=(0,0,5,3,0) n=2 d=1",
            vec![(0.0, 0.0), (0.0, 0.0), (5.0, 0.0), (3.0, 0.0), (0.0, 0.0)],
            2,
            1,
            Condition::on(Variable::Y),
        ),
        (
            "capped expansion n=3 d=3",
            vec![(1.0, 2.0), (0.0, 0.0), (4.0, 1.0), (0.0, 3.0), (2.0, 0.0), (0.0, 0.0)],
            3,
            3,
            Condition::on(Variable::Y),
        ),
        (
            "condition on x, totals of y",
            vec![(0.0, 1.0), (2.0, 0.0), (5.0, 3.0), (0.0, 0.0), (1.0, 1.0), (0.0, 2.0)],
            2,
            2,
            Condition::on(Variable::X),
        ),
    ]
}

fn murthy_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let y = |u: &Unit| u.y;
    for (label, values, n, d, cond) in frame_cases() {
        let frame = Frame {
            psu: 0,
            psu_size: values.len(),
            units: values.iter().map(|&(y, x)| Unit::new(y, x, 0.0)).enumerate().collect(),
        };
        let total = frame.total(y);
        let t = frame_expectation(&frame, n, d, cond, |s| murthy_total(s, y))?;
        checks.push(Check::exact(
            Suite::Murthy,
            format!("{label}: path probabilities sum to 1"),
            1.0,
            t.total_probability,
        ));
        checks.push(Check::exact(Suite::Murthy, format!("{label}: E(t) equals the frame total"), total, t.mean));
        let closed = phase_two_covariance(&frame, n, d, cond, y, y)?;
        checks.push(Check::exact(
            Suite::Murthy,
            format!("{label}: closed-form V3 equals enumerated var(t)"),
            t.variance,
            closed,
        ));
        let v = frame_expectation(&frame, n, d, cond, |s| v3_hat(s, y))?;
        checks.push(Check::exact(Suite::Murthy, format!("{label}: E(V3 hat) equals var(t)"), t.variance, v.mean));
    }
    Ok(checks)
}

fn unbiasedness_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let s = Suite::Unbiasedness;
    for fx in fixtures() {
        let pop = &fx.population;
        let paths = enumerate_design(pop, &DesignParams::Atsd(fx.params))?;
        let summary = |d: &Draw| AtsdSummary::new(adaptive(d), fx.target, fx.aux);
        let name = |what: &str| format!("{}: {what}", fx.name);
        let ybar = exact_moments(&paths, |d| Ok(summary(d)?.ybar_n2()))?;
        checks.push(Check::exact(s, name("path probabilities sum to 1"), 1.0, ybar.total_probability));
        checks.push(Check::exact(s, name("E(ybar_n2)"), pop.mean(fx.target), ybar.mean));
        let x2 = exact_moments(&paths, |d| Ok(summary(d)?.xbar_n2()))?;
        checks.push(Check::exact(s, name("E(xbar_n2)"), pop.mean(fx.aux), x2.mean));
        let x1 = exact_moments(&paths, |d| Ok(summary(d)?.xbar_n1()))?;
        checks.push(Check::exact(s, name("E(xbar_n1)"), pop.mean(fx.aux), x1.mean));
        let reg = exact_moments(&paths, |d| Ok(summary(d)?.mu_reg(RegressionCoefficient::fixed(fx.beta)).estimate))?;
        checks.push(Check::exact(s, name("E(mu_reg) with fixed beta"), pop.mean(fx.target), reg.mean));

        // Frame totals: E(t | frame) over the sequential phase of every phase-one sample.
        let mut worst: (f64, f64) = (0.0, 0.0);
        for h in 0..pop.psu_count() {
            use itertools::Itertools;
            for subset in (0..pop.psu_size(h)).combinations(fx.params.n1h) {
                let frame = Frame::subset(pop, h, &subset);
                let total = frame.total(|u| u.value(fx.target));
                let e = frame_expectation(&frame, fx.params.n2h1, fx.params.d, fx.params.condition, |p| {
                    murthy_total(p, |u| u.value(fx.target))
                })?;
                if (e.mean - total).abs() >= (worst.1 - worst.0).abs() {
                    worst = (total, e.mean);
                }
            }
        }
        checks.push(Check::exact(s, name("E(t) equals the frame total, worst frame"), worst.0, worst.1));
    }
    Ok(checks)
}

fn variance_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let s = Suite::Variance;
    for fx in fixtures() {
        let pop = &fx.population;
        let paths = enumerate_design(pop, &DesignParams::Atsd(fx.params))?;
        let moments = phase_two_moments(pop, &fx.params, fx.target, fx.aux, MomentMethod::Enumerate)?;
        let name = |what: &str| format!("{}: {what}", fx.name);
        let summary = |d: &Draw| AtsdSummary::new(adaptive(d), fx.target, fx.aux);
        let beta = RegressionCoefficient::fixed(fx.beta);
        let exact = var_mu_reg_exact(pop, &fx.params, fx.target, fx.beta, &moments).total();
        let reg = exact_moments(&paths, |d| Ok(summary(d)?.mu_reg(beta).estimate))?;
        checks.push(Check::exact(s, name("var(mu_reg) three-part formula vs enumeration"), reg.variance, exact));
        if fx.params.m >= 2 {
            let vhat = exact_moments(&paths, |d| summary(d)?.var_hat_mu_reg(fx.beta))?;
            checks.push(Check::exact(s, name("E(var hat(mu_reg)) with fixed beta"), exact, vhat.mean));
            let sty = exact_moments(&paths, |d| summary(d)?.psu_total_variance_hat())?;
            let rhs = between_psu_term_expectation(pop, &fx.params, fx.target, &moments);
            checks.push(Check::exact(s, name("E(S2 hat of expanded PSU totals)"), rhs, sty.mean));
        }
        // E(S2 hat_x,N_h | h selected) per PSU.
        let e2v3: Vec<f64> = (0..pop.psu_count()).map(|h| moments.v3_aux(h)).collect();
        let rhs = within_variance_expectation(pop, fx.aux, fx.params.n1h, &e2v3);
        let p_selected = fx.params.m as f64 / pop.psu_count() as f64;
        for (h, expected) in rhs.iter().enumerate() {
            let observed = exact_moments(&paths, |d| {
                let sm = summary(d)?;
                Ok(sm
                    .within_aux_variance_hat()
                    .into_iter()
                    .find(|(psu, _)| *psu == h)
                    .and_then(|(_, v)| v)
                    .unwrap_or(0.0))
            })?;
            checks.push(Check::exact(
                s,
                name(&format!("E(S2 hat_x) within PSU {}", h + 1)),
                *expected,
                observed.mean / p_selected,
            ));
        }
    }
    Ok(checks)
}

/// Mean realized n_y over `replicates` ATSD draws, with the count of draws in
/// which some expansion was capped.
pub fn realized_ny(pop: &Population, params: &AtsdParams, replicates: usize, seed: u64) -> Result<(f64, usize)> {
    let mut total = 0u64;
    let mut capped = 0;
    for r in 0..replicates {
        let draw = run_atsd(pop, params, &mut DrawRng::new(seed, r as u64).rng())?;
        total += draw.n_target() as u64;
        capped += usize::from(draw.any_capped());
    }
    Ok((total as f64 / replicates as f64, capped))
}

fn cost_suite() -> Result<Vec<Check>> {
    let s = Suite::Cost;
    let mut checks = vec![
        Check::exact(s, "E(n_y) with d = 0 is m n1", 30.0, expected_ny(&[0.3, 0.1, 0.0, 0.9], 3, 10, 0)),
        Check::exact(s, "E(n_y), M = m = 4, n1 = 10, d = 4, p = 0.2", 72.0, expected_ny(&[0.2; 4], 4, 10, 4)),
    ];
    for fx in fixtures() {
        // The formula is exact only when no expansion can be capped, so the
        // plan is shrunk to one initial unit per PSU before enumerating.
        let uncapped = AtsdParams { n2h1: 1, d: fx.params.d.min(fx.params.n1h - 1), ..fx.params };
        let paths = enumerate_design(&fx.population, &DesignParams::Atsd(uncapped))?;
        let ny = exact_moments(&paths, |d| Ok(adaptive(d).n_target() as f64))?;
        let rarity = crate::population::compute_stats(&fx.population, uncapped.condition, 0.0).rarity;
        let formula = expected_ny(&rarity, uncapped.m, uncapped.n2h1, uncapped.d);
        checks.push(Check::exact(s, format!("{}: enumerated E(n_y) vs formula", fx.name), formula, ny.mean));
        let req = PlanRequest {
            cost: CostSpec::new(1.0, 5.0)?,
            atsd: fx.params,
            ats_d: 1,
            ats_condition: Condition::on(Variable::Y),
            ats_n1: None,
        };
        if let Ok(plan) = effort_plan(&fx.population, &req) {
            checks.push(Check {
                suite: s,
                name: format!("{}: matched designs within one c_tar of the budget", fx.name),
                expected: 0.0,
                observed: plan.worst_mismatch(),
                tolerance: plan.cost.c_tar,
            });
        }
    }
    Ok(checks)
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Murthy => murthy_suite(),
        Suite::Unbiasedness => unbiasedness_suite(),
        Suite::Variance => variance_suite(),
        Suite::Cost => cost_suite(),
    }
}
