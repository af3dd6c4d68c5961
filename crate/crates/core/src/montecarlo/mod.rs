//! Replicated comparison of designs and estimators, plus the exhaustive
//! enumeration oracle.

mod aggregate;
mod enumerate;

pub use aggregate::{aggregate, Accumulator, ExperimentTable, TableRow};
pub use enumerate::{enumerate_design, exact_moments, frame_expectation, ExactMoments, ENUMERATION_LIMIT};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::cost::EffortPlan;
use crate::designs::{draw, DesignParams, Draw};
use crate::error::{Error, Result};
use crate::estimators::{
    beta_opt_pop, beta_pop, phase_two_moments, regs, srs_mean, two_stage_mean, AtsdSummary, CoefficientKind,
    Degeneracy, EstimatorReport, MomentMethod, RegressionCoefficient,
};
use crate::population::{Population, Variable};
use crate::rng::DrawRng;

/// The estimators an experiment can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimatorId {
    /// ATSD regression estimator with the design-optimal population slope.
    RegO,
    /// ATSD regression estimator with the least-squares population slope.
    Reg1,
    Regopt,
    Regb1,
    /// Murthy mean under ATS.
    Ats,
    /// Two-stage double-sampling regression estimator.
    Regs,
    /// SRSWOR sample mean.
    YbarS,
    /// Two-stage SRSWOR expansion mean.
    YbarTs,
}

/// Design arms; every arm draws from its own seeded streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Arm {
    Atsd,
    Ats,
    TwoStageDouble,
    Srs,
    TwoStage,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Atsd => "atsd",
            Arm::Ats => "ats",
            Arm::TwoStageDouble => "two_stage_double",
            Arm::Srs => "srs",
            Arm::TwoStage => "two_stage",
        }
    }

    fn params(self, plan: &EffortPlan) -> DesignParams {
        match self {
            Arm::Atsd => DesignParams::Atsd(plan.atsd),
            Arm::Ats => DesignParams::Ats(plan.ats.clone()),
            Arm::TwoStageDouble => {
                DesignParams::TwoStageDouble { m: plan.atsd.m, n1h: plan.atsd.n1h, phase2: plan.regs.clone() }
            }
            Arm::Srs => DesignParams::Srs { n: plan.srs_n },
            Arm::TwoStage => DesignParams::TwoStage { m: plan.atsd.m, sizes: plan.two_stage.clone() },
        }
    }
}

impl EstimatorId {
    pub const DEFAULT: [EstimatorId; 7] = [
        EstimatorId::RegO,
        EstimatorId::Reg1,
        EstimatorId::Regopt,
        EstimatorId::Regb1,
        EstimatorId::Ats,
        EstimatorId::Regs,
        EstimatorId::YbarS,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorId::RegO => "RegO",
            EstimatorId::Reg1 => "Reg1",
            EstimatorId::Regopt => "Regopt",
            EstimatorId::Regb1 => "Regb1",
            EstimatorId::Ats => "ATS",
            EstimatorId::Regs => "Regs",
            EstimatorId::YbarS => "ybar_s",
            EstimatorId::YbarTs => "ybar_ts",
        }
    }

    pub fn arm(self) -> Arm {
        match self {
            EstimatorId::RegO | EstimatorId::Reg1 | EstimatorId::Regopt | EstimatorId::Regb1 => Arm::Atsd,
            EstimatorId::Ats => Arm::Ats,
            EstimatorId::Regs => Arm::TwoStageDouble,
            EstimatorId::YbarS => Arm::Srs,
            EstimatorId::YbarTs => Arm::TwoStage,
        }
    }

    pub fn uses_aux(self) -> bool {
        matches!(self.arm(), Arm::Atsd | Arm::TwoStageDouble)
    }

    /// Table row name, e.g. `RegO_x`.
    pub fn row_name(self, aux: Variable) -> String {
        if self.uses_aux() {
            format!("{}_{}", self.label(), aux)
        } else {
            self.label().to_string()
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        [EstimatorId::YbarTs]
            .iter()
            .chain(&EstimatorId::DEFAULT)
            .copied()
            .find(|e| e.label().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{}`", s.trim())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub target: Variable,
    pub aux: Variable,
    pub plan: EffortPlan,
    pub estimators: Vec<EstimatorId>,
    /// Its empirical variance is the numerator of eff.
    pub reference: EstimatorId,
    pub replicates: usize,
    pub master_seed: u64,
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    /// Outer phase-one draws per PSU for β_o when enumeration is too large.
    pub oracle_outer: usize,
    /// Largest tolerated fraction of errored replicates for any estimator.
    pub max_error_rate: f64,
    pub keep_replicates: bool,
}

impl ExperimentConfig {
    pub fn validate(&self, pop: &Population) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimator list is empty".into()));
        }
        if !self.estimators.contains(&self.reference) {
            return Err(Error::Config(format!("reference estimator {} is not in the list", self.reference)));
        }
        // the design runners validate their parameters; one trial draw per arm
        for arm in self.arms() {
            draw(pop, &arm.params(&self.plan), &mut DrawRng::new(0, 0).rng())?;
        }
        Ok(())
    }

    fn arms(&self) -> Vec<Arm> {
        let mut arms = Vec::new();
        for e in &self.estimators {
            if !arms.contains(&e.arm()) {
                arms.push(e.arm());
            }
        }
        arms
    }
}

/// Population slopes used by RegO and Reg1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCoefficients {
    pub beta1: RegressionCoefficient,
    pub beta_opt: RegressionCoefficient,
    pub method: MomentMethod,
}

pub fn oracle_coefficients(
    pop: &Population,
    plan: &EffortPlan,
    target: Variable,
    aux: Variable,
    outer: usize,
    seed: u64,
) -> Result<OracleCoefficients> {
    let coefficient = |kind, r: Result<f64>| match r {
        Ok(v) => Ok(RegressionCoefficient::known(kind, v)),
        Err(Error::Degenerate(_)) => Ok(RegressionCoefficient::degenerate(kind)),
        Err(e) => Err(e),
    };
    let method = MomentMethod::auto(pop, plan.atsd.n1h, outer, seed);
    let moments = phase_two_moments(pop, &plan.atsd, target, aux, method)?;
    Ok(OracleCoefficients {
        beta1: coefficient(CoefficientKind::Beta1Pop, beta_pop(pop, target, aux))?,
        beta_opt: coefficient(CoefficientKind::BetaOptPop, beta_opt_pop(pop, &plan.atsd, target, aux, &moments))?,
        method,
    })
}

/// One estimator on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub design: &'static str,
    pub estimator: String,
    /// `None` when the replicate errored.
    pub report: Option<EstimatorReport>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub table: ExperimentTable,
    pub oracle: OracleCoefficients,
    pub arm_seeds: Vec<(&'static str, u64)>,
    pub replicate_rows: Vec<ReplicateRow>,
}

pub fn write_replicates_csv<W: Write>(rows: &[ReplicateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "design", "estimator", "estimate", "var_hat", "fallback", "coefficient"])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for r in rows {
        let (estimate, var_hat, fallback, coefficient) = match &r.report {
            Some(rep) => (
                rep.estimate.to_string(),
                opt(rep.var_hat),
                rep.fallback_used.to_string(),
                opt(rep.coefficient.filter(|c| !c.degenerate).map(|c| c.value)),
            ),
            None => ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
        };
        w.write_record([
            r.replicate.to_string(),
            r.design.to_string(),
            r.estimator.clone(),
            estimate,
            var_hat,
            fallback,
            coefficient,
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Context<'a> {
    pop: &'a Population,
    config: &'a ExperimentConfig,
    oracle: &'a OracleCoefficients,
    tol: Degeneracy,
    arms: Vec<(Arm, u64, DesignParams)>,
}

impl Context<'_> {
    fn replicate(&self, r: usize) -> Vec<(EstimatorId, Option<EstimatorReport>, f64)> {
        let mut out = Vec::with_capacity(self.config.estimators.len());
        for (arm, seed, params) in &self.arms {
            let mut rng = DrawRng::new(*seed, r as u64).rng();
            let drawn = draw(self.pop, params, &mut rng);
            let cost = drawn.as_ref().map_or(f64::NAN, |d| {
                let (n_aux, n_tar) = d.measurements();
                self.config.plan.cost.total(n_aux, n_tar)
            });
            for &e in self.config.estimators.iter().filter(|e| e.arm() == *arm) {
                let report = drawn.as_ref().ok().and_then(|d| self.evaluate(e, d).ok());
                out.push((e, report, cost));
            }
        }
        out
    }

    fn evaluate(&self, e: EstimatorId, d: &Draw) -> Result<EstimatorReport> {
        let (target, aux) = (self.config.target, self.config.aux);
        Ok(match (e, d) {
            (EstimatorId::Ats, Draw::Adaptive(s)) => AtsdSummary::new(s, target, target)?.murthy_mean(),
            (_, Draw::Adaptive(s)) => {
                let summary = AtsdSummary::new(s, target, aux)?;
                let beta = match e {
                    EstimatorId::RegO => self.oracle.beta_opt,
                    EstimatorId::Reg1 => self.oracle.beta1,
                    EstimatorId::Regopt => summary.beta_opt_hat(&self.tol),
                    _ => summary.beta1_hat(&self.tol),
                };
                summary.mu_reg(beta)
            }
            (_, Draw::TwoStageDouble(s)) => regs(s, target, aux, &self.tol),
            (_, Draw::Srs(s)) => srs_mean(s, target),
            (_, Draw::TwoStage(s)) => two_stage_mean(s, target),
        })
    }
}

#[cfg(feature = "parallel")]
fn map_replicates<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_replicates<T>(n: usize, _threads: usize, f: impl Fn(usize) -> T) -> Result<Vec<T>> {
    Ok((0..n).map(f).collect())
}

/// Runs every design arm `replicates` times. Replicate `r` of an arm uses
/// stream `r` of the arm's seed, so results do not depend on thread count.
pub fn run_experiment(pop: &Population, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate(pop)?;
    let oracle_seed = DrawRng::derive_seed(config.master_seed, "oracle");
    let oracle = oracle_coefficients(pop, &config.plan, config.target, config.aux, config.oracle_outer, oracle_seed)?;
    let arms: Vec<(Arm, u64, DesignParams)> = config
        .arms()
        .into_iter()
        .map(|a| (a, DrawRng::derive_seed(config.master_seed, a.label()), a.params(&config.plan)))
        .collect();
    let ctx = Context { pop, config, oracle: &oracle, tol: Degeneracy::for_population(pop, config.aux), arms };
    let per_replicate = map_replicates(config.replicates, config.threads, |r| ctx.replicate(r))?;

    let mut accs: Vec<Accumulator> = vec![Accumulator::default(); config.estimators.len()];
    let mut replicate_rows = Vec::new();
    for (r, results) in per_replicate.into_iter().enumerate() {
        for (e, report, cost) in results {
            let k = config.estimators.iter().position(|x| *x == e).expect("estimator listed");
            match &report {
                Some(rep) => accs[k].push(rep.estimate, rep.var_hat, rep.fallback_used, cost),
                None => accs[k].push_error(),
            }
            if config.keep_replicates {
                replicate_rows.push(ReplicateRow {
                    replicate: r,
                    design: e.arm().label(),
                    estimator: e.row_name(config.aux),
                    report,
                    cost,
                });
            }
        }
    }
    let limit = (config.max_error_rate * config.replicates as f64).floor() as usize;
    if let Some(acc) = accs.iter().find(|a| a.errored > limit) {
        return Err(Error::ExperimentQuality { errored: acc.errored, replicates: config.replicates });
    }
    let entries: Vec<(String, String, Accumulator)> = config
        .estimators
        .iter()
        .zip(accs)
        .map(|(e, acc)| (e.row_name(config.aux), e.arm().label().to_string(), acc))
        .collect();
    let table = aggregate(&entries, &config.reference.row_name(config.aux), pop.mean(config.target));
    let arm_seeds = ctx.arms.iter().map(|(a, s, _)| (a.label(), *s)).collect();
    Ok(ExperimentOutput { table, oracle, arm_seeds, replicate_rows })
}
