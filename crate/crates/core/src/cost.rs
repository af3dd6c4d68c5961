//! Expected survey costs and effort matching across designs.

use serde::Serialize;

use crate::designs::{spread, AtsParams, AtsdParams};
use crate::error::{Error, Result};
use crate::population::{compute_stats, Condition, Population};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSpec {
    pub c_aux: f64,
    pub c_tar: f64,
}

impl CostSpec {
    pub fn new(c_aux: f64, c_tar: f64) -> Result<Self> {
        if !(c_aux > 0.0 && c_aux.is_finite() && c_tar > 0.0 && c_tar.is_finite()) {
            return Err(Error::Config(format!("costs must be finite and positive, got c_aux={c_aux} c_tar={c_tar}")));
        }
        Ok(Self { c_aux, c_tar })
    }

    pub fn ratio(&self) -> f64 {
        self.c_tar / self.c_aux
    }

    pub fn total(&self, n_aux: usize, n_tar: usize) -> f64 {
        self.c_aux * n_aux as f64 + self.c_tar * n_tar as f64
    }
}

/// E(n_y) = (m/M) Σ_h (n₁ + d n₁ p_h) for the sequential phase with initial
/// size `n1` and expansion factor `d`. Exact when no expansion is capped.
pub fn expected_ny(rarity: &[f64], m: usize, n1: usize, d: usize) -> f64 {
    let big_m = rarity.len() as f64;
    let n1 = n1 as f64;
    m as f64 / big_m * rarity.iter().map(|p| n1 + d as f64 * n1 * p).sum::<f64>()
}

/// Mean expansion factor (1/M) Σ_h (1 + d p_h).
pub fn expansion_factor(rarity: &[f64], d: usize) -> f64 {
    rarity.iter().map(|p| 1.0 + d as f64 * p).sum::<f64>() / rarity.len() as f64
}

fn rounded(value: f64, budget: f64, c_tar: f64) -> Result<usize> {
    let n = value.round();
    if n.is_nan() || n < 1.0 {
        return Err(Error::BudgetTooSmall { budget, c_tar });
    }
    Ok(n as usize)
}

/// ATS initial sizes per first-stage slot. The total m·n₁ is rounded once and
/// spread over the slots.
pub fn match_ats(budget: f64, c_tar: f64, m: usize, rarity: &[f64], d_ats: usize) -> Result<Vec<usize>> {
    let total = rounded(budget / (c_tar * expansion_factor(rarity, d_ats)), budget, c_tar)?;
    Ok(spread(total.max(m), m))
}

/// Two-stage sizes per slot, n ≈ budget / (m c_tar).
pub fn match_two_stage(budget: f64, m: usize, c_tar: f64) -> Result<Vec<usize>> {
    let total = rounded(budget / c_tar, budget, c_tar)?;
    Ok(spread(total.max(m), m))
}

pub fn match_srs(budget: f64, c_tar: f64) -> Result<usize> {
    rounded(budget / c_tar, budget, c_tar)
}

/// Phase-two sizes per slot for two-stage double sampling, n ≈ E(n_y) / m.
pub fn match_regs(e_ny: f64, m: usize) -> Vec<usize> {
    spread((e_ny.round() as usize).max(m), m)
}

/// What a scenario fixes before matching.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRequest {
    pub cost: CostSpec,
    pub atsd: AtsdParams,
    pub ats_d: usize,
    pub ats_condition: Condition,
    /// Fixed ATS initial size per PSU instead of the matched one.
    pub ats_n1: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignCosts {
    pub atsd: f64,
    pub ats: f64,
    pub two_stage: f64,
    pub srs: f64,
    pub regs: f64,
}

/// Sizes for every design at (approximately) the ATSD expected cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffortPlan {
    pub cost: CostSpec,
    pub budget: f64,
    pub expected_ny: f64,
    pub atsd: AtsdParams,
    pub ats: AtsParams,
    pub two_stage: Vec<usize>,
    pub srs_n: usize,
    /// Phase-one size per PSU is `atsd.n1h`.
    pub regs: Vec<usize>,
    pub expected_cost: DesignCosts,
    /// `p_h` under the ATSD condition and under the ATS condition.
    pub rarity_atsd: Vec<f64>,
    pub rarity_ats: Vec<f64>,
}

impl EffortPlan {
    /// Largest gap between a matched design's expected cost and the budget.
    pub fn worst_mismatch(&self) -> f64 {
        let c = self.expected_cost;
        [c.ats, c.two_stage, c.srs, c.regs].iter().map(|v| (v - self.budget).abs()).fold(0.0, f64::max)
    }
}

pub fn effort_plan(pop: &Population, req: &PlanRequest) -> Result<EffortPlan> {
    req.atsd.validate(pop)?;
    let cost = req.cost;
    let rarity_atsd = compute_stats(pop, req.atsd.condition, 0.0).rarity;
    let rarity_ats = compute_stats(pop, req.ats_condition, 0.0).rarity;
    let m = req.atsd.m;
    let e_ny = expected_ny(&rarity_atsd, m, req.atsd.n2h1, req.atsd.d);
    let n_aux = m * req.atsd.n1h;
    let budget = cost.c_aux * n_aux as f64 + cost.c_tar * e_ny;

    let ats_n1 = match req.ats_n1 {
        Some(n) => vec![n; m],
        None => match_ats(budget, cost.c_tar, m, &rarity_ats, req.ats_d)?,
    };
    let ats = AtsParams { m, n1: ats_n1, d1: req.ats_d, condition: req.ats_condition };
    ats.validate(pop)?;
    let two_stage = match_two_stage(budget, m, cost.c_tar)?;
    let srs_n = match_srs(budget, cost.c_tar)?;
    let regs = match_regs(e_ny, m);
    let cap = pop.psu_sizes().into_iter().min().unwrap_or(0);
    if two_stage.iter().any(|&n| n > cap) || srs_n > pop.size() {
        return Err(Error::InvalidDesign(format!("budget {budget:.1} buys more units than the population holds")));
    }
    if regs.iter().any(|&n| n > req.atsd.n1h) {
        return Err(Error::InvalidDesign(format!(
            "phase-two sizes {regs:?} exceed the phase-one size {}",
            req.atsd.n1h
        )));
    }
    let ats_factor = expansion_factor(&rarity_ats, ats.d1);
    let expected_cost = DesignCosts {
        atsd: budget,
        ats: cost.c_tar * ats_factor * ats.n1.iter().sum::<usize>() as f64,
        two_stage: cost.c_tar * two_stage.iter().sum::<usize>() as f64,
        srs: cost.c_tar * srs_n as f64,
        regs: cost.c_aux * n_aux as f64 + cost.c_tar * regs.iter().sum::<usize>() as f64,
    };
    Ok(EffortPlan {
        cost,
        budget,
        expected_ny: e_ny,
        atsd: req.atsd,
        ats,
        two_stage,
        srs_n,
        regs,
        expected_cost,
        rarity_atsd,
        rarity_ats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_expansion_gives_m_times_n1() {
        assert_eq!(expected_ny(&[0.3, 0.1, 0.0, 0.9], 3, 10, 0), 30.0);
    }

    #[test]
    fn formula_arithmetic() {
        assert!((expected_ny(&[0.2; 4], 4, 10, 4) - 72.0).abs() < 1e-12);
    }

    #[test]
    fn simple_matches() {
        assert_eq!(match_two_stage(160.0, 4, 1.0).unwrap(), vec![40; 4]);
        assert_eq!(match_srs(160.0, 1.0).unwrap(), 160);
        assert_eq!(match_regs(72.0, 4), vec![18; 4]);
        assert!(matches!(match_srs(0.2, 1.0), Err(Error::BudgetTooSmall { .. })));
    }

    #[test]
    fn ats_total_is_spread() {
        // factor 1.5, budget 150 at c_tar 10 -> 10 initial units over 4 PSUs
        assert_eq!(match_ats(150.0, 10.0, 4, &[0.05; 4], 10).unwrap(), vec![3, 3, 2, 2]);
    }
}
