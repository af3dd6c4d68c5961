//! Finite clustered populations: units, PSU layout, summary statistics and the
//! exact population-level quantities the variance formulas are built from.

mod calibrate;
mod generate;
mod io;

pub use calibrate::{calibrate, CalibrationOutcome, SearchBox, Table1Target};
pub use generate::{generate_population, AuxModel, PopulationSpec};
pub use io::{load_population, parse_population, render_population, save_population};

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Measured variables carried by every unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Y,
    X,
    Z,
    W,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::Y, Variable::X, Variable::Z, Variable::W];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Y => "y",
            Variable::X => "x",
            Variable::Z => "z",
            Variable::W => "w",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Variable::Y => 1,
            Variable::X => 2,
            Variable::Z => 4,
            Variable::W => 8,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "y" => Ok(Variable::Y),
            "x" => Ok(Variable::X),
            "z" => Ok(Variable::Z),
            "w" => Ok(Variable::W),
            other => Err(Error::UnknownVariable(other.to_string())),
        }
    }
}

/// Adaptive trigger: a unit satisfies the condition when any of the listed
/// variables is nonempty (strictly positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    mask: u8,
}

impl Condition {
    pub fn on(var: Variable) -> Self {
        Self { mask: var.bit() }
    }

    pub fn any_of(vars: &[Variable]) -> Self {
        Self { mask: vars.iter().fold(0, |m, v| m | v.bit()) }
    }

    pub fn variables(self) -> impl Iterator<Item = Variable> {
        Variable::ALL.into_iter().filter(move |v| self.mask & v.bit() != 0)
    }

    pub fn is_met(self, unit: &Unit) -> bool {
        self.variables().any(|v| unit.value(v) > 0.0)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.variables().map(Variable::name).collect();
        f.write_str(&names.join("|"))
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vars = s.split('|').map(str::parse).collect::<Result<Vec<Variable>>>()?;
        if vars.is_empty() {
            return Err(Error::UnknownVariable(s.to_string()));
        }
        Ok(Condition::any_of(&vars))
    }
}

/// One secondary sampling unit (a grid quadrat).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Unit {
    pub y: f64,
    pub x: f64,
    pub z: f64,
    pub w: bool,
}

impl Unit {
    /// Builds a unit with `w` derived from `y`.
    pub fn new(y: f64, x: f64, z: f64) -> Self {
        Self { y, x, z, w: y > 0.0 }
    }

    pub fn value(&self, var: Variable) -> f64 {
        match var {
            Variable::Y => self.y,
            Variable::X => self.x,
            Variable::Z => self.z,
            Variable::W => f64::from(u8::from(self.w)),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        for (name, v) in [("y", self.y), ("x", self.x), ("z", self.z)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} = {v} is not a finite nonnegative value"));
            }
        }
        if self.w != (self.y > 0.0) {
            return Err(format!("w = {} disagrees with y = {}", u8::from(self.w), self.y));
        }
        Ok(())
    }
}

/// A finite population partitioned into PSUs. Indices are zero-based in the API
/// and one-based in the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    grid_side: usize,
    seed: u64,
    psus: Vec<Vec<Unit>>,
}

impl Population {
    /// Builds a non-spatial population (grid side 0) from explicit PSU contents.
    pub fn from_psus(psus: Vec<Vec<Unit>>) -> Result<Self> {
        Self::with_layout(psus, 0, 0)
    }

    pub fn with_layout(psus: Vec<Vec<Unit>>, grid_side: usize, seed: u64) -> Result<Self> {
        if psus.is_empty() {
            return Err(Error::InvalidPopulation("no PSUs".into()));
        }
        for (h, psu) in psus.iter().enumerate() {
            if psu.is_empty() {
                return Err(Error::InvalidPopulation(format!("PSU {} is empty", h + 1)));
            }
            for (j, unit) in psu.iter().enumerate() {
                unit.check().map_err(|e| Error::InvalidPopulation(format!("unit ({}, {}): {e}", h + 1, j + 1)))?;
            }
        }
        let pop = Self { grid_side, seed, psus };
        if grid_side > 0 {
            if grid_side * grid_side != pop.size() {
                return Err(Error::InvalidPopulation(format!(
                    "grid {grid_side}x{grid_side} does not hold {} units",
                    pop.size()
                )));
            }
            let first = pop.psus[0].len();
            if pop.psus.iter().any(|p| p.len() != first) {
                return Err(Error::InvalidPopulation("gridded populations need equal PSUs".into()));
            }
        }
        Ok(pop)
    }

    pub fn psu_count(&self) -> usize {
        self.psus.len()
    }

    pub fn psu_sizes(&self) -> Vec<usize> {
        self.psus.iter().map(Vec::len).collect()
    }

    pub fn psu_size(&self, h: usize) -> usize {
        self.psus[h].len()
    }

    pub fn size(&self) -> usize {
        self.psus.iter().map(Vec::len).sum()
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn psu(&self, h: usize) -> &[Unit] {
        &self.psus[h]
    }

    pub fn psus(&self) -> &[Vec<Unit>] {
        &self.psus
    }

    pub fn unit(&self, h: usize, j: usize) -> &Unit {
        &self.psus[h][j]
    }

    pub fn units(&self) -> impl Iterator<Item = &Unit> {
        self.psus.iter().flatten()
    }

    /// Population mean of a variable.
    pub fn mean(&self, var: Variable) -> f64 {
        self.total(var) / self.size() as f64
    }

    pub fn total(&self, var: Variable) -> f64 {
        compensated_sum(self.units().map(|u| u.value(var)))
    }

    pub fn psu_total(&self, h: usize, var: Variable) -> f64 {
        compensated_sum(self.psus[h].iter().map(|u| u.value(var)))
    }

    /// Grid cell `(row, col)` of unit `(h, j)`; `None` for non-spatial populations.
    pub fn cell_of(&self, h: usize, j: usize) -> Option<(usize, usize)> {
        (self.grid_side > 0).then(|| layout_cell(self.grid_side, self.psus.len(), h, j))
    }
}

/// PSU blocks: square tiles when the PSU count is a perfect square dividing the
/// grid evenly, otherwise equal row-major runs.
pub(crate) fn layout_index(side: usize, psus: usize, row: usize, col: usize) -> (usize, usize) {
    match square_tiles(side, psus) {
        Some((k, b)) => ((row / b) * k + col / b, (row % b) * b + col % b),
        None => {
            let per = side * side / psus;
            let idx = row * side + col;
            (idx / per, idx % per)
        }
    }
}

pub(crate) fn layout_cell(side: usize, psus: usize, h: usize, j: usize) -> (usize, usize) {
    match square_tiles(side, psus) {
        Some((k, b)) => ((h / k) * b + j / b, (h % k) * b + j % b),
        None => {
            let idx = h * (side * side / psus) + j;
            (idx / side, idx % side)
        }
    }
}

fn square_tiles(side: usize, psus: usize) -> Option<(usize, usize)> {
    let k = (psus as f64).sqrt().round() as usize;
    (k * k == psus && side.is_multiple_of(k)).then_some((k, side / k))
}

/// Mean and variance (divisor N - 1) of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariableSummary {
    pub mean: f64,
    pub variance: f64,
}

/// Summary statistics of a population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationStats {
    pub size: usize,
    pub y: VariableSummary,
    pub x: VariableSummary,
    pub z: VariableSummary,
    pub w: VariableSummary,
    /// Pearson correlation with y; `None` when either variable is constant.
    pub corr_xy: Option<f64>,
    pub corr_zy: Option<f64>,
    pub corr_wy: Option<f64>,
    pub psu_totals_y: Vec<f64>,
    pub psu_totals_x: Vec<f64>,
    pub condition: String,
    pub threshold: f64,
    /// Units per PSU whose condition value exceeds the threshold.
    pub condition_counts: Vec<usize>,
    /// `L_h / N_h` per PSU.
    pub rarity: Vec<f64>,
}

impl PopulationStats {
    pub fn summary(&self, var: Variable) -> VariableSummary {
        match var {
            Variable::Y => self.y,
            Variable::X => self.x,
            Variable::Z => self.z,
            Variable::W => self.w,
        }
    }

    pub fn corr_with_y(&self, var: Variable) -> Option<f64> {
        match var {
            Variable::Y => Some(1.0),
            Variable::X => self.corr_xy,
            Variable::Z => self.corr_zy,
            Variable::W => self.corr_wy,
        }
    }
}

/// Exact summary statistics. A unit counts towards `L_h` when any variable of
/// `condition` exceeds `threshold`.
pub fn compute_stats(pop: &Population, condition: Condition, threshold: f64) -> PopulationStats {
    let summary = |var| {
        let values: Vec<f64> = pop.units().map(|u| u.value(var)).collect();
        VariableSummary { mean: pop.mean(var), variance: crate::numeric::sample_cov(&values, &values) }
    };
    let corr = |a: Variable| {
        let av: Vec<f64> = pop.units().map(|u| u.value(a)).collect();
        let yv: Vec<f64> = pop.units().map(|u| u.y).collect();
        let saa = crate::numeric::sample_cov(&av, &av);
        let syy = crate::numeric::sample_cov(&yv, &yv);
        if saa <= 0.0 || syy <= 0.0 {
            return None;
        }
        let r = crate::numeric::sample_cov(&av, &yv) / (saa * syy).sqrt();
        Some(r.clamp(-1.0, 1.0))
    };
    let condition_counts: Vec<usize> = pop
        .psus()
        .iter()
        .map(|psu| psu.iter().filter(|u| condition.variables().any(|v| u.value(v) > threshold)).count())
        .collect();
    let rarity = condition_counts.iter().zip(pop.psu_sizes()).map(|(&l, n)| l as f64 / n as f64).collect();
    PopulationStats {
        size: pop.size(),
        y: summary(Variable::Y),
        x: summary(Variable::X),
        z: summary(Variable::Z),
        w: summary(Variable::W),
        corr_xy: corr(Variable::X),
        corr_zy: corr(Variable::Z),
        corr_wy: corr(Variable::W),
        psu_totals_y: (0..pop.psu_count()).map(|h| pop.psu_total(h, Variable::Y)).collect(),
        psu_totals_x: (0..pop.psu_count()).map(|h| pop.psu_total(h, Variable::X)).collect(),
        condition: condition.to_string(),
        threshold,
        condition_counts,
        rarity,
    }
}

/// Exact population-level (co)variance components for one target/auxiliary pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponents {
    /// S²_{ty_N}: between-PSU variance of PSU totals of the target.
    pub between_total_target: f64,
    pub between_total_aux: f64,
    pub between_total_cross: f64,
    /// S²_{y_{N_h}} per PSU.
    pub within_target: Vec<f64>,
    pub within_aux: Vec<f64>,
    pub within_cross: Vec<f64>,
}

/// Two-pass exact variance components of `target` and `aux`.
pub fn population_variance_components(pop: &Population, target: Variable, aux: Variable) -> Result<VarianceComponents> {
    if pop.psu_count() < 2 {
        return Err(Error::Degenerate("need at least two PSUs".into()));
    }
    if let Some(h) = pop.psus().iter().position(|p| p.len() < 2) {
        return Err(Error::Degenerate(format!("PSU {} has fewer than two units", h + 1)));
    }
    let ty: Vec<f64> = (0..pop.psu_count()).map(|h| pop.psu_total(h, target)).collect();
    let tx: Vec<f64> = (0..pop.psu_count()).map(|h| pop.psu_total(h, aux)).collect();
    let cov = crate::numeric::sample_cov;
    let within = |a: Variable, b: Variable| -> Vec<f64> {
        pop.psus()
            .iter()
            .map(|psu| {
                let av: Vec<f64> = psu.iter().map(|u| u.value(a)).collect();
                let bv: Vec<f64> = psu.iter().map(|u| u.value(b)).collect();
                cov(&av, &bv)
            })
            .collect()
    };
    Ok(VarianceComponents {
        between_total_target: cov(&ty, &ty),
        between_total_aux: cov(&tx, &tx),
        between_total_cross: cov(&tx, &ty),
        within_target: within(target, target),
        within_aux: within(aux, aux),
        within_cross: within(aux, target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(ys: &[f64], xs: &[f64]) -> Vec<Unit> {
        ys.iter().zip(xs).map(|(&y, &x)| Unit::new(y, x, 0.0)).collect()
    }

    #[test]
    fn hand_population_stats() {
        let pop = Population::from_psus(vec![units(&[0.0, 0.0, 2.0, 2.0], &[0.0, 1.0, 2.0, 3.0])]).unwrap();
        let stats = compute_stats(&pop, Condition::on(Variable::Y), 0.0);
        assert_eq!(stats.y.mean, 1.0);
        // y deviations (-1,-1,1,1), x deviations (-1.5,-0.5,0.5,1.5):
        // Sxy = 4/3, Syy = 4/3, Sxx = 5/3 -> r = (4/3)/sqrt(20/9) = 2/sqrt(5)
        let r = stats.corr_xy.unwrap();
        assert!((r - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(stats.condition_counts, vec![2]);
        assert_eq!(stats.rarity, vec![0.5]);
        assert_eq!(stats.corr_zy, None);
    }

    #[test]
    fn all_zero_population_has_undefined_correlations() {
        let pop = Population::from_psus(vec![vec![Unit::new(0.0, 0.0, 0.0); 6]; 2]).unwrap();
        let stats = compute_stats(&pop, Condition::on(Variable::X), 0.0);
        assert_eq!(stats.y, VariableSummary { mean: 0.0, variance: 0.0 });
        assert_eq!(stats.x.variance, 0.0);
        assert!(stats.corr_xy.is_none() && stats.corr_zy.is_none() && stats.corr_wy.is_none());
    }

    #[test]
    fn between_psu_variance_of_two_totals() {
        let pop =
            Population::from_psus(vec![units(&[1.0, 2.0], &[0.0, 0.0]), units(&[3.0, 4.0], &[0.0, 0.0])]).unwrap();
        let vc = population_variance_components(&pop, Variable::Y, Variable::X).unwrap();
        assert_eq!(vc.between_total_target, 8.0);
        assert_eq!(vc.within_target, vec![0.5, 0.5]);
    }

    #[test]
    fn equal_totals_have_zero_between_variance() {
        let pop = Population::from_psus(vec![
            units(&[1.0, 2.0, 0.0], &[1.0, 1.0, 1.0]),
            units(&[0.0, 0.0, 3.0], &[3.0, 0.0, 0.0]),
        ])
        .unwrap();
        let vc = population_variance_components(&pop, Variable::Y, Variable::X).unwrap();
        assert_eq!(vc.between_total_target, 0.0);
        assert_eq!(vc.between_total_aux, 0.0);
    }

    #[test]
    fn degenerate_components_rejected() {
        let one_psu = Population::from_psus(vec![units(&[1.0, 2.0], &[0.0, 0.0])]).unwrap();
        assert!(population_variance_components(&one_psu, Variable::Y, Variable::X).is_err());
        let tiny = Population::from_psus(vec![units(&[1.0], &[0.0]), units(&[1.0], &[0.0])]).unwrap();
        assert!(population_variance_components(&tiny, Variable::Y, Variable::X).is_err());
    }

    #[test]
    fn inconsistent_w_rejected() {
        let bad = Unit { y: 2.0, x: 0.0, z: 0.0, w: false };
        assert!(Population::from_psus(vec![vec![bad]]).is_err());
        let neg = Unit::new(-1.0, 0.0, 0.0);
        assert!(Population::from_psus(vec![vec![neg]]).is_err());
    }

    #[test]
    fn layout_round_trips() {
        for (side, m) in [(20, 4), (6, 4), (6, 9), (6, 3), (4, 2), (5, 5)] {
            let mut seen = std::collections::HashSet::new();
            for row in 0..side {
                for col in 0..side {
                    let (h, j) = layout_index(side, m, row, col);
                    assert!(h < m && j < side * side / m);
                    assert!(seen.insert((h, j)));
                    assert_eq!(layout_cell(side, m, h, j), (row, col));
                }
            }
        }
    }

    #[test]
    fn quadrant_layout_for_default_grid() {
        assert_eq!(layout_index(20, 4, 0, 0), (0, 0));
        assert_eq!(layout_index(20, 4, 0, 10), (1, 0));
        assert_eq!(layout_index(20, 4, 10, 0), (2, 0));
        assert_eq!(layout_index(20, 4, 19, 19), (3, 99));
    }

    #[test]
    fn condition_parsing() {
        let c: Condition = "x|y".parse().unwrap();
        assert_eq!(c, Condition::any_of(&[Variable::Y, Variable::X]));
        assert_eq!(c.to_string(), "y|x");
        assert!("q".parse::<Condition>().is_err());
        let u = Unit::new(0.0, 2.0, 0.0);
        assert!(c.is_met(&u));
        assert!(!Condition::on(Variable::W).is_met(&u));
    }
}
