//! Random-restart search for generator parameters that reproduce a target set
//! of summary statistics.

use rand::Rng;
use serde::Serialize;

use super::{compute_stats, generate_population, AuxModel, Condition, PopulationSpec, PopulationStats, Variable};
use crate::rng::DrawRng;

/// Target summary statistics with acceptance tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Target {
    pub mean_y: f64,
    pub var_y: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub corr_xy: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub corr_zy: f64,
    /// Relative tolerance on means.
    pub mean_tol: f64,
    /// Relative tolerance on variances.
    pub var_tol: f64,
    /// Absolute tolerance on correlations.
    pub corr_tol: f64,
    /// Share of units with y > 0 and its absolute tolerance. Not a summary
    /// statistic of the table but implied by the ATS plans run on each
    /// population.
    pub occupancy: Option<(f64, f64)>,
}

impl Table1Target {
    /// Rare and clustered population.
    // var_x = 3.14 is a target statistic, not π
    #[allow(clippy::approx_constant)]
    pub fn population1() -> Self {
        Self {
            mean_y: 0.19,
            var_y: 1.68,
            mean_x: 0.40,
            var_x: 3.14,
            corr_xy: 0.89,
            mean_z: 0.42,
            var_z: 3.35,
            corr_zy: 0.52,
            mean_tol: 0.2,
            var_tol: 0.35,
            corr_tol: 0.04,
            occupancy: Some((0.046, 0.015)),
        }
    }

    /// Less rare but clustered population.
    pub fn population2() -> Self {
        Self {
            mean_y: 0.50,
            var_y: 4.85,
            mean_x: 0.47,
            var_x: 3.52,
            corr_xy: 0.93,
            mean_z: 0.46,
            var_z: 2.99,
            corr_zy: 0.51,
            mean_tol: 0.2,
            var_tol: 0.35,
            corr_tol: 0.04,
            occupancy: None,
        }
    }

    /// One `(label, target, observed, within tolerance)` row per statistic.
    pub fn check(&self, stats: &PopulationStats) -> Vec<(&'static str, f64, f64, bool)> {
        let rel = |t: f64, o: f64, tol: f64| ((o - t) / t).abs() <= tol;
        let corr = |t: f64, o: Option<f64>| o.is_some_and(|o| (o - t).abs() <= self.corr_tol);
        let occupied = stats.condition_counts.iter().sum::<usize>() as f64 / stats.size as f64;
        let mut rows = vec![
            ("mean y", self.mean_y, stats.y.mean, rel(self.mean_y, stats.y.mean, self.mean_tol)),
            ("var y", self.var_y, stats.y.variance, rel(self.var_y, stats.y.variance, self.var_tol)),
            ("mean x", self.mean_x, stats.x.mean, rel(self.mean_x, stats.x.mean, self.mean_tol)),
            ("var x", self.var_x, stats.x.variance, rel(self.var_x, stats.x.variance, self.var_tol)),
            ("corr(x,y)", self.corr_xy, stats.corr_xy.unwrap_or(f64::NAN), corr(self.corr_xy, stats.corr_xy)),
            ("mean z", self.mean_z, stats.z.mean, rel(self.mean_z, stats.z.mean, self.mean_tol)),
            ("var z", self.var_z, stats.z.variance, rel(self.var_z, stats.z.variance, self.var_tol)),
            ("corr(z,y)", self.corr_zy, stats.corr_zy.unwrap_or(f64::NAN), corr(self.corr_zy, stats.corr_zy)),
        ];
        if let Some((share, tol)) = self.occupancy {
            rows.push(("share y > 0", share, occupied, (occupied - share).abs() <= tol));
        }
        rows
    }

    fn score(&self, stats: &PopulationStats) -> f64 {
        let rel = |t: f64, o: f64, tol: f64| ((o - t) / (t * tol)).powi(2);
        let corr = |t: f64, o: Option<f64>| o.map_or(1e6, |o| ((o - t) / self.corr_tol).powi(2));
        rel(self.mean_y, stats.y.mean, self.mean_tol)
            + rel(self.var_y, stats.y.variance, self.var_tol)
            + rel(self.mean_x, stats.x.mean, self.mean_tol)
            + rel(self.var_x, stats.x.variance, self.var_tol)
            + rel(self.mean_z, stats.z.mean, self.mean_tol)
            + rel(self.var_z, stats.z.variance, self.var_tol)
            + corr(self.corr_xy, stats.corr_xy)
            + corr(self.corr_zy, stats.corr_zy)
            + self.occupancy.map_or(0.0, |(share, tol)| {
                let occupied = stats.condition_counts.iter().sum::<usize>() as f64 / stats.size as f64;
                ((occupied - share) / tol).powi(2)
            })
    }
}

/// Inclusive ranges explored by the search. Rates and counts are drawn
/// log-uniformly, probabilities uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    pub cluster_rate: (f64, f64),
    pub points_per_cluster: (f64, f64),
    pub dispersion: (f64, f64),
    pub x_keep: (f64, f64),
    pub x_extra: (f64, f64),
    pub x_background_clusters: (f64, f64),
    pub x_background_points: (f64, f64),
    pub z_keep: (f64, f64),
    pub z_background_clusters: (f64, f64),
    pub z_background_points: (f64, f64),
    pub z_background_dispersion: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            cluster_rate: (2.0, 12.0),
            points_per_cluster: (5.0, 60.0),
            dispersion: (0.3, 1.5),
            x_keep: (0.6, 1.0),
            x_extra: (1.0, 40.0),
            x_background_clusters: (0.1, 8.0),
            x_background_points: (2.0, 40.0),
            z_keep: (0.2, 0.9),
            z_background_clusters: (1.0, 12.0),
            z_background_points: (5.0, 60.0),
            z_background_dispersion: (0.3, 1.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub spec: PopulationSpec,
    pub stats: PopulationStats,
    pub accepted: bool,
    pub attempts: usize,
}

/// Draws `restarts` candidate specs (grid and PSU layout taken from `base`) and
/// returns the first whose statistics meet every tolerance, or else the
/// closest candidate with `accepted = false`.
pub fn calibrate(
    base: &PopulationSpec,
    target: &Table1Target,
    search: &SearchBox,
    restarts: usize,
    search_seed: u64,
) -> CalibrationOutcome {
    let mut rng = DrawRng::new(search_seed, 0x00ca_11b8).rng();
    let mut log_uniform = |(lo, hi): (f64, f64)| -> f64 { (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp() };
    let mut best: Option<(f64, CalibrationOutcome)> = None;
    for attempt in 1..=restarts.max(1) {
        let mut spec = base.clone();
        spec.cluster_rate = log_uniform(search.cluster_rate);
        spec.points_per_cluster = log_uniform(search.points_per_cluster);
        spec.dispersion = log_uniform(search.dispersion);
        spec.x = AuxModel {
            keep: log_uniform(search.x_keep).min(1.0),
            extra_per_cluster: log_uniform(search.x_extra),
            background_clusters: log_uniform(search.x_background_clusters),
            background_points: log_uniform(search.x_background_points),
            background_dispersion: log_uniform(search.z_background_dispersion),
        };
        spec.z = AuxModel {
            keep: log_uniform(search.z_keep).min(1.0),
            extra_per_cluster: 0.0,
            background_clusters: log_uniform(search.z_background_clusters),
            background_points: log_uniform(search.z_background_points),
            background_dispersion: log_uniform(search.z_background_dispersion),
        };
        spec.seed = log_uniform((1.0, 1e15)) as u64;
        let Ok(pop) = generate_population(&spec) else { continue };
        let stats = compute_stats(&pop, Condition::on(Variable::Y), 0.0);
        let accepted = target.check(&stats).iter().all(|row| row.3);
        let score = target.score(&stats);
        let outcome = CalibrationOutcome { spec, stats, accepted, attempts: attempt };
        if accepted {
            return outcome;
        }
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, outcome));
        }
    }
    let (_, mut outcome) = best.expect("at least one candidate generated");
    outcome.attempts = restarts.max(1);
    outcome
}
