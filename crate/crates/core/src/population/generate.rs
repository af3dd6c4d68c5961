use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::Serialize;

use super::{layout_index, Population, Unit};
use crate::error::{Error, Result};
use crate::rng::DrawRng;

/// How an auxiliary count field is tied to the target point pattern.
///
/// Each target individual is also counted with probability `keep`; every target
/// cluster spawns `extra_per_cluster` (Poisson mean) auxiliary-only individuals
/// around the same centre; an independent background cluster process with
/// `background_clusters` parents and `background_points` children per parent is
/// added on top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxModel {
    pub keep: f64,
    pub extra_per_cluster: f64,
    pub background_clusters: f64,
    pub background_points: f64,
    pub background_dispersion: f64,
}

impl AuxModel {
    /// Auxiliary identical to the target count.
    pub fn copy_of_target() -> Self {
        Self {
            keep: 1.0,
            extra_per_cluster: 0.0,
            background_clusters: 0.0,
            background_points: 0.0,
            background_dispersion: 1.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(format!("{name}.{what}")));
        if !(0.0..=1.0).contains(&self.keep) {
            return bad("keep must lie in [0, 1]");
        }
        if !(self.extra_per_cluster >= 0.0 && self.extra_per_cluster.is_finite()) {
            return bad("extra_per_cluster must be finite and >= 0");
        }
        if !(self.background_clusters >= 0.0 && self.background_clusters.is_finite()) {
            return bad("background_clusters must be finite and >= 0");
        }
        if !(self.background_points >= 0.0 && self.background_points.is_finite()) {
            return bad("background_points must be finite and >= 0");
        }
        if !(self.background_dispersion > 0.0 && self.background_dispersion.is_finite()) {
            return bad("background_dispersion must be finite and > 0");
        }
        Ok(())
    }
}

/// Parameters of the Poisson cluster process that lays out a population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSpec {
    pub grid_side: usize,
    pub psus: usize,
    /// Poisson mean of the number of clusters.
    pub cluster_rate: f64,
    /// Poisson mean of individuals per cluster.
    pub points_per_cluster: f64,
    /// Mean of the exponential distance from an individual to its cluster centre.
    pub dispersion: f64,
    pub x: AuxModel,
    pub z: AuxModel,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_side == 0 || self.psus == 0 {
            return Err(Error::InvalidSpec("grid side and PSU count must be positive".into()));
        }
        if !(self.grid_side * self.grid_side).is_multiple_of(self.psus) {
            return Err(Error::InvalidSpec(format!(
                "{} cells cannot be split into {} equal PSUs",
                self.grid_side * self.grid_side,
                self.psus
            )));
        }
        for (name, v) in [
            ("cluster_rate", self.cluster_rate),
            ("points_per_cluster", self.points_per_cluster),
            ("dispersion", self.dispersion),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        self.x.validate("x")?;
        self.z.validate("z")
    }
}

struct Field {
    side: usize,
    counts: Vec<f64>,
}

impl Field {
    fn new(side: usize) -> Self {
        Self { side, counts: vec![0.0; side * side] }
    }

    /// Drops the point when it falls outside the square.
    fn add(&mut self, (px, py): (f64, f64)) {
        let side = self.side as f64;
        if !(0.0..side).contains(&px) || !(0.0..side).contains(&py) {
            return;
        }
        let (col, row) = (px as usize, py as usize);
        self.counts[row * self.side + col] += 1.0;
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

fn scatter(rng: &mut ChaCha8Rng, centre: (f64, f64), dispersion: f64) -> (f64, f64) {
    let r = Exp::new(1.0 / dispersion).expect("positive rate").sample(rng);
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    (centre.0 + r * theta.cos(), centre.1 + r * theta.sin())
}

fn uniform_centre(rng: &mut ChaCha8Rng, side: f64) -> (f64, f64) {
    (rng.random::<f64>() * side, rng.random::<f64>() * side)
}

struct Pattern {
    centres: Vec<(f64, f64)>,
    points: Vec<(f64, f64)>,
}

fn aux_field(spec: &PopulationSpec, model: &AuxModel, pattern: &Pattern, stream: u64) -> Vec<f64> {
    let mut rng = DrawRng::new(spec.seed, stream).rng();
    let side = spec.grid_side as f64;
    let mut field = Field::new(spec.grid_side);
    for &p in &pattern.points {
        if rng.random::<f64>() < model.keep {
            field.add(p);
        }
    }
    for &c in &pattern.centres {
        for _ in 0..poisson(&mut rng, model.extra_per_cluster) {
            field.add(scatter(&mut rng, c, spec.dispersion));
        }
    }
    for _ in 0..poisson(&mut rng, model.background_clusters) {
        let c = uniform_centre(&mut rng, side);
        for _ in 0..poisson(&mut rng, model.background_points) {
            field.add(scatter(&mut rng, c, model.background_dispersion));
        }
    }
    field.counts
}

/// Lays out a population from a Poisson cluster process. Deterministic in
/// `spec.seed`.
pub fn generate_population(spec: &PopulationSpec) -> Result<Population> {
    spec.validate()?;
    let side = spec.grid_side;
    let mut rng = DrawRng::new(spec.seed, 0).rng();
    let clusters = poisson(&mut rng, spec.cluster_rate);
    let mut pattern = Pattern { centres: Vec::with_capacity(clusters), points: Vec::new() };
    for _ in 0..clusters {
        let c = uniform_centre(&mut rng, side as f64);
        pattern.centres.push(c);
        for _ in 0..poisson(&mut rng, spec.points_per_cluster) {
            pattern.points.push(scatter(&mut rng, c, spec.dispersion));
        }
    }
    let mut y = Field::new(side);
    for &p in &pattern.points {
        y.add(p);
    }
    let x = aux_field(spec, &spec.x, &pattern, 1);
    let z = aux_field(spec, &spec.z, &pattern, 2);

    let per_psu = side * side / spec.psus;
    let mut psus = vec![vec![Unit::new(0.0, 0.0, 0.0); per_psu]; spec.psus];
    for row in 0..side {
        for col in 0..side {
            let cell = row * side + col;
            let (h, j) = layout_index(side, spec.psus, row, col);
            psus[h][j] = Unit::new(y.counts[cell], x[cell], z[cell]);
        }
    }
    Population::with_layout(psus, side, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Variable;

    pub(crate) fn spec(seed: u64) -> PopulationSpec {
        PopulationSpec {
            grid_side: 20,
            psus: 4,
            cluster_rate: 4.0,
            points_per_cluster: 15.0,
            dispersion: 0.8,
            x: AuxModel { keep: 0.8, extra_per_cluster: 10.0, ..AuxModel::copy_of_target() },
            z: AuxModel {
                keep: 0.5,
                extra_per_cluster: 0.0,
                background_clusters: 3.0,
                background_points: 20.0,
                background_dispersion: 1.0,
            },
            seed,
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_population(&spec(42)).unwrap();
        let b = generate_population(&spec(42)).unwrap();
        let bits = |p: &Population| -> Vec<u64> {
            p.units().flat_map(|u| [u.y.to_bits(), u.x.to_bits(), u.z.to_bits()]).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&generate_population(&spec(43)).unwrap()));
    }

    #[test]
    fn vanishing_cluster_rate_gives_empty_population() {
        let mut s = spec(1);
        s.cluster_rate = 1e-12;
        let pop = generate_population(&s).unwrap();
        assert!(pop.units().all(|u| u.y == 0.0 && !u.w));
    }

    #[test]
    fn shape_and_w_invariant() {
        let pop = generate_population(&spec(5)).unwrap();
        assert_eq!(pop.size(), 400);
        assert_eq!(pop.psu_sizes(), vec![100; 4]);
        assert!(pop.units().all(|u| u.w == (u.y > 0.0)));
        assert!(pop.units().all(|u| u.y.fract() == 0.0 && u.x.fract() == 0.0));
        assert!(pop.total(Variable::Y) > 0.0);
    }

    #[test]
    fn copied_auxiliary_matches_target() {
        let mut s = spec(9);
        s.x = AuxModel::copy_of_target();
        let pop = generate_population(&s).unwrap();
        assert!(pop.units().all(|u| u.x == u.y));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(1);
        s.dispersion = 0.0;
        assert!(generate_population(&s).is_err());
        let mut s = spec(1);
        s.psus = 3;
        assert!(generate_population(&s).is_err());
        let mut s = spec(1);
        s.cluster_rate = -2.0;
        assert!(generate_population(&s).is_err());
        let mut s = spec(1);
        s.x.keep = 1.5;
        assert!(generate_population(&s).is_err());
    }
}
