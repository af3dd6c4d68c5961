//! Design-exact quantities for ATSD: population slopes, the three-part
//! variance of the regression estimator and the moment identities used to
//! check the variance estimators.

use itertools::Itertools;
use serde::Serialize;

use super::murthy::phase_two_covariance;
use super::Degeneracy;
use crate::designs::{srswor, AtsdParams, Frame};
use crate::error::{Error, Result};
use crate::numeric::{binomial, compensated_sum, sample_cov};
use crate::population::{Population, Unit, Variable};
use crate::rng::DrawRng;

/// Finite-population least-squares slope of `target` on `aux`.
pub fn beta_pop(pop: &Population, target: Variable, aux: Variable) -> Result<f64> {
    let n = pop.size() as f64;
    let (ybar, xbar) = (pop.mean(target), pop.mean(aux));
    let num = compensated_sum(pop.units().map(|u| u.value(target) * u.value(aux))) - n * xbar * ybar;
    let den = compensated_sum(pop.units().map(|u| u.value(aux).powi(2))) - n * xbar * xbar;
    if den.abs() <= Degeneracy::for_population(pop, aux).slope_denominator() {
        return Err(Error::Degenerate(format!("{aux} has no spread in the population")));
    }
    Ok(num / den)
}

/// How the expectation over phase-one samples is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    /// Every phase-one subset of every PSU.
    Enumerate,
    /// `outer` random phase-one subsets per PSU, with the phase-two
    /// covariance exact for each.
    MonteCarlo { outer: usize, seed: u64 },
}

impl MomentMethod {
    /// Subset count above which `auto` switches to Monte Carlo.
    pub const ENUMERATION_LIMIT: f64 = 2.0e5;

    pub fn auto(pop: &Population, n1h: usize, outer: usize, seed: u64) -> Self {
        let worst = pop.psu_sizes().into_iter().map(|nh| binomial(nh, n1h)).fold(0.0, f64::max);
        if worst <= Self::ENUMERATION_LIMIT {
            MomentMethod::Enumerate
        } else {
            MomentMethod::MonteCarlo { outer, seed }
        }
    }
}

/// E₂ of the phase-two (co)variances per PSU, indexed `[target, aux]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTwoMoments {
    pub method: MomentMethod,
    pub per_psu: Vec<[[f64; 2]; 2]>,
    /// Monte Carlo standard errors; zero when enumerated.
    pub standard_error: Vec<[[f64; 2]; 2]>,
}

impl PhaseTwoMoments {
    pub fn v3_target(&self, h: usize) -> f64 {
        self.per_psu[h][0][0]
    }

    pub fn v3_aux(&self, h: usize) -> f64 {
        self.per_psu[h][1][1]
    }

    pub fn c3_cross(&self, h: usize) -> f64 {
        self.per_psu[h][0][1]
    }
}

fn frame_moments(frame: &Frame, params: &AtsdParams, vars: [Variable; 2]) -> Result<[[f64; 2]; 2]> {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in i..2 {
            let c = phase_two_covariance(
                frame,
                params.n2h1,
                params.d,
                params.condition,
                |u: &Unit| u.value(vars[i]),
                |u: &Unit| u.value(vars[j]),
            )?;
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    Ok(out)
}

pub fn phase_two_moments(
    pop: &Population,
    params: &AtsdParams,
    target: Variable,
    aux: Variable,
    method: MomentMethod,
) -> Result<PhaseTwoMoments> {
    params.validate(pop)?;
    let vars = [target, aux];
    let mut per_psu = Vec::with_capacity(pop.psu_count());
    let mut standard_error = Vec::with_capacity(pop.psu_count());
    for h in 0..pop.psu_count() {
        let nh = pop.psu_size(h);
        let samples: Vec<[[f64; 2]; 2]> = match method {
            MomentMethod::Enumerate => (0..nh)
                .combinations(params.n1h)
                .map(|subset| frame_moments(&Frame::subset(pop, h, &subset), params, vars))
                .collect::<Result<_>>()?,
            MomentMethod::MonteCarlo { outer, seed } => {
                if outer < 2 {
                    return Err(Error::Config("Monte Carlo moments need at least two outer draws".into()));
                }
                let mut rng = DrawRng::new(seed, h as u64).rng();
                (0..outer)
                    .map(|_| {
                        let subset = srswor(nh, params.n1h, &mut rng)?;
                        frame_moments(&Frame::subset(pop, h, &subset), params, vars)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let k = samples.len() as f64;
        let mut mean = [[0.0; 2]; 2];
        let mut se = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let vals: Vec<f64> = samples.iter().map(|s| s[i][j]).collect();
                mean[i][j] = compensated_sum(vals.iter().copied()) / k;
                if matches!(method, MomentMethod::MonteCarlo { .. }) {
                    se[i][j] = (sample_cov(&vals, &vals) / k).sqrt();
                }
            }
        }
        per_psu.push(mean);
        standard_error.push(se);
    }
    Ok(PhaseTwoMoments { method, per_psu, standard_error })
}

/// The three parts of a design (co)variance, already divided by N².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceParts {
    /// Between PSUs, V₁E₂E₃.
    pub part1: f64,
    /// Phase one within PSUs, E₁V₂E₃.
    pub part2: f64,
    /// Phase two, E₁E₂V₃.
    pub part3: f64,
}

impl VarianceParts {
    pub fn total(&self) -> f64 {
        self.part1 + self.part2 + self.part3
    }
}

fn psu_values(pop: &Population, h: usize, var: Variable) -> Vec<f64> {
    pop.psu(h).iter().map(|u| u.value(var)).collect()
}

/// Parts one and two of cov(f̄, ḡ) for expanded phase-one means.
fn outer_parts(pop: &Population, params: &AtsdParams, f: Variable, g: Variable) -> (f64, f64) {
    let big_m = pop.psu_count() as f64;
    let m = params.m as f64;
    let n = pop.size() as f64;
    let tf: Vec<f64> = (0..pop.psu_count()).map(|h| pop.psu_total(h, f)).collect();
    let tg: Vec<f64> = (0..pop.psu_count()).map(|h| pop.psu_total(h, g)).collect();
    let part1 =
        if params.m == pop.psu_count() { 0.0 } else { big_m * big_m * (1.0 - m / big_m) * sample_cov(&tf, &tg) / m };
    let n1 = params.n1h as f64;
    let within = (0..pop.psu_count()).map(|h| {
        let nh = pop.psu_size(h) as f64;
        if params.n1h == pop.psu_size(h) {
            return 0.0;
        }
        nh * nh * (1.0 - n1 / nh) * sample_cov(&psu_values(pop, h, f), &psu_values(pop, h, g)) / n1
    });
    let part2 = big_m / m * compensated_sum(within);
    (part1 / (n * n), part2 / (n * n))
}

fn phase_two_part(pop: &Population, params: &AtsdParams, per_psu: impl Fn(usize) -> f64) -> f64 {
    let (big_m, m, n) = (pop.psu_count() as f64, params.m as f64, pop.size() as f64);
    let n1 = params.n1h as f64;
    let terms = (0..pop.psu_count()).map(|h| (pop.psu_size(h) as f64 / n1).powi(2) * per_psu(h));
    big_m / m * compensated_sum(terms) / (n * n)
}

/// Exact variance of μ̂_reg = ȳ_{n2} + β(x̄_{n1} - x̄_{n2}) for a fixed β.
pub fn var_mu_reg_exact(
    pop: &Population,
    params: &AtsdParams,
    target: Variable,
    beta: f64,
    moments: &PhaseTwoMoments,
) -> VarianceParts {
    let (part1, part2) = outer_parts(pop, params, target, target);
    let part3 = phase_two_part(pop, params, |h| {
        moments.v3_target(h) + beta * beta * moments.v3_aux(h) - 2.0 * beta * moments.c3_cross(h)
    });
    VarianceParts { part1, part2, part3 }
}

/// Exact cov(f̄_{n2}, ḡ_{n2}) where f and g are the target and/or auxiliary
/// the moments were computed for (`true` selects the auxiliary).
pub fn mean_covariance(
    pop: &Population,
    params: &AtsdParams,
    vars: [Variable; 2],
    aux_roles: [bool; 2],
    moments: &PhaseTwoMoments,
) -> VarianceParts {
    let (part1, part2) = outer_parts(pop, params, vars[0], vars[1]);
    let (i, j) = (usize::from(aux_roles[0]), usize::from(aux_roles[1]));
    let part3 = phase_two_part(pop, params, |h| moments.per_psu[h][i][j]);
    VarianceParts { part1, part2, part3 }
}

/// β_o = cov(ȳ_{n2}, x̄_{n2}) / var(x̄_{n2}) under the design.
pub fn beta_opt_pop(
    pop: &Population,
    params: &AtsdParams,
    target: Variable,
    aux: Variable,
    moments: &PhaseTwoMoments,
) -> Result<f64> {
    let cov = mean_covariance(pop, params, [target, aux], [false, true], moments).total();
    let var = mean_covariance(pop, params, [aux, aux], [true, true], moments).total();
    if var.is_nan() || var <= Degeneracy::for_population(pop, aux).mean_variance() {
        return Err(Error::Degenerate(format!("var of the {aux} mean is zero under the design")));
    }
    Ok(cov / var)
}

/// E(Ŝ²_{v_{N_h}}) per PSU: S²_{v_{N_h}} - E₂V₃(t̂_v) / (n_{1h}(n_{1h} - 1)),
/// with `e2v3[h]` the phase-two variance of t̂_v averaged over phase one.
pub fn within_variance_expectation(pop: &Population, var: Variable, n1h: usize, e2v3: &[f64]) -> Vec<f64> {
    let n1 = n1h as f64;
    (0..pop.psu_count())
        .map(|h| {
            let v = psu_values(pop, h, var);
            sample_cov(&v, &v) - e2v3[h] / (n1 * (n1 - 1.0))
        })
        .collect()
}

/// E(Ŝ²_{ty_N}) = S²_{ty_N} + (1/M) Σ_h [N_h²(1 - n_{1h}/N_h) S²_{y_{N_h}} / n_{1h} + a_h² E₂V₃(t̂_y)].
pub fn between_psu_term_expectation(
    pop: &Population,
    params: &AtsdParams,
    target: Variable,
    moments: &PhaseTwoMoments,
) -> f64 {
    let totals: Vec<f64> = (0..pop.psu_count()).map(|h| pop.psu_total(h, target)).collect();
    let n1 = params.n1h as f64;
    let noise = (0..pop.psu_count()).map(|h| {
        let nh = pop.psu_size(h) as f64;
        let v = psu_values(pop, h, target);
        let phase_one =
            if params.n1h == pop.psu_size(h) { 0.0 } else { nh * nh * (1.0 - n1 / nh) * sample_cov(&v, &v) / n1 };
        phase_one + (nh / n1).powi(2) * moments.v3_target(h)
    });
    sample_cov(&totals, &totals) + compensated_sum(noise) / pop.psu_count() as f64
}
