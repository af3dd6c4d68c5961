//! Exhaustive enumeration of every draw path of a design on a tiny population,
//! with its exact probability.

use itertools::Itertools;

use crate::designs::{
    AtsdSample, DesignParams, DoublePsuSample, Draw, Frame, PsuAdaptiveSample, SrsPsuSample, SrsSample,
    TwoStageDoubleSample, TwoStageSample,
};
use crate::error::{Error, Result};
use crate::numeric::{binomial, order_free_sum};
use crate::population::{Condition, Population};

/// Largest number of draw paths `enumerate_design` will materialise.
pub const ENUMERATION_LIMIT: f64 = 1.0e7;

/// Every draw of `params` on `pop` with its probability.
pub fn enumerate_design(pop: &Population, params: &DesignParams) -> Result<Vec<(Draw, f64)>> {
    let estimate = path_bound(pop, params);
    if estimate > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { estimate, limit: ENUMERATION_LIMIT });
    }
    let big_m = pop.psu_count();
    match params {
        DesignParams::Srs { n } => {
            let flat: Vec<_> = pop.units().copied().collect();
            if *n == 0 || *n > flat.len() {
                return Err(Error::InvalidDesign(format!("SRSWOR size {n} outside 1..={}", flat.len())));
            }
            let p = 1.0 / binomial(flat.len(), *n);
            Ok((0..flat.len())
                .combinations(*n)
                .map(|idx| {
                    let units = idx.into_iter().map(|i| (i, flat[i])).collect();
                    (Draw::Srs(SrsSample { population_size: flat.len(), units }), p)
                })
                .collect())
        }
        DesignParams::TwoStage { m, sizes } => {
            check(pop, *m, sizes)?;
            staged(big_m, *m, |slot, h| {
                let nh = pop.psu_size(h);
                let p = 1.0 / binomial(nh, sizes[slot]);
                Ok((0..nh)
                    .combinations(sizes[slot])
                    .map(|idx| {
                        let units = idx.into_iter().map(|j| (j, *pop.unit(h, j))).collect();
                        (SrsPsuSample { psu: h, psu_size: nh, units }, p)
                    })
                    .collect())
            })
            .map(|paths| {
                wrap(paths, |psus| {
                    Draw::TwoStage(TwoStageSample { total_psus: big_m, population_size: pop.size(), psus })
                })
            })
        }
        DesignParams::TwoStageDouble { m, n1h, phase2 } => {
            check(pop, *m, &vec![*n1h; *m])?;
            if phase2.len() != *m || phase2.iter().any(|&k| k == 0 || k > *n1h) {
                return Err(Error::InvalidDesign(format!("phase-two sizes {phase2:?} must lie in 1..={n1h}")));
            }
            staged(big_m, *m, |slot, h| {
                let nh = pop.psu_size(h);
                let p = 1.0 / (binomial(nh, *n1h) * binomial(*n1h, phase2[slot]));
                let mut out = Vec::new();
                for idx in (0..nh).combinations(*n1h) {
                    let phase1: Vec<_> = idx.iter().map(|&j| (j, *pop.unit(h, j))).collect();
                    for sub in (0..*n1h).combinations(phase2[slot]) {
                        out.push((DoublePsuSample { psu: h, psu_size: nh, phase1: phase1.clone(), phase2: sub }, p));
                    }
                }
                Ok(out)
            })
            .map(|paths| {
                wrap(paths, |psus| {
                    Draw::TwoStageDouble(TwoStageDoubleSample { total_psus: big_m, population_size: pop.size(), psus })
                })
            })
        }
        DesignParams::Ats(a) => {
            a.validate(pop)?;
            staged(big_m, a.m, |slot, h| {
                Ok(sequential_paths(Frame::whole_psu(pop, h), a.n1[slot], a.d1, a.condition, 1.0))
            })
            .map(|paths| adaptive(pop, paths, false))
        }
        DesignParams::Atsd(a) => {
            a.validate(pop)?;
            staged(big_m, a.m, |_, h| {
                let nh = pop.psu_size(h);
                let p1 = 1.0 / binomial(nh, a.n1h);
                Ok((0..nh)
                    .combinations(a.n1h)
                    .flat_map(|idx| sequential_paths(Frame::subset(pop, h, &idx), a.n2h1, a.d, a.condition, p1))
                    .collect())
            })
            .map(|paths| adaptive(pop, paths, true))
        }
    }
}

fn check(pop: &Population, m: usize, sizes: &[usize]) -> Result<()> {
    if m == 0 || m > pop.psu_count() {
        return Err(Error::InvalidDesign(format!("m = {m} must lie in 1..={}", pop.psu_count())));
    }
    let cap = pop.psu_sizes().into_iter().min().unwrap_or(0);
    if sizes.len() != m || sizes.iter().any(|&n| n == 0 || n > cap) {
        return Err(Error::InvalidDesign(format!("slot sizes {sizes:?} must be {m} values in 1..={cap}")));
    }
    Ok(())
}

/// Paths of the sequential phase inside one frame, each weighted by `weight`.
fn sequential_paths(
    frame: Frame,
    n_init: usize,
    d: usize,
    condition: Condition,
    weight: f64,
) -> Vec<(PsuAdaptiveSample, f64)> {
    let size = frame.len();
    let p_init = weight / binomial(size, n_init);
    let mut out = Vec::new();
    for initial in (0..size).combinations(n_init) {
        let l = initial.iter().filter(|&&i| condition.is_met(&frame.units[i].1)).count();
        let rest: Vec<usize> = (0..size).filter(|i| !initial.contains(i)).collect();
        let extra = (d * l).min(rest.len());
        let p = p_init / binomial(rest.len(), extra);
        for pick in rest.iter().copied().combinations(extra) {
            out.push((PsuAdaptiveSample::from_selection(frame.clone(), initial.clone(), pick, d, condition), p));
        }
    }
    out
}

/// Combines per-PSU paths over every first-stage selection; PSUs fill slots in
/// increasing label order.
fn staged<T: Clone>(
    big_m: usize,
    m: usize,
    per_psu: impl Fn(usize, usize) -> Result<Vec<(T, f64)>>,
) -> Result<Vec<(Vec<T>, f64)>> {
    let p_stage = 1.0 / binomial(big_m, m);
    let mut out = Vec::new();
    for selected in (0..big_m).combinations(m) {
        let lists = selected.iter().enumerate().map(|(slot, &h)| per_psu(slot, h)).collect::<Result<Vec<_>>>()?;
        for combo in lists.into_iter().multi_cartesian_product() {
            let p = combo.iter().fold(p_stage, |acc, (_, q)| acc * q);
            out.push((combo.into_iter().map(|(t, _)| t).collect(), p));
        }
    }
    Ok(out)
}

fn wrap<T>(paths: Vec<(Vec<T>, f64)>, build: impl Fn(Vec<T>) -> Draw) -> Vec<(Draw, f64)> {
    paths.into_iter().map(|(psus, p)| (build(psus), p)).collect()
}

fn adaptive(pop: &Population, paths: Vec<(Vec<PsuAdaptiveSample>, f64)>, phase_one: bool) -> Vec<(Draw, f64)> {
    wrap(paths, |psus| {
        Draw::Adaptive(AtsdSample { total_psus: pop.psu_count(), population_size: pop.size(), phase_one, psus })
    })
}

/// Upper bound on the number of paths, used by the size guard.
fn path_bound(pop: &Population, params: &DesignParams) -> f64 {
    let big_m = pop.psu_count();
    let biggest = pop.psu_sizes().into_iter().max().unwrap_or(0);
    let sequential = |size: usize, n: usize, d: usize| {
        let rest = size.saturating_sub(n);
        let widest = (0..=(d * n).min(rest)).map(|k| binomial(rest, k)).fold(1.0, f64::max);
        binomial(size, n) * widest
    };
    let per_psu = match params {
        DesignParams::Srs { n } => return binomial(pop.size(), *n),
        DesignParams::TwoStage { sizes, .. } => sizes.iter().map(|&n| binomial(biggest, n)).fold(1.0, f64::max),
        DesignParams::TwoStageDouble { n1h, phase2, .. } => {
            binomial(biggest, *n1h) * phase2.iter().map(|&k| binomial(*n1h, k)).fold(1.0, f64::max)
        }
        DesignParams::Ats(a) => a.n1.iter().map(|&n| sequential(biggest, n, a.d1)).fold(1.0, f64::max),
        DesignParams::Atsd(a) => binomial(biggest, a.n1h) * sequential(a.n1h, a.n2h1, a.d),
    };
    let m = match params {
        DesignParams::Srs { .. } => 1,
        DesignParams::TwoStage { m, .. } | DesignParams::TwoStageDouble { m, .. } => *m,
        DesignParams::Ats(a) => a.m,
        DesignParams::Atsd(a) => a.m,
    };
    binomial(big_m, m) * per_psu.powi(m as i32)
}

/// Exact expectation and variance of a statistic over enumerated paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    pub total_probability: f64,
}

pub fn exact_moments(paths: &[(Draw, f64)], stat: impl Fn(&Draw) -> Result<f64>) -> Result<ExactMoments> {
    let values = paths.iter().map(|(d, p)| Ok((stat(d)?, *p))).collect::<Result<Vec<_>>>()?;
    Ok(weighted_moments(&values))
}

/// Exact expectation of a per-frame statistic over every sequential path in
/// one fixed frame.
pub fn frame_expectation(
    frame: &Frame,
    n_init: usize,
    d: usize,
    condition: Condition,
    stat: impl Fn(&PsuAdaptiveSample) -> Result<f64>,
) -> Result<ExactMoments> {
    let paths = sequential_paths(frame.clone(), n_init, d, condition, 1.0);
    let values = paths.iter().map(|(s, p)| Ok((stat(s)?, *p))).collect::<Result<Vec<_>>>()?;
    Ok(weighted_moments(&values))
}

fn weighted_moments(values: &[(f64, f64)]) -> ExactMoments {
    let mut probs: Vec<f64> = values.iter().map(|(_, p)| *p).collect();
    let mut first: Vec<f64> = values.iter().map(|(v, p)| v * p).collect();
    let total_probability = order_free_sum(&mut probs);
    let mean = order_free_sum(&mut first);
    let mut second: Vec<f64> = values.iter().map(|(v, p)| (v - mean).powi(2) * p).collect();
    ExactMoments { mean, variance: order_free_sum(&mut second), total_probability }
}
