//! Within-frame Murthy estimation for the sequential phase.
//!
//! With `F` frame units, an initial SRSWOR of `n` units of which `l` meet the
//! condition, and a final sample split into the condition group `c` and its
//! complement `c'`, the Murthy total is
//! `F * [p * mean_c + (1 - p) * mean_c']` with `p = l / n`.

use crate::designs::{Frame, PsuAdaptiveSample};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, hypergeometric_pmf, hypergeometric_support};
use crate::population::{Condition, Unit};

/// Sample means of `f` and `g` and their sample covariance inside one group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupMoments {
    pub count: usize,
    pub mean_f: f64,
    pub mean_g: f64,
    /// Divisor `count - 1`; zero for groups of fewer than two units.
    pub cov_fg: f64,
}

impl GroupMoments {
    pub fn of<'a>(
        units: impl Iterator<Item = &'a Unit> + Clone,
        f: impl Fn(&Unit) -> f64,
        g: impl Fn(&Unit) -> f64,
    ) -> Self {
        let count = units.clone().count();
        if count == 0 {
            return Self::default();
        }
        let mean_f = compensated_sum(units.clone().map(&f)) / count as f64;
        let mean_g = compensated_sum(units.clone().map(&g)) / count as f64;
        let cov_fg = if count < 2 {
            0.0
        } else {
            compensated_sum(units.map(|u| (f(u) - mean_f) * (g(u) - mean_g))) / (count - 1) as f64
        };
        Self { count, mean_f, mean_g, cov_fg }
    }
}

fn split(
    sample: &PsuAdaptiveSample,
    f: impl Fn(&Unit) -> f64,
    g: impl Fn(&Unit) -> f64,
) -> (GroupMoments, GroupMoments) {
    let cond = sample.condition;
    let met = sample.final_units().filter(move |u| cond.is_met(u));
    let unmet = sample.final_units().filter(move |u| !cond.is_met(u));
    (GroupMoments::of(met, &f, &g), GroupMoments::of(unmet, &f, &g))
}

/// Murthy estimate of the frame total of `f`.
pub fn murthy_total(sample: &PsuAdaptiveSample, f: impl Fn(&Unit) -> f64) -> Result<f64> {
    let n = sample.n_initial();
    if n == 0 {
        return Err(Error::InvalidDesign("empty initial sample".into()));
    }
    let (c, cp) = split(sample, &f, &f);
    let l = sample.l_initial as f64;
    let frame = sample.frame_size() as f64;
    // Empty groups only occur with zero weight.
    let met = if sample.l_initial > 0 { l * c.mean_f } else { 0.0 };
    let unmet = if sample.l_initial < n { (n as f64 - l) * cp.mean_f } else { 0.0 };
    Ok(frame / n as f64 * (met + unmet))
}

/// Unbiased estimator of the phase-two covariance of the Murthy totals of `f`
/// and `g`. Requires at least two initial units.
pub fn c3_hat(sample: &PsuAdaptiveSample, f: impl Fn(&Unit) -> f64, g: impl Fn(&Unit) -> f64) -> Result<f64> {
    let n = sample.n_initial();
    let big_f = sample.frame_size();
    if n == big_f {
        // Phase two took the whole frame: no phase-two randomness left.
        return Ok(0.0);
    }
    if n < 2 {
        return Err(Error::UndefinedVariance(format!("initial sample of {n} unit(s)")));
    }
    let (c, cp) = split(sample, &f, &g);
    let (nf, ff) = (n as f64, big_f as f64);
    let (l, l2) = (sample.l_initial as f64, sample.l_total as f64);
    let rest2 = (sample.n_final() - sample.l_total) as f64;
    let p = l / nf;
    let q = (ff - nf) / (nf - 1.0);

    let met = if sample.l_total > 0 {
        p * ((ff - 1.0) * (l - 1.0) / (nf - 1.0) + (l2 - 1.0) / l2 * ((1.0 - p) * q - ff * p)) * c.cov_fg
    } else {
        0.0
    };
    let between = if c.count > 0 && cp.count > 0 {
        p * (1.0 - p) * q * (c.mean_f - cp.mean_f) * (c.mean_g - cp.mean_g)
    } else {
        0.0
    };
    let unmet = if rest2 > 0.0 {
        (1.0 - p)
            * ((ff - 1.0) * (nf - l - 1.0) / (nf - 1.0) + (rest2 - 1.0) / rest2 * (p * q - ff * (1.0 - p)))
            * cp.cov_fg
    } else {
        0.0
    };
    Ok(ff * (met + between + unmet))
}

pub fn v3_hat(sample: &PsuAdaptiveSample, f: impl Fn(&Unit) -> f64) -> Result<f64> {
    c3_hat(sample, &f, &f)
}

/// Exact phase-two covariance of the Murthy totals of `f` and `g` for a fixed
/// frame, from the hypergeometric laws of the initial and added condition
/// counts. Given both counts, each condition group of the final sample is an
/// SRSWOR from its frame group.
pub fn phase_two_covariance(
    frame: &Frame,
    n_init: usize,
    d: usize,
    condition: Condition,
    f: impl Fn(&Unit) -> f64,
    g: impl Fn(&Unit) -> f64,
) -> Result<f64> {
    let big_f = frame.len();
    if n_init == 0 || n_init > big_f {
        return Err(Error::InvalidDesign(format!("initial size {n_init} outside 1..={big_f}")));
    }
    if n_init == big_f {
        return Ok(0.0);
    }
    let met = frame.units.iter().map(|(_, u)| u).filter(|u| condition.is_met(u));
    let unmet = frame.units.iter().map(|(_, u)| u).filter(|u| !condition.is_met(u));
    let c = GroupMoments::of(met, &f, &g);
    let cp = GroupMoments::of(unmet, &f, &g);
    let (big_l, n) = (c.count, n_init);
    let (ff, nf, lf) = (big_f as f64, n as f64, big_l as f64);

    let share = lf / ff;
    let var_l = nf * share * (1.0 - share) * (ff - nf) / (ff - 1.0);
    let between = ff * ff / (nf * nf) * var_l * (c.mean_f - cp.mean_f) * (c.mean_g - cp.mean_g);

    let mut within = Vec::new();
    for l in hypergeometric_support(big_f, big_l, n) {
        let p_l = hypergeometric_pmf(big_f, big_l, n, l);
        let extra = (d * l).min(big_f - n);
        for kc in hypergeometric_support(big_f - n, big_l - l, extra) {
            let p_k = hypergeometric_pmf(big_f - n, big_l - l, extra, kc);
            let l2 = (l + kc) as f64;
            let rest2 = ((n - l) + (extra - kc)) as f64;
            let mut v = 0.0;
            if l > 0 {
                v += (l as f64 / nf).powi(2) * (1.0 / l2 - 1.0 / lf) * c.cov_fg;
            }
            if l < n {
                v += ((n - l) as f64 / nf).powi(2) * (1.0 / rest2 - 1.0 / (ff - lf)) * cp.cov_fg;
            }
            within.push(p_l * p_k * ff * ff * v);
        }
    }
    Ok(between + compensated_sum(within))
}

/// Every Murthy-type quantity of one PSU for a target/auxiliary pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MurthyPsuEstimates {
    pub t_hat_y: f64,
    pub t_hat_x: f64,
    pub t_hat_x2: f64,
    pub t_hat_y2: f64,
    pub t_hat_xy: f64,
    /// `None` when fewer than two initial units were drawn.
    pub v3_hat_y: Option<f64>,
    pub v3_hat_x: Option<f64>,
    pub c3_hat_xy: Option<f64>,
    pub p_2h1: f64,
    pub met: GroupMoments,
    pub unmet: GroupMoments,
}

impl MurthyPsuEstimates {
    pub fn compute(
        sample: &PsuAdaptiveSample,
        target: impl Fn(&Unit) -> f64 + Copy,
        aux: impl Fn(&Unit) -> f64 + Copy,
    ) -> Result<Self> {
        let (met, unmet) = split(sample, aux, target);
        Ok(Self {
            t_hat_y: murthy_total(sample, target)?,
            t_hat_x: murthy_total(sample, aux)?,
            t_hat_x2: murthy_total(sample, |u| aux(u) * aux(u))?,
            t_hat_y2: murthy_total(sample, |u| target(u) * target(u))?,
            t_hat_xy: murthy_total(sample, |u| aux(u) * target(u))?,
            v3_hat_y: v3_hat(sample, target).ok(),
            v3_hat_x: v3_hat(sample, aux).ok(),
            c3_hat_xy: c3_hat(sample, target, aux).ok(),
            p_2h1: sample.l_initial as f64 / sample.n_initial() as f64,
            met,
            unmet,
        })
    }
}
