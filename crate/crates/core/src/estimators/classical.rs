use super::{CoefficientKind, Degeneracy, EstimatorReport, RegressionCoefficient};
use crate::designs::{SrsSample, TwoStageDoubleSample, TwoStageSample};
use crate::numeric::{compensated_sum, mean, sample_cov};
use crate::population::Variable;

/// Sample mean under SRSWOR with its usual unbiased variance estimator.
pub fn srs_mean(sample: &SrsSample, target: Variable) -> EstimatorReport {
    let v: Vec<f64> = sample.units.iter().map(|(_, u)| u.value(target)).collect();
    let (n, big_n) = (v.len() as f64, sample.population_size as f64);
    let var_hat = (v.len() >= 2).then(|| (1.0 - n / big_n) * sample_cov(&v, &v) / n);
    EstimatorReport::plain(mean(&v), var_hat)
}

/// Expansion estimator of the mean under two-stage SRSWOR.
pub fn two_stage_mean(sample: &TwoStageSample, target: Variable) -> EstimatorReport {
    let big_m = sample.total_psus as f64;
    let m = sample.psus.len() as f64;
    let big_n = sample.population_size as f64;
    let mut totals = Vec::with_capacity(sample.psus.len());
    let mut within = Vec::with_capacity(sample.psus.len());
    let mut defined = sample.psus.len() >= 2 || sample.psus.len() == sample.total_psus;
    for p in &sample.psus {
        let v: Vec<f64> = p.units.iter().map(|(_, u)| u.value(target)).collect();
        let (nh, n) = (p.psu_size as f64, v.len() as f64);
        totals.push(nh * mean(&v));
        if v.len() == p.psu_size {
            within.push(0.0);
        } else if v.len() >= 2 {
            within.push(nh * nh * (1.0 - n / nh) * sample_cov(&v, &v) / n);
        } else {
            defined = false;
        }
    }
    let estimate = big_m / m * compensated_sum(totals.iter().copied()) / big_n;
    let var_hat = defined.then(|| {
        let between = if sample.psus.len() == sample.total_psus {
            0.0
        } else {
            big_m * big_m * (1.0 - m / big_m) * sample_cov(&totals, &totals) / m
        };
        (between + big_m / m * compensated_sum(within)) / (big_n * big_n)
    });
    EstimatorReport::plain(estimate, var_hat)
}

/// Two-stage double-sampling regression estimator. Each selected PSU gets its
/// own least-squares slope from its phase-two units; a PSU whose phase-two
/// auxiliary has no spread uses slope 0. The reported coefficient is the mean
/// slope, and `fallback_used` is set only when every PSU fell back.
pub fn regs(sample: &TwoStageDoubleSample, target: Variable, aux: Variable, tol: &Degeneracy) -> EstimatorReport {
    let big_m = sample.total_psus as f64;
    let m = sample.psus.len() as f64;
    let big_n = sample.population_size as f64;
    let mut reg_totals = Vec::new();
    let mut y_totals = Vec::new();
    let mut x2_totals = Vec::new();
    let mut x1_totals = Vec::new();
    let mut slopes = Vec::new();
    let mut fallbacks = 0;
    for p in &sample.psus {
        let ys: Vec<f64> = p.phase2.iter().map(|&i| p.phase1[i].1.value(target)).collect();
        let xs: Vec<f64> = p.phase2.iter().map(|&i| p.phase1[i].1.value(aux)).collect();
        let x1: Vec<f64> = p.phase1.iter().map(|(_, u)| u.value(aux)).collect();
        let (ybar, xbar2, xbar1) = (mean(&ys), mean(&xs), mean(&x1));
        let sxx = sample_cov(&xs, &xs);
        let b = if xs.len() >= 2 && sxx * (xs.len() - 1) as f64 > tol.sum_of_squares(xs.len()) {
            sample_cov(&xs, &ys) / sxx
        } else {
            fallbacks += 1;
            0.0
        };
        let nh = p.psu_size as f64;
        slopes.push(b);
        reg_totals.push(nh * (ybar + b * (xbar1 - xbar2)));
        y_totals.push(nh * ybar);
        x2_totals.push(nh * xbar2);
        x1_totals.push(nh * xbar1);
    }
    let expand = |t: &[f64]| big_m / m * compensated_sum(t.iter().copied()) / big_n;
    let all_fell_back = fallbacks == sample.psus.len();
    let coefficient = if all_fell_back {
        RegressionCoefficient::degenerate(CoefficientKind::WithinPsuOls)
    } else {
        RegressionCoefficient::known(CoefficientKind::WithinPsuOls, mean(&slopes))
    };
    EstimatorReport {
        estimate: if all_fell_back { expand(&y_totals) } else { expand(&reg_totals) },
        coefficient: Some(coefficient),
        var_hat: None,
        fallback_used: all_fell_back,
        components: Some((expand(&y_totals), expand(&x2_totals), expand(&x1_totals))),
    }
}
