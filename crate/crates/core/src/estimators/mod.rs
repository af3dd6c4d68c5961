//! Estimators of the population mean and their variance estimators.

mod atsd;
mod classical;
mod exact;
mod murthy;

pub use atsd::{AtsdSummary, PsuSummary};
pub use classical::{regs, srs_mean, two_stage_mean};
pub use exact::{
    beta_opt_pop, beta_pop, between_psu_term_expectation, mean_covariance, phase_two_moments, var_mu_reg_exact,
    within_variance_expectation, MomentMethod, PhaseTwoMoments, VarianceParts,
};
pub use murthy::{c3_hat, murthy_total, phase_two_covariance, v3_hat, GroupMoments, MurthyPsuEstimates};

use serde::Serialize;

use crate::population::{Population, Variable};

/// Which slope a regression-type estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    /// Finite-population least-squares slope.
    Beta1Pop,
    /// Design-optimal slope cov/var of the expanded means.
    BetaOptPop,
    Beta1Hat,
    BetaOptHat,
    Fixed,
    /// Per-PSU ordinary least squares on the phase-two sample (reported as the
    /// average slope).
    WithinPsuOls,
}

impl CoefficientKind {
    pub fn label(self) -> &'static str {
        match self {
            CoefficientKind::Beta1Pop => "beta1",
            CoefficientKind::BetaOptPop => "beta_o",
            CoefficientKind::Beta1Hat => "beta1_hat",
            CoefficientKind::BetaOptHat => "beta_o_hat",
            CoefficientKind::Fixed => "fixed",
            CoefficientKind::WithinPsuOls => "ols",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionCoefficient {
    pub kind: CoefficientKind,
    pub value: f64,
    /// The slope could not be computed; estimators fall back to ȳ_{n2}.
    pub degenerate: bool,
}

impl RegressionCoefficient {
    pub fn fixed(value: f64) -> Self {
        Self { kind: CoefficientKind::Fixed, value, degenerate: false }
    }

    pub fn known(kind: CoefficientKind, value: f64) -> Self {
        Self { kind, value, degenerate: false }
    }

    pub fn degenerate(kind: CoefficientKind) -> Self {
        Self { kind, value: f64::NAN, degenerate: true }
    }
}

/// One estimator evaluated on one draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub coefficient: Option<RegressionCoefficient>,
    pub var_hat: Option<f64>,
    pub fallback_used: bool,
    /// `(ȳ_{n2}, x̄_{n2}, x̄_{n1})` for the regression estimators.
    pub components: Option<(f64, f64, f64)>,
}

impl EstimatorReport {
    pub fn plain(estimate: f64, var_hat: Option<f64>) -> Self {
        Self { estimate, coefficient: None, var_hat, fallback_used: false, components: None }
    }
}

/// Scale-aware zero tests for slope estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Degeneracy {
    /// Root mean square of the auxiliary over the population.
    pub scale: f64,
    pub population_size: usize,
}

impl Degeneracy {
    pub fn for_population(pop: &Population, aux: Variable) -> Self {
        let n = pop.size();
        let ms = crate::numeric::compensated_sum(pop.units().map(|u| u.value(aux).powi(2))) / n as f64;
        Self { scale: ms.sqrt(), population_size: n }
    }

    /// Threshold on `t̂_{x²} - N x̄²`.
    pub fn slope_denominator(&self) -> f64 {
        1e-9 * self.population_size as f64 * self.scale * self.scale
    }

    /// Threshold on an estimated variance of a mean.
    pub fn mean_variance(&self) -> f64 {
        1e-9 * self.scale * self.scale / self.population_size as f64
    }

    /// Threshold on a within-sample sum of squares over `n` units.
    pub fn sum_of_squares(&self, n: usize) -> f64 {
        1e-9 * n as f64 * self.scale * self.scale
    }
}
