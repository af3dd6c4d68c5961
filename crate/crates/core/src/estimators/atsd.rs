use super::murthy::{c3_hat, murthy_total};
use super::{CoefficientKind, Degeneracy, EstimatorReport, RegressionCoefficient};
use crate::designs::AtsdSample;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::population::{Unit, Variable};

const T: usize = 0;
const A: usize = 1;

/// Murthy quantities of one selected PSU, indexed `[target, auxiliary]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsuSummary {
    pub psu: usize,
    pub psu_size: usize,
    /// Phase-one size n_{1h} (the frame).
    pub frame_size: usize,
    /// Σ over the phase-one sample of the auxiliary.
    pub phase_one_aux_total: f64,
    /// Murthy totals t̂ of target and auxiliary.
    pub totals: [f64; 2],
    /// Murthy totals of the products, `products[i][j]` = t̂ of v_i * v_j.
    pub products: [[f64; 2]; 2],
    /// Ĉ₃ of the totals; `None` when undefined.
    pub c3: [[Option<f64>; 2]; 2],
}

impl PsuSummary {
    pub fn a_h(&self) -> f64 {
        self.psu_size as f64 / self.frame_size as f64
    }

    fn sampling_fraction(&self) -> f64 {
        self.frame_size as f64 / self.psu_size as f64
    }

    /// Ŝ_{ij,N_h} = [t̂_{v_i v_j} - t̂_i t̂_j / n_{1h}] / (n_{1h} - 1).
    fn within_cov(&self, i: usize, j: usize) -> Option<f64> {
        let n1 = self.frame_size as f64;
        (self.frame_size >= 2).then(|| (self.products[i][j] - self.totals[i] * self.totals[j] / n1) / (n1 - 1.0))
    }

    /// n_{1h}(N_h - 1) / (N_h (n_{1h} - 1)).
    fn v3_correction(&self) -> f64 {
        let (n1, nh) = (self.frame_size as f64, self.psu_size as f64);
        n1 * (nh - 1.0) / (nh * (n1 - 1.0))
    }
}

/// Everything the ATSD (and ATS) estimators need from one draw, for one
/// target/auxiliary pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AtsdSummary {
    pub total_psus: usize,
    pub population_size: usize,
    pub psus: Vec<PsuSummary>,
}

impl AtsdSummary {
    pub fn new(draw: &AtsdSample, target: Variable, aux: Variable) -> Result<Self> {
        if draw.psus.is_empty() {
            return Err(Error::InvalidDesign("draw selected no PSU".into()));
        }
        let vars = [target, aux];
        let mut psus = Vec::with_capacity(draw.m());
        for s in &draw.psus {
            let v = |i: usize| move |u: &Unit| u.value(vars[i]);
            let mut totals = [0.0; 2];
            let mut products = [[0.0; 2]; 2];
            let mut c3 = [[None; 2]; 2];
            for i in 0..2 {
                totals[i] = murthy_total(s, v(i))?;
                for j in 0..2 {
                    products[i][j] = murthy_total(s, |u: &Unit| v(i)(u) * v(j)(u))?;
                    c3[i][j] = match c3_hat(s, v(i), v(j)) {
                        Ok(c) => Some(c),
                        Err(Error::UndefinedVariance(_)) => None,
                        Err(e) => return Err(e),
                    };
                }
            }
            psus.push(PsuSummary {
                psu: s.frame.psu,
                psu_size: s.frame.psu_size,
                frame_size: s.frame_size(),
                phase_one_aux_total: s.frame.total(v(A)),
                totals,
                products,
                c3,
            });
        }
        Ok(Self { total_psus: draw.total_psus, population_size: draw.population_size, psus })
    }

    pub fn m(&self) -> usize {
        self.psus.len()
    }

    fn big_m(&self) -> f64 {
        self.total_psus as f64
    }

    fn n(&self) -> f64 {
        self.population_size as f64
    }

    /// (1/N) Σ_{h∈s} a_h value_h / π_h with π_h = m/M.
    fn expand(&self, value: impl Fn(&PsuSummary) -> f64) -> f64 {
        let scale = self.big_m() / self.m() as f64 / self.n();
        scale * compensated_sum(self.psus.iter().map(|p| p.a_h() * value(p)))
    }

    pub fn ybar_n2(&self) -> f64 {
        self.expand(|p| p.totals[T])
    }

    pub fn xbar_n2(&self) -> f64 {
        self.expand(|p| p.totals[A])
    }

    pub fn xbar_n1(&self) -> f64 {
        self.expand(|p| p.phase_one_aux_total)
    }

    /// Conventional slope from the expanded Murthy totals of xy and x².
    pub fn beta1_hat(&self, tol: &Degeneracy) -> RegressionCoefficient {
        let n = self.n();
        let (ybar, xbar) = (self.ybar_n2(), self.xbar_n2());
        let num = n * self.expand(|p| p.products[A][T]) - n * ybar * xbar;
        let den = n * self.expand(|p| p.products[A][A]) - n * xbar * xbar;
        if !den.is_finite() || den.abs() <= tol.slope_denominator() {
            return RegressionCoefficient::degenerate(CoefficientKind::Beta1Hat);
        }
        RegressionCoefficient::known(CoefficientKind::Beta1Hat, num / den)
    }

    /// Plug-in design-optimal slope ĉov(ȳ_{n2}, x̄_{n2}) / v̂ar(x̄_{n2}).
    pub fn beta_opt_hat(&self, tol: &Degeneracy) -> RegressionCoefficient {
        match (self.cov_hat_xy(), self.var_hat_xbar_n2()) {
            (Ok(cov), Ok(var)) if var.is_finite() && var > tol.mean_variance() => {
                RegressionCoefficient::known(CoefficientKind::BetaOptHat, cov / var)
            }
            _ => RegressionCoefficient::degenerate(CoefficientKind::BetaOptHat),
        }
    }

    fn between_cov(&self, i: usize, j: usize) -> Result<f64> {
        let m = self.m();
        if m == self.total_psus {
            // finite population correction (1 - m/M) vanishes
            return Ok(0.0);
        }
        if m < 2 {
            return Err(Error::UndefinedVariance("fewer than two PSUs selected".into()));
        }
        let ti: Vec<f64> = self.psus.iter().map(|p| p.a_h() * p.totals[i]).collect();
        let tj: Vec<f64> = self.psus.iter().map(|p| p.a_h() * p.totals[j]).collect();
        Ok(crate::numeric::sample_cov(&ti, &tj))
    }

    fn c3(&self, p: &PsuSummary, i: usize, j: usize) -> Result<f64> {
        p.c3[i][j].ok_or_else(|| Error::UndefinedVariance("fewer than two initial units in a PSU".into()))
    }

    /// Estimated covariance of the expanded Murthy means of variables i and j.
    fn cov_hat(&self, i: usize, j: usize) -> Result<f64> {
        let (big_m, m, n) = (self.big_m(), self.m() as f64, self.n());
        let first = big_m * big_m * (1.0 - m / big_m) * self.between_cov(i, j)? / m;
        let mut second = Vec::with_capacity(self.psus.len());
        let mut third = Vec::with_capacity(self.psus.len());
        for p in &self.psus {
            let s = p
                .within_cov(i, j)
                .ok_or_else(|| Error::UndefinedVariance("phase-one sample below two units".into()))?;
            let nh = p.psu_size as f64;
            second.push(nh * nh * (1.0 - p.sampling_fraction()) * s / p.frame_size as f64);
            third.push(p.a_h() * p.a_h() * p.v3_correction() * self.c3(p, i, j)?);
        }
        Ok((first + big_m / m * (compensated_sum(second) + compensated_sum(third))) / (n * n))
    }

    pub fn var_hat_xbar_n2(&self) -> Result<f64> {
        self.cov_hat(A, A)
    }

    pub fn cov_hat_xy(&self) -> Result<f64> {
        self.cov_hat(T, A)
    }

    /// Variance estimator of μ̂_reg for slope `beta`; unbiased when `beta` is fixed.
    pub fn var_hat_mu_reg(&self, beta: f64) -> Result<f64> {
        let (big_m, m, n) = (self.big_m(), self.m() as f64, self.n());
        let base = self.cov_hat(T, T)? * n * n;
        let mut slope_terms = Vec::with_capacity(self.psus.len());
        for p in &self.psus {
            let a2 = p.a_h() * p.a_h();
            slope_terms.push(a2 * (beta * beta * self.c3(p, A, A)? - 2.0 * beta * self.c3(p, T, A)?));
        }
        Ok((base + big_m * big_m / (m * m) * compensated_sum(slope_terms)) / (n * n))
    }

    /// μ̂_reg = ȳ_{n2} + β (x̄_{n1} - x̄_{n2}); a degenerate slope falls back to ȳ_{n2}.
    pub fn mu_reg(&self, beta: RegressionCoefficient) -> EstimatorReport {
        let (ybar, xbar2, xbar1) = (self.ybar_n2(), self.xbar_n2(), self.xbar_n1());
        let (estimate, slope) =
            if beta.degenerate { (ybar, 0.0) } else { (ybar + beta.value * (xbar1 - xbar2), beta.value) };
        EstimatorReport {
            estimate,
            coefficient: Some(beta),
            var_hat: self.var_hat_mu_reg(slope).ok(),
            fallback_used: beta.degenerate,
            components: Some((ybar, xbar2, xbar1)),
        }
    }

    /// Murthy-type mean estimator ȳ_{n2} on its own (the ATS estimator when the
    /// frames are whole PSUs).
    pub fn murthy_mean(&self) -> EstimatorReport {
        EstimatorReport::plain(self.ybar_n2(), self.var_hat_mu_reg(0.0).ok())
    }

    /// `(PSU label, Ŝ²_{x_{N_h}})` per selected PSU, for the auxiliary.
    pub fn within_aux_variance_hat(&self) -> Vec<(usize, Option<f64>)> {
        self.psus.iter().map(|p| (p.psu, p.within_cov(A, A))).collect()
    }

    /// Ŝ²_{ty_N}: sample variance of the expanded PSU totals a_h t̂_y.
    pub fn psu_total_variance_hat(&self) -> Result<f64> {
        if self.m() < 2 {
            return Err(Error::UndefinedVariance("fewer than two PSUs selected".into()));
        }
        let t: Vec<f64> = self.psus.iter().map(|p| p.a_h() * p.totals[T]).collect();
        Ok(crate::numeric::sample_cov(&t, &t))
    }

    /// (1/N²) M² (1 - m/M) Ŝ²_{ty_N} / m, the first block of v̂ar(μ̂_reg).
    pub fn between_term(&self) -> Result<f64> {
        let (big_m, m, n) = (self.big_m(), self.m() as f64, self.n());
        Ok(big_m * big_m * (1.0 - m / big_m) * self.between_cov(T, T)? / m / (n * n))
    }
}
