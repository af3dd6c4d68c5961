use atsd_core::designs::{draw, run_atsd, AtsParams, AtsdParams, DesignParams, Draw, Frame};
use atsd_core::estimators::{
    beta_opt_pop, beta_pop, murthy_total, phase_two_moments, regs, srs_mean, two_stage_mean, AtsdSummary, Degeneracy,
    MomentMethod, RegressionCoefficient,
};
use atsd_core::montecarlo::{enumerate_design, exact_moments, frame_expectation};
use atsd_core::population::{Condition, Population, Unit, Variable};
use atsd_core::rng::DrawRng;
use atsd_core::verify::{run_suite, Suite};
use atsd_core::Result;

fn pop_from(psus: &[&[(f64, f64)]]) -> Population {
    Population::from_psus(psus.iter().map(|p| p.iter().map(|&(y, x)| Unit::new(y, x, 0.0)).collect()).collect())
        .unwrap()
}

/// N = 8, M = 2.
fn small() -> Population {
    pop_from(&[&[(0.0, 1.0), (0.0, 0.0), (3.0, 4.0), (1.0, 2.0)], &[(2.0, 2.0), (0.0, 1.0), (0.0, 0.0), (5.0, 6.0)]])
}

/// N = 12, M = 3, so two of three PSUs leaves a between-PSU term.
fn three_psus() -> Population {
    pop_from(&[
        &[(0.0, 1.0), (0.0, 0.0), (3.0, 4.0), (1.0, 2.0)],
        &[(2.0, 2.0), (0.0, 1.0), (0.0, 0.0), (5.0, 6.0)],
        &[(0.0, 0.0), (4.0, 3.0), (0.0, 2.0), (0.0, 0.0)],
    ])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn every_suite_passes() {
    for suite in Suite::ALL {
        let checks = run_suite(suite).unwrap();
        assert!(!checks.is_empty(), "{suite} ran no checks");
        let failed: Vec<String> = checks.iter().filter(|c| !c.passed()).map(|c| c.to_string()).collect();
        assert!(failed.is_empty(), "{suite}:\n{}", failed.join("\n"));
    }
}

#[test]
fn srswor_five_choose_two() {
    let pop = pop_from(&[&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0), (5.0, 0.0)]]);
    let paths = enumerate_design(&pop, &DesignParams::Srs { n: 2 }).unwrap();
    assert_eq!(paths.len(), 10);
    assert!(paths.iter().all(|(_, p)| (p - 0.1).abs() < 1e-15));
    let e = exact_moments(&paths, |d| match d {
        Draw::Srs(s) => Ok(srs_mean(s, Variable::Y).estimate),
        _ => unreachable!(),
    })
    .unwrap();
    assert!(close(e.mean, 3.0));
    // (1 - n/N) S² / n with S² = 2.5
    assert!(close(e.variance, 0.6 * 2.5 / 2.0));
}

#[test]
fn tiny_atsd_plan_is_a_distribution_and_unbiased() {
    let pop = small();
    let params = AtsdParams { m: 1, n1h: 3, n2h1: 2, d: 1, condition: Condition::on(Variable::Y) };
    let paths = enumerate_design(&pop, &DesignParams::Atsd(params)).unwrap();
    let summary = |d: &Draw| match d {
        Draw::Adaptive(s) => AtsdSummary::new(s, Variable::Y, Variable::X),
        _ => unreachable!(),
    };
    let ybar = exact_moments(&paths, |d| Ok(summary(d)?.ybar_n2())).unwrap();
    assert!((ybar.total_probability - 1.0).abs() < 1e-12);
    assert!(close(ybar.mean, pop.mean(Variable::Y)));
    let xbar1 = exact_moments(&paths, |d| Ok(summary(d)?.xbar_n1())).unwrap();
    assert!(close(xbar1.mean, pop.mean(Variable::X)));
    let xbar2 = exact_moments(&paths, |d| Ok(summary(d)?.xbar_n2())).unwrap();
    assert!(close(xbar2.mean, pop.mean(Variable::X)));
}

#[test]
fn two_by_two_toy() {
    let pop = pop_from(&[&[(0.0, 1.0), (4.0, 3.0)], &[(1.0, 0.0), (0.0, 2.0)]]);
    let params = AtsdParams { m: 1, n1h: 2, n2h1: 1, d: 1, condition: Condition::on(Variable::Y) };
    let paths = enumerate_design(&pop, &DesignParams::Atsd(params)).unwrap();
    let e = exact_moments(&paths, |d| match d {
        Draw::Adaptive(s) => Ok(AtsdSummary::new(s, Variable::Y, Variable::X)?.ybar_n2()),
        _ => unreachable!(),
    })
    .unwrap();
    assert!(close(e.mean, 1.25));
}

#[test]
fn murthy_frame_example() {
    let pop = pop_from(&[&[(0.0, 0.0), (0.0, 0.0), (5.0, 0.0), (3.0, 0.0), (0.0, 0.0)]]);
    let frame = Frame::whole_psu(&pop, 0);
    let e = frame_expectation(&frame, 2, 1, Condition::on(Variable::Y), |s| murthy_total(s, |u| u.y)).unwrap();
    assert!(close(e.mean, 8.0));
    assert!((e.total_probability - 1.0).abs() < 1e-12);
}

#[test]
fn census_draw_recovers_population_quantities() {
    let pop = small();
    let params = AtsdParams { m: 2, n1h: 4, n2h1: 4, d: 0, condition: Condition::on(Variable::Y) };
    let s = run_atsd(&pop, &params, &mut DrawRng::new(1, 0).rng()).unwrap();
    let sum = AtsdSummary::new(&s, Variable::Y, Variable::X).unwrap();
    assert!(close(sum.ybar_n2(), pop.mean(Variable::Y)));
    assert!(close(sum.xbar_n1(), pop.mean(Variable::X)));
    let tol = Degeneracy::for_population(&pop, Variable::X);
    assert!(close(sum.beta1_hat(&tol).value, beta_pop(&pop, Variable::Y, Variable::X).unwrap()));
}

#[test]
fn exact_linearity_of_the_regression_estimator() {
    let pop = pop_from(&[
        &[(2.0, 1.0), (0.0, 0.0), (8.0, 4.0), (4.0, 2.0)],
        &[(4.0, 2.0), (2.0, 1.0), (0.0, 0.0), (12.0, 6.0)],
    ]);
    let params = AtsdParams { m: 2, n1h: 3, n2h1: 2, d: 2, condition: Condition::on(Variable::Y) };
    let paths = enumerate_design(&pop, &DesignParams::Atsd(params)).unwrap();
    for (d, _) in &paths {
        let Draw::Adaptive(s) = d else { unreachable!() };
        let sum = AtsdSummary::new(s, Variable::Y, Variable::X).unwrap();
        let est = sum.mu_reg(RegressionCoefficient::fixed(2.0)).estimate;
        assert!(close(est, 2.0 * sum.xbar_n1()));
        assert_eq!(sum.mu_reg(RegressionCoefficient::fixed(0.0)).estimate, sum.ybar_n2());
    }
}

#[test]
fn optimal_slope_enumeration_matches_simulation() {
    let pop = small();
    let params = AtsdParams { m: 1, n1h: 3, n2h1: 2, d: 1, condition: Condition::on(Variable::Y) };
    let paths = enumerate_design(&pop, &DesignParams::Atsd(params)).unwrap();
    let pair = |d: &Draw| -> Result<(f64, f64)> {
        let Draw::Adaptive(s) = d else { unreachable!() };
        let sum = AtsdSummary::new(s, Variable::Y, Variable::X)?;
        Ok((sum.ybar_n2(), sum.xbar_n2()))
    };
    let ex = exact_moments(&paths, |d| Ok(pair(d)?.1)).unwrap();
    let ey = exact_moments(&paths, |d| Ok(pair(d)?.0)).unwrap();
    let cov = exact_moments(&paths, |d| {
        let (y, x) = pair(d)?;
        Ok((y - ey.mean) * (x - ex.mean))
    })
    .unwrap()
    .mean;
    let by_paths = cov / ex.variance;

    let moments = phase_two_moments(&pop, &params, Variable::Y, Variable::X, MomentMethod::Enumerate).unwrap();
    let closed_form = beta_opt_pop(&pop, &params, Variable::Y, Variable::X, &moments).unwrap();
    assert!(close(by_paths, closed_form), "{by_paths} vs {closed_form}");

    // 10^6 simulated draws, standard error from 50 batches
    let (batches, per_batch) = (50usize, 20_000usize);
    let mut rng = DrawRng::new(2024, 0).rng();
    let mut batch_betas = Vec::with_capacity(batches);
    let mut all = Vec::with_capacity(batches * per_batch);
    for _ in 0..batches {
        let draws: Vec<(f64, f64)> = (0..per_batch)
            .map(|_| pair(&Draw::Adaptive(run_atsd(&pop, &params, &mut rng).unwrap())).unwrap())
            .collect();
        batch_betas.push(slope(&draws));
        all.extend(draws);
    }
    let simulated = slope(&all);
    let mean_b = batch_betas.iter().sum::<f64>() / batches as f64;
    let sd = (batch_betas.iter().map(|b| (b - mean_b).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
    let se = sd / (batches as f64).sqrt();
    assert!((simulated - closed_form).abs() < 3.0 * se, "simulated {simulated}, exact {closed_form}, se {se}");
}

fn slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let my = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy = pairs.iter().map(|p| (p.0 - my) * (p.1 - mx)).sum::<f64>();
    let sxx = pairs.iter().map(|p| (p.1 - mx).powi(2)).sum::<f64>();
    sxy / sxx
}

/// Every estimator's simulated mean lands within four standard errors of its
/// enumerated expectation.
#[test]
fn simulation_agrees_with_enumeration_for_every_estimator() {
    let pop = three_psus();
    let tol = Degeneracy::for_population(&pop, Variable::X);
    let atsd = AtsdParams { m: 2, n1h: 3, n2h1: 2, d: 1, condition: Condition::any_of(&[Variable::Y, Variable::X]) };
    let moments = phase_two_moments(&pop, &atsd, Variable::Y, Variable::X, MomentMethod::Enumerate).unwrap();
    let beta_o = beta_opt_pop(&pop, &atsd, Variable::Y, Variable::X, &moments).unwrap();
    let beta_1 = beta_pop(&pop, Variable::Y, Variable::X).unwrap();

    type Stat = Box<dyn Fn(&Draw) -> Result<f64>>;
    let on_atsd = |f: fn(&AtsdSummary, &Degeneracy, f64, f64) -> f64| -> Stat {
        Box::new(move |d: &Draw| {
            let Draw::Adaptive(s) = d else { unreachable!() };
            Ok(f(&AtsdSummary::new(s, Variable::Y, Variable::X)?, &tol, beta_o, beta_1))
        })
    };
    let cases: Vec<(&str, DesignParams, Stat)> = vec![
        ("ybar_n2", DesignParams::Atsd(atsd), on_atsd(|s, _, _, _| s.ybar_n2())),
        ("RegO", DesignParams::Atsd(atsd), on_atsd(|s, _, b, _| s.mu_reg(RegressionCoefficient::fixed(b)).estimate)),
        ("Reg1", DesignParams::Atsd(atsd), on_atsd(|s, _, _, b| s.mu_reg(RegressionCoefficient::fixed(b)).estimate)),
        ("Regopt", DesignParams::Atsd(atsd), on_atsd(|s, t, _, _| s.mu_reg(s.beta_opt_hat(t)).estimate)),
        ("Regb1", DesignParams::Atsd(atsd), on_atsd(|s, t, _, _| s.mu_reg(s.beta1_hat(t)).estimate)),
        (
            "ATS",
            DesignParams::Ats(AtsParams::uniform(2, 2, 1, Condition::on(Variable::Y))),
            Box::new(|d: &Draw| {
                let Draw::Adaptive(s) = d else { unreachable!() };
                Ok(AtsdSummary::new(s, Variable::Y, Variable::Y)?.murthy_mean().estimate)
            }),
        ),
        (
            "Regs",
            DesignParams::TwoStageDouble { m: 2, n1h: 3, phase2: vec![2, 2] },
            Box::new(move |d: &Draw| {
                let Draw::TwoStageDouble(s) = d else { unreachable!() };
                Ok(regs(s, Variable::Y, Variable::X, &tol).estimate)
            }),
        ),
        (
            "ybar_s",
            DesignParams::Srs { n: 4 },
            Box::new(|d: &Draw| {
                let Draw::Srs(s) = d else { unreachable!() };
                Ok(srs_mean(s, Variable::Y).estimate)
            }),
        ),
        (
            "ybar_ts",
            DesignParams::TwoStage { m: 2, sizes: vec![2, 2] },
            Box::new(|d: &Draw| {
                let Draw::TwoStage(s) = d else { unreachable!() };
                Ok(two_stage_mean(s, Variable::Y).estimate)
            }),
        ),
    ];
    let r = 1_000_000usize;
    for (k, (name, params, stat)) in cases.iter().enumerate() {
        let exact = exact_moments(&enumerate_design(&pop, params).unwrap(), stat).unwrap();
        let mut rng = DrawRng::new(77, k as u64).rng();
        let values: Vec<f64> = (0..r).map(|_| stat(&draw(&pop, params, &mut rng).unwrap()).unwrap()).collect();
        let mean = values.iter().sum::<f64>() / r as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        let se = (var / r as f64).sqrt();
        assert!((mean - exact.mean).abs() <= 4.0 * se, "{name}: simulated {mean}, exact {}, se {se}", exact.mean);
    }
}
