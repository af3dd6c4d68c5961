use std::fmt::Write as _;

use atsd_core::cost::EffortPlan;
use atsd_core::population::{compute_stats, Condition, Population, PopulationStats, Table1Target, Variable};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

/// Target vs observed rows with a pass/fail flag.
pub fn check_table(target: &Table1Target, stats: &PopulationStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>10} {:>10}  result", "statistic", "target", "observed");
    for (label, want, got, ok) in target.check(stats) {
        let _ = writeln!(out, "{label:<14} {want:>10.4} {got:>10.4}  {}", if ok { "pass" } else { "FAIL" });
    }
    out
}

pub fn population_report(pop: &Population, target: Option<&Table1Target>) -> String {
    let stats = compute_stats(pop, Condition::on(Variable::Y), 0.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "N = {}, M = {}, N_h = {:?}, seed = {}",
        pop.size(),
        pop.psu_count(),
        pop.psu_sizes(),
        pop.seed()
    );
    let _ = writeln!(out, "{:<4} {:>10} {:>10} {:>10}", "var", "mean", "variance", "corr(.,y)");
    for var in [Variable::Y, Variable::X, Variable::Z, Variable::W] {
        let s = stats.summary(var);
        let _ = writeln!(
            out,
            "{:<4} {:>10.4} {:>10.4} {:>10}",
            var.name(),
            s.mean,
            s.variance,
            opt(stats.corr_with_y(var))
        );
    }
    let rarity: Vec<String> = stats.rarity.iter().map(|p| format!("{p:.4}")).collect();
    let _ = writeln!(out, "units with y > 0 per PSU: {:?} (p_h = {})", stats.condition_counts, rarity.join(", "));
    if let Some(t) = target {
        out.push('\n');
        out.push_str(&check_table(t, &stats));
    }
    out
}

pub fn plan_report(plan: &EffortPlan) -> String {
    let mut out = String::new();
    let c = &plan.expected_cost;
    let a = &plan.atsd;
    let _ = writeln!(
        out,
        "cost per auxiliary {} per target {} (ratio {})",
        plan.cost.c_aux,
        plan.cost.c_tar,
        plan.cost.ratio()
    );
    let _ = writeln!(out, "budget (ATSD expected cost) {:.3}, E(n_y) {:.3}", plan.budget, plan.expected_ny);
    let _ = writeln!(out, "{:<18} {:<46} {:>12}", "design", "sizes", "E(cost)");
    let rows = [
        ("atsd", format!("m={} n1h={} n2h1={} d={} on {}", a.m, a.n1h, a.n2h1, a.d, a.condition), c.atsd),
        ("ats", format!("m={} n1={:?} d1={} on {}", plan.ats.m, plan.ats.n1, plan.ats.d1, plan.ats.condition), c.ats),
        ("two_stage", format!("n={:?}", plan.two_stage), c.two_stage),
        ("srs", format!("n={}", plan.srs_n), c.srs),
        ("two_stage_double", format!("n1h={} n2h={:?}", a.n1h, plan.regs), c.regs),
    ];
    for (name, sizes, cost) in rows {
        let _ = writeln!(out, "{name:<18} {sizes:<46} {cost:>12.3}");
    }
    let _ = writeln!(out, "largest mismatch {:.3} (one target unit is {})", plan.worst_mismatch(), plan.cost.c_tar);
    out
}
