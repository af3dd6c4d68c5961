//! Order-independent reduction of per-replicate results into an experiment table.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::numeric::order_free_sum;

/// Per-estimator running record. Values are kept rather than summed so the
/// final sums can be taken in sorted order: any permutation or split of the
/// replicates gives the same bits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    pub estimates: Vec<f64>,
    pub var_hats: Vec<f64>,
    pub costs: Vec<f64>,
    pub fallbacks: usize,
    pub errored: usize,
}

impl Accumulator {
    pub fn push(&mut self, estimate: f64, var_hat: Option<f64>, fallback: bool, cost: f64) {
        self.estimates.push(estimate);
        if let Some(v) = var_hat {
            self.var_hats.push(v);
        }
        self.costs.push(cost);
        self.fallbacks += usize::from(fallback);
    }

    pub fn push_error(&mut self) {
        self.errored += 1;
    }

    pub fn merge(&mut self, other: Accumulator) {
        self.estimates.extend(other.estimates);
        self.var_hats.extend(other.var_hats);
        self.costs.extend(other.costs);
        self.fallbacks += other.fallbacks;
        self.errored += other.errored;
    }

    pub fn replicates(&self) -> usize {
        self.estimates.len() + self.errored
    }
}

fn sorted_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    order_free_sum(&mut v) / v.len() as f64
}

/// Mean of f(v) with the values sorted first.
fn mean_of(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mapped: Vec<f64> = values.iter().map(|&v| f(v)).collect();
    sorted_mean(&mapped)
}

/// Moments of one estimator around the true mean.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    mean: f64,
    variance: f64,
    mse: f64,
    se_mean: f64,
    se_mse: f64,
    se_variance: f64,
}

fn moments(values: &[f64], truth: f64) -> Moments {
    let r = values.len() as f64;
    let mean = sorted_mean(values);
    let variance = mean_of(values, |v| (v - mean).powi(2));
    let mse = mean_of(values, |v| (v - truth).powi(2));
    let spread = |center: f64, level: f64| (mean_of(values, |v| ((v - center).powi(2) - level).powi(2)) / r).sqrt();
    Moments {
        mean,
        variance,
        mse,
        se_mean: (variance / r).sqrt(),
        se_mse: spread(truth, mse),
        se_variance: spread(mean, variance),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub estimator: String,
    pub design: String,
    pub replicates: usize,
    pub mean: f64,
    pub variance: f64,
    pub mse: f64,
    /// var(reference) / MSE; `None` when undefined (zero MSE).
    pub eff: Option<f64>,
    pub rbias: Option<f64>,
    pub fallback_rate: f64,
    pub mean_cost: f64,
    pub mean_var_hat: Option<f64>,
    pub errored: usize,
    pub se_mean: f64,
    pub se_mse: f64,
    pub se_eff: Option<f64>,
    pub se_rbias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub true_mean: f64,
    pub reference: String,
    pub reference_variance: f64,
    pub rows: Vec<TableRow>,
}

/// Builds the table; `entries` are `(estimator, design, accumulator)` in output
/// order and `reference` names the estimator whose variance defines eff.
pub fn aggregate(entries: &[(String, String, Accumulator)], reference: &str, truth: f64) -> ExperimentTable {
    let reference_moments =
        entries.iter().find(|(name, _, _)| name == reference).map(|(_, _, acc)| moments(&acc.estimates, truth));
    let var_ref = reference_moments.map_or(f64::NAN, |m| m.variance);
    let se_var_ref = reference_moments.map_or(f64::NAN, |m| m.se_variance);
    let rows = entries
        .iter()
        .map(|(name, design, acc)| {
            let m = moments(&acc.estimates, truth);
            let is_reference = name == reference;
            let eff = if is_reference && var_ref > 0.0 {
                Some(1.0)
            } else if m.mse > 0.0 && var_ref.is_finite() {
                Some(var_ref / m.mse)
            } else {
                None
            };
            let se_eff = eff.map(|e| {
                if is_reference {
                    0.0
                } else {
                    e * ((se_var_ref / var_ref).powi(2) + (m.se_mse / m.mse).powi(2)).sqrt()
                }
            });
            let rbias = (truth != 0.0 && !acc.estimates.is_empty()).then(|| (m.mean - truth) / truth);
            TableRow {
                estimator: name.clone(),
                design: design.clone(),
                replicates: acc.replicates(),
                mean: m.mean,
                variance: m.variance,
                mse: m.mse,
                eff,
                rbias,
                fallback_rate: acc.fallbacks as f64 / acc.replicates().max(1) as f64,
                mean_cost: sorted_mean(&acc.costs),
                mean_var_hat: (!acc.var_hats.is_empty()).then(|| sorted_mean(&acc.var_hats)),
                errored: acc.errored,
                se_mean: m.se_mean,
                se_mse: m.se_mse,
                se_eff,
                se_rbias: rbias.map(|_| m.se_mean / truth.abs()),
            }
        })
        .collect();
    ExperimentTable { true_mean: truth, reference: reference.to_string(), reference_variance: var_ref, rows }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl ExperimentTable {
    pub const CSV_HEADER: [&'static str; 16] = [
        "estimator",
        "design",
        "replicates",
        "mean",
        "variance",
        "mse",
        "eff",
        "rbias",
        "fallback_rate",
        "mean_cost",
        "mean_var_hat",
        "errored",
        "se_mean",
        "se_mse",
        "se_eff",
        "se_rbias",
    ];

    pub fn row(&self, estimator: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.design.clone(),
                r.replicates.to_string(),
                r.mean.to_string(),
                r.variance.to_string(),
                r.mse.to_string(),
                opt(r.eff),
                opt(r.rbias),
                r.fallback_rate.to_string(),
                r.mean_cost.to_string(),
                opt(r.mean_var_hat),
                r.errored.to_string(),
                r.se_mean.to_string(),
                r.se_mse.to_string(),
                opt(r.se_eff),
                opt(r.se_rbias),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Markdown-compatible aligned table of the headline columns.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>, digits: usize| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"));
        let header = ["estimator", "design", "eff", "rbias", "fallback", "mean cost", "mean", "mse"];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.estimator.clone(),
                    r.design.clone(),
                    fmt(r.eff, 3),
                    fmt(r.rbias, 3),
                    format!("{:.3}", r.fallback_rate),
                    format!("{:.1}", r.mean_cost),
                    format!("{:.5}", r.mean),
                    format!("{:.3e}", r.mse),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut text = line(header.to_vec());
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
        text.push_str(&format!("|{}|\n", rule.join("|")));
        for row in &body {
            text.push_str(&line(row.iter().map(String::as_str).collect()));
        }
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(values: &[f64]) -> Accumulator {
        let mut a = Accumulator::default();
        for &v in values {
            a.push(v, None, false, 1.0);
        }
        a
    }

    #[test]
    fn permutation_and_split_do_not_change_the_table() {
        let vals = [0.3, 1e-9, 2.5, -0.7, 11.0, 0.125, 3.3];
        let mut rev = vals;
        rev.reverse();
        let whole = aggregate(&[("a".into(), "d".into(), acc(&vals))], "a", 1.0);
        let reversed = aggregate(&[("a".into(), "d".into(), acc(&rev))], "a", 1.0);
        let mut merged = acc(&vals[..3]);
        merged.merge(acc(&vals[3..]));
        let split = aggregate(&[("a".into(), "d".into(), merged)], "a", 1.0);
        assert_eq!(whole, reversed);
        assert_eq!(whole, split);
    }

    #[test]
    fn constant_stream_has_zero_se() {
        let t = aggregate(&[("a".into(), "d".into(), acc(&[2.0; 10]))], "a", 2.0);
        let r = &t.rows[0];
        assert_eq!(r.se_mean, 0.0);
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.eff, None);
        assert_eq!(r.rbias, Some(0.0));
    }

    #[test]
    fn reference_eff_is_one() {
        let t = aggregate(
            &[("ref".into(), "srs".into(), acc(&[1.0, 2.0, 3.0])), ("b".into(), "d".into(), acc(&[2.0, 2.5]))],
            "ref",
            2.0,
        );
        assert_eq!(t.rows[0].eff, Some(1.0));
        // var_ref = 2/3, MSE of b = 0.125
        assert!((t.rows[1].eff.unwrap() - (2.0 / 3.0) / 0.125).abs() < 1e-12);
    }
}
