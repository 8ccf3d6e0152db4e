//! Accuracy metrics over cable-length residuals and method comparison tables.
//!
//! Note on naming: the `std` metric is the *mean absolute* residual,
//! `(1/m)·Σ|eᵢ|`, not a standard deviation. The name is kept because that is
//! what calibration tables usually call it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ResidualVector;

/// Name of the uncalibrated reference row in a [`ComparisonTable`].
pub const BEFORE: &str = "Before";

/// RMSE, mean absolute error ("Std") and maximum absolute error, all in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    #[serde(rename = "rmse_mm")]
    pub rmse: f64,
    /// Mean absolute residual.
    #[serde(rename = "std_mm")]
    pub std: f64,
    #[serde(rename = "max_mm")]
    pub max: f64,
}

pub fn evaluate(residuals: &ResidualVector) -> Result<MetricTriple> {
    evaluate_slice(residuals.as_slice())
}

pub fn evaluate_slice(e: &[f64]) -> Result<MetricTriple> {
    if e.is_empty() {
        return Err(Error::InvalidArgument("no residuals to evaluate".into()));
    }
    let m = e.len() as f64;
    let (mut sum_abs, mut sum_sq, mut max) = (0.0_f64, 0.0_f64, 0.0_f64);
    for &v in e {
        let a = v.abs();
        sum_abs += a;
        sum_sq += v * v;
        max = max.max(a);
    }
    // the power-mean chain max >= rmse >= mean|e| is exact in real arithmetic;
    // clamping keeps rounding of the two folds from breaking it by an ulp
    let rmse = (sum_sq / m).sqrt().min(max);
    Ok(MetricTriple {
        rmse,
        std: (sum_abs / m).min(rmse),
        max,
    })
}

/// Percentage improvement of the best method over the runner-up, per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub rmse: f64,
    pub std: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    #[serde(flatten)]
    pub metrics: MetricTriple,
    pub gain_pct: Option<Gain>,
}

/// Methods ranked by RMSE, with the uncalibrated row (if any) last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn gain_pct(best: f64, other: f64) -> f64 {
    if other == 0.0 {
        return 0.0;
    }
    ((other - best) / other * 100.0 * 100.0).round() / 100.0
}

/// Ranks methods by RMSE.
///
/// The best method's row carries its gain over the second-best method,
/// `(other − best)/other × 100` rounded to two decimals. The `before` row is
/// never ranked or used for gains.
pub fn compare(
    reports: &[(String, MetricTriple)],
    before: Option<MetricTriple>,
) -> Result<ComparisonTable> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let mut rows: Vec<ComparisonRow> = Vec::with_capacity(reports.len() + 1);
    for (name, metrics) in reports {
        if name == BEFORE && before.is_some() {
            return Err(Error::InvalidArgument(format!(
                "method name `{BEFORE}` is reserved for the uncalibrated row"
            )));
        }
        if rows.iter().any(|r| &r.method == name) {
            return Err(Error::InvalidArgument(format!("duplicate method `{name}`")));
        }
        rows.push(ComparisonRow {
            method: name.clone(),
            metrics: *metrics,
            gain_pct: None,
        });
    }
    rows.sort_by(|a, b| a.metrics.rmse.total_cmp(&b.metrics.rmse));
    if rows.len() >= 2 {
        let (best, second) = (rows[0].metrics, rows[1].metrics);
        rows[0].gain_pct = Some(Gain {
            rmse: gain_pct(best.rmse, second.rmse),
            std: gain_pct(best.std, second.std),
            max: gain_pct(best.max, second.max),
        });
    }
    if let Some(metrics) = before {
        rows.push(ComparisonRow {
            method: BEFORE.into(),
            metrics,
            gain_pct: None,
        });
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Four decimals, or scientific notation for values too small to show.
fn cell(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(0)
            .max("method".len());
        writeln!(
            f,
            "{:<width$}  {:>10}  {:>10}  {:>10}  {}",
            "method", "rmse_mm", "std_mm", "max_mm", "gain_pct (rmse/std/max)"
        )?;
        for r in &self.rows {
            write!(
                f,
                "{:<width$}  {:>10}  {:>10}  {:>10}",
                r.method,
                cell(r.metrics.rmse),
                cell(r.metrics.std),
                cell(r.metrics.max)
            )?;
            match r.gain_pct {
                Some(g) => writeln!(f, "  {:.2}/{:.2}/{:.2}", g.rmse, g.std, g.max)?,
                None => writeln!(f)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(rmse: f64, std: f64, max: f64) -> MetricTriple {
        MetricTriple { rmse, std, max }
    }

    #[test]
    fn three_four() {
        let m = evaluate(&ResidualVector::new(vec![3.0, -4.0]).unwrap()).unwrap();
        assert_eq!(m.max, 4.0);
        assert_eq!(m.std, 3.5);
        assert_eq!(m.rmse, 12.5_f64.sqrt());
    }

    #[test]
    fn constant_residuals_keep_the_chain() {
        for v in [0.1, 1.0 / 3.0, 7.77, 1e-300] {
            for n in 1..50 {
                let m = evaluate_slice(&vec![v; n]).unwrap();
                assert!(m.max >= m.rmse && m.rmse >= m.std, "{v} x {n}: {m:?}");
            }
        }
    }

    #[test]
    fn zeros() {
        let m = evaluate_slice(&[0.0; 5]).unwrap();
        assert_eq!(m, triple(0.0, 0.0, 0.0));
        assert!(evaluate_slice(&[]).is_err());
    }

    #[test]
    fn gain_over_runner_up() {
        let table = compare(
            &[
                ("slm".into(), triple(0.45, 0.36, 1.13)),
                ("ukf-slm".into(), triple(0.43, 0.35, 1.05)),
            ],
            None,
        )
        .unwrap();
        assert_eq!(table.rows[0].method, "ukf-slm");
        let g = table.rows[0].gain_pct.unwrap();
        assert_eq!((g.rmse, g.std, g.max), (4.44, 2.78, 7.08));
        assert!(table.rows[1].gain_pct.is_none());
    }

    #[test]
    fn single_row_has_no_gain() {
        let table = compare(&[("slm".into(), triple(0.5, 0.4, 1.0))], None).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].gain_pct.is_none());
    }

    #[test]
    fn before_sorts_last() {
        let table = compare(
            &[
                ("lm".into(), triple(0.50, 0.41, 1.16)),
                ("ukf-slm".into(), triple(0.43, 0.35, 1.05)),
            ],
            Some(triple(2.09, 2.00, 3.36)),
        )
        .unwrap();
        let names: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["ukf-slm", "lm", BEFORE]);
        // even when it is not the worst row
        let table = compare(&[("bad".into(), triple(9.0, 9.0, 9.0))], Some(triple(2.09, 2.0, 3.36))).unwrap();
        assert_eq!(table.rows.last().unwrap().method, BEFORE);
    }

    #[test]
    fn duplicates_rejected() {
        let rows = vec![
            ("lm".to_string(), triple(1.0, 1.0, 1.0)),
            ("lm".to_string(), triple(2.0, 2.0, 2.0)),
        ];
        assert!(matches!(compare(&rows, None), Err(Error::InvalidArgument(_))));
        assert!(compare(&[], None).is_err());
    }

    #[test]
    fn json_keys() {
        let table = compare(
            &[
                ("a".into(), triple(0.43, 0.35, 1.05)),
                ("b".into(), triple(0.45, 0.36, 1.13)),
            ],
            None,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&table.to_json_string()).unwrap();
        let row = &v[0];
        for key in ["method", "rmse_mm", "std_mm", "max_mm", "gain_pct"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
        assert_eq!(row["gain_pct"]["rmse"], 4.44);
        assert!(v[1]["gain_pct"].is_null());
        let text = table.to_string();
        assert!(text.contains("4.44/2.78/7.08"), "{text}");
        assert!(text.contains("0.4300"), "{text}");
        let tiny = compare(&[("lm".into(), triple(9.6e-10, 8e-10, 2.5e-9))], None).unwrap();
        assert!(tiny.to_string().contains("9.600e-10"), "{tiny}");
    }
}
