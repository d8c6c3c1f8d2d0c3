//! Metrics and significance CSV schemas.
//!
//! Per-seed rows carry one task each; aggregate rows use task "avg", and
//! over-seed summaries use seed "mean" / "std". Floats print with six
//! decimals so reruns are byte-identical.

use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub strategy: String,
    /// Classes per task.
    pub setting: usize,
    /// Seed number, or "mean" / "std" for over-seed summaries.
    pub seed: String,
    /// 1-based task number, or "avg" for stream aggregates.
    pub task: String,
    pub auc: Option<f64>,
    pub fpr95: Option<f64>,
    pub acc: Option<f64>,
    pub fgt: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn seed_sort_key(seed: &str) -> (u8, u64) {
    match seed {
        "mean" => (1, 0),
        "std" => (1, 1),
        s => (0, s.parse().unwrap_or(u64::MAX)),
    }
}

fn task_sort_key(task: &str) -> (u8, u64) {
    match task {
        "avg" => (1, 0),
        t => (0, t.parse().unwrap_or(u64::MAX)),
    }
}

/// Renders rows in a deterministic order.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (
            &a.method,
            &a.strategy,
            a.setting,
            seed_sort_key(&a.seed),
            task_sort_key(&a.task),
        )
            .cmp(&(
                &b.method,
                &b.strategy,
                b.setting,
                seed_sort_key(&b.seed),
                task_sort_key(&b.task),
            ))
    });
    let mut out = String::from("method,strategy,setting,seed,task,auc,fpr95,acc,fgt\n");
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.strategy,
            r.setting,
            r.seed,
            r.task,
            fmt_opt(r.auc),
            fmt_opt(r.fpr95),
            fmt_opt(r.acc),
            fmt_opt(r.fgt)
        )
        .unwrap();
    }
    out
}

fn parse_opt(text: &str, line: usize) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse().map(Some).map_err(|_| Error::Parse {
        line,
        msg: format!("invalid real `{text}`"),
    })
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty metrics csv".into(),
    })?;
    if header != "method,strategy,setting,seed,task,auc,fpr95,acc,fgt" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    for (no, text) in lines {
        if text.trim().is_empty() {
            continue;
        }
        let line = no + 1;
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 9 fields, found {}", fields.len()),
            });
        }
        rows.push(MetricsRow {
            method: fields[0].to_string(),
            strategy: fields[1].to_string(),
            setting: fields[2].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid setting `{}`", fields[2]),
            })?,
            seed: fields[3].to_string(),
            task: fields[4].to_string(),
            auc: parse_opt(fields[5], line)?,
            fpr95: parse_opt(fields[6], line)?,
            acc: parse_opt(fields[7], line)?,
            fgt: parse_opt(fields[8], line)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceRow {
    pub method_a: String,
    pub method_b: String,
    pub metric: String,
    pub setting: usize,
    pub p_value: f64,
    /// "better", "worse" or "tied": sign of a's mean advantage over b in the
    /// metric's preferred direction.
    pub direction: String,
}

pub fn significance_to_csv(rows: &[SignificanceRow]) -> String {
    let mut sorted: Vec<&SignificanceRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.method_a, &a.method_b, &a.metric, a.setting).cmp(&(
            &b.method_a,
            &b.method_b,
            &b.metric,
            b.setting,
        ))
    });
    let mut out = String::from("method_a,method_b,metric,setting,p_value,direction\n");
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{:.6},{}",
            r.method_a, r.method_b, r.metric, r.setting, r.p_value, r.direction
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trip_and_order() {
        let rows = vec![
            MetricsRow {
                method: "er".into(),
                strategy: "max_logit".into(),
                setting: 4,
                seed: "mean".into(),
                task: "avg".into(),
                auc: Some(0.8),
                fpr95: Some(0.4),
                acc: Some(0.7),
                fgt: Some(0.1),
            },
            MetricsRow {
                method: "er".into(),
                strategy: "max_logit".into(),
                setting: 4,
                seed: "2".into(),
                task: "1".into(),
                auc: Some(0.75),
                fpr95: None,
                acc: Some(0.9),
                fgt: None,
            },
        ];
        let csv = metrics_to_csv(&rows);
        // Numeric seeds come before summaries.
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("er,max_logit,4,2,1"));
        assert!(lines[2].starts_with("er,max_logit,4,mean,avg"));

        let back = metrics_from_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].seed, "2");
        assert_eq!(back[0].auc, Some(0.75));
        assert_eq!(back[0].fpr95, None);
    }

    #[test]
    fn metrics_csv_rejects_malformed_input() {
        assert!(metrics_from_csv("bad header\n").is_err());
        let bad = "method,strategy,setting,seed,task,auc,fpr95,acc,fgt\nonly,three,fields\n";
        assert!(metrics_from_csv(bad).is_err());
    }

    #[test]
    fn significance_csv_is_deterministic() {
        let rows = vec![
            SignificanceRow {
                method_a: "b".into(),
                method_b: "ref".into(),
                metric: "auc".into(),
                setting: 8,
                p_value: 0.03,
                direction: "worse".into(),
            },
            SignificanceRow {
                method_a: "a".into(),
                method_b: "ref".into(),
                metric: "auc".into(),
                setting: 8,
                p_value: 0.2,
                direction: "tied".into(),
            },
        ];
        let csv = significance_to_csv(&rows);
        let again = significance_to_csv(&rows);
        assert_eq!(csv, again);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("a,"));
        assert!(lines[2].starts_with("b,"));
    }
}
