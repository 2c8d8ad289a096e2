//! Result summaries: per-cell means over seeds, paired method gains, and
//! the gain-versus-prevalence trend. A pure function of the results table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{HarnessError, Method, ResultRow, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone)]
struct CellSummary {
    kind: String,
    alpha: Option<f64>,
    prevalence_target: Option<f64>,
    disparity_target: Option<f64>,
    method: Method,
    n: usize,
    mean_accuracy: f64,
    std_accuracy: f64,
    mean_f1: f64,
    std_f1: f64,
    mean_realized_prevalence: Option<f64>,
    mean_realized_disparity: Option<f64>,
    pairs: usize,
    gain_accuracy_pp: Option<f64>,
    gain_f1_pp: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn group_label(row: &ResultRow) -> String {
    match row.kind.as_str() {
        "iid" => "iid".to_string(),
        "volume_skew" => format!("alpha={}", row.alpha.unwrap_or(f64::NAN)),
        _ => format!(
            "rho={} sigma={}",
            row.prevalence_target.unwrap_or(f64::NAN),
            row.disparity_target.unwrap_or(f64::NAN)
        ),
    }
}

/// Paired per-seed differences (prep minus baseline) for one grid cell.
fn paired_gains(
    baseline: &[&ResultRow],
    prep: &[&ResultRow],
) -> (usize, Option<f64>, Option<f64>) {
    let by_seed: BTreeMap<u64, &ResultRow> = baseline.iter().map(|r| (r.seed, *r)).collect();
    let mut acc = Vec::new();
    let mut f1 = Vec::new();
    for p in prep {
        if let Some(b) = by_seed.get(&p.seed) {
            if let (Some(pa), Some(ba), Some(pf), Some(bf)) =
                (p.macro_accuracy, b.macro_accuracy, p.macro_f1, b.macro_f1)
            {
                acc.push((pa - ba) * 100.0);
                f1.push((pf - bf) * 100.0);
            }
        }
    }
    if acc.is_empty() {
        (0, None, None)
    } else {
        (
            acc.len(),
            Some(acc.iter().sum::<f64>() / acc.len() as f64),
            Some(f1.iter().sum::<f64>() / f1.len() as f64),
        )
    }
}

fn summarize(table: &ResultTable) -> Result<Vec<CellSummary>, HarnessError> {
    // group rows by cell configuration in first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for row in table.rows.iter().filter(|r| r.is_ok()) {
        let key = format!("{}|{}", group_label(row), row.method);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(row);
    }

    let mut summaries = Vec::new();
    for key in order {
        let rows = &groups[&key];
        let first = rows[0];
        let accs: Vec<f64> = rows.iter().filter_map(|r| r.macro_accuracy).collect();
        let f1s: Vec<f64> = rows.iter().filter_map(|r| r.macro_f1).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        let (mean_f1, std_f1) = mean_std(&f1s);
        let realized_p: Vec<f64> = rows.iter().filter_map(|r| r.realized_prevalence).collect();
        let realized_d: Vec<f64> = rows.iter().filter_map(|r| r.realized_disparity).collect();

        // gains on prep summaries, against the same cell's baseline rows
        let (pairs, gain_accuracy_pp, gain_f1_pp) = if first.method == Method::Prep {
            let counterpart: Vec<&ResultRow> = table
                .rows
                .iter()
                .filter(|r| {
                    r.is_ok()
                        && r.method == Method::Baseline
                        && group_label(r) == group_label(first)
                })
                .collect();
            let (pairs, acc, f1) = paired_gains(&counterpart, rows);
            if pairs == 0 {
                return Err(HarnessError::Unpaired {
                    cell: group_label(first),
                    method: Method::Prep.to_string(),
                });
            }
            (pairs, acc, f1)
        } else {
            (0, None, None)
        };

        summaries.push(CellSummary {
            kind: first.kind.clone(),
            alpha: first.alpha,
            prevalence_target: first.prevalence_target,
            disparity_target: first.disparity_target,
            method: first.method,
            n: rows.len(),
            mean_accuracy,
            std_accuracy,
            mean_f1,
            std_f1,
            mean_realized_prevalence: (!realized_p.is_empty())
                .then(|| mean_std(&realized_p).0),
            mean_realized_disparity: (!realized_d.is_empty()).then(|| mean_std(&realized_d).0),
            pairs,
            gain_accuracy_pp,
            gain_f1_pp,
        });
    }
    Ok(summaries)
}

/// Mean gain per prevalence target (over its disparity cells), descending.
fn gain_trend(summaries: &[CellSummary]) -> Vec<(f64, f64, f64)> {
    let mut per_rho: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in summaries {
        if let (Some(rho), Some(ga), Some(gf)) =
            (s.prevalence_target, s.gain_accuracy_pp, s.gain_f1_pp)
        {
            let entry = per_rho
                .entry(rho.to_bits())
                .or_insert((rho, Vec::new(), Vec::new()));
            entry.1.push(ga);
            entry.2.push(gf);
        }
    }
    let mut out: Vec<(f64, f64, f64)> = per_rho
        .into_values()
        .map(|(rho, accs, f1s)| {
            (
                rho,
                accs.iter().sum::<f64>() / accs.len() as f64,
                f1s.iter().sum::<f64>() / f1s.len() as f64,
            )
        })
        .collect();
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    out
}

/// Render the summary in plain text or CSV.
pub fn report(table: &ResultTable, format: ReportFormat) -> Result<String, HarnessError> {
    if table.rows.is_empty() {
        return Err(HarnessError::InvalidPlan("results table is empty".into()));
    }
    let summaries = summarize(table)?;
    match format {
        ReportFormat::Csv => render_csv(&summaries),
        ReportFormat::Text => render_text(table, &summaries),
    }
}

fn render_csv(summaries: &[CellSummary]) -> Result<String, HarnessError> {
    let mut out = String::from(
        "kind,alpha,prevalence_target,disparity_target,method,n,\
         mean_accuracy,std_accuracy,mean_f1,std_f1,\
         mean_realized_prevalence,mean_realized_disparity,pairs,\
         gain_accuracy_pp,gain_f1_pp\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.kind,
            opt(s.alpha),
            opt(s.prevalence_target),
            opt(s.disparity_target),
            s.method,
            s.n,
            s.mean_accuracy,
            s.std_accuracy,
            s.mean_f1,
            s.std_f1,
            opt(s.mean_realized_prevalence),
            opt(s.mean_realized_disparity),
            s.pairs,
            opt(s.gain_accuracy_pp),
            opt(s.gain_f1_pp),
        );
    }
    Ok(out)
}

fn render_text(table: &ResultTable, summaries: &[CellSummary]) -> Result<String, HarnessError> {
    let mut out = String::new();
    let _ = writeln!(out, "== cell summaries (mean +/- std over seeds) ==");
    for s in summaries {
        let label = match s.kind.as_str() {
            "iid" => "iid".to_string(),
            "volume_skew" => format!("alpha={}", s.alpha.unwrap_or(f64::NAN)),
            _ => format!(
                "rho={} sigma={}",
                s.prevalence_target.unwrap_or(f64::NAN),
                s.disparity_target.unwrap_or(f64::NAN)
            ),
        };
        let realized = match (s.mean_realized_prevalence, s.mean_realized_disparity) {
            (Some(p), Some(d)) => format!("  realized=({p:.3}, {d:.3})"),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "{label:<26} {:<9} n={:<3} acc {:.4} +/- {:.4}  f1 {:.4} +/- {:.4}{realized}",
            s.method.to_string(),
            s.n,
            s.mean_accuracy,
            s.std_accuracy,
            s.mean_f1,
            s.std_f1,
        );
    }

    let gains: Vec<&CellSummary> = summaries.iter().filter(|s| s.pairs > 0).collect();
    if !gains.is_empty() {
        let _ = writeln!(out, "\n== prevalence-weighted gains (percentage points, paired seeds) ==");
        for s in &gains {
            let _ = writeln!(
                out,
                "rho={} sigma={}  pairs={}  acc {:+.2}  f1 {:+.2}",
                s.prevalence_target.unwrap_or(f64::NAN),
                s.disparity_target.unwrap_or(f64::NAN),
                s.pairs,
                s.gain_accuracy_pp.unwrap_or(f64::NAN),
                s.gain_f1_pp.unwrap_or(f64::NAN),
            );
        }
        let trend = gain_trend(summaries);
        if trend.len() >= 2 {
            let _ = writeln!(out, "\n== mean gain by prevalence target ==");
            for (rho, ga, gf) in &trend {
                let _ = writeln!(out, "rho={rho}  acc {ga:+.2}  f1 {gf:+.2}");
            }
            let rising = trend.last().unwrap().2 > trend.first().unwrap().2;
            let _ = writeln!(
                out,
                "gain increases as prevalence falls: {}",
                if rising { "yes" } else { "no" }
            );
        }
    }

    let failures: Vec<&ResultRow> = table.rows.iter().filter(|r| !r.is_ok()).collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\n== failed cells ==");
        for f in failures {
            let _ = writeln!(out, "{}: {}", f.cell, f.error.as_deref().unwrap_or("?"));
        }
    }
    Ok(out)
}
