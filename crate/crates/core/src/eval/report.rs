use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::{IterationDelta, MetricsReport};
use crate::error::Result;

#[derive(Serialize)]
struct ReportRow<'a> {
    row: &'a str,
    seed: Option<u64>,
    lambda_min: Option<f64>,
    lambda_max: Option<f64>,
    clamped: Option<bool>,
    identity: f64,
    identity_std: Option<f64>,
    success_pct: f64,
    lost_pct: f64,
    found_pct: f64,
}

/// One row per seed, then `mean`, `std` and `skipped` rows.
pub fn write_report_csv<W: Write>(report: &MetricsReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &report.per_seed {
        w.serialize(ReportRow {
            row: "seed",
            seed: Some(s.seed),
            lambda_min: Some(s.lambda_min),
            lambda_max: Some(s.lambda_max),
            clamped: Some(s.clamped),
            identity: s.identity.mean,
            identity_std: Some(s.identity.std),
            success_pct: s.success_pct,
            lost_pct: s.lost_pct,
            found_pct: s.found_pct,
        })?;
    }
    for (row, pick) in [("mean", 0), ("std", 1)] {
        let v = |m: &super::MeanStd| if pick == 0 { m.mean } else { m.std };
        w.serialize(ReportRow {
            row,
            seed: None,
            lambda_min: None,
            lambda_max: None,
            clamped: None,
            identity: v(&report.identity_similarity),
            identity_std: None,
            success_pct: v(&report.success_rate),
            lost_pct: v(&report.lost_pct),
            found_pct: v(&report.found_pct),
        })?;
    }
    for s in &report.skipped {
        w.write_record([
            "skipped",
            &s.seed.to_string(),
            "",
            "",
            "",
            "",
            "",
            "",
            "",
            &s.reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `.84 ± .19` style, two decimals without the leading zero for |x| < 1.
fn short(x: f64) -> String {
    let s = format!("{x:.2}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// Human-readable summary: identity similarity and classifier scores side by side.
pub fn render_report_table(report: &MetricsReport) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "direction: {}  target: {} ({} of {} attributes)  seeds: {}  skipped: {}",
        report.direction,
        report.target_attribute,
        report.target_index,
        report.attribute_count,
        report.per_seed.len(),
        report.skip_count()
    );
    let _ = writeln!(t, "| Identity similarity | Success (%) | Lost (%) | Found (%) |");
    let _ = writeln!(t, "|---|---|---|---|");
    let _ = writeln!(
        t,
        "| {} ± {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
        short(report.identity_similarity.mean),
        short(report.identity_similarity.std),
        report.success_rate.mean,
        report.success_rate.std,
        report.lost_pct.mean,
        report.lost_pct.std,
        report.found_pct.mean,
        report.found_pct.std
    );
    t
}

#[derive(Serialize)]
struct DeltaRow<'a> {
    snapshot: usize,
    direction: &'a str,
    identity_delta: f64,
    success_delta: f64,
    lost_delta: f64,
    found_delta: f64,
}

pub fn write_delta_csv<W: Write>(series: &[IterationDelta], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in series {
        w.serialize(DeltaRow {
            snapshot: d.index,
            direction: &d.direction,
            identity_delta: d.identity_delta,
            success_delta: d.success_delta,
            lost_delta: d.lost_delta,
            found_delta: d.found_delta,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Change relative to the first snapshot; negative lost/found means the later direction is cleaner.
pub fn render_delta_table(series: &[IterationDelta]) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "| Snapshot | Direction | Success Δ | Lost Δ | Found Δ | Identity Δ |");
    let _ = writeln!(t, "|---|---|---|---|---|---|");
    for d in series {
        let _ = writeln!(
            t,
            "| {} | {} | {:+.2} | {:+.2} | {:+.2} | {:+.3} |",
            d.index, d.direction, d.success_delta, d.lost_delta, d.found_delta, d.identity_delta
        );
    }
    t
}
