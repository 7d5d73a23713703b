//! Coverage / width summaries and per-unit interval records.
//!
//! Width quartiles use linear interpolation between closest ranks (the
//! "type 7" convention): for sorted widths `w` and probability `p`, the
//! quantile is `w[⌊h⌋] + (h − ⌊h⌋)(w[⌊h⌋+1] − w[⌊h⌋])` with `h = (len − 1)p`.

use std::fmt::Write as _;
use std::io;

use rand::seq::index;

use crate::conformal::PredictionInterval;
use crate::error::{Error, Result};
use crate::rng;

pub const QUANTILE_CONVENTION: &str = "type7-linear";
pub const REPORT_HEADER: [&str; 8] = ["dataset", "method", "alpha", "coverage", "q1", "median", "q3", "n_test"];
pub const RECORD_HEADER: [&str; 5] = ["index", "lower", "upper", "truth", "covered"];

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub dataset: String,
    pub method: String,
    pub alpha: f64,
    pub coverage: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub n_test: usize,
    /// Intervals whose search bracket edge was still conformal.
    pub truncated: usize,
    pub floor_events: usize,
}

/// Type-7 quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_lengths(intervals: &[PredictionInterval], y_test: &[f64]) -> Result<()> {
    if intervals.len() != y_test.len() {
        return Err(Error::LengthMismatch {
            left: intervals.len(),
            right: y_test.len(),
        });
    }
    Ok(())
}

/// Coverage (inclusive endpoints) and width quartiles.
pub fn evaluate(
    dataset: &str,
    method: &str,
    alpha: f64,
    intervals: &[PredictionInterval],
    y_test: &[f64],
) -> Result<EvaluationReport> {
    check_lengths(intervals, y_test)?;
    if intervals.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let covered = intervals.iter().zip(y_test).filter(|(iv, &y)| iv.contains(y)).count();
    let mut widths: Vec<f64> = intervals.iter().map(PredictionInterval::width).collect();
    widths.sort_by(f64::total_cmp);
    Ok(EvaluationReport {
        dataset: dataset.to_owned(),
        method: method.to_owned(),
        alpha,
        coverage: covered as f64 / intervals.len() as f64,
        q1: quantile_sorted(&widths, 0.25),
        median: quantile_sorted(&widths, 0.5),
        q3: quantile_sorted(&widths, 0.75),
        n_test: intervals.len(),
        truncated: intervals.iter().filter(|iv| iv.is_truncated()).count(),
        floor_events: intervals.iter().map(|iv| iv.floor_events).sum(),
    })
}

/// `12345.6 → "12,346"`; values below 1000 keep three decimals.
pub fn format_amount(v: f64) -> String {
    if v.abs() < 1000.0 {
        return format!("{v:.3}");
    }
    let digits = format!("{:.0}", v.abs());
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    if v < 0.0 {
        out.insert(0, '-');
    }
    out
}

/// `0.9 → "90%"`, `0.875 → "87.5%"`.
pub fn format_level(p: f64) -> String {
    let pct = format!("{:.1}", 100.0 * p);
    format!("{}%", pct.trim_end_matches('0').trim_end_matches('.'))
}

/// Rendered summary: an aligned text table and the CSV records.
#[derive(Debug, Clone)]
pub struct RenderedReport {
    pub table: String,
    pub csv: String,
}

/// Renders reports grouped by dataset (first appearance), then by nominal
/// coverage ascending, then by method (first appearance).
pub fn render_report(reports: &[EvaluationReport]) -> Result<RenderedReport> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to render".into()));
    }
    let first_seen = |key: &dyn Fn(&EvaluationReport) -> &str, r: &EvaluationReport| {
        reports.iter().position(|o| key(o) == key(r)).unwrap()
    };
    let mut ordered: Vec<&EvaluationReport> = reports.iter().collect();
    ordered.sort_by(|a, b| {
        first_seen(&|r| &r.dataset, a)
            .cmp(&first_seen(&|r| &r.dataset, b))
            .then(b.alpha.total_cmp(&a.alpha))
            .then(first_seen(&|r| &r.method, a).cmp(&first_seen(&|r| &r.method, b)))
    });

    let header = [
        "Dataset",
        "Method",
        "1-alpha",
        "Empirical coverage",
        "1st quartile",
        "Median",
        "3rd quartile",
    ];
    let rows: Vec<[String; 7]> = ordered
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.method.clone(),
                format_level(1.0 - r.alpha),
                format!("{:.1}%", 100.0 * r.coverage),
                format_amount(r.q1),
                format_amount(r.median),
                format_amount(r.q3),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut table = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| if j < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header, &mut table);
    let rule = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(table, "{}", "-".repeat(rule));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut table);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for r in &ordered {
        w.write_record([
            r.dataset.clone(),
            r.method.clone(),
            r.alpha.to_string(),
            r.coverage.to_string(),
            r.q1.to_string(),
            r.median.to_string(),
            r.q3.to_string(),
            r.n_test.to_string(),
        ])?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("ascii csv");
    Ok(RenderedReport { table, csv })
}

/// One test unit for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalRecord {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub covered: bool,
}

pub fn interval_records(intervals: &[PredictionInterval], y_test: &[f64]) -> Result<Vec<IntervalRecord>> {
    check_lengths(intervals, y_test)?;
    Ok(intervals
        .iter()
        .zip(y_test)
        .enumerate()
        .map(|(index, (iv, &truth))| IntervalRecord {
            index,
            lower: iv.lower,
            upper: iv.upper,
            truth,
            covered: iv.contains(truth),
        })
        .collect())
}

/// Up to `size` records chosen by a seeded draw, in index order.
pub fn subsample_records(records: &[IntervalRecord], size: usize, seed: u64) -> Vec<IntervalRecord> {
    if size >= records.len() {
        return records.to_vec();
    }
    let mut picked = index::sample(&mut rng::child(seed, "subsample"), records.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| records[i]).collect()
}

pub fn write_records<W: io::Write>(out: W, records: &[IntervalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.truth.to_string(),
            u8::from(r.covered).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
