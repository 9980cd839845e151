//! Trial report emission: trials.csv, summary.csv, and a static SVG
//! boxplot of per-class accuracy distributions.

use std::fs;
use std::io;
use std::path::Path;

use oad_core::eval::{ClassMap, SummaryRow, TrialReport, TrialRow};
use oad_core::segment::ClassLabel;
use oad_core::stats;

use crate::csvio;

#[derive(Debug)]
pub enum ReportError {
    Io(String, io::Error),
    Parse(String, String),
}

impl std::fmt::Display for ReportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReportError::Io(path, e) => write!(f, "{path}: {e}"),
            ReportError::Parse(path, msg) => write!(f, "{path}: {msg}"),
        }
    }
}

impl std::error::Error for ReportError {}

type Result<T> = std::result::Result<T, ReportError>;

fn class_name(report: &TrialReport, index: usize) -> String {
    report
        .class_map
        .name_of(index)
        .map(|c| c.as_str().to_string())
        .unwrap_or_else(|| format!("class{index}"))
}

pub fn write_trials_csv(path: &Path, report: &TrialReport) -> Result<()> {
    let display = path.display().to_string();
    let mut out = String::new();
    csvio::write_row(&mut out, &["model_seed", "test_subset", "class", "accuracy", "n_instances"]);
    for row in &report.rows {
        csvio::write_row(
            &mut out,
            &[
                &row.model_seed.to_string(),
                &row.test_subset.to_string(),
                &class_name(report, row.class_index),
                &format!("{:.6}", row.accuracy),
                &row.n_instances.to_string(),
            ],
        );
    }
    fs::write(path, out).map_err(|e| ReportError::Io(display, e))
}

/// Parse trials.csv back into rows (round-trip check and downstream use).
pub fn read_trials_csv(path: &Path, class_map: &ClassMap) -> Result<Vec<TrialRow>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| ReportError::Io(display.clone(), e))?;
    let (header, rows) = csvio::parse_document(&text)
        .ok_or_else(|| ReportError::Parse(display.clone(), "empty file".into()))?;
    let expect = ["model_seed", "test_subset", "class", "accuracy", "n_instances"];
    if header != expect {
        return Err(ReportError::Parse(display, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let bad = |what: &str| ReportError::Parse(display.clone(), format!("row {}: {what}", i + 2));
        if row.len() != 5 {
            return Err(bad("wrong field count"));
        }
        let class = ClassLabel::parse(&row[2]);
        out.push(TrialRow {
            model_seed: row[0].parse().map_err(|_| bad("bad model_seed"))?,
            test_subset: row[1].parse().map_err(|_| bad("bad test_subset"))?,
            class_index: class_map
                .index_of(&class)
                .ok_or_else(|| bad("unknown class"))?,
            accuracy: row[3].parse().map_err(|_| bad("bad accuracy"))?,
            n_instances: row[4].parse().map_err(|_| bad("bad n_instances"))?,
        });
    }
    Ok(out)
}

pub fn write_summary_csv(path: &Path, report: &TrialReport) -> Result<()> {
    let display = path.display().to_string();
    let mut out = String::new();
    csvio::write_row(&mut out, &["class", "mean", "std", "q1", "median", "q3"]);
    for row in &report.summary {
        csvio::write_row(
            &mut out,
            &[
                &class_name(report, row.class_index),
                &format!("{:.6}", row.mean),
                &format!("{:.6}", row.std),
                &format!("{:.6}", row.q1),
                &format!("{:.6}", row.median),
                &format!("{:.6}", row.q3),
            ],
        );
    }
    fs::write(path, out).map_err(|e| ReportError::Io(display, e))
}

/// Static boxplot: one box per class (q1..q3, median line, whiskers to
/// the min/max observed accuracy).
pub fn write_boxplot_svg(path: &Path, report: &TrialReport) -> Result<()> {
    let display = path.display().to_string();
    let width = 120 + report.summary.len() * 110;
    let height = 360usize;
    let (top, bottom, left) = (30.0, 310.0, 70.0);
    let y_of = |acc: f64| bottom - (bottom - top) * acc.clamp(0.0, 1.0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // Axis and gridlines at 0, 0.25, 0.5, 0.75, 1.
    for k in 0..=4 {
        let acc = k as f64 / 4.0;
        let y = y_of(acc);
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{acc:.2}</text>\n",
            width as f64 - 20.0,
            left - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n\
         <text x=\"18\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\" \
         transform=\"rotate(-90 18 {:.1})\" text-anchor=\"middle\">accuracy</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    ));

    for (i, row) in report.summary.iter().enumerate() {
        let cx = left + 60.0 + i as f64 * 110.0;
        let half = 28.0;
        let acc: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.class_index == row.class_index)
            .map(|r| r.accuracy)
            .collect();
        let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (y_lo, y_hi) = (y_of(lo), y_of(hi));
        let (y_q1, y_q3, y_med) = (y_of(row.q1), y_of(row.q3), y_of(row.median));
        svg.push_str(&format!(
            "<line x1=\"{cx:.1}\" y1=\"{y_lo:.1}\" x2=\"{cx:.1}\" y2=\"{y_hi:.1}\" stroke=\"black\"/>\n\
             <line x1=\"{:.1}\" y1=\"{y_lo:.1}\" x2=\"{:.1}\" y2=\"{y_lo:.1}\" stroke=\"black\"/>\n\
             <line x1=\"{:.1}\" y1=\"{y_hi:.1}\" x2=\"{:.1}\" y2=\"{y_hi:.1}\" stroke=\"black\"/>\n\
             <rect x=\"{:.1}\" y=\"{y_q3:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"#7aa6c2\" stroke=\"black\"/>\n\
             <line x1=\"{:.1}\" y1=\"{y_med:.1}\" x2=\"{:.1}\" y2=\"{y_med:.1}\" \
             stroke=\"black\" stroke-width=\"2\"/>\n\
             <text x=\"{cx:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{}</text>\n",
            cx - half / 2.0,
            cx + half / 2.0,
            cx - half / 2.0,
            cx + half / 2.0,
            cx - half,
            2.0 * half,
            (y_q1 - y_q3).max(1.0),
            cx - half,
            cx + half,
            bottom + 24.0,
            class_name(report, row.class_index),
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| ReportError::Io(display, e))
}

/// Write all three report artifacts into a directory.
pub fn emit_report(dir: &Path, report: &TrialReport) -> Result<()> {
    if report.rows.is_empty() {
        return Err(ReportError::Parse(
            dir.display().to_string(),
            "refusing to emit an empty report".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| ReportError::Io(dir.display().to_string(), e))?;
    write_trials_csv(&dir.join("trials.csv"), report)?;
    write_summary_csv(&dir.join("summary.csv"), report)?;
    write_boxplot_svg(&dir.join("boxplot.svg"), report)
}

/// Recompute summary stats from raw rows (consistency checks).
pub fn summary_from_rows(rows: &[TrialRow], n_classes: usize) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for class in 0..n_classes {
        let acc: Vec<f64> =
            rows.iter().filter(|r| r.class_index == class).map(|r| r.accuracy).collect();
        if acc.is_empty() {
            continue;
        }
        out.push(SummaryRow {
            class_index: class,
            mean: stats::mean(&acc),
            std: stats::std_dev(&acc),
            q1: stats::percentile(&acc, 25.0).unwrap(),
            median: stats::percentile(&acc, 50.0).unwrap(),
            q3: stats::percentile(&acc, 75.0).unwrap(),
        });
    }
    out
}
