//! Rendering of aggregate and regression reports as CSV or aligned text.
//!
//! The CSV layout puts one category per row and one repair mode per
//! column, with a separate table per evaluation level.

use crate::outcomes::{AggregateReport, CategoryCounts, ModeAggregate, RegressionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown format {other:?} (expected csv or text)")),
        }
    }
}

/// Human-readable column label for a mode slug.
pub fn mode_label(slug: &str) -> String {
    match slug {
        "no_vq" => "No VQ".to_string(),
        "general_vq" => "General VQ".to_string(),
        "targeted_vq" => "Targeted VQs".to_string(),
        other => match other.strip_prefix("targeted_vq_r") {
            Some(n) => format!("Targeted VQs (rephrasing {n})"),
            None => other.to_string(),
        },
    }
}

fn mode_order(slug: &str) -> (u8, String) {
    let rank = match slug {
        "no_vq" => 0,
        "general_vq" => 1,
        "targeted_vq" => 2,
        _ => 3,
    };
    (rank, slug.to_string())
}

fn sorted_modes(report: &AggregateReport) -> Vec<&ModeAggregate> {
    let mut modes: Vec<&ModeAggregate> = report.modes.iter().collect();
    modes.sort_by_key(|m| mode_order(&m.mode));
    modes
}

const CATEGORY_ROWS: [&str; 4] = ["Runnable", "Attribute errors", "Name errors", "Other errors"];

fn category_value(counts: &CategoryCounts, row: &str) -> f64 {
    match row {
        "Runnable" => counts.runnable,
        "Attribute errors" => counts.attribute,
        "Name errors" => counts.name,
        _ => counts.other,
    }
}

fn fmt_count(v: f64) -> String {
    let rounded = (v * 100.0).round() / 100.0;
    if rounded.fract() == 0.0 {
        format!("{rounded:.1}")
    } else {
        format!("{rounded}")
    }
}

fn table(
    report: &AggregateReport,
    level: impl Fn(&ModeAggregate) -> &CategoryCounts,
    format: ReportFormat,
) -> String {
    let modes = sorted_modes(report);
    let headers: Vec<String> = std::iter::once("criteria".to_string())
        .chain(modes.iter().map(|m| mode_label(&m.mode)))
        .collect();
    let mut rows: Vec<Vec<String>> = vec![headers];
    for row_name in CATEGORY_ROWS {
        let mut row = vec![row_name.to_string()];
        for mode in &modes {
            row.push(fmt_count(category_value(level(mode), row_name)));
        }
        rows.push(row);
    }
    render_rows(&rows, format)
}

fn render_rows(rows: &[Vec<String>], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        if cell.contains(',') || cell.contains('"') {
                            format!("\"{}\"", cell.replace('"', "\"\""))
                        } else {
                            cell.clone()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n",
        ReportFormat::Text => {
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|col| rows.iter().map(|r| r[col].len()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for row in rows {
                let line: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(i, cell)| format!("{cell:<width$}", width = widths[i]))
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
            out
        }
    }
}

/// Test-normalized table (one category row per mode column).
pub fn render_test_level(report: &AggregateReport, format: ReportFormat) -> String {
    table(report, |m| &m.normalized, format)
}

/// Sample-level table.
pub fn render_sample_level(report: &AggregateReport, format: ReportFormat) -> String {
    table(report, |m| &m.sample_level, format)
}

/// Regression table: originally-correct samples by post-repair class.
pub fn render_regression(report: &RegressionReport, format: ReportFormat) -> String {
    let rows = vec![
        vec!["Error Type".to_string(), "Average # of samples".to_string()],
        vec![
            "From correct code to Assertion errors".to_string(),
            fmt_count(report.to_assertion),
        ],
        vec![
            "From correct code to Attribute errors".to_string(),
            fmt_count(report.to_attribute),
        ],
        vec![
            "From correct code to Name errors".to_string(),
            fmt_count(report.to_name),
        ],
        vec![
            "From correct code to Other errors".to_string(),
            fmt_count(report.to_other),
        ],
        vec!["Staying correct".to_string(), fmt_count(report.staying_correct)],
    ];
    render_rows(&rows, format)
}
