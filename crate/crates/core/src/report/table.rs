//! Tabular metric documents.
//!
//! CSV and Markdown cells use fixed 4-decimal formatting. JSON carries full
//! precision numbers so downstream tools can recompute exactly.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use super::{EvaluationReport, HorizonEvaluation};
use crate::metrics::Zone;
use crate::units::GlucoseUnit;

pub const TABLE_COLUMNS: [&str; 18] = [
    "model",
    "horizon_minutes",
    "rmse",
    "mae",
    "mard",
    "me",
    "mre",
    "gs_rmse",
    "clarke_A",
    "clarke_B",
    "clarke_C",
    "clarke_D",
    "clarke_E",
    "parkes_A",
    "parkes_B",
    "parkes_C",
    "parkes_D",
    "parkes_E",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl TableFormat {
    pub const ALL: [TableFormat; 3] = [TableFormat::Csv, TableFormat::Json, TableFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
            TableFormat::Markdown => "md",
        }
    }
}

/// Numeric cells of one row, glucose-valued ones converted to `unit`.
fn numeric_cells(h: &HorizonEvaluation, unit: GlucoseUnit) -> Vec<f64> {
    let g = |v: f64| unit.from_mgdl(v);
    let m = &h.metrics;
    let mut cells = vec![
        g(m.rmse),
        g(m.mae),
        m.mard_percent,
        g(m.me),
        m.mre_percent,
        g(h.gs_rmse),
    ];
    cells.extend(Zone::ALL.iter().map(|z| h.clarke.zone_percentages[z]));
    cells.extend(Zone::ALL.iter().map(|z| h.parkes.zone_percentages[z]));
    cells
}

fn fixed(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn text_rows(reports: &[EvaluationReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        for h in &r.horizons {
            let mut row = vec![r.model.clone(), h.horizon_minutes.to_string()];
            row.extend(numeric_cells(h, r.unit).into_iter().map(fixed));
            rows.push(row);
        }
    }
    rows
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders one row per (model, horizon) in report order.
pub fn metrics_table(reports: &[EvaluationReport], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = TABLE_COLUMNS.join(",");
            out.push('\n');
            for row in text_rows(reports) {
                let fields: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let units: Vec<&str> = {
                let mut u: Vec<&str> = reports.iter().map(|r| r.unit.label()).collect();
                u.dedup();
                u
            };
            if !units.is_empty() {
                let _ = writeln!(out, "Glucose unit: {}\n", units.join(", "));
            }
            let _ = writeln!(out, "| {} |", TABLE_COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(TABLE_COLUMNS.len()));
            for row in text_rows(reports) {
                let cells: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            out
        }
        TableFormat::Json => {
            let rows: Vec<Value> = reports
                .iter()
                .flat_map(|r| {
                    r.horizons.iter().map(move |h| {
                        let mut obj = Map::new();
                        obj.insert("model".into(), json!(r.model));
                        obj.insert("horizon_minutes".into(), json!(h.horizon_minutes));
                        obj.insert("unit".into(), json!(r.unit.label()));
                        obj.insert("config_hash".into(), json!(r.config_hash));
                        for (name, v) in TABLE_COLUMNS[2..].iter().zip(numeric_cells(h, r.unit)) {
                            obj.insert((*name).into(), json!(v));
                        }
                        Value::Object(obj)
                    })
                })
                .collect();
            let doc = json!({ "columns": TABLE_COLUMNS, "rows": rows });
            let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
            s.push('\n');
            s
        }
    }
}
