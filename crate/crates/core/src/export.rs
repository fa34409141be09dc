//! Tabular exports.
//!
//! Floats are written in scientific notation with 17 significant digits, which
//! parses back to the identical `f64`. Undefined values are empty fields.

use crate::cusum::{Boundary, CrossingReport, CusumPath, Side};
use crate::diagnostics::DiagnosticsReport;
use crate::engine::TraceEnsemble;
use serde::Serialize;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn finish(wtr: csv::Writer<Vec<u8>>) -> Result<String, ExportError> {
    let bytes = wtr
        .into_inner()
        .map_err(|e| ExportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8 for utf-8 input"))
}

/// `perm_id, step, subset_size, valid, plotted, beta_<label>…, sigma2, r2,
/// recursive_residual`. A trace that failed before its first step gets one
/// row with empty step fields.
pub fn trace_table(ens: &TraceEnsemble, labels: &[String]) -> Result<String, ExportError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["perm_id", "step", "subset_size", "valid", "plotted"]
        .map(String::from)
        .to_vec();
    header.extend(labels.iter().map(|l| format!("beta_{l}")));
    header.extend(["sigma2", "r2", "recursive_residual"].map(String::from));
    wtr.write_record(&header)?;
    for trace in &ens.traces {
        let valid = trace.is_valid().to_string();
        if trace.steps.is_empty() {
            let mut row = vec![trace.perm_id.to_string(), String::new(), String::new(), valid.clone()];
            row.resize(header.len(), String::new());
            wtr.write_record(&row)?;
            continue;
        }
        for (i, step) in trace.steps.iter().enumerate() {
            let index = i + 1;
            let mut row = vec![
                trace.perm_id.to_string(),
                index.to_string(),
                step.subset_size.to_string(),
                valid.clone(),
                (index >= ens.first_step).to_string(),
            ];
            row.extend(step.beta.iter().map(|&b| fmt_f64(b)));
            row.push(fmt_opt(step.sigma2));
            row.push(fmt_opt(step.r2));
            row.push(fmt_opt(step.recursive_residual));
            wtr.write_record(&row)?;
        }
    }
    finish(wtr)
}

/// One parsed row of a trace table.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub perm_id: usize,
    pub step: Option<usize>,
    pub subset_size: Option<usize>,
    pub valid: bool,
    pub plotted: bool,
    pub beta: Vec<f64>,
    pub sigma2: Option<f64>,
    pub r2: Option<f64>,
    pub recursive_residual: Option<f64>,
}

/// Reads a table written by [`trace_table`]; returns the coefficient labels
/// and the rows.
pub fn parse_trace_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<TraceRow>), ExportError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let bad_header = || ExportError::Parse {
        line: 1,
        message: "not a trace table header".into(),
    };
    let fixed = ["perm_id", "step", "subset_size", "valid", "plotted"];
    let tail = ["sigma2", "r2", "recursive_residual"];
    if header.len() < fixed.len() + tail.len() + 1
        || header[..fixed.len()] != fixed
        || header[header.len() - tail.len()..] != tail
    {
        return Err(bad_header());
    }
    let labels: Vec<String> = header[fixed.len()..header.len() - tail.len()]
        .iter()
        .map(|h| h.strip_prefix("beta_").map(String::from).ok_or_else(bad_header))
        .collect::<Result<_, _>>()?;
    let p = labels.len();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        let err = |message: String| ExportError::Parse { line, message };
        let opt_f = |s: &str| -> Result<Option<f64>, ExportError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(format!("bad number `{s}`")))
            }
        };
        let opt_u = |s: &str| -> Result<Option<usize>, ExportError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(format!("bad integer `{s}`")))
            }
        };
        let flag = |s: &str| -> Result<bool, ExportError> {
            match s {
                "true" => Ok(true),
                "false" | "" => Ok(false),
                other => Err(err(format!("bad flag `{other}`"))),
            }
        };
        let perm_id = opt_u(&record[0])?.ok_or_else(|| err("missing perm_id".into()))?;
        let beta_fields: Vec<Option<f64>> = (0..p)
            .map(|j| opt_f(&record[fixed.len() + j]))
            .collect::<Result<_, _>>()?;
        let step = opt_u(&record[1])?;
        let beta = if step.is_some() {
            beta_fields
                .into_iter()
                .map(|b| b.ok_or_else(|| err("missing coefficient".into())))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        rows.push(TraceRow {
            perm_id,
            step,
            subset_size: opt_u(&record[2])?,
            valid: flag(&record[3])?,
            plotted: flag(&record[4])?,
            beta,
            sigma2: opt_f(&record[fixed.len() + p])?,
            r2: opt_f(&record[fixed.len() + p + 1])?,
            recursive_residual: opt_f(&record[fixed.len() + p + 2])?,
        });
    }
    Ok((labels, rows))
}

/// Path samples with the boundary values and each path's crossing flag.
pub fn cusum_table(
    paths: &[CusumPath],
    reports: &[CrossingReport],
    boundary: &Boundary,
) -> Result<String, ExportError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "perm_id",
        "t",
        "value",
        "boundary_upper",
        "boundary_lower",
        "crossed",
    ])?;
    for (path, report) in paths.iter().zip(reports) {
        let crossed = report.crossed.to_string();
        for (t, v) in path.samples() {
            wtr.write_record([
                path.perm_id.to_string(),
                fmt_f64(t),
                fmt_f64(v),
                fmt_f64(boundary.upper(t)),
                fmt_f64(boundary.lower(t)),
                crossed.clone(),
            ])?;
        }
    }
    finish(wtr)
}

pub fn crossing_table(reports: &[CrossingReport]) -> Result<String, ExportError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["perm_id", "crossed", "first_crossing_t", "side"])?;
    for r in reports {
        wtr.write_record([
            r.perm_id.to_string(),
            r.crossed.to_string(),
            fmt_opt(r.first_crossing_t),
            match r.side {
                Some(Side::Upper) => "upper".into(),
                Some(Side::Lower) => "lower".into(),
                None => String::new(),
            },
        ])?;
    }
    finish(wtr)
}

pub fn diagnostics_table(report: &DiagnosticsReport) -> Result<String, ExportError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "row_id",
        "leverage",
        "high_leverage",
        "standardized_residual",
        "studentized_deleted_residual",
        "cook_distance",
        "dffit",
    ])?;
    for o in &report.observations {
        wtr.write_record([
            o.row_id.clone(),
            fmt_f64(o.leverage),
            o.high_leverage.to_string(),
            fmt_f64(o.standardized_residual),
            fmt_f64(o.studentized_deleted_residual),
            fmt_f64(o.cook_distance),
            fmt_f64(o.dffit),
        ])?;
    }
    finish(wtr)
}

/// Final estimates of a full and a reduced fit, side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub quantity: String,
    pub full: Option<f64>,
    pub reduced: Option<f64>,
}

pub fn delta_table(rows: &[DeltaRow]) -> Result<String, ExportError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["quantity", "full", "reduced", "delta"])?;
    for r in rows {
        let delta = match (r.full, r.reduced) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        wtr.write_record([
            r.quantity.clone(),
            fmt_opt(r.full),
            fmt_opt(r.reduced),
            fmt_opt(delta),
        ])?;
    }
    finish(wtr)
}

#[derive(Serialize)]
struct StepJson<'a> {
    step: usize,
    subset_size: usize,
    plotted: bool,
    beta: &'a [f64],
    sigma2: Option<f64>,
    r2: Option<f64>,
    recursive_residual: Option<f64>,
}

#[derive(Serialize)]
struct TraceJson<'a> {
    perm_id: usize,
    permutation: Vec<usize>,
    valid: bool,
    failure: Option<String>,
    steps: Vec<StepJson<'a>>,
}

#[derive(Serialize)]
struct EnsembleJson<'a> {
    labels: &'a [String],
    method: String,
    trim_alpha: f64,
    first_plotted_step: usize,
    traces: Vec<TraceJson<'a>>,
}

pub fn traces_json(ens: &TraceEnsemble, labels: &[String]) -> Result<String, ExportError> {
    let traces = ens
        .traces
        .iter()
        .map(|t| TraceJson {
            perm_id: t.perm_id,
            permutation: t.perm.one_based(),
            valid: t.is_valid(),
            failure: t.failure.as_ref().map(|e| e.to_string()),
            steps: t
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| StepJson {
                    step: i + 1,
                    subset_size: s.subset_size,
                    plotted: i + 1 >= ens.first_step,
                    beta: s.beta.as_slice(),
                    sigma2: s.sigma2,
                    r2: s.r2,
                    recursive_residual: s.recursive_residual,
                })
                .collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&EnsembleJson {
        labels,
        method: ens.method.to_string(),
        trim_alpha: ens.trim_alpha,
        first_plotted_step: ens.first_step,
        traces,
    })?)
}

#[derive(Serialize)]
struct CusumJson<'a> {
    /// The crossing probabilities assume Gaussian errors and a large sample.
    assumes_gaussian: bool,
    boundary: &'a Boundary,
    paths: Vec<PathJson<'a>>,
}

#[derive(Serialize)]
struct PathJson<'a> {
    perm_id: usize,
    sigma_hat: f64,
    knots: &'a [(f64, f64)],
    crossing: &'a CrossingReport,
}

pub fn cusum_json(
    paths: &[CusumPath],
    reports: &[CrossingReport],
    boundary: &Boundary,
) -> Result<String, ExportError> {
    Ok(serde_json::to_string_pretty(&CusumJson {
        assumes_gaussian: true,
        boundary,
        paths: paths
            .iter()
            .zip(reports)
            .map(|(p, r)| PathJson {
                perm_id: p.perm_id,
                sigma_hat: p.sigma_hat,
                knots: &p.knots,
                crossing: r,
            })
            .collect(),
    })?)
}
