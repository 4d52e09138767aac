//! JSON and CSV formats for models, priors, predictive tables and reports.
//!
//! Floats are written with 17 significant digits, so every finite value
//! reads back bit for bit and identical inputs give identical files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::dominator::DominanceReport;
use crate::error::{invalid, schema, Result};
use crate::functionals::{ExtendedReal, RiskProfile};
use crate::model::{validate_model, ModelTable, OutcomeSpace, PredictiveTable, Prior};
use crate::predictive::{AnnealStep, LimitReport, RowKind};
use crate::solver::{SolverResult, TracePoint};

/// Pretty JSON whose floats use a fixed round-trip format.
struct FixedFloatFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn end_object_key<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_key(writer)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes with the fixed float format and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let formatter = FixedFloatFormatter {
        inner: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    parse_json(&text)
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        schema(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    theta_labels: Vec<String>,
    probs: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    labels: Vec<String>,
    weights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictiveFile {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    q: Vec<Vec<f64>>,
}

/// Parses a model without checking normalization or reachability; use
/// [`validate_model`] on the result, or [`parse_model`] to do both.
pub fn parse_model_unchecked(text: &str) -> Result<ModelTable> {
    let file: ModelFile = parse_json(text)?;
    let space = OutcomeSpace::new(file.x_labels, file.y_labels)?;
    ModelTable::new(space, file.theta_labels, file.probs)
}

pub fn parse_model(text: &str) -> Result<ModelTable> {
    let m = parse_model_unchecked(text)?;
    validate_model(&m).into_result()?;
    Ok(m)
}

pub fn load_model_unchecked(path: &Path) -> Result<ModelTable> {
    parse_model_unchecked(&fs::read_to_string(path)?)
}

/// Loads and validates a model file.
pub fn load_model(path: &Path) -> Result<ModelTable> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn model_json(m: &ModelTable) -> Result<String> {
    to_json_string(&ModelFile {
        x_labels: m.space().x_labels().to_vec(),
        y_labels: m.space().y_labels().to_vec(),
        theta_labels: m.theta_labels().to_vec(),
        probs: m.nested_probs(),
    })
}

pub fn save_model(path: &Path, m: &ModelTable) -> Result<()> {
    write_atomic(path, model_json(m)?.as_bytes())
}

fn check_label_match(field: &str, found: &[String], expected: &[String]) -> Result<()> {
    if found != expected {
        return Err(schema(
            field,
            format!("labels {found:?} do not match the model's {expected:?}"),
        ));
    }
    Ok(())
}

/// Loads a prior and checks its labels against the model's parameter grid.
pub fn load_prior(path: &Path, m: &ModelTable) -> Result<Prior> {
    let file: PriorFile = read_json(path)?;
    check_label_match("labels", &file.labels, m.theta_labels())?;
    Prior::new(file.weights)
}

pub fn prior_json(m: &ModelTable, prior: &Prior) -> Result<String> {
    to_json_string(&PriorFile {
        labels: m.theta_labels().to_vec(),
        weights: prior.weights().to_vec(),
    })
}

pub fn save_prior(path: &Path, m: &ModelTable, prior: &Prior) -> Result<()> {
    write_atomic(path, prior_json(m, prior)?.as_bytes())
}

/// Loads a predictive table and checks its labels against the model.
pub fn load_predictive(path: &Path, m: &ModelTable) -> Result<PredictiveTable> {
    let file: PredictiveFile = read_json(path)?;
    check_label_match("x_labels", &file.x_labels, m.space().x_labels())?;
    check_label_match("y_labels", &file.y_labels, m.space().y_labels())?;
    if file.q.len() != m.k() || file.q.iter().any(|r| r.len() != m.l()) {
        return Err(schema(
            "q",
            format!("expected a {} x {} table", m.k(), m.l()),
        ));
    }
    PredictiveTable::from_rows(file.q)
}

fn predictive_file(m: &ModelTable, q: &PredictiveTable) -> PredictiveFile {
    PredictiveFile {
        x_labels: m.space().x_labels().to_vec(),
        y_labels: m.space().y_labels().to_vec(),
        q: q.rows(),
    }
}

pub fn predictive_json(m: &ModelTable, q: &PredictiveTable) -> Result<String> {
    to_json_string(&predictive_file(m, q))
}

pub fn save_predictive(path: &Path, m: &ModelTable, q: &PredictiveTable) -> Result<()> {
    write_atomic(path, predictive_json(m, q)?.as_bytes())
}

/// A risk as JSON: a number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RiskValue {
    Finite(f64),
    Infinite(&'static str),
}

impl From<ExtendedReal> for RiskValue {
    fn from(r: ExtendedReal) -> Self {
        match r.finite() {
            Some(v) => RiskValue::Finite(v),
            None => RiskValue::Infinite("inf"),
        }
    }
}

pub fn csv_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_risk(r: ExtendedReal) -> String {
    r.finite().map_or_else(|| "inf".to_string(), csv_number)
}

/// Renders a header and records as CSV text.
pub fn csv_string<I, R>(header: &[&str], records: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for r in records {
        w.write_record(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("records are UTF-8"))
}

fn csv_error(e: csv::Error) -> crate::error::Error {
    invalid(format!("csv: {e}"))
}

pub fn risk_profile_csv(m: &ModelTable, profile: &RiskProfile) -> Result<String> {
    csv_string(
        &["theta_label", "risk"],
        m.theta_labels()
            .iter()
            .zip(&profile.risks)
            .map(|(label, &r)| [label.clone(), csv_risk(r)]),
    )
}

#[derive(Serialize)]
struct RiskEntry<'a> {
    theta_label: &'a str,
    risk: RiskValue,
}

#[derive(Serialize)]
struct RiskFile<'a> {
    risks: Vec<RiskEntry<'a>>,
    sup_risk: RiskValue,
}

pub fn risk_profile_json(m: &ModelTable, profile: &RiskProfile) -> Result<String> {
    to_json_string(&RiskFile {
        risks: m
            .theta_labels()
            .iter()
            .zip(&profile.risks)
            .map(|(label, &r)| RiskEntry {
                theta_label: label,
                risk: r.into(),
            })
            .collect(),
        sup_risk: profile.sup().into(),
    })
}

/// Columns `theta_label, risk_q, risk_dominating, relation`, where the
/// report compares the dominating predictive (`r1`) against `q` (`r2`).
pub fn comparison_csv(report: &DominanceReport) -> Result<String> {
    csv_string(
        &["theta_label", "risk_q", "risk_dominating", "relation"],
        report.entries.iter().map(|e| {
            [
                e.theta_label.clone(),
                csv_risk(e.r2),
                csv_risk(e.r1),
                e.relation.symbol().to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct SymmetrizedFile<'a> {
    weights: &'a [f64],
    objective: f64,
}

#[derive(Serialize)]
struct SolverResultFile<'a> {
    theta_labels: &'a [String],
    weights: &'a [f64],
    objective: f64,
    certificate_gap: f64,
    feasible_gap: f64,
    floor: f64,
    iterations: usize,
    converged: bool,
    support_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetrized: Option<SymmetrizedFile<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [TracePoint]>,
}

fn solver_result_file<'a>(
    m: &'a ModelTable,
    r: &'a SolverResult,
    with_trace: bool,
) -> SolverResultFile<'a> {
    SolverResultFile {
        theta_labels: m.theta_labels(),
        weights: r.prior.weights(),
        objective: r.objective,
        certificate_gap: r.certificate_gap,
        feasible_gap: r.feasible_gap,
        floor: r.floor,
        iterations: r.iterations,
        converged: r.converged,
        support_size: r.support_size(),
        symmetrized: r.symmetrized.as_ref().map(|s| SymmetrizedFile {
            weights: s.prior.weights(),
            objective: s.objective,
        }),
        trace: with_trace.then_some(r.trace.as_slice()),
    }
}

pub fn solver_result_json(m: &ModelTable, r: &SolverResult, with_trace: bool) -> Result<String> {
    to_json_string(&solver_result_file(m, r, with_trace))
}

/// Prior histogram: `theta_label, weight`.
pub fn prior_csv(m: &ModelTable, prior: &Prior) -> Result<String> {
    csv_string(
        &["theta_label", "weight"],
        m.theta_labels()
            .iter()
            .zip(prior.weights())
            .map(|(label, &w)| [label.clone(), csv_number(w)]),
    )
}

#[derive(Serialize)]
struct LimitReportFile<'a> {
    predictive: PredictiveFile,
    row_kinds: &'a [RowKind],
    trace: &'a [AnnealStep],
    converged: bool,
}

pub fn limit_report_json(m: &ModelTable, report: &LimitReport) -> Result<String> {
    to_json_string(&LimitReportFile {
        predictive: predictive_file(m, &report.predictive),
        row_kinds: &report.row_kinds,
        trace: &report.trace,
        converged: report.converged,
    })
}
