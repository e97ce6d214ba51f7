//! Cohort ingestion and result serialization.
//!
//! Cohorts come in as delimited text with an `id` column, a value column,
//! and an optional score column. Results go out as a versioned JSON document
//! (the lossless format of record, `schema_version` "1") or as a flat tidy
//! CSV with one row per (method, K, statistic).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accuracy::AccuracyReport;
use crate::error::{Error, Result};
use crate::estimators::Cohort;

/// Current serialization schema version.
pub const SCHEMA_VERSION: &str = "1";

/// Options for [`read_cohort`].
#[derive(Debug, Clone)]
pub struct ReadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub id_column: String,
    pub value_column: String,
    pub score_column: String,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            delimiter: b',',
            has_header: true,
            id_column: "id".into(),
            value_column: "v".into(),
            score_column: "s".into(),
        }
    }
}

/// Reads a cohort file. Every malformed cell is reported with its row and
/// column; nothing is silently coerced.
pub fn read_cohort(path: &Path, options: &ReadOptions) -> Result<Cohort> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Data(format!("cannot open cohort file {}: {e}", path.display()))
    })?;
    read_cohort_from(file, options)
}

/// Same as [`read_cohort`], from any reader.
pub fn read_cohort_from<R: std::io::Read>(reader: R, options: &ReadOptions) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(false)
        .from_reader(reader);

    // Column positions: by header name, or positional id,v,s without one.
    let (v_pos, s_pos) = if options.has_header {
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("cannot read header: {e}")))?;
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let v_pos = find(&options.value_column).ok_or_else(|| {
            Error::Data(format!(
                "value column '{}' not found in header",
                options.value_column
            ))
        })?;
        (v_pos, find(&options.score_column))
    } else {
        (1, Some(2))
    };

    let mut values = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut score_rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let raw_v = record.get(v_pos).ok_or_else(|| Error::Parse {
            row,
            column: options.value_column.clone(),
            message: "missing value field".into(),
        })?;
        let v: f64 = raw_v.trim().parse().map_err(|_| Error::Parse {
            row,
            column: options.value_column.clone(),
            message: format!("'{raw_v}' is not a number"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Parse {
                row,
                column: options.value_column.clone(),
                message: format!("assay value must be finite and >= 0, got {v}"),
            });
        }
        values.push(v);
        if let Some(sp) = s_pos {
            match record.get(sp).map(str::trim) {
                Some(raw) if !raw.is_empty() => {
                    let s: f64 = raw.parse().map_err(|_| Error::Parse {
                        row,
                        column: options.score_column.clone(),
                        message: format!("'{raw}' is not a number"),
                    })?;
                    if !s.is_finite() {
                        return Err(Error::Parse {
                            row,
                            column: options.score_column.clone(),
                            message: "score must be finite".into(),
                        });
                    }
                    scores.push(s);
                    score_rows += 1;
                }
                _ => {}
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Data("cohort file contains no rows".into()));
    }
    if score_rows > 0 && score_rows != values.len() {
        return Err(Error::Data(format!(
            "score column present for {score_rows} of {} rows; it must cover all rows or none",
            values.len()
        )));
    }
    Cohort::new(values, (score_rows > 0).then_some(scores))
}

/// One efficiency result row of a [`ResultDocument`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    pub method: String,
    pub k: usize,
    /// Estimation route: analytic, convolution, beta-formula, monte-carlo.
    pub estimator: String,
    /// Absent when the estimator could not run (see `note`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prevalence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EfficiencyRecord {
    pub fn new(method: &str, k: usize, estimator: &str, phi: f64) -> Self {
        EfficiencyRecord {
            method: method.into(),
            k,
            estimator: estimator.into(),
            phi: Some(phi),
            sd: None,
            ci_lower: None,
            ci_upper: None,
            theta: None,
            lambda: None,
            spearman: None,
            prevalence: None,
            score: None,
            note: None,
        }
    }
}

/// One accuracy result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub method: String,
    pub k: usize,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sens: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub npv: Option<f64>,
    pub misclassification: f64,
    pub counts: AccuracyReport,
}

impl AccuracyRecord {
    pub fn from_report(method: &str, k: usize, sigma: f64, report: &AccuracyReport) -> Self {
        AccuracyRecord {
            method: method.into(),
            k,
            sigma,
            sens: report.sens(),
            spec: report.spec(),
            ppv: report.ppv(),
            npv: report.npv(),
            misclassification: report.misclassification(),
            counts: *report,
        }
    }
}

/// A complete, reproducible run: metadata plus result rows.
///
/// Serialization is deterministic (parameters are kept in a sorted map and
/// records in insertion order), so identical runs produce identical bytes.
/// `timestamp` stays empty unless a caller explicitly sets it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: String,
    pub command: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub efficiency: Vec<EfficiencyRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy: Vec<AccuracyRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl ResultDocument {
    pub fn new(command: &str, seed: u64) -> Self {
        ResultDocument {
            schema_version: SCHEMA_VERSION.into(),
            command: command.into(),
            seed,
            parameters: BTreeMap::new(),
            efficiency: Vec::new(),
            accuracy: Vec::new(),
            timestamp: None,
        }
    }

    pub fn set_parameter(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.into(), value.to_string());
    }
}

/// Output format for [`write_results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Parameter(format!(
                "unknown format '{other}' (expected json or csv)"
            ))),
        }
    }
}

/// Writes a document to `writer`. JSON round-trips losslessly through
/// [`read_results`]; CSV is a flat export.
pub fn write_results<W: Write>(
    doc: &ResultDocument,
    format: OutputFormat,
    writer: &mut W,
) -> Result<()> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *writer, doc)
                .map_err(|e| Error::Data(format!("cannot serialize results: {e}")))?;
            writeln!(writer)?;
        }
        OutputFormat::Csv => write_csv(doc, writer)?,
    }
    Ok(())
}

/// Writes a document to a file path.
pub fn write_results_to_path(doc: &ResultDocument, format: OutputFormat, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_results(doc, format, &mut file)
}

/// Reads back a JSON document produced by [`write_results`].
pub fn read_results(path: &Path) -> Result<ResultDocument> {
    let file = std::fs::File::open(path)?;
    serde_json::from_reader(file)
        .map_err(|e| Error::Data(format!("cannot parse result document: {e}")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_csv<W: Write>(doc: &ResultDocument, writer: &mut W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "kind",
        "method",
        "k",
        "statistic",
        "value",
        "theta",
        "lambda",
        "sigma",
        "score",
        "estimator",
        "note",
    ])
    .map_err(csv_err)?;
    for rec in &doc.efficiency {
        let stats = [
            ("phi", fmt_opt(rec.phi)),
            ("sd", fmt_opt(rec.sd)),
            ("ci_lower", fmt_opt(rec.ci_lower)),
            ("ci_upper", fmt_opt(rec.ci_upper)),
            ("spearman", fmt_opt(rec.spearman)),
            ("prevalence", fmt_opt(rec.prevalence)),
        ];
        for (name, value) in stats {
            if value.is_empty() && name != "phi" {
                continue;
            }
            w.write_record([
                "efficiency",
                &rec.method,
                &rec.k.to_string(),
                name,
                &value,
                &fmt_opt(rec.theta),
                &fmt_opt(rec.lambda),
                "",
                rec.score.as_deref().unwrap_or(""),
                &rec.estimator,
                rec.note.as_deref().unwrap_or(""),
            ])
            .map_err(csv_err)?;
        }
    }
    for rec in &doc.accuracy {
        let stats = [
            ("sens", fmt_opt(rec.sens)),
            ("spec", fmt_opt(rec.spec)),
            ("ppv", fmt_opt(rec.ppv)),
            ("npv", fmt_opt(rec.npv)),
            ("misclassification", format!("{}", rec.misclassification)),
            ("tp", rec.counts.tp.to_string()),
            ("fp", rec.counts.fp.to_string()),
            ("tn", rec.counts.tn.to_string()),
            ("fn", rec.counts.fn_.to_string()),
        ];
        for (name, value) in stats {
            w.write_record([
                "accuracy",
                &rec.method,
                &rec.k.to_string(),
                name,
                &value,
                "",
                "",
                &rec.sigma.to_string(),
                "",
                "simulation",
                "",
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("cannot write CSV: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_small_cohort_with_scores() {
        let data = "id,v,s\na,200,0.1\nb,1200,0.9\nc,800,0.5\n";
        let cohort = read_cohort_from(data.as_bytes(), &ReadOptions::default()).unwrap();
        assert_eq!(cohort.len(), 3);
        assert_eq!(cohort.values(), &[200.0, 1200.0, 800.0]);
        assert_eq!(cohort.scores().unwrap(), &[0.1, 0.9, 0.5]);
    }

    #[test]
    fn negative_value_names_the_row() {
        let data = "id,v\na,-5\n";
        let err = read_cohort_from(data.as_bytes(), &ReadOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "v");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_value_names_row_and_column() {
        let data = "id,v\na,100\nb,oops\n";
        let err = read_cohort_from(data.as_bytes(), &ReadOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "v");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_score_column_yields_scoreless_cohort() {
        let data = "id,v\na,100\nb,300\n";
        let cohort = read_cohort_from(data.as_bytes(), &ReadOptions::default()).unwrap();
        assert!(cohort.scores().is_none());
    }

    #[test]
    fn mixed_score_presence_is_rejected() {
        let data = "id,v,s\na,100,0.5\nb,300,\n";
        assert!(matches!(
            read_cohort_from(data.as_bytes(), &ReadOptions::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn headerless_files_use_positional_columns() {
        let data = "a,100,0.5\nb,300,0.7\n";
        let opts = ReadOptions {
            has_header: false,
            ..ReadOptions::default()
        };
        let cohort = read_cohort_from(data.as_bytes(), &opts).unwrap();
        assert_eq!(cohort.values(), &[100.0, 300.0]);
        assert_eq!(cohort.scores().unwrap(), &[0.5, 0.7]);
    }

    #[test]
    fn empty_document_serializes_and_round_trips() {
        let mut doc = ResultDocument::new("sim-efficiency", 42);
        doc.set_parameter("theta", 400.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_results_to_path(&doc, OutputFormat::Json, &path).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn json_round_trip_preserves_records_losslessly() {
        let mut doc = ResultDocument::new("analyze", 7);
        let mut rec = EfficiencyRecord::new("mp", 2, "monte-carlo", 0.1 + 0.2);
        rec.ci_lower = Some(0.543_813_115_685_044_9);
        rec.ci_upper = Some(0.9999999999999999);
        doc.efficiency.push(rec);
        doc.accuracy.push(AccuracyRecord::from_report(
            "mp",
            5,
            0.1,
            &AccuracyReport::from_counts(10, 2, 80, 8),
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        write_results_to_path(&doc, OutputFormat::Json, &path).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn identical_documents_produce_identical_bytes() {
        let mut doc = ResultDocument::new("sim-error", 3);
        doc.set_parameter("k", 5);
        doc.efficiency.push(EfficiencyRecord::new("mpa", 3, "convolution", 0.61037));
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_results(&doc, OutputFormat::Json, &mut a).unwrap();
        write_results(&doc, OutputFormat::Json, &mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        let mut d = Vec::new();
        write_results(&doc, OutputFormat::Csv, &mut c).unwrap();
        write_results(&doc, OutputFormat::Csv, &mut d).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn csv_export_has_one_row_per_statistic() {
        let mut doc = ResultDocument::new("sim-efficiency", 1);
        let mut rec = EfficiencyRecord::new("mp", 2, "monte-carlo", 0.78);
        rec.ci_lower = Some(0.7);
        rec.ci_upper = Some(0.85);
        doc.efficiency.push(rec);
        let mut out = Vec::new();
        write_results(&doc, OutputFormat::Csv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4); // header + phi + ci_lower + ci_upper
        assert!(lines[1].starts_with("efficiency,mp,2,phi,0.78"));
    }
}
