//! Corpus reports and their CSV / JSON renderings.
//!
//! CSV layout: `#`-prefixed preamble lines carrying the tool version and the
//! run parameters as JSON, the fixed header
//! `path,width,height,alpha,beta,gamma,label,score,duration_ms,error`, one
//! row per file, and for classification runs a trailing `# summary` line.
//! Absent values are empty fields.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::blur::Label;
use crate::classify::{FeatureParams, FeatureVector};
use crate::error::{Error, Result};
use crate::features::FeatureSet;

pub const CSV_COLUMNS: [&str; 10] =
    ["path", "width", "height", "alpha", "beta", "gamma", "label", "score", "duration_ms", "error"];

const PARAMS_PREFIX: &str = "# run_params ";
const SUMMARY_PREFIX: &str = "# summary ";

/// Everything that determines the feature values of a run. Worker count is
/// deliberately absent: reports must not depend on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub inputs: Vec<String>,
    pub globs: Vec<String>,
    pub features: FeatureSet,
    pub params: FeatureParams,
    /// Classifier description for classification runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub path: String,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub label: Option<Label>,
    pub score: Option<f64>,
    pub duration_ms: Option<u64>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn feature_vector(&self, params: &FeatureParams) -> FeatureVector {
        FeatureVector {
            image_id: self.path.clone(),
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            params: params.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub clear: usize,
    pub blurry: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub tool_version: String,
    pub run_params: RunParams,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(field: &str, column: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("bad value `{field}` in column {column}")))
}

impl CorpusReport {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn compute_summary(&self) -> Summary {
        let mut s = Summary::default();
        for row in &self.rows {
            match (&row.error, row.label) {
                (Some(_), _) => s.failed += 1,
                (None, Some(Label::Clear)) => s.clear += 1,
                (None, Some(Label::Blurry)) => s.blurry += 1,
                (None, None) => {}
            }
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# geoblur {}", self.tool_version)?;
        writeln!(out, "{PARAMS_PREFIX}{}", serde_json::to_string(&self.run_params)?)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(CSV_COLUMNS)?;
            for r in &self.rows {
                w.write_record([
                    r.path.clone(),
                    opt(&r.width),
                    opt(&r.height),
                    opt(&r.alpha),
                    opt(&r.beta),
                    opt(&r.gamma),
                    opt(&r.label),
                    opt(&r.score),
                    opt(&r.duration_ms),
                    opt(&r.error),
                ])?;
            }
            w.flush()?;
        }
        if let Some(s) = &self.summary {
            writeln!(out, "{SUMMARY_PREFIX}{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        BufReader::new(input).read_to_string(&mut text)?;
        let mut tool_version = String::new();
        let mut run_params = None;
        let mut summary = None;
        for line in text.as_bytes().lines() {
            let line = line?;
            if let Some(v) = line.strip_prefix("# geoblur ") {
                tool_version = v.trim().to_string();
            } else if let Some(json) = line.strip_prefix(PARAMS_PREFIX) {
                run_params = Some(serde_json::from_str(json)?);
            } else if let Some(json) = line.strip_prefix(SUMMARY_PREFIX) {
                summary = Some(serde_json::from_str(json)?);
            }
        }
        let run_params: RunParams = run_params
            .ok_or_else(|| Error::InvalidArgument("report CSV lacks the `# run_params` line".into()))?;

        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_COLUMNS {
            return Err(Error::InvalidArgument(format!("unexpected report columns: {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            rows.push(ReportRow {
                path: f(0).to_string(),
                width: parse_opt(f(1), "width")?,
                height: parse_opt(f(2), "height")?,
                alpha: parse_opt(f(3), "alpha")?,
                beta: parse_opt(f(4), "beta")?,
                gamma: parse_opt(f(5), "gamma")?,
                label: parse_opt(f(6), "label")?,
                score: parse_opt(f(7), "score")?,
                duration_ms: parse_opt(f(8), "duration_ms")?,
                error: (!f(9).is_empty()).then(|| f(9).to_string()),
            });
        }
        Ok(CorpusReport { tool_version, run_params, rows, summary })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CorpusReport {
        CorpusReport {
            tool_version: "0.1.0".into(),
            run_params: RunParams {
                inputs: vec!["data".into()],
                globs: vec!["*.png".into()],
                features: FeatureSet::ALL,
                params: FeatureParams::default(),
                classifier: None,
            },
            rows: vec![
                ReportRow {
                    path: "data/a.png".into(),
                    width: Some(4),
                    height: Some(3),
                    alpha: Some(0.1),
                    beta: Some(0.7000000000000001),
                    gamma: Some(1.0 / 3.0),
                    label: Some(Label::Clear),
                    score: Some(-0.0),
                    ..Default::default()
                },
                ReportRow { path: "data/b, \"odd\".png".into(), error: Some("CorruptStream".into()), ..Default::default() },
            ],
            summary: Some(Summary { clear: 1, blurry: 0, failed: 1 }),
        }
    }

    #[test]
    fn csv_layout() {
        let text = sample().to_csv_string().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# geoblur 0.1.0");
        assert!(lines[1].starts_with("# run_params {"));
        assert_eq!(lines[2], CSV_COLUMNS.join(","));
        assert_eq!(lines[3], "data/a.png,4,3,0.1,0.7000000000000001,0.3333333333333333,clear,-0,,");
        assert_eq!(lines[4], "\"data/b, \"\"odd\"\".png\",,,,,,,,,CorruptStream");
        assert!(lines[5].starts_with("# summary "));
    }

    #[test]
    fn csv_and_json_agree() {
        let report = sample();
        let from_csv = CorpusReport::read_csv(report.to_csv_string().unwrap().as_bytes()).unwrap();
        let from_json = CorpusReport::from_json_str(&report.to_json_string().unwrap()).unwrap();
        assert_eq!(from_csv, from_json);
        assert_eq!(from_csv, report);
    }
}
