//! Corpus scanning and the batch operations behind the command line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use globset::{GlobBuilder, GlobSet, GlobSetBuilder};
use walkdir::WalkDir;

use crate::blur::{synth_corpus, BlurSpec, Label};
use crate::classify::{
    self, predict, train_linear_svm_traced, Feature, FeatureParams, FeatureVector, Hyperparams, LinearModel,
    ThresholdRule,
};
use crate::error::{Error, Result};
use crate::features::{self, FeatureSet};
use crate::image::{self, decode_to_gray, from_float, write_png, GrayImage};
use crate::report::{CorpusReport, ReportRow, RunParams};
use crate::{fft, gradient, par, svd};

pub const DEFAULT_GLOBS: [&str; 4] = ["*.png", "*.jpg", "*.jpeg", "*.tif"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// File-name patterns for directory walks; empty means [`DEFAULT_GLOBS`].
    pub globs: Vec<String>,
    pub features: FeatureSet,
    pub params: FeatureParams,
    pub threads: usize,
    /// Fill `duration_ms`. Off by default since timings differ run to run.
    pub timings: bool,
}

impl RunConfig {
    pub fn new(inputs: Vec<PathBuf>) -> Self {
        Self {
            inputs,
            globs: Vec::new(),
            features: FeatureSet::ALL,
            params: FeatureParams::default(),
            threads: par::default_threads(),
            timings: false,
        }
    }

    pub fn effective_globs(&self) -> Vec<String> {
        if self.globs.is_empty() {
            DEFAULT_GLOBS.iter().map(|g| g.to_string()).collect()
        } else {
            self.globs.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidArgument("no features requested".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn run_params(&self, classifier: Option<String>) -> RunParams {
        RunParams {
            inputs: self.inputs.iter().map(|p| p.to_string_lossy().into_owned()).collect(),
            globs: self.effective_globs(),
            features: self.features,
            params: self.params.clone(),
            classifier,
        }
    }
}

fn build_globs(patterns: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for pat in patterns {
        let glob = GlobBuilder::new(pat)
            .case_insensitive(true)
            .literal_separator(true)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("bad glob `{pat}`: {e}")))?;
        builder.add(glob);
    }
    builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Walks every input, keeps files whose name matches a glob, and returns them
/// deduplicated in byte order. Files named directly are kept regardless of
/// the globs.
pub fn scan_corpus(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let globs = build_globs(&config.effective_globs())?;
    let mut found: Vec<PathBuf> = Vec::new();
    for input in &config.inputs {
        if !input.exists() {
            return Err(Error::PathNotFound(input.clone()));
        }
        if input.is_file() {
            found.push(input.clone());
            continue;
        }
        for entry in WalkDir::new(input).follow_links(true) {
            let entry = entry.map_err(|e| Error::Io(e.into()))?;
            if entry.file_type().is_file() && globs.is_match(entry.file_name()) {
                found.push(entry.into_path());
            }
        }
    }
    found.sort_by(|a, b| a.as_os_str().as_encoded_bytes().cmp(b.as_os_str().as_encoded_bytes()));
    found.dedup();
    Ok(found)
}

fn extract_row(path: &Path, set: FeatureSet, params: &FeatureParams, timings: bool) -> ReportRow {
    let start = Instant::now();
    let mut row = ReportRow { path: path.to_string_lossy().into_owned(), ..Default::default() };
    let outcome = fs::read(path).map_err(Error::from).and_then(|bytes| decode_to_gray(&bytes)).and_then(|img| {
        row.width = Some(img.width());
        row.height = Some(img.height());
        features::extract(&img, set, params)
    });
    match outcome {
        Ok(f) => {
            row.alpha = f.alpha;
            row.beta = f.beta;
            row.gamma = f.gamma;
        }
        Err(e) => row.error = Some(e.kind().to_string()),
    }
    if timings {
        row.duration_ms = Some(start.elapsed().as_millis() as u64);
    }
    row
}

fn extract_rows(config: &RunConfig, paths: &[PathBuf]) -> Vec<ReportRow> {
    par::with_threads(config.threads, || {
        par::map(paths, |p| extract_row(p, config.features, &config.params, config.timings))
    })
}

/// One row per discovered file; per-file failures are recorded in the row.
pub fn run_extract(config: &RunConfig) -> Result<CorpusReport> {
    config.validate()?;
    let paths = scan_corpus(config)?;
    Ok(CorpusReport {
        tool_version: crate::VERSION.to_string(),
        run_params: config.run_params(None),
        rows: extract_rows(config, &paths),
        summary: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Model(Box<LinearModel>),
    Rule(ThresholdRule),
}

impl Classifier {
    pub fn required_features(&self) -> FeatureSet {
        match self {
            Classifier::Model(_) => FeatureSet::ALL,
            Classifier::Rule(rule) => FeatureSet::only(rule.feature),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Classifier::Model(m) => format!("model {}", m.version),
            Classifier::Rule(rule) => format!("rule {rule}"),
        }
    }

    fn classify(&self, row: &FeatureVector) -> Result<(Label, f64)> {
        match self {
            Classifier::Model(m) => predict(m, row),
            Classifier::Rule(rule) => {
                let value = row.get(rule.feature).ok_or(Error::MissingFeature(rule.feature.name()))?;
                let score = rule.score(value);
                Ok((classify::label_for_score(score), score))
            }
        }
    }
}

/// Extracts whatever the classifier needs, then labels every healthy row.
/// A model whose feature parameters differ from the run's is rejected before
/// any file is read.
pub fn run_classify(config: &RunConfig, classifier: &Classifier) -> Result<CorpusReport> {
    if let Classifier::Model(m) = classifier {
        if let Some(why) = m.params.mismatch(&config.params) {
            return Err(Error::ParamMismatch(why));
        }
    }
    let mut config = config.clone();
    let required = classifier.required_features();
    for f in [Feature::Alpha, Feature::Beta, Feature::Gamma] {
        if required.contains(f) {
            config.features.insert(f);
        }
    }
    config.validate()?;
    let paths = scan_corpus(&config)?;
    let mut rows = extract_rows(&config, &paths);
    for row in rows.iter_mut().filter(|r| r.error.is_none()) {
        match classifier.classify(&row.feature_vector(&config.params)) {
            Ok((label, score)) => {
                row.label = Some(label);
                row.score = Some(score);
            }
            Err(e) => row.error = Some(e.kind().to_string()),
        }
    }
    let mut report = CorpusReport {
        tool_version: crate::VERSION.to_string(),
        run_params: config.run_params(Some(classifier.describe())),
        rows,
        summary: None,
    };
    report.summary = Some(report.compute_summary());
    Ok(report)
}

/// One line of `labels.csv`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: Label,
    pub kind: Option<String>,
    pub extent: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutcome {
    pub manifest: Vec<ManifestRow>,
    pub manifest_path: PathBuf,
    /// Written images identical to their clear source (extent too small to
    /// change anything).
    pub identical: Vec<PathBuf>,
}

pub const MANIFEST_NAME: &str = "labels.csv";

pub fn synth_file_name(stem: &str, spec: &BlurSpec) -> String {
    format!("{stem}__{}{}.png", spec.kind.tag(), spec.extent)
}

/// Writes `<stem>__<kind><extent>.png` for every input and spec, plus a
/// manifest listing each clear input and each blurred output.
pub fn run_synth(inputs: &[PathBuf], specs: &[BlurSpec], out_dir: &Path, threads: usize) -> Result<SynthOutcome> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no blur specs given".into()));
    }
    let mut stems = HashSet::new();
    let mut images = Vec::with_capacity(inputs.len());
    for input in inputs {
        if !input.exists() {
            return Err(Error::PathNotFound(input.clone()));
        }
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if !stems.insert(stem.clone()) {
            return Err(Error::InvalidArgument(format!("two inputs share the file stem `{stem}`")));
        }
        images.push((stem, image::read_gray(input)?));
    }
    fs::create_dir_all(out_dir)?;
    let clear: Vec<GrayImage> = images.iter().map(|(_, img)| img.clone()).collect();
    let records = par::with_threads(threads, || synth_corpus(&clear, specs))?;

    let mut manifest = Vec::with_capacity(records.len());
    let mut identical = Vec::new();
    for rec in &records {
        match rec.spec {
            None => manifest.push(ManifestRow {
                path: inputs[rec.source].to_string_lossy().into_owned(),
                label: rec.label,
                kind: None,
                extent: None,
            }),
            Some(spec) => {
                let path = out_dir.join(synth_file_name(&images[rec.source].0, &spec));
                write_png(&rec.image, &path)?;
                if rec.identical_to_source {
                    identical.push(path.clone());
                }
                manifest.push(ManifestRow {
                    path: path.to_string_lossy().into_owned(),
                    label: rec.label,
                    kind: Some(spec.kind.tag().to_string()),
                    extent: Some(spec.extent),
                });
            }
        }
    }
    let manifest_path = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest, &manifest_path)?;
    Ok(SynthOutcome { manifest, manifest_path, identical })
}

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a label manifest; only the `path` and `label` columns are required.
pub fn read_labels(path: &Path) -> Result<Vec<(String, Label)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no `{name}` column", path.display())))
    };
    let (pi, li) = (col("path")?, col("label")?);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push((rec.get(pi).unwrap_or("").to_string(), rec.get(li).unwrap_or("").parse()?));
    }
    Ok(out)
}

fn join_key(path: &str) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| PathBuf::from(path))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub training_accuracy: f64,
    pub samples: usize,
    /// Feature rows skipped: errored, or absent from the label manifest.
    pub skipped: usize,
    pub degenerate: [bool; 3],
}

/// Joins an extraction report with a label manifest by file path and fits
/// the linear classifier.
pub fn run_train(features_csv: &Path, labels_csv: &Path, hp: &Hyperparams) -> Result<TrainOutcome> {
    let report = CorpusReport::read_csv(fs::File::open(features_csv)?)?;
    let labels: BTreeMap<PathBuf, Label> =
        read_labels(labels_csv)?.into_iter().map(|(p, l)| (join_key(&p), l)).collect();
    let params = report.run_params.params.clone();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut skipped = 0;
    for row in &report.rows {
        let label = labels.get(&join_key(&row.path));
        match (label, &row.error) {
            (Some(label), None) => {
                rows.push(row.feature_vector(&params));
                ys.push(*label);
            }
            _ => skipped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let run = train_linear_svm_traced(&rows, &ys, hp)?;
    let training_accuracy = classify::accuracy(&run.model, &rows, &ys)?;
    Ok(TrainOutcome { model: run.model, training_accuracy, samples: rows.len(), skipped, degenerate: run.degenerate })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InspectOutcome {
    pub written: Vec<PathBuf>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Per-image diagnostics: gradient histograms, singular spectrum, spectrum
/// histogram, log-magnitude view and optionally a rank-k reconstruction.
pub fn inspect(input: &Path, out_dir: &Path, params: &FeatureParams, lowrank: Option<usize>) -> Result<InspectOutcome> {
    if !input.exists() {
        return Err(Error::PathNotFound(input.to_path_buf()));
    }
    let img = image::read_gray(input)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<fs::File> {
        let path = out_dir.join(name);
        let file = fs::File::create(&path)?;
        written.push(path);
        Ok(file)
    };

    let field = gradient::gradient_field(&img, params.grad_operator)?;
    let hists = gradient::gradient_histograms(&field);
    hists.magnitude.write_csv(create("gradient_magnitude_hist.csv")?)?;
    hists.direction.write_csv(create("gradient_direction_hist.csv")?)?;
    let alpha = gradient::clear_coefficient(&field, params.grad_threshold)?.alpha;

    let sv = svd::singular_spectrum(&img, params.svd_downscale)?;
    sv.write_csv(create("singular_spectrum.csv")?)?;
    let beta = svd::blur_degree(&sv, params.svd_k)?.beta;

    let spectrum = fft::fft2_shifted_magnitude(&img);
    fft::spectrum_histogram(&spectrum).write_csv(create("spectrum_hist.csv")?)?;
    let gamma = fft::clear_estimate(&spectrum, params.fft_divisor)?.gamma;
    let view = from_float(&fft::spectrum_log_view(&spectrum))?;

    let log_path = out_dir.join("log_spectrum.png");
    write_png(&view, &log_path)?;
    written.push(log_path);

    if let Some(k) = lowrank {
        let small = match params.svd_downscale {
            Some(max_dim) => image::downscale(&img, max_dim)?,
            None => img.clone(),
        };
        let path = out_dir.join(format!("lowrank_k{k}.png"));
        write_png(&svd::lowrank_reconstruct(&small, k)?, &path)?;
        written.push(path);
    }
    Ok(InspectOutcome { written, alpha, beta, gamma })
}
