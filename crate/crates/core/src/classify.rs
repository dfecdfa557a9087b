//! Clear/blurry decisions from the three scalar features.
//!
//! Two routes: a fixed [`ThresholdRule`] on one feature, or a linear SVM
//! trained by stochastic subgradient descent on standardized features.
//! Ties (score exactly 0, value exactly at the cutoff) resolve to blurry.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blur::Label;
use crate::error::{Error, Result};
use crate::gradient::GradientOperator;

pub const MODEL_FORMAT_VERSION: &str = "geoblur-linear-svm/1";
pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_SEED: u64 = 42;

/// The knobs a feature value depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub grad_operator: GradientOperator,
    pub grad_threshold: f64,
    pub svd_k: usize,
    pub svd_downscale: Option<usize>,
    pub fft_divisor: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            grad_operator: GradientOperator::Sobel3,
            grad_threshold: crate::gradient::DEFAULT_THRESHOLD,
            svd_k: crate::svd::DEFAULT_K,
            svd_downscale: Some(crate::svd::DEFAULT_DOWNSCALE),
            fft_divisor: crate::fft::DEFAULT_DIVISOR,
        }
    }
}

impl FeatureParams {
    /// Names the first knob that differs, if any.
    pub fn mismatch(&self, other: &FeatureParams) -> Option<String> {
        if self.grad_operator != other.grad_operator {
            return Some(format!("grad_operator {} vs {}", self.grad_operator, other.grad_operator));
        }
        if self.grad_threshold != other.grad_threshold {
            return Some(format!("grad_threshold {} vs {}", self.grad_threshold, other.grad_threshold));
        }
        if self.svd_k != other.svd_k {
            return Some(format!("svd_k {} vs {}", self.svd_k, other.svd_k));
        }
        if self.svd_downscale != other.svd_downscale {
            return Some(format!("svd_downscale {:?} vs {:?}", self.svd_downscale, other.svd_downscale));
        }
        if self.fft_divisor != other.fft_divisor {
            return Some(format!("fft_divisor {} vs {}", self.fft_divisor, other.fft_divisor));
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Alpha,
    Beta,
    Gamma,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Alpha, Feature::Beta, Feature::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Alpha => "alpha",
            Feature::Beta => "beta",
            Feature::Gamma => "gamma",
        }
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "alpha" => Ok(Feature::Alpha),
            "beta" => Ok(Feature::Beta),
            "gamma" => Ok(Feature::Gamma),
            other => Err(Error::InvalidArgument(format!("unknown feature `{other}`"))),
        }
    }
}

/// Per-image features. A feature is `None` when it was not computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub params: FeatureParams,
}

impl FeatureVector {
    pub fn new(image_id: impl Into<String>, alpha: f64, beta: f64, gamma: f64, params: FeatureParams) -> Self {
        Self { image_id: image_id.into(), alpha: Some(alpha), beta: Some(beta), gamma: Some(gamma), params }
    }

    pub fn get(&self, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Alpha => self.alpha,
            Feature::Beta => self.beta,
            Feature::Gamma => self.gamma,
        }
    }

    pub fn values(&self) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (slot, f) in out.iter_mut().zip(Feature::ALL) {
            *slot = self.get(f).ok_or(Error::MissingFeature(f.name()))?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: [f64; 3],
    pub stds: [f64; 3],
    /// Features whose variance was zero; their std was forced to 1.
    pub degenerate: [bool; 3],
}

impl Scaler {
    pub fn transform(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (x[i] - self.means[i]) / self.stds[i])
    }
}

/// Per-feature mean and population standard deviation.
pub fn fit_scaler(rows: &[FeatureVector]) -> Result<Scaler> {
    if rows.len() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    let xs: Vec<[f64; 3]> = rows.iter().map(FeatureVector::values).collect::<Result<_>>()?;
    Ok(scaler_from(&xs))
}

fn scaler_from(xs: &[[f64; 3]]) -> Scaler {
    let n = xs.len() as f64;
    let means: [f64; 3] = std::array::from_fn(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n);
    let mut degenerate = [false; 3];
    let stds: [f64; 3] = std::array::from_fn(|i| {
        let constant = xs.iter().all(|x| x[i] == xs[0][i]);
        let var = xs.iter().map(|x| (x[i] - means[i]).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !constant && sd > 0.0 && sd.is_finite() {
            sd
        } else {
            degenerate[i] = true;
            1.0
        }
    });
    Scaler { means, stds, degenerate }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, epochs: DEFAULT_EPOCHS, seed: DEFAULT_SEED }
    }
}

/// Linear SVM; `+1` is clear, `-1` blurry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub version: String,
    pub weights: [f64; 3],
    pub bias: f64,
    pub means: [f64; 3],
    pub stds: [f64; 3],
    pub hyperparams: Hyperparams,
    pub params: FeatureParams,
    pub label_convention: String,
}

impl LinearModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: LinearModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported model version `{}`", model.version)));
        }
        if model.stds.iter().any(|s| !(*s > 0.0)) || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("model has non-positive stds or non-finite weights".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn scaler(&self) -> Scaler {
        Scaler { means: self.means, stds: self.stds, degenerate: [false; 3] }
    }

    pub fn score_raw(&self, x: [f64; 3]) -> f64 {
        let z = self.scaler().transform(x);
        dot(&self.weights, &z) + self.bias
    }
}

/// Model plus the per-epoch diagnostics gathered while training it.
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub model: LinearModel,
    /// Regularized hinge objective of the running-average iterate at the end
    /// of every epoch.
    pub averaged_objective: Vec<f64>,
    pub degenerate: [bool; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn objective(w: &[f64; 3], b: f64, xs: &[[f64; 3]], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs.iter().zip(ys).map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0)).sum::<f64>();
    lambda * dot(w, w) / 2.0 + hinge / xs.len() as f64
}

/// Minimizes `lambda |w|^2 / 2 + mean(max(0, 1 - y (w.x + b)))` with step
/// `1 / (lambda t)`, one example at a time, shuffling every epoch from
/// `seed`. The bias is not regularized. Returns the final iterate.
pub fn train_linear_svm(rows: &[FeatureVector], labels: &[Label], hp: &Hyperparams) -> Result<LinearModel> {
    train_linear_svm_traced(rows, labels, hp).map(|run| run.model)
}

pub fn train_linear_svm_traced(rows: &[FeatureVector], labels: &[Label], hp: &Hyperparams) -> Result<TrainingRun> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if !labels.contains(&Label::Clear) || !labels.contains(&Label::Blurry) {
        return Err(Error::SingleClassTraining);
    }
    if !(hp.lambda > 0.0) || !hp.lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {} must be > 0", hp.lambda)));
    }
    if hp.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    let params = rows[0].params.clone();
    for row in rows {
        if let Some(why) = params.mismatch(&row.params) {
            return Err(Error::ParamMismatch(format!("{}: {why}", row.image_id)));
        }
    }
    let raw: Vec<[f64; 3]> = rows.iter().map(FeatureVector::values).collect::<Result<_>>()?;
    let scaler = scaler_from(&raw);
    let xs: Vec<[f64; 3]> = raw.iter().map(|x| scaler.transform(*x)).collect();
    let ys: Vec<f64> = labels.iter().map(|l| l.sign()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let (mut w, mut b) = ([0.0f64; 3], 0.0f64);
    let (mut avg_w, mut avg_b) = ([0.0f64; 3], 0.0f64);
    let mut averaged_objective = Vec::with_capacity(hp.epochs);
    let mut t = 0u64;

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (hp.lambda * t as f64);
            let (x, y) = (&xs[i], ys[i]);
            let margin = y * (dot(&w, x) + b);
            let decay = 1.0 - eta * hp.lambda;
            for wj in &mut w {
                *wj *= decay;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += eta * y * xj;
                }
                b += eta * y;
            }
            let step = 1.0 / t as f64;
            for (a, wj) in avg_w.iter_mut().zip(&w) {
                *a += (wj - *a) * step;
            }
            avg_b += (b - avg_b) * step;
        }
        let obj = objective(&avg_w, avg_b, &xs, &ys, hp.lambda);
        if !obj.is_finite() || w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        averaged_objective.push(obj);
    }

    Ok(TrainingRun {
        model: LinearModel {
            version: MODEL_FORMAT_VERSION.to_string(),
            weights: w,
            bias: b,
            means: scaler.means,
            stds: scaler.stds,
            hyperparams: hp.clone(),
            params,
            label_convention: "+1=clear,-1=blurry".to_string(),
        },
        averaged_objective,
        degenerate: scaler.degenerate,
    })
}

/// Label and signed score; positive scores are clear.
pub fn predict(model: &LinearModel, row: &FeatureVector) -> Result<(Label, f64)> {
    if let Some(why) = model.params.mismatch(&row.params) {
        return Err(Error::ParamMismatch(why));
    }
    let score = model.score_raw(row.values()?);
    Ok((label_for_score(score), score))
}

#[inline]
pub fn label_for_score(score: f64) -> Label {
    if score > 0.0 {
        Label::Clear
    } else {
        Label::Blurry
    }
}

pub fn accuracy(model: &LinearModel, rows: &[FeatureVector], labels: &[Label]) -> Result<f64> {
    let mut correct = 0usize;
    for (row, label) in rows.iter().zip(labels) {
        if predict(model, row)?.0 == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleDirection {
    GreaterIsBlurry,
    GreaterIsClear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub feature: Feature,
    pub direction: RuleDirection,
    pub cutoff: f64,
}

impl ThresholdRule {
    pub fn new(feature: Feature, direction: RuleDirection, cutoff: f64) -> Result<Self> {
        if !cutoff.is_finite() {
            return Err(Error::InvalidArgument("rule cutoff must be finite".into()));
        }
        Ok(Self { feature, direction, cutoff })
    }

    /// Blur-degree rule for `k = 300`: above 0.63 is blurry.
    pub fn beta_k300() -> Self {
        Self { feature: Feature::Beta, direction: RuleDirection::GreaterIsBlurry, cutoff: 0.63 }
    }

    /// Blur-degree rule for `k = 50`: above 0.3 is blurry.
    pub fn beta_k50() -> Self {
        Self { feature: Feature::Beta, direction: RuleDirection::GreaterIsBlurry, cutoff: 0.3 }
    }

    /// Signed margin; positive means clear.
    pub fn score(&self, value: f64) -> f64 {
        match self.direction {
            RuleDirection::GreaterIsBlurry => self.cutoff - value,
            RuleDirection::GreaterIsClear => value - self.cutoff,
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outcome = match self.direction {
            RuleDirection::GreaterIsBlurry => "blurry",
            RuleDirection::GreaterIsClear => "clear",
        };
        write!(f, "{}>{}:{}", self.feature.name(), self.cutoff, outcome)
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// `beta>0.63:blurry`, `gamma>0.01:clear`, or the mirrored `<` forms
    /// such as `beta<0.51:clear`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad rule `{s}` (want e.g. beta>0.63:blurry)"));
        let (cond, outcome) = s.rsplit_once(':').ok_or_else(bad)?;
        let (op, idx) = cond.find(['>', '<']).map(|i| (&cond[i..=i], i)).ok_or_else(bad)?;
        let feature: Feature = cond[..idx].parse()?;
        let cutoff: f64 = cond[idx + 1..].trim().parse().map_err(|_| bad())?;
        let outcome: Label = outcome.parse().map_err(|_| bad())?;
        let direction = match (op, outcome) {
            (">", Label::Blurry) | ("<", Label::Clear) => RuleDirection::GreaterIsBlurry,
            (">", Label::Clear) | ("<", Label::Blurry) => RuleDirection::GreaterIsClear,
            _ => return Err(bad()),
        };
        ThresholdRule::new(feature, direction, cutoff)
    }
}

pub fn threshold_classify(rule: &ThresholdRule, row: &FeatureVector) -> Result<Label> {
    let value = row.get(rule.feature).ok_or(Error::MissingFeature(rule.feature.name()))?;
    Ok(label_for_score(rule.score(value)))
}
