//! First-order Takagi-Sugeno inference.
//!
//! A model maps an antecedent `x ∈ [0,1]^n` to a scalar consequent by
//! weighting per-rule linear outputs `a0 + Σ ai·xi` with the rule firing
//! strengths. Firing strengths are products of Gaussian memberships, one per
//! input.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Total activations below this are clamped to it when normalizing.
pub const MIN_TOTAL_ACTIVATION: f64 = 1e-12;

/// Version written into and accepted from model documents.
pub const MODEL_DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuzzyError {
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("malformed model: {0}")]
    MalformedModel(String),
}

/// Gaussian membership `exp(-(x - center)^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    center: f64,
    width: f64,
}

impl MembershipFunction {
    pub fn new(center: f64, width: f64) -> Result<Self, FuzzyError> {
        if !center.is_finite() {
            return Err(FuzzyError::MalformedModel(format!(
                "membership center {center} is not finite"
            )));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(FuzzyError::MalformedModel(format!(
                "membership width {width} must be finite and > 0"
            )));
        }
        Ok(Self { center, width })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let d = x - self.center;
        libm::exp(-(d * d) / (2.0 * self.width * self.width))
    }

    pub(crate) fn set(&mut self, center: f64, width: f64) {
        self.center = center;
        self.width = width;
    }
}

/// One rule: a membership choice per input and a linear consequent.
///
/// `coeffs[0]` is the constant term, `coeffs[i + 1]` multiplies input `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub(crate) mf_indices: Vec<usize>,
    pub(crate) coeffs: Vec<f64>,
}

impl Rule {
    pub fn new(mf_indices: Vec<usize>, coeffs: Vec<f64>) -> Self {
        Self { mf_indices, coeffs }
    }

    /// Rule with a constant consequent and zero linear terms.
    pub fn constant(mf_indices: Vec<usize>, value: f64) -> Self {
        let mut coeffs = alloc::vec![0.0; mf_indices.len() + 1];
        coeffs[0] = value;
        Self { mf_indices, coeffs }
    }

    pub fn mf_indices(&self) -> &[usize] {
        &self.mf_indices
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn output(&self, x: &[f64]) -> f64 {
        self.coeffs[0]
            + self.coeffs[1..]
                .iter()
                .zip(x)
                .map(|(a, xi)| a * xi)
                .sum::<f64>()
    }
}

/// The two consequent classes of the conflict model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consequent {
    War,
    Peace,
}

impl Consequent {
    pub fn as_str(&self) -> &'static str {
        match self {
            Consequent::War => "war",
            Consequent::Peace => "peace",
        }
    }
}

impl core::fmt::Display for Consequent {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Consequent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "war" => Ok(Consequent::War),
            "peace" => Ok(Consequent::Peace),
            other => Err(format!("expected `war` or `peace`, got `{other}`")),
        }
    }
}

/// Numeric values of the two classes and the decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelEncoding {
    pub war: f64,
    pub peace: f64,
    pub threshold: f64,
}

impl Default for LabelEncoding {
    fn default() -> Self {
        Self {
            war: 1.0,
            peace: 0.0,
            threshold: 0.5,
        }
    }
}

impl LabelEncoding {
    pub fn value_of(&self, class: Consequent) -> f64 {
        match class {
            Consequent::War => self.war,
            Consequent::Peace => self.peace,
        }
    }

    /// Ties at the threshold go to `War`.
    pub fn classify(&self, y: f64) -> Consequent {
        let war_side = if self.war >= self.peace {
            y >= self.threshold
        } else {
            y <= self.threshold
        };
        if war_side {
            Consequent::War
        } else {
            Consequent::Peace
        }
    }

    fn validate(&self) -> Result<(), FuzzyError> {
        let ok = self.war.is_finite()
            && self.peace.is_finite()
            && self.threshold.is_finite()
            && self.war != self.peace;
        if ok {
            Ok(())
        } else {
            Err(FuzzyError::MalformedModel(format!(
                "invalid label encoding {self:?}"
            )))
        }
    }
}

/// An antecedent whose values all lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FuzzyError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(FuzzyError::OutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = FuzzyError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Model output plus the degenerate-activation flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub y: f64,
    /// Total firing strength fell below [`MIN_TOTAL_ACTIVATION`] and was clamped.
    pub degenerate: bool,
}

/// A validated first-order Takagi-Sugeno rule base. Immutable once built;
/// only the training module adjusts parameters in place.
#[derive(Debug, Clone, PartialEq)]
pub struct TskModel {
    pub(crate) feature_names: Vec<String>,
    pub(crate) mfs: Vec<Vec<MembershipFunction>>,
    pub(crate) rules: Vec<Rule>,
    pub(crate) label_encoding: LabelEncoding,
}

impl TskModel {
    pub fn new(
        feature_names: Vec<String>,
        mfs: Vec<Vec<MembershipFunction>>,
        rules: Vec<Rule>,
        label_encoding: LabelEncoding,
    ) -> Result<Self, FuzzyError> {
        let model = Self {
            feature_names,
            mfs,
            rules,
            label_encoding,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), FuzzyError> {
        let n = self.feature_names.len();
        let malformed = |msg: String| Err(FuzzyError::MalformedModel(msg));
        if n == 0 {
            return malformed("model has no inputs".into());
        }
        let unique: BTreeSet<&str> = self.feature_names.iter().map(String::as_str).collect();
        if unique.len() != n {
            return malformed("feature names are not unique".into());
        }
        if self.mfs.len() != n {
            return malformed(format!(
                "{} membership lists for {n} inputs",
                self.mfs.len()
            ));
        }
        for (i, list) in self.mfs.iter().enumerate() {
            if list.is_empty() {
                return malformed(format!("input {i} has no membership functions"));
            }
            for mf in list {
                MembershipFunction::new(mf.center, mf.width)?;
            }
        }
        if self.rules.is_empty() {
            return malformed("rule base is empty".into());
        }
        for (r, rule) in self.rules.iter().enumerate() {
            if rule.mf_indices.len() != n {
                return malformed(format!(
                    "rule {r} has {} membership indices, expected {n}",
                    rule.mf_indices.len()
                ));
            }
            if rule.coeffs.len() != n + 1 {
                return malformed(format!(
                    "rule {r} has {} coefficients, expected {}",
                    rule.coeffs.len(),
                    n + 1
                ));
            }
            for (i, &k) in rule.mf_indices.iter().enumerate() {
                if k >= self.mfs[i].len() {
                    return malformed(format!(
                        "rule {r} references membership {k} of input {i}, which has {}",
                        self.mfs[i].len()
                    ));
                }
            }
            if rule.coeffs.iter().any(|c| !c.is_finite()) {
                return malformed(format!("rule {r} has a non-finite coefficient"));
            }
        }
        self.label_encoding.validate()
    }

    pub fn n_inputs(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn membership_functions(&self) -> &[Vec<MembershipFunction>] {
        &self.mfs
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn label_encoding(&self) -> &LabelEncoding {
        &self.label_encoding
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<(), FuzzyError> {
        if x.len() != self.n_inputs() {
            return Err(FuzzyError::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Membership values of every function of every input at `x`.
    pub(crate) fn memberships(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.mfs
            .iter()
            .zip(x)
            .map(|(list, &xi)| list.iter().map(|mf| mf.value(xi)).collect())
            .collect()
    }

    pub(crate) fn strengths_unchecked(&self, x: &[f64], out: &mut Vec<f64>) {
        let mu = self.memberships(x);
        out.clear();
        out.extend(self.rules.iter().map(|rule| {
            rule.mf_indices
                .iter()
                .enumerate()
                .map(|(i, &k)| mu[i][k])
                .product::<f64>()
        }));
    }

    pub fn firing_strengths(&self, x: &[f64]) -> Result<Vec<f64>, FuzzyError> {
        self.check_dim(x)?;
        let mut out = Vec::with_capacity(self.rules.len());
        self.strengths_unchecked(x, &mut out);
        Ok(out)
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> Evaluation {
        let mut w = Vec::with_capacity(self.rules.len());
        self.strengths_unchecked(x, &mut w);
        let total: f64 = w.iter().sum();
        let numerator: f64 = w
            .iter()
            .zip(&self.rules)
            .map(|(wr, rule)| wr * rule.output(x))
            .sum();
        let degenerate = total < MIN_TOTAL_ACTIVATION;
        Evaluation {
            y: numerator / total.max(MIN_TOTAL_ACTIVATION),
            degenerate,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation, FuzzyError> {
        self.check_dim(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    pub fn classify(&self, x: &[f64]) -> Result<Consequent, FuzzyError> {
        Ok(self.label_encoding.classify(self.evaluate(x)?.y))
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            version: MODEL_DOCUMENT_VERSION,
            feature_names: self.feature_names.clone(),
            mfs: self.mfs.clone(),
            rules: self.rules.clone(),
            label_encoding: self.label_encoding,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, FuzzyError> {
        if doc.version != MODEL_DOCUMENT_VERSION {
            return Err(FuzzyError::MalformedModel(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        Self::new(doc.feature_names, doc.mfs, doc.rules, doc.label_encoding)
    }
}

/// Serialized shape of a [`TskModel`]. Widths and rule indices are not
/// trusted until [`TskModel::from_document`] validates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub mfs: Vec<Vec<MembershipFunction>>,
    pub rules: Vec<Rule>,
    pub label_encoding: LabelEncoding,
}
