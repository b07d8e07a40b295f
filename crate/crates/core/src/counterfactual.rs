//! Rational counterfactual search.
//!
//! The squared residual between the model consequent and the desired
//! consequent is minimized by annealing over the free antecedent variables,
//! starting from the factual. The result reports the antecedent found, how
//! well it attains the target, and which variables moved up or down.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annealer::{self, AnnealConfig, AnnealError, AnnealTrace};
use crate::fuzzy::{Consequent, FeatureVector, FuzzyError, TskModel};

/// Changes smaller than this are reported as unchanged.
pub const DELTA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CounterfactualError {
    #[error(transparent)]
    Model(#[from] FuzzyError),
    #[error(transparent)]
    Anneal(#[from] AnnealError),
    #[error("free mask has {got} entries, model has {expected} inputs")]
    MaskMismatch { expected: usize, got: usize },
    #[error("desired consequent {0} is outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("success_margin {0} must lie in (0, 0.5)")]
    InvalidMargin(f64),
}

fn default_margin() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualQuery {
    pub factual: FeatureVector,
    pub desired_consequent: f64,
    /// `true` where the variable may change.
    pub free_mask: Vec<bool>,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default = "default_margin")]
    pub success_margin: f64,
}

impl CounterfactualQuery {
    /// Query with every variable free and default search settings.
    pub fn new(factual: FeatureVector, desired_consequent: f64) -> Self {
        let n = factual.len();
        Self {
            factual,
            desired_consequent,
            free_mask: alloc::vec![true; n],
            anneal: AnnealConfig::default(),
            success_margin: default_margin(),
        }
    }

    fn validate(&self, model: &TskModel) -> Result<(), CounterfactualError> {
        model.check_dim(&self.factual)?;
        if self.free_mask.len() != model.n_inputs() {
            return Err(CounterfactualError::MaskMismatch {
                expected: model.n_inputs(),
                got: self.free_mask.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.desired_consequent) {
            return Err(CounterfactualError::TargetOutOfRange(self.desired_consequent));
        }
        if !(self.success_margin > 0.0 && self.success_margin < 0.5) {
            return Err(CounterfactualError::InvalidMargin(self.success_margin));
        }
        self.anneal.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Additive,
    Subtractive,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub name: String,
    pub factual: f64,
    pub counterfactual: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub antecedent: FeatureVector,
    pub achieved_y: f64,
    /// `(achieved_y - desired_consequent)^2`.
    pub error: f64,
    pub achieved_class: Consequent,
    pub success: bool,
    pub deltas: Vec<Delta>,
    /// Set when every variable was locked and nothing was searched.
    pub no_free_variables: bool,
    /// Set when the model's total activation was clamped at the answer.
    pub degenerate_activation: bool,
    pub evaluations: u64,
    pub trace: AnnealTrace,
}

/// Squared residual of the model consequent against `target`.
pub fn objective<'a>(model: &'a TskModel, target: f64) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x| {
        let r = model.evaluate_unchecked(x).y - target;
        r * r
    }
}

/// Classifies each variable's move from `factual` to `antecedent`.
pub fn delta_report(
    factual: &[f64],
    antecedent: &[f64],
    feature_names: &[String],
) -> Result<Vec<Delta>, FuzzyError> {
    if factual.len() != antecedent.len() || factual.len() != feature_names.len() {
        return Err(FuzzyError::DimensionMismatch {
            expected: factual.len(),
            got: if antecedent.len() != factual.len() {
                antecedent.len()
            } else {
                feature_names.len()
            },
        });
    }
    Ok(factual
        .iter()
        .zip(antecedent)
        .zip(feature_names)
        .map(|((&f, &c), name)| {
            let direction = if c > f + DELTA_TOLERANCE {
                Direction::Additive
            } else if c < f - DELTA_TOLERANCE {
                Direction::Subtractive
            } else {
                Direction::Unchanged
            };
            Delta {
                name: name.clone(),
                factual: f,
                counterfactual: c,
                direction,
            }
        })
        .collect())
}

/// Searches for the antecedent closest in consequent to the desired one.
pub fn find_counterfactual(
    model: &TskModel,
    query: &CounterfactualQuery,
) -> Result<CounterfactualResult, CounterfactualError> {
    query.validate(model)?;
    let target = query.desired_consequent;
    let outcome = annealer::minimize(
        objective(model, target),
        &query.factual,
        &query.free_mask,
        &query.anneal,
    )?;

    let antecedent = FeatureVector::new(outcome.x_best)?;
    let eval = model.evaluate_unchecked(&antecedent);
    let residual = eval.y - target;
    let achieved_class = model.label_encoding().classify(eval.y);
    let deltas = delta_report(&query.factual, &antecedent, model.feature_names())?;
    Ok(CounterfactualResult {
        achieved_y: eval.y,
        error: residual * residual,
        achieved_class,
        success: libm::fabs(residual) < 0.5 - query.success_margin,
        deltas,
        no_free_variables: !query.free_mask.iter().any(|&f| f),
        degenerate_activation: eval.degenerate,
        evaluations: outcome.evaluations,
        trace: outcome.trace,
        antecedent,
    })
}
