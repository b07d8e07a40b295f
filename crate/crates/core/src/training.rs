//! Hybrid fitting of a [`TskModel`].
//!
//! Each epoch solves the consequent coefficients exactly by regularized
//! least squares with the premises held fixed, then moves every membership
//! center and width one batch gradient step down the mean squared error.
//! The epoch with the lowest post-solve training loss wins.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{LabelEncoding, MembershipFunction, Rule, TskModel, MIN_TOTAL_ACTIVATION};
use crate::linalg::{cholesky_solve, SymMatrix};

/// Widths never shrink below this during gradient steps.
pub const MIN_WIDTH: f64 = 1e-3;

/// Fitted outputs on training inputs beyond this magnitude mean divergence.
pub const OUTPUT_SANITY_BOUND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("grid of {mfs_per_input}^{n_inputs} rules exceeds the cap of {cap}")]
    RuleCapExceeded {
        mfs_per_input: usize,
        n_inputs: usize,
        cap: usize,
    },
    #[error("consequent normal equations are singular")]
    SingularSystem,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {index} has {got} features, model expects {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("fitted output {max_abs} on training inputs exceeds the sanity bound")]
    Diverged { max_abs: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// One input/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mfs_per_input: usize,
    pub epochs: usize,
    pub premise_learning_rate: f64,
    /// Weight of `‖θ‖²` added to the mean squared error in the consequent solve.
    pub ridge_lambda: f64,
    /// Grid rule count limit.
    pub max_rules: usize,
    /// Seeds the balanced split in the training pipeline; fitting itself is
    /// deterministic batch computation.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mfs_per_input: 2,
            epochs: 12,
            premise_learning_rate: 0.05,
            ridge_lambda: 1e-6,
            max_rules: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.mfs_per_input == 0 {
            return bad("mfs_per_input must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.premise_learning_rate > 0.0 && self.premise_learning_rate.is_finite()) {
            return bad("premise_learning_rate must be > 0");
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return bad("ridge_lambda must be >= 0");
        }
        if self.max_rules == 0 {
            return bad("max_rules must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training mean squared error after each epoch's consequent solve.
    pub loss: Vec<f64>,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Evenly spaced Gaussian grid with zero consequents.
pub fn init_grid(feature_names: &[String], config: &TrainConfig) -> Result<TskModel, TrainError> {
    config.validate()?;
    let n = feature_names.len();
    let m = config.mfs_per_input;
    let cap_err = TrainError::RuleCapExceeded {
        mfs_per_input: m,
        n_inputs: n,
        cap: config.max_rules,
    };
    let n_rules = u32::try_from(n)
        .ok()
        .and_then(|e| m.checked_pow(e))
        .ok_or(cap_err.clone())?;
    if n_rules > config.max_rules {
        return Err(cap_err);
    }

    let (width, centers): (f64, Vec<f64>) = if m == 1 {
        (0.5, vec![0.5])
    } else {
        let step = 1.0 / (m - 1) as f64;
        (
            1.0 / (2.0 * (m - 1) as f64),
            (0..m).map(|k| k as f64 * step).collect(),
        )
    };
    let per_input: Vec<MembershipFunction> = centers
        .iter()
        .map(|&c| MembershipFunction::new(c, width).expect("grid width is positive"))
        .collect();
    let mfs = vec![per_input; n];

    let rules = (0..n_rules)
        .map(|mut code| {
            // Mixed-radix digits, first input most significant.
            let mut idx = vec![0usize; n];
            for slot in idx.iter_mut().rev() {
                *slot = code % m;
                code /= m;
            }
            Rule::constant(idx, 0.0)
        })
        .collect();

    TskModel::new(feature_names.to_vec(), mfs, rules, LabelEncoding::default())
        .map_err(|e| TrainError::InvalidConfig(format!("{e}")))
}

fn check_samples(model: &TskModel, samples: &[Sample]) -> Result<(), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n = model.n_inputs();
    for (index, s) in samples.iter().enumerate() {
        if s.x.len() != n {
            return Err(TrainError::DimensionMismatch {
                index,
                expected: n,
                got: s.x.len(),
            });
        }
    }
    Ok(())
}

/// Mean squared error of the model over `samples`.
pub fn mse(model: &TskModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let r = model.evaluate_unchecked(&s.x).y - s.target;
            r * r
        })
        .sum();
    total / samples.len() as f64
}

/// Fraction of samples whose predicted class matches the class of the target.
pub fn accuracy(model: &TskModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let enc = model.label_encoding();
    let hits = samples
        .iter()
        .filter(|s| enc.classify(model.evaluate_unchecked(&s.x).y) == enc.classify(s.target))
        .count();
    hits as f64 / samples.len() as f64
}

/// Replaces every consequent coefficient with the minimizer of
/// `mean((y - t)^2) + ridge_lambda * ‖θ‖²` for the current premises.
pub fn lse_consequents(
    model: &TskModel,
    samples: &[Sample],
    ridge_lambda: f64,
) -> Result<TskModel, TrainError> {
    check_samples(model, samples)?;
    let n = model.n_inputs();
    let stride = n + 1;
    let n_rules = model.rules.len();
    let p = n_rules * stride;

    let mut gram = SymMatrix::zeros(p);
    let mut rhs = vec![0.0; p];
    let mut w = Vec::with_capacity(n_rules);
    let mut row = vec![0.0; p];
    for s in samples {
        model.strengths_unchecked(&s.x, &mut w);
        let total = w.iter().sum::<f64>().max(MIN_TOTAL_ACTIVATION);
        for (r, wr) in w.iter().enumerate() {
            let phi = wr / total;
            let block = &mut row[r * stride..(r + 1) * stride];
            block[0] = phi;
            for (b, xi) in block[1..].iter_mut().zip(&s.x) {
                *b = phi * xi;
            }
        }
        for (i, &ai) in row.iter().enumerate() {
            rhs[i] += ai * s.target;
            let g = &mut gram.data[i * p..i * p + i + 1];
            for (gij, aj) in g.iter_mut().zip(&row[..=i]) {
                *gij += ai * aj;
            }
        }
    }
    gram.mirror_lower();
    let ridge = ridge_lambda * samples.len() as f64;
    for i in 0..p {
        *gram.at_mut(i, i) += ridge;
    }
    let theta = cholesky_solve(gram, &rhs).ok_or(TrainError::SingularSystem)?;

    let mut out = model.clone();
    for (rule, coeffs) in out.rules.iter_mut().zip(theta.chunks_exact(stride)) {
        rule.coeffs.copy_from_slice(coeffs);
    }
    Ok(out)
}

/// Gradient of the training MSE with respect to every membership center
/// and width, laid out like `model.membership_functions()` as
/// `(d/dcenter, d/dwidth)` pairs.
pub fn premise_gradient(model: &TskModel, samples: &[Sample]) -> Vec<Vec<(f64, f64)>> {
    let mut grad: Vec<Vec<(f64, f64)>> = model
        .mfs
        .iter()
        .map(|list| vec![(0.0, 0.0); list.len()])
        .collect();
    if samples.is_empty() {
        return grad;
    }
    let inv_n = 1.0 / samples.len() as f64;
    let mut w = Vec::with_capacity(model.rules.len());
    for s in samples {
        model.strengths_unchecked(&s.x, &mut w);
        let raw_total: f64 = w.iter().sum();
        let clamped = raw_total < MIN_TOTAL_ACTIVATION;
        let total = raw_total.max(MIN_TOTAL_ACTIVATION);
        let outputs: Vec<f64> = model.rules.iter().map(|r| r.output(&s.x)).collect();
        let y = w.iter().zip(&outputs).map(|(a, b)| a * b).sum::<f64>() / total;
        let de_dy = 2.0 * (y - s.target) * inv_n;
        for ((rule, &wr), &fr) in model.rules.iter().zip(&w).zip(&outputs) {
            // With a clamped denominator y is linear in each strength.
            let dy_dw = if clamped { fr / total } else { (fr - y) / total };
            let g = de_dy * dy_dw * wr;
            if g == 0.0 {
                continue;
            }
            for (i, &k) in rule.mf_indices.iter().enumerate() {
                let mf = model.mfs[i][k];
                let d = s.x[i] - mf.center();
                let s2 = mf.width() * mf.width();
                let slot = &mut grad[i][k];
                slot.0 += g * d / s2;
                slot.1 += g * d * d / (s2 * mf.width());
            }
        }
    }
    grad
}

/// One batch gradient-descent step on every premise parameter.
pub fn premise_gradient_step(model: &TskModel, samples: &[Sample], learning_rate: f64) -> TskModel {
    let grad = premise_gradient(model, samples);
    let mut out = model.clone();
    for (list, glist) in out.mfs.iter_mut().zip(&grad) {
        for (mf, &(gc, gw)) in list.iter_mut().zip(glist) {
            let center = mf.center() - learning_rate * gc;
            let width = (mf.width() - learning_rate * gw).max(MIN_WIDTH);
            mf.set(center, width);
        }
    }
    out
}

/// Grid-initialize and train for `config.epochs` hybrid rounds.
pub fn fit(
    feature_names: &[String],
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
) -> Result<(TskModel, TrainReport), TrainError> {
    let mut model = init_grid(feature_names, config)?;
    check_samples(&model, train)?;
    if !test.is_empty() {
        check_samples(&model, test)?;
    }

    let mut losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, TskModel)> = None;
    for _ in 0..config.epochs {
        model = lse_consequents(&model, train, config.ridge_lambda)?;
        let loss = mse(&model, train);
        losses.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, model.clone()));
        }
        model = premise_gradient_step(&model, train, config.premise_learning_rate);
    }
    let (_, best) = best.expect("epochs >= 1");

    let max_abs = train
        .iter()
        .map(|s| libm::fabs(best.evaluate_unchecked(&s.x).y))
        .fold(0.0, f64::max);
    if !(max_abs <= OUTPUT_SANITY_BOUND) {
        return Err(TrainError::Diverged { max_abs });
    }

    let report = TrainReport {
        loss: losses,
        train_acc: accuracy(&best, train),
        test_acc: accuracy(&best, test),
    };
    Ok((best, report))
}
