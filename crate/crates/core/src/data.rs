//! Dyadic conflict records and their normalized feature form.
//!
//! Raw records follow the CSV schema; [`normalize`] maps them onto
//! `[0, 1]^7` in the canonical feature order of [`crate::FEATURE_NAMES`]:
//!
//! | feature              | rule                                        |
//! |----------------------|---------------------------------------------|
//! | distance             | min-max over the batch                      |
//! | contiguity           | 1 if the pair shares a border, else 0       |
//! | major_power          | 1 if both are major powers, 0.5 if one, 0   |
//! | allies               | 1 if allied, else 0                         |
//! | democracy            | min-max of the raw joint regime score       |
//! | econ_interdependence | min-max                                     |
//! | capability           | min-max                                     |

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{Consequent, FeatureVector, LabelEncoding};
use crate::training::Sample;
use crate::FEATURE_NAMES;

pub type Label = Consequent;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("no records to normalize")]
    Empty,
    #[error("feature `{0}` has a single value across the batch; min-max is undefined")]
    DegenerateFeature(&'static str),
    #[error("record {row}: {field} = {value} is out of range")]
    Range {
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error("need {requested} {label} rows, only {available} available")]
    InsufficientClassRows {
        label: Label,
        requested: usize,
        available: usize,
    },
}

/// One dyad with raw, unnormalized attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadRecord {
    pub distance_km: f64,
    pub contiguity: bool,
    pub major_power_count: u8,
    pub allied: bool,
    pub democracy_score: f64,
    pub econ_interdependence: f64,
    pub capability: f64,
    pub label: Label,
}

impl DyadRecord {
    pub fn validate(&self, row: usize) -> Result<(), DataError> {
        let range = |field, value: f64| Err(DataError::Range { row, field, value });
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return range("distance_km", self.distance_km);
        }
        if self.major_power_count > 2 {
            return range("major_power_count", f64::from(self.major_power_count));
        }
        if !self.democracy_score.is_finite() {
            return range("democracy_score", self.democracy_score);
        }
        if !(self.econ_interdependence >= 0.0 && self.econ_interdependence.is_finite()) {
            return range("econ_interdependence", self.econ_interdependence);
        }
        if !(self.capability >= 0.0 && self.capability.is_finite()) {
            return range("capability", self.capability);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn fit(values: impl Iterator<Item = f64>, name: &'static str) -> Result<Self, DataError> {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if !(min < max) {
            return Err(DataError::DegenerateFeature(name));
        }
        Ok(Self { min, max })
    }

    /// Values outside the fitted range clamp to the nearest end.
    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Min-max ranges fitted on one batch, reusable on another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub distance: MinMax,
    pub democracy: MinMax,
    pub econ_interdependence: MinMax,
    pub capability: MinMax,
}

impl NormalizationParams {
    pub fn fit(records: &[DyadRecord]) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Self {
            distance: MinMax::fit(records.iter().map(|r| r.distance_km), "distance")?,
            democracy: MinMax::fit(records.iter().map(|r| r.democracy_score), "democracy")?,
            econ_interdependence: MinMax::fit(
                records.iter().map(|r| r.econ_interdependence),
                "econ_interdependence",
            )?,
            capability: MinMax::fit(records.iter().map(|r| r.capability), "capability")?,
        })
    }

    pub fn features(&self, r: &DyadRecord) -> [f64; 7] {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        [
            self.distance.apply(r.distance_km),
            flag(r.contiguity),
            f64::from(r.major_power_count.min(2)) * 0.5,
            flag(r.allied),
            self.democracy.apply(r.democracy_score),
            self.econ_interdependence.apply(r.econ_interdependence),
            self.capability.apply(r.capability),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: FeatureVector,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Row>,
    pub params: NormalizationParams,
}

impl Dataset {
    pub fn count(&self, label: Label) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    /// Training samples with targets from `encoding`.
    pub fn samples(&self, encoding: &LabelEncoding) -> Vec<Sample> {
        self.rows
            .iter()
            .map(|r| Sample {
                x: r.features.to_vec(),
                target: encoding.value_of(r.label),
            })
            .collect()
    }
}

fn canonical_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Fits min-max parameters on `records` and normalizes them.
pub fn normalize(records: &[DyadRecord]) -> Result<Dataset, DataError> {
    for (i, r) in records.iter().enumerate() {
        r.validate(i)?;
    }
    let params = NormalizationParams::fit(records)?;
    normalize_with(records, &params)
}

/// Normalizes with previously fitted parameters, e.g. test data against the
/// training batch's ranges.
pub fn normalize_with(
    records: &[DyadRecord],
    params: &NormalizationParams,
) -> Result<Dataset, DataError> {
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.validate(i)?;
            Ok(Row {
                features: FeatureVector::new(params.features(r).to_vec())
                    .expect("normalized features lie in [0, 1]"),
                label: r.label,
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Ok(Dataset {
        feature_names: canonical_names(),
        rows,
        params: *params,
    })
}

/// Draws `n_train_per_class` rows of each label uniformly without
/// replacement for training and `n_test_per_class` of each from the rest for
/// testing. Selected rows keep their original relative order.
pub fn split_balanced(
    dataset: &Dataset,
    n_train_per_class: usize,
    n_test_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::with_capacity(2 * n_train_per_class);
    let mut test_idx = Vec::with_capacity(2 * n_test_per_class);
    for label in [Consequent::War, Consequent::Peace] {
        let mut pool: Vec<usize> = (0..dataset.rows.len())
            .filter(|&i| dataset.rows[i].label == label)
            .collect();
        let requested = n_train_per_class + n_test_per_class;
        if pool.len() < requested {
            return Err(DataError::InsufficientClassRows {
                label,
                requested,
                available: pool.len(),
            });
        }
        pool.shuffle(&mut rng);
        train_idx.extend_from_slice(&pool[..n_train_per_class]);
        test_idx.extend_from_slice(&pool[n_train_per_class..requested]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let take = |idx: &[usize]| Dataset {
        feature_names: dataset.feature_names.clone(),
        rows: idx.iter().map(|&i| dataset.rows[i].clone()).collect(),
        params: dataset.params,
    };
    Ok((take(&train_idx), take(&test_idx)))
}

/// Labeling rule for synthetic data, applied to normalized features.
///
/// War when
/// `w_distance·(1−distance) + w_contiguity·contiguity + w_democracy·(1−democracy)
///  + w_allies·(1−allies) + w_econ·(1−econ_interdependence) > threshold`,
/// then each label flips with probability `label_noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundTruth {
    pub w_distance: f64,
    pub w_contiguity: f64,
    pub w_democracy: f64,
    pub w_allies: f64,
    pub w_econ: f64,
    pub threshold: f64,
    pub label_noise: f64,
}

impl Default for GroundTruth {
    fn default() -> Self {
        Self {
            w_distance: 0.30,
            w_contiguity: 0.25,
            w_democracy: 0.20,
            w_allies: 0.15,
            w_econ: 0.10,
            threshold: 0.5,
            label_noise: 0.05,
        }
    }
}

impl GroundTruth {
    pub fn score(&self, f: &[f64]) -> f64 {
        self.w_distance * (1.0 - f[0])
            + self.w_contiguity * f[1]
            + self.w_democracy * (1.0 - f[4])
            + self.w_allies * (1.0 - f[3])
            + self.w_econ * (1.0 - f[5])
    }

    /// Noise-free label.
    pub fn label(&self, f: &[f64]) -> Label {
        if self.score(f) > self.threshold {
            Consequent::War
        } else {
            Consequent::Peace
        }
    }
}

/// Raw ranges the synthetic generator draws from.
pub mod synthetic_ranges {
    /// Capital-to-capital distance, uniform.
    pub const DISTANCE_KM: (f64, f64) = (10.0, 20_000.0);
    /// Probability the pair shares a border.
    pub const P_CONTIGUOUS: f64 = 0.5;
    /// Probability of 0, 1 and 2 major powers in the pair.
    pub const MAJOR_POWER_WEIGHTS: [f64; 3] = [0.6, 0.3, 0.1];
    pub const P_ALLIED: f64 = 0.5;
    /// Joint regime score on a polity-style scale, uniform.
    pub const DEMOCRACY_SCORE: (f64, f64) = (-10.0, 10.0);
    /// Trade share of joint GDP, uniform.
    pub const ECON_INTERDEPENDENCE: (f64, f64) = (0.0, 0.25);
    /// Capability ratio of the stronger to the weaker side minus one, uniform.
    pub const CAPABILITY: (f64, f64) = (0.0, 10.0);
}

/// Draws `n_rows` records and labels them with `truth` after normalizing the
/// batch. Batches too small to min-max fall back to the documented ranges.
pub fn generate_synthetic(n_rows: usize, seed: u64, truth: &GroundTruth) -> Vec<DyadRecord> {
    use synthetic_ranges::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<DyadRecord> = (0..n_rows)
        .map(|_| {
            let u: f64 = rng.random();
            let [w0, w1, _] = MAJOR_POWER_WEIGHTS;
            let major_power_count = if u < w0 {
                0
            } else if u < w0 + w1 {
                1
            } else {
                2
            };
            DyadRecord {
                distance_km: rng.random_range(DISTANCE_KM.0..=DISTANCE_KM.1),
                contiguity: rng.random_bool(P_CONTIGUOUS),
                major_power_count,
                allied: rng.random_bool(P_ALLIED),
                democracy_score: rng.random_range(DEMOCRACY_SCORE.0..=DEMOCRACY_SCORE.1),
                econ_interdependence: rng
                    .random_range(ECON_INTERDEPENDENCE.0..=ECON_INTERDEPENDENCE.1),
                capability: rng.random_range(CAPABILITY.0..=CAPABILITY.1),
                label: Consequent::Peace,
            }
        })
        .collect();

    let params = NormalizationParams::fit(&records).unwrap_or({
        let mm = |(min, max)| MinMax { min, max };
        NormalizationParams {
            distance: mm(DISTANCE_KM),
            democracy: mm(DEMOCRACY_SCORE),
            econ_interdependence: mm(ECON_INTERDEPENDENCE),
            capability: mm(CAPABILITY),
        }
    });
    let noise = truth.label_noise.clamp(0.0, 1.0);
    for r in &mut records {
        let clean = truth.label(&params.features(r));
        let flip = rng.random_bool(noise);
        r.label = match (clean, flip) {
            (Consequent::War, false) | (Consequent::Peace, true) => Consequent::War,
            _ => Consequent::Peace,
        };
    }
    records
}
