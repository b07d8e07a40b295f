//! Simulated annealing over the unit box with lockable coordinates.
//!
//! Proposals add zero-mean Gaussian noise of standard deviation
//! `proposal_scale * T` to every free coordinate and clamp back into `[0, 1]`.
//! Acceptance is Metropolis. The temperature drops geometrically every
//! `steps_per_temperature` proposals. Each restart is an independent chain
//! from `x0` on its own ChaCha stream; the best restart wins, ties going to
//! the lowest restart index.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnealError {
    #[error("objective returned non-finite value {value} at evaluation {eval_index}")]
    NonFiniteObjective { eval_index: u64, value: f64 },
    #[error("start point has {got} coordinates but the free mask has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("start coordinate {index} = {value} is outside [0, 1]")]
    StartOutOfBox { index: usize, value: f64 },
    #[error("invalid anneal config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub initial_temperature: f64,
    pub cooling_factor: f64,
    pub steps_per_temperature: u32,
    pub min_temperature: f64,
    /// Proposal standard deviation per unit temperature, in normalized
    /// feature units. Above `T ≈ 0.1 / proposal_scale` proposals cover the
    /// whole box; below it the search turns local.
    pub proposal_scale: f64,
    pub target_error: f64,
    /// Total objective evaluations across all restarts, excluding the one
    /// spent scoring `x0`.
    pub max_evaluations: u64,
    pub restarts: u32,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            initial_temperature: 1.0,
            cooling_factor: 0.95,
            steps_per_temperature: 50,
            min_temperature: 1e-4,
            proposal_scale: 10.0,
            target_error: 1e-4,
            max_evaluations: 200_000,
            restarts: 4,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<(), AnnealError> {
        let bad = |m: &str| Err(AnnealError::InvalidConfig(m.to_string()));
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return bad("initial_temperature must be > 0");
        }
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return bad("cooling_factor must lie in (0, 1)");
        }
        if self.steps_per_temperature == 0 {
            return bad("steps_per_temperature must be >= 1");
        }
        if !(self.min_temperature > 0.0 && self.min_temperature < self.initial_temperature) {
            return bad("min_temperature must lie in (0, initial_temperature)");
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return bad("proposal_scale must be > 0");
        }
        if !(self.target_error >= 0.0) {
            return bad("target_error must be >= 0");
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        Ok(())
    }
}

/// One accepted move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: u32,
    /// 1-based index among all proposals of the run.
    pub eval_index: u64,
    pub temperature: f64,
    /// Objective at the accepted point.
    pub error: f64,
    /// Best objective seen so far in this restart.
    pub best_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnealTrace {
    pub records: Vec<TraceRecord>,
    pub best_per_restart: Vec<f64>,
}

impl AnnealTrace {
    /// Header-bearing `eval_index,temperature,error` table.
    pub fn to_csv(&self) -> String {
        use core::fmt::Write;
        let mut out = String::from("eval_index,temperature,error\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:?},{:?}", r.eval_index, r.temperature, r.error);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub x_best: Vec<f64>,
    pub error_best: f64,
    pub evaluations: u64,
    pub trace: AnnealTrace,
}

/// Perturbs free coordinates of `x` and clamps to `[0, 1]`. Locked
/// coordinates are copied bit-for-bit.
pub fn propose<R: Rng + ?Sized>(
    x: &[f64],
    free_mask: &[bool],
    scale: f64,
    temperature: f64,
    rng: &mut R,
) -> Vec<f64> {
    let sd = scale * temperature;
    x.iter()
        .zip(free_mask)
        .map(|(&xi, &free)| {
            if free {
                let z: f64 = rng.sample(StandardNormal);
                (xi + sd * z).clamp(0.0, 1.0)
            } else {
                xi
            }
        })
        .collect()
}

/// Metropolis acceptance.
pub fn accept<R: Rng + ?Sized>(delta_error: f64, temperature: f64, rng: &mut R) -> bool {
    if delta_error <= 0.0 {
        return true;
    }
    let p = libm::exp(-delta_error / temperature);
    rng.random::<f64>() < p
}

fn check_finite(value: f64, eval_index: u64) -> Result<f64, AnnealError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AnnealError::NonFiniteObjective { eval_index, value })
    }
}

/// Minimizes `objective` starting from `x0`, moving only coordinates whose
/// `free_mask` entry is true.
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    free_mask: &[bool],
    config: &AnnealConfig,
) -> Result<AnnealOutcome, AnnealError>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    if x0.len() != free_mask.len() {
        return Err(AnnealError::DimensionMismatch {
            expected: free_mask.len(),
            got: x0.len(),
        });
    }
    if let Some((index, &value)) = x0
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(AnnealError::StartOutOfBox { index, value });
    }

    let start_error = check_finite(objective(x0), 0)?;
    let mut overall = AnnealOutcome {
        x_best: x0.to_vec(),
        error_best: start_error,
        evaluations: 0,
        trace: AnnealTrace::default(),
    };
    let any_free = free_mask.iter().any(|&f| f);
    if !any_free || start_error <= config.target_error || config.max_evaluations == 0 {
        return Ok(overall);
    }

    let restarts = u64::from(config.restarts);
    let share = config.max_evaluations / restarts;
    let extra = config.max_evaluations % restarts;
    let mut eval_index = 0u64;

    for restart in 0..config.restarts {
        let budget = share + u64::from(u64::from(restart) < extra);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::from(restart));

        let mut current = x0.to_vec();
        let mut current_error = start_error;
        let mut best = current.clone();
        let mut best_error = start_error;
        let mut temperature = config.initial_temperature;
        let mut used = 0u64;
        let mut steps_at_t = 0u32;

        while used < budget
            && temperature >= config.min_temperature
            && best_error > config.target_error
        {
            let candidate = propose(
                &current,
                free_mask,
                config.proposal_scale,
                temperature,
                &mut rng,
            );
            used += 1;
            eval_index += 1;
            let err = check_finite(objective(&candidate), eval_index)?;
            if accept(err - current_error, temperature, &mut rng) {
                current = candidate;
                current_error = err;
                if err < best_error {
                    best_error = err;
                    best.copy_from_slice(&current);
                }
                overall.trace.records.push(TraceRecord {
                    restart,
                    eval_index,
                    temperature,
                    error: err,
                    best_error,
                });
            }
            steps_at_t += 1;
            if steps_at_t == config.steps_per_temperature {
                steps_at_t = 0;
                temperature *= config.cooling_factor;
            }
        }

        overall.trace.best_per_restart.push(best_error);
        // strict: ties keep the earlier restart
        if best_error < overall.error_best {
            overall.error_best = best_error;
            overall.x_best = best;
        }
    }
    overall.evaluations = eval_index;
    Ok(overall)
}
