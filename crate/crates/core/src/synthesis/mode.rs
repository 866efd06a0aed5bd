//! Failure-driven choice between template filling and writing from scratch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.5;
pub const DEFAULT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    FillInBlank,
    FromScratch,
}

impl SynthesisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthesisMode::FillInBlank => "fill_in_blank",
            SynthesisMode::FromScratch => "from_scratch",
        }
    }
}

impl std::fmt::Display for SynthesisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probability of using template filling after `failures` failed attempts.
pub fn adaptation_probability(failures: u32, decay: f64) -> f64 {
    decay.powi(failures.min(i32::MAX as u32) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeDecision {
    pub mode: SynthesisMode,
    pub failures: u32,
    pub probability: f64,
    /// Uniform draw compared against the probability; absent once the
    /// state is absorbed.
    pub draw: Option<f64>,
    pub absorbed: bool,
}

/// Mode-adaptation state of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub failures: u32,
    pub decay: f64,
    pub floor: f64,
    pub seed: u64,
    /// Draws taken so far; each draw uses its own ChaCha stream so the
    /// state stays a handful of plain numbers.
    pub draws: u64,
    pub absorbed: bool,
}

impl ModeState {
    pub fn new(decay: f64, floor: f64, seed: u64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Config(format!(
                "decay must be in (0, 1), got {decay}"
            )));
        }
        if !(floor > 0.0 && floor < 1.0) {
            return Err(Error::Config(format!(
                "floor must be in (0, 1), got {floor}"
            )));
        }
        Ok(ModeState {
            failures: 0,
            decay,
            floor,
            seed,
            draws: 0,
            absorbed: false,
        })
    }

    pub fn probability(&self) -> f64 {
        adaptation_probability(self.failures, self.decay)
    }

    pub fn record_failure(&mut self) {
        self.failures = self.failures.saturating_add(1);
    }

    fn next_uniform(&mut self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.draws);
        self.draws += 1;
        rng.random::<f64>()
    }

    /// Picks the mode of the next attempt. Once the probability drops
    /// under the floor the state is absorbed into writing from scratch.
    pub fn decide(&mut self) -> ModeDecision {
        let probability = self.probability();
        if self.absorbed || probability < self.floor {
            if !self.absorbed {
                log::info!(
                    "fill probability {probability} fell below floor {} after {} failures; switching to from_scratch for good",
                    self.floor,
                    self.failures
                );
            }
            self.absorbed = true;
            return ModeDecision {
                mode: SynthesisMode::FromScratch,
                failures: self.failures,
                probability,
                draw: None,
                absorbed: true,
            };
        }
        let u = self.next_uniform();
        let mode = if u < probability {
            SynthesisMode::FillInBlank
        } else {
            SynthesisMode::FromScratch
        };
        log::info!("mode {mode}: draw {u:.6} against probability {probability}");
        ModeDecision {
            mode,
            failures: self.failures,
            probability,
            draw: Some(u),
            absorbed: false,
        }
    }
}
