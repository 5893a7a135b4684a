//! Preference data built from simulated support volumes, and the DPO/ODPO
//! objectives used to train on it.
//!
//! Rewards are `r' = -NSV`: less support is better. Within each prompt every
//! pair of samples whose NSVs differ by more than the tie threshold becomes a
//! `(winner, loser)` tuple carrying the offset `alpha * log(1 + delta_r)`.

mod loss;
pub mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{dpo_loss, loss_gradients, odpo_loss, LossGradients, PolicyLogProbs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreferenceError {
    #[error("reward gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("invalid alignment config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OffsetFn {
    /// `alpha * ln(1 + delta_r)`.
    #[default]
    Log1p,
    /// No offset: plain DPO.
    None,
}

impl std::str::FromStr for OffsetFn {
    type Err = PreferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log1p" => Ok(OffsetFn::Log1p),
            "none" => Ok(OffsetFn::None),
            other => Err(PreferenceError::InvalidConfig(format!(
                "unknown offset function `{other}` (expected log1p or none)"
            ))),
        }
    }
}

impl std::fmt::Display for OffsetFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OffsetFn::Log1p => "log1p",
            OffsetFn::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub alpha: f64,
    pub offset_fn: OffsetFn,
    /// Temperature of the implicit reward `beta * (log pi - log pi_ref)`.
    pub beta: f64,
    pub tie_threshold: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            alpha: 1.0,
            offset_fn: OffsetFn::Log1p,
            beta: 1.0,
            tie_threshold: 1e-3,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<(), PreferenceError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(PreferenceError::InvalidConfig(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PreferenceError::InvalidConfig(format!("beta {} must be > 0", self.beta)));
        }
        if !(self.tie_threshold >= 0.0) {
            return Err(PreferenceError::InvalidConfig(format!(
                "tie threshold {} must be >= 0",
                self.tie_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub prompt_id: String,
    pub sample_id: String,
    pub nsv: f64,
}

impl SampleRecord {
    pub fn new(prompt_id: impl Into<String>, sample_id: impl Into<String>, nsv: f64) -> Self {
        SampleRecord { prompt_id: prompt_id.into(), sample_id: sample_id.into(), nsv }
    }

    pub fn reward(&self) -> f64 {
        -self.nsv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub winner_id: String,
    pub loser_id: String,
    pub nsv_w: f64,
    pub nsv_l: f64,
    /// `r'(winner) - r'(loser) = nsv_l - nsv_w`.
    pub delta_r: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<PreferencePair>,
    /// Prompts that produced no pair (fewer than two samples, or all tied).
    pub skipped_prompts: usize,
}

pub fn compute_offset(delta_r: f64, config: &AlignmentConfig) -> Result<f64, PreferenceError> {
    if !(delta_r > 0.0) {
        return Err(PreferenceError::NonPositiveGap(delta_r));
    }
    Ok(match config.offset_fn {
        OffsetFn::Log1p => config.alpha * delta_r.ln_1p(),
        OffsetFn::None => 0.0,
    })
}

/// All untied sample pairs per prompt, lower NSV as winner. Prompts keep their
/// first-appearance order and pairs follow sample order within a prompt.
pub fn enumerate_pairs(samples: &[SampleRecord], config: &AlignmentConfig) -> PairSet {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<&SampleRecord>> = Default::default();
    for s in samples {
        let g = groups.entry(s.prompt_id.as_str()).or_default();
        if g.is_empty() {
            order.push(&s.prompt_id);
        }
        g.push(s);
    }

    let mut set = PairSet::default();
    for prompt in order {
        let group = &groups[prompt];
        let before = set.pairs.len();
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                let (a, b) = (group[i], group[j]);
                if (a.nsv - b.nsv).abs() <= config.tie_threshold {
                    continue;
                }
                let (w, l) = if a.nsv < b.nsv { (a, b) } else { (b, a) };
                let delta_r = w.reward() - l.reward();
                let offset = compute_offset(delta_r, config).expect("untied pairs have a positive gap");
                set.pairs.push(PreferencePair {
                    prompt_id: prompt.to_string(),
                    winner_id: w.sample_id.clone(),
                    loser_id: l.sample_id.clone(),
                    nsv_w: w.nsv,
                    nsv_l: l.nsv,
                    delta_r,
                    offset,
                });
            }
        }
        if set.pairs.len() == before {
            set.skipped_prompts += 1;
        }
    }
    set
}
