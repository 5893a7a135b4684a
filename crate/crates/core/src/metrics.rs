//! Dataset-level NSV aggregates and the win/tie consistency score (SEC).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dataset is empty")]
    Empty,
    #[error("total mesh volume is not positive")]
    NoVolume,
    #[error("prompt ids differ between datasets: only in ours {only_ours:?}, only in baseline {only_baseline:?}")]
    PromptMismatch {
        only_ours: Vec<String>,
        only_baseline: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub prompt_id: String,
    pub sample_id: String,
    pub mesh_volume: f64,
    pub support_volume: f64,
    pub nsv: f64,
}

impl ScoreEntry {
    pub fn new(prompt_id: impl Into<String>, sample_id: impl Into<String>, mesh_volume: f64, support_volume: f64) -> Self {
        ScoreEntry {
            prompt_id: prompt_id.into(),
            sample_id: sample_id.into(),
            mesh_volume,
            support_volume,
            nsv: support_volume / mesh_volume,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetScores {
    pub entries: Vec<ScoreEntry>,
}

impl DatasetScores {
    pub fn new(entries: Vec<ScoreEntry>) -> Self {
        DatasetScores { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean NSV per prompt id.
    pub fn per_prompt_nsv(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for e in &self.entries {
            let slot = acc.entry(e.prompt_id.clone()).or_default();
            slot.0 += e.nsv;
            slot.1 += 1;
        }
        acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub nsv_weighted_a: f64,
    pub nsv_weighted_b: f64,
    pub nsv_star_a: f64,
    pub nsv_star_b: f64,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub sec: f64,
}

impl ComparisonResult {
    pub fn compared(&self) -> usize {
        self.wins + self.ties + self.losses
    }
}

/// Total support volume over total mesh volume.
pub fn nsv_weighted(scores: &DatasetScores) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let support: f64 = scores.entries.iter().map(|e| e.support_volume).sum();
    let volume: f64 = scores.entries.iter().map(|e| e.mesh_volume).sum();
    if !(volume > 0.0) {
        return Err(MetricsError::NoVolume);
    }
    Ok(support / volume)
}

/// Arithmetic mean of per-entry NSV.
pub fn nsv_star(scores: &DatasetScores) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(scores.entries.iter().map(|e| e.nsv).sum::<f64>() / scores.len() as f64)
}

/// Per prompt, a tie when the mean NSVs differ by at most `tie_threshold`,
/// otherwise a win when ours is lower. SEC is `(wins + ties) / prompts`.
pub fn sec(ours: &DatasetScores, baseline: &DatasetScores, tie_threshold: f64) -> Result<ComparisonResult, MetricsError> {
    let a = ours.per_prompt_nsv();
    let b = baseline.per_prompt_nsv();
    let keys_a: BTreeSet<&String> = a.keys().collect();
    let keys_b: BTreeSet<&String> = b.keys().collect();
    if keys_a != keys_b {
        return Err(MetricsError::PromptMismatch {
            only_ours: keys_a.difference(&keys_b).map(|s| s.to_string()).collect(),
            only_baseline: keys_b.difference(&keys_a).map(|s| s.to_string()).collect(),
        });
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut wins, mut ties, mut losses) = (0, 0, 0);
    for (prompt, &ours_nsv) in &a {
        let base_nsv = b[prompt];
        if (ours_nsv - base_nsv).abs() <= tie_threshold {
            ties += 1;
        } else if ours_nsv < base_nsv {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    Ok(ComparisonResult {
        nsv_weighted_a: nsv_weighted(ours)?,
        nsv_weighted_b: nsv_weighted(baseline)?,
        nsv_star_a: nsv_star(ours)?,
        nsv_star_b: nsv_star(baseline)?,
        wins,
        ties,
        losses,
        sec: (wins + ties) as f64 / a.len() as f64,
    })
}
