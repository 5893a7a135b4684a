//! Desk-scale alignment run on the tabletop shape family.
//!
//! The "generator" is a Gaussian over two latent shape parameters whose mean
//! is shifted per prompt. Latents decode to a [`Tabletop`]: the first sets how
//! far the slab overhangs the column, the second sets the column height (the
//! column volume is fixed). Each step draws samples for every training prompt,
//! scores them with the support simulation, builds preference pairs, and takes
//! one gradient step on the mean ODPO loss. The frozen initial policy is the
//! reference. Every sample draws from its own seeded stream, so parallel
//! simulation does not change results.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{enumerate_pairs, loss_gradients, odpo_loss, AlignmentConfig, PolicyLogProbs, PreferenceError, SampleRecord};
use crate::mesh::{BedPlane, PrintSetup};
use crate::metrics::{DatasetScores, ScoreEntry};
use crate::shapes::Tabletop;
use crate::support::{simulate, SupportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToyError {
    #[error("policy parameters became non-finite at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Config(#[from] PreferenceError),
    #[error("support simulation failed: {0}")]
    Simulation(#[from] SupportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub steps: usize,
    pub seed: u64,
    pub samples_per_prompt: usize,
    pub prompts: usize,
    pub learning_rate: f64,
    /// Standard deviation of the policy along each latent axis (fixed).
    pub policy_std: f64,
    pub initial_mean: [f64; 2],
    /// Standard deviation of the per-prompt latent shift.
    pub prompt_spread: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            steps: 200,
            seed: 0,
            samples_per_prompt: 10,
            prompts: 8,
            learning_rate: 0.05,
            policy_std: 0.5,
            initial_mean: [1.0, 1.0],
            prompt_spread: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub mean_nsv: f64,
    /// Mean ODPO loss over the step's pairs; 0 when no pair was formed.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub trajectory: Vec<TrajectoryPoint>,
    pub initial_mean: [f64; 2],
    pub final_mean: [f64; 2],
}

impl ToyRun {
    pub fn initial_mean_nsv(&self) -> f64 {
        self.trajectory[0].mean_nsv
    }

    pub fn final_mean_nsv(&self) -> f64 {
        self.trajectory.last().expect("trajectory is never empty").mean_nsv
    }
}

const SLAB_THICKNESS: f64 = 0.3;
const COLUMN_VOLUME: f64 = 1.0;
const MIN_COLUMN_HEIGHT: f64 = 0.25;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Decodes a latent sample into tabletop dimensions.
pub fn decode(latent: Vector2<f64>) -> Tabletop {
    Tabletop {
        overhang: softplus(latent.x),
        column_height: MIN_COLUMN_HEIGHT + softplus(latent.y),
        column_volume: COLUMN_VOLUME,
        slab_thickness: SLAB_THICKNESS,
    }
}

/// NSV of a decoded sample, computed by the support simulation.
pub fn sample_nsv(latent: Vector2<f64>) -> Result<f64, SupportError> {
    let mesh = decode(latent).mesh();
    let setup = PrintSetup::default().with_bed(BedPlane::At(0.0));
    Ok(simulate(&mesh, &setup)?.nsv)
}

// stream domains keep training draws, prompt shifts and evaluation draws apart
const TRAIN: u64 = 1 << 60;
const TRAIN_PROMPT: u64 = 2 << 60;
const EVAL_PROMPT: u64 = 3 << 60;
const EVAL_NOISE: u64 = 4 << 60;

fn normal_pair(seed: u64, stream: u64) -> Vector2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
}

/// Gaussian log-density up to the shared constant, which cancels in every margin.
fn log_density(latent: &Vector2<f64>, mean: &Vector2<f64>, std: f64) -> f64 {
    -(latent - mean).norm_squared() / (2.0 * std * std)
}

fn grad_log_density(latent: &Vector2<f64>, mean: &Vector2<f64>, std: f64) -> Vector2<f64> {
    (latent - mean) / (std * std)
}

struct Drawn {
    prompt: usize,
    latent: Vector2<f64>,
    nsv: f64,
}

pub fn run_toy_alignment(config: &AlignmentConfig, toy: &ToyConfig) -> Result<ToyRun, ToyError> {
    config.validate()?;
    let shifts: Vec<Vector2<f64>> = (0..toy.prompts)
        .map(|p| normal_pair(toy.seed, TRAIN_PROMPT | p as u64) * toy.prompt_spread)
        .collect();
    let reference = Vector2::from(toy.initial_mean);
    let mut mean = reference;
    let mut trajectory = Vec::with_capacity(toy.steps + 1);

    for step in 0..=toy.steps {
        let draws: Vec<Drawn> = (0..toy.prompts * toy.samples_per_prompt)
            .into_par_iter()
            .map(|k| {
                let (prompt, sample) = (k / toy.samples_per_prompt, k % toy.samples_per_prompt);
                let stream = TRAIN | (step as u64) << 24 | (prompt as u64) << 12 | sample as u64;
                let latent = mean + shifts[prompt] + normal_pair(toy.seed, stream) * toy.policy_std;
                Ok(Drawn { prompt, latent, nsv: sample_nsv(latent)? })
            })
            .collect::<Result<_, SupportError>>()?;
        let mean_nsv = draws.iter().map(|d| d.nsv).sum::<f64>() / draws.len().max(1) as f64;

        let records: Vec<SampleRecord> = draws
            .iter()
            .enumerate()
            .map(|(k, d)| SampleRecord::new(d.prompt.to_string(), k.to_string(), d.nsv))
            .collect();
        let pairs = enumerate_pairs(&records, config).pairs;

        let mut loss = 0.0;
        let mut grad = Vector2::zeros();
        for pair in &pairs {
            let w = &draws[pair.winner_id.parse::<usize>().expect("ids are indices")];
            let l = &draws[pair.loser_id.parse::<usize>().expect("ids are indices")];
            let (pm_w, pm_l) = (mean + shifts[w.prompt], mean + shifts[l.prompt]);
            let (rm_w, rm_l) = (reference + shifts[w.prompt], reference + shifts[l.prompt]);
            let lp = PolicyLogProbs {
                logp_w: log_density(&w.latent, &pm_w, toy.policy_std),
                logp_l: log_density(&l.latent, &pm_l, toy.policy_std),
                ref_logp_w: log_density(&w.latent, &rm_w, toy.policy_std),
                ref_logp_l: log_density(&l.latent, &rm_l, toy.policy_std),
            };
            loss += odpo_loss(&lp, pair.offset, config.beta);
            let g = loss_gradients(&lp, pair.offset, config.beta);
            grad += grad_log_density(&w.latent, &pm_w, toy.policy_std) * g.logp_w
                + grad_log_density(&l.latent, &pm_l, toy.policy_std) * g.logp_l;
        }
        if !pairs.is_empty() {
            loss /= pairs.len() as f64;
            grad /= pairs.len() as f64;
        }
        trajectory.push(TrajectoryPoint { step, mean_nsv, loss });

        if step == toy.steps {
            break;
        }
        mean -= grad * toy.learning_rate;
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(ToyError::Divergence { step });
        }
    }

    Ok(ToyRun { trajectory, initial_mean: toy.initial_mean, final_mean: [mean.x, mean.y] })
}

/// Scores `prompts` held-out prompts, one sample each, under two policy means
/// with shared noise. Returns `(scores under first, scores under second)`.
pub fn evaluate_heldout(
    first: [f64; 2],
    second: [f64; 2],
    toy: &ToyConfig,
    prompts: usize,
) -> Result<(DatasetScores, DatasetScores), ToyError> {
    let score = |mean: [f64; 2]| -> Result<DatasetScores, ToyError> {
        let entries = (0..prompts)
            .into_par_iter()
            .map(|p| {
                let shift = normal_pair(toy.seed, EVAL_PROMPT | p as u64) * toy.prompt_spread;
                let noise = normal_pair(toy.seed, EVAL_NOISE | p as u64) * toy.policy_std;
                let shape = decode(Vector2::from(mean) + shift + noise);
                let mesh = shape.mesh();
                let setup = PrintSetup::default().with_bed(BedPlane::At(0.0));
                let report = simulate(&mesh, &setup)?;
                Ok(ScoreEntry::new(format!("heldout-{p}"), "0", report.mesh_volume, report.support_volume))
            })
            .collect::<Result<Vec<_>, SupportError>>()?;
        Ok(DatasetScores::new(entries))
    };
    Ok((score(first)?, score(second)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn short(steps: usize) -> ToyConfig {
        ToyConfig { steps, prompts: 3, samples_per_prompt: 4, ..Default::default() }
    }

    #[test]
    fn simulated_nsv_matches_closed_form() {
        for latent in [Vector2::new(1.0, 1.0), Vector2::new(-2.0, 0.3), Vector2::new(0.5, -1.5)] {
            let t = decode(latent);
            assert_relative_eq!(sample_nsv(latent).unwrap(), t.support_volume() / t.volume(), max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_steps_records_only_the_start() {
        let run = run_toy_alignment(&AlignmentConfig::default(), &short(0)).unwrap();
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.trajectory[0].step, 0);
        assert_eq!(run.final_mean, run.initial_mean);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = run_toy_alignment(&AlignmentConfig::default(), &short(5)).unwrap();
        let b = run_toy_alignment(&AlignmentConfig::default(), &short(5)).unwrap();
        assert_eq!(a, b);
        let c = run_toy_alignment(&AlignmentConfig::default(), &ToyConfig { seed: 9, ..short(5) }).unwrap();
        assert_ne!(a.trajectory, c.trajectory);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let toy = ToyConfig { learning_rate: f64::INFINITY, ..short(3) };
        assert!(matches!(
            run_toy_alignment(&AlignmentConfig::default(), &toy),
            Err(ToyError::Divergence { .. })
        ));
    }

    #[test]
    fn first_step_loss_is_softplus_of_offsets() {
        // policy equals reference at step 0, so each pair contributes ln(1 + e^offset)
        let run = run_toy_alignment(&AlignmentConfig { offset_fn: crate::preference::OffsetFn::None, ..Default::default() }, &short(0)).unwrap();
        assert_relative_eq!(run.trajectory[0].loss, std::f64::consts::LN_2, epsilon = 1e-12);
    }
}
