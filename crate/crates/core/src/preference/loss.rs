//! Pairwise preference losses on implicit rewards.
//!
//! ```text
//! z      = beta * ((logp_w - ref_logp_w) - (logp_l - ref_logp_l))
//! L_DPO  = -ln sigmoid(z)
//! L_ODPO = -ln sigmoid(z - offset)
//! ```

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyLogProbs {
    pub logp_w: f64,
    pub logp_l: f64,
    pub ref_logp_w: f64,
    pub ref_logp_l: f64,
}

impl PolicyLogProbs {
    /// Implicit reward margin between winner and loser.
    pub fn margin(&self, beta: f64) -> f64 {
        beta * ((self.logp_w - self.ref_logp_w) - (self.logp_l - self.ref_logp_l))
    }
}

/// Partial derivatives of the loss with respect to each log-probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGradients {
    pub logp_w: f64,
    pub logp_l: f64,
    pub ref_logp_w: f64,
    pub ref_logp_l: f64,
}

/// `-ln sigmoid(x)` evaluated as `max(-x, 0) + ln(1 + e^{-|x|})`.
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dpo_loss(lp: &PolicyLogProbs, beta: f64) -> f64 {
    neg_log_sigmoid(lp.margin(beta))
}

pub fn odpo_loss(lp: &PolicyLogProbs, offset: f64, beta: f64) -> f64 {
    neg_log_sigmoid(lp.margin(beta) - offset)
}

/// Since `dL/dz = sigmoid(z - offset) - 1`, the winner's own log-probability
/// always has a non-positive gradient and the four partials sum to zero.
pub fn loss_gradients(lp: &PolicyLogProbs, offset: f64, beta: f64) -> LossGradients {
    let g = beta * (sigmoid(lp.margin(beta) - offset) - 1.0);
    LossGradients { logp_w: g, logp_l: -g, ref_logp_w: -g, ref_logp_l: g }
}
