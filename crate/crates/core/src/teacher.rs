//! Factored bandit teacher: one reward-tracking filter per activity parameter,
//! sampled through a greedy/uniform mixture restricted to unlocked values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimator::DEFAULT_ALPHA;
use crate::model::{Activity, ParameterSpace, ValueMask};

/// Hyperparameters of the estimator and the per-parameter filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiaritParams {
    /// Estimator update rate, in `(0, 1]`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Filter decay, in `(0, 1]`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Filter gain on the reward, `> 0`.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Weight of the uniform exploration component, in `[0, 1]`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Lower clamp for filter weights, `> 0`.
    #[serde(default = "default_w_floor")]
    pub w_floor: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_beta() -> f64 {
    0.9
}
fn default_eta() -> f64 {
    0.5
}
fn default_gamma() -> f64 {
    0.1
}
fn default_w_floor() -> f64 {
    1e-4
}

impl Default for RiaritParams {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            eta: default_eta(),
            gamma: default_gamma(),
            w_floor: default_w_floor(),
        }
    }
}

impl RiaritParams {
    /// Returns a description of the first out-of-range field.
    pub fn check(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(format!("beta must be in (0, 1], got {}", self.beta));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.w_floor > 0.0 && self.w_floor.is_finite()) {
            return Err(format!("w_floor must be positive, got {}", self.w_floor));
        }
        Ok(())
    }
}

/// Per-parameter weight vectors tracking recent reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditFilter {
    weights: Vec<Vec<f64>>,
    beta: f64,
    eta: f64,
    gamma: f64,
    w_floor: f64,
}

impl BanditFilter {
    /// Uniform initial weights `1 / #values` for every parameter.
    pub fn new(space: &ParameterSpace, params: &RiaritParams) -> Self {
        let weights = space
            .parameters()
            .iter()
            .map(|p| vec![1.0 / p.values.len() as f64; p.values.len()])
            .collect();
        Self::from_weights(weights, params)
    }

    pub fn from_weights(weights: Vec<Vec<f64>>, params: &RiaritParams) -> Self {
        Self {
            weights,
            beta: params.beta,
            eta: params.eta,
            gamma: params.gamma,
            w_floor: params.w_floor,
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Proposal probabilities for one parameter, `0.0` on masked values.
    ///
    /// The allowed weights are normalized and mixed with a uniform
    /// distribution: `p = (1 - gamma) * w_norm + gamma / n_allowed`.
    ///
    /// # Panics
    /// If the mask leaves no value for `param`.
    pub fn probabilities(&self, param: usize, mask: &ValueMask) -> Vec<f64> {
        let row = &self.weights[param];
        let allowed = mask.row(param);
        let n_allowed = allowed.iter().filter(|&&ok| ok).count();
        assert!(n_allowed > 0, "parameter {param} has no allowed value");

        let total: f64 = row
            .iter()
            .zip(allowed)
            .filter_map(|(w, &ok)| ok.then_some(*w))
            .sum();
        let uniform = 1.0 / n_allowed as f64;
        row.iter()
            .zip(allowed)
            .map(|(&w, &ok)| {
                if !ok {
                    0.0
                } else if total > 0.0 {
                    (1.0 - self.gamma) * w / total + self.gamma * uniform
                } else {
                    uniform
                }
            })
            .collect()
    }

    /// Samples one value per parameter, independently.
    pub fn sample_activity<R: Rng + ?Sized>(&self, mask: &ValueMask, rng: &mut R) -> Activity {
        let values = (0..self.weights.len())
            .map(|j| sample_index(&self.probabilities(j, mask), rng))
            .collect();
        Activity::new(values)
    }

    /// Updates only the chosen value of each parameter:
    /// `w <- max(w_floor, beta * w + eta * reward)`.
    pub fn update(&mut self, activity: &Activity, reward: f64) {
        for (row, &v) in self.weights.iter_mut().zip(activity.values()) {
            row[v] = (self.beta * row[v] + self.eta * reward).max(self.w_floor);
        }
    }

    /// Value-semantics form of [`BanditFilter::update`].
    pub fn updated(&self, activity: &Activity, reward: f64) -> Self {
        let mut next = self.clone();
        next.update(activity, reward);
        next
    }
}

/// Inverse-CDF draw from a discrete distribution.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair below 1.
    last
}
