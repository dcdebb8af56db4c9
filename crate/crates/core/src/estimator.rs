//! Competence estimation from exercise outcomes and the learning-progress
//! reward derived from it.

use serde::{Deserialize, Serialize};

use crate::model::CompetenceVector;

/// Default rate at which estimates move toward the exercise's required level.
pub const DEFAULT_ALPHA: f64 = 0.6;

/// Estimated competences of one student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentEstimate {
    c: CompetenceVector,
    alpha: f64,
}

/// Reward produced by one outcome: the signed sum of the corrections that
/// were actually applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReward {
    pub total: f64,
    /// Applied correction per KC, `0.0` where the estimate was left alone.
    pub per_kc: Vec<f64>,
}

impl StudentEstimate {
    /// Fresh estimate with every KC at zero.
    pub fn new(n_kcs: usize, alpha: f64) -> Self {
        Self {
            c: CompetenceVector::zeros(n_kcs),
            alpha,
        }
    }

    pub fn with_levels(c: CompetenceVector, alpha: f64) -> Self {
        Self { c, alpha }
    }

    pub fn competences(&self) -> &CompetenceVector {
        &self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Returns the updated estimate and the reward, leaving `self` intact.
    pub fn update(&self, required: &CompetenceVector, correct: bool) -> (Self, OutcomeReward) {
        let mut next = self.clone();
        let reward = next.apply(required, correct);
        (next, reward)
    }

    /// In-place form of [`StudentEstimate::update`].
    ///
    /// A KC moves only when the outcome contradicts the estimate: a success on
    /// an activity requiring more than the estimate, or a failure on one
    /// requiring less. Equality moves nothing.
    pub fn apply(&mut self, required: &CompetenceVector, correct: bool) -> OutcomeReward {
        debug_assert_eq!(required.len(), self.c.len());
        let mut per_kc = vec![0.0; self.c.len()];
        let mut total = 0.0;
        for (kc, applied) in per_kc.iter_mut().enumerate() {
            let current = self.c.get(kc);
            let gap = required.get(kc) - current;
            if (correct && gap > 0.0) || (!correct && gap < 0.0) {
                self.c.set(kc, current + self.alpha * gap);
                *applied = gap;
                total += gap;
            }
        }
        OutcomeReward { total, per_kc }
    }
}
