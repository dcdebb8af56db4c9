//! The expert's fixed ten-stage teaching sequence.
//!
//! Stages 1-5 advance after two consecutive successes, stages 6-9 after
//! three successes among the last four exercises of the stage. The last
//! stage is terminal. There is no demotion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::Activity;

pub const STAGE_COUNT: usize = 10;
/// Last stage that uses the two-consecutive-successes rule.
pub const LAST_CONSECUTIVE_STAGE: usize = 5;

/// How a stage that lists several values for one parameter picks among them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlternativePick {
    /// Fair draw per exercise.
    #[default]
    Random,
    /// Always the last listed value (e.g. always tokens for "Real or Token").
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineOptions {
    #[serde(default)]
    pub alternative_pick: AlternativePick,
}

/// One stage: the permitted value indices per parameter (usually one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub values: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTable {
    stages: Vec<Stage>,
}

impl StageTable {
    pub(crate) fn new(stages: Vec<Stage>) -> Self {
        Self { stages }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// 1-based stage lookup.
    pub fn stage(&self, stage: usize) -> &Stage {
        &self.stages[stage - 1]
    }
}

/// Position in the sequence plus the outcomes seen in the current stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageProgress {
    stage: usize,
    history: Vec<bool>,
}

impl Default for StageProgress {
    fn default() -> Self {
        Self::new()
    }
}

impl StageProgress {
    pub fn new() -> Self {
        Self {
            stage: 1,
            history: Vec::new(),
        }
    }

    pub fn at(stage: usize, history: Vec<bool>) -> Self {
        assert!((1..=STAGE_COUNT).contains(&stage), "stage {stage} out of range");
        Self { stage, history }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn history(&self) -> &[bool] {
        &self.history
    }

    /// The current stage's activity. The rng is only consumed when the stage
    /// lists several values for some parameter and picks at random.
    pub fn next_activity<R: Rng + ?Sized>(
        &self,
        table: &StageTable,
        pick: AlternativePick,
        rng: &mut R,
    ) -> Activity {
        let values = table
            .stage(self.stage)
            .values
            .iter()
            .map(|alternatives| match (alternatives.as_slice(), pick) {
                ([only], _) => *only,
                (many, AlternativePick::Random) => many[rng.random_range(0..many.len())],
                (many, AlternativePick::Last) => many[many.len() - 1],
            })
            .collect();
        Activity::new(values)
    }

    pub fn advance(&self, correct: bool) -> Self {
        let mut next = self.clone();
        next.record(correct);
        next
    }

    /// In-place form of [`StageProgress::advance`]; returns whether the stage changed.
    pub fn record(&mut self, correct: bool) -> bool {
        self.history.push(correct);
        if self.stage >= STAGE_COUNT {
            return false;
        }
        let n = self.history.len();
        let advance = if self.stage <= LAST_CONSECUTIVE_STAGE {
            n >= 2 && self.history[n - 2] && self.history[n - 1]
        } else {
            n >= 4 && self.history[n - 4..].iter().filter(|&&ok| ok).count() >= 3
        };
        if advance {
            self.stage += 1;
            self.history.clear();
        }
        advance
    }
}
