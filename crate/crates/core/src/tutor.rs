//! A per-student tutor: the competence estimate plus whichever teacher picks
//! the activities. Simulation and live sessions both drive this type.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::StageProgress;
use crate::config::Scenario;
use crate::estimator::{OutcomeReward, StudentEstimate};
use crate::model::{Activity, CompetenceVector};
use crate::teacher::BanditFilter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Riarit,
    Predefined,
}

impl TeacherKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TeacherKind::Riarit => "riarit",
            TeacherKind::Predefined => "predefined",
        }
    }
}

impl std::fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TeacherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "riarit" => Ok(TeacherKind::Riarit),
            "predefined" => Ok(TeacherKind::Predefined),
            other => Err(format!("unknown teacher `{other}` (expected riarit or predefined)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Teacher {
    Riarit(BanditFilter),
    Predefined(StageProgress),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tutor {
    pub teacher: Teacher,
    pub estimate: StudentEstimate,
}

impl Tutor {
    pub fn new(kind: TeacherKind, scenario: &Scenario) -> Self {
        let teacher = match kind {
            TeacherKind::Riarit => Teacher::Riarit(BanditFilter::new(&scenario.space, &scenario.riarit)),
            TeacherKind::Predefined => Teacher::Predefined(StageProgress::new()),
        };
        Self {
            teacher,
            estimate: StudentEstimate::new(scenario.kc_count(), scenario.riarit.alpha),
        }
    }

    pub fn kind(&self) -> TeacherKind {
        match self.teacher {
            Teacher::Riarit(_) => TeacherKind::Riarit,
            Teacher::Predefined(_) => TeacherKind::Predefined,
        }
    }

    pub fn competences(&self) -> &CompetenceVector {
        self.estimate.competences()
    }

    /// The next activity: a masked bandit draw or the current stage.
    pub fn propose<R: Rng + ?Sized>(&self, scenario: &Scenario, rng: &mut R) -> Activity {
        match &self.teacher {
            Teacher::Riarit(filter) => {
                let mask = scenario.allowed_values(self.estimate.competences());
                filter.sample_activity(&mask, rng)
            }
            Teacher::Predefined(progress) => {
                progress.next_activity(&scenario.stages, scenario.baseline.alternative_pick, rng)
            }
        }
    }

    /// Feeds one exercise outcome to the estimator and the teacher.
    pub fn observe(&mut self, scenario: &Scenario, activity: &Activity, correct: bool) -> OutcomeReward {
        let required = scenario.required_competence(activity);
        let reward = self.estimate.apply(&required, correct);
        match &mut self.teacher {
            Teacher::Riarit(filter) => filter.update(activity, reward.total),
            Teacher::Predefined(progress) => {
                progress.record(correct);
            }
        }
        reward
    }
}
