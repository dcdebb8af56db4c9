//! Live tutoring sessions as a fold over an append-only event log.
//!
//! Every mutation is a command (`next_exercise`, `submit_answer`, `hint`,
//! `finish`) that appends one or more events. Replaying a log re-issues the
//! commands recorded in it and checks that each produces exactly the events
//! that follow, so a replayed session is bit-identical to the live one,
//! random generator included.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::SessionError;
use crate::exercise::{
    greedy_decomposition, validate_answer, AnswerSubmission, Catalog, ExerciseContext,
    ExerciseInstance, Verdict,
};
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::tutor::{TeacherKind, Tutor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    /// Enough successes on the mastery exercise type.
    Mastery,
    ExerciseLimit,
    TimeLimit,
}

impl std::fmt::Display for FinishReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FinishReason::Mastery => "mastery",
            FinishReason::ExerciseLimit => "exercise_limit",
            FinishReason::TimeLimit => "time_limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finished { reason: FinishReason },
}

impl SessionStatus {
    pub fn is_active(&self) -> bool {
        matches!(self, SessionStatus::Active)
    }
}

/// Estimator and teacher effect of a closed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub correct: bool,
    pub reward: f64,
    pub reward_per_kc: Vec<f64>,
    /// Estimated competences after the update.
    pub competences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        scenario: String,
        teacher: TeacherKind,
        seed: u64,
    },
    ExerciseProposed {
        exercise: u32,
        instance: ExerciseInstance,
    },
    AnswerSubmitted {
        exercise: u32,
        trial: u8,
        items: Vec<u32>,
        #[serde(flatten)]
        verdict: Verdict,
        /// Present when this answer closed the round.
        outcome: Option<RoundOutcome>,
    },
    SolutionShown {
        exercise: u32,
        solution: Vec<u32>,
    },
    HintShown {
        exercise: u32,
        /// Largest face value of the canonical composition.
        largest_item: u32,
    },
    Finished {
        reason: FinishReason,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
struct OpenRound {
    number: u32,
    instance: ExerciseInstance,
    trials_used: u8,
}

/// Result of one submitted answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitResult {
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Reward fed to the teacher, when the round closed.
    pub reward: Option<f64>,
    pub round_closed: bool,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KcLevel {
    pub kc: String,
    pub level: f64,
}

/// Read-only view of a session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub scenario: String,
    pub teacher: TeacherKind,
    pub seed: u64,
    pub status: SessionStatus,
    /// Estimated levels, in scenario order.
    pub competences: Vec<KcLevel>,
    pub exercises: u32,
    pub closed_rounds: u32,
    pub mastery_successes: u32,
    pub current: Option<ExerciseInstance>,
    /// Trial number the next answer must carry, when a round is open.
    pub next_trial: Option<u8>,
    /// Current stage for the predefined teacher.
    pub stage: Option<usize>,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    scenario: Arc<Scenario>,
    catalog: Arc<Catalog>,
    seed: u64,
    tutor: Tutor,
    rng: StreamRng,
    current: Option<OpenRound>,
    exercises: u32,
    closed_rounds: u32,
    mastery_successes: u32,
    status: SessionStatus,
    events: Vec<SessionEvent>,
}

impl Session {
    /// A fresh session; the `created` event is the first in its log.
    pub fn create(
        id: impl Into<String>,
        scenario: Arc<Scenario>,
        catalog: Arc<Catalog>,
        teacher: TeacherKind,
        seed: u64,
    ) -> Result<Self, SessionError> {
        if scenario.money.is_none() {
            return Err(SessionError::MalformedLog(format!(
                "scenario `{}` does not define the money-game parameters",
                scenario.id
            )));
        }
        let tutor = Tutor::new(teacher, &scenario);
        let mut session = Self {
            id: id.into(),
            seed,
            tutor,
            rng: stream_rng(seed, Stream::Session, 0, 0),
            current: None,
            exercises: 0,
            closed_rounds: 0,
            mastery_successes: 0,
            status: SessionStatus::Active,
            events: Vec::new(),
            catalog,
            scenario,
        };
        let created = EventKind::Created {
            scenario: session.scenario.id.clone(),
            teacher,
            seed,
        };
        session.push(created);
        Ok(session)
    }

    fn push(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent {
            session_id: self.id.clone(),
            seq,
            kind,
        });
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn tutor(&self) -> &Tutor {
        &self.tutor
    }

    pub fn current(&self) -> Option<&ExerciseInstance> {
        self.current.as_ref().map(|r| &r.instance)
    }

    fn ensure_active(&self) -> Result<(), SessionError> {
        match self.status {
            SessionStatus::Active => Ok(()),
            SessionStatus::Finished { reason } => Err(SessionError::Finished(reason.to_string())),
        }
    }

    /// Picks and instantiates the next activity.
    pub fn next_exercise(&mut self) -> Result<ExerciseInstance, SessionError> {
        self.ensure_active()?;
        if self.current.is_some() {
            return Err(SessionError::ExerciseOutstanding);
        }
        let scenario = Arc::clone(&self.scenario);
        let binding = scenario.money.as_ref().expect("checked at creation");
        let activity = self.tutor.propose(&scenario, &mut self.rng);
        let ctx = ExerciseContext {
            space: &scenario.space,
            binding,
            catalog: &self.catalog,
            denominations: &scenario.denominations,
            trial_limit: scenario.session.trial_limit,
        };
        let instance = ctx.instantiate(&activity, &mut self.rng)?;
        self.exercises += 1;
        self.current = Some(OpenRound {
            number: self.exercises,
            instance: instance.clone(),
            trials_used: 0,
        });
        self.push(EventKind::ExerciseProposed {
            exercise: self.exercises,
            instance: instance.clone(),
        });
        Ok(instance)
    }

    /// Checks one answer. A correct answer or the last failed trial closes the
    /// round, updates estimator and teacher once, and evaluates termination.
    pub fn submit_answer(&mut self, submission: AnswerSubmission) -> Result<SubmitResult, SessionError> {
        self.ensure_active()?;
        let scenario = Arc::clone(&self.scenario);
        let round = self.current.as_mut().ok_or(SessionError::NoOutstandingExercise)?;
        let expected = round.trials_used + 1;
        if submission.trial != expected {
            return Err(SessionError::UnexpectedTrial {
                expected,
                got: submission.trial,
            });
        }
        let verdict = validate_answer(&submission, &round.instance, &scenario.denominations)?;
        round.trials_used += 1;
        let number = round.number;

        let outcome = if verdict.closes_round() {
            let round = self.current.take().expect("round is open");
            let correct = verdict.is_correct();
            let reward = self.tutor.observe(&scenario, &round.instance.activity, correct);
            self.closed_rounds += 1;
            if correct && Some(round.instance.activity.value(self.type_param())) == scenario.mastery_value() {
                self.mastery_successes += 1;
            }
            Some(RoundOutcome {
                correct,
                reward: reward.total,
                reward_per_kc: reward.per_kc,
                competences: self.tutor.competences().levels().to_vec(),
            })
        } else {
            None
        };

        let reward = outcome.as_ref().map(|o| o.reward);
        let round_closed = outcome.is_some();
        self.push(EventKind::AnswerSubmitted {
            exercise: number,
            trial: submission.trial,
            items: submission.items,
            verdict: verdict.clone(),
            outcome,
        });
        if let Verdict::Solution { solution, .. } = &verdict {
            self.push(EventKind::SolutionShown {
                exercise: number,
                solution: solution.clone(),
            });
        }
        if round_closed {
            let rules = &scenario.session;
            if self.mastery_successes >= rules.mastery_successes {
                self.finish(FinishReason::Mastery)?;
            } else if self.exercises >= rules.max_exercises {
                self.finish(FinishReason::ExerciseLimit)?;
            }
        }
        Ok(SubmitResult {
            verdict,
            reward,
            round_closed,
            status: self.status,
        })
    }

    /// Largest face value of the canonical composition; logged, reward-neutral.
    pub fn hint(&mut self) -> Result<u32, SessionError> {
        self.ensure_active()?;
        let round = self.current.as_ref().ok_or(SessionError::NoOutstandingExercise)?;
        let largest = greedy_decomposition(round.instance.price_cents, &self.scenario.denominations)
            .first()
            .copied()
            .unwrap_or(0);
        let exercise = round.number;
        self.push(EventKind::HintShown {
            exercise,
            largest_item: largest,
        });
        Ok(largest)
    }

    /// Ends the session; any open round is abandoned without a teacher update.
    pub fn finish(&mut self, reason: FinishReason) -> Result<(), SessionError> {
        self.ensure_active()?;
        self.current = None;
        self.status = SessionStatus::Finished { reason };
        self.push(EventKind::Finished { reason });
        Ok(())
    }

    fn type_param(&self) -> usize {
        self.scenario
            .money
            .as_ref()
            .expect("checked at creation")
            .exercise_type_param()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let (teacher, stage) = match &self.tutor.teacher {
            crate::tutor::Teacher::Riarit(_) => (TeacherKind::Riarit, None),
            crate::tutor::Teacher::Predefined(p) => (TeacherKind::Predefined, Some(p.stage())),
        };
        SessionSnapshot {
            session_id: self.id.clone(),
            scenario: self.scenario.id.clone(),
            teacher,
            seed: self.seed,
            status: self.status,
            competences: self
                .scenario
                .kcs
                .iter()
                .zip(self.tutor.competences().levels())
                .map(|(kc, &level)| KcLevel {
                    kc: kc.id.clone(),
                    level,
                })
                .collect(),
            exercises: self.exercises,
            closed_rounds: self.closed_rounds,
            mastery_successes: self.mastery_successes,
            current: self.current.as_ref().map(|r| r.instance.clone()),
            next_trial: self.current.as_ref().map(|r| r.trials_used + 1),
            stage,
            events: self.events.len() as u64,
        }
    }

    /// Rebuilds a session from its log.
    ///
    /// A log that stops in the middle of one command's events (e.g. after an
    /// answer but before its `finished` event) is accepted; the returned
    /// session then holds the missing derived events too.
    pub fn replay(
        scenario: Arc<Scenario>,
        catalog: Arc<Catalog>,
        log: &[SessionEvent],
    ) -> Result<Self, SessionError> {
        for (i, ev) in log.iter().enumerate() {
            if ev.seq != i as u64 {
                return Err(SessionError::SequenceGap {
                    expected: i as u64,
                    found: ev.seq,
                });
            }
        }
        let first = log
            .first()
            .ok_or_else(|| SessionError::MalformedLog("empty log".into()))?;
        let (teacher, seed) = match &first.kind {
            EventKind::Created {
                scenario: name,
                teacher,
                seed,
            } => {
                if name != &scenario.id {
                    return Err(SessionError::MalformedLog(format!(
                        "log belongs to scenario `{name}`, loaded `{}`",
                        scenario.id
                    )));
                }
                (*teacher, *seed)
            }
            _ => return Err(SessionError::MalformedLog("first event is not `created`".into())),
        };
        let mut session = Self::create(first.session_id.clone(), scenario, catalog, teacher, seed)?;
        if session.events[0] != *first {
            return Err(SessionError::ReplayDiverged {
                seq: 0,
                detail: "created event differs".into(),
            });
        }

        let mut i = 1;
        while i < log.len() {
            let ev = &log[i];
            let before = session.events.len();
            let diverged = |detail: String| SessionError::ReplayDiverged { seq: ev.seq, detail };
            let issued = match &ev.kind {
                EventKind::ExerciseProposed { .. } => session.next_exercise().map(|_| ()),
                EventKind::AnswerSubmitted { trial, items, .. } => session
                    .submit_answer(AnswerSubmission {
                        items: items.clone(),
                        trial: *trial,
                    })
                    .map(|_| ()),
                EventKind::HintShown { .. } => session.hint().map(|_| ()),
                EventKind::Finished {
                    reason: FinishReason::TimeLimit,
                } => session.finish(FinishReason::TimeLimit),
                other => {
                    return Err(diverged(format!("unexpected event {other:?} without a cause")));
                }
            };
            issued.map_err(|e| diverged(format!("command rejected: {e}")))?;

            let produced = &session.events[before..];
            let recorded = &log[i..(i + produced.len()).min(log.len())];
            for (p, r) in produced.iter().zip(recorded) {
                if p != r {
                    return Err(SessionError::ReplayDiverged {
                        seq: r.seq,
                        detail: "recorded event differs from the replayed one".into(),
                    });
                }
            }
            i += produced.len();
        }
        Ok(session)
    }
}
