//! Adaptive activity selection for a money-decomposition tutoring game.
//!
//! The crate holds the expert model (knowledge components, factorized
//! Q-table, prerequisite masks), the competence estimator and its
//! learning-progress reward, the factored bandit teacher, the fixed
//! ten-stage baseline, exercise generation, simulated students, the batch
//! experiment harness and the event-sourced session engine used by the
//! HTTP service.

pub mod baseline;
pub mod config;
pub mod error;
pub mod estimator;
pub mod exercise;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod session;
pub mod stats;
pub mod students;
pub mod teacher;
pub mod tutor;

pub use config::{Scenario, SessionRules};
pub use error::{ConfigError, ExerciseError, ExperimentError, SessionError};
pub use estimator::{OutcomeReward, StudentEstimate};
pub use model::{Activity, CompetenceVector, ParameterSpace, QTable, ValueMask};
pub use teacher::{BanditFilter, RiaritParams};
pub use tutor::{TeacherKind, Tutor};
