//! Batch simulation of teachers against virtual student populations.
//!
//! Every (run, student) pair has its own generators derived from the master
//! seed, so results do not depend on the worker count. Populations depend
//! only on (seed, run): two experiments differing only in the teacher see the
//! same students, which makes per-student pairing meaningful.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{ConfigError, ExperimentError};
use crate::model::{Activity, ParameterSpace};
use crate::rng::{stream_rng, Stream};
use crate::stats::{self, FiveNumber};
use crate::students::{sample_population, PopulationKind, PopulationSpec, Student};
use crate::tutor::{TeacherKind, Tutor};

/// Population given inline, as a file path, or as `builtin:q` / `builtin:p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationRef {
    Named(String),
    Inline(PopulationSpec),
}

/// Experiment file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario file; the shipped scenario when absent.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    pub population: PopulationRef,
    pub teacher: TeacherKind,
    #[serde(default)]
    pub students_learn: bool,
    /// Whether P-students also learn parameter comprehension.
    #[serde(default)]
    pub learn_comprehension: bool,
    pub n_students: usize,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub n_runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Record a trace row every `trace_stride` steps (and at the last step).
    #[serde(default = "one")]
    pub trace_stride: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    /// Parses a config; relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::syntax(&path.display().to_string(), &e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(s) = &cfg.scenario {
            if s.is_relative() {
                cfg.scenario = Some(base.join(s));
            }
        }
        if let PopulationRef::Named(name) = &cfg.population {
            if !name.starts_with("builtin:") && Path::new(name).is_relative() {
                cfg.population = PopulationRef::Named(base.join(name).display().to_string());
            }
        }
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<Experiment, ExperimentError> {
        let scenario = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::default_scenario(),
        };
        let mut population = match &self.population {
            PopulationRef::Inline(spec) => spec.clone(),
            PopulationRef::Named(name) => match name.as_str() {
                "builtin:q" => PopulationSpec::default_q(self.n_students),
                "builtin:p" => PopulationSpec::default_p(self.n_students),
                path => PopulationSpec::load(Path::new(path))?,
            },
        };
        population.size = self.n_students;
        Experiment::new(
            scenario,
            population,
            ExperimentSettings {
                teacher: self.teacher,
                students_learn: self.students_learn,
                learn_comprehension: self.learn_comprehension,
                n_steps: self.n_steps,
                n_runs: self.n_runs,
                seed: self.seed,
                trace_stride: self.trace_stride,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSettings {
    pub teacher: TeacherKind,
    pub students_learn: bool,
    pub learn_comprehension: bool,
    pub n_steps: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub trace_stride: usize,
}

/// A validated, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub population: PopulationSpec,
    pub settings: ExperimentSettings,
}

impl Experiment {
    pub fn new(
        scenario: Scenario,
        population: PopulationSpec,
        settings: ExperimentSettings,
    ) -> Result<Self, ExperimentError> {
        if population.size == 0 || settings.n_steps == 0 || settings.n_runs == 0 {
            return Err(ExperimentError::Invalid(
                "n_students, n_steps and n_runs must all be at least 1".into(),
            ));
        }
        if settings.trace_stride == 0 {
            return Err(ExperimentError::Invalid("trace_stride must be at least 1".into()));
        }
        population.validate(&scenario)?;
        Ok(Self {
            scenario,
            population,
            settings,
        })
    }

    pub fn with_teacher(&self, teacher: TeacherKind) -> Self {
        let mut next = self.clone();
        next.settings.teacher = teacher;
        next
    }

    /// Students of one run, before any exercise.
    pub fn population_for_run(&self, run: usize) -> Vec<Student> {
        let mut rng = stream_rng(self.settings.seed, Stream::Population, run as u64, 0);
        let mut students = sample_population(&self.population, &self.scenario, &mut rng)
            .expect("population validated at construction");
        if !self.settings.students_learn {
            // Fixed-level students sit at their ceiling.
            for s in &mut students {
                let base = s.base_mut();
                base.c_true = crate::model::CompetenceVector::from_levels(base.c_max.clone());
            }
        }
        students
    }

    /// Runs every (run, student) pair on `workers` threads (all cores when `None`).
    pub fn run(&self, workers: Option<usize>) -> MetricsFrame {
        let jobs: Vec<(usize, usize, Student)> = (0..self.settings.n_runs)
            .flat_map(|run| {
                self.population_for_run(run)
                    .into_iter()
                    .enumerate()
                    .map(move |(i, s)| (run, i, s))
            })
            .collect();

        let simulate = || {
            jobs.into_par_iter()
                .map(|(run, i, student)| self.simulate_student(run, i, student))
                .collect::<Vec<_>>()
        };
        let traces = match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool")
                .install(simulate),
            None => simulate(),
        };

        let mut rows = Vec::new();
        let mut students = Vec::with_capacity(traces.len());
        for (r, s) in traces {
            rows.extend(r);
            students.push(s);
        }
        let scenario = &self.scenario;
        MetricsFrame {
            teacher: self.settings.teacher,
            seed: self.settings.seed,
            population: self.population.kind,
            kc_ids: scenario.kcs.iter().map(|k| k.id.clone()).collect(),
            space: scenario.space.clone(),
            type_param: scenario
                .money
                .as_ref()
                .map(|b| b.exercise_type_param())
                .unwrap_or(0),
            n_runs: self.settings.n_runs,
            n_students: self.population.size,
            n_steps: self.settings.n_steps,
            rows,
            students,
        }
    }

    fn simulate_student(
        &self,
        run: usize,
        index: usize,
        mut student: Student,
    ) -> (Vec<TraceRow>, StudentOutcome) {
        let scenario = &self.scenario;
        let settings = &self.settings;
        let model = self.population.model;
        let type_param = scenario
            .money
            .as_ref()
            .map(|b| b.exercise_type_param())
            .unwrap_or(0);
        let n_types = scenario.space.value_count(type_param);

        let mut tutor = Tutor::new(settings.teacher, scenario);
        let mut teacher_rng = stream_rng(settings.seed, Stream::Teacher, run as u64, index as u64);
        let mut student_rng = stream_rng(settings.seed, Stream::Student, run as u64, index as u64);

        let mut rows = Vec::with_capacity(settings.n_steps / settings.trace_stride + 1);
        let mut cum_err = 0u32;
        let mut errors_by_type = vec![0u32; n_types];
        let mut max_reached: Option<usize> = None;
        let mut max_succeeded: Option<usize> = None;

        for step in 1..=settings.n_steps {
            let activity = tutor.propose(scenario, &mut teacher_rng);
            let required = scenario.required_competence(&activity);
            let p = student.success_prob(&model, &activity, &required);
            let correct = student_rng.random::<f64>() < p;
            let reward = tutor.observe(scenario, &activity, correct);
            if settings.students_learn {
                student.learn(&model, &activity, &required, correct, settings.learn_comprehension);
            }

            let ex_type = activity.value(type_param);
            max_reached = max_reached.max(Some(ex_type));
            if correct {
                max_succeeded = max_succeeded.max(Some(ex_type));
            } else {
                cum_err += 1;
                errors_by_type[ex_type] += 1;
            }

            if step % settings.trace_stride == 0 || step == settings.n_steps {
                rows.push(TraceRow {
                    run: run as u32,
                    student: index as u32,
                    step: step as u32,
                    activity,
                    correct,
                    reward: reward.total,
                    c_est: tutor.competences().levels().to_vec(),
                    c_true: student.true_competence().levels().to_vec(),
                    cum_err,
                    cum_err_by_type: errors_by_type.clone(),
                });
            }
        }

        let outcome = StudentOutcome {
            run: run as u32,
            student: index as u32,
            profile: student.profile().to_string(),
            final_est: tutor.competences().levels().to_vec(),
            final_true: student.true_competence().levels().to_vec(),
            errors: cum_err,
            errors_by_type,
            max_reached,
            max_succeeded,
        };
        (rows, outcome)
    }
}

/// State after one recorded step of one student.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run: u32,
    pub student: u32,
    /// 1-based.
    pub step: u32,
    pub activity: Activity,
    pub correct: bool,
    pub reward: f64,
    pub c_est: Vec<f64>,
    pub c_true: Vec<f64>,
    pub cum_err: u32,
    /// Cumulative errors split by exercise-type value index.
    pub cum_err_by_type: Vec<u32>,
}

/// End-of-run record of one student.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentOutcome {
    pub run: u32,
    pub student: u32,
    pub profile: String,
    pub final_est: Vec<f64>,
    pub final_true: Vec<f64>,
    pub errors: u32,
    pub errors_by_type: Vec<u32>,
    /// Highest exercise-type value index proposed.
    pub max_reached: Option<usize>,
    /// Highest exercise-type value index solved.
    pub max_succeeded: Option<usize>,
}

impl StudentOutcome {
    pub fn mean_abs_error(&self) -> f64 {
        mean_abs_diff(&self.final_est, &self.final_true)
    }
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// All recorded rows of an experiment, ordered by (run, student, step).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFrame {
    pub teacher: TeacherKind,
    pub seed: u64,
    pub population: PopulationKind,
    pub kc_ids: Vec<String>,
    pub space: ParameterSpace,
    /// Parameter whose values are reported as exercise types.
    pub type_param: usize,
    pub n_runs: usize,
    pub n_students: usize,
    pub n_steps: usize,
    pub rows: Vec<TraceRow>,
    /// Ordered by (run, student).
    pub students: Vec<StudentOutcome>,
}

const MONEY_COLUMNS: [&str; 4] = ["ex_type", "presentation", "cents", "money"];

impl MetricsFrame {
    fn param_columns(&self) -> Vec<String> {
        let ids: Vec<&str> = self.space.parameters().iter().map(|p| p.id.as_str()).collect();
        if ids == ["ExerciseType", "PricePresentation", "CentsNotation", "MoneyType"] {
            MONEY_COLUMNS.iter().map(|s| s.to_string()).collect()
        } else {
            ids.iter().map(|s| s.to_string()).collect()
        }
    }

    /// Writes `trace.csv`.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["run", "student", "step", "teacher"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.param_columns());
        header.extend(["correct".into(), "reward".into()]);
        header.extend(self.kc_ids.iter().map(|k| format!("c_est_{k}")));
        header.extend(self.kc_ids.iter().map(|k| format!("c_true_{k}")));
        header.push("cum_err".into());
        w.write_record(&header)?;

        let teacher = self.teacher.as_str();
        for row in &self.rows {
            let mut rec: Vec<String> = vec![
                row.run.to_string(),
                row.student.to_string(),
                row.step.to_string(),
                teacher.to_string(),
            ];
            rec.extend(self.space.labels(&row.activity).into_iter().map(String::from));
            rec.push(u8::from(row.correct).to_string());
            rec.push(row.reward.to_string());
            rec.extend(row.c_est.iter().map(f64::to_string));
            rec.extend(row.c_true.iter().map(f64::to_string));
            rec.push(row.cum_err.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| ExperimentError::Io {
            path: "trace.csv".into(),
            source,
        })?;
        Ok(())
    }

    pub fn recorded_steps(&self) -> Vec<u32> {
        let mut steps: Vec<u32> = self.rows.iter().map(|r| r.step).collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    fn rows_at(&self, step: u32) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.step == step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExerciseTypeCount {
    pub step: u32,
    pub ex_type: String,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetenceQuantiles {
    pub step: u32,
    pub kc: String,
    /// `estimated` or `true`.
    pub source: &'static str,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationError {
    pub step: u32,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeErrors {
    pub step: u32,
    /// Exercise type value id, or `all`.
    pub ex_type: String,
    pub mean_cum_errors: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxLevelCount {
    pub ex_type: String,
    pub reached: usize,
    pub succeeded: usize,
}

/// Plot-ready tables derived from a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub exercise_types: Vec<ExerciseTypeCount>,
    pub competence: Vec<CompetenceQuantiles>,
    pub estimation_error: Vec<EstimationError>,
    pub cumulative_errors: Vec<CumulativeErrors>,
    pub max_levels: Vec<MaxLevelCount>,
}

pub fn summarize(frame: &MetricsFrame) -> Result<Summary, ExperimentError> {
    if frame.rows.is_empty() || frame.students.is_empty() {
        return Err(ExperimentError::EmptyFrame);
    }
    let type_labels = &frame.space.parameter(frame.type_param).values;
    let mut summary = Summary {
        exercise_types: Vec::new(),
        competence: Vec::new(),
        estimation_error: Vec::new(),
        cumulative_errors: Vec::new(),
        max_levels: Vec::new(),
    };

    for step in frame.recorded_steps() {
        let rows: Vec<&TraceRow> = frame.rows_at(step).collect();
        let n = rows.len();

        let mut counts = vec![0usize; type_labels.len()];
        for r in &rows {
            counts[r.activity.value(frame.type_param)] += 1;
        }
        for (label, count) in type_labels.iter().zip(&counts) {
            summary.exercise_types.push(ExerciseTypeCount {
                step,
                ex_type: label.clone(),
                count: *count,
                share: *count as f64 / n as f64,
            });
        }

        for (kc, id) in frame.kc_ids.iter().enumerate() {
            for (source, values) in [
                ("estimated", rows.iter().map(|r| r.c_est[kc]).collect::<Vec<_>>()),
                ("true", rows.iter().map(|r| r.c_true[kc]).collect::<Vec<_>>()),
            ] {
                let f = FiveNumber::of(&values);
                summary.competence.push(CompetenceQuantiles {
                    step,
                    kc: id.clone(),
                    source,
                    min: f.min,
                    q1: f.q1,
                    median: f.median,
                    q3: f.q3,
                    max: f.max,
                    mean: stats::mean(&values),
                });
            }
        }

        let errors: Vec<f64> = rows.iter().map(|r| mean_abs_diff(&r.c_est, &r.c_true)).collect();
        summary.estimation_error.push(EstimationError {
            step,
            mean_abs_error: stats::mean(&errors),
        });

        summary.cumulative_errors.push(CumulativeErrors {
            step,
            ex_type: "all".into(),
            mean_cum_errors: rows.iter().map(|r| r.cum_err as f64).sum::<f64>() / n as f64,
        });
        for (t, label) in type_labels.iter().enumerate() {
            summary.cumulative_errors.push(CumulativeErrors {
                step,
                ex_type: label.clone(),
                mean_cum_errors: rows.iter().map(|r| r.cum_err_by_type[t] as f64).sum::<f64>()
                    / n as f64,
            });
        }
    }

    for (t, label) in type_labels.iter().enumerate() {
        summary.max_levels.push(MaxLevelCount {
            ex_type: label.clone(),
            reached: frame.students.iter().filter(|s| s.max_reached == Some(t)).count(),
            succeeded: frame.students.iter().filter(|s| s.max_succeeded == Some(t)).count(),
        });
    }
    Ok(summary)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

impl Summary {
    /// Writes the `summary_*.csv` files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        write_csv(&dir.join("summary_exercise_types.csv"), &self.exercise_types)?;
        write_csv(&dir.join("summary_competence.csv"), &self.competence)?;
        write_csv(&dir.join("summary_estimation_error.csv"), &self.estimation_error)?;
        write_csv(&dir.join("summary_cumulative_errors.csv"), &self.cumulative_errors)?;
        write_csv(&dir.join("summary_max_levels.csv"), &self.max_levels)?;
        Ok(())
    }
}

/// Writes `trace.csv` plus the summaries into `dir`.
pub fn write_frame(frame: &MetricsFrame, dir: &Path) -> Result<Summary, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join("trace.csv");
    let file = File::create(&path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    frame.write_trace(std::io::BufWriter::new(file))?;
    let summary = summarize(frame)?;
    summary.write_to(dir)?;
    Ok(summary)
}

/// Paired comparison of one quantity between two frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub kc: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of per-student `b - a`.
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// One-sided paired t-test of `b > a`.
    pub paired_p: f64,
    pub welch_t: f64,
    pub welch_df: f64,
    /// One-sided Welch test of `b > a`.
    pub welch_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub label_a: String,
    pub label_b: String,
    /// Final estimated competence, one row per KC.
    pub per_kc: Vec<MetricComparison>,
    /// Final true competence per KC, estimation error and cumulative errors.
    pub metrics: Vec<MetricComparison>,
}

const BOOTSTRAP_RESAMPLES: usize = 1000;

fn compare_samples<R: Rng>(
    metric: &str,
    kc: &str,
    a: &[f64],
    b: &[f64],
    rng: &mut R,
) -> MetricComparison {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let (ci_low, ci_high) = stats::bootstrap_mean_ci(&diffs, BOOTSTRAP_RESAMPLES, 0.95, rng);
    let (_, paired_p) = stats::paired_t_greater(&diffs);
    let (welch_t, welch_df, welch_p) = stats::welch_greater(a, b);
    MetricComparison {
        metric: metric.to_string(),
        kc: kc.to_string(),
        mean_a: stats::mean(a),
        mean_b: stats::mean(b),
        mean_diff: stats::mean(&diffs),
        ci_low,
        ci_high,
        paired_p,
        welch_t,
        welch_df,
        welch_p,
    }
}

/// Compares end-of-run metrics of two frames student by student (`b - a`).
pub fn compare(a: &MetricsFrame, b: &MetricsFrame) -> Result<ComparisonReport, ExperimentError> {
    if a.students.is_empty() || b.students.is_empty() {
        return Err(ExperimentError::EmptyFrame);
    }
    if a.kc_ids != b.kc_ids {
        return Err(ExperimentError::ShapeMismatch("knowledge components differ".into()));
    }
    if a.students.len() != b.students.len()
        || a
            .students
            .iter()
            .zip(&b.students)
            .any(|(x, y)| (x.run, x.student) != (y.run, y.student))
    {
        return Err(ExperimentError::ShapeMismatch(
            "frames do not cover the same (run, student) pairs".into(),
        ));
    }
    let mut rng = stream_rng(a.seed ^ b.seed, Stream::Bootstrap, 0, 0);
    let column = |f: &MetricsFrame, get: &dyn Fn(&StudentOutcome) -> f64| -> Vec<f64> {
        f.students.iter().map(get).collect()
    };

    let mut per_kc = Vec::new();
    let mut metrics = Vec::new();
    for (kc, id) in a.kc_ids.iter().enumerate() {
        let get = |s: &StudentOutcome| s.final_est[kc];
        per_kc.push(compare_samples(
            "final_estimated",
            id,
            &column(a, &get),
            &column(b, &get),
            &mut rng,
        ));
    }
    for (kc, id) in a.kc_ids.iter().enumerate() {
        let get = |s: &StudentOutcome| s.final_true[kc];
        metrics.push(compare_samples(
            "final_true",
            id,
            &column(a, &get),
            &column(b, &get),
            &mut rng,
        ));
    }
    let err = |s: &StudentOutcome| s.mean_abs_error();
    metrics.push(compare_samples(
        "estimation_error",
        "all",
        &column(a, &err),
        &column(b, &err),
        &mut rng,
    ));
    let cum = |s: &StudentOutcome| s.errors as f64;
    metrics.push(compare_samples(
        "cumulative_errors",
        "all",
        &column(a, &cum),
        &column(b, &cum),
        &mut rng,
    ));

    Ok(ComparisonReport {
        label_a: a.teacher.to_string(),
        label_b: b.teacher.to_string(),
        per_kc,
        metrics,
    })
}

impl ComparisonReport {
    /// `comparison.csv` (one row per KC) and `comparison_metrics.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        write_csv(&dir.join("comparison.csv"), &self.per_kc)?;
        write_csv(&dir.join("comparison_metrics.csv"), &self.metrics)?;
        Ok(())
    }
}
