//! Virtual students.
//!
//! A Q-student succeeds with a probability driven by the gap between its true
//! competences and the activity's requirements, and learns toward those
//! requirements up to a per-KC ceiling. A P-student additionally has a
//! comprehension level for each parameter value, which scales its success
//! probability and can itself be learned.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{ConfigError, ConfigLocation};
use crate::model::{Activity, CompetenceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRule {
    /// Move toward the requirement only when it exceeds the current level.
    #[default]
    NoForgetting,
    /// Always move toward the requirement, downward included.
    Literal,
}

/// Shape of the success curve and learning switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentModel {
    /// Offset added to the competence gap.
    #[serde(default = "default_offset")]
    pub alpha_s: f64,
    /// Steepness of the arctan curve.
    #[serde(default = "default_steepness")]
    pub beta_s: f64,
    /// Success probabilities below this are zeroed.
    #[serde(default = "default_cutoff")]
    pub gamma_thresh: f64,
    #[serde(default)]
    pub learning_rule: LearningRule,
    #[serde(default)]
    pub learn_on_success_only: bool,
}

fn default_offset() -> f64 {
    0.1
}
fn default_steepness() -> f64 {
    5.0
}
fn default_cutoff() -> f64 {
    0.1
}

impl Default for StudentModel {
    fn default() -> Self {
        Self {
            alpha_s: default_offset(),
            beta_s: default_steepness(),
            gamma_thresh: default_cutoff(),
            learning_rule: LearningRule::default(),
            learn_on_success_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QStudent {
    pub c_true: CompetenceVector,
    pub c_max: Vec<f64>,
    /// Per-KC learning speed.
    pub v: Vec<f64>,
}

impl QStudent {
    /// Per-KC success probability `atan(beta_s * (c - q + alpha_s)) / pi + 1/2`.
    pub fn kc_success_prob(&self, model: &StudentModel, kc: usize, required: f64) -> f64 {
        (model.beta_s * (self.c_true.get(kc) - required + model.alpha_s)).atan() / PI + 0.5
    }

    /// Geometric mean of the per-KC probabilities, zeroed below the cutoff.
    pub fn success_prob(&self, model: &StudentModel, required: &CompetenceVector) -> f64 {
        let n = required.len() as f64;
        let log_sum: f64 = (0..required.len())
            .map(|kc| self.kc_success_prob(model, kc, required.get(kc)).ln())
            .sum();
        let p = (log_sum / n).exp();
        if p < model.gamma_thresh {
            0.0
        } else {
            p
        }
    }

    pub fn learn(&mut self, model: &StudentModel, required: &CompetenceVector) {
        for kc in 0..required.len() {
            let c = self.c_true.get(kc);
            let q = required.get(kc);
            if model.learning_rule == LearningRule::NoForgetting && q <= c {
                continue;
            }
            let next = (c + self.v[kc] * (q - c)).min(self.c_max[kc]);
            // The ceiling never pulls an already higher level down.
            self.c_true.set(kc, if q > c { next.max(c) } else { next });
        }
    }

    pub fn learned(&self, model: &StudentModel, required: &CompetenceVector) -> Self {
        let mut next = self.clone();
        next.learn(model, required);
        next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PStudent {
    pub base: QStudent,
    pub profile: String,
    /// comprehension[param][value] in `[0, 1]`.
    pub comprehension: Vec<Vec<f64>>,
    /// Per-parameter comprehension learning speed.
    pub v_p: Vec<f64>,
}

impl PStudent {
    /// Geometric mean of the chosen values' comprehension levels.
    pub fn comprehension_prob(&self, activity: &Activity) -> f64 {
        let m = activity.values().len() as f64;
        let product: f64 = activity
            .values()
            .iter()
            .enumerate()
            .map(|(j, &v)| self.comprehension[j][v])
            .product();
        product.powf(1.0 / m)
    }

    pub fn success_prob(
        &self,
        model: &StudentModel,
        activity: &Activity,
        required: &CompetenceVector,
    ) -> f64 {
        self.base.success_prob(model, required) * self.comprehension_prob(activity)
    }

    /// Moves each chosen value's comprehension toward 1.
    pub fn learn_comprehension(&mut self, activity: &Activity) {
        for (j, &v) in activity.values().iter().enumerate() {
            let p = &mut self.comprehension[j][v];
            *p = (*p + self.v_p[j] * (1.0 - *p)).clamp(0.0, 1.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Student {
    Q(QStudent),
    P(PStudent),
}

impl Student {
    pub fn base(&self) -> &QStudent {
        match self {
            Student::Q(q) => q,
            Student::P(p) => &p.base,
        }
    }

    pub fn base_mut(&mut self) -> &mut QStudent {
        match self {
            Student::Q(q) => q,
            Student::P(p) => &mut p.base,
        }
    }

    pub fn profile(&self) -> &str {
        match self {
            Student::Q(_) => "q",
            Student::P(p) => &p.profile,
        }
    }

    pub fn true_competence(&self) -> &CompetenceVector {
        &self.base().c_true
    }

    pub fn success_prob(
        &self,
        model: &StudentModel,
        activity: &Activity,
        required: &CompetenceVector,
    ) -> f64 {
        match self {
            Student::Q(q) => q.success_prob(model, required),
            Student::P(p) => p.success_prob(model, activity, required),
        }
    }

    /// One exposure to an activity. `comprehension` enables parameter learning
    /// for P-students.
    pub fn learn(
        &mut self,
        model: &StudentModel,
        activity: &Activity,
        required: &CompetenceVector,
        correct: bool,
        comprehension: bool,
    ) {
        if model.learn_on_success_only && !correct {
            return;
        }
        self.base_mut().learn(model, required);
        if let (Student::P(p), true) = (self, comprehension) {
            p.learn_comprehension(activity);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationKind {
    Q,
    P,
}

/// Normal distribution truncated to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub stddev: f64,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
}

fn default_lower() -> f64 {
    0.1
}
fn default_upper() -> f64 {
    1.0
}

impl TruncatedNormal {
    fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lower) || !(0.0..=1.0).contains(&self.upper) {
            return Err("bounds must lie in [0, 1]".into());
        }
        if self.lower > self.upper {
            return Err("lower bound exceeds upper bound".into());
        }
        if !(self.lower..=self.upper).contains(&self.mean) {
            return Err(format!("mean {} outside [lower, upper]", self.mean));
        }
        if !(self.stddev >= 0.0 && self.stddev.is_finite()) {
            return Err(format!("stddev {} must be non-negative", self.stddev));
        }
        Ok(())
    }

    /// Rejection sampling; after many rejections the last draw is clamped.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.mean, self.stddev).expect("checked stddev");
        let mut x = self.mean;
        for _ in 0..1000 {
            x = normal.sample(rng);
            if (self.lower..=self.upper).contains(&x) {
                return x;
            }
        }
        x.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub weight: f64,
    /// Parameter id -> value id -> comprehension level; unspecified values are 1.
    #[serde(default)]
    pub comprehension: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub kind: PopulationKind,
    pub size: usize,
    pub c_max: TruncatedNormal,
    /// Per-KC overrides of `c_max`.
    #[serde(default)]
    pub c_max_per_kc: BTreeMap<String, TruncatedNormal>,
    /// Range of per-KC learning speeds.
    #[serde(default = "default_learning_speed")]
    pub learning_speed: [f64; 2],
    /// Range of per-parameter comprehension learning speeds.
    #[serde(default = "default_comprehension_speed")]
    pub comprehension_speed: [f64; 2],
    #[serde(default)]
    pub model: StudentModel,
    #[serde(default)]
    pub profiles: Vec<Profile>,
}

fn default_learning_speed() -> [f64; 2] {
    [0.05, 0.5]
}
fn default_comprehension_speed() -> [f64; 2] {
    [0.05, 0.2]
}

impl PopulationSpec {
    pub fn default_q(size: usize) -> Self {
        Self {
            kind: PopulationKind::Q,
            size,
            c_max: TruncatedNormal {
                mean: 0.85,
                stddev: 0.15,
                lower: 0.1,
                upper: 1.0,
            },
            c_max_per_kc: BTreeMap::new(),
            learning_speed: default_learning_speed(),
            comprehension_speed: default_comprehension_speed(),
            model: StudentModel::default(),
            profiles: Vec::new(),
        }
    }

    /// Q defaults plus the four comprehension profiles of the money game.
    pub fn default_p(size: usize) -> Self {
        let profile = |name: &str, weight: f64, entries: &[(&str, &str, f64)]| {
            let mut comprehension: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            for &(param, value, level) in entries {
                comprehension
                    .entry(param.to_string())
                    .or_default()
                    .insert(value.to_string(), level);
            }
            Profile {
                name: name.to_string(),
                weight,
                comprehension,
            }
        };
        Self {
            kind: PopulationKind::P,
            profiles: vec![
                profile("cannot-use-tokens", 0.1, &[("MoneyType", "Token", 0.05)]),
                profile(
                    "cannot-read-written",
                    0.1,
                    &[("PricePresentation", "W", 0.1), ("PricePresentation", "WS", 0.1)],
                ),
                profile("cannot-parse-x,x€", 0.1, &[("CentsNotation", "x,x€", 0.1)]),
                profile("good-decomposer", 0.7, &[]),
            ],
            ..Self::default_q(size)
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path.display().to_string();
        serde_json::from_str(&text).map_err(|e| ConfigError::syntax(&name, &e))
    }

    /// Checks distribution parameters and profile references against a scenario.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), ConfigError> {
        let err = |path: &str, message: String| ConfigError::Invalid {
            source_name: "population".into(),
            location: ConfigLocation {
                path: path.to_string(),
                line: None,
            },
            message,
        };
        if self.size == 0 {
            return Err(err("size", "population size must be at least 1".into()));
        }
        self.c_max.check().map_err(|m| err("c_max", m))?;
        for (kc, dist) in &self.c_max_per_kc {
            if scenario.kc_index(kc).is_none() {
                return Err(err("c_max_per_kc", format!("unknown knowledge component `{kc}`")));
            }
            dist.check().map_err(|m| err(&format!("c_max_per_kc.{kc}"), m))?;
        }
        for (name, [lo, hi]) in [
            ("learning_speed", self.learning_speed),
            ("comprehension_speed", self.comprehension_speed),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(err(name, format!("range [{lo}, {hi}] must lie within [0, 1]")));
            }
        }
        if self.kind == PopulationKind::P {
            if self.profiles.is_empty() {
                return Err(err("profiles", "a P population needs at least one profile".into()));
            }
            let total: f64 = self.profiles.iter().map(|p| p.weight).sum();
            if self.profiles.iter().any(|p| p.weight < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(err("profiles", format!("weights must be non-negative and sum to 1, got {total}")));
            }
            for profile in &self.profiles {
                for (param, levels) in &profile.comprehension {
                    let j = scenario.space.index_of(param).ok_or_else(|| {
                        err("profiles", format!("{}: unknown parameter `{param}`", profile.name))
                    })?;
                    for (value, level) in levels {
                        if scenario.space.value_index(j, value).is_none() {
                            return Err(err(
                                "profiles",
                                format!("{}: `{param}` has no value `{value}`", profile.name),
                            ));
                        }
                        if !(0.0..=1.0).contains(level) {
                            return Err(err(
                                "profiles",
                                format!("{}: level {level} outside [0, 1]", profile.name),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn comprehension_table(&self, profile: &Profile, scenario: &Scenario) -> Vec<Vec<f64>> {
        scenario
            .space
            .parameters()
            .iter()
            .map(|p| {
                p.values
                    .iter()
                    .map(|v| {
                        profile
                            .comprehension
                            .get(&p.id)
                            .and_then(|m| m.get(v))
                            .copied()
                            .unwrap_or(1.0)
                    })
                    .collect()
            })
            .collect()
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Samples `spec.size` students with true competences at zero.
///
/// Per student, draws happen in a fixed order (ceilings, speeds, profile,
/// comprehension speeds) so a seed always yields the same population.
pub fn sample_population<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<Vec<Student>, ConfigError> {
    spec.validate(scenario)?;
    let n_kcs = scenario.kc_count();
    let dists: Vec<TruncatedNormal> = scenario
        .kcs
        .iter()
        .map(|kc| spec.c_max_per_kc.get(&kc.id).copied().unwrap_or(spec.c_max))
        .collect();
    let tables: Vec<Vec<Vec<f64>>> = spec
        .profiles
        .iter()
        .map(|p| spec.comprehension_table(p, scenario))
        .collect();

    let students = (0..spec.size)
        .map(|_| {
            let c_max: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
            let v: Vec<f64> = (0..n_kcs).map(|_| uniform_in(rng, spec.learning_speed)).collect();
            let base = QStudent {
                c_true: CompetenceVector::zeros(n_kcs),
                c_max,
                v,
            };
            match spec.kind {
                PopulationKind::Q => Student::Q(base),
                PopulationKind::P => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = spec.profiles.len() - 1;
                    for (i, p) in spec.profiles.iter().enumerate() {
                        acc += p.weight;
                        if u < acc {
                            chosen = i;
                            break;
                        }
                    }
                    let v_p = (0..scenario.space.len())
                        .map(|_| uniform_in(rng, spec.comprehension_speed))
                        .collect();
                    Student::P(PStudent {
                        base,
                        profile: spec.profiles[chosen].name.clone(),
                        comprehension: tables[chosen].clone(),
                        v_p,
                    })
                }
            }
        })
        .collect();
    Ok(students)
}
