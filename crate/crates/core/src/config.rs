//! Scenario configuration: the JSON file format, its validation and the
//! loaded, immutable [`Scenario`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineOptions, Stage, StageTable, STAGE_COUNT};
use crate::error::{ConfigError, ConfigLocation};
use crate::exercise::{MoneyBinding, DEFAULT_TRIAL_LIMIT, EURO_DENOMINATIONS};
use crate::model::{
    allowed_values, Activity, CompetenceVector, KnowledgeComponent, Parameter, ParameterSpace,
    PrerequisiteConstraint, QTable, ValueMask,
};
use crate::teacher::RiaritParams;

const DEFAULT_SCENARIO: &str = include_str!("../data/default_scenario.json");

/// Session termination and trial rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRules {
    #[serde(default = "default_max_exercises")]
    pub max_exercises: u32,
    /// Value id of the exercise type whose successes count toward mastery.
    #[serde(default = "default_mastery_type")]
    pub mastery_exercise_type: String,
    #[serde(default = "default_mastery_successes")]
    pub mastery_successes: u32,
    #[serde(default = "default_trial_limit")]
    pub trial_limit: u8,
    /// Optional wall-clock cap in minutes; off when absent.
    #[serde(default)]
    pub max_minutes: Option<u32>,
}

fn default_max_exercises() -> u32 {
    60
}
fn default_mastery_type() -> String {
    "6".into()
}
fn default_mastery_successes() -> u32 {
    3
}
fn default_trial_limit() -> u8 {
    DEFAULT_TRIAL_LIMIT
}

impl Default for SessionRules {
    fn default() -> Self {
        Self {
            max_exercises: default_max_exercises(),
            mastery_exercise_type: default_mastery_type(),
            mastery_successes: default_mastery_successes(),
            trial_limit: default_trial_limit(),
            max_minutes: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherSection {
    #[serde(default)]
    riarit: RiaritParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StageValue {
    One(String),
    Any(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    parameter: String,
    value: String,
    requires: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    kcs: Vec<KnowledgeComponent>,
    parameters: Vec<Parameter>,
    q_table: BTreeMap<String, BTreeMap<String, Vec<Option<f64>>>>,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
    stages: Vec<BTreeMap<String, StageValue>>,
    #[serde(default)]
    baseline: BaselineOptions,
    #[serde(default)]
    teacher: TeacherSection,
    #[serde(default)]
    session: SessionRules,
    #[serde(default = "default_denominations")]
    denominations: Vec<u32>,
}

fn default_denominations() -> Vec<u32> {
    EURO_DENOMINATIONS.to_vec()
}

/// A validated scenario. Immutable; share it by reference or `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub kcs: Vec<KnowledgeComponent>,
    pub space: ParameterSpace,
    pub q_table: QTable,
    pub constraints: Vec<PrerequisiteConstraint>,
    pub stages: StageTable,
    pub baseline: BaselineOptions,
    pub riarit: RiaritParams,
    pub session: SessionRules,
    pub denominations: Vec<u32>,
    /// Present when the parameters are the money-game ones.
    pub money: Option<MoneyBinding>,
}

/// Best-effort line of a dotted path (`a.b.c`) in JSON text: each segment's
/// quoted key is searched after the previous match.
pub(crate) fn locate_line(text: &str, path: &str) -> Option<usize> {
    let mut pos = 0;
    let mut found = None;
    for segment in path.split('.') {
        let key = segment.split('[').next().unwrap_or(segment);
        if key.is_empty() {
            continue;
        }
        let needle = format!("\"{key}\"");
        match text[pos..].find(&needle) {
            Some(offset) => {
                pos += offset;
                found = Some(pos);
                pos += needle.len();
            }
            None => break,
        }
    }
    found.map(|p| text[..p].matches('\n').count() + 1)
}

struct Validator<'a> {
    text: &'a str,
    source_name: &'a str,
}

impl Validator<'_> {
    fn err(&self, path: impl Into<String>, message: impl Into<String>) -> ConfigError {
        let path = path.into();
        ConfigError::Invalid {
            source_name: self.source_name.to_string(),
            location: ConfigLocation {
                line: locate_line(self.text, &path),
                path,
            },
            message: message.into(),
        }
    }
}

impl Scenario {
    /// The shipped money-game scenario.
    pub fn default_scenario() -> Self {
        Self::from_json_str(DEFAULT_SCENARIO, "default_scenario.json")
            .expect("shipped scenario is valid")
    }

    pub fn default_json() -> &'static str {
        DEFAULT_SCENARIO
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario =
            serde_json::from_str(text).map_err(|e| ConfigError::syntax(source_name, &e))?;
        let v = Validator { text, source_name };
        Self::from_raw(raw, &v)
    }

    fn from_raw(raw: RawScenario, v: &Validator<'_>) -> Result<Self, ConfigError> {
        if raw.id.trim().is_empty() {
            return Err(v.err("id", "scenario id is empty"));
        }

        if raw.kcs.is_empty() {
            return Err(v.err("kcs", "at least one knowledge component is required"));
        }
        let mut seen = BTreeSet::new();
        for kc in &raw.kcs {
            if !seen.insert(kc.id.as_str()) {
                return Err(v.err(format!("kcs.{}", kc.id), "duplicate knowledge component id"));
            }
        }

        if raw.parameters.is_empty() {
            return Err(v.err("parameters", "at least one parameter is required"));
        }
        let mut seen = BTreeSet::new();
        for p in &raw.parameters {
            let path = format!("parameters.{}", p.id);
            if !seen.insert(p.id.as_str()) {
                return Err(v.err(path, "duplicate parameter id"));
            }
            if p.values.is_empty() {
                return Err(v.err(path, "parameter has no values"));
            }
            let mut values = BTreeSet::new();
            for value in &p.values {
                if !values.insert(value.as_str()) {
                    return Err(v.err(path, format!("duplicate value `{value}`")));
                }
            }
        }
        let space = ParameterSpace::new(raw.parameters.clone());

        let q_table = Self::build_q_table(&raw, &space, v)?;
        let kc_index = |id: &str| raw.kcs.iter().position(|k| k.id == id);
        let constraints = Self::build_constraints(&raw, &space, &q_table, &kc_index, v)?;
        let stages = Self::build_stages(&raw, &space, v)?;

        raw.teacher
            .riarit
            .check()
            .map_err(|m| v.err("teacher.riarit", m))?;

        let rules = &raw.session;
        if rules.max_exercises == 0 {
            return Err(v.err("session.max_exercises", "must be at least 1"));
        }
        if rules.trial_limit == 0 {
            return Err(v.err("session.trial_limit", "must be at least 1"));
        }
        if rules.mastery_successes == 0 {
            return Err(v.err("session.mastery_successes", "must be at least 1"));
        }

        let d = &raw.denominations;
        if d.first() != Some(&1) || d.windows(2).any(|w| w[0] >= w[1]) {
            return Err(v.err(
                "denominations",
                "must be strictly increasing and start at 1 cent",
            ));
        }

        let money = MoneyBinding::bind(&space).ok();
        if let Some(binding) = &money {
            let j = binding.exercise_type_param();
            if space.value_index(j, &rules.mastery_exercise_type).is_none() {
                return Err(v.err(
                    "session.mastery_exercise_type",
                    format!("`{}` is not an exercise type", rules.mastery_exercise_type),
                ));
            }
        }

        Ok(Scenario {
            id: raw.id,
            kcs: raw.kcs,
            space,
            q_table,
            constraints,
            stages,
            baseline: raw.baseline,
            riarit: raw.teacher.riarit,
            session: raw.session,
            denominations: raw.denominations,
            money,
        })
    }

    fn build_q_table(
        raw: &RawScenario,
        space: &ParameterSpace,
        v: &Validator<'_>,
    ) -> Result<QTable, ConfigError> {
        for kc in raw.q_table.keys() {
            if !raw.kcs.iter().any(|k| &k.id == kc) {
                return Err(v.err(format!("q_table.{kc}"), "unknown knowledge component"));
            }
        }
        let mut entries = Vec::with_capacity(raw.kcs.len());
        for kc in &raw.kcs {
            let per_param = raw.q_table.get(&kc.id).ok_or_else(|| {
                v.err(format!("q_table.{}", kc.id), "knowledge component has no q-values")
            })?;
            for name in per_param.keys() {
                if space.index_of(name).is_none() {
                    return Err(v.err(format!("q_table.{}.{name}", kc.id), "unknown parameter"));
                }
            }
            let mut rows = Vec::with_capacity(space.len());
            for p in space.parameters() {
                let path = format!("q_table.{}.{}", kc.id, p.id);
                let row = per_param
                    .get(&p.id)
                    .ok_or_else(|| v.err(&path, "missing row (use null for not-applicable)"))?;
                if row.len() != p.values.len() {
                    return Err(v.err(
                        &path,
                        format!("expected {} entries, found {}", p.values.len(), row.len()),
                    ));
                }
                for (value, q) in p.values.iter().zip(row) {
                    if let Some(q) = q {
                        if !(0.0..=1.0).contains(q) {
                            return Err(v.err(
                                &path,
                                format!(
                                    "q-value for ({}, {}, {value}) is {q}, outside [0, 1]",
                                    kc.id, p.id
                                ),
                            ));
                        }
                    }
                }
                rows.push(row.clone());
            }
            entries.push(rows);
        }
        Ok(QTable::new(entries))
    }

    fn build_constraints(
        raw: &RawScenario,
        space: &ParameterSpace,
        q_table: &QTable,
        kc_index: &dyn Fn(&str) -> Option<usize>,
        v: &Validator<'_>,
    ) -> Result<Vec<PrerequisiteConstraint>, ConfigError> {
        let mut out = Vec::with_capacity(raw.constraints.len());
        for (i, c) in raw.constraints.iter().enumerate() {
            let path = format!("constraints[{i}].{}", c.parameter);
            let param = space
                .index_of(&c.parameter)
                .ok_or_else(|| v.err(&path, format!("unknown parameter `{}`", c.parameter)))?;
            let value = space
                .value_index(param, &c.value)
                .ok_or_else(|| v.err(&path, format!("unknown value `{}`", c.value)))?;
            if value == 0 {
                return Err(v.err(
                    &path,
                    format!(
                        "the first value `{}` of `{}` must stay unconstrained",
                        c.value, c.parameter
                    ),
                ));
            }
            let mut requires = Vec::with_capacity(c.requires.len());
            for (kc, &min) in &c.requires {
                let idx = kc_index(kc)
                    .ok_or_else(|| v.err(&path, format!("unknown knowledge component `{kc}`")))?;
                if !(0.0..=1.0).contains(&min) {
                    return Err(v.err(&path, format!("threshold {min} for `{kc}` outside [0, 1]")));
                }
                // Some activity using an earlier value must be able to pull the
                // estimate up to the threshold.
                let reachable = max_required_before(q_table, space, idx, param, value);
                if reachable < min {
                    return Err(v.err(
                        &path,
                        format!(
                            "`{kc}` >= {min} is unreachable: activities with earlier `{}` values require at most {reachable}",
                            c.parameter
                        ),
                    ));
                }
                requires.push((idx, min));
            }
            out.push(PrerequisiteConstraint {
                param,
                value,
                requires,
            });
        }
        Ok(out)
    }

    fn build_stages(
        raw: &RawScenario,
        space: &ParameterSpace,
        v: &Validator<'_>,
    ) -> Result<StageTable, ConfigError> {
        if raw.stages.len() != STAGE_COUNT {
            return Err(v.err(
                "stages",
                format!("expected {STAGE_COUNT} stages, found {}", raw.stages.len()),
            ));
        }
        let mut stages = Vec::with_capacity(STAGE_COUNT);
        for (i, stage) in raw.stages.iter().enumerate() {
            let path = format!("stages[{i}]");
            for key in stage.keys() {
                if space.index_of(key).is_none() {
                    return Err(v.err(&path, format!("unknown parameter `{key}`")));
                }
            }
            let mut values = Vec::with_capacity(space.len());
            for (j, p) in space.parameters().iter().enumerate() {
                let ids: Vec<&String> = match stage.get(&p.id) {
                    Some(StageValue::One(id)) => vec![id],
                    Some(StageValue::Any(ids)) if !ids.is_empty() => ids.iter().collect(),
                    Some(StageValue::Any(_)) => {
                        return Err(v.err(&path, format!("`{}` lists no value", p.id)))
                    }
                    None => return Err(v.err(&path, format!("`{}` is missing", p.id))),
                };
                let indices = ids
                    .iter()
                    .map(|id| {
                        space
                            .value_index(j, id)
                            .ok_or_else(|| v.err(&path, format!("`{}` has no value `{id}`", p.id)))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                values.push(indices);
            }
            stages.push(Stage { values });
        }
        Ok(StageTable::new(stages))
    }

    /// Serializes back to the JSON file format.
    pub fn to_json(&self) -> String {
        let raw = RawScenario {
            id: self.id.clone(),
            kcs: self.kcs.clone(),
            parameters: self.space.parameters().to_vec(),
            q_table: self
                .kcs
                .iter()
                .zip(self.q_table.entries())
                .map(|(kc, rows)| {
                    let per_param = self
                        .space
                        .parameters()
                        .iter()
                        .zip(rows)
                        .map(|(p, row)| (p.id.clone(), row.clone()))
                        .collect();
                    (kc.id.clone(), per_param)
                })
                .collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| RawConstraint {
                    parameter: self.space.parameter(c.param).id.clone(),
                    value: self.space.value_id(c.param, c.value).to_string(),
                    requires: c
                        .requires
                        .iter()
                        .map(|&(kc, min)| (self.kcs[kc].id.clone(), min))
                        .collect(),
                })
                .collect(),
            stages: self
                .stages
                .stages()
                .iter()
                .map(|stage| {
                    stage
                        .values
                        .iter()
                        .enumerate()
                        .map(|(j, alts)| {
                            let ids: Vec<String> = alts
                                .iter()
                                .map(|&a| self.space.value_id(j, a).to_string())
                                .collect();
                            let value = if ids.len() == 1 {
                                StageValue::One(ids[0].clone())
                            } else {
                                StageValue::Any(ids)
                            };
                            (self.space.parameter(j).id.clone(), value)
                        })
                        .collect()
                })
                .collect(),
            baseline: self.baseline,
            teacher: TeacherSection {
                riarit: self.riarit,
            },
            session: self.session.clone(),
            denominations: self.denominations.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("scenario serializes")
    }

    pub fn kc_count(&self) -> usize {
        self.kcs.len()
    }

    pub fn kc_index(&self, id: &str) -> Option<usize> {
        self.kcs.iter().position(|k| k.id == id)
    }

    pub fn required_competence(&self, activity: &Activity) -> CompetenceVector {
        self.q_table.required_competence(activity)
    }

    pub fn allowed_values(&self, c: &CompetenceVector) -> ValueMask {
        allowed_values(&self.constraints, c, &self.space)
    }

    /// Value index of the mastery exercise type, when the scenario is a money game.
    pub fn mastery_value(&self) -> Option<usize> {
        let binding = self.money.as_ref()?;
        self.space
            .value_index(binding.exercise_type_param(), &self.session.mastery_exercise_type)
    }
}

/// Highest required level of `kc` over activities whose `param` value comes
/// before `value`, every other parameter free.
fn max_required_before(
    q: &QTable,
    space: &ParameterSpace,
    kc: usize,
    param: usize,
    value: usize,
) -> f64 {
    let best_row = |j: usize, upto: usize| {
        (0..upto)
            .map(|x| q.entry(kc, j, x).unwrap_or(1.0))
            .fold(0.0f64, f64::max)
    };
    (0..space.len())
        .map(|j| {
            if j == param {
                best_row(j, value)
            } else {
                best_row(j, space.value_count(j))
            }
        })
        .product()
}
