//! Knowledge components, activity parameters, the factorized Q-table and
//! prerequisite masking.
//!
//! Everything here is immutable once a scenario is loaded and can be shared
//! freely between sessions and simulation workers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeComponent {
    pub id: String,
    pub name: String,
}

/// One activity parameter and its ordered value ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub id: String,
    pub values: Vec<String>,
}

/// Ordered list of activity parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSpace {
    params: Vec<Parameter>,
}

impl ParameterSpace {
    /// Callers are expected to have validated non-empty, unique value lists.
    pub(crate) fn new(params: Vec<Parameter>) -> Self {
        Self { params }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameter(&self, index: usize) -> &Parameter {
        &self.params[index]
    }

    pub fn value_count(&self, param: usize) -> usize {
        self.params[param].values.len()
    }

    pub fn index_of(&self, param_id: &str) -> Option<usize> {
        self.params.iter().position(|p| p.id == param_id)
    }

    pub fn value_index(&self, param: usize, value_id: &str) -> Option<usize> {
        self.params[param].values.iter().position(|v| v == value_id)
    }

    pub fn value_id(&self, param: usize, value: usize) -> &str {
        &self.params[param].values[value]
    }

    /// Number of distinct activities (product of value counts).
    pub fn activity_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).product()
    }

    /// Every activity in lexicographic order of value indices.
    pub fn activities(&self) -> impl Iterator<Item = Activity> + '_ {
        let total = self.activity_count();
        (0..total).map(move |mut n| {
            let mut values = vec![0; self.params.len()];
            for (j, p) in self.params.iter().enumerate().rev() {
                values[j] = n % p.values.len();
                n /= p.values.len();
            }
            Activity::new(values)
        })
    }

    /// Builds an activity from value ids given in parameter order.
    pub fn activity_from_ids(&self, ids: &[&str]) -> Option<Activity> {
        if ids.len() != self.params.len() {
            return None;
        }
        ids.iter()
            .enumerate()
            .map(|(j, id)| self.value_index(j, id))
            .collect::<Option<Vec<_>>>()
            .map(Activity::new)
    }

    pub fn labels(&self, activity: &Activity) -> Vec<&str> {
        activity
            .values()
            .iter()
            .enumerate()
            .map(|(j, &v)| self.value_id(j, v))
            .collect()
    }
}

/// One chosen value index per parameter, in [`ParameterSpace`] order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Activity(Vec<usize>);

impl Activity {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn value(&self, param: usize) -> usize {
        self.0[param]
    }

    pub fn is_valid_in(&self, space: &ParameterSpace) -> bool {
        self.0.len() == space.len()
            && self
                .0
                .iter()
                .enumerate()
                .all(|(j, &v)| v < space.value_count(j))
    }
}

/// Per-KC competence levels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompetenceVector(Vec<f64>);

impl CompetenceVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Clamps each component into `[0, 1]`.
    pub fn from_levels(levels: Vec<f64>) -> Self {
        Self(levels.into_iter().map(|c| c.clamp(0.0, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, kc: usize) -> f64 {
        self.0[kc]
    }

    pub(crate) fn set(&mut self, kc: usize, level: f64) {
        self.0[kc] = level.clamp(0.0, 1.0);
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Required competence per (KC, parameter, value). `None` marks a
/// not-applicable entry, which imposes no requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    // entries[kc][param][value]
    entries: Vec<Vec<Vec<Option<f64>>>>,
}

impl QTable {
    /// Callers must have checked the dense shape and the `[0, 1]` range.
    pub(crate) fn new(entries: Vec<Vec<Vec<Option<f64>>>>) -> Self {
        Self { entries }
    }

    pub fn kc_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, kc: usize, param: usize, value: usize) -> Option<f64> {
        self.entries[kc][param][value]
    }

    pub(crate) fn entries(&self) -> &[Vec<Vec<Option<f64>>>] {
        &self.entries
    }

    /// Required competence of a whole activity: per KC, the product of the
    /// per-parameter entries, with not-applicable entries acting as 1.
    pub fn required_competence(&self, activity: &Activity) -> CompetenceVector {
        let levels = self
            .entries
            .iter()
            .map(|per_param| {
                activity
                    .values()
                    .iter()
                    .zip(per_param)
                    .map(|(&v, row)| row[v].unwrap_or(1.0))
                    .product::<f64>()
            })
            .collect();
        CompetenceVector(levels)
    }
}

/// Minimum competence levels that gate one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct PrerequisiteConstraint {
    pub param: usize,
    pub value: usize,
    /// (KC index, inclusive minimum level).
    pub requires: Vec<(usize, f64)>,
}

impl PrerequisiteConstraint {
    pub fn is_satisfied(&self, c: &CompetenceVector) -> bool {
        self.requires.iter().all(|&(kc, min)| c.get(kc) >= min)
    }
}

/// Per parameter, which values are currently allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueMask {
    allowed: Vec<Vec<bool>>,
}

impl ValueMask {
    pub fn full(space: &ParameterSpace) -> Self {
        Self {
            allowed: space
                .parameters()
                .iter()
                .map(|p| vec![true; p.values.len()])
                .collect(),
        }
    }

    pub fn from_rows(allowed: Vec<Vec<bool>>) -> Self {
        Self { allowed }
    }

    pub fn row(&self, param: usize) -> &[bool] {
        &self.allowed[param]
    }

    pub fn is_allowed(&self, param: usize, value: usize) -> bool {
        self.allowed[param][value]
    }

    pub fn allowed_values(&self, param: usize) -> impl Iterator<Item = usize> + '_ {
        self.allowed[param]
            .iter()
            .enumerate()
            .filter_map(|(v, &ok)| ok.then_some(v))
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn restrict(&mut self, param: usize, value: usize) {
        self.allowed[param][value] = false;
    }
}

/// Values whose every prerequisite is met by `c` (thresholds are inclusive).
pub fn allowed_values(
    constraints: &[PrerequisiteConstraint],
    c: &CompetenceVector,
    space: &ParameterSpace,
) -> ValueMask {
    let mut mask = ValueMask::full(space);
    for constraint in constraints {
        if !constraint.is_satisfied(c) {
            mask.restrict(constraint.param, constraint.value);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_space() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter {
                id: "T".into(),
                values: vec!["1".into(), "2".into(), "3".into()],
            },
            Parameter {
                id: "M".into(),
                values: vec!["R".into(), "K".into()],
            },
        ])
    }

    #[test]
    fn activities_enumerates_full_product() {
        let space = tiny_space();
        let all: Vec<_> = space.activities().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].values(), &[0, 0]);
        assert_eq!(all[1].values(), &[0, 1]);
        assert_eq!(all[5].values(), &[2, 1]);
    }

    #[test]
    fn not_applicable_entries_act_as_one() {
        let q = QTable::new(vec![vec![
            vec![Some(0.5), Some(0.25), Some(1.0)],
            vec![None, None],
        ]]);
        let c = q.required_competence(&Activity::new(vec![1, 0]));
        assert_eq!(c.levels(), &[0.25]);
    }

    #[test]
    fn identity_product_is_one() {
        let q = QTable::new(vec![vec![vec![Some(1.0); 3], vec![Some(1.0), None]]]);
        for a in tiny_space().activities() {
            assert_eq!(q.required_competence(&a).get(0), 1.0);
        }
    }

    #[test]
    fn empty_constraint_set_allows_everything() {
        let space = tiny_space();
        let mask = allowed_values(&[], &CompetenceVector::zeros(2), &space);
        assert_eq!(mask, ValueMask::full(&space));
    }

    #[test]
    fn thresholds_are_inclusive() {
        let space = tiny_space();
        let constraint = PrerequisiteConstraint {
            param: 0,
            value: 2,
            requires: vec![(1, 0.6)],
        };
        let below = allowed_values(
            std::slice::from_ref(&constraint),
            &CompetenceVector::from_levels(vec![0.0, 0.0]),
            &space,
        );
        assert!(!below.is_allowed(0, 2));
        assert!(below.is_allowed(0, 1));

        let at = allowed_values(
            &[constraint],
            &CompetenceVector::from_levels(vec![0.0, 0.6]),
            &space,
        );
        assert!(at.is_allowed(0, 2));
    }

    #[test]
    fn competence_vector_clamps() {
        let c = CompetenceVector::from_levels(vec![-0.2, 0.5, 1.7]);
        assert_eq!(c.levels(), &[0.0, 0.5, 1.0]);
    }
}
