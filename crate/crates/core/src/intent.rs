//! Intent descriptors over a fixed set of principal tasks.
//!
//! A per-task intent estimate `p_i` (independent classifiers, so the entries
//! need not sum to one) is expanded into a distribution over every subset of
//! tasks. Subsets are addressed by a bitmask over the [`TaskSet`] ordering:
//! bit `i` set means task `i` is part of the combination, and index 0 is the
//! empty combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GraspModel;

/// Upper bound on the number of principal tasks; the target vector has
/// `2^m` entries.
pub const MAX_TASKS: usize = 16;

/// Ordered, duplicate-free list of principal task names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TaskSet {
    names: Vec<String>,
}

impl TaskSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidTaskSet("at least one task is required".into()));
        }
        if names.len() > MAX_TASKS {
            return Err(Error::InvalidTaskSet(format!(
                "{} tasks exceeds the limit of {MAX_TASKS}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidTaskSet("empty task name".into()));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidTaskSet(format!("duplicate task `{name}`")));
            }
        }
        Ok(Self { names })
    }

    /// Number of principal tasks `m`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of task combinations, `2^m`.
    pub fn combinations(&self) -> usize {
        1 << self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    /// Builds the combination containing exactly the named tasks.
    pub fn combination<S: AsRef<str>>(&self, names: &[S]) -> Result<Combination> {
        let mut bits = 0u32;
        for name in names {
            bits |= 1 << self.index_of(name.as_ref())?;
        }
        Ok(Combination(bits))
    }

    /// Set notation for a combination, e.g. `{use, handover}`.
    pub fn label(&self, combination: Combination) -> String {
        let members: Vec<&str> = combination
            .tasks()
            .filter_map(|i| self.names.get(i).map(String::as_str))
            .collect();
        format!("{{{}}}", members.join(", "))
    }

    pub(crate) fn contains(&self, combination: Combination) -> bool {
        (combination.0 as usize) < self.combinations()
    }
}

impl TryFrom<Vec<String>> for TaskSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        TaskSet::new(names)
    }
}

impl From<TaskSet> for Vec<String> {
    fn from(tasks: TaskSet) -> Self {
        tasks.names
    }
}

/// Bitmask over a [`TaskSet`]; bit `i` set iff task `i` is in the combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Combination(pub u32);

impl Combination {
    pub const EMPTY: Combination = Combination(0);

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, task: usize) -> bool {
        self.0 & (1 << task) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Indices of the member tasks, ascending.
    pub fn tasks(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&i| self.0 & (1 << i) != 0)
    }
}

fn check_probability(index: usize, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { index, value })
    }
}

/// Per-task intent probabilities `P(w_i)`, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct IntentVector(Vec<f64>);

impl IntentVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        for (i, &v) in p.iter().enumerate() {
            check_probability(i, v)?;
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for IntentVector {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        IntentVector::new(p)
    }
}

impl From<IntentVector> for Vec<f64> {
    fn from(v: IntentVector) -> Self {
        v.0
    }
}

/// Probability distribution over the `2^m` task combinations, indexed by
/// [`Combination`] bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    /// Accepts any vector of `2^m` probabilities summing to one (within 1e-9).
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() || !q.len().is_power_of_two() {
            return Err(Error::DimensionMismatch {
                context: "target vector length (power of two)",
                expected: q.len().next_power_of_two().max(2),
                actual: q.len(),
            });
        }
        for (i, &v) in q.iter().enumerate() {
            check_probability(i, v)?;
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbability {
                index: q.len(),
                value: total,
            });
        }
        Ok(Self(q))
    }

    /// Point mass on a single combination.
    pub fn one_hot(tasks: &TaskSet, combination: Combination) -> Result<Self> {
        if !tasks.contains(combination) {
            return Err(Error::InvalidTaskSet(format!(
                "combination {} outside of {} tasks",
                combination.0,
                tasks.len()
            )));
        }
        let mut q = vec![0.0; tasks.combinations()];
        q[combination.index()] = 1.0;
        Ok(Self(q))
    }

    pub(crate) fn from_raw(q: Vec<f64>) -> Self {
        Self(q)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, combination: Combination) -> f64 {
        self.0.get(combination.index()).copied().unwrap_or(0.0)
    }

    /// Most probable combination; ties resolve to the lowest bitmask.
    pub fn argmax(&self) -> Combination {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        Combination(best as u32)
    }
}

impl TryFrom<Vec<f64>> for TargetVector {
    type Error = Error;

    fn try_from(q: Vec<f64>) -> Result<Self> {
        TargetVector::new(q)
    }
}

impl From<TargetVector> for Vec<f64> {
    fn from(v: TargetVector) -> Self {
        v.0
    }
}

/// Expands independent per-task probabilities into the powerset descriptor
/// `q[b] = prod_{i in b} p_i * prod_{i not in b} (1 - p_i)`.
///
/// Built by doubling one task at a time, so the cost is `O(2^m)`.
pub fn powerset_target(tasks: &TaskSet, intent: &IntentVector) -> Result<TargetVector> {
    if intent.len() != tasks.len() {
        return Err(Error::DimensionMismatch {
            context: "intent vector length",
            expected: tasks.len(),
            actual: intent.len(),
        });
    }
    let mut q = Vec::with_capacity(tasks.combinations());
    q.push(1.0);
    for &p in intent.as_slice() {
        let half = q.len();
        q.extend_from_within(..);
        for b in 0..half {
            q[b] *= 1.0 - p;
            q[b + half] *= p;
        }
    }
    Ok(TargetVector(q))
}

/// Self-contained intent estimator: `P(w_i)` is the posterior mass of all
/// human-model classes whose combination contains task `i`.
pub fn estimate_intent(human_model: &GraspModel, h: &[f64]) -> Result<IntentVector> {
    let posterior = human_model.class_posterior(h)?;
    let m = human_model.tasks().len();
    let mut p = vec![0.0; m];
    for (class, &post) in human_model.classes().iter().zip(&posterior) {
        for task in class.combination().tasks() {
            p[task] += post;
        }
    }
    // Summation can overshoot 1 by an ulp.
    for v in &mut p {
        *v = v.clamp(0.0, 1.0);
    }
    IntentVector::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cup_tasks() -> TaskSet {
        TaskSet::new(["use", "transfer", "handover"]).unwrap()
    }

    /// Direct evaluation of the product formula, one combination at a time.
    fn product_oracle(p: &[f64], b: usize) -> f64 {
        p.iter()
            .enumerate()
            .map(|(i, &pi)| if b & (1 << i) != 0 { pi } else { 1.0 - pi })
            .product()
    }

    #[test]
    fn worked_cup_example() {
        let tasks = cup_tasks();
        let q = powerset_target(&tasks, &IntentVector::new(vec![0.8, 0.3, 0.78]).unwrap()).unwrap();
        assert_eq!(q.len(), 8);
        assert!((q.get(tasks.combination(&["use"]).unwrap()) - 0.1232).abs() < 1e-12);
        let all = tasks.combination(&["use", "transfer", "handover"]).unwrap();
        assert!((q.get(all) - 0.1872).abs() < 1e-12);
        assert!((q.get(Combination::EMPTY) - 0.0308).abs() < 1e-12);
        for b in 0..8 {
            assert!((q.as_slice()[b] - product_oracle(&[0.8, 0.3, 0.78], b)).abs() < 1e-15);
        }
    }

    #[test]
    fn certainty_is_one_hot() {
        let tasks = cup_tasks();
        let q = powerset_target(&tasks, &IntentVector::new(vec![1.0, 0.0, 0.0]).unwrap()).unwrap();
        let expected = TargetVector::one_hot(&tasks, Combination(0b001)).unwrap();
        assert_eq!(q, expected);
    }

    #[test]
    fn intent_length_must_match_tasks() {
        let err = powerset_target(&cup_tasks(), &IntentVector::new(vec![0.5, 0.5]).unwrap());
        assert!(matches!(
            err,
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2,
                ..
            })
        ));
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(IntentVector::new(vec![0.2, 1.5]).is_err());
        assert!(IntentVector::new(vec![f64::NAN]).is_err());
        assert!(TargetVector::new(vec![0.5, 0.4]).is_err());
        assert!(TargetVector::new(vec![0.5, 0.25, 0.25]).is_err());
    }

    #[test]
    fn task_set_validation_and_labels() {
        assert!(TaskSet::new(Vec::<String>::new()).is_err());
        assert!(TaskSet::new(["a", "a"]).is_err());
        let tasks = cup_tasks();
        let c = tasks.combination(&["handover", "use"]).unwrap();
        assert_eq!(c, Combination(0b101));
        assert_eq!(tasks.label(c), "{use, handover}");
        assert_eq!(tasks.label(Combination::EMPTY), "{}");
        assert!(matches!(tasks.combination(&["juggle"]), Err(Error::UnknownTask(_))));
    }

    proptest! {
        #[test]
        fn target_sums_to_one(p in prop::collection::vec(0.0f64..=1.0, 1..8)) {
            let tasks = TaskSet::new((0..p.len()).map(|i| format!("t{i}"))).unwrap();
            let q = powerset_target(&tasks, &IntentVector::new(p.clone()).unwrap()).unwrap();
            let total: f64 = q.as_slice().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (b, &v) in q.as_slice().iter().enumerate() {
                prop_assert!((v - product_oracle(&p, b)).abs() < 1e-14);
            }
        }

        #[test]
        fn raising_one_task_moves_mass_toward_it(
            p in prop::collection::vec(0.01f64..0.99, 2..6),
            task in 0usize..6,
            bump in 0.001f64..0.009,
        ) {
            let task = task % p.len();
            let tasks = TaskSet::new((0..p.len()).map(|i| format!("t{i}"))).unwrap();
            let before = powerset_target(&tasks, &IntentVector::new(p.clone()).unwrap()).unwrap();
            let mut raised = p.clone();
            raised[task] += bump;
            let after = powerset_target(&tasks, &IntentVector::new(raised).unwrap()).unwrap();
            for b in 0..before.len() {
                let (x, y) = (before.as_slice()[b], after.as_slice()[b]);
                if b & (1 << task) != 0 {
                    prop_assert!(y > x);
                } else {
                    prop_assert!(y < x);
                }
            }
        }
    }
}
