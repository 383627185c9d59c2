//! Subject-grouped, class-stratified nested cross-validation plans.
//!
//! Five outer folds estimate generalisation; each outer training set is
//! partitioned into four inner folds for hyperparameter selection. A
//! subject's recordings never straddle folds.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::{mix, Rng};

pub const OUTER_FOLDS: usize = 5;
pub const INNER_FOLDS: usize = 4;

/// One inner split of an outer-training set.
#[derive(Clone, Debug)]
pub struct InnerFold {
    pub train_subjects: Vec<String>,
    pub dev_subjects: Vec<String>,
}

/// One outer fold: held-out test subjects plus the inner partition of the
/// remaining subjects.
#[derive(Clone, Debug)]
pub struct OuterFold {
    pub test_subjects: Vec<String>,
    pub inner: Vec<InnerFold>,
}

#[derive(Clone, Debug)]
pub struct CVPlan {
    pub outer: Vec<OuterFold>,
    pub seed: u64,
}

impl OuterFold {
    /// All subjects of the outer-training set (union of any inner fold's
    /// train and dev parts).
    pub fn train_subjects(&self) -> Vec<String> {
        let mut all: Vec<String> = self.inner[0]
            .train_subjects
            .iter()
            .chain(&self.inner[0].dev_subjects)
            .cloned()
            .collect();
        all.sort();
        all
    }
}

/// Builds the plan from (subject, positive) pairs; duplicate subjects are
/// collapsed and must agree on their label.
pub fn make_cv_plan(subjects: &[(String, bool)], seed: u64) -> Result<CVPlan> {
    let mut by_subject: BTreeMap<&str, bool> = BTreeMap::new();
    for (s, label) in subjects {
        if s.is_empty() {
            return Err(Error::Validation("empty subject id in cv plan".into()));
        }
        if let Some(prev) = by_subject.insert(s, *label) {
            if prev != *label {
                return Err(Error::Validation(format!(
                    "subject {s:?} appears with both labels"
                )));
            }
        }
    }
    let mut positives: Vec<String> = by_subject
        .iter()
        .filter(|(_, &l)| l)
        .map(|(s, _)| s.to_string())
        .collect();
    let mut negatives: Vec<String> = by_subject
        .iter()
        .filter(|(_, &l)| !l)
        .map(|(s, _)| s.to_string())
        .collect();

    if by_subject.len() < 10 {
        return Err(Error::Validation(format!(
            "cross-validation needs at least 10 subjects, got {}",
            by_subject.len()
        )));
    }
    // every outer test fold and every inner fold must see both classes
    if positives.len() < OUTER_FOLDS || negatives.len() < OUTER_FOLDS {
        return Err(Error::Validation(format!(
            "need at least {OUTER_FOLDS} subjects per class, got {} positive / {} negative",
            positives.len(),
            negatives.len()
        )));
    }

    let mut rng = Rng::seed_from(mix(seed, &[0xCF]));
    rng.shuffle(&mut positives);
    rng.shuffle(&mut negatives);

    // deal each class round-robin over the outer folds
    let mut outer_sets: Vec<Vec<String>> = vec![Vec::new(); OUTER_FOLDS];
    for (i, s) in positives.iter().chain(&negatives).enumerate() {
        outer_sets[i % OUTER_FOLDS].push(s.clone());
    }

    let mut outer = Vec::with_capacity(OUTER_FOLDS);
    for fold in 0..OUTER_FOLDS {
        let test_subjects = outer_sets[fold].clone();
        // stratified deal of the remaining subjects over the inner folds
        let mut train_pos: Vec<String> = Vec::new();
        let mut train_neg: Vec<String> = Vec::new();
        for (other, set) in outer_sets.iter().enumerate() {
            if other == fold {
                continue;
            }
            for s in set {
                if by_subject[s.as_str()] {
                    train_pos.push(s.clone());
                } else {
                    train_neg.push(s.clone());
                }
            }
        }
        let mut fold_rng = Rng::seed_from(mix(seed, &[0xD0, fold as u64]));
        fold_rng.shuffle(&mut train_pos);
        fold_rng.shuffle(&mut train_neg);

        let mut dev_sets: Vec<Vec<String>> = vec![Vec::new(); INNER_FOLDS];
        for (i, s) in train_pos.iter().chain(&train_neg).enumerate() {
            dev_sets[i % INNER_FOLDS].push(s.clone());
        }
        let inner = (0..INNER_FOLDS)
            .map(|k| {
                let dev_subjects = dev_sets[k].clone();
                let train_subjects: Vec<String> = dev_sets
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, s)| s.iter().cloned())
                    .collect();
                InnerFold {
                    train_subjects,
                    dev_subjects,
                }
            })
            .collect();
        outer.push(OuterFold {
            test_subjects,
            inner,
        });
    }

    let plan = CVPlan { outer, seed };
    debug_assert!(plan.verify_disjoint().is_ok());
    Ok(plan)
}

impl CVPlan {
    /// Checks the leakage-freedom invariants: within each outer fold the
    /// test/dev/train subject sets are pairwise disjoint, inner folds
    /// partition the outer-training set exactly, and every subject appears
    /// in exactly one outer test fold.
    pub fn verify_disjoint(&self) -> Result<()> {
        use std::collections::BTreeSet;
        let mut seen_in_test: BTreeMap<&str, usize> = BTreeMap::new();
        for (f, fold) in self.outer.iter().enumerate() {
            let test: BTreeSet<&str> = fold.test_subjects.iter().map(String::as_str).collect();
            for s in &test {
                *seen_in_test.entry(s).or_insert(0) += 1;
            }
            let outer_train: BTreeSet<&str> = fold
                .inner
                .iter()
                .flat_map(|i| i.dev_subjects.iter().map(String::as_str))
                .collect();
            if !test.is_disjoint(&outer_train) {
                return Err(Error::Validation(format!(
                    "fold {f}: test subjects leak into training"
                )));
            }
            for (k, inner) in fold.inner.iter().enumerate() {
                let dev: BTreeSet<&str> =
                    inner.dev_subjects.iter().map(String::as_str).collect();
                let train: BTreeSet<&str> =
                    inner.train_subjects.iter().map(String::as_str).collect();
                if !dev.is_disjoint(&train) {
                    return Err(Error::Validation(format!(
                        "fold {f} inner {k}: dev subjects leak into training"
                    )));
                }
                if !test.is_disjoint(&train) || !test.is_disjoint(&dev) {
                    return Err(Error::Validation(format!(
                        "fold {f} inner {k}: test subjects leak into the inner split"
                    )));
                }
                let union: BTreeSet<&str> = dev.union(&train).copied().collect();
                if union != outer_train {
                    return Err(Error::Validation(format!(
                        "fold {f} inner {k}: inner folds do not partition the outer training set"
                    )));
                }
            }
        }
        let total: usize = seen_in_test.values().sum();
        if seen_in_test.values().any(|&c| c != 1) || total != seen_in_test.len() {
            return Err(Error::Validation(
                "subjects must appear in exactly one outer test fold".into(),
            ));
        }
        Ok(())
    }
}
