//! Greedy sequential forward selection over named feature-row groups.

use super::roc::{auc, roc};
use crate::error::{Error, Result};
use crate::shallow::{train_shallow, ShallowSpec};

/// A named set of vector component indices treated as one candidate.
#[derive(Clone, Debug)]
pub struct FeatureGroup {
    pub name: String,
    pub indices: Vec<usize>,
}

/// One accepted selection step.
#[derive(Clone, Debug, PartialEq)]
pub struct SfsStep {
    pub name: String,
    /// Mean development AUC after adding this group.
    pub auc: f64,
}

/// A (train, dev) pair of labelled vector sets.
pub type SfsFold = ((Vec<Vec<f64>>, Vec<bool>), (Vec<Vec<f64>>, Vec<bool>));

fn project(v: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| v[i]).collect()
}

fn mean_dev_auc(
    folds: &[SfsFold],
    indices: &[usize],
    spec: &ShallowSpec,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for ((train_x, train_y), (dev_x, dev_y)) in folds {
        let tx: Vec<Vec<f64>> = train_x.iter().map(|v| project(v, indices)).collect();
        let dx: Vec<Vec<f64>> = dev_x.iter().map(|v| project(v, indices)).collect();
        let model = train_shallow(spec, &tx, train_y, seed)?;
        let scores: Vec<f64> = dx
            .iter()
            .map(|v| model.predict_proba(v))
            .collect::<Result<_>>()?;
        total += auc(&roc(&scores, dev_y)?);
    }
    Ok(total / folds.len() as f64)
}

/// Grows a feature subset greedily, adding whichever group lifts the mean
/// development AUC the most, until `max_k` groups are selected or no
/// candidate improves the score. Ties break toward the earlier group.
pub fn sfs(
    folds: &[SfsFold],
    groups: &[FeatureGroup],
    spec: &ShallowSpec,
    max_k: usize,
    seed: u64,
) -> Result<Vec<SfsStep>> {
    if groups.is_empty() {
        return Err(Error::Validation("sfs needs at least one group".into()));
    }
    if folds.is_empty() {
        return Err(Error::Validation("sfs needs at least one fold".into()));
    }
    let mut selected: Vec<usize> = Vec::new();
    let mut selected_indices: Vec<usize> = Vec::new();
    let mut steps: Vec<SfsStep> = Vec::new();
    let mut best_so_far = f64::NEG_INFINITY;

    while selected.len() < max_k.min(groups.len()) {
        let mut best_candidate: Option<(usize, f64)> = None;
        for (g, group) in groups.iter().enumerate() {
            if selected.contains(&g) {
                continue;
            }
            let mut trial = selected_indices.clone();
            trial.extend_from_slice(&group.indices);
            let score = mean_dev_auc(folds, &trial, spec, seed)?;
            let better = match best_candidate {
                None => true,
                Some((_, s)) => score > s,
            };
            if better {
                best_candidate = Some((g, score));
            }
        }
        let (g, score) = best_candidate.expect("at least one unselected group");
        if score <= best_so_far {
            break;
        }
        best_so_far = score;
        selected.push(g);
        selected_indices.extend_from_slice(&groups[g].indices);
        steps.push(SfsStep {
            name: groups[g].name.clone(),
            auc: score,
        });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// One informative dimension among noise; folds share the generator.
    fn planted_folds(informative: usize, dims: usize, seed: u64) -> Vec<SfsFold> {
        let mut rng = Rng::seed_from(seed);
        let mut make_set = |n: usize| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..n {
                let label = i % 2 == 0;
                let mut v: Vec<f64> = (0..dims).map(|_| rng.normal()).collect();
                v[informative] += if label { 2.0 } else { -2.0 };
                xs.push(v);
                ys.push(label);
            }
            (xs, ys)
        };
        (0..2).map(|_| (make_set(40), make_set(20))).collect()
    }

    fn row_groups(dims: usize) -> Vec<FeatureGroup> {
        (0..dims)
            .map(|d| FeatureGroup {
                name: format!("row{d}"),
                indices: vec![d],
            })
            .collect()
    }

    fn lr_spec() -> ShallowSpec {
        ShallowSpec::Lr {
            reg_strength: 100.0,
            l1_weight: 0.0,
            l2_weight: 1.0,
        }
    }

    #[test]
    fn informative_row_is_chosen_first() {
        let folds = planted_folds(6, 10, 21);
        let steps = sfs(&folds, &row_groups(10), &lr_spec(), 4, 0).unwrap();
        assert_eq!(steps[0].name, "row6");
        assert!(steps[0].auc > 0.9, "auc {}", steps[0].auc);
    }

    #[test]
    fn max_k_one_returns_best_single_group() {
        let folds = planted_folds(2, 5, 22);
        let steps = sfs(&folds, &row_groups(5), &lr_spec(), 1, 0).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].name, "row2");
    }

    #[test]
    fn selection_is_deterministic() {
        let folds = planted_folds(3, 8, 23);
        let a = sfs(&folds, &row_groups(8), &lr_spec(), 5, 1).unwrap();
        let b = sfs(&folds, &row_groups(8), &lr_spec(), 5, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stops_when_no_candidate_improves() {
        let folds = planted_folds(0, 4, 24);
        let steps = sfs(&folds, &row_groups(4), &lr_spec(), 4, 0).unwrap();
        // the informative row wins immediately; pure-noise additions cannot
        // keep improving for all remaining rounds
        assert!(steps.len() < 4, "selected {} groups", steps.len());
    }
}
