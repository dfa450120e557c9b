//! Accuracy overall and on many/medium/few-shot class splits.

use serde::{Deserialize, Serialize};

use crate::data::LabeledEmbeddings;
use crate::error::{Error, Result};
use crate::train::ProbeModel;

/// How classes are assigned to the many/medium/few splits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// Rank by training count (ties to the lower id); the top third is
    /// "many", the bottom third "few", the rest "medium".
    #[default]
    Thirds,
    /// Absolute training-count thresholds.
    Thresholds { many_above: usize, few_below: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Many,
    Medium,
    Few,
}

pub fn assign_splits(train_counts: &[usize], rule: &SplitRule) -> Vec<Split> {
    match *rule {
        SplitRule::Thirds => {
            let k = train_counts.len();
            let third = k / 3;
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| train_counts[b].cmp(&train_counts[a]).then(a.cmp(&b)));
            let mut splits = vec![Split::Medium; k];
            for (rank, &c) in order.iter().enumerate() {
                if rank < third {
                    splits[c] = Split::Many;
                } else if rank >= k - third {
                    splits[c] = Split::Few;
                }
            }
            splits
        }
        SplitRule::Thresholds {
            many_above,
            few_below,
        } => train_counts
            .iter()
            .map(|&n| {
                if n > many_above {
                    Split::Many
                } else if n < few_below {
                    Split::Few
                } else {
                    Split::Medium
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: f64,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    /// Accuracy per class; `None` for classes absent from the test set.
    pub per_class: Vec<Option<f64>>,
    pub test_size: usize,
}

/// Scores predictions against clean test labels.
pub fn score(
    predictions: &[usize],
    test: &LabeledEmbeddings,
    train_counts: &[usize],
    rule: &SplitRule,
) -> Result<Metrics> {
    if predictions.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} test items",
            predictions.len(),
            test.len()
        )));
    }
    if train_counts.len() != test.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} training counts for {} classes",
            train_counts.len(),
            test.num_classes()
        )));
    }
    let k = test.num_classes();
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for (&p, &y) in predictions.iter().zip(test.labels()) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let splits = assign_splits(train_counts, rule);
    let split_acc = |which: Split| {
        let (h, t) = (0..k)
            .filter(|&c| splits[c] == which)
            .fold((0, 0), |(h, t), c| (h + hits[c], t + totals[c]));
        (t > 0).then(|| h as f64 / t as f64)
    };
    Ok(Metrics {
        overall: hits.iter().sum::<usize>() as f64 / test.len() as f64,
        many: split_acc(Split::Many),
        medium: split_acc(Split::Medium),
        few: split_acc(Split::Few),
        per_class: (0..k)
            .map(|c| (totals[c] > 0).then(|| hits[c] as f64 / totals[c] as f64))
            .collect(),
        test_size: test.len(),
    })
}

/// Evaluates `model` on clean-labelled `test` data, splitting classes by the
/// model's recorded training counts.
pub fn evaluate(model: &ProbeModel, test: &LabeledEmbeddings, rule: &SplitRule) -> Result<Metrics> {
    if test.dim() != model.dim() || test.num_classes() != model.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "model is {}-d/{} classes, test set is {}-d/{} classes",
            model.dim(),
            model.num_classes(),
            test.dim(),
            test.num_classes()
        )));
    }
    let counts = if model.class_counts.len() == model.num_classes() {
        model.class_counts.clone()
    } else {
        vec![0; model.num_classes()]
    };
    let predictions: Vec<usize> = test.vectors().iter().map(|x| model.predict(x)).collect();
    score(&predictions, test, &counts, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_set(per_class: usize, k: usize) -> LabeledEmbeddings {
        let labels: Vec<usize> = (0..k)
            .flat_map(|c| std::iter::repeat_n(c, per_class))
            .collect();
        let vectors = labels.iter().map(|&c| vec![c as f64]).collect();
        LabeledEmbeddings::new(1, k, vectors, labels).unwrap()
    }

    #[test]
    fn perfect_and_constant_classifiers() {
        let test = test_set(5, 10);
        let counts: Vec<usize> = (0..10).map(|c| 100 - 5 * c).collect();
        let m = score(test.labels(), &test, &counts, &SplitRule::Thirds).unwrap();
        assert_eq!(
            (m.overall, m.many, m.medium, m.few),
            (1.0, Some(1.0), Some(1.0), Some(1.0))
        );
        let m = score(&vec![0; test.len()], &test, &counts, &SplitRule::Thirds).unwrap();
        assert!((m.overall - 0.1).abs() < 1e-15);
        assert_eq!(m.many, Some(1.0 / 3.0));
        assert_eq!(m.few, Some(0.0));
    }

    #[test]
    fn thirds_and_thresholds() {
        let s = assign_splits(&[5, 50, 20, 20, 1, 9, 30], &SplitRule::Thirds);
        // ranks: 1(50),6(30),2(20),3(20),5(9),0(5),4(1)
        assert_eq!(s[1], Split::Many);
        assert_eq!(s[6], Split::Many);
        assert_eq!(s[2], Split::Medium);
        assert_eq!(s[5], Split::Medium);
        assert_eq!(s[0], Split::Few);
        assert_eq!(s[4], Split::Few);
        let s = assign_splits(
            &[150, 100, 20, 19],
            &SplitRule::Thresholds {
                many_above: 100,
                few_below: 20,
            },
        );
        assert_eq!(
            s,
            vec![Split::Many, Split::Medium, Split::Medium, Split::Few]
        );
    }

    #[test]
    fn absent_split_is_null() {
        let test = test_set(3, 2);
        let m = score(
            test.labels(),
            &test,
            &[10, 10],
            &SplitRule::Thresholds {
                many_above: 5,
                few_below: 1,
            },
        )
        .unwrap();
        assert_eq!(m.many, Some(1.0));
        assert_eq!(m.medium, None);
        assert_eq!(m.few, None);
    }

    proptest! {
        #[test]
        fn overall_is_weighted_split_average(
            preds in prop::collection::vec(0usize..7, 70),
            counts in prop::collection::vec(1usize..500, 7),
            shift in 0usize..70,
        ) {
            let test = test_set(10, 7);
            let m = score(&preds, &test, &counts, &SplitRule::Thirds).unwrap();
            let splits = assign_splits(&counts, &SplitRule::Thirds);
            let size = |s: Split| splits.iter().filter(|&&x| x == s).count() as f64 * 10.0;
            let weighted = m.many.unwrap_or(0.0) * size(Split::Many)
                + m.medium.unwrap_or(0.0) * size(Split::Medium)
                + m.few.unwrap_or(0.0) * size(Split::Few);
            prop_assert!((weighted / 70.0 - m.overall).abs() < 1e-12);

            // Permuting the test set (with its predictions) changes nothing.
            let mut idx: Vec<usize> = (0..70).collect();
            idx.rotate_left(shift);
            let permuted = test.select(&idx).unwrap();
            let ppreds: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
            let m2 = score(&ppreds, &permuted, &counts, &SplitRule::Thirds).unwrap();
            prop_assert_eq!(m, m2);
        }
    }
}
