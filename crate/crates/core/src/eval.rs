//! Scoring model predictions against a QA dataset.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::Letter;
use crate::qa::{QAItem, Subtask};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    pub output_text: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("prediction for unknown item {0:?}")]
    UnknownItemId(String),
    #[error("more than one prediction for item {0:?}")]
    DuplicatePrediction(String),
    #[error("dataset contains item {0:?} twice")]
    DuplicateItemId(String),
    #[error("random baseline needs a non-empty dataset and at least one trial")]
    NothingToSample,
}

/// First standalone A–D token, ignoring case and wrapping brackets or
/// punctuation. `None` when the text names no option.
pub fn parse_choice(output_text: &str) -> Option<Letter> {
    const WRAP: &[char] = &['(', ')', '[', ']', '{', '}', '.', ':', ',', ';', '"', '\'', '*', '`'];
    output_text.split_whitespace().find_map(|tok| {
        let core = tok.trim_matches(WRAP);
        let mut chars = core.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Letter::from_char(c),
            _ => None,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl SubtaskScore {
    fn new(correct: usize, total: usize) -> Self {
        SubtaskScore {
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Every subtask tag, including those without items.
    pub subtasks: BTreeMap<String, SubtaskScore>,
    /// Correct items over all items.
    pub overall_micro: f64,
    /// Mean accuracy over subtasks that have at least one item.
    pub overall_macro: f64,
    pub correct: usize,
    pub total: usize,
    pub unparseable: usize,
    pub missing: usize,
}

/// Scores predictions; missing and unparseable predictions count as wrong.
pub fn score(dataset: &[QAItem], predictions: &[Prediction]) -> Result<ScoreReport, EvalError> {
    let mut by_id: HashMap<&str, &QAItem> = HashMap::with_capacity(dataset.len());
    for it in dataset {
        if by_id.insert(&it.item_id, it).is_some() {
            return Err(EvalError::DuplicateItemId(it.item_id.clone()));
        }
    }
    let mut predicted: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !by_id.contains_key(p.item_id.as_str()) {
            return Err(EvalError::UnknownItemId(p.item_id.clone()));
        }
        if predicted.insert(&p.item_id, &p.output_text).is_some() {
            return Err(EvalError::DuplicatePrediction(p.item_id.clone()));
        }
    }

    let mut counts: BTreeMap<Subtask, (usize, usize)> = Subtask::all().into_iter().map(|s| (s, (0, 0))).collect();
    let (mut unparseable, mut missing) = (0, 0);
    for it in dataset {
        let ok = match predicted.get(it.item_id.as_str()) {
            None => {
                missing += 1;
                false
            }
            Some(text) => match parse_choice(text) {
                None => {
                    unparseable += 1;
                    false
                }
                Some(l) => l == it.answer,
            },
        };
        let c = counts.entry(it.subtask).or_default();
        c.0 += ok as usize;
        c.1 += 1;
    }

    let correct: usize = counts.values().map(|c| c.0).sum();
    let total = dataset.len();
    let populated: Vec<f64> = counts
        .values()
        .filter(|c| c.1 > 0)
        .map(|&(k, n)| k as f64 / n as f64)
        .collect();
    Ok(ScoreReport {
        subtasks: counts
            .into_iter()
            .map(|(s, (k, n))| (s.tag(), SubtaskScore::new(k, n)))
            .collect(),
        overall_micro: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        overall_macro: if populated.is_empty() {
            0.0
        } else {
            populated.iter().sum::<f64>() / populated.len() as f64
        },
        correct,
        total,
        unparseable,
        missing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskShare {
    pub count: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub subtasks: BTreeMap<String, SubtaskShare>,
    pub videos: BTreeMap<String, usize>,
}

pub fn dataset_stats(dataset: &[QAItem]) -> DatasetStats {
    let mut counts: BTreeMap<Subtask, usize> = Subtask::all().into_iter().map(|s| (s, 0)).collect();
    let mut videos = BTreeMap::new();
    for it in dataset {
        *counts.entry(it.subtask).or_default() += 1;
        *videos.entry(it.video_id.clone()).or_default() += 1;
    }
    let total = dataset.len();
    DatasetStats {
        total,
        subtasks: counts
            .into_iter()
            .map(|(s, count)| {
                let proportion = if total == 0 { 0.0 } else { count as f64 / total as f64 };
                (s.tag(), SubtaskShare { count, proportion })
            })
            .collect(),
        videos,
    }
}

/// Monte-Carlo accuracy of guessing a uniform letter on a uniformly drawn
/// item.
pub fn random_baseline<R: Rng + ?Sized>(dataset: &[QAItem], trials: usize, rng: &mut R) -> Result<f64, EvalError> {
    if dataset.is_empty() || trials == 0 {
        return Err(EvalError::NothingToSample);
    }
    let mut hits = 0usize;
    for _ in 0..trials {
        let it = &dataset[rng.random_range(0..dataset.len())];
        let guess = Letter::ALL[rng.random_range(0..Letter::ALL.len())];
        hits += (guess == it.answer) as usize;
    }
    Ok(hits as f64 / trials as f64)
}

/// Item ids present in `dataset` without a prediction.
pub fn missing_ids<'a>(dataset: &'a [QAItem], predictions: &[Prediction]) -> Vec<&'a str> {
    let seen: HashSet<&str> = predictions.iter().map(|p| p.item_id.as_str()).collect();
    dataset
        .iter()
        .map(|i| i.item_id.as_str())
        .filter(|id| !seen.contains(id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::{item_id, Options, QuestionType};
    use crate::viewpoint::{Mobility, Observer, ViewpointSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn item(idx: usize, subtask: Subtask, answer: Letter) -> QAItem {
        QAItem {
            item_id: item_id("v", idx),
            video_id: "v".into(),
            subtask,
            question: "q".into(),
            options: Options::from_array(["a".into(), "b".into(), "c".into(), "d".into()]),
            answer,
            t_start: 0.0,
            t_end: 4.0,
            visible_until: 4.0,
            viewpoint: ViewpointSpec::relative(Observer::Camera),
            targets: vec!["x".into()],
            seed: idx as u64,
            provenance: None,
        }
    }

    fn pred(idx: usize, text: &str) -> Prediction {
        Prediction {
            item_id: item_id("v", idx),
            output_text: text.into(),
        }
    }

    fn dataset(n: usize) -> Vec<QAItem> {
        let tags = Subtask::all();
        (0..n)
            .map(|i| item(i, tags[i % tags.len()], Letter::ALL[(i * 7) % 4]))
            .collect()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_choice("B"), Some(Letter::B));
        assert_eq!(parse_choice("(c) because it moves"), Some(Letter::C));
        assert_eq!(parse_choice("maybe"), None);
        assert_eq!(parse_choice("Answer: D."), Some(Letter::D));
        assert_eq!(parse_choice("[A]"), Some(Letter::A));
        assert_eq!(parse_choice("E or AB"), None);
        assert_eq!(parse_choice(""), None);
    }

    proptest! {
        #[test]
        fn parse_is_total(s in ".*") {
            let _ = parse_choice(&s);
        }
    }

    #[test]
    fn perfect_predictions() {
        let ds = dataset(26);
        let preds: Vec<_> = ds.iter().enumerate().map(|(i, it)| pred(i, &it.answer.to_string())).collect();
        let r = score(&ds, &preds).unwrap();
        assert_eq!(r.overall_micro, 1.0);
        assert_eq!(r.overall_macro, 1.0);
        assert!(r.subtasks.values().all(|s| s.accuracy == 1.0));
        assert_eq!(r.subtasks.len(), 13);
    }

    #[test]
    fn empty_predictions() {
        let ds = dataset(10);
        let r = score(&ds, &[]).unwrap();
        assert!(r.subtasks.values().all(|s| s.accuracy == 0.0));
        assert_eq!((r.unparseable, r.missing), (0, 10));
        assert_eq!(missing_ids(&ds, &[]).len(), 10);
    }

    #[test]
    fn exact_fraction() {
        let ds = dataset(100);
        let preds: Vec<_> = ds
            .iter()
            .enumerate()
            .map(|(i, it)| {
                let l = if i < 37 { it.answer } else { Letter::from_index((it.answer.index() + 1) % 4).unwrap() };
                pred(i, &format!("({l})"))
            })
            .collect();
        let r = score(&ds, &preds).unwrap();
        assert_eq!(r.overall_micro, 0.37);
        assert_eq!(r.correct, r.subtasks.values().map(|s| s.correct).sum::<usize>());
    }

    #[test]
    fn unknown_and_duplicate_rejected() {
        let ds = dataset(3);
        assert_eq!(score(&ds, &[pred(9, "A")]), Err(EvalError::UnknownItemId(item_id("v", 9))));
        assert!(matches!(score(&ds, &[pred(0, "A"), pred(0, "B")]), Err(EvalError::DuplicatePrediction(_))));
    }

    #[test]
    fn unparseable_counted_and_macro_differs() {
        let abs = Subtask::Template(Mobility::Absolute, QuestionType::Distance);
        let rel = Subtask::Template(Mobility::Relative, QuestionType::Speed);
        let ds = vec![item(0, abs, Letter::A), item(1, abs, Letter::A), item(2, abs, Letter::A), item(3, rel, Letter::B)];
        let preds = vec![pred(0, "A"), pred(1, "A"), pred(2, "A"), pred(3, "no idea")];
        let r = score(&ds, &preds).unwrap();
        assert_eq!(r.overall_micro, 0.75);
        assert_eq!(r.overall_macro, 0.5);
        assert_eq!(r.unparseable, 1);
    }

    #[test]
    fn score_ignores_prediction_order() {
        let ds = dataset(40);
        let mut preds: Vec<_> = (0..40).map(|i| pred(i, ["A", "B", "C", "D", "?"][i % 5])).collect();
        let a = score(&ds, &preds).unwrap();
        preds.reverse();
        assert_eq!(score(&ds, &preds).unwrap(), a);
    }

    #[test]
    fn stats_proportions() {
        let tags = Subtask::all();
        let ds: Vec<_> = (0..4).map(|i| item(i, tags[i], Letter::A)).collect();
        let s = dataset_stats(&ds);
        for t in &tags[..4] {
            assert_eq!(s.subtasks[&t.tag()].proportion, 0.25);
        }
        assert!((s.subtasks.values().map(|x| x.proportion).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.videos["v"], 4);
        let empty = dataset_stats(&[]);
        assert_eq!(empty.total, 0);
        assert!(empty.subtasks.values().all(|x| x.count == 0));
    }

    #[test]
    fn baseline_single_item_and_reproducible() {
        let ds = dataset(1);
        let b = random_baseline(&ds, 40_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((b - 0.25).abs() < 0.01);
        assert_eq!(b, random_baseline(&ds, 40_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap());
        assert!(random_baseline(&ds, 0, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
        assert!(random_baseline(&[], 5, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }
}
