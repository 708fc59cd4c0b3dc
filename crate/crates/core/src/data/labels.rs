use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeFile {
    classes: Vec<String>,
    evaluated: Vec<String>,
}

/// Emotion classes and the subset that is scored and trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    classes: Vec<String>,
    evaluated: Vec<bool>,
}

impl LabelScheme {
    pub fn new<S: AsRef<str>>(classes: Vec<String>, evaluated: &[S]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("label scheme has no classes".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(Error::Config(format!("duplicate class {c:?}")));
            }
        }
        let mut mask = vec![false; classes.len()];
        for e in evaluated {
            let e = e.as_ref();
            let i = classes.iter().position(|c| c == e).ok_or_else(|| {
                Error::Config(format!("evaluated class {e:?} is not in the class list"))
            })?;
            mask[i] = true;
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config("evaluated class subset is empty".into()));
        }
        Ok(LabelScheme {
            classes,
            evaluated: mask,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: SchemeFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("label scheme: {e}")))?;
        Self::new(f.classes, &f.evaluated)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, id: usize) -> &str {
        &self.classes[id]
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn evaluated_mask(&self) -> &[bool] {
        &self.evaluated
    }

    pub fn is_evaluated(&self, id: usize) -> bool {
        self.evaluated[id]
    }

    /// Number of labeled utterances per class.
    pub fn class_counts(&self, corpus: &Corpus) -> Vec<u64> {
        let mut counts = vec![0; self.classes.len()];
        for u in corpus.dialogues.iter().flat_map(|d| &d.utterances) {
            if let Some(c) = u.label {
                counts[c] += 1;
            }
        }
        counts
    }
}

/// Loss weights inversely proportional to `count^alpha`.
///
/// For evaluated classes `w(c) = Σ_{c' evaluated} I_{c'}^α / I_c^α`; every
/// excluded class gets weight 0.
pub fn compute_class_weights(counts: &[u64], alpha: f64, evaluated: &[bool]) -> Result<Vec<f64>> {
    if counts.len() != evaluated.len() {
        return Err(Error::Config(format!(
            "{} class counts for {} classes",
            counts.len(),
            evaluated.len()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!(
            "loss-weight exponent {alpha} must be a finite value >= 0"
        )));
    }
    if !evaluated.iter().any(|&e| e) {
        return Err(Error::Config("no evaluated classes".into()));
    }
    let powered: Vec<f64> = counts.iter().map(|&n| (n as f64).powf(alpha)).collect();
    let mut total = 0.0;
    for (c, (&p, &e)) in powered.iter().zip(evaluated).enumerate() {
        if e {
            if p == 0.0 {
                return Err(Error::Config(format!(
                    "evaluated class {c} has no training utterances; its weight is undefined at alpha {alpha}"
                )));
            }
            total += p;
        }
    }
    Ok(powered
        .iter()
        .zip(evaluated)
        .map(|(&p, &e)| if e { total / p } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IEMOCAP_TRAIN: [u64; 4] = [1090, 1627, 1077, 1704];

    #[test]
    fn alpha_zero_is_class_count() {
        let w = compute_class_weights(&IEMOCAP_TRAIN, 0.0, &[true; 4]).unwrap();
        assert_eq!(w, vec![4.0; 4]);
    }

    #[test]
    fn alpha_one_matches_direct_evaluation() {
        let w = compute_class_weights(&IEMOCAP_TRAIN, 1.0, &[true; 4]).unwrap();
        for (wi, &n) in w.iter().zip(&IEMOCAP_TRAIN) {
            assert!((wi - 5498.0 / n as f64).abs() < 1e-9);
        }
        assert!((w[0] - 5.0440).abs() < 1e-4);
    }

    #[test]
    fn excluded_classes_get_zero() {
        let w = compute_class_weights(&[10, 0, 30, 5], 1.0, &[true, false, true, false]).unwrap();
        assert_eq!(w[1], 0.0);
        assert_eq!(w[3], 0.0);
        assert!((w[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_evaluated_class_is_a_config_error() {
        assert!(matches!(
            compute_class_weights(&[10, 0], 0.5, &[true, true]),
            Err(Error::Config(_))
        ));
        // 0^0 = 1, so alpha = 0 is still defined
        assert_eq!(
            compute_class_weights(&[10, 0], 0.0, &[true, true]).unwrap(),
            vec![2.0, 2.0]
        );
    }

    #[test]
    fn scheme_validation() {
        assert!(LabelScheme::from_json_str(r#"{"classes": ["a", "b"], "evaluated": []}"#).is_err());
        assert!(
            LabelScheme::from_json_str(r#"{"classes": ["a", "b"], "evaluated": ["c"]}"#).is_err()
        );
        assert!(
            LabelScheme::from_json_str(r#"{"classes": ["a", "a"], "evaluated": ["a"]}"#).is_err()
        );
        assert!(
            LabelScheme::from_json_str(r#"{"classes": ["a"], "evaluated": ["a"], "x": 1}"#)
                .is_err()
        );
        let s =
            LabelScheme::from_json_str(r#"{"classes": ["a", "b", "c"], "evaluated": ["c", "a"]}"#)
                .unwrap();
        assert_eq!(s.evaluated_mask(), &[true, false, true]);
    }

    proptest! {
        #[test]
        fn weight_times_power_is_constant_and_monotone(
            counts in proptest::collection::vec(1u64..5000, 2..8),
            alpha in 0.0f64..1.5,
        ) {
            let mask = vec![true; counts.len()];
            let w = compute_class_weights(&counts, alpha, &mask).unwrap();
            let total: f64 = counts.iter().map(|&n| (n as f64).powf(alpha)).sum();
            for (i, &n) in counts.iter().enumerate() {
                let prod = w[i] * (n as f64).powf(alpha);
                prop_assert!((prod - total).abs() <= 1e-9 * total);
                for (j, &m) in counts.iter().enumerate() {
                    if n > m {
                        prop_assert!(w[i] <= w[j]);
                    }
                }
            }
        }
    }
}
