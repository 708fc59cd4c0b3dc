//! Confusion matrices and weighted / unweighted accuracy.
//!
//! WA weights each evaluated class's accuracy by its share of the
//! evaluated samples; UWA is the plain mean of per-class accuracies, which
//! is what exposes a model that ignores rare classes.

use std::fmt::Write;

use crate::data::LabelScheme;
use crate::error::{Error, Result};

/// Rows are truth, columns are prediction. Samples whose true class is
/// not evaluated are never counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
    evaluated: Vec<bool>,
}

impl ConfusionMatrix {
    pub fn new(evaluated: &[bool]) -> Self {
        let n = evaluated.len();
        ConfusionMatrix {
            n,
            counts: vec![0; n * n],
            evaluated: evaluated.to_vec(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn update(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.n || pred >= self.n {
            return Err(Error::Contract(format!(
                "class pair ({truth}, {pred}) outside {} classes",
                self.n
            )));
        }
        if self.evaluated[truth] {
            self.counts[truth * self.n + pred] += 1;
        }
        Ok(())
    }

    /// Adds another matrix's counts; both must share the class mask.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.evaluated != other.evaluated {
            return Err(Error::Contract(
                "cannot merge confusion matrices over different class masks".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth * self.n..(truth + 1) * self.n]
            .iter()
            .sum()
    }

    /// Samples over evaluated rows.
    pub fn total(&self) -> u64 {
        (0..self.n)
            .filter(|&c| self.evaluated[c])
            .map(|c| self.row_total(c))
            .sum()
    }

    /// Per-class accuracy; `None` when the class has no samples.
    pub fn class_accuracy(&self, c: usize) -> Option<f64> {
        let n = self.row_total(c);
        (n > 0).then(|| self.count(c, c) as f64 / n as f64)
    }

    pub fn wa(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Metric("no samples of any evaluated class".into()));
        }
        let correct: u64 = (0..self.n)
            .filter(|&c| self.evaluated[c])
            .map(|c| self.count(c, c))
            .sum();
        // Σ p_c·a_c = Σ (n_c/N)(correct_c/n_c)
        Ok(correct as f64 / total as f64)
    }

    pub fn uwa(&self) -> Result<f64> {
        let mut sum = 0.0;
        let mut k = 0;
        for c in (0..self.n).filter(|&c| self.evaluated[c]) {
            let acc = self
                .class_accuracy(c)
                .ok_or_else(|| Error::Metric(format!("evaluated class {c} has no samples")))?;
            sum += acc;
            k += 1;
        }
        Ok(sum / k as f64)
    }

    /// Like [`ConfusionMatrix::uwa`] but names the missing class.
    pub fn uwa_named(&self, scheme: &LabelScheme) -> Result<f64> {
        self.uwa().map_err(|e| match e {
            Error::Metric(_) => {
                let c = (0..self.n)
                    .find(|&c| self.evaluated[c] && self.row_total(c) == 0)
                    .expect("a class is empty");
                Error::Metric(format!(
                    "evaluated class {:?} has no samples",
                    scheme.class_name(c)
                ))
            }
            other => other,
        })
    }

    /// `class,n,accuracy` per evaluated class, then `WA,…` and `UWA,…`.
    pub fn report_csv(&self, scheme: &LabelScheme) -> Result<String> {
        let (wa, uwa) = (self.wa()?, self.uwa_named(scheme)?);
        let mut out = String::from("class,n,accuracy\n");
        for c in (0..self.n).filter(|&c| self.evaluated[c]) {
            let acc = self.class_accuracy(c).unwrap_or(0.0);
            writeln!(
                out,
                "{},{},{}",
                scheme.class_name(c),
                self.row_total(c),
                acc
            )
            .unwrap();
        }
        writeln!(out, "WA,{wa}").unwrap();
        writeln!(out, "UWA,{uwa}").unwrap();
        Ok(out)
    }

    /// Human-readable table with percentages and the confusion matrix.
    pub fn report_text(&self, scheme: &LabelScheme) -> Result<String> {
        let (wa, uwa) = (self.wa()?, self.uwa_named(scheme)?);
        let eval: Vec<usize> = (0..self.n).filter(|&c| self.evaluated[c]).collect();
        let width = eval
            .iter()
            .map(|&c| scheme.class_name(c).len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        writeln!(out, "{:<width$} {:>7} {:>9}", "class", "n", "accuracy").unwrap();
        for &c in &eval {
            let acc = self.class_accuracy(c).unwrap_or(0.0) * 100.0;
            writeln!(
                out,
                "{:<width$} {:>7} {:>8.2}%",
                scheme.class_name(c),
                self.row_total(c),
                acc
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<width$} {:>7} {:>8.2}%",
            "WA",
            self.total(),
            wa * 100.0
        )
        .unwrap();
        writeln!(
            out,
            "{:<width$} {:>7} {:>8.2}%",
            "UWA",
            self.total(),
            uwa * 100.0
        )
        .unwrap();
        writeln!(out).unwrap();
        writeln!(out, "confusion (rows = truth, columns = prediction)").unwrap();
        write!(out, "{:<width$}", "").unwrap();
        for c in 0..self.n {
            write!(
                out,
                " {:>w$}",
                scheme.class_name(c),
                w = scheme.class_name(c).len().max(5)
            )
            .unwrap();
        }
        writeln!(out).unwrap();
        for &t in &eval {
            write!(out, "{:<width$}", scheme.class_name(t)).unwrap();
            for p in 0..self.n {
                write!(
                    out,
                    " {:>w$}",
                    self.count(t, p),
                    w = scheme.class_name(p).len().max(5)
                )
                .unwrap();
            }
            writeln!(out).unwrap();
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fill(cm: &mut ConfusionMatrix, truth: usize, pred: usize, n: u64) {
        for _ in 0..n {
            cm.update(truth, pred).unwrap();
        }
    }

    /// Totals (75, 25), correct (60, 10).
    fn hand_matrix() -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new(&[true, true]);
        fill(&mut cm, 0, 0, 60);
        fill(&mut cm, 0, 1, 15);
        fill(&mut cm, 1, 1, 10);
        fill(&mut cm, 1, 0, 15);
        cm
    }

    #[test]
    fn single_update_hits_diagonal() {
        let mut cm = ConfusionMatrix::new(&[true, true]);
        cm.update(0, 0).unwrap();
        assert_eq!(cm.count(0, 0), 1);
    }

    #[test]
    fn excluded_truth_is_skipped() {
        let mut cm = ConfusionMatrix::new(&[true, false]);
        let before = cm.clone();
        cm.update(1, 0).unwrap();
        assert_eq!(cm, before);
        assert!(cm.update(2, 0).is_err());
    }

    #[test]
    fn conservation() {
        let mut cm = ConfusionMatrix::new(&[true; 3]);
        for i in 0..17 {
            cm.update(i % 3, (i * 7) % 3).unwrap();
        }
        assert_eq!(cm.total(), 17);
    }

    #[test]
    fn hand_built_wa_uwa() {
        let cm = hand_matrix();
        assert!((cm.wa().unwrap() - 0.70).abs() < 1e-12);
        assert!((cm.uwa().unwrap() - 0.60).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_hopeless() {
        let mut cm = ConfusionMatrix::new(&[true; 2]);
        fill(&mut cm, 0, 0, 3);
        fill(&mut cm, 1, 1, 2);
        assert_eq!(cm.wa().unwrap(), 1.0);
        assert_eq!(cm.uwa().unwrap(), 1.0);
        let mut cm = ConfusionMatrix::new(&[true; 2]);
        fill(&mut cm, 0, 1, 3);
        fill(&mut cm, 1, 0, 2);
        assert_eq!(cm.wa().unwrap(), 0.0);
    }

    #[test]
    fn imbalance_sensitivity() {
        let mut cm = ConfusionMatrix::new(&[true; 2]);
        fill(&mut cm, 0, 0, 990);
        fill(&mut cm, 0, 1, 10);
        fill(&mut cm, 1, 0, 10);
        assert!((cm.uwa().unwrap() - 0.495).abs() < 1e-12);
        assert!((cm.wa().unwrap() - 990.0 / 1010.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_missing_class_errors() {
        let cm = ConfusionMatrix::new(&[true; 2]);
        assert!(matches!(cm.wa(), Err(Error::Metric(_))));
        let mut cm = ConfusionMatrix::new(&[true; 2]);
        cm.update(0, 0).unwrap();
        let scheme = LabelScheme::new(vec!["ang".into(), "sad".into()], &["ang", "sad"]).unwrap();
        let err = cm.uwa_named(&scheme).unwrap_err();
        assert!(err.to_string().contains("\"sad\""), "{err}");
    }

    #[test]
    fn csv_report_layout() {
        let scheme = LabelScheme::new(
            vec!["ang".into(), "hap".into(), "oth".into()],
            &["ang", "hap"],
        )
        .unwrap();
        let mut cm = ConfusionMatrix::new(scheme.evaluated_mask());
        fill(&mut cm, 0, 0, 3);
        fill(&mut cm, 0, 1, 1);
        fill(&mut cm, 1, 1, 4);
        fill(&mut cm, 2, 0, 9);
        let csv = cm.report_csv(&scheme).unwrap();
        assert_eq!(
            csv,
            "class,n,accuracy\nang,4,0.75\nhap,4,1\nWA,0.875\nUWA,0.875\n"
        );
        assert!(cm.report_text(&scheme).unwrap().contains("87.50%"));
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = hand_matrix();
        a.merge(&hand_matrix()).unwrap();
        assert_eq!(a.total(), 200);
        assert!((a.wa().unwrap() - 0.70).abs() < 1e-12);
        assert!(a.merge(&ConfusionMatrix::new(&[true, false])).is_err());
    }

    proptest! {
        #[test]
        fn balanced_counts_make_wa_equal_uwa(correct in proptest::collection::vec(0u64..=20, 2..6)) {
            let k = correct.len();
            let mut cm = ConfusionMatrix::new(&vec![true; k]);
            for (c, &ok) in correct.iter().enumerate() {
                fill(&mut cm, c, c, ok);
                fill(&mut cm, c, (c + 1) % k, 20 - ok);
            }
            prop_assert!((cm.wa().unwrap() - cm.uwa().unwrap()).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_label_permutation(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
            shift in 1usize..4,
        ) {
            let mut a = ConfusionMatrix::new(&[true; 4]);
            let mut b = ConfusionMatrix::new(&[true; 4]);
            for &(t, p) in &pairs {
                a.update(t, p).unwrap();
                b.update((t + shift) % 4, (p + shift) % 4).unwrap();
            }
            prop_assert_eq!(a.wa().unwrap(), b.wa().unwrap());
            if let (Ok(x), Ok(y)) = (a.uwa(), b.uwa()) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&x));
            }
            let wa = a.wa().unwrap();
            prop_assert!((0.0..=1.0).contains(&wa));
            prop_assert_eq!(wa == 1.0, pairs.iter().all(|(t, p)| t == p));
        }
    }
}
