use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c < 2 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix must be square with at least 2 classes, got {c} rows"
            )));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(classes);
        for (t, p) in pairs {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.classes();
        if truth >= c || predicted >= c {
            return Err(Error::InvalidArgument(format!(
                "class pair ({truth}, {predicted}) out of range for {c} classes"
            )));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    /// Samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// Element-wise sum.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::InvalidArgument("merging confusion matrices of different sizes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Per-class F1 `2TP / (2TP + FP + FN)`; `None` when the denominator is
    /// zero (the class neither occurs nor is predicted).
    pub fn f1(&self, c: usize) -> Option<f64> {
        let tp = self.true_positives(c);
        let fp = self.predicted(c) - tp;
        let fn_ = self.support(c) - tp;
        let denom = 2 * tp + fp + fn_;
        (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
    }

    /// Per-class recall; `None` when the class has no true samples.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let n = self.support(c);
        (n > 0).then(|| self.true_positives(c) as f64 / n as f64)
    }

    /// Classes whose F1 or recall is undefined and was scored as 0.
    pub fn degenerate_classes(&self) -> Vec<usize> {
        (0..self.classes())
            .filter(|&c| self.f1(c).is_none() || self.recall(c).is_none())
            .collect()
    }

    /// Unweighted F1: mean per-class F1, undefined classes counting 0.
    pub fn uf1(&self) -> f64 {
        let c = self.classes();
        (0..c).map(|k| self.f1(k).unwrap_or(0.0)).sum::<f64>() / c as f64
    }

    /// Unweighted average recall, classes without samples counting 0.
    pub fn uar(&self) -> f64 {
        let c = self.classes();
        (0..c).map(|k| self.recall(k).unwrap_or(0.0)).sum::<f64>() / c as f64
    }

    /// Trace over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.classes()).map(|c| self.true_positives(c)).sum::<u64>() as f64 / total as f64
    }

    pub fn accuracy_and_macro_f1(&self) -> (f64, f64) {
        (self.accuracy(), self.uf1())
    }

    /// CSV with a header row and a leading column of class names.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        if names.len() != self.classes() {
            return Err(Error::InvalidArgument(format!(
                "{} class names for {} classes",
                names.len(),
                self.classes()
            )));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Headline numbers for one confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub uf1: f64,
    pub uar: f64,
    /// Class names whose F1 or recall was undefined and scored as 0.
    pub degenerate_classes: Vec<String>,
}

impl MetricSummary {
    pub fn from_matrix(cm: &ConfusionMatrix, names: &[String]) -> Self {
        let (accuracy, macro_f1) = cm.accuracy_and_macro_f1();
        MetricSummary {
            confusion: cm.counts().to_vec(),
            accuracy,
            macro_f1,
            uf1: cm.uf1(),
            uar: cm.uar(),
            degenerate_classes: cm.degenerate_classes().into_iter().map(|c| names[c].clone()).collect(),
        }
    }
}
