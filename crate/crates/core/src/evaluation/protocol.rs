use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, MetricSummary};
use crate::dataset::{Dataset, SampleRecord};
use crate::error::{Error, Result};

/// Composite-evaluation classes.
pub const CDE_CLASSES: [&str; 3] = ["negative", "positive", "surprise"];

/// Every label each corpus uses, lower-cased.
fn vocabulary(dataset: Dataset) -> Option<&'static [&'static str]> {
    match dataset {
        Dataset::SmicHs => Some(&["negative", "positive", "surprise"]),
        Dataset::Casme2 => Some(&["happiness", "disgust", "surprise", "repression", "others", "fear", "sadness"]),
        Dataset::Samm => Some(&[
            "anger",
            "happiness",
            "other",
            "surprise",
            "contempt",
            "fear",
            "sadness",
            "disgust",
        ]),
        Dataset::Synth => None,
    }
}

/// Sole-database class set. SAMM keeps its five most frequent classes;
/// CASME II keeps the five classes with enough samples.
pub fn sde_classes(dataset: Dataset) -> Option<&'static [&'static str]> {
    match dataset {
        Dataset::SmicHs => Some(&["negative", "positive", "surprise"]),
        Dataset::Casme2 => Some(&["happiness", "disgust", "surprise", "repression", "others"]),
        Dataset::Samm => Some(&["anger", "happiness", "other", "surprise", "contempt"]),
        Dataset::Synth => None,
    }
}

fn known_label(dataset: Dataset, label: &str) -> Result<String> {
    let l = label.trim().to_lowercase();
    match vocabulary(dataset) {
        Some(v) if !v.contains(&l.as_str()) => Err(Error::UnknownLabel {
            dataset: dataset.to_string(),
            label: label.to_string(),
        }),
        _ => Ok(l),
    }
}

/// Composite label: `Some(class)` or `None` when the sample is excluded.
///
/// | source label | class |
/// |---|---|
/// | Happiness, SMIC positive | positive |
/// | Surprise | surprise |
/// | Disgust, Repression, Anger, Contempt, Fear, Sadness, SMIC negative | negative |
/// | Others / Other | excluded |
pub fn cde_label_map(dataset: Dataset, label: &str) -> Result<Option<&'static str>> {
    let l = known_label(dataset, label)?;
    let mapped = match l.as_str() {
        "happiness" | "positive" => Some("positive"),
        "surprise" => Some("surprise"),
        "negative" | "disgust" | "repression" | "anger" | "contempt" | "fear" | "sadness" => Some("negative"),
        "others" | "other" => None,
        _ => {
            return Err(Error::UnknownLabel {
                dataset: dataset.to_string(),
                label: label.to_string(),
            })
        }
    };
    Ok(mapped)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Sole-database evaluation on one corpus.
    Sde(Dataset),
    /// Composite-database evaluation over all non-synthetic corpora.
    Cde,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolKind::Sde(d) => write!(f, "SDE:{d}"),
            ProtocolKind::Cde => f.write_str("CDE"),
        }
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("cde") {
            return Ok(ProtocolKind::Cde);
        }
        match s.split_once(':') {
            Some((kind, ds)) if kind.eq_ignore_ascii_case("sde") => Ok(ProtocolKind::Sde(ds.parse()?)),
            _ => Err(Error::Config(format!(
                "unknown protocol {s:?} (expected cde or sde:<dataset>)"
            ))),
        }
    }
}

/// A sample retained by a protocol, with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    /// Index into the source record list.
    pub record: usize,
    pub sample_id: String,
    pub subject: String,
    pub dataset: Dataset,
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub label_set: Vec<String>,
}

impl ProtocolSpec {
    /// Builds the protocol's label set. Synthetic corpora use the sorted
    /// distinct labels present in `records`.
    pub fn new(kind: ProtocolKind, records: &[SampleRecord]) -> Result<Self> {
        let label_set: Vec<String> = match kind {
            ProtocolKind::Cde => CDE_CLASSES.iter().map(|s| s.to_string()).collect(),
            ProtocolKind::Sde(d) => match sde_classes(d) {
                Some(c) => c.iter().map(|s| s.to_string()).collect(),
                None => {
                    let set: BTreeSet<String> = records
                        .iter()
                        .filter(|r| r.dataset == d)
                        .map(|r| r.label.trim().to_lowercase())
                        .collect();
                    set.into_iter().collect()
                }
            },
        };
        if label_set.len() < 2 {
            return Err(Error::Config(format!("protocol {kind} needs at least 2 classes, found {label_set:?}")));
        }
        Ok(ProtocolSpec { kind, label_set })
    }

    /// Class of one record: `Ok(None)` when the protocol excludes it.
    pub fn class_of(&self, r: &SampleRecord) -> Result<Option<usize>> {
        let name = match self.kind {
            ProtocolKind::Cde => {
                if r.dataset == Dataset::Synth {
                    let l = r.label.trim().to_lowercase();
                    if !CDE_CLASSES.contains(&l.as_str()) {
                        return Err(Error::UnknownLabel {
                            dataset: r.dataset.to_string(),
                            label: r.label.clone(),
                        });
                    }
                    Some(l)
                } else {
                    cde_label_map(r.dataset, &r.label)?.map(String::from)
                }
            }
            ProtocolKind::Sde(d) => {
                if r.dataset != d {
                    return Ok(None);
                }
                Some(known_label(d, &r.label)?)
            }
        };
        Ok(name.and_then(|n| self.label_set.iter().position(|c| *c == n)))
    }

    /// Retained samples in record order.
    pub fn select(&self, records: &[SampleRecord]) -> Result<Vec<EvalItem>> {
        let mut out = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(class) = self.class_of(r)? {
                out.push(EvalItem {
                    record: i,
                    sample_id: r.sample_id.clone(),
                    subject: r.subject_id.clone(),
                    dataset: r.dataset,
                    class,
                });
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("protocol {} retains no samples", self.kind)));
        }
        Ok(out)
    }
}

/// Leave-one-subject-out fold; indices refer to the item list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct subject, ordered by subject id.
pub fn loso_splits(subjects: &[&str]) -> Result<Vec<Fold>> {
    if subjects.is_empty() {
        return Err(Error::InvalidArgument("no samples to split".into()));
    }
    let distinct: BTreeSet<&str> = subjects.iter().copied().collect();
    if distinct.len() == 1 {
        let subject = distinct.into_iter().next().unwrap().to_string();
        return Err(Error::UntrainableFold {
            subject,
            detail: "it is the only subject, so its fold has no training samples".into(),
        });
    }
    Ok(distinct
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..subjects.len()).partition(|&i| subjects[i] == s);
            Fold {
                subject: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub truth: String,
    pub predicted: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub subject: String,
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAverage {
    pub accuracy: f64,
    pub uf1: f64,
    pub uar: f64,
}

/// Evaluation report. `pooled` (fold matrices summed, then scored) is
/// the headline; `fold_average` averages per-fold scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: String,
    pub label_set: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub pooled: MetricSummary,
    pub per_dataset: BTreeMap<String, MetricSummary>,
    pub fold_average: FoldAverage,
}

impl Report {
    pub fn pooled_matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(self.pooled.confusion.clone()).expect("pooled matrix is square")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs leave-one-subject-out evaluation. `fit_predict` receives a fold
/// and returns one class per test item, in order. Folds run in parallel;
/// the report is assembled in subject order.
pub fn run_loso<F>(protocol: &str, label_set: &[String], items: &[EvalItem], fit_predict: F) -> Result<Report>
where
    F: Fn(&Fold) -> Result<Vec<usize>> + Sync,
{
    let subjects: Vec<&str> = items.iter().map(|i| i.subject.as_str()).collect();
    let folds = loso_splits(&subjects)?;
    let predictions: Vec<Vec<usize>> = folds
        .par_iter()
        .map(|fold| {
            let preds = fit_predict(fold)?;
            if preds.len() != fold.test.len() {
                return Err(Error::InvalidArgument(format!(
                    "fold {}: {} predictions for {} test samples",
                    fold.subject,
                    preds.len(),
                    fold.test.len()
                )));
            }
            Ok(preds)
        })
        .collect::<Result<_>>()?;
    let outcomes = folds
        .iter()
        .zip(&predictions)
        .map(|(f, p)| (f.subject.clone(), f.test.iter().copied().zip(p.iter().copied()).collect()))
        .collect();
    build_report(protocol, label_set, items, outcomes)
}

/// Assembles a report from per-fold `(item index, predicted class)` lists.
pub fn build_report(
    protocol: &str,
    label_set: &[String],
    items: &[EvalItem],
    folds: Vec<(String, Vec<(usize, usize)>)>,
) -> Result<Report> {
    let c = label_set.len();
    let mut pooled = ConfusionMatrix::new(c);
    let mut per_dataset: BTreeMap<Dataset, ConfusionMatrix> = BTreeMap::new();
    let mut fold_reports = Vec::with_capacity(folds.len());
    let (mut acc_sum, mut uf1_sum, mut uar_sum) = (0.0, 0.0, 0.0);
    for (subject, outcomes) in &folds {
        let mut cm = ConfusionMatrix::new(c);
        let mut preds = Vec::with_capacity(outcomes.len());
        for &(i, p) in outcomes {
            let item = &items[i];
            cm.record(item.class, p)?;
            per_dataset
                .entry(item.dataset)
                .or_insert_with(|| ConfusionMatrix::new(c))
                .record(item.class, p)?;
            preds.push(Prediction {
                sample_id: item.sample_id.clone(),
                truth: label_set[item.class].clone(),
                predicted: label_set[p].clone(),
            });
        }
        pooled.merge(&cm)?;
        acc_sum += cm.accuracy();
        uf1_sum += cm.uf1();
        uar_sum += cm.uar();
        fold_reports.push(FoldReport {
            subject: subject.clone(),
            confusion: cm.counts().to_vec(),
            accuracy: cm.accuracy(),
            predictions: preds,
        });
    }
    let n = folds.len().max(1) as f64;
    Ok(Report {
        protocol: protocol.to_string(),
        label_set: label_set.to_vec(),
        folds: fold_reports,
        pooled: MetricSummary::from_matrix(&pooled, label_set),
        per_dataset: per_dataset
            .into_iter()
            .map(|(d, cm)| (d.to_string(), MetricSummary::from_matrix(&cm, label_set)))
            .collect(),
        fold_average: FoldAverage {
            accuracy: acc_sum / n,
            uf1: uf1_sum / n,
            uar: uar_sum / n,
        },
    })
}
