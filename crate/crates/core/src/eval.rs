//! Confusion counts, accuracy / precision / recall / F1, the majority-class
//! baseline, and the evaluation report.
//!
//! Metrics with a zero denominator are `None` ("undefined"), never 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::forest::RandomForest;

/// Positive class is 1 (success).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Argument(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Argument("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => return Err(Error::Argument(format!("non-binary label pair ({t}, {p})"))),
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy (TP+TN)/total, precision TP/(TP+FP), recall TP/(TP+FN) and F1 as
/// the harmonic mean 2PR/(P+R).
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Argument("empty confusion matrix".into()));
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

/// Harmonic mean of precision and recall; undefined when either is undefined
/// or both are zero.
pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * (p * r) / (p + r)),
        _ => None,
    }
}

/// Accuracy of always predicting the training majority (ties → 1).
pub fn majority_baseline(y_train: &[u8], y_test: &[u8]) -> Result<f64> {
    if y_train.is_empty() || y_test.is_empty() {
        return Err(Error::Argument("baseline needs non-empty train and test labels".into()));
    }
    let ones = y_train.iter().filter(|&&l| l == 1).count();
    let majority = u8::from(2 * ones >= y_train.len());
    Ok(y_test.iter().filter(|&&l| l == majority).count() as f64 / y_test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub channel: String,
    pub topic: usize,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_test: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub baseline_accuracy: f64,
    pub topics: Vec<TopicSummary>,
    pub config: serde_json::Value,
}

/// Scores `forest` on `test` and assembles the report.
pub fn evaluate_run(
    forest: &RandomForest,
    test: &FeatureMatrix,
    y_train: &[u8],
    topics: Vec<TopicSummary>,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    let pred = forest.predict_matrix(test)?;
    let cm = confusion(test.labels(), &pred)?;
    Ok(MetricsReport {
        n_test: test.len(),
        metrics: metrics(&cm)?,
        confusion: cm,
        baseline_accuracy: majority_baseline(y_train, test.labels())?,
        topics,
        config,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table with fractions and percentages.
    pub fn render_text(&self) -> String {
        let pct = |v: Option<f64>| match v {
            Some(x) => format!("{:>8.4}  {:>7.2}%", x, 100.0 * x),
            None => format!("{:>8}  {:>8}", "undef", "undef"),
        };
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "Prediction performance ({} test campaigns)", self.n_test);
        let _ = writeln!(s, "{:<20}{:>8}  {:>8}", "measure", "fraction", "percent");
        let _ = writeln!(s, "{:<20}{}", "accuracy", pct(Some(m.accuracy)));
        let _ = writeln!(s, "{:<20}{}", "precision", pct(m.precision));
        let _ = writeln!(s, "{:<20}{}", "recall", pct(m.recall));
        let _ = writeln!(s, "{:<20}{}", "f1", pct(m.f1));
        let _ = writeln!(s, "{:<20}{}", "majority baseline", pct(Some(self.baseline_accuracy)));
        let c = &self.confusion;
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion: tp={} tn={} fp={} fn={}", c.tp, c.tn, c.fp, c.fn_);
        if !self.topics.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<12}{:<7}words", "channel", "topic");
            for t in &self.topics {
                let _ = writeln!(s, "{:<12}{:<7}{}", t.channel, t.topic + 1, t.words.join(", "));
            }
        }
        s
    }
}
