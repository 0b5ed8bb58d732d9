//! Fused predictor vectors: topic proportions from both description channels
//! followed by the numeric campaign attributes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Campaign;
use crate::error::{Error, Result};
use crate::rng::fnv1a;

/// Numeric slots, in emission order.
pub const NUMERIC_SLOTS: [&str; 7] = [
    "goal_amount",
    "duration_days",
    "days_left",
    "top_donor_amount",
    "min_donor_amount",
    "n_supporters",
    "mean_donation",
];

/// Optional raw raised amount slot. It determines the label on its own, so it
/// is off unless explicitly requested.
pub const RAISED_SLOT: &str = "raised_amount";

const TOPIC_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericSchema {
    pub include_raised: bool,
}

impl NumericSchema {
    pub fn names(&self) -> Vec<&'static str> {
        let mut names = NUMERIC_SLOTS.to_vec();
        if self.include_raised {
            names.push(RAISED_SLOT);
        }
        names
    }

    pub fn len(&self) -> usize {
        NUMERIC_SLOTS.len() + usize::from(self.include_raised)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extract(&self, c: &Campaign) -> Vec<f64> {
        let mut v = numeric_features(c);
        if self.include_raised {
            v.push(c.raised_amount);
        }
        v
    }
}

/// goal, duration in days, days left, top donor, min donor, supporters, mean
/// donation (raised / supporters, 0 without supporters).
pub fn numeric_features(c: &Campaign) -> Vec<f64> {
    let mean_donation = if c.n_supporters == 0 {
        0.0
    } else {
        c.raised_amount / c.n_supporters as f64
    };
    vec![
        c.goal_amount,
        c.duration_days() as f64,
        f64::from(c.days_left),
        c.top_donor_amount,
        c.min_donor_amount,
        c.n_supporters as f64,
        mean_donation,
    ]
}

/// Slot schema: `campaign_topic_*`, `incentive_topic_*`, then numeric slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub k_campaign: usize,
    pub k_incentive: usize,
    pub numeric: Vec<String>,
}

impl Layout {
    pub fn new(k_campaign: usize, k_incentive: usize, numeric: &NumericSchema) -> Self {
        Layout {
            k_campaign,
            k_incentive,
            numeric: numeric.names().into_iter().map(str::to_owned).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.k_campaign + self.k_incentive + self.numeric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        names.extend((0..self.k_campaign).map(|k| format!("campaign_topic_{k}")));
        names.extend((0..self.k_incentive).map(|k| format!("incentive_topic_{k}")));
        names.extend(self.numeric.iter().cloned());
        names
    }

    /// Rebuilds a layout from its slot names.
    pub fn from_names(names: &[String]) -> Result<Self> {
        let count_prefix = |prefix: &str| names.iter().take_while(|n| n.starts_with(prefix)).count();
        let k_campaign = count_prefix("campaign_topic_");
        let k_incentive = names[k_campaign..]
            .iter()
            .take_while(|n| n.starts_with("incentive_topic_"))
            .count();
        let layout = Layout {
            k_campaign,
            k_incentive,
            numeric: names[k_campaign + k_incentive..].to_vec(),
        };
        if layout.names() != names {
            return Err(Error::Layout(format!("unrecognised slot names {names:?}")));
        }
        Ok(layout)
    }

    pub fn fingerprint(&self) -> String {
        fnv1a(self.names())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<Layout>,
}

/// Concatenates the two topic-proportion vectors and the numerics in layout
/// order. Values are copied unchanged.
pub fn fuse(
    theta_campaign: &[f64],
    theta_incentive: &[f64],
    numerics: &[f64],
    layout: &Arc<Layout>,
) -> Result<FeatureVector> {
    let groups = [
        ("campaign", theta_campaign, layout.k_campaign),
        ("incentive", theta_incentive, layout.k_incentive),
    ];
    for (name, theta, k) in groups {
        if theta.len() != k {
            return Err(Error::Layout(format!(
                "{name} topic proportions have length {}, layout expects {k}",
                theta.len()
            )));
        }
        if k > 0 {
            if theta.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Layout(format!("{name} topic proportion outside [0, 1]")));
            }
            let s: f64 = theta.iter().sum();
            if (s - 1.0).abs() > TOPIC_SUM_TOL {
                return Err(Error::Layout(format!("{name} topic proportions sum to {s}")));
            }
        }
    }
    if numerics.len() != layout.numeric.len() {
        return Err(Error::Layout(format!(
            "{} numeric values, layout expects {}",
            numerics.len(),
            layout.numeric.len()
        )));
    }
    let mut values = Vec::with_capacity(layout.len());
    values.extend_from_slice(theta_campaign);
    values.extend_from_slice(theta_incentive);
    values.extend_from_slice(numerics);
    Ok(FeatureVector {
        values,
        layout: Arc::clone(layout),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    layout: Arc<Layout>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(layout: Arc<Layout>, rows: Vec<Vec<f64>>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != ids.len() {
            return Err(Error::Argument(format!(
                "{} rows, {} labels, {} ids",
                rows.len(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != layout.len()) {
            return Err(Error::Layout(format!(
                "row of length {} in a {}-slot layout",
                r.len(),
                layout.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Argument(format!("label {l} is not binary")));
        }
        Ok(FeatureMatrix {
            layout,
            rows,
            labels,
            ids,
        })
    }

    pub fn from_vectors(vectors: Vec<FeatureVector>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        let layout = vectors
            .first()
            .map(|v| Arc::clone(&v.layout))
            .ok_or_else(|| Error::Argument("no feature vectors".into()))?;
        if vectors.iter().any(|v| *v.layout != *layout) {
            return Err(Error::Layout("feature vectors use different layouts".into()));
        }
        Self::new(layout, vectors.into_iter().map(|v| v.values).collect(), labels, ids)
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector {
            values: self.rows[i].clone(),
            layout: Arc::clone(&self.layout),
        }
    }

    /// Delimited text: header of slot names plus `label`, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("id,");
        out.push_str(&self.layout.names().join(","));
        out.push_str(",label\n");
        for ((id, row), label) in self.ids.iter().zip(&self.rows).zip(&self.labels) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{label}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Validation("empty feature file".into()))?
            .split(',')
            .map(str::to_owned)
            .collect();
        if header.len() < 2 || header[0] != "id" || header[header.len() - 1] != "label" {
            return Err(Error::Validation("feature header must be `id,<slots>,label`".into()));
        }
        let layout = Arc::new(Layout::from_names(&header[1..header.len() - 1])?);
        let (mut rows, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(Error::Validation(format!("feature row {} has {} cells", i + 1, cells.len())));
            }
            let bad = |c: &str| Error::Validation(format!("feature row {}: bad number `{c}`", i + 1));
            ids.push(cells[0].to_owned());
            rows.push(
                cells[1..cells.len() - 1]
                    .iter()
                    .map(|c| c.parse::<f64>().map_err(|_| bad(c)))
                    .collect::<Result<Vec<_>>>()?,
            );
            let last = cells[cells.len() - 1];
            labels.push(last.parse::<u8>().map_err(|_| bad(last))?);
        }
        Self::new(layout, rows, labels, ids)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Applies `f(slot, value)` to every cell.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, &x)| f(j, x)).collect())
            .collect();
        FeatureMatrix {
            layout: Arc::clone(&self.layout),
            rows,
            labels: self.labels.clone(),
            ids: self.ids.clone(),
        }
    }
}

/// Per-slot mean and population standard deviation from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub layout_fingerprint: String,
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// Slots whose deviation is zero; they standardize to 0.
    pub constant: Vec<bool>,
}

pub fn fit_standardizer(train: &FeatureMatrix) -> Result<Standardizer> {
    let n = train.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "standardizer needs at least 2 training rows, got {n}"
        )));
    }
    let p = train.layout.len();
    let mut mean = vec![0.0; p];
    for row in &train.rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; p];
    for row in &train.rows {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std_dev: Vec<f64> = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    let constant = std_dev.iter().map(|&s| s == 0.0).collect();
    Ok(Standardizer {
        layout_fingerprint: train.layout.fingerprint(),
        mean,
        std_dev,
        constant,
    })
}

impl Standardizer {
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.layout.fingerprint() != self.layout_fingerprint {
            return Err(Error::Layout("standardizer was fitted on a different layout".into()));
        }
        Ok(m.map_values(|j, x| {
            if self.constant[j] {
                0.0
            } else {
                (x - self.mean[j]) / self.std_dev[j]
            }
        }))
    }
}

pub fn apply_standardizer(m: &FeatureMatrix, params: &Standardizer) -> Result<FeatureMatrix> {
    params.apply(m)
}
