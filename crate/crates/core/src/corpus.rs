//! Campaign records: parsing, validation, labelling and the train/test split.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Keys every JSONL record must carry, in schema order.
pub const REQUIRED_FIELDS: [&str; 11] = [
    "id",
    "goal_amount",
    "raised_amount",
    "start_date",
    "end_date",
    "days_left",
    "top_donor_amount",
    "min_donor_amount",
    "n_supporters",
    "campaign_text",
    "incentive_text",
];

/// One crowdfunding campaign. Amounts are unitless decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: String,
    pub goal_amount: f64,
    pub raised_amount: f64,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub days_left: u32,
    pub top_donor_amount: f64,
    pub min_donor_amount: f64,
    pub n_supporters: u64,
    pub campaign_text: String,
    pub incentive_text: String,
}

impl Campaign {
    /// Checks the record invariants, naming the first violated rule.
    pub fn validate(&self) -> Result<()> {
        let amounts = [
            ("goal_amount", self.goal_amount),
            ("raised_amount", self.raised_amount),
            ("top_donor_amount", self.top_donor_amount),
            ("min_donor_amount", self.min_donor_amount),
        ];
        for (name, v) in amounts {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite")));
            }
        }
        if self.goal_amount <= 0.0 {
            return Err(Error::Validation("goal_amount > 0".into()));
        }
        for (name, v) in &amounts[1..] {
            if *v < 0.0 {
                return Err(Error::Validation(format!("{name} ≥ 0")));
            }
        }
        if self.end_date < self.start_date {
            return Err(Error::Validation("end_date ≥ start_date".into()));
        }
        if self.n_supporters > 0 {
            if self.min_donor_amount > self.top_donor_amount {
                return Err(Error::Validation("min_donor_amount ≤ top_donor_amount".into()));
            }
            if self.top_donor_amount > self.raised_amount {
                return Err(Error::Validation("top_donor_amount ≤ raised_amount".into()));
            }
        } else if self.raised_amount != 0.0 {
            return Err(Error::Validation(
                "raised_amount = 0 when n_supporters = 0".into(),
            ));
        }
        Ok(())
    }

    pub fn duration_days(&self) -> i64 {
        (self.end_date - self.start_date).num_days()
    }
}

/// Success label: 1 when the goal is attained (raised ≥ goal), else 0.
pub fn label_campaign(c: &Campaign) -> u8 {
    u8::from(c.raised_amount >= c.goal_amount)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCampaign {
    pub campaign: Campaign,
    pub label: u8,
}

impl LabeledCampaign {
    pub fn new(campaign: Campaign) -> Self {
        let label = label_campaign(&campaign);
        LabeledCampaign { campaign, label }
    }
}

/// An ordered set of labelled campaigns with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSet {
    records: Vec<LabeledCampaign>,
    source: String,
}

impl CampaignSet {
    pub fn new(records: Vec<LabeledCampaign>, source: impl Into<String>) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(prev) = seen.insert(r.campaign.id.as_str(), i) {
                return Err(Error::Validation(format!(
                    "duplicate id `{}` at positions {} and {}",
                    r.campaign.id,
                    prev + 1,
                    i + 1
                )));
            }
        }
        Ok(CampaignSet {
            records,
            source: source.into(),
        })
    }

    pub fn from_campaigns(campaigns: Vec<Campaign>, source: impl Into<String>) -> Result<Self> {
        for c in &campaigns {
            c.validate()?;
        }
        Self::new(campaigns.into_iter().map(LabeledCampaign::new).collect(), source)
    }

    pub fn records(&self) -> &[LabeledCampaign] {
        &self.records
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.campaign.id.as_str()).collect()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// One JSON object per line, schema field order, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            // Campaign serialization cannot fail: plain fields, finite floats.
            out.push_str(&serde_json::to_string(&r.campaign).expect("campaign serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Selects records by position, keeping the given order.
    pub fn subset(&self, positions: &[usize], source: impl Into<String>) -> CampaignSet {
        CampaignSet {
            records: positions.iter().map(|&i| self.records[i].clone()).collect(),
            source: source.into(),
        }
    }

    /// Selects records by id in the given order.
    pub fn select_ids(&self, ids: &[String], source: impl Into<String>) -> Result<CampaignSet> {
        let index: HashMap<&str, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.campaign.id.as_str(), i))
            .collect();
        let positions = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("unknown campaign id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.subset(&positions, source))
    }
}

/// Parses one JSONL record. `line` numbers in errors are 1-based; pass 0 when
/// the record has no file context.
pub fn parse_campaign_record(text: &str) -> Result<Campaign> {
    parse_record_at(text, 0)
}

fn parse_record_at(text: &str, line: usize) -> Result<Campaign> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Parse {
        line,
        message: "expected a JSON object".into(),
    })?;
    for field in REQUIRED_FIELDS {
        if !obj.contains_key(field) {
            return Err(Error::Schema {
                line,
                field: field.into(),
            });
        }
    }

    let str_field = |f: &str| -> Result<String> {
        obj[f].as_str().map(str::to_owned).ok_or_else(|| Error::Schema {
            line,
            field: f.into(),
        })
    };
    let num_field = |f: &str| -> Result<f64> {
        obj[f].as_f64().ok_or_else(|| Error::Schema {
            line,
            field: f.into(),
        })
    };
    let int_field = |f: &str| -> Result<i64> {
        let v = &obj[f];
        v.as_i64()
            .or_else(|| v.as_u64().map(|u| u.min(i64::MAX as u64) as i64))
            .ok_or_else(|| Error::Schema {
                line,
                field: f.into(),
            })
    };
    let date_field = |f: &str| -> Result<NaiveDate> {
        let s = str_field(f)?;
        NaiveDate::parse_from_str(&s, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("{f}: `{s}` is not an ISO-8601 date ({e})"),
        })
    };

    let days_left = int_field("days_left")?;
    if days_left < 0 {
        return Err(Error::Validation("days_left ≥ 0".into()));
    }
    let n_supporters = int_field("n_supporters")?;
    if n_supporters < 0 {
        return Err(Error::Validation("n_supporters ≥ 0".into()));
    }

    let campaign = Campaign {
        id: str_field("id")?,
        goal_amount: num_field("goal_amount")?,
        raised_amount: num_field("raised_amount")?,
        start_date: date_field("start_date")?,
        end_date: date_field("end_date")?,
        days_left: u32::try_from(days_left)
            .map_err(|_| Error::Validation("days_left out of range".into()))?,
        top_donor_amount: num_field("top_donor_amount")?,
        min_donor_amount: num_field("min_donor_amount")?,
        n_supporters: n_supporters as u64,
        campaign_text: str_field("campaign_text")?,
        incentive_text: str_field("incentive_text")?,
    };
    campaign.validate().map_err(|e| match e {
        Error::Validation(rule) if line > 0 => Error::Validation(format!("line {line}: {rule}")),
        other => other,
    })?;
    Ok(campaign)
}

/// Parses JSONL text. Blank lines are skipped; the first bad line aborts.
pub fn parse_corpus(text: &str, source: impl Into<String>) -> Result<CampaignSet> {
    let mut records = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let campaign = parse_record_at(raw, line)?;
        if let Some(prev) = first_seen.get(&campaign.id) {
            return Err(Error::Validation(format!(
                "duplicate id `{}` on lines {prev} and {line}",
                campaign.id
            )));
        }
        first_seen.insert(campaign.id.clone(), line);
        records.push(LabeledCampaign::new(campaign));
    }
    CampaignSet::new(records, source)
}

pub fn load_corpus(path: &Path) -> Result<CampaignSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path.display().to_string())
}

/// Stratified shuffle split. Per-class train quotas are allocated by largest
/// remainder so they sum to `train_count`; both halves keep the original
/// record order.
pub fn split_train_test(
    set: &CampaignSet,
    train_count: usize,
    seed: u64,
) -> Result<(CampaignSet, CampaignSet)> {
    let n = set.len();
    if train_count == 0 || train_count >= n {
        return Err(Error::Argument(format!(
            "train_count must satisfy 0 < train_count < {n}, got {train_count}"
        )));
    }

    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in set.records().iter().enumerate() {
        by_class[usize::from(r.label)].push(i);
    }

    let quotas = stratified_quotas([by_class[0].len(), by_class[1].len()], train_count);

    let mut rng = rng_from(seed);
    let mut train_pos = Vec::with_capacity(train_count);
    let mut test_pos = Vec::with_capacity(n - train_count);
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        train_pos.extend_from_slice(&members[..quotas[class]]);
        test_pos.extend_from_slice(&members[quotas[class]..]);
    }
    train_pos.sort_unstable();
    test_pos.sort_unstable();

    Ok((
        set.subset(&train_pos, format!("{} [train]", set.source())),
        set.subset(&test_pos, format!("{} [test]", set.source())),
    ))
}

fn stratified_quotas(class_sizes: [usize; 2], train_count: usize) -> [usize; 2] {
    let n: usize = class_sizes.iter().sum();
    let exact: Vec<f64> = class_sizes
        .iter()
        .map(|&c| train_count as f64 * c as f64 / n as f64)
        .collect();
    let mut quotas = [exact[0].floor() as usize, exact[1].floor() as usize];
    let mut remaining = train_count - quotas[0] - quotas[1];
    // largest fractional part first; ties go to the success class
    let mut order = [1usize, 0];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal)
    });
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining > 0 && quotas[c] < class_sizes[c] {
                quotas[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quotas
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str, goal: f64, raised: f64) -> String {
        format!(
            r#"{{"id":"{id}","goal_amount":{goal},"raised_amount":{raised},"start_date":"2021-03-01","end_date":"2021-03-31","days_left":3,"top_donor_amount":{top},"min_donor_amount":{min},"n_supporters":{n},"campaign_text":"child cancer","incentive_text":"tax benefit"}}"#,
            top = raised.min(500.0),
            min = raised.min(10.0),
            n = if raised > 0.0 { 12 } else { 0 },
        )
    }

    #[test]
    fn boundary_equality_parses_and_counts_as_success() {
        let c = parse_campaign_record(&record("c1", 4000.0, 4000.0)).unwrap();
        assert_eq!(c.raised_amount, c.goal_amount);
        assert_eq!(label_campaign(&c), 1);
    }

    #[test]
    fn end_before_start_is_rejected() {
        let line = record("c1", 4000.0, 100.0).replace("2021-03-31", "2021-02-01");
        let err = parse_campaign_record(&line).unwrap_err();
        assert!(err.to_string().contains("end_date ≥ start_date"), "{err}");
    }

    #[test]
    fn urgent_goal_range_accepted() {
        for goal in [4000.0, 12_500.0, 20_000.0] {
            assert!(parse_campaign_record(&record("x", goal, 50.0)).is_ok());
        }
    }

    #[test]
    fn labels_follow_goal_attainment() {
        let mk = |raised| parse_campaign_record(&record("a", 4000.0, raised)).unwrap();
        assert_eq!(label_campaign(&mk(5000.0)), 1);
        assert_eq!(label_campaign(&mk(3999.0)), 0);
        assert_eq!(label_campaign(&mk(4000.0)), 1);
    }

    #[test]
    fn missing_field_is_named() {
        let line = record("c1", 4000.0, 10.0).replace(r#""days_left":3,"#, "");
        match parse_campaign_record(&line).unwrap_err() {
            Error::Schema { field, .. } => assert_eq!(field, "days_left"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = parse_corpus("{\"id\": 1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn supporter_invariants() {
        let zero_supporters_with_money = record("z", 100.0, 0.0).replace(
            r#""raised_amount":0"#,
            r#""raised_amount":5"#,
        );
        assert!(parse_campaign_record(&zero_supporters_with_money).is_err());

        let top_above_raised = record("t", 100.0, 50.0).replace(
            r#""top_donor_amount":50"#,
            r#""top_donor_amount":60"#,
        );
        let err = parse_campaign_record(&top_above_raised).unwrap_err();
        assert!(err.to_string().contains("top_donor_amount ≤ raised_amount"));
    }

    #[test]
    fn negative_goal_rejected() {
        let err = parse_campaign_record(&record("g", 0.0, 0.0)).unwrap_err();
        assert!(err.to_string().contains("goal_amount > 0"));
    }

    #[test]
    fn empty_text_is_empty_set() {
        let set = parse_corpus("", "mem").unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn duplicate_ids_cite_both_lines() {
        let lines: Vec<String> = (1..=8)
            .map(|i| {
                let id = if i == 7 { "c3".to_string() } else { format!("c{i}") };
                record(&id, 100.0, 10.0)
            })
            .collect();
        let err = parse_corpus(&lines.join("\n"), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lines 3 and 7"), "{msg}");
    }

    #[test]
    fn quotas_sum_to_train_count() {
        assert_eq!(stratified_quotas([200, 210], 250), [122, 128]);
        assert_eq!(stratified_quotas([5, 5], 6), [3, 3]);
        assert_eq!(stratified_quotas([1, 9], 9), [1, 8]);
    }

    #[test]
    fn split_rejects_out_of_range_counts() {
        let text: Vec<String> = (0..4).map(|i| record(&format!("r{i}"), 100.0, 10.0)).collect();
        let set = parse_corpus(&text.join("\n"), "mem").unwrap();
        assert!(split_train_test(&set, 0, 1).is_err());
        assert!(split_train_test(&set, 4, 1).is_err());
        assert!(split_train_test(&set, 3, 1).is_ok());
    }
}
