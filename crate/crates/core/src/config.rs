//! Run configuration and its key-value file format.
//!
//! ```text
//! # comments start with '#'
//! input = data/campaigns.jsonl
//! k-campaign = 2
//! campaign-seeds = child,cancer | elderly,nursing
//! trees = 200
//! ```
//!
//! Keys are the long command-line flag names without the leading dashes.
//! Command-line flags override values from the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{FeaturesPerSplit, ForestParams};
use crate::textprep::{load_word_list, Channel, LexiconConfig, NounLexicon};
use crate::topicmodel::{AlphaRule, FitSettings, Schedule, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NounMode {
    Lexicon,
    Passthrough,
}

impl FromStr for NounMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexicon" => Ok(NounMode::Lexicon),
            "passthrough" | "pass-through" => Ok(NounMode::Passthrough),
            other => Err(Error::Argument(format!(
                "noun mode must be `lexicon` or `passthrough`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub k: usize,
    pub seeds: SeedSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Not part of the echoed configuration.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub seed: u64,
    /// 0 uses every available core. Not echoed.
    #[serde(skip)]
    pub threads: usize,

    pub noun_mode: NounMode,
    pub stopwords: Option<PathBuf>,
    pub nouns: Option<PathBuf>,
    pub min_df: usize,
    pub max_df_ratio: f64,

    pub train_count: Option<usize>,
    pub train_fraction: f64,

    pub campaign: ChannelConfig,
    pub incentive: ChannelConfig,
    pub k_candidates: Option<Vec<usize>>,
    pub heldout_fraction: f64,
    /// None means alpha = 50 / K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub seed_boost: f64,
    pub iters: usize,
    pub burnin: usize,
    pub sample_lag: usize,
    pub fold_in_iters: usize,
    pub top_n: usize,

    pub include_raised: bool,
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let forest = ForestParams::default();
        let fit = FitSettings::default();
        RunConfig {
            input: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            noun_mode: NounMode::Lexicon,
            stopwords: None,
            nouns: None,
            min_df: 2,
            max_df_ratio: 0.95,
            train_count: None,
            train_fraction: 250.0 / 410.0,
            campaign: ChannelConfig {
                k: 2,
                seeds: SeedSpec::default_for(Channel::Campaign),
            },
            incentive: ChannelConfig {
                k: 2,
                seeds: SeedSpec::default_for(Channel::Incentive),
            },
            k_candidates: None,
            heldout_fraction: 0.2,
            alpha: None,
            beta: fit.beta,
            seed_boost: fit.seed_boost,
            iters: fit.schedule.iters,
            burnin: fit.schedule.burnin,
            sample_lag: fit.schedule.sample_lag,
            fold_in_iters: fit.fold_in_iters,
            top_n: 10,
            include_raised: false,
            trees: forest.n_trees,
            max_depth: forest.max_depth,
            min_samples_leaf: forest.min_samples_leaf,
            min_samples_split: forest.min_samples_split,
            features_per_split: forest.features_per_split,
            bootstrap: forest.bootstrap,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Argument(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Argument(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

/// `2,3,4` → [2, 3, 4]
pub fn parse_k_list(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse::<usize>("k-candidates", s.trim()))
        .collect()
}

/// `a,b | c,d` → [[a, b], [c, d]]; an empty string gives no seeds.
pub fn parse_seed_lists(value: &str) -> SeedSpec {
    if value.trim().is_empty() {
        return SeedSpec::none();
    }
    SeedSpec::new(
        value
            .split('|')
            .map(|topic| {
                topic
                    .split(',')
                    .map(|t| t.trim().to_lowercase())
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .collect(),
    )
}

pub fn parse_features_per_split(value: &str) -> Result<FeaturesPerSplit> {
    match value {
        "sqrt" => Ok(FeaturesPerSplit::Sqrt),
        "all" => Ok(FeaturesPerSplit::All),
        n => Ok(FeaturesPerSplit::Count(parse("features-per-split", n)?)),
    }
}

impl RunConfig {
    /// Sets one option from its key-value form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input" => self.input = Some(PathBuf::from(v)),
            "out-dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "noun-mode" => self.noun_mode = v.parse()?,
            "stopwords" => self.stopwords = Some(PathBuf::from(v)),
            "nouns" => self.nouns = Some(PathBuf::from(v)),
            "min-df" => self.min_df = parse(key, v)?,
            "max-df-ratio" => self.max_df_ratio = parse(key, v)?,
            "train-count" => self.train_count = Some(parse(key, v)?),
            "train-fraction" => self.train_fraction = parse(key, v)?,
            "k-campaign" => self.campaign.k = parse(key, v)?,
            "k-incentive" => self.incentive.k = parse(key, v)?,
            "campaign-seeds" => self.campaign.seeds = parse_seed_lists(v),
            "incentive-seeds" => self.incentive.seeds = parse_seed_lists(v),
            "k-candidates" => self.k_candidates = Some(parse_k_list(v)?),
            "heldout-fraction" => self.heldout_fraction = parse(key, v)?,
            "alpha" => self.alpha = Some(parse(key, v)?),
            "beta" => self.beta = parse(key, v)?,
            "seed-boost" => self.seed_boost = parse(key, v)?,
            "iters" => self.iters = parse(key, v)?,
            "burnin" => self.burnin = parse(key, v)?,
            "sample-lag" => self.sample_lag = parse(key, v)?,
            "fold-in-iters" => self.fold_in_iters = parse(key, v)?,
            "top-n" => self.top_n = parse(key, v)?,
            "include-raised" => self.include_raised = parse_bool(key, v)?,
            "trees" => self.trees = parse(key, v)?,
            "max-depth" => self.max_depth = parse(key, v)?,
            "min-samples-leaf" => self.min_samples_leaf = parse(key, v)?,
            "min-samples-split" => self.min_samples_split = parse(key, v)?,
            "features-per-split" => self.features_per_split = parse_features_per_split(v)?,
            "bootstrap" => self.bootstrap = parse_bool(key, v)?,
            other => return Err(Error::Argument(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a configuration file body.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Argument(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Argument(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_kv_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_kv_text(&text)
    }

    /// Checks every numeric constraint of the downstream stages.
    pub fn validate(&self) -> Result<()> {
        self.lexicon_shape()?;
        self.fit_settings()?;
        self.forest_params().validate()?;
        if self.campaign.k == 0 && self.incentive.k == 0 {
            return Err(Error::Argument("at least one channel needs K ≥ 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Argument("train-fraction must lie in (0, 1)".into()));
        }
        if let Some(ks) = &self.k_candidates {
            if ks.is_empty() || ks.contains(&0) {
                return Err(Error::Argument("k-candidates must be positive integers".into()));
            }
            if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
                return Err(Error::Argument("heldout-fraction must lie in (0, 1)".into()));
            }
        }
        if self.top_n == 0 {
            return Err(Error::Argument("top-n must be ≥ 1".into()));
        }
        Ok(())
    }

    fn lexicon_shape(&self) -> Result<()> {
        LexiconConfig::new(Default::default(), NounLexicon::PassThrough, self.min_df, self.max_df_ratio)
            .map(|_| ())
    }

    pub fn lexicon(&self) -> Result<LexiconConfig> {
        let base = match self.noun_mode {
            NounMode::Lexicon => LexiconConfig::default_lexicon(),
            NounMode::Passthrough => LexiconConfig::pass_through(),
        };
        let stopwords = match &self.stopwords {
            Some(p) => load_word_list(p)?,
            None => base.stopwords().clone(),
        };
        let nouns = match (self.noun_mode, &self.nouns) {
            (NounMode::Passthrough, _) => NounLexicon::PassThrough,
            (NounMode::Lexicon, Some(p)) => NounLexicon::Set(load_word_list(p)?),
            (NounMode::Lexicon, None) => base.noun_lexicon().clone(),
        };
        LexiconConfig::new(stopwords, nouns, self.min_df, self.max_df_ratio)
    }

    pub fn fit_settings(&self) -> Result<FitSettings> {
        Ok(FitSettings {
            alpha: match self.alpha {
                Some(a) => AlphaRule::Fixed(a),
                None => AlphaRule::Scaled(50.0),
            },
            beta: self.beta,
            seed_boost: self.seed_boost,
            schedule: Schedule::new(self.iters, self.burnin, self.sample_lag)?,
            fold_in_iters: self.fold_in_iters,
        })
        .and_then(|s| {
            // surface alpha/beta/boost errors at parse time
            s.hyper(1)?;
            Ok(s)
        })
    }

    /// Forest parameters; the forest seed is derived from the master seed.
    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            min_samples_split: self.min_samples_split,
            features_per_split: self.features_per_split,
            bootstrap: self.bootstrap,
            seed: crate::rng::mix(self.seed, crate::rng::stream::FOREST),
        }
    }

    pub fn channel(&self, channel: Channel) -> &ChannelConfig {
        match channel {
            Channel::Campaign => &self.campaign,
            Channel::Incentive => &self.incentive,
        }
    }

    /// Training-set size for a corpus of `n` records.
    pub fn resolve_train_count(&self, n: usize) -> Result<usize> {
        let count = match self.train_count {
            Some(c) => c,
            None => (n as f64 * self.train_fraction).round() as usize,
        };
        if count == 0 || count >= n {
            return Err(Error::Argument(format!(
                "train count {count} must satisfy 0 < train count < {n} records"
            )));
        }
        Ok(count)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.resolve_train_count(410).unwrap(), 250);
        let fit = c.fit_settings().unwrap();
        assert_eq!(fit.hyper(2).unwrap().alpha, 25.0);
    }

    #[test]
    fn kv_text_sets_fields() {
        let mut c = RunConfig::default();
        c.apply_kv_text(
            "# run\ninput = a.jsonl\nk-candidates = 1, 2,4\ncampaign-seeds = child, cancer | elderly\n\
             features-per-split = all\nbootstrap = false # single tree\ntrain-count=250\n",
        )
        .unwrap();
        assert_eq!(c.input, Some(PathBuf::from("a.jsonl")));
        assert_eq!(c.k_candidates, Some(vec![1, 2, 4]));
        assert_eq!(
            c.campaign.seeds.topics,
            vec![vec!["child".to_string(), "cancer".to_string()], vec!["elderly".to_string()]]
        );
        assert_eq!(c.features_per_split, FeaturesPerSplit::All);
        assert!(!c.bootstrap);
        assert_eq!(c.train_count, Some(250));
    }

    #[test]
    fn kv_errors_name_the_line() {
        let mut c = RunConfig::default();
        let err = c.apply_kv_text("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(c.apply_kv_text("trees = many").is_err());
        assert!(c.apply_kv_text("no equals sign").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.min_df = 0));
        assert!(bad(|c| c.max_df_ratio = 1.5));
        assert!(bad(|c| c.iters = 10));
        assert!(bad(|c| c.beta = 0.0));
        assert!(bad(|c| c.seed_boost = 0.5));
        assert!(bad(|c| c.trees = 0));
        assert!(bad(|c| c.k_candidates = Some(vec![0, 2])));
        let c = RunConfig {
            train_count: Some(500),
            ..RunConfig::default()
        };
        assert!(c.resolve_train_count(410).is_err());
    }
}
