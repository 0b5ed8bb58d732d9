//! The `crowdtopics` command: `synth`, `topics`, `train`, `eval` and
//! `pipeline`, all driven by one master seed.
//!
//! Every stage reads and writes plain files in the output directory, so the
//! stages can run separately or in one `pipeline` invocation:
//!
//! | file                        | written by | contents                              |
//! |-----------------------------|------------|---------------------------------------|
//! | `campaigns.jsonl`           | synth      | campaign records                      |
//! | `truth.json`                | synth      | generator parameters, true φ/θ        |
//! | `config.json`               | all        | effective run configuration           |
//! | `split.json`                | topics     | train / test campaign ids             |
//! | `<channel>.vocab.txt`       | topics     | vocabulary, one term per line         |
//! | `<channel>.model.json`      | topics     | topic model                           |
//! | `topics.json`, `top_words.txt` | topics  | K selection tables and top words      |
//! | `features_{train,test}.csv` | train      | standardized feature matrices         |
//! | `standardizer.json`         | train      | per-slot mean and deviation           |
//! | `forest.json`               | train      | random forest                         |
//! | `train_summary.json`        | train      | training accuracy and sizes           |
//! | `report.json`, `report.txt` | eval       | metrics report                        |

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{parse_features_per_split, parse_k_list, parse_seed_lists, NounMode, RunConfig};
use crate::corpus::{load_corpus, split_train_test, CampaignSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, MetricsReport, TopicSummary};
use crate::features::{fit_standardizer, fuse, FeatureMatrix, Layout, NumericSchema, Standardizer};
use crate::forest::{train_forest, RandomForest};
use crate::rng::{mix, stream};
use crate::synth::{default_topic_shift, generate_campaigns, CampaignSynthSpec, SynthTruth};
use crate::textprep::{build_vocabulary, encode, preprocess, Channel, TokenizedDoc, Vocabulary};
use crate::topicmodel::{infer_theta, select_k, top_words, KSelection, TopicModel};

pub const CAMPAIGNS_FILE: &str = "campaigns.jsonl";
pub const TRUTH_FILE: &str = "truth.json";
pub const CONFIG_FILE: &str = "config.json";
pub const SPLIT_FILE: &str = "split.json";
pub const TOPICS_FILE: &str = "topics.json";
pub const TOP_WORDS_FILE: &str = "top_words.txt";
pub const FOREST_FILE: &str = "forest.json";
pub const STANDARDIZER_FILE: &str = "standardizer.json";
pub const TRAIN_FEATURES_FILE: &str = "features_train.csv";
pub const TEST_FEATURES_FILE: &str = "features_test.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

pub fn vocab_file(channel: Channel) -> String {
    format!("{}.vocab.txt", channel.name())
}

pub fn model_file(channel: Channel) -> String {
    format!("{}.model.json", channel.name())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub n: usize,
    pub success_fraction: f64,
    pub class_separation: f64,
    /// None ties the topic shift to the class separation.
    pub topic_shift: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl SynthOptions {
    pub fn spec(&self) -> CampaignSynthSpec {
        let reference = CampaignSynthSpec::reference(self.class_separation, self.seed);
        CampaignSynthSpec {
            n: self.n,
            success_fraction: self.success_fraction,
            topic_shift: self
                .topic_shift
                .unwrap_or_else(|| default_topic_shift(self.class_separation)),
            ..reference
        }
    }
}

/// Writes `campaigns.jsonl` and `truth.json`.
pub fn run_synth(opts: &SynthOptions) -> Result<(CampaignSet, SynthTruth)> {
    let (set, truth) = generate_campaigns(&opts.spec())?;
    ensure_dir(&opts.out_dir)?;
    set.write_jsonl(&opts.out_dir.join(CAMPAIGNS_FILE))?;
    write(&opts.out_dir.join(TRUTH_FILE), to_pretty_json(&truth))?;
    log::info!(
        "wrote {} campaigns ({} successful) to {}",
        set.len(),
        set.count_label(1),
        opts.out_dir.display()
    );
    Ok((set, truth))
}

// ---------------------------------------------------------------- topics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTopics {
    pub channel: Channel,
    pub k: usize,
    pub vocab_size: usize,
    pub selection: Option<KSelection>,
    pub top_words: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsSummary {
    pub train_size: usize,
    pub test_size: usize,
    pub channels: Vec<ChannelTopics>,
}

impl TopicsSummary {
    pub fn topic_summaries(&self) -> Vec<TopicSummary> {
        self.channels
            .iter()
            .flat_map(|c| {
                c.top_words.iter().enumerate().map(|(k, words)| TopicSummary {
                    channel: c.channel.name().to_owned(),
                    topic: k,
                    words: words.clone(),
                })
            })
            .collect()
    }

    /// Listing in the style of a "Topic | Words" table per channel.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for c in &self.channels {
            let title = match c.channel {
                Channel::Campaign => "Campaign descriptions",
                Channel::Incentive => "Incentive descriptions",
            };
            let _ = writeln!(s, "{title} (K = {}, V = {})", c.k, c.vocab_size);
            if let Some(sel) = &c.selection {
                for (k, ppl) in &sel.table {
                    let mark = if *k == sel.chosen { "  <- chosen" } else { "" };
                    let _ = writeln!(s, "  K = {k:<3} held-out perplexity {ppl:.4}{mark}");
                }
            }
            let _ = writeln!(s, "{:<7}Words", "Topic");
            for (k, words) in c.top_words.iter().enumerate() {
                let _ = writeln!(s, "{:<7}{}", k + 1, words.join(", "));
            }
            let _ = writeln!(s);
        }
        s
    }
}

fn require_input(cfg: &RunConfig) -> Result<&Path> {
    cfg.input
        .as_deref()
        .ok_or_else(|| Error::Argument("no input file given (--input)".into()))
}

fn load_split(cfg: &RunConfig) -> Result<(CampaignSet, CampaignSet, CampaignSet)> {
    let corpus = load_corpus(require_input(cfg)?)?;
    let split: SplitRecord = read_json(&cfg.out_dir.join(SPLIT_FILE))?;
    let train = corpus.select_ids(&split.train_ids, format!("{} [train]", corpus.source()))?;
    let test = corpus.select_ids(&split.test_ids, format!("{} [test]", corpus.source()))?;
    Ok((corpus, train, test))
}

fn channel_docs(set: &CampaignSet, channel: Channel, vocab: &Vocabulary, lex: &crate::textprep::LexiconConfig) -> Vec<TokenizedDoc> {
    set.records()
        .iter()
        .map(|r| {
            let words = preprocess(channel.text(&r.campaign), lex);
            encode(&words, vocab, r.campaign.id.clone(), channel)
        })
        .collect()
}

/// Splits the corpus, fits one topic model per enabled channel on the
/// training campaigns, and writes models, vocabularies and top-word tables.
pub fn run_topics(cfg: &RunConfig) -> Result<TopicsSummary> {
    cfg.validate()?;
    let corpus = load_corpus(require_input(cfg)?)?;
    let train_count = cfg.resolve_train_count(corpus.len())?;
    let lex = cfg.lexicon()?;
    let fit = cfg.fit_settings()?;
    ensure_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join(CONFIG_FILE), cfg.to_json())?;

    let split_seed = mix(cfg.seed, stream::SPLIT);
    let (train, test) = split_train_test(&corpus, train_count, split_seed)?;
    let split = SplitRecord {
        seed: split_seed,
        train_ids: train.ids().into_iter().map(str::to_owned).collect(),
        test_ids: test.ids().into_iter().map(str::to_owned).collect(),
    };
    write(&cfg.out_dir.join(SPLIT_FILE), to_pretty_json(&split))?;

    let mut channels = Vec::new();
    for channel in Channel::ALL {
        let ccfg = cfg.channel(channel);
        if ccfg.k == 0 && cfg.k_candidates.is_none() {
            continue;
        }
        let words: Vec<Vec<String>> = train
            .records()
            .iter()
            .map(|r| preprocess(channel.text(&r.campaign), &lex))
            .collect();
        let vocab = build_vocabulary(&words, &lex)?;
        let docs = channel_docs(&train, channel, &vocab, &lex);

        let task_seed = mix(
            cfg.seed,
            match channel {
                Channel::Campaign => stream::TOPICS_CAMPAIGN,
                Channel::Incentive => stream::TOPICS_INCENTIVE,
            },
        );
        let selection = match &cfg.k_candidates {
            Some(ks) => Some(select_k(
                &docs,
                &vocab,
                &ccfg.seeds,
                ks,
                cfg.heldout_fraction,
                &fit,
                mix(task_seed, 1),
            )?),
            None => None,
        };
        let k = selection.as_ref().map_or(ccfg.k, |s| s.chosen);
        let model = fit.fit(&docs, &vocab, &ccfg.seeds, k, task_seed)?;
        vocab.save(&cfg.out_dir.join(vocab_file(channel)))?;
        model.save(&cfg.out_dir.join(model_file(channel)))?;

        let n = cfg.top_n.min(vocab.len());
        let top = (0..k)
            .map(|t| Ok(top_words(&model, t, n, &vocab)?.into_iter().map(|(w, _)| w).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        log::info!("{} channel: K = {k}, V = {}", channel.name(), vocab.len());
        channels.push(ChannelTopics {
            channel,
            k,
            vocab_size: vocab.len(),
            selection,
            top_words: top,
        });
    }

    let summary = TopicsSummary {
        train_size: train.len(),
        test_size: test.len(),
        channels,
    };
    write(&cfg.out_dir.join(TOPICS_FILE), to_pretty_json(&summary))?;
    write(&cfg.out_dir.join(TOP_WORDS_FILE), summary.render_text())?;
    Ok(summary)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_size: usize,
    pub test_size: usize,
    pub slots: Vec<String>,
    pub training_accuracy: f64,
    pub n_trees: usize,
}

/// Fold-in topic proportions for every campaign of `corpus` on one channel.
/// Campaign `i` (corpus order) uses seed `mix(channel_seed, i)`.
fn channel_thetas(cfg: &RunConfig, corpus: &CampaignSet, channel: Channel) -> Result<Option<Vec<Vec<f64>>>> {
    let model_path = cfg.out_dir.join(model_file(channel));
    if !model_path.exists() {
        return Ok(None);
    }
    let vocab = Vocabulary::load(&cfg.out_dir.join(vocab_file(channel)))?;
    let model = TopicModel::load(&model_path, &vocab)?;
    let lex = cfg.lexicon()?;
    let docs = channel_docs(corpus, channel, &vocab, &lex);
    let seed = mix(
        cfg.seed,
        match channel {
            Channel::Campaign => stream::FOLD_IN_CAMPAIGN,
            Channel::Incentive => stream::FOLD_IN_INCENTIVE,
        },
    );
    use rayon::prelude::*;
    let thetas = docs
        .par_iter()
        .enumerate()
        .map(|(i, d)| infer_theta(&model, d, cfg.fold_in_iters, mix(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(thetas))
}

pub struct BuiltFeatures {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub standardizer: Standardizer,
}

/// Raw fused features for the split, standardized with training statistics.
pub fn build_features(cfg: &RunConfig) -> Result<BuiltFeatures> {
    let (corpus, _, _) = load_split(cfg)?;
    let split: SplitRecord = read_json(&cfg.out_dir.join(SPLIT_FILE))?;
    let campaign = channel_thetas(cfg, &corpus, Channel::Campaign)?;
    let incentive = channel_thetas(cfg, &corpus, Channel::Incentive)?;
    if campaign.is_none() && incentive.is_none() {
        return Err(Error::Argument(format!(
            "no topic models in {}; run `topics` first",
            cfg.out_dir.display()
        )));
    }
    let k_of = |t: &Option<Vec<Vec<f64>>>| t.as_ref().and_then(|v| v.first()).map_or(0, Vec::len);
    let schema = NumericSchema {
        include_raised: cfg.include_raised,
    };
    let layout = Arc::new(Layout::new(k_of(&campaign), k_of(&incentive), &schema));

    let mut vectors = Vec::with_capacity(corpus.len());
    for (i, r) in corpus.records().iter().enumerate() {
        let tc = campaign.as_ref().map_or(&[][..], |t| &t[i][..]);
        let ti = incentive.as_ref().map_or(&[][..], |t| &t[i][..]);
        vectors.push(fuse(tc, ti, &schema.extract(&r.campaign), &layout)?);
    }
    let all = FeatureMatrix::from_vectors(
        vectors,
        corpus.labels(),
        corpus.ids().into_iter().map(str::to_owned).collect(),
    )?;
    let pick = |ids: &[String]| -> Result<FeatureMatrix> {
        let index: std::collections::HashMap<&str, usize> =
            all.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let pos: Vec<usize> = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("split names unknown id `{id}`")))
            })
            .collect::<Result<_>>()?;
        FeatureMatrix::new(
            Arc::clone(all.layout()),
            pos.iter().map(|&p| all.rows()[p].clone()).collect(),
            pos.iter().map(|&p| all.labels()[p]).collect(),
            ids.to_vec(),
        )
    };
    let train_raw = pick(&split.train_ids)?;
    let test_raw = pick(&split.test_ids)?;
    let standardizer = fit_standardizer(&train_raw)?;
    Ok(BuiltFeatures {
        train: standardizer.apply(&train_raw)?,
        test: standardizer.apply(&test_raw)?,
        standardizer,
    })
}

/// Builds features, trains the forest and writes it with a training summary.
pub fn run_train(cfg: &RunConfig) -> Result<(RandomForest, TrainSummary)> {
    cfg.validate()?;
    write(&cfg.out_dir.join(CONFIG_FILE), cfg.to_json())?;
    let built = build_features(cfg)?;
    let forest = train_forest(&built.train, &cfg.forest_params())?;
    let pred = forest.predict_matrix(&built.train)?;
    let correct = pred.iter().zip(built.train.labels()).filter(|(p, t)| p == t).count();
    let summary = TrainSummary {
        train_size: built.train.len(),
        test_size: built.test.len(),
        slots: built.train.layout().names(),
        training_accuracy: correct as f64 / built.train.len() as f64,
        n_trees: forest.trees.len(),
    };
    built.train.save_csv(&cfg.out_dir.join(TRAIN_FEATURES_FILE))?;
    built.test.save_csv(&cfg.out_dir.join(TEST_FEATURES_FILE))?;
    write(&cfg.out_dir.join(STANDARDIZER_FILE), to_pretty_json(&built.standardizer))?;
    forest.save(&cfg.out_dir.join(FOREST_FILE))?;
    write(&cfg.out_dir.join(TRAIN_SUMMARY_FILE), to_pretty_json(&summary))?;
    log::info!("training accuracy {:.4}", summary.training_accuracy);
    Ok((forest, summary))
}

// ---------------------------------------------------------------- eval

/// Scores the trained forest on the test features and writes the report.
pub fn run_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    let forest = RandomForest::load(&cfg.out_dir.join(FOREST_FILE))?;
    let train = FeatureMatrix::load_csv(&cfg.out_dir.join(TRAIN_FEATURES_FILE))?;
    let test = FeatureMatrix::load_csv(&cfg.out_dir.join(TEST_FEATURES_FILE))?;
    let topics: TopicsSummary = read_json(&cfg.out_dir.join(TOPICS_FILE))?;
    let config = serde_json::to_value(cfg).expect("config serializes");
    let report = evaluate_run(&forest, &test, train.labels(), topics.topic_summaries(), config)?;
    write(&cfg.out_dir.join(REPORT_JSON_FILE), report.to_json())?;
    write(&cfg.out_dir.join(REPORT_TEXT_FILE), report.render_text())?;
    Ok(report)
}

// ---------------------------------------------------------------- pipeline

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// topics → train → eval under one configuration.
pub fn run_pipeline(cfg: &RunConfig) -> Result<MetricsReport> {
    stage("config", cfg.validate())?;
    stage("topics", run_topics(cfg))?;
    stage("train", run_train(cfg))?;
    stage("eval", run_eval(cfg))
}

// ---------------------------------------------------------------- argument parsing

#[derive(Debug, Parser)]
#[command(name = "crowdtopics", version, about = "Topic features and random-forest success prediction for charity crowdfunding campaigns")]
pub struct Cli {
    /// Key-value configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic campaign file and its ground-truth sidecar.
    Synth(SynthArgs),
    /// Fit one topic model per description channel.
    Topics(RunArgs),
    /// Build fused features and train the random forest.
    Train(RunArgs),
    /// Evaluate the forest on the test split.
    Eval(RunArgs),
    /// topics, train and eval in one run.
    Pipeline(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 410)]
    pub n: usize,
    #[arg(long, default_value_t = 210.0 / 410.0)]
    pub success_frac: f64,
    #[arg(long, default_value_t = 3.0)]
    pub class_separation: f64,
    #[arg(long)]
    pub topic_shift: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub noun_mode: Option<String>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub nouns: Option<PathBuf>,
    #[arg(long)]
    pub min_df: Option<usize>,
    #[arg(long)]
    pub max_df_ratio: Option<f64>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub k_campaign: Option<usize>,
    #[arg(long)]
    pub k_incentive: Option<usize>,
    /// Seed words per topic: `a,b | c,d`.
    #[arg(long)]
    pub campaign_seeds: Option<String>,
    #[arg(long)]
    pub incentive_seeds: Option<String>,
    /// Candidate topic counts, e.g. `1,2,4`; selects K per channel by
    /// held-out perplexity.
    #[arg(long)]
    pub k_candidates: Option<String>,
    #[arg(long)]
    pub heldout_fraction: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed_boost: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub sample_lag: Option<usize>,
    #[arg(long)]
    pub fold_in_iters: Option<usize>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub include_raised: bool,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    /// `sqrt`, `all` or a count.
    #[arg(long)]
    pub features_per_split: Option<String>,
    #[arg(long)]
    pub no_bootstrap: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = &self.$field {
                    $target = v.clone();
                }
            };
        }
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(m) = &self.noun_mode {
            cfg.noun_mode = m.parse::<NounMode>()?;
        }
        if let Some(p) = &self.stopwords {
            cfg.stopwords = Some(p.clone());
        }
        if let Some(p) = &self.nouns {
            cfg.nouns = Some(p.clone());
        }
        set!(min_df => cfg.min_df);
        set!(max_df_ratio => cfg.max_df_ratio);
        if let Some(c) = self.train_count {
            cfg.train_count = Some(c);
        }
        set!(train_fraction => cfg.train_fraction);
        set!(k_campaign => cfg.campaign.k);
        set!(k_incentive => cfg.incentive.k);
        if let Some(s) = &self.campaign_seeds {
            cfg.campaign.seeds = parse_seed_lists(s);
        }
        if let Some(s) = &self.incentive_seeds {
            cfg.incentive.seeds = parse_seed_lists(s);
        }
        if let Some(s) = &self.k_candidates {
            cfg.k_candidates = Some(parse_k_list(s)?);
        }
        set!(heldout_fraction => cfg.heldout_fraction);
        if let Some(a) = self.alpha {
            cfg.alpha = Some(a);
        }
        set!(beta => cfg.beta);
        set!(seed_boost => cfg.seed_boost);
        set!(iters => cfg.iters);
        set!(burnin => cfg.burnin);
        set!(sample_lag => cfg.sample_lag);
        set!(fold_in_iters => cfg.fold_in_iters);
        set!(top_n => cfg.top_n);
        if self.include_raised {
            cfg.include_raised = true;
        }
        set!(trees => cfg.trees);
        set!(max_depth => cfg.max_depth);
        set!(min_samples_leaf => cfg.min_samples_leaf);
        set!(min_samples_split => cfg.min_samples_split);
        if let Some(f) = &self.features_per_split {
            cfg.features_per_split = parse_features_per_split(f)?;
        }
        if self.no_bootstrap {
            cfg.bootstrap = false;
        }
        Ok(())
    }
}

impl Cli {
    /// Defaults, then the config file, then global flags, then `args`.
    pub fn run_config(&self, args: Option<&RunArgs>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_kv_file(path)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(a) = args {
            a.apply(&mut cfg)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            let cfg = cli.run_config(None)?;
            let opts = SynthOptions {
                n: a.n,
                success_fraction: a.success_frac,
                class_separation: a.class_separation,
                topic_shift: a.topic_shift,
                seed: cfg.seed,
                out_dir: cfg.out_dir.clone(),
            };
            with_threads(cfg.threads, || run_synth(&opts))??;
        }
        Command::Topics(a) => {
            let cfg = cli.run_config(Some(a))?;
            let summary = with_threads(cfg.threads, || run_topics(&cfg))??;
            print!("{}", summary.render_text());
        }
        Command::Train(a) => {
            let cfg = cli.run_config(Some(a))?;
            let (_, summary) = with_threads(cfg.threads, || run_train(&cfg))??;
            println!(
                "trained {} trees on {} campaigns; training accuracy {:.4}",
                summary.n_trees, summary.train_size, summary.training_accuracy
            );
        }
        Command::Eval(a) => {
            let cfg = cli.run_config(Some(a))?;
            let report = with_threads(cfg.threads, || run_eval(&cfg))??;
            print!("{}", report.render_text());
        }
        Command::Pipeline(a) => {
            let cfg = cli.run_config(Some(a))?;
            let report = with_threads(cfg.threads, || run_pipeline(&cfg))??;
            print!("{}", report.render_text());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code: 0 success, 1 invalid input, 2 runtime failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
