//! Python bindings: `import crowdtopics_py`.
//!
//! Structured results (metrics, reports, ground truth) come back as plain
//! dicts and lists. Invalid input raises `ValueError`, I/O and other runtime
//! failures raise `RuntimeError`.

#![allow(clippy::useless_conversion)]

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use crowdtopics::cli::{self, SynthOptions};
use crowdtopics::config::RunConfig;
use crowdtopics::corpus::{self, label_campaign};
use crowdtopics::eval;
use crowdtopics::features::{FeatureMatrix, Layout, NumericSchema};
use crowdtopics::forest::{self, FeaturesPerSplit, ForestParams};
use crowdtopics::synth::{self, CampaignSynthSpec, PlantedSpec};
use crowdtopics::textprep::{self, Channel, LexiconConfig, TokenizedDoc};
use crowdtopics::topicmodel::{self, AlphaRule, FitSettings, Schedule, SeedSpec};

fn err(e: crowdtopics::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn channel(name: &str) -> PyResult<Channel> {
    match name {
        "campaign" => Ok(Channel::Campaign),
        "incentive" => Ok(Channel::Incentive),
        other => Err(PyValueError::new_err(format!("unknown channel `{other}`"))),
    }
}

/// Lowercased alphanumeric tokens of length ≥ 2, pure digits dropped.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    textprep::tokenize(text)
}

/// Tokenize, drop stop words and (unless `passthrough`) keep lexicon nouns.
#[pyfunction]
#[pyo3(signature = (text, passthrough = false))]
fn preprocess(text: &str, passthrough: bool) -> Vec<String> {
    let cfg = if passthrough {
        LexiconConfig::pass_through()
    } else {
        LexiconConfig::default_lexicon()
    };
    textprep::preprocess(text, &cfg)
}

#[pyclass(module = "crowdtopics_py")]
#[derive(Clone)]
struct Campaign {
    inner: corpus::Campaign,
}

#[pymethods]
impl Campaign {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = corpus::parse_campaign_record(text).map_err(err)?;
        Ok(Campaign { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("campaign serializes")
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn goal_amount(&self) -> f64 {
        self.inner.goal_amount
    }

    #[getter]
    fn raised_amount(&self) -> f64 {
        self.inner.raised_amount
    }

    #[getter]
    fn campaign_text(&self) -> String {
        self.inner.campaign_text.clone()
    }

    #[getter]
    fn incentive_text(&self) -> String {
        self.inner.incentive_text.clone()
    }

    /// 1 when the goal was attained.
    #[getter]
    fn label(&self) -> u8 {
        label_campaign(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Campaign(id={:?}, label={})", self.inner.id, self.label())
    }
}

#[pyclass(module = "crowdtopics_py")]
#[derive(Clone)]
struct CampaignSet {
    inner: corpus::CampaignSet,
}

#[pymethods]
impl CampaignSet {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(CampaignSet {
            inner: corpus::load_corpus(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, source = "<python>"))]
    fn parse(text: &str, source: &str) -> PyResult<Self> {
        Ok(CampaignSet {
            inner: corpus::parse_corpus(text, source).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __getitem__(&self, i: usize) -> PyResult<Campaign> {
        self.inner
            .records()
            .get(i)
            .map(|r| Campaign {
                inner: r.campaign.clone(),
            })
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().into_iter().map(str::to_owned).collect()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    /// Stratified split into (train, test).
    fn split(&self, train_count: usize, seed: u64) -> PyResult<(CampaignSet, CampaignSet)> {
        let (a, b) = corpus::split_train_test(&self.inner, train_count, seed).map_err(err)?;
        Ok((CampaignSet { inner: a }, CampaignSet { inner: b }))
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    /// Preprocessed token lists of one channel (`"campaign"` or `"incentive"`).
    #[pyo3(signature = (channel_name, passthrough = false))]
    fn texts(&self, channel_name: &str, passthrough: bool) -> PyResult<Vec<Vec<String>>> {
        let ch = channel(channel_name)?;
        Ok(self
            .inner
            .records()
            .iter()
            .map(|r| preprocess(ch.text(&r.campaign), passthrough))
            .collect())
    }
}

#[pyclass(module = "crowdtopics_py")]
#[derive(Clone)]
struct Vocabulary {
    inner: textprep::Vocabulary,
}

#[pymethods]
impl Vocabulary {
    #[new]
    fn new(terms: Vec<String>) -> PyResult<Self> {
        Ok(Vocabulary {
            inner: textprep::Vocabulary::from_terms(terms).map_err(err)?,
        })
    }

    /// Document-frequency pruned vocabulary of already preprocessed docs.
    #[staticmethod]
    #[pyo3(signature = (docs, min_df = 2, max_df_ratio = 0.95))]
    fn build(docs: Vec<Vec<String>>, min_df: usize, max_df_ratio: f64) -> PyResult<Self> {
        let cfg = LexiconConfig::pass_through()
            .with_pruning(min_df, max_df_ratio)
            .map_err(err)?;
        Ok(Vocabulary {
            inner: textprep::build_vocabulary(&docs, &cfg).map_err(err)?,
        })
    }

    fn terms(&self) -> Vec<String> {
        self.inner.terms().to_vec()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    /// Token ids of the in-vocabulary words, in order.
    fn encode(&self, words: Vec<String>) -> Vec<u32> {
        textprep::encode(&words, &self.inner, "", Channel::Campaign).token_ids
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn tokenized(docs: Vec<Vec<u32>>) -> Vec<TokenizedDoc> {
    docs.into_iter()
        .enumerate()
        .map(|(i, ids)| TokenizedDoc::new(ids, format!("doc{i}"), Channel::Campaign))
        .collect()
}

#[pyclass(module = "crowdtopics_py")]
#[derive(Clone)]
struct TopicModel {
    inner: topicmodel::TopicModel,
    vocab: textprep::Vocabulary,
}

#[pymethods]
impl TopicModel {
    /// Seeded LDA by collapsed Gibbs sampling. `alpha` defaults to 50 / k;
    /// `seeds` is one word list per topic.
    #[staticmethod]
    #[pyo3(signature = (docs, vocab, k, seed = 0, seeds = None, alpha = None, beta = 0.01,
                        seed_boost = 50.0, iters = 1000, burnin = 500, sample_lag = 10))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        docs: Vec<Vec<u32>>,
        vocab: &Vocabulary,
        k: usize,
        seed: u64,
        seeds: Option<Vec<Vec<String>>>,
        alpha: Option<f64>,
        beta: f64,
        seed_boost: f64,
        iters: usize,
        burnin: usize,
        sample_lag: usize,
    ) -> PyResult<Self> {
        let settings = FitSettings {
            alpha: alpha.map_or(AlphaRule::Scaled(50.0), AlphaRule::Fixed),
            beta,
            seed_boost,
            schedule: Schedule::new(iters, burnin, sample_lag).map_err(err)?,
            ..FitSettings::default()
        };
        let spec = seeds.map_or_else(SeedSpec::none, SeedSpec::new);
        let inner = settings
            .fit(&tokenized(docs), &vocab.inner, &spec, k, seed)
            .map_err(err)?;
        Ok(TopicModel {
            inner,
            vocab: vocab.inner.clone(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf, vocab: &Vocabulary) -> PyResult<Self> {
        Ok(TopicModel {
            inner: topicmodel::TopicModel::load(&path, &vocab.inner).map_err(err)?,
            vocab: vocab.inner.clone(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn phi(&self) -> Vec<Vec<f64>> {
        self.inner.phi.clone()
    }

    #[getter]
    fn theta(&self) -> Vec<Vec<f64>> {
        self.inner.theta.clone()
    }

    /// Fold-in topic proportions of an unseen document.
    #[pyo3(signature = (doc, iters = 50, seed = 0))]
    fn infer_theta(&self, doc: Vec<u32>, iters: usize, seed: u64) -> PyResult<Vec<f64>> {
        let doc = TokenizedDoc::new(doc, "doc", Channel::Campaign);
        topicmodel::infer_theta(&self.inner, &doc, iters, seed).map_err(err)
    }

    /// Held-out perplexity with fold-in document proportions.
    #[pyo3(signature = (docs, fold_in_iters = 50, seed = 0))]
    fn perplexity(&self, docs: Vec<Vec<u32>>, fold_in_iters: usize, seed: u64) -> PyResult<f64> {
        topicmodel::heldout_perplexity(&self.inner, &tokenized(docs), fold_in_iters, seed).map_err(err)
    }

    #[pyo3(signature = (topic, n = 10))]
    fn top_words(&self, topic: usize, n: usize) -> PyResult<Vec<(String, f64)>> {
        topicmodel::top_words(&self.inner, topic, n, &self.vocab).map_err(err)
    }
}

/// Held-out perplexity of each candidate K and the chosen one.
#[pyfunction]
#[pyo3(signature = (docs, vocab, candidates, heldout_fraction = 0.2, seed = 0, iters = 1000, burnin = 500, sample_lag = 10))]
#[allow(clippy::too_many_arguments)]
fn select_k(
    py: Python<'_>,
    docs: Vec<Vec<u32>>,
    vocab: &Vocabulary,
    candidates: Vec<usize>,
    heldout_fraction: f64,
    seed: u64,
    iters: usize,
    burnin: usize,
    sample_lag: usize,
) -> PyResult<PyObject> {
    let settings = FitSettings {
        schedule: Schedule::new(iters, burnin, sample_lag).map_err(err)?,
        ..FitSettings::default()
    };
    let sel = topicmodel::select_k(
        &tokenized(docs),
        &vocab.inner,
        &SeedSpec::none(),
        &candidates,
        heldout_fraction,
        &settings,
        seed,
    )
    .map_err(err)?;
    to_py(py, &sel)
}

#[pyclass(module = "crowdtopics_py")]
struct RandomForest {
    inner: forest::RandomForest,
}

fn feature_matrix(rows: Vec<Vec<f64>>, labels: Vec<u8>, k_campaign: usize, k_incentive: usize, include_raised: bool) -> PyResult<FeatureMatrix> {
    let layout = Arc::new(Layout::new(k_campaign, k_incentive, &NumericSchema { include_raised }));
    let ids = (0..rows.len()).map(|i| format!("row{i}")).collect();
    FeatureMatrix::new(layout, rows, labels, ids).map_err(err)
}

#[pymethods]
impl RandomForest {
    /// Rows follow the fused layout: `k_campaign` + `k_incentive` topic
    /// slots, then the numeric slots. `features_per_split` is `"sqrt"`,
    /// `"all"` or a count.
    #[staticmethod]
    #[pyo3(signature = (rows, labels, k_campaign = 0, k_incentive = 0, include_raised = false,
                        n_trees = 100, max_depth = 16, min_samples_leaf = 1, min_samples_split = 2,
                        features_per_split = "sqrt", bootstrap = true, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        k_campaign: usize,
        k_incentive: usize,
        include_raised: bool,
        n_trees: usize,
        max_depth: usize,
        min_samples_leaf: usize,
        min_samples_split: usize,
        features_per_split: &str,
        bootstrap: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let m = feature_matrix(rows, labels, k_campaign, k_incentive, include_raised)?;
        let fps = match features_per_split {
            "sqrt" => FeaturesPerSplit::Sqrt,
            "all" => FeaturesPerSplit::All,
            n => FeaturesPerSplit::Count(
                n.parse()
                    .map_err(|_| PyValueError::new_err(format!("bad features_per_split `{n}`")))?,
            ),
        };
        let params = ForestParams {
            n_trees,
            max_depth,
            min_samples_leaf,
            min_samples_split,
            features_per_split: fps,
            bootstrap,
            seed,
        };
        Ok(RandomForest {
            inner: forest::train_forest(&m, &params).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(RandomForest {
            inner: forest::RandomForest::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        let p = self.inner.layout.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(PyValueError::new_err(format!("row has {} values, layout has {p}", bad.len())));
        }
        Ok(rows.iter().map(|r| self.inner.predict_row(r)).collect())
    }

    /// Fraction of trees voting for success, per row.
    fn predict_proba(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let p = self.inner.layout.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(PyValueError::new_err(format!("row has {} values, layout has {p}", bad.len())));
        }
        Ok(rows.iter().map(|r| self.inner.predict_proba_row(r)).collect())
    }

    fn slot_names(&self) -> Vec<String> {
        self.inner.layout.names()
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }
}

/// Confusion counts and accuracy / precision / recall / F1 (None when
/// undefined).
#[pyfunction]
fn evaluate(py: Python<'_>, y_true: Vec<u8>, y_pred: Vec<u8>) -> PyResult<PyObject> {
    let cm = eval::confusion(&y_true, &y_pred).map_err(err)?;
    let m = eval::metrics(&cm).map_err(err)?;
    to_py(py, &serde_json::json!({ "confusion": cm, "metrics": m }))
}

#[pyfunction]
#[pyo3(signature = (precision, recall))]
fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    eval::f1_score(precision, recall)
}

#[pyfunction]
fn majority_baseline(y_train: Vec<u8>, y_test: Vec<u8>) -> PyResult<f64> {
    eval::majority_baseline(&y_train, &y_test).map_err(err)
}

/// Synthetic labelled campaigns; returns `(CampaignSet, truth_dict)`.
#[pyfunction]
#[pyo3(signature = (n = 410, class_separation = 3.0, success_fraction = 210.0 / 410.0, seed = 0, topic_shift = None))]
fn generate_campaigns(
    py: Python<'_>,
    n: usize,
    class_separation: f64,
    success_fraction: f64,
    seed: u64,
    topic_shift: Option<f64>,
) -> PyResult<(CampaignSet, PyObject)> {
    let mut spec = CampaignSynthSpec {
        n,
        success_fraction,
        ..CampaignSynthSpec::reference(class_separation, seed)
    };
    if let Some(t) = topic_shift {
        spec.topic_shift = t;
    }
    let (set, truth) = synth::generate_campaigns(&spec).map_err(err)?;
    Ok((CampaignSet { inner: set }, to_py(py, &truth)?))
}

/// Planted-topic corpus; returns a dict with `docs`, `true_phi`,
/// `true_theta` and `vocab` (term list). Defaults to the reference corpus.
#[pyfunction]
#[pyo3(signature = (k = 2, v = 200, d = 400, doc_len_mean = 60.0, alpha_true = 0.2, topic_sharpness = 0.05, seed = 7))]
#[allow(clippy::too_many_arguments)]
fn generate_planted_corpus(
    py: Python<'_>,
    k: usize,
    v: usize,
    d: usize,
    doc_len_mean: f64,
    alpha_true: f64,
    topic_sharpness: f64,
    seed: u64,
) -> PyResult<PyObject> {
    let spec = PlantedSpec {
        k,
        v,
        d,
        doc_len_mean,
        alpha_true,
        topic_sharpness,
        seed,
        ..PlantedSpec::reference()
    };
    let planted = synth::generate_planted_corpus(&spec).map_err(err)?;
    let docs: Vec<&[u32]> = planted.docs.iter().map(|d| d.token_ids.as_slice()).collect();
    to_py(
        py,
        &serde_json::json!({
            "docs": docs,
            "true_phi": planted.true_phi,
            "true_theta": planted.true_theta,
            "vocab": planted.vocabulary().terms(),
        }),
    )
}

/// Greedy top-10 alignment; returns `(permutation, scores)`.
#[pyfunction]
fn align_topics(true_phi: Vec<Vec<f64>>, est_phi: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let a = synth::align_topics(&true_phi, &est_phi).map_err(err)?;
    Ok((a.permutation, a.scores))
}

/// Writes `campaigns.jsonl` and `truth.json` under `out_dir`.
#[pyfunction]
#[pyo3(signature = (out_dir, n = 410, class_separation = 3.0, success_fraction = 210.0 / 410.0, seed = 0))]
fn run_synth(out_dir: PathBuf, n: usize, class_separation: f64, success_fraction: f64, seed: u64) -> PyResult<()> {
    let opts = SynthOptions {
        n,
        success_fraction,
        class_separation,
        topic_shift: None,
        seed,
        out_dir,
    };
    cli::run_synth(&opts).map(|_| ()).map_err(err)
}

/// Runs topics → train → eval. `options` uses the configuration-file keys
/// (`"k-campaign"`, `"trees"`, ...); returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (input, out_dir, seed = 0, options = None))]
fn run_pipeline(
    py: Python<'_>,
    input: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    options: Option<std::collections::BTreeMap<String, String>>,
) -> PyResult<PyObject> {
    let mut cfg = RunConfig {
        input: Some(input),
        out_dir,
        seed,
        ..RunConfig::default()
    };
    for (k, v) in options.unwrap_or_default() {
        cfg.set(&k, &v).map_err(err)?;
    }
    let report = py.allow_threads(|| cli::run_pipeline(&cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn crowdtopics_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Campaign>()?;
    m.add_class::<CampaignSet>()?;
    m.add_class::<Vocabulary>()?;
    m.add_class::<TopicModel>()?;
    m.add_class::<RandomForest>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(majority_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(generate_campaigns, m)?)?;
    m.add_function(wrap_pyfunction!(generate_planted_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(align_topics, m)?)?;
    m.add_function(wrap_pyfunction!(run_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
