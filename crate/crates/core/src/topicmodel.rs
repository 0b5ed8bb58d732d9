//! Seed-word guided LDA fitted by collapsed Gibbs sampling.
//!
//! The domain constraint enters in two places:
//!
//! 1. tokens of a seed word start in the seed word's designated topic, and
//! 2. the topic-word prior is asymmetric: `beta_kw = beta * seed_boost` when
//!    `w` seeds topic `k`, and plain `beta` otherwise.
//!
//! With no seeds (or `seed_boost = 1` and random initialisation) the sampler
//! is ordinary LDA.
//!
//! Estimates of `phi` (K×V) and `theta` (D×K) are posterior means averaged over
//! the post-burn-in samples. Held-out documents get topic proportions by
//! fold-in: Gibbs sampling over the document's own assignments with `phi`
//! held fixed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from, Rng};
use crate::textprep::{Channel, TokenizedDoc, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed_boost: f64,
}

impl Hyperparams {
    pub fn new(k: usize, alpha: f64, beta: f64, seed_boost: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("topic count K must be ≥ 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Argument(format!("alpha must be > 0, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!("beta must be > 0, got {beta}")));
        }
        if !(seed_boost >= 1.0 && seed_boost.is_finite()) {
            return Err(Error::Argument(format!("seed_boost must be ≥ 1, got {seed_boost}")));
        }
        Ok(Hyperparams {
            k,
            alpha,
            beta,
            seed_boost,
        })
    }

    /// alpha = 50/K, beta = 0.01, seed_boost = 50.
    pub fn defaults(k: usize) -> Result<Self> {
        Self::new(k, 50.0 / k.max(1) as f64, 0.01, 50.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iters: usize,
    pub burnin: usize,
    pub sample_lag: usize,
}

impl Schedule {
    pub fn new(iters: usize, burnin: usize, sample_lag: usize) -> Result<Self> {
        if iters <= burnin {
            return Err(Error::Argument(format!(
                "iterations ({iters}) must exceed burn-in ({burnin})"
            )));
        }
        if sample_lag == 0 {
            return Err(Error::Argument("sample_lag must be ≥ 1".into()));
        }
        Ok(Schedule {
            iters,
            burnin,
            sample_lag,
        })
    }

    fn is_sample(&self, sweep: usize) -> bool {
        sweep > self.burnin && (sweep - self.burnin).is_multiple_of(self.sample_lag)
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            iters: 1000,
            burnin: 500,
            sample_lag: 10,
        }
    }
}

/// Per-topic seed word lists, as terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub topics: Vec<Vec<String>>,
}

impl SeedSpec {
    pub fn new(topics: Vec<Vec<String>>) -> Self {
        SeedSpec { topics }
    }

    pub fn none() -> Self {
        SeedSpec::default()
    }

    /// Headline unigrams of the two known topics of each description channel.
    pub fn default_for(channel: Channel) -> Self {
        let lists: [&[&str]; 2] = match channel {
            Channel::Campaign => [
                &[
                    "child", "cancer", "terminal", "leukemia", "tumors", "lymphomas", "parent",
                    "dependence",
                ],
                &[
                    "elderly",
                    "nursing",
                    "kidney",
                    "dialysis",
                    "diabetes",
                    "stroke",
                    "hospitalization",
                    "arthritis",
                    "physiotherapy",
                ],
            ],
            Channel::Incentive => [
                &["tax", "benefit", "reduction", "income", "80g", "12aa", "relief"],
                &[
                    "appreciation",
                    "certificate",
                    "recognition",
                    "voluntary",
                    "board",
                    "guest",
                    "induction",
                    "honorary",
                ],
            ],
        };
        SeedSpec::new(
            lists
                .iter()
                .map(|l| l.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
    }

    /// Drops seed lists for topics ≥ k.
    pub fn truncated(&self, k: usize) -> Self {
        SeedSpec::new(self.topics.iter().take(k).cloned().collect())
    }

    pub fn is_empty(&self) -> bool {
        self.topics.iter().all(Vec::is_empty)
    }

    /// Maps seed terms to vocabulary ids. Terms missing from the vocabulary
    /// are logged and skipped.
    pub fn resolve(&self, vocab: &Vocabulary, k: usize) -> Result<ResolvedSeeds> {
        if self.topics.len() > k && self.topics[k..].iter().any(|t| !t.is_empty()) {
            return Err(Error::Argument(format!(
                "seed lists name {} topics but K = {k}",
                self.topics.len()
            )));
        }
        let mut designated = vec![None; vocab.len()];
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        let mut ignored = Vec::new();
        for (topic, terms) in self.topics.iter().enumerate() {
            for term in terms {
                if let Some(prev) = owner.insert(term.as_str(), topic) {
                    if prev != topic {
                        return Err(Error::Argument(format!(
                            "seed term `{term}` assigned to topics {prev} and {topic}"
                        )));
                    }
                }
                match vocab.id(term) {
                    Some(id) => designated[id as usize] = Some(topic as u32),
                    None => {
                        log::warn!("seed term `{term}` is not in the vocabulary; ignored");
                        ignored.push(term.clone());
                    }
                }
            }
        }
        Ok(ResolvedSeeds {
            spec: self.truncated(k),
            designated,
            ignored,
            vocab_fingerprint: vocab.fingerprint(),
        })
    }
}

/// Seed words bound to a vocabulary: `designated[w]` is the topic word `w`
/// seeds, if any.
#[derive(Debug, Clone)]
pub struct ResolvedSeeds {
    spec: SeedSpec,
    designated: Vec<Option<u32>>,
    ignored: Vec<String>,
    vocab_fingerprint: String,
}

impl ResolvedSeeds {
    pub fn unseeded(vocab: &Vocabulary) -> Self {
        ResolvedSeeds {
            spec: SeedSpec::none(),
            designated: vec![None; vocab.len()],
            ignored: Vec::new(),
            vocab_fingerprint: vocab.fingerprint(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.designated.len()
    }

    pub fn topic_of(&self, word: u32) -> Option<usize> {
        self.designated.get(word as usize).copied().flatten().map(|t| t as usize)
    }

    pub fn ignored(&self) -> &[String] {
        &self.ignored
    }

    pub fn spec(&self) -> &SeedSpec {
        &self.spec
    }

    pub fn vocab_fingerprint(&self) -> &str {
        &self.vocab_fingerprint
    }
}

/// Topic-word Dirichlet prior with seed boosting.
#[derive(Debug, Clone)]
pub struct WordPrior {
    beta: f64,
    boosted: f64,
    designated: Vec<Option<u32>>,
    beta_sum: Vec<f64>,
}

impl WordPrior {
    pub fn new(hyper: &Hyperparams, seeds: &ResolvedSeeds) -> Self {
        let v = seeds.vocab_size();
        let boosted = hyper.beta * hyper.seed_boost;
        let mut beta_sum = vec![v as f64 * hyper.beta; hyper.k];
        for t in seeds.designated.iter().flatten() {
            if let Some(s) = beta_sum.get_mut(*t as usize) {
                *s += boosted - hyper.beta;
            }
        }
        WordPrior {
            beta: hyper.beta,
            boosted,
            designated: seeds.designated.clone(),
            beta_sum,
        }
    }

    #[inline]
    pub fn beta(&self, k: usize, w: usize) -> f64 {
        match self.designated[w] {
            Some(t) if t as usize == k => self.boosted,
            _ => self.beta,
        }
    }

    /// Σ_w beta_kw.
    pub fn beta_sum(&self, k: usize) -> f64 {
        self.beta_sum[k]
    }
}

/// Collapsed Gibbs sampler state: assignments plus their sufficient statistics.
#[derive(Debug, Clone)]
pub struct GibbsState {
    k: usize,
    v: usize,
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    ndk: Vec<u32>,
    nkw: Vec<u32>,
    nk: Vec<u32>,
    rng: Rng,
    scratch: Vec<f64>,
}

/// Seeds each token: seed words go to their designated topic, the rest to a
/// uniformly random topic.
pub fn init_state(
    corpus: &[TokenizedDoc],
    hyper: &Hyperparams,
    seeds: &ResolvedSeeds,
    seed: u64,
) -> Result<GibbsState> {
    GibbsState::init(corpus, hyper, seeds, seed)
}

impl GibbsState {
    pub fn init(
        corpus: &[TokenizedDoc],
        hyper: &Hyperparams,
        seeds: &ResolvedSeeds,
        seed: u64,
    ) -> Result<Self> {
        let k = hyper.k;
        if k == 0 {
            return Err(Error::Argument("topic count K must be ≥ 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Argument("cannot fit a topic model to an empty corpus".into()));
        }
        let v = seeds.vocab_size();
        for doc in corpus {
            if let Some(&bad) = doc.token_ids.iter().find(|&&w| w as usize >= v) {
                return Err(Error::Argument(format!(
                    "document `{}` has token id {bad} ≥ V = {v}",
                    doc.source_id
                )));
            }
        }

        let mut rng = rng_from(seed);
        let d = corpus.len();
        let mut state = GibbsState {
            k,
            v,
            docs: corpus.iter().map(|doc| doc.token_ids.clone()).collect(),
            z: Vec::with_capacity(d),
            ndk: vec![0; d * k],
            nkw: vec![0; k * v],
            nk: vec![0; k],
            rng: rng.clone(),
            scratch: vec![0.0; k],
        };
        for (di, doc) in corpus.iter().enumerate() {
            let mut zd = Vec::with_capacity(doc.len());
            for &w in &doc.token_ids {
                let topic = match seeds.topic_of(w) {
                    Some(t) if t < k => t,
                    _ => rng.gen_range(0..k),
                };
                zd.push(topic as u32);
                state.ndk[di * k + topic] += 1;
                state.nkw[topic * v + w as usize] += 1;
                state.nk[topic] += 1;
            }
            state.z.push(zd);
        }
        state.rng = rng;
        Ok(state)
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn docs(&self) -> &[Vec<u32>] {
        &self.docs
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    pub fn doc_topic_count(&self, d: usize, k: usize) -> u32 {
        self.ndk[d * self.k + k]
    }

    pub fn topic_word_count(&self, k: usize, w: usize) -> u32 {
        self.nkw[k * self.v + w]
    }

    pub fn topic_count(&self, k: usize) -> u32 {
        self.nk[k]
    }

    /// Normalised conditional for token `i` of document `d`, excluding the
    /// token's own assignment from the counts.
    pub fn conditional(&self, d: usize, i: usize, alpha: f64, prior: &WordPrior) -> Vec<f64> {
        let w = self.docs[d][i] as usize;
        let current = self.z[d][i] as usize;
        let mut p: Vec<f64> = (0..self.k)
            .map(|k| {
                let own = u32::from(k == current);
                let ndk = f64::from(self.ndk[d * self.k + k] - own);
                let nkw = f64::from(self.nkw[k * self.v + w] - own);
                let nk = f64::from(self.nk[k] - own);
                (ndk + alpha) * (nkw + prior.beta(k, w)) / (nk + prior.beta_sum(k))
            })
            .collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        p
    }

    /// One pass over all tokens in document order.
    pub fn sweep(&mut self, alpha: f64, prior: &WordPrior) {
        self.sweep_observed(alpha, prior, |_| {});
    }

    /// Like [`GibbsState::sweep`], handing every normalised sampling
    /// distribution to `observe` before the draw.
    pub fn sweep_observed(&mut self, alpha: f64, prior: &WordPrior, mut observe: impl FnMut(&[f64])) {
        let (k_count, v) = (self.k, self.v);
        if k_count == 1 {
            return;
        }
        let mut p = std::mem::take(&mut self.scratch);
        for d in 0..self.docs.len() {
            let row = d * k_count;
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i] as usize;
                let old = self.z[d][i] as usize;
                self.ndk[row + old] -= 1;
                self.nkw[old * v + w] -= 1;
                self.nk[old] -= 1;

                let mut total = 0.0;
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = (f64::from(self.ndk[row + k]) + alpha)
                        * (f64::from(self.nkw[k * v + w]) + prior.beta(k, w))
                        / (f64::from(self.nk[k]) + prior.beta_sum(k));
                    total += *pk;
                }
                p.iter_mut().for_each(|x| *x /= total);
                observe(&p);

                let new = draw(&p, self.rng.gen::<f64>());
                self.z[d][i] = new as u32;
                self.ndk[row + new] += 1;
                self.nkw[new * v + w] += 1;
                self.nk[new] += 1;
            }
        }
        self.scratch = p;
    }

    /// Posterior-mean φ for the current assignments.
    pub fn phi(&self, prior: &WordPrior) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|k| {
                let denom = f64::from(self.nk[k]) + prior.beta_sum(k);
                (0..self.v)
                    .map(|w| (f64::from(self.nkw[k * self.v + w]) + prior.beta(k, w)) / denom)
                    .collect()
            })
            .collect()
    }

    /// Posterior-mean θ for the current assignments.
    pub fn theta(&self, alpha: f64) -> Vec<Vec<f64>> {
        let ka = self.k as f64 * alpha;
        (0..self.docs.len())
            .map(|d| {
                let n = self.docs[d].len() as f64;
                (0..self.k)
                    .map(|k| (f64::from(self.ndk[d * self.k + k]) + alpha) / (n + ka))
                    .collect()
            })
            .collect()
    }
}

/// Inverse-CDF draw from a normalised distribution; `u` in [0, 1).
fn draw(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the accumulated mass: take the last live topic
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Trained topic model bound to the vocabulary it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub hyper: Hyperparams,
    pub schedule: Schedule,
    pub train_seed: u64,
    pub vocab_fingerprint: String,
    pub seeds: SeedSpec,
    /// K×V topic-word distribution.
    pub phi: Vec<Vec<f64>>,
    /// D×K document-topic distribution of the training documents.
    pub theta: Vec<Vec<f64>>,
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.hyper.k
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.vocab_fingerprint {
            return Err(Error::Fingerprint {
                expected: self.vocab_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("topic model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Loads a model and checks it against `vocab`.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TopicModel = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.check_vocab(vocab)?;
        if model.vocab_size() != vocab.len() || model.phi.len() != model.k() {
            return Err(Error::Validation(format!(
                "{}: phi shape does not match K = {} and V = {}",
                path.display(),
                model.k(),
                vocab.len()
            )));
        }
        Ok(model)
    }
}

/// Runs `schedule.iters` sweeps after initialisation and averages φ and θ over
/// every `sample_lag`-th post-burn-in sweep.
pub fn run_gibbs(
    corpus: &[TokenizedDoc],
    hyper: &Hyperparams,
    seeds: &ResolvedSeeds,
    schedule: &Schedule,
    seed: u64,
) -> Result<TopicModel> {
    let schedule = Schedule::new(schedule.iters, schedule.burnin, schedule.sample_lag)?;
    let prior = WordPrior::new(hyper, seeds);
    let mut state = GibbsState::init(corpus, hyper, seeds, seed)?;

    let (k, v, d) = (hyper.k, state.v, state.docs.len());
    let mut phi_acc = vec![vec![0.0; v]; k];
    let mut theta_acc = vec![vec![0.0; k]; d];
    let mut samples = 0usize;
    {
        let mut accumulate = |state: &GibbsState| {
            add_into(&mut phi_acc, &state.phi(&prior));
            add_into(&mut theta_acc, &state.theta(hyper.alpha));
            samples += 1;
        };
        let mut sampled = false;
        for sweep in 1..=schedule.iters {
            state.sweep(hyper.alpha, &prior);
            if schedule.is_sample(sweep) {
                accumulate(&state);
                sampled = true;
            }
        }
        if !sampled {
            accumulate(&state);
        }
    }

    let scale = 1.0 / samples as f64;
    let normalise = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        m.into_iter()
            .map(|row| {
                let row: Vec<f64> = row.into_iter().map(|x| x * scale).collect();
                let s: f64 = row.iter().sum();
                row.into_iter().map(|x| x / s).collect()
            })
            .collect()
    };

    Ok(TopicModel {
        hyper: *hyper,
        schedule,
        train_seed: seed,
        vocab_fingerprint: seeds.vocab_fingerprint().to_owned(),
        seeds: seeds.spec().clone(),
        phi: normalise(phi_acc),
        theta: normalise(theta_acc),
    })
}

fn add_into(acc: &mut [Vec<f64>], m: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(m) {
        for (x, y) in a.iter_mut().zip(r) {
            *x += y;
        }
    }
}

/// Default number of fold-in sweeps per held-out document.
pub const DEFAULT_FOLD_IN_ITERS: usize = 50;

/// Topic proportions of an unseen document with φ held fixed. θ is averaged
/// over the second half of the sweeps. Empty documents get the uniform vector.
pub fn infer_theta(model: &TopicModel, doc: &TokenizedDoc, iters: usize, seed: u64) -> Result<Vec<f64>> {
    let k = model.k();
    let v = model.vocab_size();
    if let Some(&bad) = doc.token_ids.iter().find(|&&w| w as usize >= v) {
        return Err(Error::Argument(format!(
            "document `{}` has token id {bad} ≥ V = {v}",
            doc.source_id
        )));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    if doc.is_empty() {
        return Ok(vec![1.0 / k as f64; k]);
    }

    let alpha = model.hyper.alpha;
    let n = doc.len() as f64;
    let mut rng = rng_from(seed);
    let mut z: Vec<usize> = (0..doc.len()).map(|_| rng.gen_range(0..k)).collect();
    let mut ndk = vec![0u32; k];
    for &t in &z {
        ndk[t] += 1;
    }
    let estimate = |ndk: &[u32]| -> Vec<f64> {
        ndk.iter()
            .map(|&c| (f64::from(c) + alpha) / (n + k as f64 * alpha))
            .collect()
    };

    let keep_from = iters / 2;
    let mut acc = vec![0.0; k];
    let mut samples = 0usize;
    let mut p = vec![0.0; k];
    for it in 0..iters {
        for (i, &w) in doc.token_ids.iter().enumerate() {
            ndk[z[i]] -= 1;
            let mut total = 0.0;
            for (t, pt) in p.iter_mut().enumerate() {
                *pt = (f64::from(ndk[t]) + alpha) * model.phi[t][w as usize];
                total += *pt;
            }
            p.iter_mut().for_each(|x| *x /= total);
            let t = draw(&p, rng.gen::<f64>());
            z[i] = t;
            ndk[t] += 1;
        }
        if it >= keep_from {
            for (a, e) in acc.iter_mut().zip(estimate(&ndk)) {
                *a += e;
            }
            samples += 1;
        }
    }
    if samples == 0 {
        return Ok(estimate(&ndk));
    }
    let s: f64 = acc.iter().sum();
    Ok(acc.into_iter().map(|x| x / s).collect())
}

/// Fold-in for many documents; document `i` uses seed `mix(seed, i)`.
pub fn infer_thetas(
    model: &TopicModel,
    docs: &[TokenizedDoc],
    iters: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    docs.par_iter()
        .enumerate()
        .map(|(i, d)| infer_theta(model, d, iters, mix(seed, i as u64)))
        .collect()
}

/// exp(−Σ log p(w) / N) with p(w) = Σ_k θ_dk φ_kw. Empty documents contribute
/// nothing.
pub fn perplexity(phi: &[Vec<f64>], thetas: &[Vec<f64>], docs: &[TokenizedDoc]) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Argument("perplexity needs at least one held-out document".into()));
    }
    if thetas.len() != docs.len() {
        return Err(Error::Argument(format!(
            "{} θ rows for {} documents",
            thetas.len(),
            docs.len()
        )));
    }
    let v = phi.first().map_or(0, Vec::len);
    let mut log_lik = 0.0;
    let mut n_tokens = 0usize;
    for (doc, theta) in docs.iter().zip(thetas) {
        if theta.len() != phi.len() {
            return Err(Error::Argument("θ length differs from the topic count".into()));
        }
        for &w in &doc.token_ids {
            let w = w as usize;
            if w >= v {
                return Err(Error::Argument(format!("token id {w} ≥ V = {v}")));
            }
            let p: f64 = theta.iter().zip(phi).map(|(t, row)| t * row[w]).sum();
            log_lik += p.ln();
            n_tokens += 1;
        }
    }
    if n_tokens == 0 {
        return Err(Error::Argument("held-out documents contain no tokens".into()));
    }
    Ok((-log_lik / n_tokens as f64).exp())
}

/// Held-out perplexity with fold-in θ for every document.
pub fn heldout_perplexity(
    model: &TopicModel,
    heldout: &[TokenizedDoc],
    fold_in_iters: usize,
    seed: u64,
) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::Argument("perplexity needs at least one held-out document".into()));
    }
    let thetas = infer_thetas(model, heldout, fold_in_iters, seed)?;
    perplexity(&model.phi, &thetas, heldout)
}

/// How alpha is set for a given K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// alpha = c / K
    Scaled(f64),
    Fixed(f64),
}

impl AlphaRule {
    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            AlphaRule::Scaled(c) => c / k as f64,
            AlphaRule::Fixed(a) => a,
        }
    }
}

/// Everything needed to fit a model once K is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub alpha: AlphaRule,
    pub beta: f64,
    pub seed_boost: f64,
    pub schedule: Schedule,
    pub fold_in_iters: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            alpha: AlphaRule::Scaled(50.0),
            beta: 0.01,
            seed_boost: 50.0,
            schedule: Schedule::default(),
            fold_in_iters: DEFAULT_FOLD_IN_ITERS,
        }
    }
}

impl FitSettings {
    pub fn hyper(&self, k: usize) -> Result<Hyperparams> {
        Hyperparams::new(k, self.alpha.alpha(k), self.beta, self.seed_boost)
    }

    /// Fits a K-topic model; seed lists beyond K are dropped.
    pub fn fit(
        &self,
        corpus: &[TokenizedDoc],
        vocab: &Vocabulary,
        seeds: &SeedSpec,
        k: usize,
        seed: u64,
    ) -> Result<TopicModel> {
        let hyper = self.hyper(k)?;
        let resolved = seeds.truncated(k).resolve(vocab, k)?;
        run_gibbs(corpus, &hyper, &resolved, &self.schedule, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub chosen: usize,
    /// (K, held-out perplexity) in ascending K. Empty when only one candidate
    /// was given.
    pub table: Vec<(usize, f64)>,
}

/// Fits one model per candidate K on a training split and picks the lowest
/// held-out perplexity; ties go to the smaller K. Candidate `i` (in ascending
/// K order) is fitted with seed `mix(seed, i + 1)`, the split uses
/// `mix(seed, 0)`.
pub fn select_k(
    corpus: &[TokenizedDoc],
    vocab: &Vocabulary,
    seeds: &SeedSpec,
    candidates: &[usize],
    heldout_fraction: f64,
    settings: &FitSettings,
    seed: u64,
) -> Result<KSelection> {
    let mut ks: Vec<usize> = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    match ks.as_slice() {
        [] => return Err(Error::Argument("no candidate K values".into())),
        [0, ..] => return Err(Error::Argument("candidate K must be ≥ 1".into())),
        [only] => {
            return Ok(KSelection {
                chosen: *only,
                table: Vec::new(),
            })
        }
        _ => {}
    }
    if !(heldout_fraction > 0.0 && heldout_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "held-out fraction must lie in (0, 1), got {heldout_fraction}"
        )));
    }
    let (train, heldout) = heldout_split(corpus, heldout_fraction, mix(seed, 0))?;

    let table: Vec<(usize, f64)> = ks
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let task = mix(seed, i as u64 + 1);
            let model = settings.fit(&train, vocab, seeds, k, task)?;
            let ppl = heldout_perplexity(&model, &heldout, settings.fold_in_iters, mix(task, 0))?;
            log::info!("K = {k}: held-out perplexity {ppl:.4}");
            Ok((k, ppl))
        })
        .collect::<Result<_>>()?;

    // within 1e-9 relative counts as a tie, which the smaller K wins
    let mut chosen = table[0];
    for &(k, ppl) in &table[1..] {
        if ppl < chosen.1 * (1.0 - 1e-9) {
            chosen = (k, ppl);
        }
    }
    Ok(KSelection {
        chosen: chosen.0,
        table,
    })
}

/// Deterministic shuffled split of documents into (train, held-out).
pub fn heldout_split(
    corpus: &[TokenizedDoc],
    heldout_fraction: f64,
    seed: u64,
) -> Result<(Vec<TokenizedDoc>, Vec<TokenizedDoc>)> {
    let n = corpus.len();
    let n_held = ((n as f64 * heldout_fraction).round() as usize).max(1);
    if n < 2 || n_held >= n {
        return Err(Error::Argument(format!(
            "{n} documents are too few for a {heldout_fraction} held-out split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let (held, train) = order.split_at(n_held);
    let mut held = held.to_vec();
    let mut train = train.to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok((
        train.iter().map(|&i| corpus[i].clone()).collect(),
        held.iter().map(|&i| corpus[i].clone()).collect(),
    ))
}

/// The `n` most probable terms of topic `k`, ties broken lexicographically.
pub fn top_words(model: &TopicModel, k: usize, n: usize, vocab: &Vocabulary) -> Result<Vec<(String, f64)>> {
    model.check_vocab(vocab)?;
    if k >= model.k() {
        return Err(Error::Argument(format!("topic index {k} ≥ K = {}", model.k())));
    }
    if n > vocab.len() {
        return Err(Error::Argument(format!("asked for {n} words, V = {}", vocab.len())));
    }
    let mut ranked: Vec<(&str, f64)> = vocab
        .terms()
        .iter()
        .zip(&model.phi[k])
        .map(|(t, &p)| (t.as_str(), p))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .take(n)
        .map(|(t, p)| (t.to_owned(), p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_terms((0..n).map(|i| format!("t{i:02}")).collect()).unwrap()
    }

    fn doc(ids: &[u32]) -> TokenizedDoc {
        TokenizedDoc::new(ids.to_vec(), "d", Channel::Campaign)
    }

    #[test]
    fn hyperparams_validate() {
        assert!(Hyperparams::new(0, 1.0, 0.1, 1.0).is_err());
        assert!(Hyperparams::new(2, 0.0, 0.1, 1.0).is_err());
        assert!(Hyperparams::new(2, 1.0, -0.1, 1.0).is_err());
        assert!(Hyperparams::new(2, 1.0, 0.1, 0.5).is_err());
        let h = Hyperparams::defaults(2).unwrap();
        assert_eq!((h.alpha, h.beta, h.seed_boost), (25.0, 0.01, 50.0));
    }

    #[test]
    fn schedule_validates() {
        assert!(Schedule::new(10, 10, 1).is_err());
        assert!(Schedule::new(10, 5, 0).is_err());
        let s = Schedule::new(10, 4, 3).unwrap();
        let sampled: Vec<usize> = (1..=10).filter(|&i| s.is_sample(i)).collect();
        assert_eq!(sampled, vec![7, 10]);
    }

    #[test]
    fn single_topic_assigns_everything_to_zero() {
        let v = vocab(5);
        let corpus = vec![doc(&[0, 1, 2]), doc(&[3, 4])];
        let h = Hyperparams::new(1, 1.0, 0.1, 1.0).unwrap();
        let mut s = init_state(&corpus, &h, &ResolvedSeeds::unseeded(&v), 1).unwrap();
        assert!(s.assignments().iter().flatten().all(|&z| z == 0));
        assert_eq!(s.doc_topic_count(0, 0), 3);
        assert_eq!(s.doc_topic_count(1, 0), 2);
        let before = s.assignments().to_vec();
        s.sweep(h.alpha, &WordPrior::new(&h, &ResolvedSeeds::unseeded(&v)));
        assert_eq!(s.assignments(), &before[..]);
    }

    #[test]
    fn seed_word_starts_in_its_topic() {
        let v = vocab(4);
        let seeds = SeedSpec::new(vec![vec![], vec![], vec!["t01".into()]])
            .resolve(&v, 3)
            .unwrap();
        let h = Hyperparams::new(3, 1.0, 0.1, 5.0).unwrap();
        let s = init_state(&[doc(&[1])], &h, &seeds, 99).unwrap();
        assert_eq!(s.assignments(), &[vec![2u32]]);
    }

    #[test]
    fn seed_resolution_rules() {
        let v = vocab(3);
        let conflicting = SeedSpec::new(vec![vec!["t00".into()], vec!["t00".into()]]);
        assert!(conflicting.resolve(&v, 2).is_err());
        let too_many = SeedSpec::new(vec![vec![], vec![], vec!["t00".into()]]);
        assert!(too_many.resolve(&v, 2).is_err());
        let missing = SeedSpec::new(vec![vec!["nope".into(), "t02".into()]]);
        let r = missing.resolve(&v, 2).unwrap();
        assert_eq!(r.ignored(), &["nope".to_string()]);
        assert_eq!(r.topic_of(2), Some(0));
        assert_eq!(r.topic_of(0), None);
    }

    #[test]
    fn init_rejects_bad_input() {
        let v = vocab(2);
        let h = Hyperparams::new(2, 1.0, 0.1, 1.0).unwrap();
        let seeds = ResolvedSeeds::unseeded(&v);
        assert!(init_state(&[], &h, &seeds, 0).is_err());
        assert!(init_state(&[doc(&[2])], &h, &seeds, 0).is_err());
    }

    #[test]
    fn lone_token_conditional_is_uniform() {
        // With the token removed every count is zero:
        // p(k) ∝ (0 + 1)(0 + 1)/(0 + V·1), identical for both topics.
        let v = vocab(3);
        let h = Hyperparams::new(2, 1.0, 1.0, 1.0).unwrap();
        let seeds = ResolvedSeeds::unseeded(&v);
        let s = init_state(&[doc(&[1])], &h, &seeds, 5).unwrap();
        let p = s.conditional(0, 0, h.alpha, &WordPrior::new(&h, &seeds));
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn boosted_prior_sums() {
        let v = vocab(4);
        let h = Hyperparams::new(2, 1.0, 0.5, 3.0).unwrap();
        let seeds = SeedSpec::new(vec![vec!["t00".into(), "t03".into()]]).resolve(&v, 2).unwrap();
        let prior = WordPrior::new(&h, &seeds);
        assert_eq!(prior.beta(0, 0), 1.5);
        assert_eq!(prior.beta(1, 0), 0.5);
        assert!((prior.beta_sum(0) - (2.0 * 0.5 + 2.0 * 1.5)).abs() < 1e-12);
        assert!((prior.beta_sum(1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_topic_closed_form() {
        let v = vocab(4);
        let corpus = vec![doc(&[0, 0, 1]), doc(&[0, 2])];
        let h = Hyperparams::new(1, 0.7, 0.1, 1.0).unwrap();
        let m = run_gibbs(&corpus, &h, &ResolvedSeeds::unseeded(&v), &Schedule::new(4, 1, 1).unwrap(), 3)
            .unwrap();
        let counts = [3.0, 1.0, 1.0, 0.0];
        for (w, c) in counts.iter().enumerate() {
            let expected = (c + 0.1) / (5.0 + 4.0 * 0.1);
            assert!((m.phi[0][w] - expected).abs() < 1e-12);
        }
        assert!(m.theta.iter().all(|r| (r[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn run_gibbs_is_deterministic() {
        let v = vocab(6);
        let corpus: Vec<TokenizedDoc> = (0..8u32).map(|i| doc(&[i % 6, (i * 5 + 1) % 6, 2, 3])).collect();
        let h = Hyperparams::new(3, 0.5, 0.1, 1.0).unwrap();
        let sched = Schedule::new(30, 10, 5).unwrap();
        let seeds = ResolvedSeeds::unseeded(&v);
        let a = run_gibbs(&corpus, &h, &seeds, &sched, 17).unwrap();
        let b = run_gibbs(&corpus, &h, &seeds, &sched, 17).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = run_gibbs(&corpus, &h, &seeds, &sched, 18).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    fn uniform_model(k: usize, v: usize) -> TopicModel {
        TopicModel {
            hyper: Hyperparams::new(k, 1.0, 0.1, 1.0).unwrap(),
            schedule: Schedule::default(),
            train_seed: 0,
            vocab_fingerprint: vocab(v).fingerprint(),
            seeds: SeedSpec::none(),
            phi: vec![vec![1.0 / v as f64; v]; k],
            theta: vec![],
        }
    }

    #[test]
    fn uniform_model_perplexity_is_v() {
        let m = uniform_model(3, 50);
        let docs = vec![doc(&[0, 7, 49, 3]), doc(&[]), doc(&[12, 12])];
        let ppl = heldout_perplexity(&m, &docs, 20, 1).unwrap();
        assert!((ppl - 50.0).abs() < 1e-9, "{ppl}");
        let m1 = uniform_model(2, 1);
        assert!((heldout_perplexity(&m1, &[doc(&[0, 0, 0])], 5, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_argument_errors() {
        let m = uniform_model(2, 5);
        assert!(heldout_perplexity(&m, &[], 5, 0).is_err());
        assert!(heldout_perplexity(&m, &[doc(&[])], 5, 0).is_err());
        assert!(perplexity(&m.phi, &[vec![0.5, 0.5]], &[doc(&[9])]).is_err());
    }

    #[test]
    fn fold_in_edge_cases() {
        let m1 = uniform_model(1, 5);
        assert_eq!(infer_theta(&m1, &doc(&[1, 2]), 10, 0).unwrap(), vec![1.0]);
        let m4 = uniform_model(4, 5);
        assert_eq!(infer_theta(&m4, &doc(&[]), 10, 0).unwrap(), vec![0.25; 4]);
        let t = infer_theta(&m4, &doc(&[0, 1, 2, 3, 4]), 10, 7).unwrap();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(t, infer_theta(&m4, &doc(&[0, 1, 2, 3, 4]), 10, 7).unwrap());
    }

    #[test]
    fn select_k_singleton_and_tie() {
        let v = vocab(1);
        let corpus: Vec<TokenizedDoc> = (0..10).map(|_| doc(&[0, 0, 0])).collect();
        let settings = FitSettings {
            schedule: Schedule::new(6, 2, 2).unwrap(),
            fold_in_iters: 4,
            ..FitSettings::default()
        };
        let sel = select_k(&corpus, &v, &SeedSpec::none(), &[3], 0.2, &settings, 1).unwrap();
        assert_eq!(sel.chosen, 3);
        assert!(sel.table.is_empty());

        // one repeated word: every model assigns probability 1, perplexity 1
        let sel = select_k(&corpus, &v, &SeedSpec::none(), &[4, 2, 3], 0.2, &settings, 1).unwrap();
        assert_eq!(sel.chosen, 2);
        assert!(sel.table.iter().all(|&(_, p)| (p - 1.0).abs() < 1e-12));
        assert!(select_k(&corpus, &v, &SeedSpec::none(), &[], 0.2, &settings, 1).is_err());
    }

    #[test]
    fn top_words_order_and_errors() {
        let v = vocab(4);
        let mut m = uniform_model(2, 4);
        m.phi[0] = vec![0.1, 0.4, 0.1, 0.4];
        let top = top_words(&m, 0, 3, &v).unwrap();
        let names: Vec<&str> = top.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, vec!["t01", "t03", "t00"]);
        assert!(top_words(&m, 2, 1, &v).is_err());
        assert!(top_words(&m, 0, 5, &v).is_err());
        assert!(top_words(&m, 0, 1, &vocab(5)).is_err());
        let all = top_words(&m, 1, 4, &v).unwrap();
        let mut names: Vec<String> = all.into_iter().map(|(t, _)| t).collect();
        names.sort();
        assert_eq!(names, v.terms());
    }

    #[test]
    fn model_file_checks_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = uniform_model(2, 4);
        m.save(&path).unwrap();
        assert_eq!(TopicModel::load(&path, &vocab(4)).unwrap(), m);
        let other = Vocabulary::from_terms(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        assert!(matches!(TopicModel::load(&path, &other), Err(Error::Fingerprint { .. })));
    }
}
