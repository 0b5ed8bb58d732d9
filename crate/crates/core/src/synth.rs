//! Synthetic data with known ground truth: planted-topic corpora and labelled
//! campaigns whose numeric and textual signal strength is controlled.

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Campaign, CampaignSet};
use crate::error::{Error, Result};
use crate::rng::{mix, rng_from, Rng};
use crate::textprep::{Channel, TokenizedDoc, Vocabulary};
use crate::topicmodel::SeedSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub k: usize,
    pub v: usize,
    pub d: usize,
    pub doc_len_mean: f64,
    /// Symmetric Dirichlet concentration of the per-document topic mix.
    pub alpha_true: f64,
    /// Symmetric Dirichlet concentration of each topic's word distribution;
    /// smaller is sharper.
    pub topic_sharpness: f64,
    pub seed: u64,
    /// Terms injected into the vocabulary; list `k` receives the largest
    /// probabilities of topic `k`.
    #[serde(default)]
    pub seed_terms: Vec<Vec<String>>,
}

impl PlantedSpec {
    /// K = 2, V = 200, D = 400, 60 tokens per document, topic sharpness 0.05,
    /// seed 7, with the campaign-channel seed words injected.
    pub fn reference() -> Self {
        PlantedSpec {
            k: 2,
            v: 200,
            d: 400,
            doc_len_mean: 60.0,
            alpha_true: 0.2,
            topic_sharpness: 0.05,
            seed: 7,
            seed_terms: SeedSpec::default_for(Channel::Campaign).topics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.d < 1 || self.v < self.k {
            return Err(Error::Argument(format!(
                "planted spec needs K ≥ 1, V ≥ K, D ≥ 1 (got K={}, V={}, D={})",
                self.k, self.v, self.d
            )));
        }
        if !(self.doc_len_mean > 0.0 && self.alpha_true > 0.0 && self.topic_sharpness > 0.0) {
            return Err(Error::Argument(
                "doc_len_mean, alpha_true and topic_sharpness must be positive".into(),
            ));
        }
        if self.seed_terms.len() > self.k {
            return Err(Error::Argument("more seed lists than topics".into()));
        }
        let n_seed: usize = self.seed_terms.iter().map(Vec::len).sum();
        if n_seed > self.v {
            return Err(Error::Argument("more seed terms than vocabulary slots".into()));
        }
        Ok(())
    }

    /// Seed terms first (topic order), then `w000`, `w001`, … up to V terms.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let width = ((self.v.max(2) - 1) as f64).log10().floor() as usize + 1;
        let width = width.max(3);
        let mut terms: Vec<String> = self.seed_terms.iter().flatten().cloned().collect();
        let mut i = 0;
        while terms.len() < self.v {
            let t = format!("w{i:0width$}");
            if !terms.contains(&t) {
                terms.push(t);
            }
            i += 1;
        }
        Vocabulary::from_terms(terms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCorpus {
    pub docs: Vec<TokenizedDoc>,
    pub true_phi: Vec<Vec<f64>>,
    pub true_theta: Vec<Vec<f64>>,
    pub spec: PlantedSpec,
    #[serde(skip)]
    vocab: Option<Vocabulary>,
}

impl PlantedCorpus {
    pub fn vocabulary(&self) -> Vocabulary {
        self.vocab
            .clone()
            .unwrap_or_else(|| self.spec.vocabulary().expect("validated spec"))
    }
}

fn dirichlet(rng: &mut Rng, alpha: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    for _ in 0..64 {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 && s.is_finite() {
            return draws.into_iter().map(|x| x / s).collect();
        }
    }
    // every gamma draw underflowed: all mass on one coordinate
    let mut out = vec![0.0; n];
    out[rng.gen_range(0..n)] = 1.0;
    out
}

/// Moves the largest entries of `row` onto the `targets` positions, in order.
fn promote(row: &mut [f64], targets: &[usize]) {
    let mut fixed = vec![false; row.len()];
    for &t in targets {
        let best = (0..row.len())
            .filter(|&j| !fixed[j])
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then_with(|| b.cmp(&a)))
            .expect("more positions than targets");
        row.swap(t, best);
        fixed[t] = true;
    }
}

struct TopicSampler {
    words: Vec<WeightedIndex<f64>>,
}

impl TopicSampler {
    fn new(phi: &[Vec<f64>]) -> Self {
        TopicSampler {
            words: phi
                .iter()
                .map(|row| WeightedIndex::new(row).expect("row has positive mass"))
                .collect(),
        }
    }

    fn document(&self, rng: &mut Rng, theta: &[f64], len: usize) -> Vec<u32> {
        let topics = WeightedIndex::new(theta).expect("theta has positive mass");
        (0..len)
            .map(|_| {
                let k = topics.sample(rng);
                self.words[k].sample(rng) as u32
            })
            .collect()
    }
}

fn doc_length(rng: &mut Rng, mean: f64) -> usize {
    let p = Poisson::new(mean).expect("positive mean");
    (p.sample(rng) as usize).max(1)
}

fn draw_phi(spec: &PlantedSpec, vocab: &Vocabulary, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..spec.k)
        .map(|k| {
            let mut row = dirichlet(rng, spec.topic_sharpness, spec.v);
            if let Some(terms) = spec.seed_terms.get(k) {
                let targets: Vec<usize> = terms
                    .iter()
                    .filter_map(|t| vocab.id(t).map(|i| i as usize))
                    .collect();
                promote(&mut row, &targets);
            }
            row
        })
        .collect()
}

/// Draws φ rows from Dirichlet(topic_sharpness), θ rows from
/// Dirichlet(alpha_true), Poisson document lengths (at least one token), and
/// tokens topic-first. Deterministic in `spec.seed`.
pub fn generate_planted_corpus(spec: &PlantedSpec) -> Result<PlantedCorpus> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let mut rng = rng_from(spec.seed);
    let true_phi = draw_phi(spec, &vocab, &mut rng);
    let sampler = TopicSampler::new(&true_phi);
    let mut true_theta = Vec::with_capacity(spec.d);
    let mut docs = Vec::with_capacity(spec.d);
    for d in 0..spec.d {
        let theta = dirichlet(&mut rng, spec.alpha_true, spec.k);
        let len = doc_length(&mut rng, spec.doc_len_mean);
        let ids = sampler.document(&mut rng, &theta, len);
        docs.push(TokenizedDoc::new(ids, format!("doc{d:05}"), Channel::Campaign));
        true_theta.push(theta);
    }
    Ok(PlantedCorpus {
        docs,
        true_phi,
        true_theta,
        spec: spec.clone(),
        vocab: Some(vocab),
    })
}

/// Ids of the `n` largest entries, ties broken by lower id.
pub fn top_ids(row: &[f64], n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| a.cmp(&b)));
    ids.truncate(n);
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `permutation[true_topic]` is the matched estimated topic.
    pub permutation: Vec<usize>,
    /// Top-n word-set overlap (|∩| / n) of each matched pair, by true topic.
    pub scores: Vec<f64>,
}

pub const ALIGN_TOP_N: usize = 10;

/// Greedy matching on top-10 word-set overlap: repeatedly pairs the unmatched
/// (true, estimated) topics with the largest overlap, ties going to the lower
/// true index, then the lower estimated index.
pub fn align_topics(true_phi: &[Vec<f64>], est_phi: &[Vec<f64>]) -> Result<Alignment> {
    align_topics_n(true_phi, est_phi, ALIGN_TOP_N)
}

pub fn align_topics_n(true_phi: &[Vec<f64>], est_phi: &[Vec<f64>], n: usize) -> Result<Alignment> {
    let k = true_phi.len();
    let v = true_phi.first().map_or(0, Vec::len);
    if est_phi.len() != k || true_phi.iter().chain(est_phi).any(|r| r.len() != v) {
        return Err(Error::Argument("true and estimated φ differ in shape".into()));
    }
    let n = n.min(v);
    let tops_true: Vec<Vec<usize>> = true_phi.iter().map(|r| top_ids(r, n)).collect();
    let tops_est: Vec<Vec<usize>> = est_phi.iter().map(|r| top_ids(r, n)).collect();
    let overlap: Vec<Vec<usize>> = tops_true
        .iter()
        .map(|t| {
            tops_est
                .iter()
                .map(|e| t.iter().filter(|w| e.contains(w)).count())
                .collect()
        })
        .collect();

    let mut permutation = vec![usize::MAX; k];
    let mut scores = vec![0.0; k];
    let mut est_used = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize, usize)> = None;
        for (t, row) in overlap.iter().enumerate() {
            if permutation[t] != usize::MAX {
                continue;
            }
            for (e, &o) in row.iter().enumerate() {
                if est_used[e] {
                    continue;
                }
                if best.is_none_or(|(_, _, bo)| o > bo) {
                    best = Some((t, e, o));
                }
            }
        }
        let (t, e, o) = best.expect("an unmatched pair remains");
        permutation[t] = e;
        est_used[e] = true;
        scores[t] = if n == 0 { 0.0 } else { o as f64 / n as f64 };
    }
    Ok(Alignment { permutation, scores })
}

/// Settings for a synthetic labelled campaign set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSynthSpec {
    pub n: usize,
    /// Topic structure of campaign descriptions; `d` and `seed` are ignored
    /// (one document per campaign, seeds derived from `seed` below).
    pub campaign_text: PlantedSpec,
    pub incentive_text: PlantedSpec,
    /// Distance between class means of the numeric latents, in standard
    /// deviations.
    pub class_separation: f64,
    /// Weight in [0, 1] pulling each document's topic mix toward its class
    /// topic (topic 0 for successes, topic 1 for failures).
    pub topic_shift: f64,
    pub success_fraction: f64,
    pub seed: u64,
}

impl CampaignSynthSpec {
    /// 410 campaigns, 210 successes, two topics per channel with the shipped
    /// seed words, topic shift tied to the separation (min(sep / 3, 1) / 2).
    pub fn reference(class_separation: f64, seed: u64) -> Self {
        CampaignSynthSpec {
            n: 410,
            campaign_text: PlantedSpec {
                v: 150,
                d: 410,
                doc_len_mean: 40.0,
                ..PlantedSpec::reference()
            },
            incentive_text: PlantedSpec {
                v: 80,
                d: 410,
                doc_len_mean: 20.0,
                seed_terms: SeedSpec::default_for(Channel::Incentive).topics,
                ..PlantedSpec::reference()
            },
            class_separation,
            topic_shift: default_topic_shift(class_separation),
            success_fraction: 210.0 / 410.0,
            seed,
        }
    }
}

pub fn default_topic_shift(class_separation: f64) -> f64 {
    (class_separation / 3.0).clamp(0.0, 1.0) * 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTruth {
    pub terms: Vec<String>,
    pub true_phi: Vec<Vec<f64>>,
    pub true_theta: Vec<Vec<f64>>,
}

/// Sidecar describing how a synthetic campaign set was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec: CampaignSynthSpec,
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub campaign: ChannelTruth,
    pub incentive: ChannelTruth,
    /// Direction (+1 favours success) of the class shift on each numeric latent.
    pub latent_directions: Vec<(String, f64)>,
}

/// Latent numeric drivers and the sign of their class shift.
const LATENTS: [(&str, f64); 6] = [
    ("goal_amount", -1.0),
    ("duration_days", 1.0),
    ("days_left", 1.0),
    ("n_supporters", 1.0),
    ("top_donor_share", -1.0),
    ("min_donor_share", 1.0),
];

/// Raised amounts sit within this fraction of the goal on either side, so
/// that raised ≈ supporters × mean donation says little about the label.
const RAISED_BAND: f64 = 0.02;

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Labelled campaigns: exactly ceil(n · success_fraction) successes, numeric
/// attributes drawn class-conditionally, texts from planted topics with a
/// class-dependent topic mix.
pub fn generate_campaigns(spec: &CampaignSynthSpec) -> Result<(CampaignSet, SynthTruth)> {
    if spec.n < 2 {
        return Err(Error::Argument(format!("need at least 2 campaigns, got {}", spec.n)));
    }
    if !(0.0..=1.0).contains(&spec.success_fraction) {
        return Err(Error::Argument("success_fraction must lie in [0, 1]".into()));
    }
    if !(spec.class_separation >= 0.0 && spec.class_separation.is_finite()) {
        return Err(Error::Argument("class_separation must be ≥ 0".into()));
    }
    if !(0.0..=1.0).contains(&spec.topic_shift) {
        return Err(Error::Argument("topic_shift must lie in [0, 1]".into()));
    }
    let channels = [&spec.campaign_text, &spec.incentive_text].map(|c| PlantedSpec {
        d: spec.n,
        ..c.clone()
    });
    for c in &channels {
        c.validate()?;
    }

    let mut rng = rng_from(spec.seed);
    let n_success = ((spec.n as f64 * spec.success_fraction) - 1e-9).ceil().max(0.0) as usize;
    let mut labels: Vec<u8> = (0..spec.n).map(|i| u8::from(i < n_success)).collect();
    labels.shuffle(&mut rng);

    // text channels
    let mut texts: Vec<[String; 2]> = vec![[String::new(), String::new()]; spec.n];
    let mut truths = Vec::with_capacity(2);
    for (ci, cspec) in channels.iter().enumerate() {
        let vocab = cspec.vocabulary()?;
        let mut crng = rng_from(mix(spec.seed, ci as u64 + 1));
        let phi = draw_phi(cspec, &vocab, &mut crng);
        let sampler = TopicSampler::new(&phi);
        let mut thetas = Vec::with_capacity(spec.n);
        for (i, &label) in labels.iter().enumerate() {
            let mut theta = dirichlet(&mut crng, cspec.alpha_true, cspec.k);
            if cspec.k >= 2 {
                let class_topic = if label == 1 { 0 } else { 1 };
                theta.iter_mut().for_each(|t| *t *= 1.0 - spec.topic_shift);
                theta[class_topic] += spec.topic_shift;
            }
            let len = doc_length(&mut crng, cspec.doc_len_mean);
            let words: Vec<&str> = sampler
                .document(&mut crng, &theta, len)
                .into_iter()
                .map(|id| vocab.term(id).expect("sampled id in range"))
                .collect();
            texts[i][ci] = words.join(" ");
            thetas.push(theta);
        }
        truths.push(ChannelTruth {
            terms: vocab.terms().to_vec(),
            true_phi: phi,
            true_theta: thetas,
        });
    }

    // numeric attributes
    let epoch = NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date");
    let mut campaigns = Vec::with_capacity(spec.n);
    let mut nrng = rng_from(mix(spec.seed, 0));
    for (i, &label) in labels.iter().enumerate() {
        let class_sign = if label == 1 { 0.5 } else { -0.5 };
        let mut z = [0.0; LATENTS.len()];
        for (zj, (_, dir)) in z.iter_mut().zip(LATENTS) {
            let noise: f64 = nrng.sample(StandardNormal);
            *zj = noise + dir * class_sign * spec.class_separation;
        }
        let goal = ((12_000.0 + 3_000.0 * z[0]) / 100.0).round().clamp(40.0, 200.0) * 100.0;
        let duration = (30.0 + 10.0 * z[1]).round().clamp(2.0, 90.0) as i64;
        let days_left = (6.0 + 3.0 * z[2]).round().clamp(0.0, duration as f64) as u32;
        let n_supporters = (60.0 * (0.5 * z[3]).exp()).round().clamp(2.0, 10_000.0) as u64;

        let u: f64 = nrng.gen();
        let raised = if label == 1 {
            goal + (goal * RAISED_BAND * u).round()
        } else {
            goal - (goal * RAISED_BAND * u).round().max(1.0)
        };
        let mean = raised / n_supporters as f64;
        let top = round_cents(mean + (raised - mean) * (0.05 + 0.4 * sigmoid(z[4])));
        let min = round_cents(mean * (0.05 + 0.9 * sigmoid(z[5])));

        let start = epoch + Duration::days(nrng.gen_range(0..365));
        let [campaign_text, incentive_text] = std::mem::take(&mut texts[i]);
        campaigns.push(Campaign {
            id: format!("c{:04}", i + 1),
            goal_amount: goal,
            raised_amount: raised,
            start_date: start,
            end_date: start + Duration::days(duration),
            days_left,
            top_donor_amount: top,
            min_donor_amount: min,
            n_supporters,
            campaign_text,
            incentive_text,
        });
    }

    let set = CampaignSet::from_campaigns(campaigns, format!("synthetic(seed={})", spec.seed))?;
    debug_assert_eq!(set.labels(), labels);
    let mut truths = truths.into_iter();
    let truth = SynthTruth {
        spec: spec.clone(),
        ids: set.ids().into_iter().map(str::to_owned).collect(),
        labels,
        campaign: truths.next().expect("campaign channel"),
        incentive: truths.next().expect("incentive channel"),
        latent_directions: LATENTS.iter().map(|&(n, d)| (n.to_owned(), d)).collect(),
    };
    Ok((set, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(k: usize) -> PlantedSpec {
        PlantedSpec {
            k,
            v: 30,
            d: 20,
            doc_len_mean: 15.0,
            alpha_true: 0.5,
            topic_sharpness: 0.1,
            seed: 3,
            seed_terms: vec![],
        }
    }

    #[test]
    fn single_topic_theta_is_one() {
        let c = generate_planted_corpus(&small(1)).unwrap();
        assert!(c.true_theta.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn planted_corpus_shapes_and_determinism() {
        let spec = small(3);
        let a = generate_planted_corpus(&spec).unwrap();
        let b = generate_planted_corpus(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.docs.len(), 20);
        assert!(a.docs.iter().all(|d| !d.is_empty() && d.token_ids.iter().all(|&w| w < 30)));
        for row in a.true_phi.iter().chain(&a.true_theta) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_planted_corpus(&PlantedSpec { v: 1, ..small(2) }).is_err());
        assert!(generate_planted_corpus(&PlantedSpec { d: 0, ..small(2) }).is_err());
    }

    #[test]
    fn seed_terms_lead_their_topic() {
        let spec = PlantedSpec {
            seed_terms: vec![vec!["alpha".into(), "beta".into()], vec!["gamma".into()]],
            ..small(2)
        };
        let c = generate_planted_corpus(&spec).unwrap();
        let v = c.vocabulary();
        assert_eq!(&v.terms()[..3], &["alpha", "beta", "gamma"]);
        assert_eq!(v.terms()[3], "w000");
        assert_eq!(top_ids(&c.true_phi[0], 2), vec![0, 1]);
        assert_eq!(top_ids(&c.true_phi[1], 1), vec![2]);
    }

    #[test]
    fn alignment_identity_and_swap() {
        let c = generate_planted_corpus(&PlantedSpec {
            topic_sharpness: 0.05,
            v: 100,
            ..small(2)
        })
        .unwrap();
        let a = align_topics(&c.true_phi, &c.true_phi).unwrap();
        assert_eq!(a.permutation, vec![0, 1]);
        assert_eq!(a.scores, vec![1.0, 1.0]);
        let swapped = vec![c.true_phi[1].clone(), c.true_phi[0].clone()];
        let a = align_topics(&c.true_phi, &swapped).unwrap();
        assert_eq!(a.permutation, vec![1, 0]);
        assert_eq!(a.scores, vec![1.0, 1.0]);
    }

    #[test]
    fn alignment_against_uniform_rows() {
        // A uniform row's top-10 under the lower-id tie rule is ids 0..10.
        let v = 40;
        let mut t0 = vec![0.0; v];
        let mut t1 = vec![0.0; v];
        for w in 20..30 {
            t0[w] = 0.1; // top-10 = 20..30, disjoint from 0..10
        }
        for w in 5..15 {
            t1[w] = 0.1; // top-10 = 5..15, shares 5..10 with 0..10
        }
        let uniform = vec![vec![1.0 / v as f64; v]; 2];
        let a = align_topics(&[t0, t1], &uniform).unwrap();
        assert_eq!(a.permutation, vec![1, 0]);
        assert_eq!(a.scores, vec![0.0, 0.5]);
        assert!(a.scores[0] <= 10.0 / v as f64);
        assert!(align_topics(&[vec![1.0]], &[vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn campaign_counts_and_validity() {
        let spec = CampaignSynthSpec::reference(3.0, 11);
        let (set, truth) = generate_campaigns(&spec).unwrap();
        assert_eq!(set.len(), 410);
        assert_eq!(set.count_label(1), 210);
        assert_eq!(set.count_label(0), 200);
        assert_eq!(truth.labels, set.labels());
        for r in set.records() {
            r.campaign.validate().unwrap();
            assert!((4000.0..=20_000.0).contains(&r.campaign.goal_amount));
        }
        assert!(generate_campaigns(&CampaignSynthSpec { n: 1, ..spec }).is_err());
    }

    #[test]
    fn success_rounding_goes_up() {
        let spec = CampaignSynthSpec {
            success_fraction: 0.512,
            ..CampaignSynthSpec::reference(1.0, 2)
        };
        let (set, _) = generate_campaigns(&spec).unwrap();
        assert_eq!(set.count_label(1), 210);
        let spec = CampaignSynthSpec {
            n: 5,
            success_fraction: 0.5,
            ..spec
        };
        assert_eq!(generate_campaigns(&spec).unwrap().0.count_label(1), 3);
    }
}
