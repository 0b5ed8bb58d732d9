//! Text preprocessing: segmentation, stop-word and noun filtering, vocabulary
//! construction with document-frequency pruning, and bag-of-words encoding.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_NOUNS: &str = include_str!("../data/nouns.txt");

/// Splits on non-alphanumeric characters after lowercasing. Tokens shorter
/// than two characters and all-digit tokens are dropped; mixed tokens such as
/// `80g` survive.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .filter(|t| !t.chars().all(|c| c.is_numeric()))
        .map(str::to_owned)
        .collect()
}

/// Parses a word-list file body: one term per line, `#` starts a comment.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn load_word_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NounLexicon {
    /// Keep only listed terms.
    Set(BTreeSet<String>),
    /// Keep everything that is not a stop word.
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconConfig {
    stopwords: BTreeSet<String>,
    noun_lexicon: NounLexicon,
    min_df: usize,
    max_df_ratio: f64,
}

impl LexiconConfig {
    pub fn new(
        stopwords: BTreeSet<String>,
        noun_lexicon: NounLexicon,
        min_df: usize,
        max_df_ratio: f64,
    ) -> Result<Self> {
        if min_df < 1 {
            return Err(Error::Argument("min_df must be ≥ 1".into()));
        }
        if !(max_df_ratio > 0.0 && max_df_ratio <= 1.0) {
            return Err(Error::Argument(format!(
                "max_df_ratio must lie in (0, 1], got {max_df_ratio}"
            )));
        }
        if let NounLexicon::Set(nouns) = &noun_lexicon {
            if let Some(w) = nouns.intersection(&stopwords).next() {
                return Err(Error::Argument(format!(
                    "`{w}` is both a stop word and a lexicon noun"
                )));
            }
        }
        Ok(LexiconConfig {
            stopwords,
            noun_lexicon,
            min_df,
            max_df_ratio,
        })
    }

    /// Shipped stop words and noun lexicon, min_df 2, max_df_ratio 0.95.
    pub fn default_lexicon() -> Self {
        Self::new(
            parse_word_list(DEFAULT_STOPWORDS),
            NounLexicon::Set(parse_word_list(DEFAULT_NOUNS)),
            2,
            0.95,
        )
        .expect("shipped word lists are disjoint")
    }

    /// Shipped stop words without noun filtering.
    pub fn pass_through() -> Self {
        Self::new(parse_word_list(DEFAULT_STOPWORDS), NounLexicon::PassThrough, 2, 0.95)
            .expect("valid defaults")
    }

    pub fn with_pruning(self, min_df: usize, max_df_ratio: f64) -> Result<Self> {
        Self::new(self.stopwords, self.noun_lexicon, min_df, max_df_ratio)
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn noun_lexicon(&self) -> &NounLexicon {
        &self.noun_lexicon
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn max_df_ratio(&self) -> f64 {
        self.max_df_ratio
    }

    fn keeps(&self, token: &str) -> bool {
        if self.stopwords.contains(token) {
            return false;
        }
        match &self.noun_lexicon {
            NounLexicon::Set(nouns) => nouns.contains(token),
            NounLexicon::PassThrough => true,
        }
    }
}

pub fn filter_tokens(tokens: &[String], cfg: &LexiconConfig) -> Vec<String> {
    tokens.iter().filter(|t| cfg.keeps(t)).cloned().collect()
}

/// tokenize followed by filter_tokens.
pub fn preprocess(text: &str, cfg: &LexiconConfig) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| cfg.keeps(t)).collect()
}

/// Dense term index. Ids are positions in `terms`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            let id = u32::try_from(i).map_err(|_| Error::Argument("vocabulary too large".into()))?;
            if index.insert(t.clone(), id).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary term `{t}`")));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    /// Content hash over the ordered term list.
    pub fn fingerprint(&self) -> String {
        fnv1a(self.terms.iter().map(String::as_bytes))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    /// Reads a vocabulary file written by [`Vocabulary::save`]: one term per
    /// line in id order.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_terms(text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Keeps terms whose document frequency is at least `min_df` and at most
/// `max_df_ratio` of the documents. Terms are ordered by descending document
/// frequency, then lexicographically.
pub fn build_vocabulary(docs: &[Vec<String>], cfg: &LexiconConfig) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::Argument("cannot build a vocabulary from zero documents".into()));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let distinct: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    let n_docs = docs.len() as f64;
    let mut kept: Vec<(&str, usize)> = df
        .into_iter()
        .filter(|&(_, f)| f >= cfg.min_df && f as f64 / n_docs <= cfg.max_df_ratio)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_terms(kept.into_iter().map(|(t, _)| t.to_owned()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "campaign_text")]
    Campaign,
    #[serde(rename = "incentive_text")]
    Incentive,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Campaign, Channel::Incentive];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Campaign => "campaign",
            Channel::Incentive => "incentive",
        }
    }

    pub fn text(self, c: &crate::corpus::Campaign) -> &str {
        match self {
            Channel::Campaign => &c.campaign_text,
            Channel::Incentive => &c.incentive_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub token_ids: Vec<u32>,
    pub source_id: String,
    pub channel: Channel,
}

impl TokenizedDoc {
    pub fn new(token_ids: Vec<u32>, source_id: impl Into<String>, channel: Channel) -> Self {
        TokenizedDoc {
            token_ids,
            source_id: source_id.into(),
            channel,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Maps in-vocabulary words to ids, dropping the rest.
pub fn encode(
    doc: &[String],
    vocab: &Vocabulary,
    source_id: impl Into<String>,
    channel: Channel,
) -> TokenizedDoc {
    let ids = doc.iter().filter_map(|w| vocab.id(w)).collect();
    TokenizedDoc::new(ids, source_id, channel)
}

pub fn decode(doc: &TokenizedDoc, vocab: &Vocabulary) -> Vec<String> {
    doc.token_ids
        .iter()
        .filter_map(|&id| vocab.term(id).map(str::to_owned))
        .collect()
}
