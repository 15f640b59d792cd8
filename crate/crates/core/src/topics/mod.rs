//! Topic and topic-sentiment models over short texts.
//!
//! [`fit_lda`] is plain collapsed-Gibbs LDA over every token. [`fit_ldas`]
//! runs the two-stage topic-then-sentiment sampler: topic words (nouns) are
//! sampled first and each document takes its most probable topic; sentiment
//! words (adjectives, adverbs) are then sampled under that document topic
//! with lexicon-derived pseudo-count priors. Background words are counted
//! but never sampled.

mod fit;
mod gibbs;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use fit::{
    assign_doc_topic, fit_lda, fit_ldas, gamma_prior, lambda_prior, lexicon_priors, LdaFit,
    LdasFit, TopicModelPosterior,
};
pub use gibbs::GibbsState;

use crate::data::{self, Contagion, Polarity, TaggedToken, WordCategory};
use crate::error::{Error, Result};

pub const POSITIVE: usize = 0;
pub const NEGATIVE: usize = 1;
pub const NEUTRAL: usize = 2;
pub const SENTIMENT_NAMES: [&str; 3] = ["positive", "negative", "neutral"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicConfig {
    pub topics: usize,
    pub sentiments: usize,
    /// Symmetric Dirichlet prior on word distributions.
    pub alpha: f64,
    /// Symmetric Dirichlet prior on document-topic distributions.
    pub beta: f64,
    /// Floor added to every lexicon pseudo-count.
    pub prior_floor: f64,
    /// Total Gibbs sweeps per stage.
    pub iterations: usize,
    pub burn_in: usize,
    /// `None` uses the final sweep only; `Some(lag)` averages estimates
    /// every `lag` sweeps after burn-in.
    pub sample_lag: Option<usize>,
    pub seed: u64,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            topics: 20,
            sentiments: 3,
            alpha: 0.1,
            beta: 0.01,
            prior_floor: 0.01,
            iterations: 1000,
            burn_in: 200,
            sample_lag: None,
            seed: 0,
        }
    }
}

impl TopicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.sentiments == 0 {
            return Err(Error::InvalidInput("topic and sentiment counts must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.prior_floor > 0.0) {
            return Err(Error::InvalidInput("Dirichlet priors must be positive".into()));
        }
        if self.sample_lag == Some(0) {
            return Err(Error::InvalidInput("sample lag must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    /// Global vocabulary id.
    pub word: usize,
    pub category: WordCategory,
    /// Index of the word within its category's vocabulary partition.
    pub slot: usize,
    pub polarity: Option<Polarity>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<Token>,
}

/// Vocabulary split into background, topic and sentiment partitions. A
/// surface form belongs to exactly one partition: the category it carries
/// most often, ties preferring topic, then sentiment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    category: Vec<WordCategory>,
    slot: Vec<usize>,
    partitions: [Vec<usize>; 3],
    polarity: Vec<Option<Polarity>>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn category(&self, id: usize) -> WordCategory {
        self.category[id]
    }

    /// Number of words in a partition.
    pub fn partition_size(&self, category: WordCategory) -> usize {
        self.partitions[category as usize].len()
    }

    /// Surface forms of a partition in slot order.
    pub fn partition_words(&self, category: WordCategory) -> Vec<&str> {
        self.partitions[category as usize]
            .iter()
            .map(|&w| self.words[w].as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub vocab: Vocabulary,
}

impl Corpus {
    pub fn from_contagions(contagions: &[Contagion]) -> Self {
        Self::from_tagged(
            contagions
                .iter()
                .map(|c| (c.id.clone(), c.tokens.clone()))
                .collect(),
        )
    }

    pub fn from_tagged(docs: Vec<(String, Vec<TaggedToken>)>) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut words: Vec<String> = Vec::new();
        let mut votes: Vec<[usize; 3]> = Vec::new();
        let mut polarity: Vec<Option<Polarity>> = Vec::new();
        for (_, tokens) in &docs {
            for t in tokens {
                let id = *index.entry(t.surface.as_str()).or_insert_with(|| {
                    words.push(t.surface.clone());
                    votes.push([0; 3]);
                    polarity.push(None);
                    words.len() - 1
                });
                votes[id][t.category as usize] += 1;
                if polarity[id].is_none() {
                    polarity[id] = t.lexicon_polarity;
                }
            }
        }

        let mut category = Vec::with_capacity(words.len());
        let mut slot = Vec::with_capacity(words.len());
        let mut partitions: [Vec<usize>; 3] = Default::default();
        for (id, v) in votes.iter().enumerate() {
            let preference = [WordCategory::Topic, WordCategory::Sentiment, WordCategory::Background];
            let best = preference
                .iter()
                .copied()
                .max_by(|a, b| v[*a as usize].cmp(&v[*b as usize]).then(std::cmp::Ordering::Greater))
                .expect("non-empty preference list");
            category.push(best);
            slot.push(partitions[best as usize].len());
            partitions[best as usize].push(id);
        }

        let docs = docs
            .iter()
            .map(|(id, tokens)| Document {
                id: id.clone(),
                tokens: tokens
                    .iter()
                    .map(|t| {
                        let w = index[t.surface.as_str()];
                        Token {
                            word: w,
                            category: category[w],
                            slot: slot[w],
                            polarity: polarity[w],
                        }
                    })
                    .collect(),
            })
            .collect();

        Corpus {
            docs,
            vocab: Vocabulary {
                words,
                category,
                slot,
                partitions,
                polarity,
            },
        }
    }

    /// Builds a corpus directly from partition slots, bypassing surface
    /// forms. Each document is a list of `(category, slot, polarity)`.
    pub fn from_slots(
        sizes: [usize; 3],
        docs: Vec<(String, Vec<(WordCategory, usize, Option<Polarity>)>)>,
    ) -> Result<Self> {
        let mut vocab = Vocabulary::default();
        for cat in [WordCategory::Background, WordCategory::Topic, WordCategory::Sentiment] {
            for s in 0..sizes[cat as usize] {
                let id = vocab.words.len();
                vocab.words.push(format!("{}{}", ["b", "t", "s"][cat as usize], s));
                vocab.category.push(cat);
                vocab.slot.push(s);
                vocab.partitions[cat as usize].push(id);
                vocab.polarity.push(None);
            }
        }
        let mut out = Vec::with_capacity(docs.len());
        for (id, toks) in docs {
            let mut tokens = Vec::with_capacity(toks.len());
            for (cat, slot, pol) in toks {
                let word = *vocab.partitions[cat as usize].get(slot).ok_or_else(|| {
                    Error::InvalidInput(format!("slot {slot} outside the {cat:?} partition"))
                })?;
                if vocab.polarity[word].is_none() {
                    vocab.polarity[word] = pol;
                }
                tokens.push(Token {
                    word,
                    category: cat,
                    slot,
                    polarity: pol,
                });
            }
            out.push(Document { id, tokens });
        }
        for d in &mut out {
            for t in &mut d.tokens {
                t.polarity = vocab.polarity[t.word];
            }
        }
        Ok(Corpus { docs: out, vocab })
    }
}

/// Topic and sentiment representation of one contagion.
#[derive(Debug, Clone, PartialEq)]
pub struct ContagionRepresentation {
    pub id: String,
    pub theta_t: Vec<f64>,
    pub theta_o: Vec<f64>,
    /// Row-major `topics × sentiments` outer product of `theta_t` and `theta_o`.
    pub theta_ts: Vec<f64>,
    pub doc_topic: usize,
}

impl ContagionRepresentation {
    pub fn new(id: impl Into<String>, theta_t: Vec<f64>, theta_o: Vec<f64>, doc_topic: usize) -> Self {
        let theta_ts = joint_distribution(&theta_t, &theta_o);
        Self {
            id: id.into(),
            theta_t,
            theta_o,
            theta_ts,
            doc_topic,
        }
    }

    /// Index of the largest sentiment probability; the first wins ties.
    pub fn dominant_sentiment(&self) -> usize {
        argmax(&self.theta_o)
    }
}

pub fn joint_distribution(theta_t: &[f64], theta_o: &[f64]) -> Vec<f64> {
    theta_t
        .iter()
        .flat_map(|a| theta_o.iter().map(move |b| a * b))
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct TopicRecord {
    id: String,
    theta_t: Vec<f64>,
    theta_o: Vec<f64>,
    doc_topic: usize,
}

pub fn write_representations(path: &Path, reps: &[ContagionRepresentation]) -> Result<()> {
    let mut out = data::create(path)?;
    for r in reps {
        let rec = TopicRecord {
            id: r.id.clone(),
            theta_t: r.theta_t.clone(),
            theta_o: r.theta_o.clone(),
            doc_topic: r.doc_topic,
        };
        let line = serde_json::to_string(&rec)?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_representations(path: &Path) -> Result<Vec<ContagionRepresentation>> {
    data::read_records(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let rec: TopicRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            Ok(ContagionRepresentation::new(rec.id, rec.theta_t, rec.theta_o, rec.doc_topic))
        })
        .collect()
}
