use ndarray::{Array2, Array3};
use rand::Rng;

use super::{Corpus, Document, TopicConfig};
use crate::data::WordCategory;
use crate::error::{Error, Result};

const UNASSIGNED: usize = usize::MAX;

/// Collapsed Gibbs state for the two-stage topic-sentiment sampler.
///
/// Topic assignments live on topic-category tokens, sentiment assignments
/// on sentiment-category tokens. Every count table is the histogram of the
/// current assignments; [`GibbsState::counts_consistent`] verifies this by
/// full recount.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub(crate) docs: Vec<Document>,
    pub(crate) topics: usize,
    pub(crate) sentiments: usize,
    pub(crate) alpha: f64,
    pub(crate) beta: f64,
    /// `docs × sentiments` sentiment pseudo-counts.
    pub(crate) gamma: Array2<f64>,
    gamma_sum: Vec<f64>,
    /// `topics × sentiments × V₂` sentiment-word pseudo-counts.
    pub(crate) lambda: Array3<f64>,
    lambda_sum: Array2<f64>,
    pub(crate) vocab_sizes: [usize; 3],

    topic_of: Vec<Vec<usize>>,
    sentiment_of: Vec<Vec<usize>>,
    pub(crate) doc_topic: Vec<usize>,

    pub(crate) n_dk: Array2<u32>,
    pub(crate) n_kw: Array2<u32>,
    pub(crate) n_k: Vec<u32>,
    pub(crate) n_ds: Array2<u32>,
    pub(crate) n_ksw: Array3<u32>,
    pub(crate) n_ks: Array2<u32>,
    pub(crate) background: Vec<u32>,

    weights: Vec<f64>,
}

impl GibbsState {
    /// Fresh state with no latent assignments. `gamma` is `docs × sentiments`
    /// and `lambda` is `topics × sentiments × V₂`.
    pub fn new(
        corpus: &Corpus,
        config: &TopicConfig,
        gamma: Array2<f64>,
        lambda: Array3<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let (k, s) = (config.topics, config.sentiments);
        let v = [
            corpus.vocab.partition_size(WordCategory::Background),
            corpus.vocab.partition_size(WordCategory::Topic),
            corpus.vocab.partition_size(WordCategory::Sentiment),
        ];
        let d = corpus.docs.len();
        if gamma.dim() != (d, s) {
            return Err(Error::Dimension(format!("gamma is {:?}, expected ({d}, {s})", gamma.dim())));
        }
        if lambda.dim() != (k, s, v[2]) {
            return Err(Error::Dimension(format!(
                "lambda is {:?}, expected ({k}, {s}, {})",
                lambda.dim(),
                v[2]
            )));
        }
        if gamma.iter().chain(lambda.iter()).any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidInput("sentiment priors must be positive".into()));
        }
        let gamma_sum = gamma.rows().into_iter().map(|r| r.sum()).collect();
        let lambda_sum = lambda.sum_axis(ndarray::Axis(2));

        let mut background = vec![0u32; v[0]];
        for doc in &corpus.docs {
            for t in &doc.tokens {
                if t.category == WordCategory::Background {
                    background[t.slot] += 1;
                }
            }
        }

        Ok(Self {
            topic_of: corpus.docs.iter().map(|d| vec![UNASSIGNED; d.tokens.len()]).collect(),
            sentiment_of: corpus.docs.iter().map(|d| vec![UNASSIGNED; d.tokens.len()]).collect(),
            docs: corpus.docs.clone(),
            topics: k,
            sentiments: s,
            alpha: config.alpha,
            beta: config.beta,
            gamma,
            gamma_sum,
            lambda,
            lambda_sum,
            vocab_sizes: v,
            doc_topic: vec![UNASSIGNED; d],
            n_dk: Array2::zeros((d, k)),
            n_kw: Array2::zeros((k, v[1])),
            n_k: vec![0; k],
            n_ds: Array2::zeros((d, s)),
            n_ksw: Array3::zeros((k, s, v[2])),
            n_ks: Array2::zeros((k, s)),
            background,
            weights: vec![0.0; k.max(s)],
        })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.docs[d].tokens.len()
    }

    pub fn token_category(&self, d: usize, n: usize) -> WordCategory {
        self.docs[d].tokens[n].category
    }

    pub fn topic_assignment(&self, d: usize, n: usize) -> Option<usize> {
        Some(self.topic_of[d][n]).filter(|&z| z != UNASSIGNED)
    }

    pub fn sentiment_assignment(&self, d: usize, n: usize) -> Option<usize> {
        Some(self.sentiment_of[d][n]).filter(|&z| z != UNASSIGNED)
    }

    pub fn doc_topic(&self, d: usize) -> Option<usize> {
        Some(self.doc_topic[d]).filter(|&z| z != UNASSIGNED)
    }

    fn check_token(&self, d: usize, n: usize, want: WordCategory) -> Result<()> {
        let tokens = &self
            .docs
            .get(d)
            .ok_or_else(|| Error::InvalidInput(format!("document {d} out of range")))?
            .tokens;
        let t = tokens
            .get(n)
            .ok_or_else(|| Error::InvalidInput(format!("token {n} out of range in document {d}")))?;
        if t.category != want {
            return Err(Error::InvalidInput(format!(
                "token {n} of document {d} is a {:?} word, expected {want:?}",
                t.category
            )));
        }
        Ok(())
    }

    /// Sets (or moves) the topic of topic token `(d, n)`, keeping counts in sync.
    pub fn assign_topic(&mut self, d: usize, n: usize, k: usize) -> Result<()> {
        self.check_token(d, n, WordCategory::Topic)?;
        if k >= self.topics {
            return Err(Error::InvalidInput(format!("topic {k} out of range")));
        }
        self.unassign_topic(d, n);
        self.add_topic(d, n, k);
        Ok(())
    }

    /// Sets the topic of document `d` used by the sentiment stage, moving
    /// any existing sentiment-word counts to the new topic.
    pub fn set_doc_topic(&mut self, d: usize, k: usize) -> Result<()> {
        if k >= self.topics {
            return Err(Error::InvalidInput(format!("topic {k} out of range")));
        }
        let assigned: Vec<(usize, usize)> = (0..self.docs[d].tokens.len())
            .filter_map(|n| self.sentiment_assignment(d, n).map(|s| (n, s)))
            .collect();
        for &(n, _) in &assigned {
            self.unassign_sentiment(d, n);
        }
        self.doc_topic[d] = k;
        for (n, s) in assigned {
            self.add_sentiment(d, n, s);
        }
        Ok(())
    }

    /// Sets (or moves) the sentiment of sentiment token `(d, n)`. The
    /// document topic must already be set.
    pub fn assign_sentiment(&mut self, d: usize, n: usize, s: usize) -> Result<()> {
        self.check_token(d, n, WordCategory::Sentiment)?;
        if s >= self.sentiments {
            return Err(Error::InvalidInput(format!("sentiment {s} out of range")));
        }
        if self.doc_topic(d).is_none() {
            return Err(Error::InvalidInput(format!("document {d} has no topic yet")));
        }
        self.unassign_sentiment(d, n);
        self.add_sentiment(d, n, s);
        Ok(())
    }

    fn add_topic(&mut self, d: usize, n: usize, k: usize) {
        let w = self.docs[d].tokens[n].slot;
        self.topic_of[d][n] = k;
        self.n_dk[[d, k]] += 1;
        self.n_kw[[k, w]] += 1;
        self.n_k[k] += 1;
    }

    fn unassign_topic(&mut self, d: usize, n: usize) {
        let k = self.topic_of[d][n];
        if k == UNASSIGNED {
            return;
        }
        let w = self.docs[d].tokens[n].slot;
        self.n_dk[[d, k]] -= 1;
        self.n_kw[[k, w]] -= 1;
        self.n_k[k] -= 1;
        self.topic_of[d][n] = UNASSIGNED;
    }

    fn add_sentiment(&mut self, d: usize, n: usize, s: usize) {
        let w = self.docs[d].tokens[n].slot;
        let k = self.doc_topic[d];
        self.sentiment_of[d][n] = s;
        self.n_ds[[d, s]] += 1;
        self.n_ksw[[k, s, w]] += 1;
        self.n_ks[[k, s]] += 1;
    }

    fn unassign_sentiment(&mut self, d: usize, n: usize) {
        let s = self.sentiment_of[d][n];
        if s == UNASSIGNED {
            return;
        }
        let w = self.docs[d].tokens[n].slot;
        let k = self.doc_topic[d];
        self.n_ds[[d, s]] -= 1;
        self.n_ksw[[k, s, w]] -= 1;
        self.n_ks[[k, s]] -= 1;
        self.sentiment_of[d][n] = UNASSIGNED;
    }

    /// Unnormalized topic weights for token `(d, n)` with its own assignment
    /// excluded from the counts.
    fn topic_weights(&mut self, d: usize, n: usize) {
        let w = self.docs[d].tokens[n].slot;
        let own = self.topic_of[d][n];
        let v1 = self.vocab_sizes[1] as f64;
        let k_total = self.topics as f64;
        let doc_total: f64 = self.n_dk.row(d).iter().map(|&c| c as f64).sum::<f64>()
            - if own == UNASSIGNED { 0.0 } else { 1.0 };
        let doc_denom = doc_total + k_total * self.beta;
        for k in 0..self.topics {
            let minus = if own == k { 1.0 } else { 0.0 };
            let ndk = self.n_dk[[d, k]] as f64 - minus;
            let nkw = self.n_kw[[k, w]] as f64 - minus;
            let nk = self.n_k[k] as f64 - minus;
            self.weights[k] = (ndk + self.beta) / doc_denom * (nkw + self.alpha) / (nk + v1 * self.alpha);
        }
    }

    fn sentiment_weights(&mut self, d: usize, n: usize) {
        let w = self.docs[d].tokens[n].slot;
        let own = self.sentiment_of[d][n];
        let k = self.doc_topic[d];
        let doc_total: f64 = self.n_ds.row(d).iter().map(|&c| c as f64).sum::<f64>()
            - if own == UNASSIGNED { 0.0 } else { 1.0 };
        let doc_denom = doc_total + self.gamma_sum[d];
        for s in 0..self.sentiments {
            let minus = if own == s { 1.0 } else { 0.0 };
            let nds = self.n_ds[[d, s]] as f64 - minus;
            let nksw = self.n_ksw[[k, s, w]] as f64 - minus;
            let nks = self.n_ks[[k, s]] as f64 - minus;
            self.weights[s] = (nds + self.gamma[[d, s]]) / doc_denom * (nksw + self.lambda[[k, s, w]])
                / (nks + self.lambda_sum[[k, s]]);
        }
    }

    /// Normalized full conditional of the topic of token `n` in document `d`
    /// given every other assignment.
    pub fn topic_conditional(&mut self, d: usize, n: usize) -> Result<Vec<f64>> {
        self.check_token(d, n, WordCategory::Topic)?;
        self.topic_weights(d, n);
        Ok(normalized(&self.weights[..self.topics]))
    }

    /// Normalized full conditional of the sentiment of token `n` in document
    /// `d` given every other assignment and the document's topic.
    pub fn sentiment_conditional(&mut self, d: usize, n: usize) -> Result<Vec<f64>> {
        self.check_token(d, n, WordCategory::Sentiment)?;
        if self.doc_topic(d).is_none() {
            return Err(Error::InvalidInput(format!("document {d} has no topic yet")));
        }
        self.sentiment_weights(d, n);
        Ok(normalized(&self.weights[..self.sentiments]))
    }

    pub fn init_topics<R: Rng>(&mut self, rng: &mut R) {
        for d in 0..self.docs.len() {
            for n in 0..self.docs[d].tokens.len() {
                if self.docs[d].tokens[n].category == WordCategory::Topic {
                    let k = rng.random_range(0..self.topics);
                    self.unassign_topic(d, n);
                    self.add_topic(d, n, k);
                }
            }
        }
    }

    /// Lexicon-guided start for the standard three sentiments (lexicon
    /// polarity, else neutral); uniform random otherwise.
    pub fn init_sentiments<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        for d in 0..self.docs.len() {
            if self.doc_topic(d).is_none() {
                return Err(Error::InvalidInput(format!("document {d} has no topic yet")));
            }
            for n in 0..self.docs[d].tokens.len() {
                let t = self.docs[d].tokens[n];
                if t.category != WordCategory::Sentiment {
                    continue;
                }
                let s = if self.sentiments == 3 {
                    match t.polarity {
                        Some(crate::data::Polarity::Positive) => super::POSITIVE,
                        Some(crate::data::Polarity::Negative) => super::NEGATIVE,
                        None => super::NEUTRAL,
                    }
                } else {
                    rng.random_range(0..self.sentiments)
                };
                self.unassign_sentiment(d, n);
                self.add_sentiment(d, n, s);
            }
        }
        Ok(())
    }

    pub fn sweep_topics<R: Rng>(&mut self, rng: &mut R) {
        for d in 0..self.docs.len() {
            for n in 0..self.docs[d].tokens.len() {
                if self.docs[d].tokens[n].category != WordCategory::Topic {
                    continue;
                }
                self.topic_weights(d, n);
                let k = sample(&self.weights[..self.topics], rng);
                self.unassign_topic(d, n);
                self.add_topic(d, n, k);
            }
        }
    }

    pub fn sweep_sentiments<R: Rng>(&mut self, rng: &mut R) {
        for d in 0..self.docs.len() {
            for n in 0..self.docs[d].tokens.len() {
                if self.docs[d].tokens[n].category != WordCategory::Sentiment {
                    continue;
                }
                self.sentiment_weights(d, n);
                let s = sample(&self.weights[..self.sentiments], rng);
                self.unassign_sentiment(d, n);
                self.add_sentiment(d, n, s);
            }
        }
    }

    /// Recounts every table from the assignments and compares.
    pub fn counts_consistent(&self) -> bool {
        let (d_n, k, s) = (self.docs.len(), self.topics, self.sentiments);
        let mut n_dk = Array2::<u32>::zeros((d_n, k));
        let mut n_kw = Array2::<u32>::zeros((k, self.vocab_sizes[1]));
        let mut n_k = vec![0u32; k];
        let mut n_ds = Array2::<u32>::zeros((d_n, s));
        let mut n_ksw = Array3::<u32>::zeros((k, s, self.vocab_sizes[2]));
        let mut n_ks = Array2::<u32>::zeros((k, s));
        let mut background = vec![0u32; self.vocab_sizes[0]];
        for (d, doc) in self.docs.iter().enumerate() {
            for (n, t) in doc.tokens.iter().enumerate() {
                match t.category {
                    WordCategory::Background => background[t.slot] += 1,
                    WordCategory::Topic => {
                        if let Some(z) = self.topic_assignment(d, n) {
                            n_dk[[d, z]] += 1;
                            n_kw[[z, t.slot]] += 1;
                            n_k[z] += 1;
                        }
                    }
                    WordCategory::Sentiment => {
                        if let Some(z) = self.sentiment_assignment(d, n) {
                            let topic = self.doc_topic[d];
                            n_ds[[d, z]] += 1;
                            n_ksw[[topic, z, t.slot]] += 1;
                            n_ks[[topic, z]] += 1;
                        }
                    }
                }
            }
        }
        n_dk == self.n_dk
            && n_kw == self.n_kw
            && n_k == self.n_k
            && n_ds == self.n_ds
            && n_ksw == self.n_ksw
            && n_ks == self.n_ks
            && background == self.background
    }
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn sample<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}
