use std::path::Path;

use ndarray::{Array, Array1, Array2, Array3, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gibbs::GibbsState;
use super::{ContagionRepresentation, Corpus, TopicConfig, NEGATIVE, NEUTRAL, POSITIVE};
use crate::data::{self, Polarity, WordCategory};
use crate::error::{Error, Result};

/// Plain LDA estimates.
#[derive(Debug, Clone)]
pub struct LdaFit {
    /// `docs × topics`.
    pub theta: Array2<f64>,
    /// `topics × vocabulary` over the whole vocabulary (global word ids).
    pub phi: Array2<f64>,
}

/// Word distributions of the topic-sentiment model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModelPosterior {
    /// Over the background partition.
    pub phi_b: Array1<f64>,
    /// `topics × V₁`.
    pub phi_t: Array2<f64>,
    /// `topics × sentiments × V₂`.
    pub phi_o: Array3<f64>,
}

#[derive(Debug, Clone)]
pub struct LdasFit {
    pub representations: Vec<ContagionRepresentation>,
    pub posterior: TopicModelPosterior,
    pub state: GibbsState,
}

/// Everything needed to audit a topic-sentiment fit.
#[derive(Serialize)]
struct ModelDump<'a> {
    config: &'a TopicConfig,
    vocabulary: [Vec<&'a str>; 3],
    gamma: &'a Array2<f64>,
    lambda: &'a Array3<f64>,
    n_dk: &'a Array2<u32>,
    n_kw: &'a Array2<u32>,
    n_ds: &'a Array2<u32>,
    n_ksw: &'a Array3<u32>,
    background: &'a [u32],
    doc_topic: &'a [usize],
    posterior: &'a TopicModelPosterior,
}

impl LdasFit {
    pub fn write_dump(&self, path: &Path, corpus: &Corpus, config: &TopicConfig) -> Result<()> {
        let st = &self.state;
        let dump = ModelDump {
            config,
            vocabulary: [
                corpus.vocab.partition_words(WordCategory::Background),
                corpus.vocab.partition_words(WordCategory::Topic),
                corpus.vocab.partition_words(WordCategory::Sentiment),
            ],
            gamma: &st.gamma,
            lambda: &st.lambda,
            n_dk: &st.n_dk,
            n_kw: &st.n_kw,
            n_ds: &st.n_ds,
            n_ksw: &st.n_ksw,
            background: &st.background,
            doc_topic: &st.doc_topic,
            posterior: &self.posterior,
        };
        let text = serde_json::to_string(&dump)?;
        data::write_lines(path, [text])
    }
}

/// Most probable topic; exact ties are broken uniformly at random.
pub fn assign_doc_topic<R: Rng>(theta: &[f64], rng: &mut R) -> usize {
    let best = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..theta.len()).filter(|&k| theta[k] == best).collect();
    if winners.len() == 1 {
        winners[0]
    } else {
        winners[rng.random_range(0..winners.len())]
    }
}

fn sentiment_index(polarity: Option<Polarity>) -> usize {
    match polarity {
        Some(Polarity::Positive) => POSITIVE,
        Some(Polarity::Negative) => NEGATIVE,
        None => NEUTRAL,
    }
}

/// Per-document sentiment pseudo-counts: lexicon hits of each polarity, with
/// non-lexicon sentiment words counted as neutral, plus `floor`.
pub fn gamma_prior(corpus: &Corpus, floor: f64) -> Array2<f64> {
    let mut gamma = Array2::from_elem((corpus.docs.len(), 3), floor);
    for (d, doc) in corpus.docs.iter().enumerate() {
        for t in doc.tokens.iter().filter(|t| t.category == WordCategory::Sentiment) {
            gamma[[d, sentiment_index(t.polarity)]] += 1.0;
        }
    }
    gamma
}

/// Topic-sentiment-word pseudo-counts: occurrences of each sentiment word
/// with its polarity inside documents of each topic, plus `floor`.
pub fn lambda_prior(corpus: &Corpus, doc_topics: &[usize], topics: usize, floor: f64) -> Result<Array3<f64>> {
    if doc_topics.len() != corpus.docs.len() {
        return Err(Error::Dimension(format!(
            "{} document topics for {} documents",
            doc_topics.len(),
            corpus.docs.len()
        )));
    }
    let v2 = corpus.vocab.partition_size(WordCategory::Sentiment);
    let mut lambda = Array3::from_elem((topics, 3, v2), floor);
    for (doc, &k) in corpus.docs.iter().zip(doc_topics) {
        if k >= topics {
            return Err(Error::InvalidInput(format!("topic {k} out of range")));
        }
        for t in doc.tokens.iter().filter(|t| t.category == WordCategory::Sentiment) {
            lambda[[k, sentiment_index(t.polarity), t.slot]] += 1.0;
        }
    }
    Ok(lambda)
}

pub fn lexicon_priors(
    corpus: &Corpus,
    doc_topics: &[usize],
    topics: usize,
    floor: f64,
) -> Result<(Array2<f64>, Array3<f64>)> {
    Ok((gamma_prior(corpus, floor), lambda_prior(corpus, doc_topics, topics, floor)?))
}

fn topic_estimates(st: &GibbsState) -> (Array2<f64>, Array2<f64>) {
    let (d_n, k) = st.n_dk.dim();
    let mut theta = Array2::zeros((d_n, k));
    for d in 0..d_n {
        let total: f64 = st.n_dk.row(d).iter().map(|&c| c as f64).sum::<f64>() + k as f64 * st.beta;
        for z in 0..k {
            theta[[d, z]] = (st.n_dk[[d, z]] as f64 + st.beta) / total;
        }
    }
    let v1 = st.vocab_sizes[1];
    let mut phi = Array2::zeros((k, v1));
    for z in 0..k {
        let total = st.n_k[z] as f64 + v1 as f64 * st.alpha;
        for w in 0..v1 {
            phi[[z, w]] = (st.n_kw[[z, w]] as f64 + st.alpha) / total;
        }
    }
    (theta, phi)
}

fn sentiment_estimates(st: &GibbsState) -> (Array2<f64>, Array3<f64>) {
    let (d_n, s_n) = st.n_ds.dim();
    let mut theta = Array2::zeros((d_n, s_n));
    for d in 0..d_n {
        let total: f64 = (0..s_n).map(|s| st.n_ds[[d, s]] as f64 + st.gamma[[d, s]]).sum();
        for s in 0..s_n {
            theta[[d, s]] = (st.n_ds[[d, s]] as f64 + st.gamma[[d, s]]) / total;
        }
    }
    let (k_n, _, v2) = st.n_ksw.dim();
    let mut phi = Array3::zeros((k_n, s_n, v2));
    for k in 0..k_n {
        for s in 0..s_n {
            let total: f64 = (0..v2).map(|w| st.n_ksw[[k, s, w]] as f64 + st.lambda[[k, s, w]]).sum();
            for w in 0..v2 {
                phi[[k, s, w]] = (st.n_ksw[[k, s, w]] as f64 + st.lambda[[k, s, w]]) / total;
            }
        }
    }
    (theta, phi)
}

fn background_estimate(st: &GibbsState) -> Array1<f64> {
    let v0 = st.vocab_sizes[0];
    let total = st.background.iter().map(|&c| c as f64).sum::<f64>() + v0 as f64 * st.alpha;
    st.background
        .iter()
        .map(|&c| (c as f64 + st.alpha) / total)
        .collect()
}

/// Runs `iterations` sweeps and returns either the final-sweep estimate or
/// the average over lagged post-burn-in sweeps.
fn run_chain<DA, DB, S, E>(
    st: &mut GibbsState,
    config: &TopicConfig,
    rng: &mut ChaCha8Rng,
    mut sweep: S,
    estimate: E,
) -> (Array<f64, DA>, Array<f64, DB>)
where
    DA: Dimension,
    DB: Dimension,
    S: FnMut(&mut GibbsState, &mut ChaCha8Rng),
    E: Fn(&GibbsState) -> (Array<f64, DA>, Array<f64, DB>),
{
    let mut acc: Option<(Array<f64, DA>, Array<f64, DB>)> = None;
    let mut samples = 0usize;
    for it in 1..=config.iterations {
        sweep(st, rng);
        if let Some(lag) = config.sample_lag {
            if it > config.burn_in && (it - config.burn_in) % lag == 0 {
                let (a, b) = estimate(st);
                match acc.as_mut() {
                    Some((sa, sb)) => {
                        *sa += &a;
                        *sb += &b;
                    }
                    None => acc = Some((a, b)),
                }
                samples += 1;
            }
        }
    }
    match acc {
        Some((mut a, mut b)) => {
            a /= samples as f64;
            b /= samples as f64;
            (a, b)
        }
        None => estimate(st),
    }
}

/// Collapsed-Gibbs LDA over all tokens regardless of category.
pub fn fit_lda(corpus: &Corpus, config: &TopicConfig) -> Result<LdaFit> {
    config.validate()?;
    if corpus.docs.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let flat = Corpus::from_slots(
        [0, corpus.vocab.len(), 0],
        corpus
            .docs
            .iter()
            .map(|d| {
                let toks = d.tokens.iter().map(|t| (WordCategory::Topic, t.word, None)).collect();
                (d.id.clone(), toks)
            })
            .collect(),
    )?;
    let cfg = TopicConfig {
        sentiments: 1,
        ..config.clone()
    };
    let mut st = GibbsState::new(
        &flat,
        &cfg,
        Array2::ones((flat.docs.len(), 1)),
        Array3::ones((cfg.topics, 1, 0)),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    st.init_topics(&mut rng);
    let (theta, phi) = run_chain(&mut st, &cfg, &mut rng, |s, r| s.sweep_topics(r), topic_estimates);
    Ok(LdaFit { theta, phi })
}

/// Two-stage topic-sentiment fit.
///
/// Stage one samples topic words only, estimates each document's topic
/// distribution and fixes its most probable topic. Lexicon pseudo-counts for
/// sentiment words are then built under those topics, and stage two samples
/// sentiment words conditioned on the document topics.
pub fn fit_ldas(corpus: &Corpus, config: &TopicConfig) -> Result<LdasFit> {
    config.validate()?;
    if config.sentiments != 3 {
        return Err(Error::InvalidInput(
            "lexicon priors are defined for exactly three sentiments".into(),
        ));
    }
    if corpus.docs.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let k = config.topics;
    let gamma = gamma_prior(corpus, config.prior_floor);
    let v2 = corpus.vocab.partition_size(WordCategory::Sentiment);
    let mut st = GibbsState::new(corpus, config, gamma, Array3::ones((k, 3, v2)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    st.init_topics(&mut rng);
    let (theta_t, phi_t) = run_chain(&mut st, config, &mut rng, |s, r| s.sweep_topics(r), topic_estimates);
    let doc_topics: Vec<usize> = theta_t
        .rows()
        .into_iter()
        .map(|row| assign_doc_topic(row.as_slice().expect("standard layout"), &mut rng))
        .collect();

    // rebuild with the topic-conditioned lambda, carrying the stage-one state
    let lambda = lambda_prior(corpus, &doc_topics, k, config.prior_floor)?;
    let mut next = GibbsState::new(corpus, config, st.gamma.clone(), lambda)?;
    for d in 0..st.num_docs() {
        for n in 0..st.doc_len(d) {
            if let Some(z) = st.topic_assignment(d, n) {
                next.assign_topic(d, n, z)?;
            }
        }
        next.set_doc_topic(d, doc_topics[d])?;
    }
    let mut st = next;
    st.init_sentiments(&mut rng)?;
    let (theta_o, phi_o) = run_chain(&mut st, config, &mut rng, |s, r| s.sweep_sentiments(r), sentiment_estimates);

    let representations = corpus
        .docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            ContagionRepresentation::new(
                doc.id.clone(),
                theta_t.row(d).to_vec(),
                theta_o.row(d).to_vec(),
                doc_topics[d],
            )
        })
        .collect();
    let posterior = TopicModelPosterior {
        phi_b: background_estimate(&st),
        phi_t,
        phi_o,
    };
    Ok(LdasFit {
        representations,
        posterior,
        state: st,
    })
}
