use iad_core::data::{Polarity, WordCategory};
use iad_core::topics::{fit_ldas, Corpus, GibbsState, TopicConfig};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// `x (x+1) ... (x+n-1)`, the ratio `Γ(x+n)/Γ(x)`.
fn rising(x: f64, n: usize) -> f64 {
    (0..n).map(|i| x + i as f64).product()
}

/// Collapsed joint of topic-word assignments, up to a constant.
fn topic_joint(docs: &[Vec<usize>], z: &[Vec<usize>], k: usize, v: usize, alpha: f64, beta: f64) -> f64 {
    let mut n_kw = vec![vec![0usize; v]; k];
    let mut p = 1.0;
    for (words, topics) in docs.iter().zip(z) {
        let mut n_dk = vec![0usize; k];
        for (&w, &t) in words.iter().zip(topics) {
            n_dk[t] += 1;
            n_kw[t][w] += 1;
        }
        for c in &n_dk {
            p *= rising(beta, *c);
        }
        p /= rising(k as f64 * beta, words.len());
    }
    for row in &n_kw {
        for c in row {
            p *= rising(alpha, *c);
        }
        p /= rising(v as f64 * alpha, row.iter().sum());
    }
    p
}

/// Collapsed joint of sentiment-word assignments given document topics.
fn sentiment_joint(
    docs: &[Vec<usize>],
    s: &[Vec<usize>],
    doc_topic: &[usize],
    gamma: &Array2<f64>,
    lambda: &Array3<f64>,
) -> f64 {
    let (k_n, s_n, v) = lambda.dim();
    let mut n_ksw = Array3::<usize>::zeros((k_n, s_n, v));
    let mut p = 1.0;
    for (d, (words, sent)) in docs.iter().zip(s).enumerate() {
        let mut n_ds = vec![0usize; s_n];
        for (&w, &x) in words.iter().zip(sent) {
            n_ds[x] += 1;
            n_ksw[[doc_topic[d], x, w]] += 1;
        }
        for (x, c) in n_ds.iter().enumerate() {
            p *= rising(gamma[[d, x]], *c);
        }
        p /= rising(gamma.row(d).sum(), words.len());
    }
    for k in 0..k_n {
        for x in 0..s_n {
            let mut total = 0;
            for w in 0..v {
                p *= rising(lambda[[k, x, w]], n_ksw[[k, x, w]]);
                total += n_ksw[[k, x, w]];
            }
            let prior: f64 = (0..v).map(|w| lambda[[k, x, w]]).sum();
            p /= rising(prior, total);
        }
    }
    p
}

/// Mixed-radix enumeration of every assignment of `n` tokens to `m` values.
fn assignments(n: usize, m: usize) -> Vec<Vec<usize>> {
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let v = code % m;
                    code /= m;
                    v
                })
                .collect()
        })
        .collect()
}

fn split<T: Clone>(flat: &[T], lens: &[usize]) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut at = 0;
    for &l in lens {
        out.push(flat[at..at + l].to_vec());
        at += l;
    }
    out
}

fn small_corpus() -> impl Strategy<Value = (Vec<Vec<usize>>, usize)> {
    (1usize..=3).prop_flat_map(|v| {
        (
            prop::collection::vec(prop::collection::vec(0..v, 0..=3), 1..=3)
                .prop_filter("at most six tokens", |d| {
                    let n: usize = d.iter().map(Vec::len).sum();
                    (1..=6).contains(&n)
                }),
            Just(v),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn topic_conditional_matches_enumerated_joint(
        (docs, v) in small_corpus(),
        k in 1usize..=2,
        alpha in 0.05f64..2.0,
        beta in 0.05f64..2.0,
    ) {
        let corpus = Corpus::from_slots(
            [0, v, 0],
            docs.iter()
                .enumerate()
                .map(|(i, d)| (format!("d{i}"), d.iter().map(|&w| (WordCategory::Topic, w, None)).collect()))
                .collect(),
        ).unwrap();
        let cfg = TopicConfig { topics: k, sentiments: 1, alpha, beta, ..Default::default() };
        let mut st = GibbsState::new(&corpus, &cfg, Array2::ones((docs.len(), 1)), Array3::ones((k, 1, 0))).unwrap();
        let lens: Vec<usize> = docs.iter().map(Vec::len).collect();
        let n: usize = lens.iter().sum();
        for flat in assignments(n, k) {
            let z = split(&flat, &lens);
            for (d, zs) in z.iter().enumerate() {
                for (i, &t) in zs.iter().enumerate() {
                    st.assign_topic(d, i, t).unwrap();
                }
            }
            for (d, zs) in z.iter().enumerate() {
                for i in 0..zs.len() {
                    let got = st.topic_conditional(d, i).unwrap();
                    let mut joint: Vec<f64> = (0..k).map(|t| {
                        let mut alt = z.clone();
                        alt[d][i] = t;
                        topic_joint(&docs, &alt, k, v, alpha, beta)
                    }).collect();
                    let total: f64 = joint.iter().sum();
                    joint.iter_mut().for_each(|x| *x /= total);
                    for t in 0..k {
                        prop_assert!((got[t] - joint[t]).abs() < 1e-12, "{:?} vs {:?}", got, joint);
                    }
                }
            }
        }
    }

    #[test]
    fn sentiment_conditional_matches_enumerated_joint(
        (docs, v) in small_corpus(),
        k in 1usize..=2,
        s in 1usize..=2,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_n = docs.len();
        let gamma = Array2::from_shape_fn((d_n, s), |_| rng.random_range(0.01..3.0));
        let lambda = Array3::from_shape_fn((k, s, v), |_| rng.random_range(0.01..3.0));
        let doc_topic: Vec<usize> = (0..d_n).map(|_| rng.random_range(0..k)).collect();
        let corpus = Corpus::from_slots(
            [0, 0, v],
            docs.iter()
                .enumerate()
                .map(|(i, d)| (format!("d{i}"), d.iter().map(|&w| (WordCategory::Sentiment, w, None)).collect()))
                .collect(),
        ).unwrap();
        let cfg = TopicConfig { topics: k, sentiments: s, ..Default::default() };
        let mut st = GibbsState::new(&corpus, &cfg, gamma.clone(), lambda.clone()).unwrap();
        for (d, &t) in doc_topic.iter().enumerate() {
            st.set_doc_topic(d, t).unwrap();
        }
        let lens: Vec<usize> = docs.iter().map(Vec::len).collect();
        let n: usize = lens.iter().sum();
        for flat in assignments(n, s) {
            let a = split(&flat, &lens);
            for (d, xs) in a.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    st.assign_sentiment(d, i, x).unwrap();
                }
            }
            for (d, xs) in a.iter().enumerate() {
                for i in 0..xs.len() {
                    let got = st.sentiment_conditional(d, i).unwrap();
                    let mut joint: Vec<f64> = (0..s).map(|x| {
                        let mut alt = a.clone();
                        alt[d][i] = x;
                        sentiment_joint(&docs, &alt, &doc_topic, &gamma, &lambda)
                    }).collect();
                    let total: f64 = joint.iter().sum();
                    joint.iter_mut().for_each(|x| *x /= total);
                    for x in 0..s {
                        prop_assert!((got[x] - joint[x]).abs() < 1e-12, "{:?} vs {:?}", got, joint);
                    }
                }
            }
        }
    }

    #[test]
    fn sweeps_keep_counts_consistent(
        docs in prop::collection::vec(prop::collection::vec((0usize..3, 0usize..4), 0..8), 1..6),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let cats = [WordCategory::Background, WordCategory::Topic, WordCategory::Sentiment];
        let pols = [Some(Polarity::Positive), Some(Polarity::Negative), None, None];
        let corpus = Corpus::from_slots(
            [4, 4, 4],
            docs.iter()
                .enumerate()
                .map(|(i, d)| (format!("d{i}"), d.iter().map(|&(c, w)| (cats[c], w, if c == 2 { pols[w] } else { None })).collect()))
                .collect(),
        ).unwrap();
        let cfg = TopicConfig { topics: k, iterations: 3, burn_in: 1, seed, ..Default::default() };
        let fit = fit_ldas(&corpus, &cfg).unwrap();
        prop_assert!(fit.state.counts_consistent());
        for r in &fit.representations {
            prop_assert!((r.theta_t.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((r.theta_o.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((r.theta_ts.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(r.doc_topic < k);
        }
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, conc: &[f64]) -> Vec<f64> {
    let draws: Vec<f64> = conc
        .iter()
        .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng).max(1e-300))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|x| x / total).collect()
}

fn categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    for (i, x) in p.iter().enumerate() {
        if u < *x {
            return i;
        }
        u -= x;
    }
    p.len() - 1
}

/// Best accuracy over relabelings of three clusters.
fn aligned_accuracy(truth: &[usize], found: &[usize]) -> f64 {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|p| truth.iter().zip(found).filter(|(t, f)| p[**f] == **t).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

/// Samples documents from the two-stage generative story and checks that
/// document topics and dominant sentiments are recovered.
#[test]
fn recovers_planted_topics_and_sentiments() {
    let (k_n, s_n, v1, v2, docs_n) = (3, 3, 30, 30, 2000);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // topic word distributions concentrated on disjoint blocks
    let phi_t: Vec<Vec<f64>> = (0..k_n)
        .map(|k| {
            let conc: Vec<f64> = (0..v1).map(|w| if w / 10 == k { 1.0 } else { 0.01 }).collect();
            dirichlet(&mut rng, &conc)
        })
        .collect();
    // sentiment words: 0..10 positive, 10..20 negative, 20..30 neutral
    let polarity = |w: usize| match w / 10 {
        0 => Some(Polarity::Positive),
        1 => Some(Polarity::Negative),
        _ => None,
    };
    let phi_o: Vec<Vec<Vec<f64>>> = (0..k_n)
        .map(|_| {
            (0..s_n)
                .map(|s| {
                    let conc: Vec<f64> = (0..v2).map(|w| if w / 10 == s { 1.0 } else { 0.01 }).collect();
                    dirichlet(&mut rng, &conc)
                })
                .collect()
        })
        .collect();

    let mut true_topic = Vec::new();
    let mut true_sentiment = Vec::new();
    let mut docs = Vec::new();
    for d in 0..docs_n {
        let theta_t = dirichlet(&mut rng, &[0.05; 3]);
        let theta_o = dirichlet(&mut rng, &[0.3; 3]);
        let topic = categorical(&mut rng, &theta_t);
        let mut toks = Vec::new();
        for _ in 0..8 {
            let z = categorical(&mut rng, &theta_t);
            toks.push((WordCategory::Topic, categorical(&mut rng, &phi_t[z]), None));
        }
        for _ in 0..6 {
            let s = categorical(&mut rng, &theta_o);
            let w = categorical(&mut rng, &phi_o[topic][s]);
            toks.push((WordCategory::Sentiment, w, polarity(w)));
        }
        true_topic.push(iad_core::topics::joint_distribution(&theta_t, &[1.0]));
        true_sentiment.push(theta_o);
        docs.push((format!("d{d}"), toks));
    }
    let corpus = Corpus::from_slots([0, v1, v2], docs).unwrap();
    let cfg = TopicConfig {
        topics: k_n,
        iterations: 200,
        burn_in: 50,
        seed: 3,
        ..Default::default()
    };
    let fit = fit_ldas(&corpus, &cfg).unwrap();

    let truth: Vec<usize> = true_topic.iter().map(|t| argmax(t)).collect();
    let found: Vec<usize> = fit.representations.iter().map(|r| r.doc_topic).collect();
    let topic_acc = aligned_accuracy(&truth, &found);
    assert!(topic_acc >= 0.8, "topic recovery {topic_acc}");

    // sentiment indices are anchored by the lexicon, so no relabeling
    let truth: Vec<usize> = true_sentiment.iter().map(|t| argmax(t)).collect();
    let found: Vec<usize> = fit.representations.iter().map(|r| r.dominant_sentiment()).collect();
    let hits = truth.iter().zip(&found).filter(|(a, b)| a == b).count();
    let sent_acc = hits as f64 / docs_n as f64;
    assert!(sent_acc >= 0.8, "sentiment recovery {sent_acc}");
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

#[test]
fn same_seed_same_fit() {
    let docs = (0..30)
        .map(|d| {
            let toks = (0..6)
                .map(|i| {
                    if i % 2 == 0 {
                        (WordCategory::Topic, (d + i) % 5, None)
                    } else {
                        (WordCategory::Sentiment, (d * i) % 4, [Some(Polarity::Positive), Some(Polarity::Negative), None, None][(d * i) % 4])
                    }
                })
                .collect();
            (format!("d{d}"), toks)
        })
        .collect();
    let corpus = Corpus::from_slots([0, 5, 4], docs).unwrap();
    let cfg = TopicConfig {
        topics: 3,
        iterations: 30,
        burn_in: 5,
        seed: 11,
        ..Default::default()
    };
    let a = fit_ldas(&corpus, &cfg).unwrap();
    let b = fit_ldas(&corpus, &cfg).unwrap();
    assert_eq!(a.representations, b.representations);
    let c = fit_ldas(&corpus, &TopicConfig { seed: 12, ..cfg }).unwrap();
    assert_eq!(c.representations.len(), 30);
}
