//! Synthetic data with known ground truth.
//!
//! [`generate`] samples role distributions, contagion representations,
//! priors and interaction matrices, then labels random scenarios by drawing
//! from the model's own infection probability. [`generate_log`] produces a
//! small raw cascade log for exercising the full pipeline.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, categorize_token, CascadeLog, Contagion, FollowEdge, LabeledSeed, PartOfSpeech, RawToken,
    RetweetEvent, SentimentLexicon, DEFAULT_CATEGORIES,
};
use crate::error::{Error, Result};
use crate::model::{Components, InteractionModel, Priors, ScenarioView, Variant};
use crate::roles::{write_roles, UserRoleDistribution};
use crate::scenarios::{write_scenarios, InteractingScenario};
use crate::topics::{argmax, write_representations, ContagionRepresentation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub contagions: usize,
    pub scenarios: usize,
    /// Window length of every scenario.
    pub k: usize,
    pub roles: usize,
    pub topics: usize,
    pub sentiments: usize,
    /// Variant of the ground-truth model.
    pub variant: Variant,
    /// Matrix entries are uniform in `[-scale, scale]`.
    pub scale: f64,
    /// Symmetric Dirichlet concentration of role and topic distributions.
    pub concentration: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 1000,
            contagions: 1000,
            scenarios: 10_000,
            k: 2,
            roles: 3,
            topics: 5,
            sentiments: 3,
            variant: Variant::Topic,
            scale: 0.1,
            concentration: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.users < 2 {
            return Err(Error::InvalidInput("need at least two users".into()));
        }
        if self.contagions <= self.k {
            return Err(Error::InvalidInput("need more contagions than the window length".into()));
        }
        if self.roles == 0 || self.topics == 0 || self.sentiments == 0 {
            return Err(Error::InvalidInput("dimensions must be positive".into()));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!("scale {} must be non-negative", self.scale)));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::InvalidInput("concentration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub scenarios: Vec<InteractingScenario>,
    /// Ground-truth infection probability of each scenario.
    pub probabilities: Vec<f64>,
    pub roles: HashMap<String, Vec<f64>>,
    pub reps: HashMap<String, ContagionRepresentation>,
    pub priors: Priors,
    pub truth: InteractionModel,
    /// Share of component probabilities inside (0, 1) before clamping.
    pub in_range: f64,
}

/// Symmetric Dirichlet draw via normalized Gamma variates. Draws that
/// underflow entirely fall back to a random vertex.
pub fn sample_dirichlet<R: Rng>(rng: &mut R, alpha: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter().map(|x| x / total).collect()
    } else {
        let mut v = vec![0.0; n];
        v[rng.random_range(0..n)] = 1.0;
        v
    }
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        if scale == 0.0 {
            0.0
        } else {
            rng.random_range(-scale..=scale)
        }
    })
}

pub fn user_id(i: usize) -> String {
    format!("u{i}")
}

pub fn contagion_id(i: usize) -> String {
    format!("m{i}")
}

/// Generator for scenario `index`; independent of every other scenario.
fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let roles: Vec<Vec<f64>> = (0..spec.users)
        .map(|_| sample_dirichlet(&mut rng, spec.concentration, spec.roles))
        .collect();
    let reps: Vec<ContagionRepresentation> = (0..spec.contagions)
        .map(|i| {
            let theta_t = sample_dirichlet(&mut rng, spec.concentration, spec.topics);
            let theta_o = sample_dirichlet(&mut rng, spec.concentration, spec.sentiments);
            let top = argmax(&theta_t);
            ContagionRepresentation::new(contagion_id(i), theta_t, theta_o, top)
        })
        .collect();
    let priors: Vec<f64> = (0..spec.contagions).map(|_| rng.random_range(0.2..=0.8)).collect();
    let mut truth = InteractionModel::zeros(spec.variant, spec.roles, spec.topics, spec.sentiments);
    let d = truth.feature_dim();
    truth.seed = spec.seed;
    truth.delta = uniform_matrix(&mut rng, spec.roles, spec.roles, spec.scale);
    truth.lambda = uniform_matrix(&mut rng, d, d, spec.scale);
    truth.omega = uniform_matrix(&mut rng, spec.roles, d, spec.scale);

    let features = |c: usize| spec.variant.features(&reps[c]);
    let sampled: Vec<(InteractingScenario, f64, usize, usize)> = (0..spec.scenarios)
        .into_par_iter()
        .map(|j| {
            let mut rng = scenario_rng(spec.seed, j);
            let a = rng.random_range(0..spec.users);
            let b = (a + rng.random_range(1..spec.users)) % spec.users;
            let picks = sample_indices(&mut rng, spec.contagions, spec.k + 1).into_vec();
            let (i, window) = (picks[0], &picks[1..]);
            let view = ScenarioView {
                prior: priors[i],
                role_a: &roles[a],
                role_b: &roles[b],
                x_i: features(i),
                window: window.iter().map(|&k| features(k)).collect(),
            };
            let raw = Components::new(view.prior, &truth.terms(&view));
            let open = |p: f64| p > 0.0 && p < 1.0;
            let inside = [raw.p0, raw.pb].iter().chain(&raw.pk).filter(|p| open(**p)).count();
            let total = 2 + raw.pk.len();
            let p = truth.predict_view(&view);
            let label = rng.random::<f64>() < p;
            let s = InteractingScenario {
                user: user_id(a),
                neighbor: user_id(b),
                contagion: contagion_id(i),
                window: window.iter().map(|&k| contagion_id(k)).collect(),
                label,
            };
            (s, p, inside, total)
        })
        .collect();

    let (inside, total) = sampled.iter().fold((0, 0), |acc, s| (acc.0 + s.2, acc.1 + s.3));
    let in_range = if total == 0 { 1.0 } else { inside as f64 / total as f64 };
    if in_range < 0.99 {
        return Err(Error::InvalidInput(format!(
            "only {:.2}% of component probabilities fall inside (0, 1); use a smaller scale than {}",
            100.0 * in_range,
            spec.scale
        )));
    }
    let (scenarios, probabilities) = sampled.into_iter().map(|s| (s.0, s.1)).unzip();
    Ok(SyntheticData {
        spec: spec.clone(),
        scenarios,
        probabilities,
        roles: roles.into_iter().enumerate().map(|(i, r)| (user_id(i), r)).collect(),
        reps: reps.into_iter().map(|r| (r.id.clone(), r)).collect(),
        priors: Priors {
            values: priors.iter().enumerate().map(|(i, p)| (contagion_id(i), *p)).collect(),
            fallback: None,
        },
        truth,
        in_range,
    })
}

/// File names written by [`write_synthetic`].
pub const SCENARIOS_FILE: &str = "scenarios.tsv";
pub const ROLES_FILE: &str = "roles.tsv";
pub const TOPICS_FILE: &str = "topics.jsonl";
pub const TRUE_PRIORS_FILE: &str = "true_priors.tsv";
pub const TRUE_PROBABILITIES_FILE: &str = "true_probabilities.tsv";
pub const TRUTH_FILE: &str = "truth.json";
pub const SPEC_FILE: &str = "synth_spec.json";

/// Writes scenarios plus the ground-truth sidecars. Rows are in numeric id
/// order so output bytes depend only on the `SyntheticSpec`.
pub fn write_synthetic(dir: &Path, data: &SyntheticData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_scenarios(&dir.join(SCENARIOS_FILE), &data.scenarios)?;
    let roles: Vec<UserRoleDistribution> = (0..data.spec.users)
        .map(|i| UserRoleDistribution {
            user: user_id(i),
            theta: data.roles[&user_id(i)].clone(),
        })
        .collect();
    write_roles(&dir.join(ROLES_FILE), &roles)?;
    let reps: Vec<ContagionRepresentation> = (0..data.spec.contagions)
        .map(|i| data.reps[&contagion_id(i)].clone())
        .collect();
    write_representations(&dir.join(TOPICS_FILE), &reps)?;
    data::write_lines(
        &dir.join(TRUE_PRIORS_FILE),
        (0..data.spec.contagions).map(|i| {
            let id = contagion_id(i);
            format!("{id}\t{}", data.priors.values[&id])
        }),
    )?;
    data::write_lines(&dir.join(TRUE_PROBABILITIES_FILE), data.probabilities.iter())?;
    data.truth.save(&dir.join(TRUTH_FILE))?;
    let spec = serde_json::to_string_pretty(&data.spec)?;
    data::write_lines(&dir.join(SPEC_FILE), [spec])
}

/// Shape of a synthetic raw cascade log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpec {
    pub users: usize,
    pub contagions: usize,
    /// Latent topics used to generate text; each maps to one category.
    pub topics: usize,
    /// Follows per user, before popularity weighting.
    pub follows: usize,
    /// Base forwarding probability per exposure.
    pub forward_rate: f64,
    pub seeds_per_category: usize,
    pub seed: u64,
}

impl Default for LogSpec {
    fn default() -> Self {
        Self {
            users: 200,
            contagions: 400,
            topics: 4,
            follows: 8,
            forward_rate: 0.08,
            seeds_per_category: 10,
            seed: 0,
        }
    }
}

pub struct SyntheticLog {
    pub log: CascadeLog,
    pub lexicon: SentimentLexicon,
    pub seeds: Vec<LabeledSeed>,
    pub categories: Vec<String>,
}

const POSITIVE_WORDS: [&str; 6] = ["good", "great", "happy", "lovely", "nice", "warm"];
const NEGATIVE_WORDS: [&str; 6] = ["bad", "sad", "awful", "angry", "poor", "cold"];
const NEUTRAL_WORDS: [&str; 4] = ["new", "other", "daily", "usual"];
const FILLER: [&str; 5] = ["the", "a", "of", "and", "to"];

/// A follow graph with popular accounts, contagions whose nouns come from
/// topic-specific vocabularies, and independent-cascade forwarding that
/// favors a user's preferred topic.
pub fn generate_log(spec: &LogSpec) -> Result<SyntheticLog> {
    if spec.users < 3 || spec.contagions == 0 || spec.topics == 0 || spec.topics > DEFAULT_CATEGORIES.len() {
        return Err(Error::InvalidInput("log spec needs ≥3 users, ≥1 contagion and 1..=15 topics".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let users: Vec<String> = (0..spec.users).map(user_id).collect();

    // a few popular accounts attract most follows
    let popular = (spec.users / 20).max(1);
    let mut edges = Vec::new();
    for u in 0..spec.users {
        let n = if u % 17 == 0 { spec.follows * 4 } else { spec.follows };
        for _ in 0..n {
            let v = if rng.random::<f64>() < 0.4 {
                rng.random_range(0..popular)
            } else {
                rng.random_range(0..spec.users)
            };
            if v != u {
                edges.push(FollowEdge {
                    follower: users[u].clone(),
                    followee: users[v].clone(),
                });
            }
        }
    }
    let mut followers: Vec<Vec<usize>> = vec![Vec::new(); spec.users];
    let mut seen = std::collections::HashSet::new();
    for e in &edges {
        let (a, b) = (index_of(&e.follower), index_of(&e.followee));
        if seen.insert((a, b)) {
            followers[b].push(a);
        }
    }
    let preference: Vec<usize> = (0..spec.users).map(|_| rng.random_range(0..spec.topics)).collect();

    let lexicon = SentimentLexicon::new(POSITIVE_WORDS, NEGATIVE_WORDS)?;
    let mut contagions = Vec::new();
    let mut retweets = Vec::new();
    let mut topic_of = Vec::new();
    for i in 0..spec.contagions {
        let author = rng.random_range(0..spec.users);
        // authors mostly write about the topic they prefer
        let z = if rng.random::<f64>() < 0.7 {
            preference[author]
        } else {
            rng.random_range(0..spec.topics)
        };
        let t0 = 10 * i as u64;
        let mut raw = Vec::new();
        for _ in 0..6 {
            let w = rng.random_range(0..8);
            raw.push(RawToken::new(format!("{}{w}", DEFAULT_CATEGORIES[z]), PartOfSpeech::Noun));
        }
        let mood = rng.random_range(0..3);
        for _ in 0..3 {
            let word = match (mood, rng.random::<f64>() < 0.8) {
                (0, true) => POSITIVE_WORDS[rng.random_range(0..POSITIVE_WORDS.len())],
                (1, true) => NEGATIVE_WORDS[rng.random_range(0..NEGATIVE_WORDS.len())],
                _ => NEUTRAL_WORDS[rng.random_range(0..NEUTRAL_WORDS.len())],
            };
            raw.push(RawToken::new(word, PartOfSpeech::Adjective));
        }
        raw.push(RawToken::new(FILLER[rng.random_range(0..FILLER.len())], PartOfSpeech::Other));
        contagions.push(Contagion {
            id: contagion_id(i),
            author: users[author].clone(),
            timestamp: t0,
            tokens: raw.into_iter().map(|t| categorize_token(t, &lexicon)).collect(),
        });
        topic_of.push(z);

        // independent cascade from the author
        let mut infected = vec![false; spec.users];
        infected[author] = true;
        let mut frontier = vec![(author, t0)];
        while let Some((u, t)) = frontier.pop() {
            for &f in &followers[u] {
                if infected[f] {
                    continue;
                }
                let p = if preference[f] == z { 3.0 * spec.forward_rate } else { spec.forward_rate };
                if rng.random::<f64>() < p.min(1.0) {
                    infected[f] = true;
                    let tf = t + rng.random_range(1..5);
                    retweets.push(RetweetEvent {
                        user: users[f].clone(),
                        contagion: contagion_id(i),
                        timestamp: tf,
                        via: Some(users[u].clone()),
                    });
                    frontier.push((f, tf));
                }
            }
        }
    }

    let categories: Vec<String> = DEFAULT_CATEGORIES[..spec.topics].iter().map(|s| s.to_string()).collect();
    let mut seeds = Vec::new();
    for (z, cat) in categories.iter().enumerate() {
        let members: Vec<usize> = (0..spec.contagions).filter(|&i| topic_of[i] == z).collect();
        for &i in members.iter().take(spec.seeds_per_category) {
            seeds.push(LabeledSeed {
                contagion: contagion_id(i),
                category: cat.clone(),
            });
        }
    }
    let log = CascadeLog::new(users, edges, contagions, retweets)?;
    Ok(SyntheticLog {
        log,
        lexicon,
        seeds,
        categories,
    })
}

fn index_of(user: &str) -> usize {
    user[1..].parse().expect("generated user id")
}

/// Writes the raw log, lexicon and seed labels in the ingest formats.
pub fn write_log(dir: &Path, s: &SyntheticLog) -> Result<()> {
    data::save_log(&s.log, dir)?;
    s.lexicon.save(&dir.join("lexicon.tsv"))?;
    let path = dir.join("seeds.tsv");
    let mut out = data::create(&path)?;
    for seed in &s.seeds {
        writeln!(out, "{}\t{}", seed.contagion, seed.category).map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}
