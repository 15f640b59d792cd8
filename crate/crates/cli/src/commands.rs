//! One function per pipeline stage. Every stage checks its inputs exist
//! before doing any work and writes fixed file names under `out`.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use iad_core::categories::{
    build_views, category_interactions, cotrain, label_categories, read_labels, write_category_matrices, write_labels,
    CategoryProfile, CoTrainConfig,
};
use iad_core::data::{load_log, load_seeds, save_log, CascadeLog, LogPaths, SentimentLexicon};
use iad_core::eval::{cross_validate, write_report, CvConfig};
use iad_core::graph::{read_features, user_features, write_features, Graph, DEFAULT_TOLERANCE};
use iad_core::model::{
    fit, priors_from_training, read_priors, write_matrix, write_priors, Dataset, FitConfig, InteractionModel, Variant,
};
use iad_core::roles::{fit_roles, read_roles, write_roles, GmmConfig};
use iad_core::scenarios::{balance, extract_scenarios, filter_by_sentiment, read_scenarios, write_scenarios};
use iad_core::synth::{generate, generate_log, write_log, write_synthetic, LogSpec, SyntheticSpec};
use iad_core::topics::{
    fit_ldas, read_representations, write_representations, ContagionRepresentation, Corpus, TopicConfig,
};

use crate::config::{files, Settings, SynthKind};

#[derive(Debug)]
pub enum Failure {
    /// An input artifact does not exist.
    Missing(PathBuf),
    /// The settings are inconsistent.
    Config(String),
    /// Anything that fails while running a stage.
    Run(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Missing(_) => 2,
            Failure::Config(_) => 3,
            Failure::Run(_) => 1,
        }
    }

    /// One tab-separated line: `error`, a kind, and the detail.
    pub fn line(&self) -> String {
        let (kind, detail) = match self {
            Failure::Missing(p) => ("missing_artifact", p.display().to_string()),
            Failure::Config(m) => ("config", m.clone()),
            Failure::Run(m) => ("runtime", m.clone()),
        };
        format!("error\t{kind}\t{}", detail.replace(['\n', '\t'], " "))
    }
}

impl From<iad_core::Error> for Failure {
    fn from(e: iad_core::Error) -> Self {
        match e {
            iad_core::Error::Io { path, source } if source.kind() == ErrorKind::NotFound => Failure::Missing(path),
            other => Failure::Run(other.to_string()),
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

fn require(paths: &[&Path]) -> Outcome {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(Failure::Missing(p.to_path_buf())),
        None => Ok(()),
    }
}

fn out(s: &Settings, name: &str) -> PathBuf {
    s.out.join(name)
}

/// The ingested log under `out`.
fn ingested_log(s: &Settings) -> Result<CascadeLog, Failure> {
    let paths = LogPaths::in_dir(&s.out);
    let lexicon = out(s, files::LEXICON);
    let mut needed: Vec<&Path> = paths.all().to_vec();
    needed.push(&lexicon);
    require(&needed)?;
    let lex = SentimentLexicon::load(&lexicon)?;
    Ok(load_log(&paths, &lex)?)
}

fn role_map(s: &Settings) -> Result<HashMap<String, Vec<f64>>, Failure> {
    let path = out(s, files::ROLES);
    require(&[&path])?;
    Ok(read_roles(&path)?.into_iter().map(|r| (r.user, r.theta)).collect())
}

fn topic_map(s: &Settings) -> Result<HashMap<String, ContagionRepresentation>, Failure> {
    let path = out(s, files::TOPICS);
    require(&[&path])?;
    Ok(read_representations(&path)?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect())
}

fn fit_config(s: &Settings) -> FitConfig {
    FitConfig {
        learning_rate: s.learning_rate,
        epochs: s.epochs,
        seed: s.seed,
        batch_size: s.batch_size,
        ..Default::default()
    }
}

pub fn ingest(s: &Settings) -> Outcome {
    let raw = LogPaths {
        users: s.raw_users(),
        edges: s.raw_edges(),
        contagions: s.raw_contagions(),
        retweets: s.raw_retweets(),
    };
    let lexicon = s.raw_lexicon();
    let mut needed: Vec<&Path> = raw.all().to_vec();
    needed.push(&lexicon);
    require(&needed)?;
    let lex = SentimentLexicon::load(&lexicon)?;
    let log = load_log(&raw, &lex)?;
    save_log(&log, &s.out)?;
    lex.save(&out(s, files::LEXICON))?;

    let mut rows = Vec::new();
    for c in &log.contagions {
        for t in &c.tokens {
            let polarity = match t.lexicon_polarity {
                Some(iad_core::data::Polarity::Positive) => "pos",
                Some(iad_core::data::Polarity::Negative) => "neg",
                None => "",
            };
            rows.push(format!(
                "{}\t{}\t{}\t{}\t{polarity}",
                c.id,
                t.surface,
                t.pos.as_str(),
                t.category as u8
            ));
        }
    }
    std::fs::write(out(s, files::TOKENS), rows.iter().map(|r| format!("{r}\n")).collect::<String>())
        .map_err(|e| Failure::Run(format!("{}: {e}", out(s, files::TOKENS).display())))?;

    let seeds = s
        .seeds
        .clone()
        .or_else(|| s.input.as_ref().map(|d| d.join(files::SEEDS)))
        .filter(|p| p.is_file());
    if let Some(p) = seeds {
        let parsed = load_seeds(&p, &s.categories)?;
        let known: std::collections::HashSet<&str> = log.contagions.iter().map(|c| c.id.as_str()).collect();
        if let Some(bad) = parsed.iter().find(|x| !known.contains(x.contagion.as_str())) {
            return Err(Failure::Run(format!("seed contagion `{}` is not in the log", bad.contagion)));
        }
        let text: String = parsed.iter().map(|x| format!("{}\t{}\n", x.contagion, x.category)).collect();
        std::fs::write(out(s, files::SEEDS), text)
            .map_err(|e| Failure::Run(format!("{}: {e}", out(s, files::SEEDS).display())))?;
    }
    log::info!(
        "ingested {} users, {} edges, {} contagions, {} retweets",
        log.users.len(),
        log.edges.len(),
        log.contagions.len(),
        log.retweets.len()
    );
    Ok(())
}

pub fn features(s: &Settings) -> Outcome {
    let log = ingested_log(s)?;
    let graph = Graph::from_log(&log)?;
    let f = user_features(&graph, s.damping, DEFAULT_TOLERANCE)?;
    write_features(&out(s, files::FEATURES), &f)?;
    Ok(())
}

pub fn roles(s: &Settings) -> Outcome {
    let path = out(s, files::FEATURES);
    require(&[&path])?;
    let f = read_features(&path)?;
    let cfg = GmmConfig {
        max_iter: s.gmm_max_iter,
        reg: s.gmm_reg,
        seed: s.seed,
        ..Default::default()
    };
    let (model, dists) = fit_roles(&f, &cfg)?;
    write_roles(&out(s, files::ROLES), &dists)?;
    model.save(&out(s, files::ROLE_MODEL))?;
    Ok(())
}

pub fn topics(s: &Settings) -> Outcome {
    let log = ingested_log(s)?;
    let corpus = Corpus::from_contagions(&log.contagions);
    let cfg = TopicConfig {
        topics: s.topics,
        sentiments: s.sentiments,
        alpha: s.alpha,
        beta: s.beta,
        prior_floor: s.prior_floor,
        iterations: s.iterations,
        burn_in: s.burn_in,
        sample_lag: s.sample_lag,
        seed: s.seed,
    };
    let fitted = fit_ldas(&corpus, &cfg)?;
    write_representations(&out(s, files::TOPICS), &fitted.representations)?;
    fitted.write_dump(&out(s, files::TOPIC_MODEL), &corpus, &cfg)?;
    Ok(())
}

pub fn classify(s: &Settings) -> Outcome {
    let seeds_path = s.seeds_file();
    require(&[&seeds_path])?;
    let log = ingested_log(s)?;
    let reps = topic_map(s)?;
    let seeds = load_seeds(&seeds_path, &s.categories)?;
    let views = build_views(&log.contagions, &reps)?;
    let cfg = CoTrainConfig {
        max_iter: s.cotrain_max_iter,
        ..Default::default()
    };
    let outcome = cotrain(&seeds, &views, &cfg)?;
    log::info!(
        "co-training ran {} iterations; labeled-set sizes {:?}",
        outcome.iterations,
        outcome.history
    );
    write_labels(&out(s, files::LABELS), &outcome.labels)?;
    Ok(())
}

pub fn scenarios(s: &Settings) -> Outcome {
    let log = ingested_log(s)?;
    let reps = topic_map(s)?;
    let extracted = extract_scenarios(&log, s.k);
    let n = extracted.len();
    let kept = filter_by_sentiment(extracted, &reps, s.tau)?;
    log::info!("{} of {n} scenarios pass the sentiment filter", kept.len());
    let balanced = balance(kept, s.seed)?;
    write_scenarios(&out(s, files::SCENARIOS), &balanced)?;
    Ok(())
}

fn model_for(variant: Variant, roles: &HashMap<String, Vec<f64>>, reps: &HashMap<String, ContagionRepresentation>) -> Result<InteractionModel, Failure> {
    let r = roles.values().next().map(Vec::len).ok_or_else(|| Failure::Run("no role distributions".into()))?;
    let rep = reps.values().next().ok_or_else(|| Failure::Run("no topic representations".into()))?;
    Ok(InteractionModel::zeros(variant, r, rep.theta_t.len(), rep.theta_o.len()))
}

pub fn fit_model(s: &Settings) -> Outcome {
    let sc_path = out(s, files::SCENARIOS);
    require(&[&sc_path, &out(s, files::ROLES), &out(s, files::TOPICS)])?;
    let scenarios = read_scenarios(&sc_path)?;
    let roles = role_map(s)?;
    let reps = topic_map(s)?;
    let priors = priors_from_training(&scenarios, s.priors)?;
    let mut data = Dataset::encode(&scenarios, &roles, &reps, s.variant)?;
    data.assign_priors(&priors)?;
    let (model, report) = fit(model_for(s.variant, &roles, &reps)?, &data, &fit_config(s))?;
    log::info!("{} updates applied, {} skipped", report.applied, report.skipped);
    model.save(&out(s, files::MODEL))?;
    write_priors(&out(s, files::PRIORS), &priors)?;
    Ok(())
}

pub fn predict(s: &Settings) -> Outcome {
    let (model_path, priors_path, sc_path) = (out(s, files::MODEL), out(s, files::PRIORS), out(s, files::SCENARIOS));
    require(&[&model_path, &priors_path, &sc_path, &out(s, files::ROLES), &out(s, files::TOPICS)])?;
    let model = InteractionModel::load(&model_path)?;
    let priors = read_priors(&priors_path)?;
    let scenarios = read_scenarios(&sc_path)?;
    let mut data = Dataset::encode(&scenarios, &role_map(s)?, &topic_map(s)?, model.variant)?;
    data.assign_priors(&priors)?;
    let probs = data.predict(&model)?;
    let rows: String = scenarios
        .iter()
        .zip(&probs)
        .map(|(sc, p)| {
            format!(
                "{}\t{}\t{}\t{p}\t{}\t{}\n",
                sc.user,
                sc.neighbor,
                sc.contagion,
                u8::from(iad_core::eval::threshold(*p)),
                u8::from(sc.label)
            )
        })
        .collect();
    let path = out(s, files::PREDICTIONS);
    std::fs::write(&path, format!("# user\tneighbor\tcontagion\tprobability\tpredicted\tlabel\n{rows}"))
        .map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

pub fn eval(s: &Settings) -> Outcome {
    let sc_path = out(s, files::SCENARIOS);
    require(&[&sc_path, &out(s, files::ROLES), &out(s, files::TOPICS)])?;
    let scenarios = read_scenarios(&sc_path)?;
    let cfg = CvConfig {
        folds: s.folds,
        seed: s.seed,
        fit: fit_config(s),
        smoothing: s.priors,
    };
    let rows = cross_validate(&scenarios, &role_map(s)?, &topic_map(s)?, &s.models, &cfg)?;
    write_report(&out(s, files::REPORT), &rows)?;
    Ok(())
}

pub fn synth(s: &Settings) -> Outcome {
    match s.synth_kind {
        SynthKind::Scenarios => {
            let spec = SyntheticSpec {
                users: s.synth_users,
                contagions: s.synth_contagions,
                scenarios: s.synth_scenarios,
                k: s.k,
                roles: s.synth_roles,
                topics: s.topics,
                sentiments: s.sentiments,
                variant: s.variant,
                scale: s.synth_scale,
                concentration: s.synth_concentration,
                seed: s.seed,
            };
            let data = generate(&spec)?;
            write_synthetic(&s.out, &data)?;
        }
        SynthKind::Log => {
            let spec = LogSpec {
                users: s.log_users,
                contagions: s.log_contagions,
                topics: s.log_topics,
                follows: s.log_follows,
                forward_rate: s.log_forward_rate,
                seeds_per_category: s.log_seeds_per_category,
                seed: s.seed,
            };
            write_log(&s.out, &generate_log(&spec)?)?;
        }
    }
    Ok(())
}

fn role_names(n: usize) -> Vec<String> {
    if n == 3 {
        ["authority", "hub", "ordinary"].map(String::from).to_vec()
    } else {
        (0..n).map(|i| format!("role{i}")).collect()
    }
}

pub fn export_interactions(s: &Settings) -> Outcome {
    let (model_path, labels_path) = (out(s, files::MODEL), out(s, files::LABELS));
    require(&[&model_path, &labels_path, &out(s, files::TOPICS)])?;
    let model = InteractionModel::load(&model_path)?;
    let roles = role_names(model.roles);
    write_matrix(&out(s, files::DELTA_ROLE), &model.delta, &roles, &roles)?;

    let labels = read_labels(&labels_path)?;
    let present = label_categories(&labels);
    let mut categories: Vec<String> = s.categories.iter().filter(|c| present.contains(c)).cloned().collect();
    categories.extend(present.into_iter().filter(|c| !s.categories.contains(c)));
    let profile = CategoryProfile::new(&categories, &labels, &topic_map(s)?)?;
    let ci = category_interactions(&profile, &model)?;
    write_category_matrices(&out(s, files::LAMBDA_CATEG), &out(s, files::OMEGA_CATEG_ROLE), &ci)?;

    if model.variant == Variant::TopicSentiment {
        let d = model.derive_sentiment_interactions()?;
        let names: Vec<String> = if model.sentiments == 3 {
            iad_core::topics::SENTIMENT_NAMES.map(String::from).to_vec()
        } else {
            (0..model.sentiments).map(|i| format!("sentiment{i}")).collect()
        };
        write_matrix(&out(s, files::OMEGA_S_ROLE), &d.omega_s, &roles, &names)?;
        write_matrix(&out(s, files::LAMBDA_S), &d.lambda_s, &names, &names)?;
    }
    Ok(())
}
