//! Pipeline settings: defaults, then a `key = value` file, then flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use iad_core::data::DEFAULT_CATEGORIES;
use iad_core::eval::ModelKind;
use iad_core::model::{Smoothing, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Scenarios with ground-truth roles, topics and interactions.
    Scenarios,
    /// A raw cascade log for the full pipeline.
    Log,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub contagions: Option<PathBuf>,
    pub retweets: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub seeds: Option<PathBuf>,

    pub seed: u64,
    pub k: usize,
    pub topics: usize,
    pub sentiments: usize,
    pub tau: Option<f64>,
    pub variant: Variant,
    pub priors: Smoothing,

    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,

    pub alpha: f64,
    pub beta: f64,
    pub prior_floor: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: Option<usize>,

    pub damping: f64,
    pub gmm_max_iter: usize,
    pub gmm_reg: f64,

    pub categories: Vec<String>,
    pub cotrain_max_iter: usize,

    pub folds: usize,
    pub models: Vec<ModelKind>,

    pub synth_kind: SynthKind,
    pub synth_users: usize,
    pub synth_contagions: usize,
    pub synth_scenarios: usize,
    pub synth_roles: usize,
    pub synth_scale: f64,
    pub synth_concentration: f64,
    pub log_users: usize,
    pub log_contagions: usize,
    pub log_topics: usize,
    pub log_follows: usize,
    pub log_forward_rate: f64,
    pub log_seeds_per_category: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            input: None,
            users: None,
            edges: None,
            contagions: None,
            retweets: None,
            lexicon: None,
            seeds: None,
            seed: 0,
            k: 1,
            topics: 20,
            sentiments: 3,
            tau: Some(0.7),
            variant: Variant::Topic,
            priors: Smoothing::Laplace,
            learning_rate: 1e-3,
            epochs: 5,
            batch_size: None,
            alpha: 0.1,
            beta: 0.01,
            prior_floor: 0.01,
            iterations: 1000,
            burn_in: 200,
            sample_lag: None,
            damping: 0.85,
            gmm_max_iter: 500,
            gmm_reg: 1e-6,
            categories: DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            cotrain_max_iter: 20,
            folds: 5,
            models: vec![ModelKind::Ip, ModelKind::Ui, ModelKind::Iad, ModelKind::IadS],
            synth_kind: SynthKind::Scenarios,
            synth_users: 1000,
            synth_contagions: 1000,
            synth_scenarios: 10_000,
            synth_roles: 3,
            synth_scale: 0.1,
            synth_concentration: 0.1,
            log_users: 200,
            log_contagions: 400,
            log_topics: 4,
            log_follows: 8,
            log_forward_rate: 0.08,
            log_seeds_per_category: 10,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| format!("`{key}`: cannot parse `{value}`: {e}"))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, String>
where
    T::Err: Display,
{
    match value {
        "none" | "off" => Ok(None),
        v => num(key, v).map(Some),
    }
}

impl Settings {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        match key.trim() {
            "out" => self.out = PathBuf::from(v),
            "input" => self.input = path(),
            "users" => self.users = path(),
            "edges" => self.edges = path(),
            "contagions" => self.contagions = path(),
            "retweets" => self.retweets = path(),
            "lexicon" => self.lexicon = path(),
            "seeds" => self.seeds = path(),
            "seed" => self.seed = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "topics" => self.topics = num(key, v)?,
            "sentiments" => self.sentiments = num(key, v)?,
            "tau" => self.tau = optional(key, v)?,
            "variant" => self.variant = Variant::parse(v).map_err(|e| e.to_string())?,
            "priors" => self.priors = Smoothing::parse(v).map_err(|e| e.to_string())?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = optional(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "prior_floor" => self.prior_floor = num(key, v)?,
            "iterations" => self.iterations = num(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "sample_lag" => self.sample_lag = optional(key, v)?,
            "damping" => self.damping = num(key, v)?,
            "gmm_max_iter" => self.gmm_max_iter = num(key, v)?,
            "gmm_reg" => self.gmm_reg = num(key, v)?,
            "categories" => {
                self.categories = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            "cotrain_max_iter" => self.cotrain_max_iter = num(key, v)?,
            "folds" => self.folds = num(key, v)?,
            "models" => self.models = ModelKind::parse_list(v).map_err(|e| e.to_string())?,
            "synth_kind" => {
                self.synth_kind = match v {
                    "scenarios" => SynthKind::Scenarios,
                    "log" => SynthKind::Log,
                    other => return Err(format!("`synth_kind`: expected `scenarios` or `log`, got `{other}`")),
                }
            }
            "synth_users" => self.synth_users = num(key, v)?,
            "synth_contagions" => self.synth_contagions = num(key, v)?,
            "synth_scenarios" => self.synth_scenarios = num(key, v)?,
            "synth_roles" => self.synth_roles = num(key, v)?,
            "synth_scale" => self.synth_scale = num(key, v)?,
            "synth_concentration" => self.synth_concentration = num(key, v)?,
            "log_users" => self.log_users = num(key, v)?,
            "log_contagions" => self.log_contagions = num(key, v)?,
            "log_topics" => self.log_topics = num(key, v)?,
            "log_follows" => self.log_follows = num(key, v)?,
            "log_forward_rate" => self.log_forward_rate = num(key, v)?,
            "log_seeds_per_category" => self.log_seeds_per_category = num(key, v)?,
            other => return Err(format!("unknown setting `{other}`")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected `key = value`", origin.display(), i + 1))?;
            self.set(key, value)
                .map_err(|e| format!("{}:{}: {e}", origin.display(), i + 1))?;
        }
        Ok(())
    }

    /// Range checks that do not depend on any input file.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("topics", self.topics),
            ("sentiments", self.sentiments),
            ("epochs", self.epochs),
            ("iterations", self.iterations),
            ("folds", self.folds),
            ("synth_users", self.synth_users),
            ("synth_contagions", self.synth_contagions),
            ("synth_scenarios", self.synth_scenarios),
            ("synth_roles", self.synth_roles),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("`{name}` must be positive"));
            }
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("`tau` = {t} outside [0, 1]"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(format!("`learning_rate` = {} must be positive", self.learning_rate));
        }
        if self.batch_size == Some(0) {
            return Err("`batch_size` must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(format!("`damping` = {} outside (0, 1)", self.damping));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.prior_floor > 0.0) {
            return Err("`alpha`, `beta` and `prior_floor` must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return Err(format!(
                "`burn_in` = {} must be below `iterations` = {}",
                self.burn_in, self.iterations
            ));
        }
        if self.folds < 2 {
            return Err("`folds` must be at least 2".into());
        }
        if self.models.is_empty() {
            return Err("`models` is empty".into());
        }
        if self.categories.is_empty() {
            return Err("`categories` is empty".into());
        }
        if self.synth_scale <= 0.0 || self.synth_concentration <= 0.0 {
            return Err("`synth_scale` and `synth_concentration` must be positive".into());
        }
        Ok(())
    }

    fn input_file(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| {
            self.input
                .as_deref()
                .unwrap_or_else(|| Path::new("."))
                .join(name)
        })
    }

    pub fn raw_users(&self) -> PathBuf {
        self.input_file(&self.users, "users.tsv")
    }

    pub fn raw_edges(&self) -> PathBuf {
        self.input_file(&self.edges, "edges.tsv")
    }

    pub fn raw_contagions(&self) -> PathBuf {
        self.input_file(&self.contagions, "contagions.jsonl")
    }

    pub fn raw_retweets(&self) -> PathBuf {
        self.input_file(&self.retweets, "retweets.tsv")
    }

    pub fn raw_lexicon(&self) -> PathBuf {
        self.input_file(&self.lexicon, "lexicon.tsv")
    }

    /// Seed labels: explicit path, else the copy made by `ingest`.
    pub fn seeds_file(&self) -> PathBuf {
        self.seeds.clone().unwrap_or_else(|| self.out.join(files::SEEDS))
    }
}

/// Fixed artifact names under the output directory.
pub mod files {
    pub const LEXICON: &str = "lexicon.tsv";
    pub const SEEDS: &str = "seeds.tsv";
    pub const TOKENS: &str = "tokens.tsv";
    pub const FEATURES: &str = "features.tsv";
    pub const ROLES: &str = "roles.tsv";
    pub const ROLE_MODEL: &str = "role_model.json";
    pub const TOPICS: &str = "topics.jsonl";
    pub const TOPIC_MODEL: &str = "topic_model.json";
    pub const LABELS: &str = "labels.tsv";
    pub const SCENARIOS: &str = "scenarios.tsv";
    pub const MODEL: &str = "model.json";
    pub const PRIORS: &str = "priors.tsv";
    pub const PREDICTIONS: &str = "predictions.tsv";
    pub const REPORT: &str = "report.tsv";
    pub const DELTA_ROLE: &str = "delta_role.tsv";
    pub const LAMBDA_CATEG: &str = "lambda_categ.tsv";
    pub const OMEGA_CATEG_ROLE: &str = "omega_categ_role.tsv";
    pub const OMEGA_S_ROLE: &str = "omega_s_role.tsv";
    pub const LAMBDA_S: &str = "lambda_s.tsv";
}
