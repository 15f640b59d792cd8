//! Cross-validated comparison of the IP, UI and interaction models.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data;
use crate::error::{Error, Result};
use crate::model::{fit, fit_ui, Dataset, FitConfig, InteractionModel, Smoothing, Variant};
use crate::scenarios::InteractingScenario;
use crate::topics::ContagionRepresentation;

/// Probabilities below one half predict no infection.
pub fn threshold(p: f64) -> bool {
    p >= 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub fit_seconds: f64,
}

/// Confusion-matrix metrics over `(predicted, actual)` pairs with the
/// positive class as `true`.
pub fn compute_metrics(pairs: &[(bool, bool)]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for &(p, y) in pairs {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = if tp + fp == 0 {
        log::warn!("no positive predictions; precision set to 0");
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        precision,
        recall,
        accuracy: (tp + tn) as f64 / pairs.len() as f64,
        f1,
        fit_seconds: 0.0,
    })
}

/// Seeded label-stratified split into `folds` test sets. Each class is
/// shuffled and dealt round-robin, continuing from where the previous class
/// stopped so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidInput("need at least two folds".into()));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let smallest = pos.len().min(neg.len());
    if folds > smallest {
        return Err(Error::InvalidInput(format!(
            "{folds} folds but the smaller class has only {smallest} instances"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (n, i) in pos.into_iter().chain(neg).enumerate() {
        out[n % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Prior infection probability only.
    Ip,
    /// Role interactions only.
    Ui,
    /// Role and topic interactions.
    Iad,
    /// Role and topic-sentiment interactions.
    IadS,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ip" => Ok(ModelKind::Ip),
            "ui" => Ok(ModelKind::Ui),
            "iad" => Ok(ModelKind::Iad),
            "iad-s" | "iad_s" => Ok(ModelKind::IadS),
            other => Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|x| !x.trim().is_empty()).map(Self::parse).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ip => "ip",
            ModelKind::Ui => "ui",
            ModelKind::Iad => "iad",
            ModelKind::IadS => "iad-s",
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            ModelKind::IadS => Variant::TopicSentiment,
            _ => Variant::Topic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub fit: FitConfig,
    pub smoothing: Smoothing,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            fit: FitConfig::default(),
            smoothing: Smoothing::Laplace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: ModelKind,
    /// Fold means, with `fit_seconds` summed over folds.
    pub mean: Metrics,
    pub folds: Vec<Metrics>,
}

/// Fits a model of the given kind on a training set whose priors are
/// already assigned. `sentiments` is the sentiment count behind the
/// topic-sentiment features.
pub fn fit_kind(
    kind: ModelKind,
    train: &Dataset,
    sentiments: usize,
    cfg: &FitConfig,
) -> Result<Option<InteractionModel>> {
    let (r, d) = (train.roles.ncols(), train.features.ncols());
    Ok(match kind {
        ModelKind::Ip => None,
        ModelKind::Ui => Some(fit_ui(InteractionModel::zeros(Variant::Topic, r, d, sentiments), train, cfg)?.0),
        ModelKind::Iad => Some(fit(InteractionModel::zeros(Variant::Topic, r, d, sentiments), train, cfg)?.0),
        ModelKind::IadS => {
            if sentiments == 0 || d % sentiments != 0 {
                return Err(Error::Dimension(format!("{d} features do not split into {sentiments} sentiments")));
            }
            let zero = InteractionModel::zeros(Variant::TopicSentiment, r, d / sentiments, sentiments);
            Some(fit(zero, train, cfg)?.0)
        }
    })
}

fn run_fold(
    kind: ModelKind,
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    cfg: &CvConfig,
    sentiments: usize,
) -> Result<Metrics> {
    let started = Instant::now();
    let mut train = data.subset(train_idx);
    let priors = train.estimate_priors(cfg.smoothing)?;
    train.assign_priors(&priors)?;
    let model = fit_kind(kind, &train, sentiments, &cfg.fit)?;
    let fit_seconds = started.elapsed().as_secs_f64();

    let mut test = data.subset(test_idx);
    test.assign_priors(&priors)?;
    let probs = match &model {
        None => test.predict_ip(),
        Some(m) => test.predict(m)?,
    };
    let pairs: Vec<(bool, bool)> = probs
        .iter()
        .zip(&test.items)
        .map(|(p, it)| (threshold(*p), it.label))
        .collect();
    let mut m = compute_metrics(&pairs)?;
    m.fit_seconds = fit_seconds;
    Ok(m)
}

/// `folds`-fold cross-validation of each model kind. Priors are estimated
/// on each training split; role and topic representations are taken as
/// given.
pub fn cross_validate(
    scenarios: &[InteractingScenario],
    roles: &HashMap<String, Vec<f64>>,
    reps: &HashMap<String, ContagionRepresentation>,
    models: &[ModelKind],
    cfg: &CvConfig,
) -> Result<Vec<ReportRow>> {
    if models.is_empty() {
        return Err(Error::InvalidInput("no models to evaluate".into()));
    }
    let labels: Vec<bool> = scenarios.iter().map(|s| s.label).collect();
    let folds = stratified_folds(&labels, cfg.folds, cfg.seed)?;
    let sentiments = reps.values().next().map_or(1, |r| r.theta_o.len());

    let mut encoded: HashMap<Variant, Dataset> = HashMap::new();
    for m in models {
        let v = m.variant();
        if let std::collections::hash_map::Entry::Vacant(e) = encoded.entry(v) {
            e.insert(Dataset::encode(scenarios, roles, reps, v)?);
        }
    }

    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds.len())
        .map(|f| {
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            train.sort_unstable();
            (train, folds[f].clone())
        })
        .collect();

    models
        .iter()
        .map(|&kind| {
            let data = &encoded[&kind.variant()];
            let per_fold = splits
                .par_iter()
                .map(|(train, test)| run_fold(kind, data, train, test, cfg, sentiments))
                .collect::<Result<Vec<Metrics>>>()?;
            let n = per_fold.len() as f64;
            let mean = Metrics {
                precision: per_fold.iter().map(|m| m.precision).sum::<f64>() / n,
                recall: per_fold.iter().map(|m| m.recall).sum::<f64>() / n,
                accuracy: per_fold.iter().map(|m| m.accuracy).sum::<f64>() / n,
                f1: per_fold.iter().map(|m| m.f1).sum::<f64>() / n,
                fit_seconds: per_fold.iter().map(|m| m.fit_seconds).sum(),
            };
            Ok(ReportRow {
                model: kind,
                mean,
                folds: per_fold,
            })
        })
        .collect()
}

pub const REPORT_HEADER: &str = "model\tprecision\trecall\taccuracy\tf1\tfit_seconds";

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut out = data::create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in rows {
            let m = &r.mean;
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
                r.model.name(),
                m.precision,
                m.recall,
                m.accuracy,
                m.f1,
                m.fit_seconds
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
