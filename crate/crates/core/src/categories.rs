//! Explicit contagion categories by co-training over two topic views, and
//! projection of latent-topic interactions onto those categories.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::data::{self, Contagion, LabeledSeed};
use crate::error::{Error, Result};
use crate::model::{write_matrix, InteractionModel};
use crate::topics::ContagionRepresentation;

/// Seeds per category below which co-training warns.
pub const MIN_SEEDS_PER_CATEGORY: usize = 10;

/// The two feature views of one contagion.
#[derive(Debug, Clone, PartialEq)]
pub struct ContagionViews {
    pub id: String,
    /// The contagion's own topic distribution.
    pub view1: Vec<f64>,
    /// Mean topic distribution of the author's other contagions; `view1`
    /// when the author has none.
    pub view2: Vec<f64>,
}

/// Views for every contagion, in input order.
pub fn build_views(
    contagions: &[Contagion],
    reps: &HashMap<String, ContagionRepresentation>,
) -> Result<Vec<ContagionViews>> {
    let theta = |id: &str| -> Result<&[f64]> {
        reps.get(id).map(|r| r.theta_t.as_slice()).ok_or_else(|| Error::Missing {
            kind: "topic representation",
            id: id.to_string(),
        })
    };
    let mut by_author: HashMap<&str, Vec<&str>> = HashMap::new();
    for c in contagions {
        by_author.entry(&c.author).or_default().push(&c.id);
    }
    let dim = match contagions.first() {
        Some(c) => theta(&c.id)?.len(),
        None => return Ok(Vec::new()),
    };
    contagions
        .iter()
        .map(|c| {
            let view1 = theta(&c.id)?.to_vec();
            if view1.len() != dim {
                return Err(Error::Dimension(format!(
                    "`{}` has {} topics, expected {dim}",
                    c.id,
                    view1.len()
                )));
            }
            let others: Vec<&str> = by_author[c.author.as_str()]
                .iter()
                .copied()
                .filter(|id| *id != c.id)
                .collect();
            let view2 = if others.is_empty() {
                view1.clone()
            } else {
                let mut sum = vec![0.0; dim];
                for id in &others {
                    let t = theta(id)?;
                    if t.len() != dim {
                        return Err(Error::Dimension(format!("`{id}` has {} topics, expected {dim}", t.len())));
                    }
                    for (s, x) in sum.iter_mut().zip(t) {
                        *s += x;
                    }
                }
                let k = others.len() as f64;
                sum.into_iter().map(|s| s / k).collect()
            };
            Ok(ContagionViews {
                id: c.id.clone(),
                view1,
                view2,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 2000,
            tolerance: 1e-7,
        }
    }
}

/// Multinomial logistic regression fitted by full-batch gradient descent
/// from zero weights. The objective is strictly convex, so the result is
/// a deterministic function of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    /// `classes × (features + 1)`; the last column is the bias.
    pub weights: Array2<f64>,
}

impl SoftmaxClassifier {
    pub fn train(x: &[&[f64]], y: &[usize], classes: usize, cfg: &ClassifierConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows for {} labels",
                x.len(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidInput(format!("class {bad} out of range for {classes} classes")));
        }
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("feature rows differ in length".into()));
        }
        let n = x.len() as f64;
        let rows: Vec<Array1<f64>> = x
            .iter()
            .map(|r| r.iter().copied().chain(std::iter::once(1.0)).collect())
            .collect();
        // Lipschitz bound of the mean softmax loss gradient.
        let radius = rows.iter().map(|r| r.dot(r)).fold(0.0, f64::max);
        let step = 1.0 / (0.5 * radius + cfg.l2);

        let mut w = Array2::<f64>::zeros((classes, d + 1));
        let mut grad = Array2::<f64>::zeros((classes, d + 1));
        for _ in 0..cfg.max_iter {
            grad.fill(0.0);
            for (r, &label) in rows.iter().zip(y) {
                let p = softmax(w.dot(r).view());
                for (c, mut g) in grad.rows_mut().into_iter().enumerate() {
                    let e = p[c] - if c == label { 1.0 } else { 0.0 };
                    g.scaled_add(e / n, r);
                }
            }
            for (mut g, wr) in grad.rows_mut().into_iter().zip(w.rows()) {
                for j in 0..d {
                    g[j] += cfg.l2 * wr[j];
                }
            }
            let norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            w.scaled_add(-step, &grad);
            if norm < cfg.tolerance {
                break;
            }
        }
        Ok(Self { weights: w })
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let d = self.weights.ncols() - 1;
        let scores: Array1<f64> = self
            .weights
            .rows()
            .into_iter()
            .map(|w| w.iter().take(d).zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d])
            .collect();
        softmax(scores.view()).to_vec()
    }

    /// Most probable class; the lowest index wins ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::topics::argmax(&self.probabilities(x))
    }
}

fn softmax(scores: ArrayView1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let e = scores.mapv(|s| (s - max).exp());
    let z = e.sum();
    e / z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelSource {
    Seed,
    /// Both classifiers agreed during co-training.
    Agreement,
    /// Still unlabeled at termination; classifier 1's prediction.
    LowConfidence,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Seed => "seed",
            LabelSource::Agreement => "agreed",
            LabelSource::LowConfidence => "low_confidence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "seed" => Some(LabelSource::Seed),
            "agreed" => Some(LabelSource::Agreement),
            "low_confidence" => Some(LabelSource::LowConfidence),
            _ => None,
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLabel {
    pub contagion: String,
    pub category: String,
    pub source: LabelSource,
}

impl CategoryLabel {
    pub fn low_confidence(&self) -> bool {
        self.source == LabelSource::LowConfidence
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoTrainConfig {
    pub max_iter: usize,
    pub classifier: ClassifierConfig,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        Self {
            max_iter: 20,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTrainOutcome {
    /// Categories present in the seeds, sorted.
    pub categories: Vec<String>,
    /// One label per contagion, in view order.
    pub labels: Vec<CategoryLabel>,
    /// Labeled-set size after each iteration, starting with the seed count.
    pub history: Vec<usize>,
    pub iterations: usize,
}

/// Co-training: each iteration trains one classifier per view on the
/// labeled set and promotes every unlabeled contagion on which both agree.
/// Stops when a pass promotes nothing, nothing is left, or after
/// `max_iter` iterations.
pub fn cotrain(seeds: &[LabeledSeed], views: &[ContagionViews], cfg: &CoTrainConfig) -> Result<CoTrainOutcome> {
    let categories: Vec<String> = seeds
        .iter()
        .map(|s| s.category.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if categories.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "co-training needs at least 2 seed categories, found {}",
            categories.len()
        )));
    }
    let class_of: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    for c in &categories {
        let n = seeds.iter().filter(|s| &s.category == c).count();
        if n < MIN_SEEDS_PER_CATEGORY {
            log::warn!("category `{c}` has only {n} seed contagions");
        }
    }
    let index: HashMap<&str, usize> = views.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();

    let mut label: Vec<Option<(usize, LabelSource)>> = vec![None; views.len()];
    for s in seeds {
        let &i = index.get(s.contagion.as_str()).ok_or_else(|| Error::Missing {
            kind: "contagion for seed",
            id: s.contagion.clone(),
        })?;
        let c = class_of[s.category.as_str()];
        match label[i] {
            Some((prev, _)) if prev != c => {
                return Err(Error::InvalidInput(format!(
                    "seed `{}` is labeled both `{}` and `{}`",
                    s.contagion, categories[prev], s.category
                )))
            }
            _ => label[i] = Some((c, LabelSource::Seed)),
        }
    }

    let labeled_count = |label: &[Option<(usize, LabelSource)>]| label.iter().filter(|l| l.is_some()).count();
    let mut history = vec![labeled_count(&label)];
    let mut iterations = 0;
    let mut classifier1 = None;
    while iterations < cfg.max_iter && label.iter().any(Option::is_none) {
        iterations += 1;
        let (c1, c2) = train_pair(views, &label, categories.len(), &cfg.classifier)?;
        let promoted: Vec<(usize, usize)> = (0..views.len())
            .into_par_iter()
            .filter(|&i| label[i].is_none())
            .filter_map(|i| {
                let a = c1.predict(&views[i].view1);
                (a == c2.predict(&views[i].view2)).then_some((i, a))
            })
            .collect();
        classifier1 = Some(c1);
        for &(i, c) in &promoted {
            label[i] = Some((c, LabelSource::Agreement));
        }
        history.push(labeled_count(&label));
        if promoted.is_empty() {
            break;
        }
        classifier1 = None;
    }

    if label.iter().any(Option::is_none) {
        let c1 = match classifier1 {
            Some(c) => c,
            None => train_pair(views, &label, categories.len(), &cfg.classifier)?.0,
        };
        for (l, v) in label.iter_mut().zip(views) {
            if l.is_none() {
                *l = Some((c1.predict(&v.view1), LabelSource::LowConfidence));
            }
        }
    }

    let labels = views
        .iter()
        .zip(label)
        .map(|(v, l)| {
            let (c, source) = l.expect("every contagion labeled");
            CategoryLabel {
                contagion: v.id.clone(),
                category: categories[c].clone(),
                source,
            }
        })
        .collect();
    Ok(CoTrainOutcome {
        categories,
        labels,
        history,
        iterations,
    })
}

fn train_pair(
    views: &[ContagionViews],
    label: &[Option<(usize, LabelSource)>],
    classes: usize,
    cfg: &ClassifierConfig,
) -> Result<(SoftmaxClassifier, SoftmaxClassifier)> {
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut y = Vec::new();
    for (v, l) in views.iter().zip(label) {
        if let Some((c, _)) = l {
            x1.push(v.view1.as_slice());
            x2.push(v.view2.as_slice());
            y.push(*c);
        }
    }
    let (a, b) = rayon::join(
        || SoftmaxClassifier::train(&x1, &y, classes, cfg),
        || SoftmaxClassifier::train(&x2, &y, classes, cfg),
    );
    Ok((a?, b?))
}

/// Mean topic distribution of each category's contagions.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryProfile {
    pub categories: Vec<String>,
    /// `categories × topics`; each row on the simplex.
    pub phi: Array2<f64>,
}

impl CategoryProfile {
    pub fn new(
        categories: &[String],
        labels: &[CategoryLabel],
        reps: &HashMap<String, ContagionRepresentation>,
    ) -> Result<Self> {
        let row: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let topics = reps
            .values()
            .next()
            .map(|r| r.theta_t.len())
            .ok_or_else(|| Error::InvalidInput("no topic representations".into()))?;
        let mut phi = Array2::<f64>::zeros((categories.len(), topics));
        let mut counts = vec![0usize; categories.len()];
        for l in labels {
            let &i = row.get(l.category.as_str()).ok_or_else(|| {
                Error::InvalidInput(format!("label for `{}` has unknown category `{}`", l.contagion, l.category))
            })?;
            let rep = reps.get(&l.contagion).ok_or_else(|| Error::Missing {
                kind: "topic representation",
                id: l.contagion.clone(),
            })?;
            if rep.theta_t.len() != topics {
                return Err(Error::Dimension(format!(
                    "`{}` has {} topics, expected {topics}",
                    l.contagion,
                    rep.theta_t.len()
                )));
            }
            for (p, x) in phi.row_mut(i).iter_mut().zip(&rep.theta_t) {
                *p += x;
            }
            counts[i] += 1;
        }
        for (i, (mut r, &n)) in phi.rows_mut().into_iter().zip(&counts).enumerate() {
            if n == 0 {
                return Err(Error::InvalidInput(format!(
                    "category `{}` has no labeled contagions",
                    categories[i]
                )));
            }
            r /= n as f64;
        }
        Ok(Self {
            categories: categories.to_vec(),
            phi,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryInteractions {
    pub profile: CategoryProfile,
    /// `categories × categories`: effect of category `k` (column) on `i` (row).
    pub lambda: Array2<f64>,
    /// `roles × categories`.
    pub omega: Array2<f64>,
}

/// `Λ_categ = φ Λ φᵀ` and `Ω_categ = Ω φᵀ` from the model's topic-level
/// matrices.
pub fn category_interactions(profile: &CategoryProfile, model: &InteractionModel) -> Result<CategoryInteractions> {
    let (lambda_t, omega_t) = model.topic_marginals()?;
    let phi = &profile.phi;
    if phi.ncols() != lambda_t.nrows() {
        return Err(Error::Dimension(format!(
            "profile has {} topics, model has {}",
            phi.ncols(),
            lambda_t.nrows()
        )));
    }
    Ok(CategoryInteractions {
        profile: profile.clone(),
        lambda: phi.dot(&lambda_t).dot(&phi.t()),
        omega: omega_t.dot(&phi.t()),
    })
}

pub fn write_labels(path: &Path, labels: &[CategoryLabel]) -> Result<()> {
    data::write_lines(
        path,
        labels
            .iter()
            .map(|l| format!("{}\t{}\t{}", l.contagion, l.category, l.source)),
    )
}

pub fn read_labels(path: &Path) -> Result<Vec<CategoryLabel>> {
    data::read_records(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse(path, line_no, "expected `contagion<TAB>category<TAB>flag`"));
            }
            let source = LabelSource::parse(f[2])
                .ok_or_else(|| Error::parse(path, line_no, format!("unknown confidence flag `{}`", f[2])))?;
            Ok(CategoryLabel {
                contagion: f[0].to_string(),
                category: f[1].to_string(),
                source,
            })
        })
        .collect()
}

/// Categories in first-appearance order with duplicates removed.
pub fn label_categories(labels: &[CategoryLabel]) -> Vec<String> {
    let mut seen = HashSet::new();
    labels
        .iter()
        .filter(|l| seen.insert(l.category.as_str()))
        .map(|l| l.category.clone())
        .collect()
}

/// Writes `lambda` (`categories × categories`) and `omega`
/// (`roles × categories`) as TSV with category names as headers.
pub fn write_category_matrices(lambda_path: &Path, omega_path: &Path, ci: &CategoryInteractions) -> Result<()> {
    let names = &ci.profile.categories;
    write_matrix(lambda_path, &ci.lambda, names, names)?;
    let roles: Vec<String> = (0..ci.omega.nrows()).map(|r| format!("role{r}")).collect();
    write_matrix(omega_path, &ci.omega, &roles, names)
}
