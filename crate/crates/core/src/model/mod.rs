//! The interaction model: role and topic interaction matrices that shift a
//! contagion's prior infection probability, plus the IP and UI baselines.
//!
//! For examining user `a`, exposing neighbor `b`, examined contagion `i` and
//! window `k = 1..K`:
//!
//! ```text
//! p0 = P + Ω(a,i)            Ω(a,i) = ϑ_aᵀ Ω x_i
//! pb = P + Ω(a,i) + Δ(a,b)   Δ(a,b) = ϑ_aᵀ Δ ϑ_b
//! pk = P + Λ(i,k) + Ω(a,i)   Λ(i,k) = x_iᵀ Λ x_k
//! π  = pb / p0^K · Π_k pk
//! ```
//!
//! `x` is the topic distribution θᵗ, or the flattened topic-major joint
//! θᵗ⁻ᵒ for the topic-sentiment variant.

mod fit;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use fit::{fit, fit_ui, FitConfig, FitReport, Gradient, Trainable};

use crate::data;
use crate::error::{Error, Result};
use crate::scenarios::InteractingScenario;
use crate::topics::ContagionRepresentation;

/// Component probabilities are clamped to `[EPS, 1 - EPS]` at prediction.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Topic,
    TopicSentiment,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "topic" => Ok(Variant::Topic),
            "topic_sentiment" | "topic-sentiment" => Ok(Variant::TopicSentiment),
            other => Err(Error::InvalidInput(format!("unknown variant `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Topic => "topic",
            Variant::TopicSentiment => "topic_sentiment",
        }
    }

    /// Contagion feature vector for this variant.
    pub fn features(self, rep: &ContagionRepresentation) -> &[f64] {
        match self {
            Variant::Topic => &rep.theta_t,
            Variant::TopicSentiment => &rep.theta_ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionModel {
    pub variant: Variant,
    pub roles: usize,
    pub topics: usize,
    pub sentiments: usize,
    pub seed: u64,
    /// `roles × roles`.
    pub delta: Array2<f64>,
    /// `d × d` with `d` the feature dimension.
    pub lambda: Array2<f64>,
    /// `roles × d`.
    pub omega: Array2<f64>,
}

impl InteractionModel {
    /// All-zero model.
    pub fn zeros(variant: Variant, roles: usize, topics: usize, sentiments: usize) -> Self {
        let d = match variant {
            Variant::Topic => topics,
            Variant::TopicSentiment => topics * sentiments,
        };
        Self {
            variant,
            roles,
            topics,
            sentiments,
            seed: 0,
            delta: Array2::zeros((roles, roles)),
            lambda: Array2::zeros((d, d)),
            omega: Array2::zeros((roles, d)),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self.variant, self.roles, self.topics, self.sentiments)
    }

    fn check(&self) -> Result<()> {
        let d = self.feature_dim();
        let r = self.roles;
        let want = match self.variant {
            Variant::Topic => self.topics,
            Variant::TopicSentiment => self.topics * self.sentiments,
        };
        if d != want || self.lambda.ncols() != d || self.delta.dim() != (r, r) || self.omega.dim() != (r, d) {
            return Err(Error::Dimension(format!(
                "inconsistent model shapes: delta {:?}, lambda {:?}, omega {:?}",
                self.delta.dim(),
                self.lambda.dim(),
                self.omega.dim()
            )));
        }
        if self.delta.iter().chain(&self.lambda).chain(&self.omega).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("model has non-finite entries".into()));
        }
        Ok(())
    }

    /// Interaction terms for one scenario.
    pub fn interaction_terms(&self, s: &ScenarioView) -> Result<Terms> {
        let (r, d) = (self.roles, self.feature_dim());
        if s.role_a.len() != r || s.role_b.len() != r {
            return Err(Error::Dimension(format!("role vectors must have length {r}")));
        }
        if s.x_i.len() != d || s.window.iter().any(|x| x.len() != d) {
            return Err(Error::Dimension(format!("contagion features must have length {d}")));
        }
        Ok(self.terms(s))
    }

    pub(crate) fn terms(&self, s: &ScenarioView) -> Terms {
        let row = left_product(&self.lambda, s.x_i);
        Terms {
            omega: bilinear(&self.omega, s.role_a, s.x_i),
            delta: bilinear(&self.delta, s.role_a, s.role_b),
            lambda: s.window.iter().map(|x| dot(&row, x)).collect(),
        }
    }

    /// Infection probability of one scenario with clamped components.
    pub fn predict_view(&self, s: &ScenarioView) -> f64 {
        let c = Components::new(s.prior, &self.terms(s)).clamped();
        c.combine().clamp(0.0, 1.0)
    }

    /// Infection probability of a scenario looked up by id.
    pub fn predict(
        &self,
        priors: &Priors,
        scenario: &InteractingScenario,
        roles: &HashMap<String, Vec<f64>>,
        reps: &HashMap<String, ContagionRepresentation>,
    ) -> Result<f64> {
        self.check()?;
        let prior = priors.get(&scenario.contagion)?;
        let role = |u: &str| {
            roles.get(u).map(Vec::as_slice).ok_or_else(|| Error::Missing {
                kind: "role distribution",
                id: u.to_string(),
            })
        };
        let feat = |c: &str| {
            reps.get(c)
                .map(|r| self.variant.features(r))
                .ok_or_else(|| Error::Missing {
                    kind: "topic representation",
                    id: c.to_string(),
                })
        };
        let window = scenario.window.iter().map(|c| feat(c)).collect::<Result<Vec<_>>>()?;
        let view = ScenarioView {
            prior,
            role_a: role(&scenario.user)?,
            role_b: role(&scenario.neighbor)?,
            x_i: feat(&scenario.contagion)?,
            window,
        };
        self.interaction_terms(&view)?;
        Ok(self.predict_view(&view))
    }

    /// Sentiment-level aggregates of a topic-sentiment model: `Ω_s` averages
    /// `Ω` over topics for each sentiment and `Λ_s` averages `Λ` over topic
    /// pairs for each sentiment pair.
    pub fn derive_sentiment_interactions(&self) -> Result<DerivedInteractions> {
        if self.variant != Variant::TopicSentiment {
            return Err(Error::InvalidInput("sentiment interactions need a topic_sentiment model".into()));
        }
        self.check()?;
        let (t, s, r) = (self.topics as f64, self.sentiments, self.roles);
        let omega_s = Array2::from_shape_fn((r, s), |(j, y)| {
            (0..self.topics).map(|b| self.omega[[j, b * s + y]]).sum::<f64>() / t
        });
        let lambda_s = Array2::from_shape_fn((s, s), |(x, y)| {
            let mut total = 0.0;
            for a in 0..self.topics {
                for b in 0..self.topics {
                    total += self.lambda[[a * s + x, b * s + y]];
                }
            }
            total / (t * t)
        });
        Ok(DerivedInteractions { omega_s, lambda_s })
    }

    /// Topic-level matrices. A topic-sentiment model is marginalized under a
    /// uniform sentiment distribution.
    pub fn topic_marginals(&self) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check()?;
        match self.variant {
            Variant::Topic => Ok((self.lambda.clone(), self.omega.clone())),
            Variant::TopicSentiment => {
                let (t, s) = (self.topics, self.sentiments);
                let w = 1.0 / s as f64;
                let lambda = Array2::from_shape_fn((t, t), |(a, b)| {
                    let mut total = 0.0;
                    for x in 0..s {
                        for y in 0..s {
                            total += self.lambda[[a * s + x, b * s + y]];
                        }
                    }
                    total * w * w
                });
                let omega = Array2::from_shape_fn((self.roles, t), |(j, a)| {
                    (0..s).map(|x| self.omega[[j, a * s + x]]).sum::<f64>() * w
                });
                Ok((lambda, omega))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.check()?;
        let text = serde_json::to_string_pretty(self)?;
        data::write_lines(path, [text])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        model.check()?;
        Ok(model)
    }
}

/// `|r|² + d² + |r|·d` with `d = |t|` or `|t|·|s|`.
pub fn parameter_count(variant: Variant, roles: usize, topics: usize, sentiments: usize) -> usize {
    let d = match variant {
        Variant::Topic => topics,
        Variant::TopicSentiment => topics * sentiments,
    };
    roles * roles + d * d + roles * d
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedInteractions {
    /// `roles × sentiments`.
    pub omega_s: Array2<f64>,
    /// `sentiments × sentiments`.
    pub lambda_s: Array2<f64>,
}

/// Interaction terms of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Terms {
    pub omega: f64,
    pub delta: f64,
    /// One per window entry.
    pub lambda: Vec<f64>,
}

/// Component probabilities before combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    /// Infection probability without the neighbor's influence.
    pub p0: f64,
    /// Infection probability given exposure through the neighbor.
    pub pb: f64,
    /// Infection probability given each window contagion.
    pub pk: Vec<f64>,
}

impl Components {
    pub fn new(prior: f64, t: &Terms) -> Self {
        let p0 = prior + t.omega;
        Self {
            p0,
            pb: p0 + t.delta,
            pk: t.lambda.iter().map(|l| prior + l + t.omega).collect(),
        }
    }

    pub fn clamped(mut self) -> Self {
        let c = |p: f64| p.clamp(EPS, 1.0 - EPS);
        self.p0 = c(self.p0);
        self.pb = c(self.pb);
        self.pk.iter_mut().for_each(|p| *p = c(*p));
        self
    }

    /// `pb · Π_k (pk / p0)`, algebraically `pb / p0^K · Π_k pk`.
    pub fn combine(&self) -> f64 {
        self.pk.iter().fold(self.pb, |acc, pk| acc * (pk / self.p0))
    }

    /// True when every component and the combination lie strictly inside (0, 1).
    pub fn in_domain(&self) -> bool {
        let open = |p: f64| p > 0.0 && p < 1.0;
        open(self.p0) && open(self.pb) && self.pk.iter().all(|p| open(*p)) && open(self.combine())
    }
}

/// Numeric inputs of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioView<'a> {
    pub prior: f64,
    pub role_a: &'a [f64],
    pub role_b: &'a [f64],
    pub x_i: &'a [f64],
    pub window: Vec<&'a [f64]>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `uᵀ M` as a row vector.
fn left_product(m: &Array2<f64>, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    for (ua, row) in u.iter().zip(m.rows()) {
        if *ua == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(row) {
            *o += ua * v;
        }
    }
    out
}

fn bilinear(m: &Array2<f64>, u: &[f64], v: &[f64]) -> f64 {
    dot(&left_product(m, u), v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// `(infections + 1) / (exposures + 2)`.
    Laplace,
    /// `infections / exposures`.
    Raw,
}

impl Smoothing {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Smoothing::Laplace),
            "raw" => Ok(Smoothing::Raw),
            other => Err(Error::InvalidInput(format!("unknown prior smoothing `{other}`"))),
        }
    }
}

/// Prior infection probabilities per contagion, with the mean prior as the
/// fallback for contagions absent from training.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub values: HashMap<String, f64>,
    pub fallback: Option<f64>,
}

impl Priors {
    /// From `(contagion, infections, exposures)` counts.
    pub fn from_counts<'a>(
        counts: impl IntoIterator<Item = (&'a str, usize, usize)>,
        smoothing: Smoothing,
    ) -> Result<Self> {
        let mut values = HashMap::new();
        for (id, infections, exposures) in counts {
            let p = match smoothing {
                Smoothing::Laplace => (infections as f64 + 1.0) / (exposures as f64 + 2.0),
                Smoothing::Raw => {
                    if exposures == 0 {
                        return Err(Error::InvalidInput(format!("contagion `{id}` has no exposures")));
                    }
                    infections as f64 / exposures as f64
                }
            };
            values.insert(id.to_string(), p);
        }
        let fallback = if values.is_empty() {
            None
        } else {
            let mut ps: Vec<f64> = values.values().copied().collect();
            // sorted so the mean does not depend on hash order
            ps.sort_by(f64::total_cmp);
            Some(ps.iter().sum::<f64>() / ps.len() as f64)
        };
        Ok(Self { values, fallback })
    }

    pub fn get(&self, contagion: &str) -> Result<f64> {
        self.values
            .get(contagion)
            .copied()
            .or(self.fallback)
            .ok_or_else(|| Error::Missing {
                kind: "prior",
                id: contagion.to_string(),
            })
    }
}

/// Writes `contagion<TAB>prior` rows sorted by contagion id. The fallback
/// is not stored; [`read_priors`] recomputes it as the mean.
pub fn write_priors(path: &Path, priors: &Priors) -> Result<()> {
    let mut rows: Vec<(&String, &f64)> = priors.values.iter().collect();
    rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
    data::write_lines(path, rows.into_iter().map(|(id, p)| format!("{id}\t{p}")))
}

pub fn read_priors(path: &Path) -> Result<Priors> {
    let mut rows = Vec::new();
    for (line_no, line) in data::read_records(path)? {
        let (id, p) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `contagion<TAB>prior`"))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|e| Error::parse(path, line_no, format!("bad prior: {e}")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parse(path, line_no, format!("prior {p} outside [0, 1]")));
        }
        rows.push((id.to_string(), p));
    }
    let mut ps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    ps.sort_by(f64::total_cmp);
    let fallback = (!ps.is_empty()).then(|| ps.iter().sum::<f64>() / ps.len() as f64);
    Ok(Priors {
        values: rows.into_iter().collect(),
        fallback,
    })
}

/// Priors from training scenarios: each scenario is one exposure of its
/// contagion and a positive label one infection.
pub fn priors_from_training(scenarios: &[InteractingScenario], smoothing: Smoothing) -> Result<Priors> {
    let counts = crate::scenarios::exposure_counts(scenarios);
    let mut ids: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
    ids.sort_unstable();
    Priors::from_counts(ids.into_iter().map(|(id, (i, e))| (id, i, e)), smoothing)
}

/// The IP baseline: the contagion's prior.
pub fn baseline_ip(priors: &Priors, scenario: &InteractingScenario) -> Result<f64> {
    priors.get(&scenario.contagion)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub user: usize,
    pub neighbor: usize,
    pub contagion: usize,
    pub window: Vec<usize>,
    pub label: bool,
}

/// Scenarios resolved to dense role and feature tables. Tables are shared
/// between subsets, priors are per subset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub variant: Variant,
    pub users: Arc<Vec<String>>,
    pub contagions: Arc<Vec<String>>,
    /// `users × roles`.
    pub roles: Arc<Array2<f64>>,
    /// `contagions × d`.
    pub features: Arc<Array2<f64>>,
    pub items: Vec<Item>,
    /// Per contagion; NaN until priors are assigned.
    pub priors: Vec<f64>,
}

impl Dataset {
    pub fn encode(
        scenarios: &[InteractingScenario],
        roles: &HashMap<String, Vec<f64>>,
        reps: &HashMap<String, ContagionRepresentation>,
        variant: Variant,
    ) -> Result<Self> {
        let mut users: Vec<&str> = Vec::new();
        let mut user_index: HashMap<&str, usize> = HashMap::new();
        let mut contagions: Vec<&str> = Vec::new();
        let mut contagion_index: HashMap<&str, usize> = HashMap::new();
        let mut items = Vec::with_capacity(scenarios.len());
        for s in scenarios {
            let mut user = |u: &'_ str| -> Result<usize> {
                if let Some(&i) = user_index.get(u) {
                    return Ok(i);
                }
                let (key, _) = roles.get_key_value(u).ok_or_else(|| Error::Missing {
                    kind: "role distribution",
                    id: u.to_string(),
                })?;
                users.push(key);
                user_index.insert(key, users.len() - 1);
                Ok(users.len() - 1)
            };
            let (a, b) = (user(&s.user)?, user(&s.neighbor)?);
            let mut contagion = |c: &'_ str| -> Result<usize> {
                if let Some(&i) = contagion_index.get(c) {
                    return Ok(i);
                }
                let (key, _) = reps.get_key_value(c).ok_or_else(|| Error::Missing {
                    kind: "topic representation",
                    id: c.to_string(),
                })?;
                contagions.push(key);
                contagion_index.insert(key, contagions.len() - 1);
                Ok(contagions.len() - 1)
            };
            let i = contagion(&s.contagion)?;
            let window = s.window.iter().map(|c| contagion(c)).collect::<Result<Vec<_>>>()?;
            items.push(Item {
                user: a,
                neighbor: b,
                contagion: i,
                window,
                label: s.label,
            });
        }

        let r = users.first().map_or(0, |u| roles[*u].len());
        let d = contagions.first().map_or(0, |c| variant.features(&reps[*c]).len());
        let mut role_table = Array2::zeros((users.len(), r));
        for (i, u) in users.iter().enumerate() {
            let v = &roles[*u];
            if v.len() != r {
                return Err(Error::Dimension(format!("role distribution of `{u}` has length {}", v.len())));
            }
            role_table.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
        }
        let mut features = Array2::zeros((contagions.len(), d));
        for (i, c) in contagions.iter().enumerate() {
            let v = variant.features(&reps[*c]);
            if v.len() != d {
                return Err(Error::Dimension(format!("features of `{c}` have length {}", v.len())));
            }
            features.row_mut(i).assign(&ndarray::ArrayView1::from(v));
        }
        let n_contagions = contagions.len();
        Ok(Self {
            variant,
            users: Arc::new(users.into_iter().map(str::to_string).collect()),
            contagions: Arc::new(contagions.into_iter().map(str::to_string).collect()),
            roles: Arc::new(role_table),
            features: Arc::new(features),
            items,
            priors: vec![f64::NAN; n_contagions],
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.items.iter().map(|i| i.label).collect()
    }

    /// The selected items, sharing tables and current priors.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            ..self.clone_tables()
        }
    }

    fn clone_tables(&self) -> Self {
        Self {
            variant: self.variant,
            users: Arc::clone(&self.users),
            contagions: Arc::clone(&self.contagions),
            roles: Arc::clone(&self.roles),
            features: Arc::clone(&self.features),
            items: Vec::new(),
            priors: self.priors.clone(),
        }
    }

    /// Priors estimated from this dataset's own items.
    pub fn estimate_priors(&self, smoothing: Smoothing) -> Result<Priors> {
        let mut counts = vec![(0usize, 0usize); self.contagions.len()];
        for it in &self.items {
            counts[it.contagion].1 += 1;
            if it.label {
                counts[it.contagion].0 += 1;
            }
        }
        Priors::from_counts(
            counts
                .iter()
                .enumerate()
                .filter(|(_, c)| c.1 > 0)
                .map(|(i, c)| (self.contagions[i].as_str(), c.0, c.1)),
            smoothing,
        )
    }

    /// Sets the prior of every examined contagion.
    pub fn assign_priors(&mut self, priors: &Priors) -> Result<()> {
        for it in &self.items {
            self.priors[it.contagion] = priors.get(&self.contagions[it.contagion])?;
        }
        Ok(())
    }

    pub fn view(&self, index: usize) -> ScenarioView<'_> {
        let it = &self.items[index];
        fn row(m: &Array2<f64>, i: usize) -> &[f64] {
            let d = m.ncols();
            &m.as_slice().expect("standard layout")[i * d..(i + 1) * d]
        }
        ScenarioView {
            prior: self.priors[it.contagion],
            role_a: row(&self.roles, it.user),
            role_b: row(&self.roles, it.neighbor),
            x_i: row(&self.features, it.contagion),
            window: it.window.iter().map(|&k| row(&self.features, k)).collect(),
        }
    }

    pub fn predict(&self, model: &InteractionModel) -> Result<Vec<f64>> {
        self.check_model(model)?;
        use rayon::prelude::*;
        Ok((0..self.len()).into_par_iter().map(|i| model.predict_view(&self.view(i))).collect())
    }

    pub fn predict_ip(&self) -> Vec<f64> {
        self.items.iter().map(|it| self.priors[it.contagion]).collect()
    }

    pub(crate) fn check_model(&self, model: &InteractionModel) -> Result<()> {
        model.check()?;
        if model.variant != self.variant
            || model.roles != self.roles.ncols()
            || (!self.is_empty() && model.feature_dim() != self.features.ncols())
        {
            return Err(Error::Dimension(format!(
                "model ({}, r={}, d={}) does not match data ({}, r={}, d={})",
                model.variant.as_str(),
                model.roles,
                model.feature_dim(),
                self.variant.as_str(),
                self.roles.ncols(),
                self.features.ncols()
            )));
        }
        if let Some(it) = self.items.iter().find(|it| self.priors[it.contagion].is_nan()) {
            return Err(Error::Missing {
                kind: "prior",
                id: self.contagions[it.contagion].clone(),
            });
        }
        Ok(())
    }
}

/// Writes a labeled matrix as TSV with a header row.
pub fn write_matrix(path: &Path, m: &Array2<f64>, rows: &[String], cols: &[String]) -> Result<()> {
    let mut out = data::create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "\t{}", cols.join("\t"))?;
        for (i, row) in m.rows().into_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}\t{}", rows[i], cells.join("\t"))?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
