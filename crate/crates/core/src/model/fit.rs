use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Components, Dataset, InteractionModel, ScenarioView};
use crate::error::{Error, Result};

/// Which matrices receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub delta: bool,
    pub lambda: bool,
    pub omega: bool,
}

impl Trainable {
    pub const ALL: Self = Self {
        delta: true,
        lambda: true,
        omega: true,
    };
    /// User-interaction baseline: only the role matrix learns.
    pub const DELTA_ONLY: Self = Self {
        delta: true,
        lambda: false,
        omega: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// `None` for per-scenario sequential updates; `Some(b)` computes each
    /// batch's gradients in parallel and applies their sum.
    pub batch_size: Option<usize>,
    pub trainable: Trainable,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 5,
            seed: 0,
            batch_size: None,
            trainable: Trainable::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitReport {
    pub applied: usize,
    /// Updates rejected because some probability would leave (0, 1), or
    /// because the scenario was already outside it.
    pub skipped: usize,
}

/// Gradient of one scenario's log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub delta: Array2<f64>,
    pub lambda: Array2<f64>,
    pub omega: Array2<f64>,
}

impl Gradient {
    fn zeros_like(m: &InteractionModel) -> Self {
        Self {
            delta: Array2::zeros(m.delta.dim()),
            lambda: Array2::zeros(m.lambda.dim()),
            omega: Array2::zeros(m.omega.dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.delta.iter().chain(&self.lambda).chain(&self.omega).all(|x| x.is_finite())
    }
}

impl InteractionModel {
    /// `y log π + (1 − y) log(1 − π)` with unclamped components; `None`
    /// outside the probability domain.
    pub fn log_likelihood(&self, s: &ScenarioView, label: bool) -> Option<f64> {
        let c = Components::new(s.prior, &self.terms(s));
        if !c.in_domain() {
            return None;
        }
        let pi = c.combine();
        Some(if label { pi.ln() } else { (1.0 - pi).ln() })
    }

    /// Analytic gradient of [`InteractionModel::log_likelihood`]. Frozen
    /// matrices get a zero gradient.
    pub fn gradient(&self, s: &ScenarioView, label: bool, trainable: Trainable) -> Option<Gradient> {
        let mut g = Gradient::zeros_like(self);
        self.add_gradient(s, label, trainable, &mut g).then_some(g)
    }

    fn add_gradient(&self, s: &ScenarioView, label: bool, trainable: Trainable, out: &mut Gradient) -> bool {
        let c = Components::new(s.prior, &self.terms(s));
        if !c.in_domain() {
            return false;
        }
        let pi = c.combine();
        let g = if label { 1.0 } else { -pi / (1.0 - pi) };
        let k = c.pk.len() as f64;
        if trainable.omega {
            let coef = g * (1.0 / c.pb - k / c.p0 + c.pk.iter().map(|p| 1.0 / p).sum::<f64>());
            for (ra, mut row) in s.role_a.iter().zip(out.omega.rows_mut()) {
                let f = coef * ra;
                for (o, x) in row.iter_mut().zip(s.x_i) {
                    *o += f * x;
                }
            }
        }
        if trainable.delta {
            let coef = g / c.pb;
            for (ra, mut row) in s.role_a.iter().zip(out.delta.rows_mut()) {
                let f = coef * ra;
                for (o, rb) in row.iter_mut().zip(s.role_b) {
                    *o += f * rb;
                }
            }
        }
        if trainable.lambda && !s.window.is_empty() {
            let mut w = vec![0.0; s.x_i.len()];
            for (xk, pk) in s.window.iter().zip(&c.pk) {
                for (wv, x) in w.iter_mut().zip(*xk) {
                    *wv += x / pk;
                }
            }
            for (xa, mut row) in s.x_i.iter().zip(out.lambda.rows_mut()) {
                let f = g * xa;
                if f == 0.0 {
                    continue;
                }
                for (o, wv) in row.iter_mut().zip(&w) {
                    *o += f * wv;
                }
            }
        }
        true
    }
}

/// Stochastic gradient ascent on the log-likelihood.
///
/// Each step takes one scenario (or one batch), and applies the update only
/// if every component probability and the combined probability of the
/// scenarios involved stay strictly inside (0, 1); otherwise the parameters
/// are left unchanged for that step.
pub fn fit(model0: InteractionModel, data: &Dataset, cfg: &FitConfig) -> Result<(InteractionModel, FitReport)> {
    data.check_model(&model0)?;
    if data.is_empty() {
        return Err(Error::InvalidInput("no scenarios to fit".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidInput(format!("learning rate {} must be positive", cfg.learning_rate)));
    }
    if cfg.batch_size == Some(0) {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let mut model = model0;
    model.seed = cfg.seed;
    let mut report = FitReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = cfg.batch_size.unwrap_or(1);
    let parallel = cfg.batch_size.is_some();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            step(&mut model, data, chunk, cfg, parallel, &mut report)?;
        }
    }
    Ok((model, report))
}

fn step(
    model: &mut InteractionModel,
    data: &Dataset,
    chunk: &[usize],
    cfg: &FitConfig,
    parallel: bool,
    report: &mut FitReport,
) -> Result<()> {
    let grad_of = |&i: &usize| {
        let it = &data.items[i];
        (i, model.gradient(&data.view(i), it.label, cfg.trainable))
    };
    let grads: Vec<(usize, Option<Gradient>)> = if parallel {
        chunk.par_iter().map(grad_of).collect()
    } else {
        chunk.iter().map(grad_of).collect()
    };

    let mut total: Option<Gradient> = None;
    let mut members = Vec::with_capacity(chunk.len());
    for (i, g) in grads {
        let Some(g) = g else {
            report.skipped += 1;
            continue;
        };
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(i));
        }
        members.push(i);
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => {
                t.delta += &g.delta;
                t.lambda += &g.lambda;
                t.omega += &g.omega;
            }
        }
    }
    let Some(g) = total else {
        return Ok(());
    };

    let lr = cfg.learning_rate;
    let mut candidate = model.clone();
    if cfg.trainable.delta {
        candidate.delta.scaled_add(lr, &g.delta);
    }
    if cfg.trainable.lambda {
        candidate.lambda.scaled_add(lr, &g.lambda);
    }
    if cfg.trainable.omega {
        candidate.omega.scaled_add(lr, &g.omega);
    }
    let ok = members
        .iter()
        .all(|&i| Components::new(data.view(i).prior, &candidate.terms(&data.view(i))).in_domain());
    if ok {
        *model = candidate;
        report.applied += members.len();
    } else {
        report.skipped += members.len();
    }
    Ok(())
}

/// User-interaction baseline: the content matrices are zeroed and frozen.
pub fn fit_ui(model0: InteractionModel, data: &Dataset, cfg: &FitConfig) -> Result<(InteractionModel, FitReport)> {
    let mut m = model0;
    m.lambda.fill(0.0);
    m.omega.fill(0.0);
    fit(
        m,
        data,
        &FitConfig {
            trainable: Trainable::DELTA_ONLY,
            ..cfg.clone()
        },
    )
}
