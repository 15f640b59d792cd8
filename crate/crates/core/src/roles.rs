//! User roles from a full-covariance Gaussian mixture over standardized
//! structural features.
//!
//! EM maximizes the log-likelihood plus a weak inverse-Wishart-style penalty
//! `-(c/2) Σ_k tr(Σ_k⁻¹)` with `c = reg · n`. The penalty keeps every
//! covariance positive definite (`Σ_k = (S_k + cI) / N_k`) and makes the
//! tracked objective exactly monotone under EM.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::graph::{self, UserFeatures};

const AUTHORITY_COLUMNS: [usize; 2] = [1, 3];
const HUB_COLUMNS: [usize; 2] = [2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Authority,
    Hub,
    Ordinary,
}

#[derive(Debug, Clone)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the objective improves by less than this.
    pub tol: f64,
    pub reg: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 3,
            max_iter: 500,
            tol: 1e-6,
            reg: 1e-6,
            seed: 0,
        }
    }
}

/// Fitted mixture. Matrices are stored row-major as plain vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleModel {
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Role of each component; empty until [`label_roles`] runs.
    pub role_labels: Vec<Role>,
}

impl RoleModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.covariances[k])
    }

    /// Component indices ordered authority, hub, then ordinary components by index.
    pub fn role_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.components()).collect();
        let rank = |r: Role| match r {
            Role::Authority => 0,
            Role::Hub => 1,
            Role::Ordinary => 2,
        };
        if self.role_labels.len() == self.components() {
            order.sort_by_key(|&k| (rank(self.role_labels[k]), k));
        }
        order
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        data::write_lines(path, [serde_json::to_string_pretty(self)?])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: RoleModel,
    /// `n × components` posterior responsibilities at the final parameters.
    pub responsibilities: Array2<f64>,
    /// Penalized log-likelihood after each E-step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRoleDistribution {
    pub user: String,
    /// Probabilities in `[authority, hub, ordinary]` order.
    pub theta: Vec<f64>,
}

struct Component {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_weight: f64,
    log_det_half: f64,
}

impl Component {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>, weight: f64) -> Result<Self> {
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
        let log_det_half = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        Ok(Self {
            mean,
            chol,
            log_weight: weight.ln(),
            log_det_half,
        })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x.len() as f64;
        let diff = x - &self.mean;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * d * (2.0 * PI).ln() - self.log_det_half - 0.5 * z.norm_squared()
    }

    fn trace_inverse(&self) -> f64 {
        self.chol.inverse().trace()
    }
}

fn rows(x: &Array2<f64>) -> Vec<DVector<f64>> {
    x.rows()
        .into_iter()
        .map(|r| DVector::from_iterator(r.len(), r.iter().copied()))
        .collect()
}

/// k-means++ seeding followed by a hard-assignment M-step.
fn initial_responsibilities(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.len();
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| (p - &points[centers[0]]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in dist2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, p) in points.iter().enumerate() {
            dist2[i] = dist2[i].min((p - &points[next]).norm_squared());
        }
    }
    let mut resp = Array2::zeros((n, k));
    for (i, p) in points.iter().enumerate() {
        let best = centers
            .iter()
            .enumerate()
            .map(|(j, &c)| (j, (p - &points[c]).norm_squared()))
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        resp[[i, best.0]] = 1.0;
    }
    resp
}

fn m_step(
    points: &[DVector<f64>],
    resp: &Array2<f64>,
    penalty: f64,
    previous: Option<&[DVector<f64>]>,
) -> Result<(Vec<Component>, Vec<DVector<f64>>, Vec<DMatrix<f64>>, Vec<f64>)> {
    let n = points.len();
    let d = points[0].len();
    let k = resp.ncols();
    let mut comps = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.column(j).sum();
        let (mean, cov, weight) = if nk > 1e-10 {
            let mut mean = DVector::zeros(d);
            for (i, p) in points.iter().enumerate() {
                mean.axpy(resp[[i, j]], p, 1.0);
            }
            mean /= nk;
            let mut scatter = DMatrix::identity(d, d) * penalty;
            for (i, p) in points.iter().enumerate() {
                let diff = p - &mean;
                scatter.ger(resp[[i, j]], &diff, &diff, 1.0);
            }
            (mean, scatter / nk, nk / n as f64)
        } else {
            // starved component: keep it alive with a unit covariance
            let mean = previous
                .map(|m| m[j].clone())
                .unwrap_or_else(|| points[0].clone());
            (mean, DMatrix::identity(d, d), 1e-10)
        };
        comps.push(Component::new(mean.clone(), cov.clone(), weight)?);
        means.push(mean);
        covs.push(cov);
        weights.push(weight);
    }
    let total: f64 = weights.iter().sum();
    for (w, c) in weights.iter_mut().zip(comps.iter_mut()) {
        *w /= total;
        c.log_weight = w.ln();
    }
    Ok((comps, means, covs, weights))
}

/// Returns responsibilities and the penalized log-likelihood.
fn e_step(points: &[DVector<f64>], comps: &[Component], penalty: f64) -> (Array2<f64>, f64) {
    let k = comps.len();
    let mut resp = Array2::zeros((points.len(), k));
    let mut ll = 0.0;
    let mut logp = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        for (j, c) in comps.iter().enumerate() {
            logp[j] = c.log_weight + c.log_density(p);
        }
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logp.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        ll += lse;
        for j in 0..k {
            resp[[i, j]] = (logp[j] - lse).exp();
        }
        let row_sum: f64 = resp.row(i).sum();
        resp.row_mut(i).mapv_inplace(|v| v / row_sum);
    }
    let trace_penalty: f64 = comps.iter().map(Component::trace_inverse).sum();
    (resp, ll - 0.5 * penalty * trace_penalty)
}

/// EM for a full-covariance Gaussian mixture on the rows of `x`.
pub fn fit_gmm(x: &Array2<f64>, config: &GmmConfig) -> Result<GmmFit> {
    let (n, d) = x.dim();
    let k = config.components;
    if k == 0 || n < k {
        return Err(Error::InvalidInput(format!(
            "{n} points cannot support {k} mixture components"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    let points = rows(x);
    let penalty = config.reg * n as f64;

    let spread = points.iter().map(|p| (p - &points[0]).norm_squared()).fold(0.0, f64::max);
    if spread == 0.0 {
        log::warn!("all {n} points are identical; returning a degenerate mixture");
        let cov = DMatrix::identity(d, d) * config.reg;
        let model = RoleModel {
            dim: d,
            means: vec![points[0].iter().copied().collect(); k],
            covariances: vec![row_major(&cov); k],
            weights: vec![1.0 / k as f64; k],
            role_labels: Vec::new(),
        };
        return Ok(GmmFit {
            model,
            responsibilities: Array2::from_elem((n, k), 1.0 / k as f64),
            objective: Vec::new(),
            converged: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = initial_responsibilities(&points, k, &mut rng);
    let (mut comps, mut means, mut covs, mut weights) = m_step(&points, &init, penalty, None)?;

    let mut objective = Vec::new();
    let mut converged = false;
    let resp = loop {
        let (resp, obj) = e_step(&points, &comps, penalty);
        let improvement = objective.last().map(|prev| obj - prev);
        objective.push(obj);
        if let Some(delta) = improvement {
            if delta < config.tol {
                converged = true;
                break resp;
            }
        }
        if objective.len() > config.max_iter {
            break resp;
        }
        (comps, means, covs, weights) = m_step(&points, &resp, penalty, Some(&means))?;
    };

    let model = RoleModel {
        dim: d,
        means: means.iter().map(|m| m.iter().copied().collect()).collect(),
        covariances: covs.iter().map(row_major).collect(),
        weights,
        role_labels: Vec::new(),
    };
    Ok(GmmFit {
        model,
        responsibilities: resp,
        objective,
        converged,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn argmax_first(scores: &[(usize, f64)], what: &str) -> usize {
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = scores.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
    if winners.len() > 1 {
        log::warn!("tie between components {winners:?} for the {what} role; using the lowest index");
    }
    winners[0]
}

/// Names mixture components: highest standardized in-degree + authority
/// mean is the authority role, then highest out-degree + hub mean among the
/// rest is the hub role, everything else is ordinary.
pub fn label_roles(mut model: RoleModel) -> RoleModel {
    let k = model.components();
    let score = |j: usize, cols: &[usize]| cols.iter().map(|&c| model.means[j][c]).sum::<f64>();
    let mut labels = vec![Role::Ordinary; k];
    if model.dim > 4 && k > 0 {
        let auth_scores: Vec<(usize, f64)> = (0..k).map(|j| (j, score(j, &AUTHORITY_COLUMNS))).collect();
        let authority = argmax_first(&auth_scores, "authority");
        labels[authority] = Role::Authority;
        let hub_scores: Vec<(usize, f64)> = (0..k)
            .filter(|&j| j != authority)
            .map(|j| (j, score(j, &HUB_COLUMNS)))
            .collect();
        if !hub_scores.is_empty() {
            labels[argmax_first(&hub_scores, "hub")] = Role::Hub;
        }
    }
    model.role_labels = labels;
    model
}

/// Standardizes features, fits the mixture and labels its components.
/// Each user's distribution is reordered to `[authority, hub, ordinary]`.
pub fn fit_roles(
    features: &[UserFeatures],
    config: &GmmConfig,
) -> Result<(RoleModel, Vec<UserRoleDistribution>)> {
    let x = graph::standardized_features(features);
    let fit = fit_gmm(&x, config)?;
    let model = label_roles(fit.model);
    let order = model.role_order();
    let dists = features
        .iter()
        .enumerate()
        .map(|(i, f)| UserRoleDistribution {
            user: f.user.clone(),
            theta: order.iter().map(|&j| fit.responsibilities[[i, j]]).collect(),
        })
        .collect();
    Ok((model, dists))
}

pub fn write_roles(path: &Path, roles: &[UserRoleDistribution]) -> Result<()> {
    let mut out = data::create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "# user\ttheta_authority\ttheta_hub\ttheta_ordinary")?;
        for r in roles {
            write!(out, "{}", r.user)?;
            for v in &r.theta {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_roles(path: &Path) -> Result<Vec<UserRoleDistribution>> {
    let mut out = Vec::new();
    for (line_no, line) in data::read_records(path)? {
        let mut fields = line.split('\t');
        let user = fields.next().unwrap_or_default().to_string();
        let theta = fields
            .map(|s| s.parse::<f64>().map_err(|e| Error::parse(path, line_no, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        if theta.is_empty() {
            return Err(Error::parse(path, line_no, "missing role probabilities"));
        }
        out.push(UserRoleDistribution { user, theta });
    }
    Ok(out)
}
