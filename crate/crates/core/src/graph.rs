//! Structural user features over the follow graph: PageRank, HITS
//! authority/hub scores and degrees.
//!
//! Edges point from follower to followee, so a user's in-degree is their
//! follower count and rank mass flows towards the followed account.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::data::{self, CascadeLog, FollowEdge};
use crate::error::{Error, Result};

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;

/// Directed follow graph with dense node indices.
#[derive(Debug, Clone)]
pub struct Graph {
    users: Vec<String>,
    index: HashMap<String, usize>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    edge_count: usize,
}

impl Graph {
    pub fn new(users: &[String], edges: &[FollowEdge]) -> Result<Self> {
        let index: HashMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        let mut out_adj = vec![Vec::new(); users.len()];
        let mut in_adj = vec![Vec::new(); users.len()];
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::DanglingReference {
                kind: "user",
                id: id.to_string(),
            })
        };
        let mut edge_count = 0;
        for e in edges {
            let (from, to) = (lookup(&e.follower)?, lookup(&e.followee)?);
            if from == to || out_adj[from].contains(&to) {
                continue;
            }
            out_adj[from].push(to);
            in_adj[to].push(from);
            edge_count += 1;
        }
        Ok(Self {
            users: users.to_vec(),
            index,
            out_adj,
            in_adj,
            edge_count,
        })
    }

    pub fn from_log(log: &CascadeLog) -> Result<Self> {
        Self::new(&log.users, &log.edges)
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn node(&self, user: &str) -> Option<usize> {
        self.index.get(user).copied()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Accounts `node` follows.
    pub fn followees(&self, node: usize) -> &[usize] {
        &self.out_adj[node]
    }

    /// Accounts following `node`.
    pub fn followers(&self, node: usize) -> &[usize] {
        &self.in_adj[node]
    }
}

/// PageRank by power iteration. Dangling nodes spread their mass uniformly.
/// Stops when the L1 change between iterates falls below `tol`.
pub fn pagerank(graph: &Graph, damping: f64, tol: f64) -> Result<Vec<f64>> {
    let n = graph.len();
    if n == 0 {
        return Err(Error::InvalidInput("pagerank of an empty graph".into()));
    }
    if !(0.0..1.0).contains(&damping) || damping == 0.0 {
        return Err(Error::InvalidInput(format!("damping {damping} outside (0,1)")));
    }
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let dangling: f64 = (0..n)
            .filter(|&u| graph.out_adj[u].is_empty())
            .map(|u| rank[u])
            .sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for (u, targets) in graph.out_adj.iter().enumerate() {
            if targets.is_empty() {
                continue;
            }
            let share = damping * rank[u] / targets.len() as f64;
            for &v in targets {
                next[v] += share;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            return Ok(rank);
        }
    }
    Err(Error::NoConvergence(MAX_ITERATIONS))
}

/// HITS authority and hub scores, each L1-normalized. An edgeless graph
/// yields all zeros.
pub fn hits(graph: &Graph, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let n = graph.len();
    if n == 0 || graph.edge_count == 0 {
        return (vec![0.0; n], vec![0.0; n]);
    }
    let mut hub = vec![1.0 / n as f64; n];
    let mut auth = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let mut new_auth: Vec<f64> = (0..n)
            .map(|v| graph.in_adj[v].iter().map(|&u| hub[u]).sum())
            .collect();
        l1_normalize(&mut new_auth);
        let mut new_hub: Vec<f64> = (0..n)
            .map(|u| graph.out_adj[u].iter().map(|&v| new_auth[v]).sum())
            .collect();
        l1_normalize(&mut new_hub);
        let delta: f64 = auth
            .iter()
            .zip(&new_auth)
            .chain(hub.iter().zip(&new_hub))
            .map(|(a, b)| (a - b).abs())
            .sum();
        auth = new_auth;
        hub = new_hub;
        if delta < tol {
            return (auth, hub);
        }
    }
    log::warn!("HITS did not reach tolerance {tol} in {MAX_ITERATIONS} iterations");
    (auth, hub)
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// `(in_degree, out_degree)` per node.
pub fn degrees(graph: &Graph) -> Vec<(usize, usize)> {
    (0..graph.len())
        .map(|u| (graph.in_adj[u].len(), graph.out_adj[u].len()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub user: String,
    pub pagerank: f64,
    pub authority: f64,
    pub hub: f64,
    pub in_degree: usize,
    pub out_degree: usize,
}

pub const FEATURE_NAMES: [&str; 5] = ["pagerank", "authority", "hub", "in_degree", "out_degree"];

pub fn user_features(graph: &Graph, damping: f64, tol: f64) -> Result<Vec<UserFeatures>> {
    let pr = pagerank(graph, damping, tol)?;
    let (auth, hub) = hits(graph, tol);
    let deg = degrees(graph);
    Ok(graph
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| UserFeatures {
            user: u.clone(),
            pagerank: pr[i],
            authority: auth[i],
            hub: hub[i],
            in_degree: deg[i].0,
            out_degree: deg[i].1,
        })
        .collect())
}

/// Model-ready matrix: columns in [`FEATURE_NAMES`] order, degrees passed
/// through `ln(1+x)`, every column z-scored. Constant columns become zero.
pub fn standardized_features(features: &[UserFeatures]) -> Array2<f64> {
    let n = features.len();
    let mut x = Array2::zeros((n, 5));
    for (i, f) in features.iter().enumerate() {
        x[[i, 0]] = f.pagerank;
        x[[i, 1]] = f.authority;
        x[[i, 2]] = f.hub;
        x[[i, 3]] = (f.in_degree as f64).ln_1p();
        x[[i, 4]] = (f.out_degree as f64).ln_1p();
    }
    if n == 0 {
        return x;
    }
    for mut col in x.columns_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 1e-12 { (v - mean) / sd } else { 0.0 });
    }
    x
}

pub fn write_features(path: &Path, features: &[UserFeatures]) -> Result<()> {
    let mut out = data::create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "# user\tpagerank\tauthority\thub\tin\tout")?;
        for f in features {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                f.user, f.pagerank, f.authority, f.hub, f.in_degree, f.out_degree
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<UserFeatures>> {
    let mut out = Vec::new();
    for (line_no, line) in data::read_records(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::parse(path, line_no, "expected 6 tab-separated fields"));
        }
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(path, line_no, e.to_string()))
        };
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(path, line_no, e.to_string()))
        };
        out.push(UserFeatures {
            user: f[0].to_string(),
            pagerank: real(f[1])?,
            authority: real(f[2])?,
            hub: real(f[3])?,
            in_degree: int(f[4])?,
            out_degree: int(f[5])?,
        });
    }
    Ok(out)
}
