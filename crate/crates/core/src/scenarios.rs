//! Interacting scenarios: who exposed a user to a contagion, what else the
//! user had recently seen, and whether the user forwarded it.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{self, CascadeLog};
use crate::error::{Error, Result};
use crate::topics::{ContagionRepresentation, NEGATIVE, NEUTRAL, POSITIVE};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InteractingScenario {
    /// The examining user.
    pub user: String,
    /// The followee whose post or forward produced the anchor exposure.
    pub neighbor: String,
    /// The examined contagion.
    pub contagion: String,
    /// Up to K previously exposed contagions, most recent first.
    pub window: Vec<String>,
    pub label: bool,
}

impl InteractingScenario {
    /// The examined contagion followed by the window.
    pub fn involved(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.contagion.as_str()).chain(self.window.iter().map(String::as_str))
    }
}

/// A followee posting or forwarding a contagion at a point in time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Exposure<'a> {
    pub timestamp: u64,
    pub contagion: &'a str,
    pub via: &'a str,
}

/// Every exposure of every user, each timeline sorted by
/// `(timestamp, contagion, via)`. Authors are never exposed to their own
/// contagions.
pub fn exposures(log: &CascadeLog) -> HashMap<&str, Vec<Exposure<'_>>> {
    let mut followers: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &log.edges {
        followers.entry(&e.followee).or_default().push(&e.follower);
    }
    let author: HashMap<&str, &str> = log
        .contagions
        .iter()
        .map(|c| (c.id.as_str(), c.author.as_str()))
        .collect();
    let posts = log
        .contagions
        .iter()
        .map(|c| (c.author.as_str(), c.id.as_str(), c.timestamp))
        .chain(
            log.retweets
                .iter()
                .map(|r| (r.user.as_str(), r.contagion.as_str(), r.timestamp)),
        );
    let mut timeline: HashMap<&str, Vec<Exposure>> = HashMap::new();
    for (poster, contagion, timestamp) in posts {
        for &f in followers.get(poster).map(Vec::as_slice).unwrap_or(&[]) {
            if author[contagion] == f {
                continue;
            }
            timeline.entry(f).or_default().push(Exposure {
                timestamp,
                contagion,
                via: poster,
            });
        }
    }
    for events in timeline.values_mut() {
        events.sort();
        events.dedup();
    }
    timeline
}

/// One scenario per exposed `(user, contagion)` pair, sorted by user then
/// contagion id.
///
/// A user who forwarded the contagion is anchored at the last exposure at or
/// before the first forward and labeled positive; a user who never forwarded
/// it is anchored at the last exposure in the log and labeled negative.
/// Forwards with no preceding exposure produce no scenario. The window holds
/// the `k` most recent distinct other contagions exposed strictly before the
/// anchor.
pub fn extract_scenarios(log: &CascadeLog, k: usize) -> Vec<InteractingScenario> {
    let timeline = exposures(log);
    let mut first_forward: HashMap<(&str, &str), u64> = HashMap::new();
    for r in &log.retweets {
        first_forward
            .entry((r.user.as_str(), r.contagion.as_str()))
            .and_modify(|t| *t = (*t).min(r.timestamp))
            .or_insert(r.timestamp);
    }

    let mut users: Vec<&str> = timeline.keys().copied().collect();
    users.sort_unstable();
    let mut out: Vec<InteractingScenario> = users
        .par_iter()
        .flat_map_iter(|&user| {
            let events = &timeline[user];
            // last qualifying exposure index per contagion
            let mut anchors: HashMap<&str, (usize, bool)> = HashMap::new();
            for (i, e) in events.iter().enumerate() {
                match first_forward.get(&(user, e.contagion)) {
                    Some(&t) if e.timestamp > t => {}
                    Some(_) => {
                        anchors.insert(e.contagion, (i, true));
                    }
                    None => {
                        anchors.insert(e.contagion, (i, false));
                    }
                }
            }
            let mut scenarios: Vec<InteractingScenario> = anchors
                .into_iter()
                .map(|(contagion, (at, label))| InteractingScenario {
                    user: user.to_string(),
                    neighbor: events[at].via.to_string(),
                    contagion: contagion.to_string(),
                    window: window_before(events, at, k),
                    label,
                })
                .collect();
            scenarios.sort_by(|a, b| a.contagion.cmp(&b.contagion));
            scenarios
        })
        .collect();
    out.sort_by(|a, b| (&a.user, &a.contagion).cmp(&(&b.user, &b.contagion)));
    out
}

fn window_before(events: &[Exposure], anchor: usize, k: usize) -> Vec<String> {
    let target = events[anchor].contagion;
    let mut seen: HashSet<&str> = HashSet::new();
    let mut window = Vec::new();
    for e in events[..anchor].iter().rev() {
        if window.len() == k {
            break;
        }
        if e.contagion != target && seen.insert(e.contagion) {
            window.push(e.contagion.to_string());
        }
    }
    window
}

/// Drops scenarios whose contagions are all dominantly neutral. With
/// `tau`, additionally keeps only scenarios where every involved contagion
/// has a positive or negative share above `tau`.
pub fn filter_by_sentiment(
    scenarios: Vec<InteractingScenario>,
    reps: &HashMap<String, ContagionRepresentation>,
    tau: Option<f64>,
) -> Result<Vec<InteractingScenario>> {
    if let Some(t) = tau {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("tau {t} outside [0, 1]")));
        }
    }
    let mut kept = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let mut all_neutral = true;
        let mut intense = true;
        for id in s.involved() {
            let r = reps.get(id).ok_or_else(|| Error::Missing {
                kind: "topic representation",
                id: id.to_string(),
            })?;
            if r.theta_o.len() <= NEUTRAL {
                return Err(Error::Dimension(format!(
                    "contagion `{id}` has {} sentiments, expected 3",
                    r.theta_o.len()
                )));
            }
            all_neutral &= r.dominant_sentiment() == NEUTRAL;
            if let Some(t) = tau {
                intense &= r.theta_o[POSITIVE].max(r.theta_o[NEGATIVE]) > t;
            }
        }
        if !all_neutral && intense {
            kept.push(s);
        }
    }
    Ok(kept)
}

/// Downsamples the majority class to the minority count and shuffles.
pub fn balance(scenarios: Vec<InteractingScenario>, seed: u64) -> Result<Vec<InteractingScenario>> {
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = scenarios.into_iter().partition(|s| s.label);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput(format!(
            "cannot balance {} positive and {} negative scenarios",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pos.len().min(neg.len());
    for class in [&mut pos, &mut neg] {
        if class.len() > n {
            let mut keep = rand::seq::index::sample(&mut rng, class.len(), n).into_vec();
            keep.sort_unstable();
            let mut taken: Vec<Option<InteractingScenario>> = class.drain(..).map(Some).collect();
            *class = keep.into_iter().map(|i| taken[i].take().expect("distinct indices")).collect();
        }
    }
    let mut out = pos;
    out.append(&mut neg);
    out.shuffle(&mut rng);
    Ok(out)
}

/// Contagion exposures and infections in a set of scenarios.
pub fn exposure_counts(scenarios: &[InteractingScenario]) -> HashMap<&str, (usize, usize)> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for s in scenarios {
        let c = counts.entry(s.contagion.as_str()).or_default();
        c.1 += 1;
        if s.label {
            c.0 += 1;
        }
    }
    counts
}

pub fn write_scenarios(path: &Path, scenarios: &[InteractingScenario]) -> Result<()> {
    let mut out = data::create(path)?;
    let mut write = || -> std::io::Result<()> {
        for s in scenarios {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                s.user,
                s.neighbor,
                s.contagion,
                s.window.join(","),
                u8::from(s.label)
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_scenarios(path: &Path) -> Result<Vec<InteractingScenario>> {
    data::read_records(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::parse(path, line_no, "expected 5 tab-separated fields"));
            }
            let label = match f[4] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(path, line_no, format!("label `{other}` is not 0 or 1"))),
            };
            let window = if f[3].is_empty() {
                Vec::new()
            } else {
                f[3].split(',').map(str::to_string).collect()
            };
            Ok(InteractingScenario {
                user: f[0].to_string(),
                neighbor: f[1].to_string(),
                contagion: f[2].to_string(),
                window,
                label,
            })
        })
        .collect()
}
