//! Cascade log representation and the tab/JSON-lines file formats it is
//! loaded from.
//!
//! Every file is UTF-8; blank lines and lines starting with `#` are ignored.
//!
//! | file               | line format                                   |
//! |--------------------|-----------------------------------------------|
//! | `users.tsv`        | `id`                                          |
//! | `edges.tsv`        | `follower<TAB>followee`                       |
//! | `contagions.jsonl` | `{"id","author","timestamp","tokens":[{"surface","pos"}]}` |
//! | `retweets.tsv`     | `user<TAB>contagion<TAB>timestamp<TAB>via?`   |
//! | `lexicon.tsv`      | `word<TAB>pos\|neg`                           |
//! | `seeds.tsv`        | `contagion<TAB>category`                      |

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The explicit contagion categories used when no category list is configured.
pub const DEFAULT_CATEGORIES: [&str; 15] = [
    "advertisement",
    "constellation",
    "culture",
    "economy",
    "food",
    "health",
    "history",
    "life",
    "movie",
    "music",
    "news",
    "politics",
    "sports",
    "technology",
    "traffic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartOfSpeech {
    Noun,
    Adjective,
    Adverb,
    Other,
}

impl PartOfSpeech {
    /// Lenient tag parser: common short tags are accepted, anything unknown is `Other`.
    pub fn parse(tag: &str) -> Self {
        match tag.trim().to_ascii_lowercase().as_str() {
            "noun" | "n" => PartOfSpeech::Noun,
            "adjective" | "adj" | "a" => PartOfSpeech::Adjective,
            "adverb" | "adv" | "d" => PartOfSpeech::Adverb,
            _ => PartOfSpeech::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::Adjective => "adjective",
            PartOfSpeech::Adverb => "adverb",
            PartOfSpeech::Other => "other",
        }
    }
}

/// Word category used by the topic-sentiment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WordCategory {
    Background = 0,
    Topic = 1,
    Sentiment = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// A token as it arrives from upstream tagging, before categorization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawToken {
    pub surface: String,
    pub pos: PartOfSpeech,
}

impl RawToken {
    pub fn new(surface: impl Into<String>, pos: PartOfSpeech) -> Self {
        Self {
            surface: surface.into(),
            pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub surface: String,
    pub pos: PartOfSpeech,
    pub category: WordCategory,
    /// `None` for non-sentiment words and for sentiment words outside the lexicon (neutral).
    pub lexicon_polarity: Option<Polarity>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentimentLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl SentimentLexicon {
    pub fn new<P, N>(positive: P, negative: N) -> Result<Self>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        N: IntoIterator,
        N::Item: Into<String>,
    {
        let positive: BTreeSet<String> = positive.into_iter().map(Into::into).collect();
        let negative: BTreeSet<String> = negative.into_iter().map(Into::into).collect();
        if let Some(word) = positive.intersection(&negative).next() {
            return Err(Error::InvalidInput(format!(
                "lexicon word `{word}` is both positive and negative"
            )));
        }
        Ok(Self { positive, negative })
    }

    pub fn polarity(&self, word: &str) -> Option<Polarity> {
        if self.positive.contains(word) {
            Some(Polarity::Positive)
        } else if self.negative.contains(word) {
            Some(Polarity::Negative)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut positive = BTreeSet::new();
        let mut negative = BTreeSet::new();
        for (line_no, line) in read_records(path)? {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(path, line_no, "expected `word<TAB>pos|neg`"));
            }
            let word = fields[0].to_string();
            match fields[1].trim() {
                "pos" => positive.insert(word),
                "neg" => negative.insert(word),
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown polarity `{other}`"),
                    ))
                }
            };
        }
        Self::new(positive, negative)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        let mut write = || -> std::io::Result<()> {
            for w in &self.positive {
                writeln!(out, "{w}\tpos")?;
            }
            for w in &self.negative {
                writeln!(out, "{w}\tneg")?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Assigns the topic-sentiment word category from the part of speech and
/// lexicon membership. Nouns are topic words, adjectives and adverbs are
/// sentiment words (neutral when absent from the lexicon), everything else
/// is background.
pub fn categorize_token(token: RawToken, lexicon: &SentimentLexicon) -> TaggedToken {
    let (category, lexicon_polarity) = match token.pos {
        PartOfSpeech::Noun => (WordCategory::Topic, None),
        PartOfSpeech::Adjective | PartOfSpeech::Adverb => {
            (WordCategory::Sentiment, lexicon.polarity(&token.surface))
        }
        PartOfSpeech::Other => (WordCategory::Background, None),
    };
    TaggedToken {
        surface: token.surface,
        pos: token.pos,
        category,
        lexicon_polarity,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FollowEdge {
    pub follower: String,
    pub followee: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contagion {
    pub id: String,
    pub author: String,
    pub timestamp: u64,
    pub tokens: Vec<TaggedToken>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetweetEvent {
    pub user: String,
    pub contagion: String,
    pub timestamp: u64,
    /// The neighbor whose forward exposed the user, when known.
    pub via: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSeed {
    pub contagion: String,
    pub category: String,
}

/// The ingested dataset. Immutable once loaded; all references resolve.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CascadeLog {
    pub users: Vec<String>,
    pub edges: Vec<FollowEdge>,
    pub contagions: Vec<Contagion>,
    /// Sorted by `(timestamp, contagion, user)`.
    pub retweets: Vec<RetweetEvent>,
}

impl CascadeLog {
    /// Validates referential integrity and normalizes ordering: duplicate
    /// edges are dropped and retweets sorted.
    pub fn new(
        users: Vec<String>,
        edges: Vec<FollowEdge>,
        contagions: Vec<Contagion>,
        mut retweets: Vec<RetweetEvent>,
    ) -> Result<Self> {
        let mut user_set = HashSet::with_capacity(users.len());
        for u in &users {
            if !user_set.insert(u.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate user id `{u}`")));
            }
        }
        let check_user = |id: &str| -> Result<()> {
            if user_set.contains(id) {
                Ok(())
            } else {
                Err(Error::DanglingReference {
                    kind: "user",
                    id: id.to_string(),
                })
            }
        };

        let mut seen = HashSet::with_capacity(edges.len());
        let mut unique_edges = Vec::with_capacity(edges.len());
        for e in edges {
            check_user(&e.follower)?;
            check_user(&e.followee)?;
            if e.follower == e.followee {
                return Err(Error::InvalidInput(format!("self-loop on user `{}`", e.follower)));
            }
            if seen.insert(e.clone()) {
                unique_edges.push(e);
            }
        }

        let mut origin: HashMap<&str, u64> = HashMap::with_capacity(contagions.len());
        for c in &contagions {
            check_user(&c.author)?;
            if origin.insert(c.id.as_str(), c.timestamp).is_some() {
                return Err(Error::InvalidInput(format!("duplicate contagion id `{}`", c.id)));
            }
        }

        for r in &retweets {
            check_user(&r.user)?;
            if let Some(via) = &r.via {
                check_user(via)?;
            }
            let Some(&t0) = origin.get(r.contagion.as_str()) else {
                return Err(Error::DanglingReference {
                    kind: "contagion",
                    id: r.contagion.clone(),
                });
            };
            if r.timestamp < t0 {
                return Err(Error::InvalidInput(format!(
                    "retweet of `{}` by `{}` at {} precedes its origin at {}",
                    r.contagion, r.user, r.timestamp, t0
                )));
            }
        }
        retweets.sort_by(|a, b| {
            (a.timestamp, &a.contagion, &a.user).cmp(&(b.timestamp, &b.contagion, &b.user))
        });

        Ok(Self {
            users,
            edges: unique_edges,
            contagions,
            retweets,
        })
    }

    pub fn contagion(&self, id: &str) -> Option<&Contagion> {
        self.contagions.iter().find(|c| c.id == id)
    }
}

/// Locations of the four cascade log files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogPaths {
    pub users: PathBuf,
    pub edges: PathBuf,
    pub contagions: PathBuf,
    pub retweets: PathBuf,
}

impl LogPaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            users: dir.join("users.tsv"),
            edges: dir.join("edges.tsv"),
            contagions: dir.join("contagions.jsonl"),
            retweets: dir.join("retweets.tsv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.users, &self.edges, &self.contagions, &self.retweets]
    }
}

#[derive(Serialize, Deserialize)]
struct ContagionRecord {
    id: String,
    author: String,
    timestamp: u64,
    #[serde(default)]
    tokens: Vec<TokenRecord>,
}

#[derive(Serialize, Deserialize)]
struct TokenRecord {
    surface: String,
    pos: String,
}

pub fn load_log(paths: &LogPaths, lexicon: &SentimentLexicon) -> Result<CascadeLog> {
    let users = read_records(&paths.users)?
        .into_iter()
        .map(|(_, line)| line.trim().to_string())
        .collect();

    let mut edges = Vec::new();
    for (line_no, line) in read_records(&paths.edges)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 || f[0].is_empty() || f[1].is_empty() {
            return Err(Error::parse(&paths.edges, line_no, "expected `follower<TAB>followee`"));
        }
        edges.push(FollowEdge {
            follower: f[0].to_string(),
            followee: f[1].to_string(),
        });
    }

    let mut contagions = Vec::new();
    for (line_no, line) in read_records(&paths.contagions)? {
        let rec: ContagionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&paths.contagions, line_no, e.to_string()))?;
        let tokens = rec
            .tokens
            .into_iter()
            .map(|t| categorize_token(RawToken::new(t.surface, PartOfSpeech::parse(&t.pos)), lexicon))
            .collect();
        contagions.push(Contagion {
            id: rec.id,
            author: rec.author,
            timestamp: rec.timestamp,
            tokens,
        });
    }

    let mut retweets = Vec::new();
    for (line_no, line) in read_records(&paths.retweets)? {
        let f: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&f.len()) {
            return Err(Error::parse(
                &paths.retweets,
                line_no,
                "expected `user<TAB>contagion<TAB>timestamp<TAB>via?`",
            ));
        }
        let timestamp = f[2]
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::parse(&paths.retweets, line_no, format!("bad timestamp: {e}")))?;
        let via = f.get(3).map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::to_string);
        retweets.push(RetweetEvent {
            user: f[0].to_string(),
            contagion: f[1].to_string(),
            timestamp,
            via,
        });
    }

    CascadeLog::new(users, edges, contagions, retweets)
}

pub fn save_log(log: &CascadeLog, dir: &Path) -> Result<LogPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = LogPaths::in_dir(dir);

    write_lines(&paths.users, log.users.iter())?;
    write_lines(
        &paths.edges,
        log.edges.iter().map(|e| format!("{}\t{}", e.follower, e.followee)),
    )?;
    let mut lines = Vec::with_capacity(log.contagions.len());
    for c in &log.contagions {
        let rec = ContagionRecord {
            id: c.id.clone(),
            author: c.author.clone(),
            timestamp: c.timestamp,
            tokens: c
                .tokens
                .iter()
                .map(|t| TokenRecord {
                    surface: t.surface.clone(),
                    pos: t.pos.as_str().to_string(),
                })
                .collect(),
        };
        lines.push(serde_json::to_string(&rec)?);
    }
    write_lines(&paths.contagions, lines.iter())?;
    write_lines(
        &paths.retweets,
        log.retweets.iter().map(|r| {
            format!(
                "{}\t{}\t{}\t{}",
                r.user,
                r.contagion,
                r.timestamp,
                r.via.as_deref().unwrap_or("")
            )
        }),
    )?;
    Ok(paths)
}

/// Reads `contagion<TAB>category` lines; every category must be in `categories`.
pub fn load_seeds(path: &Path, categories: &[String]) -> Result<Vec<LabeledSeed>> {
    let mut seeds = Vec::new();
    for (line_no, line) in read_records(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 {
            return Err(Error::parse(path, line_no, "expected `contagion<TAB>category`"));
        }
        let category = f[1].trim();
        if !categories.iter().any(|c| c == category) {
            return Err(Error::parse(path, line_no, format!("unknown category `{category}`")));
        }
        seeds.push(LabeledSeed {
            contagion: f[0].to_string(),
            category: category.to_string(),
        });
    }
    Ok(seeds)
}

/// Non-comment, non-blank lines with their 1-based line numbers.
pub(crate) fn read_records(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .collect())
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: fmt::Display,
{
    let mut out = create(path)?;
    for l in lines {
        writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
