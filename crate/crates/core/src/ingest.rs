//! Loaders for annotated dialogs, forum dumps and the venue database, plus
//! deterministic corpus splitting.
//!
//! Annotated dialog files hold one JSON record per line (or a single JSON
//! array) of the form
//!
//! ```json
//! {"dialog_id": "MUL0001", "goal": {"restaurant": {"inform": {"area": "centre"}, "request": ["phone"]}},
//!  "turns": [{"user_utterance": "...", "belief_annotation": {"restaurant": {"area": "centre"}},
//!             "dialog_acts": [{"act": "inform", "slots": ["choice"]}],
//!             "delexicalized_response": "there are [value_count] ..."}]}
//! ```
//!
//! A dataset directory contains such files (directly or under `dialogs/`),
//! optional `valListFile.txt` / `testListFile.txt` split lists and an
//! optional `db/` directory of entity files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialog::{BeliefSlot, DialogAct, DialogSession, Goal, Turn};
use crate::error::{Error, Result};
use crate::grammar::GrammarSpec;
use crate::hacking::{normalize_text, ForumThread};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub user_utterance: String,
    #[serde(default)]
    pub belief_annotation: IndexMap<String, IndexMap<String, String>>,
    #[serde(default)]
    pub dialog_acts: Vec<DialogAct>,
    pub delexicalized_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDialogRecord {
    pub dialog_id: String,
    #[serde(default)]
    pub goal: Goal,
    pub turns: Vec<RawTurn>,
}

impl RawDialogRecord {
    /// Converts annotations into a session. Free text and belief values go
    /// through the same normalization as forum text.
    pub fn to_session(&self) -> DialogSession {
        let turns = self
            .turns
            .iter()
            .map(|t| Turn {
                utterance: normalize_text(&t.user_utterance),
                belief: t
                    .belief_annotation
                    .iter()
                    .flat_map(|(domain, slots)| {
                        slots.iter().map(move |(k, v)| {
                            BeliefSlot::new(domain.to_lowercase(), k.to_lowercase(), normalize_text(v))
                        })
                    })
                    .collect(),
                actions: t
                    .dialog_acts
                    .iter()
                    .map(|a| DialogAct::new(a.act.to_lowercase(), a.slots.iter().map(|s| s.to_lowercase())))
                    .collect(),
                response: normalize_text(&t.delexicalized_response),
            })
            .collect();
        DialogSession {
            session_id: self.dialog_id.clone(),
            turns,
            goal: Some(self.goal.clone()),
        }
    }
}

fn record_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = if path.join("dialogs").is_dir() {
        path.join("dialogs")
    } else {
        path.to_path_buf()
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
        .collect();
    files.sort();
    Ok(files)
}

fn json_values(path: &Path, text: &str) -> Result<Vec<(String, serde_json::Value)>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        return Ok(values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("{}[{i}]", path.display()), v))
            .collect());
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), n + 1);
        let value = serde_json::from_str(line).map_err(|e| Error::Ingest {
            record: location.clone(),
            reason: e.to_string(),
        })?;
        out.push((location, value));
    }
    Ok(out)
}

/// Loads annotated dialogs from a file or dataset directory. The first
/// record that does not match the schema aborts the load, naming its id.
pub fn load_multiwoz(path: &Path) -> Result<Vec<RawDialogRecord>> {
    let mut records = Vec::new();
    for file in record_files(path)? {
        let text = crate::io::read_to_string(&file)?;
        for (location, value) in json_values(&file, &text)? {
            let name = value
                .get("dialog_id")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .unwrap_or(location);
            let record: RawDialogRecord = serde_json::from_value(value).map_err(|e| Error::Ingest {
                record: name.clone(),
                reason: e.to_string(),
            })?;
            if record.turns.is_empty() {
                return Err(Error::Ingest {
                    record: name,
                    reason: "dialog has no turns".into(),
                });
            }
            records.push(record);
        }
    }
    Ok(records)
}

pub fn load_multiwoz_sessions(path: &Path) -> Result<Vec<DialogSession>> {
    Ok(load_multiwoz(path)?.iter().map(RawDialogRecord::to_session).collect())
}

/// Derives the target grammar's vocabularies from the annotations.
pub fn target_grammar_from_sessions(sessions: &[DialogSession]) -> Result<GrammarSpec> {
    let mut domains = BTreeSet::new();
    let mut keys = BTreeSet::new();
    let mut values = BTreeSet::new();
    let mut acts = BTreeSet::new();
    let mut act_slots = BTreeSet::new();
    for turn in sessions.iter().flat_map(|s| &s.turns) {
        for b in &turn.belief {
            if !b.domain.is_empty() {
                domains.insert(b.domain.clone());
            }
            keys.insert(b.key.clone());
            if !b.value.is_empty() {
                values.insert(b.value.clone());
            }
        }
        for a in &turn.actions {
            acts.insert(a.act.clone());
            act_slots.extend(a.slots.iter().cloned());
        }
    }
    if keys.is_empty() || acts.is_empty() {
        return Err(Error::validation("annotations carry no belief keys or dialog acts"));
    }
    let spec = GrammarSpec::target(domains, keys, values, acts, act_slots);
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ForumLoad {
    pub threads: Vec<ForumThread>,
    pub skipped: Vec<LineDiagnostic>,
}

/// Loads a line-delimited forum dump; malformed lines are skipped and
/// reported, never silently dropped.
pub fn load_forum_dump(path: &Path) -> Result<ForumLoad> {
    let text = crate::io::read_to_string(path)?;
    Ok(parse_forum_dump(&text))
}

pub fn parse_forum_dump(text: &str) -> ForumLoad {
    let mut load = ForumLoad::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let skip = |reason: String| LineDiagnostic { line: n + 1, reason };
        match serde_json::from_str::<ForumThread>(line) {
            Ok(t) if t.creator_message.trim().is_empty() => {
                load.skipped.push(skip("empty creator_message".into()));
            }
            Ok(t) if t.topic.trim().is_empty() => load.skipped.push(skip("empty topic".into())),
            Ok(t) => load.threads.push(t),
            Err(e) => load.skipped.push(skip(e.to_string())),
        }
    }
    load
}

pub type Entity = IndexMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VenueDatabase {
    domains: BTreeMap<String, Vec<Entity>>,
}

const WILDCARD_VALUES: [&str; 5] = ["", "dontcare", "don't care", "not mentioned", "none"];

impl VenueDatabase {
    pub fn from_entities<I>(entities: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Entity)>,
    {
        let mut db = Self::default();
        for (domain, entity) in entities {
            db.insert(domain, entity)?;
        }
        Ok(db)
    }

    fn insert(&mut self, domain: String, entity: Entity) -> Result<()> {
        let name = entity
            .get("name")
            .map(|n| n.to_lowercase())
            .ok_or_else(|| Error::validation(format!("{domain} entity without a name")))?;
        let list = self.domains.entry(domain.clone()).or_default();
        if list.iter().any(|e| e["name"].to_lowercase() == name) {
            return Err(Error::validation(format!("duplicate {domain} entity {name:?}")));
        }
        list.push(entity);
        Ok(())
    }

    pub fn domain(&self, domain: &str) -> &[Entity] {
        self.domains.get(domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.domains.contains_key(domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.domains.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entities of `domain` matching every constraint. Wildcard values
    /// ("dontcare", ...) and attributes no entity of the domain carries
    /// (booking slots, for instance) impose nothing.
    pub fn lookup<'a, I>(&'a self, domain: &str, constraints: I) -> Vec<&'a Entity>
    where
        I: IntoIterator<Item = (&'a str, &'a str)> + Clone,
    {
        let entities = self.domain(domain);
        let modelled: HashSet<&str> = entities.iter().flat_map(|e| e.keys().map(String::as_str)).collect();
        let active: Vec<(&str, String)> = constraints
            .into_iter()
            .filter(|(k, v)| modelled.contains(k) && !WILDCARD_VALUES.contains(&v.trim().to_lowercase().as_str()))
            .map(|(k, v)| (k, v.trim().to_lowercase()))
            .collect();
        entities
            .iter()
            .filter(|e| {
                active
                    .iter()
                    .all(|(k, v)| e.get(*k).is_some_and(|ev| ev.trim().to_lowercase() == *v))
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct EntityRecord {
    domain: String,
    #[serde(flatten)]
    attributes: IndexMap<String, serde_json::Value>,
}

fn entity_from_record(record: EntityRecord) -> (String, Entity) {
    let entity = record
        .attributes
        .into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            (k.to_lowercase(), s)
        })
        .collect();
    (record.domain.to_lowercase(), entity)
}

/// Loads line-delimited entity records `{"domain": ..., "name": ..., ...}`
/// from a file or from every `.jsonl` file of a directory.
pub fn load_database(path: &Path) -> Result<VenueDatabase> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("jsonl" | "json")))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut db = VenueDatabase::default();
    for file in files {
        let text = crate::io::read_to_string(&file)?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: EntityRecord =
                serde_json::from_str(line).map_err(|e| Error::format(&file, format!("line {}: {e}", n + 1)))?;
            let (domain, entity) = entity_from_record(record);
            db.insert(domain, entity)
                .map_err(|e| Error::format(&file, format!("line {}: {e}", n + 1)))?;
        }
    }
    Ok(db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub rng_seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, rng_seed: u64) -> Result<Self> {
        let s = Self {
            train,
            val,
            test,
            rng_seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ratios = [self.train, self.val, self.test];
        if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "split ratios {ratios:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded permutation followed by a contiguous partition. Validation and
/// test sizes are floored; the remainder goes to train.
pub fn split_corpus<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Splits<T>> {
    spec.validate()?;
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.rng_seed));
    let n_val = (n as f64 * spec.val + 1e-9).floor() as usize;
    let n_test = (n as f64 * spec.test + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| items[i].clone()).collect();
    Ok(Splits {
        train: take(0..n_train),
        val: take(n_train..n_train + n_val),
        test: take(n_train + n_val..n),
    })
}

/// Official validation/test id lists, when the dataset ships them.
pub fn load_split_lists(dir: &Path) -> Result<Option<(HashSet<String>, HashSet<String>)>> {
    let val = dir.join("valListFile.txt");
    let test = dir.join("testListFile.txt");
    if !val.is_file() || !test.is_file() {
        return Ok(None);
    }
    let read = |p: &Path| -> Result<HashSet<String>> {
        Ok(crate::io::read_to_string(p)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    };
    Ok(Some((read(&val)?, read(&test)?)))
}

pub fn split_by_lists(
    sessions: &[DialogSession],
    val: &HashSet<String>,
    test: &HashSet<String>,
) -> Splits<DialogSession> {
    let mut splits = Splits::default();
    for s in sessions {
        let id = s.session_id.as_str();
        let bucket = if test.contains(id) {
            &mut splits.test
        } else if val.contains(id) {
            &mut splits.val
        } else {
            &mut splits.train
        };
        bucket.push(s.clone());
    }
    splits
}
