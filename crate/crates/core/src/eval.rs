//! Response generation with oracle belief/action, BLEU, INFORM/SUCCESS and
//! the combined score.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_turn, is_bracketed, TokenId, Vocabulary};
use crate::dialog::{BeliefSlot, DialogAct, DialogSession, Goal};
use crate::error::{Error, Result};
use crate::grammar::{FieldId, GrammarSpec};
use crate::ingest::VenueDatabase;
use crate::lm::{Model, SamplerConfig};
use crate::par::Execution;

pub const BLEU_EPSILON: f64 = 1e-9;
const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub dialog_id: String,
    pub turn_index: usize,
    pub oracle_belief: Vec<BeliefSlot>,
    pub oracle_action: Vec<DialogAct>,
    pub reference_response: String,
    pub generated_response: String,
    /// Decoding hit `max_new_tokens` before the end-of-response marker.
    pub truncated: bool,
}

/// Encoded prompt for `turn_index`: earlier turns in full, then the current
/// utterance, oracle belief and action, and the opening response marker.
/// Whole leading turns are dropped while the prompt exceeds `max_tokens`.
pub fn response_prefix(
    session: &DialogSession,
    turn_index: usize,
    spec: &GrammarSpec,
    max_tokens: usize,
) -> Result<String> {
    let r = spec
        .field(FieldId::R)
        .ok_or_else(|| Error::validation(format!("grammar {} has no response field", spec.name)))?;
    let mut current = session.turns[turn_index].clone();
    current.response.clear();
    let encoded = encode_turn(&current, spec)?;
    let cut = encoded
        .rfind(&r.marker.end_token)
        .ok_or_else(|| Error::validation("encoded turn lacks the response end marker"))?;
    let open = encoded[..cut].trim_end().to_string();
    let mut history: Vec<String> = session.turns[..turn_index]
        .iter()
        .map(|t| encode_turn(t, spec))
        .collect::<Result<_>>()?;
    let count = |s: &str| s.split_whitespace().count();
    let mut total: usize = count(&open) + history.iter().map(|h| count(h)).sum::<usize>();
    let mut drop = 0;
    while total > max_tokens && drop < history.len() {
        total -= count(&history[drop]);
        drop += 1;
    }
    history.drain(..drop);
    history.push(open);
    Ok(history.join(" "))
}

/// Samples a response for every turn of every session. Each dialog draws
/// from its own stream seeded by `(seed, dialog index)`.
pub fn generate_responses(
    model: &Model,
    vocab: &Vocabulary,
    sessions: &[DialogSession],
    spec: &GrammarSpec,
    sampler: &SamplerConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<GenerationRecord>> {
    sampler.validate()?;
    if model.config().vocab_size != vocab.len() {
        return Err(Error::validation(format!(
            "model vocab_size {} does not match vocabulary of {}",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    let stop = spec
        .field(FieldId::R)
        .and_then(|f| vocab.id(&f.marker.end_token))
        .ok_or_else(|| Error::validation("response end marker is not in the vocabulary"))?;
    let budget = model
        .config()
        .context_len
        .saturating_sub(sampler.max_new_tokens + 1)
        .max(1);
    let sampler = SamplerConfig {
        stop_token: Some(stop),
        ..*sampler
    };
    let per_dialog = exec.map_indexed(sessions.len(), |i| -> Result<Vec<GenerationRecord>> {
        let session = &sessions[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut out = Vec::with_capacity(session.turns.len());
        for (t, turn) in session.turns.iter().enumerate() {
            let prefix = response_prefix(session, t, spec, budget)?;
            let ids = vocab.tokenize(&prefix);
            let generated = model.sample_with(&ids, &sampler, &mut rng)?;
            let truncated = generated.last() != Some(&stop);
            out.push(GenerationRecord {
                dialog_id: session.session_id.clone(),
                turn_index: t,
                oracle_belief: turn.belief.clone(),
                oracle_action: turn.actions.clone(),
                reference_response: turn.response.clone(),
                generated_response: response_text(&generated, vocab, spec)?,
                truncated,
            });
        }
        Ok(out)
    });
    let mut records = Vec::new();
    for r in per_dialog {
        records.extend(r?);
    }
    Ok(records)
}

/// Text of generated ids up to the first marker or padding token.
fn response_text(ids: &[TokenId], vocab: &Vocabulary, spec: &GrammarSpec) -> Result<String> {
    let end = ids
        .iter()
        .position(|&id| id == vocab.pad_id() || vocab.token(id).is_some_and(|t| spec.is_marker(t)))
        .unwrap_or(ids.len());
    vocab.detokenize(&ids[..end])
}

/// Corpus BLEU-4 on whitespace tokens with clipped counts, uniform weights,
/// `BLEU_EPSILON` for empty precisions and the brevity penalty, in 0..=100.
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::validation(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::validation("BLEU needs at least one sentence pair"));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let c: Vec<&str> = c.as_ref().split_whitespace().collect();
        let r: Vec<&str> = r.as_ref().split_whitespace().collect();
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
            for g in r.windows(n) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut cand_counts: HashMap<&[&str], usize> = HashMap::new();
            for g in c.windows(n) {
                *cand_counts.entry(g).or_default() += 1;
            }
            totals[n - 1] += c.len().saturating_sub(n - 1);
            matches[n - 1] += cand_counts
                .iter()
                .map(|(g, &k)| k.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let log_precision: f64 = (0..MAX_ORDER)
        .map(|i| {
            let p = if matches[i] == 0 {
                BLEU_EPSILON
            } else {
                matches[i] as f64 / totals[i] as f64
            };
            p.ln() / MAX_ORDER as f64
        })
        .sum();
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * bp * log_precision.exp())
}

/// Rounds half-up to one decimal, tolerating representation error.
pub fn round_half_up_1(x: f64) -> f64 {
    let scaled = x * 10.0;
    let floor = scaled.floor();
    let r = if scaled - floor >= 0.5 - 1e-9 {
        floor + 1.0
    } else {
        floor
    };
    r / 10.0
}

/// `(inform + success) * 0.5 + bleu`, rounded half-up to one decimal.
pub fn combined(bleu: f64, inform: f64, success: f64) -> f64 {
    round_half_up_1((inform + success) * 0.5 + bleu)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogOutcome {
    pub dialog_id: String,
    pub informed: bool,
    pub success: bool,
    /// Goal domains for which an entity was offered.
    pub informed_domains: Vec<String>,
    /// Requested slots never provided, as `domain.slot`.
    pub missing_requests: Vec<String>,
    pub truncated_generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformSuccess {
    pub inform: f64,
    pub success: f64,
    pub evaluated: usize,
    pub excluded_without_goal: Vec<String>,
    pub dialogs: Vec<DialogOutcome>,
}

fn placeholders(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .filter(|t| is_bracketed(t))
        .map(|t| &t[1..t.len() - 1])
}

fn contains_phrase(text: &str, phrase: &str) -> bool {
    let words: Vec<&str> = text.split_whitespace().collect();
    let target: Vec<&str> = phrase.split_whitespace().collect();
    !target.is_empty() && words.windows(target.len()).any(|w| w == target.as_slice())
}

fn domain_constraints<'a>(belief: &'a [BeliefSlot], domain: &str) -> Vec<(&'a str, &'a str)> {
    belief
        .iter()
        .filter(|b| b.domain == domain)
        .map(|b| (b.key.as_str(), b.value.as_str()))
        .collect()
}

/// Whether `record` offers a `domain` entity satisfying the goal constraints.
fn offers_goal_entity(
    record: &GenerationRecord,
    domain: &str,
    goal: &crate::dialog::DomainGoal,
    db: &VenueDatabase,
) -> bool {
    let text = record.generated_response.as_str();
    let goal_constraints: Vec<(&str, &str)> = goal.inform.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let matching = db.lookup(domain, goal_constraints.iter().copied());
    if matching
        .iter()
        .any(|e| e.get("name").is_some_and(|n| contains_phrase(text, &n.to_lowercase())))
    {
        return true;
    }
    let in_belief = record.oracle_belief.iter().any(|b| b.domain == domain);
    let offered = placeholders(text).any(|p| {
        p == format!("{domain}_name")
            || p == format!("{domain}_id")
            || (in_belief && (p == "value_name" || p == "value_id"))
    });
    if !offered {
        return false;
    }
    if db.domain(domain).is_empty() {
        return true;
    }
    let venues = db.lookup(domain, domain_constraints(&record.oracle_belief, domain));
    venues
        .first()
        .is_some_and(|v| matching.iter().any(|m| m.get("name") == v.get("name")))
}

fn provides_slot(record: &GenerationRecord, domain: &str, slot: &str) -> bool {
    placeholders(&record.generated_response).any(|p| p == format!("{domain}_{slot}") || p == format!("value_{slot}"))
}

/// INFORM and SUCCESS rates over dialogs that carry a goal. Truncated
/// generations never count as offering or providing anything.
pub fn inform_success(
    sessions: &[DialogSession],
    records: &[GenerationRecord],
    db: &VenueDatabase,
) -> Result<InformSuccess> {
    if sessions.is_empty() || records.is_empty() {
        return Err(Error::validation("empty test set"));
    }
    let mut by_dialog: BTreeMap<&str, Vec<&GenerationRecord>> = BTreeMap::new();
    for r in records {
        by_dialog.entry(r.dialog_id.as_str()).or_default().push(r);
    }
    let mut excluded = Vec::new();
    let mut dialogs = Vec::new();
    for s in sessions {
        let Some(goal) = s.goal.as_ref().filter(|g| g.is_evaluable()) else {
            excluded.push(s.session_id.clone());
            continue;
        };
        let recs = by_dialog.get(s.session_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        dialogs.push(dialog_outcome(&s.session_id, goal, recs, db));
    }
    if dialogs.is_empty() {
        return Err(Error::validation(format!(
            "no evaluable dialogs ({} excluded without a goal)",
            excluded.len()
        )));
    }
    let n = dialogs.len() as f64;
    let rate = |f: fn(&DialogOutcome) -> bool| 100.0 * dialogs.iter().filter(|d| f(d)).count() as f64 / n;
    Ok(InformSuccess {
        inform: rate(|d| d.informed),
        success: rate(|d| d.success),
        evaluated: dialogs.len(),
        excluded_without_goal: excluded,
        dialogs,
    })
}

fn dialog_outcome(id: &str, goal: &Goal, records: &[&GenerationRecord], db: &VenueDatabase) -> DialogOutcome {
    let usable: Vec<&GenerationRecord> = records.iter().copied().filter(|r| !r.truncated).collect();
    let mut informed_domains = Vec::new();
    let mut missing = Vec::new();
    for (domain, dg) in &goal.domains {
        if usable.iter().any(|r| offers_goal_entity(r, domain, dg, db)) {
            informed_domains.push(domain.clone());
        }
        for slot in &dg.request {
            if !usable.iter().any(|r| provides_slot(r, domain, slot)) {
                missing.push(format!("{domain}.{slot}"));
            }
        }
    }
    let informed = informed_domains.len() == goal.domains.len();
    DialogOutcome {
        dialog_id: id.to_string(),
        informed,
        success: informed && missing.is_empty(),
        informed_domains,
        missing_requests: missing,
        truncated_generations: records.len() - usable.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub dialogs: usize,
    pub evaluated_dialogs: usize,
    pub excluded_without_goal: usize,
    pub turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub inform: f64,
    pub success: f64,
    pub combined: f64,
    pub counts: EvalCounts,
    pub truncated_generations: usize,
}

/// Scores generated records; BLEU runs on the delexicalized text as
/// generated.
pub fn evaluate(
    sessions: &[DialogSession],
    records: &[GenerationRecord],
    db: &VenueDatabase,
) -> Result<(EvalReport, InformSuccess)> {
    let is = inform_success(sessions, records, db)?;
    let cands: Vec<&str> = records.iter().map(|r| r.generated_response.as_str()).collect();
    let refs: Vec<&str> = records.iter().map(|r| r.reference_response.as_str()).collect();
    let b = bleu(&cands, &refs)?;
    let report = EvalReport {
        bleu: b,
        inform: is.inform,
        success: is.success,
        combined: combined(b, is.inform, is.success),
        counts: EvalCounts {
            dialogs: sessions.len(),
            evaluated_dialogs: is.evaluated,
            excluded_without_goal: is.excluded_without_goal.len(),
            turns: records.len(),
        },
        truncated_generations: records.iter().filter(|r| r.truncated).count(),
    };
    Ok((report, is))
}
