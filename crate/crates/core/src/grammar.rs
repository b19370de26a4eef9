//! Delimited-field regular grammars for turn-cyclic dialog encodings.
//!
//! A [`GrammarSpec`] describes one UBAR-shaped language: an ordered list of
//! fields, each wrapped in a start/end marker and carrying a content class.
//! Two of them ship built in: the task-oriented `target` grammar and the
//! simplified `pseudo` grammar fabricated from forum threads, in which the
//! belief is a bare topic label and the action field is always empty.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};

use crate::dialog::{BeliefSlot, DialogAct, DialogSession, Turn};
use crate::error::{Error, Result};

pub const TARGET: &str = "target";
pub const PSEUDO: &str = "pseudo";

/// The eight forum topics of the pseudo-supervised corpus.
pub const DEFAULT_TOPICS: [&str; 8] = [
    "paris",
    "rome",
    "istanbul",
    "barcelona",
    "madrid",
    "amsterdam",
    "lisbon",
    "london",
];

const DEFAULT_DOMAINS: [&str; 7] = [
    "attraction",
    "hospital",
    "hotel",
    "police",
    "restaurant",
    "taxi",
    "train",
];

const DEFAULT_BELIEF_KEYS: [&str; 17] = [
    "area",
    "arriveby",
    "bookday",
    "bookpeople",
    "bookstay",
    "booktime",
    "day",
    "department",
    "departure",
    "destination",
    "food",
    "internet",
    "leaveat",
    "name",
    "parking",
    "pricerange",
    "stars",
];

const DEFAULT_BELIEF_VALUES: [&str; 22] = [
    "cambridge",
    "centre",
    "cheap",
    "chinese",
    "dontcare",
    "east",
    "expensive",
    "free",
    "friday",
    "guesthouse",
    "indian",
    "italian",
    "monday",
    "moderate",
    "north",
    "no",
    "south",
    "west",
    "yes",
    "4",
    "2",
    "18:00",
];

const DEFAULT_ACTS: [&str; 13] = [
    "book",
    "bye",
    "greet",
    "inform",
    "nobook",
    "nooffer",
    "offerbook",
    "offerbooked",
    "recommend",
    "reqmore",
    "request",
    "select",
    "welcome",
];

const DEFAULT_ACT_SLOTS: [&str; 16] = [
    "address",
    "area",
    "arriveby",
    "choice",
    "day",
    "departure",
    "destination",
    "food",
    "leaveat",
    "name",
    "people",
    "phone",
    "postcode",
    "price",
    "pricerange",
    "reference",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldId {
    U,
    B,
    A,
    R,
}

impl FieldId {
    pub const ALL: [FieldId; 4] = [FieldId::U, FieldId::B, FieldId::A, FieldId::R];

    pub fn letter(self) -> char {
        match self {
            FieldId::U => 'u',
            FieldId::B => 'b',
            FieldId::A => 'a',
            FieldId::R => 'r',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldId::U => "utterance",
            FieldId::B => "belief",
            FieldId::A => "action",
            FieldId::R => "response",
        }
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldMarker {
    pub field_id: FieldId,
    pub start_token: String,
    pub end_token: String,
}

impl FieldMarker {
    /// `<sos_x>` / `<eos_x>`.
    pub fn standard(field_id: FieldId) -> Self {
        let c = field_id.letter();
        Self {
            field_id,
            start_token: format!("<sos_{c}>"),
            end_token: format!("<eos_{c}>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    FreeText,
    Keyed,
    Empty,
}

/// What may appear between a field's markers.
///
/// For a keyed belief field `key_vocab` holds slot keys, `value_vocab` slot
/// values and `domain_vocab` the bracketed domain headers. For a keyed action
/// field `key_vocab` holds the bracketed act names and `value_vocab` the slot
/// names. An empty vocabulary set is unconstrained, except `key_vocab`,
/// which a keyed class requires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentClass {
    pub kind: ContentKind,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub key_vocab: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub value_vocab: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub domain_vocab: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_ref: Option<String>,
}

impl ContentClass {
    pub fn free_text() -> Self {
        Self {
            kind: ContentKind::FreeText,
            key_vocab: BTreeSet::new(),
            value_vocab: BTreeSet::new(),
            domain_vocab: BTreeSet::new(),
            corpus_ref: None,
        }
    }

    pub fn empty() -> Self {
        Self {
            kind: ContentKind::Empty,
            ..Self::free_text()
        }
    }

    pub fn keyed<K, V, D>(keys: K, values: V, domains: D) -> Self
    where
        K: IntoIterator,
        K::Item: Into<String>,
        V: IntoIterator,
        V::Item: Into<String>,
        D: IntoIterator,
        D::Item: Into<String>,
    {
        Self {
            kind: ContentKind::Keyed,
            key_vocab: keys.into_iter().map(Into::into).collect(),
            value_vocab: values.into_iter().map(Into::into).collect(),
            domain_vocab: domains.into_iter().map(Into::into).collect(),
            corpus_ref: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.kind == ContentKind::Empty
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarField {
    pub marker: FieldMarker,
    pub content: ContentClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub name: String,
    pub cyclic: bool,
    pub fields: Vec<GrammarField>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub active_fields: usize,
    pub subtask_count: usize,
    pub total: usize,
}

impl GrammarSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            TARGET => Ok(Self::target(
                DEFAULT_DOMAINS,
                DEFAULT_BELIEF_KEYS,
                DEFAULT_BELIEF_VALUES,
                DEFAULT_ACTS,
                DEFAULT_ACT_SLOTS,
            )),
            PSEUDO => Ok(Self::pseudo(DEFAULT_TOPICS)),
            other => Err(Error::validation(format!(
                "unknown built-in grammar {other:?} (expected {TARGET:?} or {PSEUDO:?})"
            ))),
        }
    }

    /// The task-oriented grammar with a dataset-specific annotation schema.
    pub fn target<D, BK, BV, AK, AS>(domains: D, belief_keys: BK, belief_values: BV, acts: AK, act_slots: AS) -> Self
    where
        D: IntoIterator,
        D::Item: Into<String>,
        BK: IntoIterator,
        BK::Item: Into<String>,
        BV: IntoIterator,
        BV::Item: Into<String>,
        AK: IntoIterator,
        AK::Item: Into<String>,
        AS: IntoIterator,
        AS::Item: Into<String>,
    {
        Self::from_contents(
            TARGET,
            [
                ContentClass::free_text(),
                ContentClass::keyed(belief_keys, belief_values, domains),
                ContentClass::keyed(acts, act_slots, std::iter::empty::<String>()),
                ContentClass::free_text(),
            ],
        )
    }

    /// The forum-derived grammar: topic label as belief, empty action.
    pub fn pseudo<T>(topics: T) -> Self
    where
        T: IntoIterator,
        T::Item: Into<String>,
    {
        Self::from_contents(
            PSEUDO,
            [
                ContentClass::free_text(),
                ContentClass::keyed(topics, std::iter::empty::<String>(), std::iter::empty::<String>()),
                ContentClass::empty(),
                ContentClass::free_text(),
            ],
        )
    }

    fn from_contents(name: &str, contents: [ContentClass; 4]) -> Self {
        let fields = FieldId::ALL
            .into_iter()
            .zip(contents)
            .map(|(id, content)| GrammarField {
                marker: FieldMarker::standard(id),
                content,
            })
            .collect();
        Self {
            name: name.to_string(),
            cyclic: true,
            fields,
        }
    }

    pub fn field(&self, id: FieldId) -> Option<&GrammarField> {
        self.fields.iter().find(|f| f.marker.field_id == id)
    }

    pub fn marker_tokens(&self) -> impl Iterator<Item = &str> {
        self.fields
            .iter()
            .flat_map(|f| [f.marker.start_token.as_str(), f.marker.end_token.as_str()])
    }

    pub fn is_marker(&self, token: &str) -> bool {
        self.marker_tokens().any(|m| m == token)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::validation(format!("grammar {:?} has no fields", self.name)));
        }
        let mut ids = BTreeSet::new();
        let mut tokens = BTreeSet::new();
        for f in &self.fields {
            let id = f.marker.field_id;
            if !ids.insert(id) {
                return Err(Error::validation(format!(
                    "grammar {:?}: field {id} declared twice",
                    self.name
                )));
            }
            for tok in [&f.marker.start_token, &f.marker.end_token] {
                if !is_marker_surface(tok) {
                    return Err(Error::validation(format!(
                        "grammar {:?}: marker {tok:?} is not a single <...> token",
                        self.name
                    )));
                }
                if !tokens.insert(tok.as_str()) {
                    return Err(Error::validation(format!(
                        "grammar {:?}: marker {tok:?} is not unique",
                        self.name
                    )));
                }
            }
            let c = &f.content;
            match c.kind {
                ContentKind::Keyed => {
                    if !matches!(id, FieldId::B | FieldId::A) {
                        return Err(Error::validation(format!(
                            "grammar {:?}: only belief and action fields may be keyed",
                            self.name
                        )));
                    }
                    if c.key_vocab.is_empty() {
                        return Err(Error::validation(format!(
                            "grammar {:?}: keyed {id} field has an empty key vocabulary",
                            self.name
                        )));
                    }
                    let all = c.key_vocab.iter().chain(&c.value_vocab).chain(&c.domain_vocab);
                    for word in all {
                        if word.is_empty() || word.contains(char::is_whitespace) && !c.value_vocab.contains(word) {
                            return Err(Error::validation(format!(
                                "grammar {:?}: vocabulary entry {word:?} must be a single token",
                                self.name
                            )));
                        }
                    }
                    if let Some(k) = c.key_vocab.iter().find(|k| value_tokens_collide(&c.value_vocab, k)) {
                        return Err(Error::validation(format!(
                            "grammar {:?}: key {k:?} also occurs inside a value",
                            self.name
                        )));
                    }
                }
                ContentKind::FreeText => {
                    if !matches!(id, FieldId::U | FieldId::R) {
                        return Err(Error::validation(format!(
                            "grammar {:?}: only utterance and response fields hold free text",
                            self.name
                        )));
                    }
                }
                ContentKind::Empty => {
                    if !(c.key_vocab.is_empty() && c.value_vocab.is_empty() && c.domain_vocab.is_empty()) {
                        return Err(Error::validation(format!(
                            "grammar {:?}: empty {id} field carries vocabularies",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::validation(format!("grammar file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grammar specs always serialize")
    }

    /// Resolves a built-in name or a path to a grammar file.
    pub fn resolve(reference: &str) -> Result<Self> {
        if reference == TARGET || reference == PSEUDO {
            return Self::builtin(reference);
        }
        let path = Path::new(reference);
        let text = crate::io::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

fn value_tokens_collide(values: &BTreeSet<String>, key: &str) -> bool {
    values.iter().any(|v| v.split_whitespace().any(|w| w == key))
}

pub(crate) fn is_marker_surface(tok: &str) -> bool {
    tok.len() > 2
        && tok.starts_with('<')
        && tok.ends_with('>')
        && !tok[1..tok.len() - 1].contains(['<', '>'])
        && !tok.contains(char::is_whitespace)
}

pub fn builtin_grammar(name: &str) -> Result<GrammarSpec> {
    GrammarSpec::builtin(name)
}

pub fn complexity(spec: &GrammarSpec) -> ComplexityScore {
    let active_fields = spec.fields.iter().filter(|f| !f.content.is_empty()).count();
    let subtask_count = spec
        .fields
        .iter()
        .filter(|f| f.content.kind == ContentKind::Keyed)
        .map(|f| usize::from(!f.content.key_vocab.is_empty()) + usize::from(!f.content.value_vocab.is_empty()))
        .sum::<usize>();
    ComplexityScore {
        active_fields,
        subtask_count,
        total: active_fields + subtask_count,
    }
}

/// Grammatical similarity: identical field sequence and marker surfaces,
/// and both languages cyclic.
pub fn similar(a: &GrammarSpec, b: &GrammarSpec) -> bool {
    a.cyclic
        && b.cyclic
        && a.fields.len() == b.fields.len()
        && a.fields.iter().zip(&b.fields).all(|(x, y)| x.marker == y.marker)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderViolationKind {
    ComplexityNotIncreasing,
    Dissimilar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderViolation {
    pub first: usize,
    pub second: usize,
    pub kind: OrderViolationKind,
}

impl fmt::Display for OrderViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            OrderViolationKind::ComplexityNotIncreasing => "complexity not increasing",
            OrderViolationKind::Dissimilar => "grammars are not similar",
        };
        write!(f, "({}, {}): {what}", self.first, self.second)
    }
}

/// Checks that complexity strictly increases along `specs` and that every
/// pair is similar. An empty result means the order is valid.
pub fn validate_curriculum_order(specs: &[GrammarSpec]) -> Result<Vec<OrderViolation>> {
    if specs.is_empty() {
        return Err(Error::validation("curriculum has no grammars"));
    }
    let scores: Vec<_> = specs.iter().map(complexity).collect();
    let mut violations = Vec::new();
    for i in 0..specs.len() {
        if i + 1 < specs.len() && scores[i].total >= scores[i + 1].total {
            violations.push(OrderViolation {
                first: i,
                second: i + 1,
                kind: OrderViolationKind::ComplexityNotIncreasing,
            });
        }
        for j in i + 1..specs.len() {
            if !similar(&specs[i], &specs[j]) {
                violations.push(OrderViolation {
                    first: i,
                    second: j,
                    kind: OrderViolationKind::Dissimilar,
                });
            }
        }
    }
    Ok(violations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleParams {
    pub turns: usize,
    pub vocab_size: usize,
    /// Inclusive word-count range for utterances and responses.
    pub utterance_len: (usize, usize),
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            turns: 3,
            vocab_size: 200,
            utterance_len: (3, 8),
        }
    }
}

/// Surface word for a synthetic vocabulary rank.
pub fn synthetic_word(rank: usize) -> String {
    format!("w{rank}")
}

/// Draws a synthetic session that conforms to `spec`.
///
/// Free text is Zipf-distributed over the words `w0..w{vocab_size-1}`.
/// Every belief value (or label, for key-only beliefs) is also planted in
/// the utterance, so the belief field is recoverable from the turn text.
pub fn sample_session(spec: &GrammarSpec, rng_seed: u64, params: &SampleParams) -> Result<DialogSession> {
    spec.validate()?;
    if params.turns == 0 {
        return Err(Error::validation("sample_session: turns must be positive"));
    }
    if params.vocab_size == 0 {
        return Err(Error::validation("sample_session: vocab_size must be positive"));
    }
    let (lo, hi) = params.utterance_len;
    if lo == 0 || lo > hi {
        return Err(Error::validation(format!(
            "sample_session: invalid utterance length range {lo}..={hi}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let zipf = Zipf::new(params.vocab_size as u64, 1.0).map_err(|e| Error::validation(e.to_string()))?;
    let words = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.gen_range(lo..=hi);
        (0..n).map(|_| synthetic_word(zipf.sample(rng) as usize - 1)).collect()
    };

    let mut turns = Vec::with_capacity(params.turns);
    for _ in 0..params.turns {
        let mut turn = Turn::default();
        let mut utterance = Vec::new();
        for field in &spec.fields {
            match (field.marker.field_id, field.content.kind) {
                (FieldId::U, ContentKind::FreeText) => utterance = words(&mut rng),
                (FieldId::R, ContentKind::FreeText) => turn.response = words(&mut rng).join(" "),
                (FieldId::B, ContentKind::Keyed) => turn.belief = sample_belief(&field.content, &mut rng),
                (FieldId::A, ContentKind::Keyed) => turn.actions = sample_actions(&field.content, &mut rng),
                _ => {}
            }
        }
        if spec
            .field(FieldId::U)
            .is_some_and(|f| f.content.kind == ContentKind::FreeText)
        {
            for slot in &turn.belief {
                let planted = if slot.value.is_empty() { &slot.key } else { &slot.value };
                let at = rng.gen_range(0..=utterance.len());
                utterance.insert(at, planted.clone());
            }
        }
        turn.utterance = utterance.join(" ");
        turns.push(turn);
    }
    Ok(DialogSession::new(format!("{}-{rng_seed}", spec.name), turns))
}

fn pick<'a>(set: &'a BTreeSet<String>, rng: &mut ChaCha8Rng) -> Option<&'a String> {
    if set.is_empty() {
        None
    } else {
        set.iter().nth(rng.gen_range(0..set.len()))
    }
}

fn sample_belief(content: &ContentClass, rng: &mut ChaCha8Rng) -> Vec<BeliefSlot> {
    let keys: Vec<&String> = content.key_vocab.iter().collect();
    // key-only vocabularies are single-label classification
    let n = if content.value_vocab.is_empty() {
        1
    } else {
        rng.gen_range(1..=keys.len().min(3))
    };
    let domain = pick(&content.domain_vocab, rng).cloned().unwrap_or_default();
    keys.choose_multiple(rng, n)
        .map(|k| {
            let value = pick(&content.value_vocab, rng).cloned().unwrap_or_default();
            BeliefSlot::new(domain.clone(), (*k).clone(), value)
        })
        .collect()
}

fn sample_actions(content: &ContentClass, rng: &mut ChaCha8Rng) -> Vec<DialogAct> {
    let n = rng.gen_range(1..=content.key_vocab.len().min(2));
    let acts: Vec<&String> = content.key_vocab.iter().collect();
    acts.choose_multiple(rng, n)
        .map(|act| {
            let slots = (0..rng.gen_range(0..=2))
                .filter_map(|_| pick(&content.value_vocab, rng).cloned())
                .collect::<Vec<_>>();
            DialogAct::new((*act).clone(), slots)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn renamed(spec: &GrammarSpec) -> GrammarSpec {
        let mut s = spec.clone();
        for f in &mut s.fields {
            let c = f.marker.field_id.letter();
            f.marker.start_token = format!("<tag_{c}>");
            f.marker.end_token = format!("</tag_{c}>");
        }
        s
    }

    #[test]
    fn builtins_have_expected_shape() {
        let target = builtin_grammar(TARGET).unwrap();
        let pseudo = builtin_grammar(PSEUDO).unwrap();
        assert_eq!(target.fields[2].content.kind, ContentKind::Keyed);
        assert_eq!(pseudo.fields[2].content.kind, ContentKind::Empty);
        assert_eq!(pseudo.fields[0].marker.start_token, "<sos_u>");
        let ids: Vec<_> = target.fields.iter().map(|f| f.marker.field_id).collect();
        assert_eq!(ids, FieldId::ALL);
        assert!(pseudo.fields[1].content.value_vocab.is_empty());
        target.validate().unwrap();
        pseudo.validate().unwrap();
        assert!(builtin_grammar("multiwoz").is_err());
    }

    #[test]
    fn complexity_of_builtins() {
        let t = complexity(&builtin_grammar(TARGET).unwrap());
        let p = complexity(&builtin_grammar(PSEUDO).unwrap());
        assert_eq!((t.active_fields, t.subtask_count, t.total), (4, 4, 8));
        assert_eq!((p.active_fields, p.subtask_count, p.total), (3, 1, 4));
        assert!(p.total < t.total);
    }

    #[test]
    fn similarity() {
        let t = builtin_grammar(TARGET).unwrap();
        let p = builtin_grammar(PSEUDO).unwrap();
        assert!(similar(&t, &p));
        assert!(similar(&t, &t));
        let r = renamed(&t);
        r.validate().unwrap();
        assert!(!similar(&t, &r));
        let mut acyclic = t.clone();
        acyclic.cyclic = false;
        assert!(!similar(&acyclic, &t));
    }

    #[test]
    fn curriculum_order() {
        let t = builtin_grammar(TARGET).unwrap();
        let p = builtin_grammar(PSEUDO).unwrap();
        assert!(validate_curriculum_order(&[p.clone(), t.clone()]).unwrap().is_empty());
        assert_eq!(
            validate_curriculum_order(&[t.clone(), p.clone()]).unwrap(),
            vec![OrderViolation {
                first: 0,
                second: 1,
                kind: OrderViolationKind::ComplexityNotIncreasing
            }]
        );
        let v = validate_curriculum_order(&[p.clone(), renamed(&t)]).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, OrderViolationKind::Dissimilar);
        assert!(validate_curriculum_order(&[]).is_err());
        assert!(validate_curriculum_order(&[t]).unwrap().is_empty());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = builtin_grammar(TARGET).unwrap();
        s.fields[1].marker.end_token = "<eos_u>".into();
        assert!(s.validate().is_err());

        let mut s = builtin_grammar(PSEUDO).unwrap();
        s.fields[1].content.key_vocab.clear();
        assert!(s.validate().is_err());

        let mut s = builtin_grammar(PSEUDO).unwrap();
        s.fields[0].marker.start_token = "sos_u".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let t = builtin_grammar(TARGET).unwrap();
        let text = t.to_toml_string();
        assert_eq!(GrammarSpec::from_toml_str(&text).unwrap(), t);
    }

    #[test]
    fn sampling_is_deterministic_and_conforms() {
        let params = SampleParams {
            turns: 2,
            ..SampleParams::default()
        };
        let p = builtin_grammar(PSEUDO).unwrap();
        let a = sample_session(&p, 7, &params).unwrap();
        assert_eq!(a, sample_session(&p, 7, &params).unwrap());
        assert_eq!(a.turns.len(), 2);
        for turn in &a.turns {
            assert!(turn.actions.is_empty());
            assert_eq!(turn.belief.len(), 1);
            assert!(DEFAULT_TOPICS.contains(&turn.belief[0].key.as_str()));
            assert!(turn.utterance.split(' ').any(|w| w == turn.belief[0].key));
        }
        let t = builtin_grammar(TARGET).unwrap();
        let s = sample_session(&t, 7, &params).unwrap();
        assert!(s.turns.iter().all(|t| !t.actions.is_empty() && !t.belief.is_empty()));
    }

    #[test]
    fn sampling_rejects_zero_params() {
        let p = builtin_grammar(PSEUDO).unwrap();
        let zero_turns = SampleParams {
            turns: 0,
            ..SampleParams::default()
        };
        let zero_vocab = SampleParams {
            vocab_size: 0,
            ..SampleParams::default()
        };
        assert!(sample_session(&p, 1, &zero_turns).is_err());
        assert!(sample_session(&p, 1, &zero_vocab).is_err());
    }
}
