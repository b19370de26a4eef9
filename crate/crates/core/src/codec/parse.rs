//! Strict and lenient parsing of encoded dialog sequences.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::encode::{is_bracketed, unbracket};
use crate::dialog::{BeliefSlot, DialogAct, DialogSession, Turn};
use crate::error::{Error, Result};
use crate::grammar::{ContentClass, ContentKind, FieldId, GrammarField, GrammarSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The text must be a complete word of the cyclic language.
    Strict,
    /// Recover the longest well-formed prefix and report what went wrong.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    UnterminatedField {
        field: FieldId,
        offset: usize,
    },
    OutOfOrderMarker {
        offset: usize,
        found: String,
        expected: String,
    },
    UnexpectedText {
        offset: usize,
        found: String,
    },
    InvalidContent {
        field: FieldId,
        offset: usize,
        reason: String,
    },
    IncompleteCycle {
        offset: usize,
        missing: FieldId,
    },
    TrailingGarbage {
        offset: usize,
        tokens: usize,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnterminatedField { field, .. } => write!(f, "unterminated {field} field"),
            Diagnostic::OutOfOrderMarker {
                offset,
                found,
                expected,
            } => {
                write!(f, "out-of-order marker {found} at byte {offset} (expected {expected})")
            }
            Diagnostic::UnexpectedText { offset, found } => {
                write!(f, "text {found:?} outside any field at byte {offset}")
            }
            Diagnostic::InvalidContent { field, offset, reason } => {
                write!(f, "invalid {field} content at byte {offset}: {reason}")
            }
            Diagnostic::IncompleteCycle { missing, .. } => {
                write!(f, "incomplete turn: missing {missing} field")
            }
            Diagnostic::TrailingGarbage { offset, tokens } => {
                write!(f, "trailing garbage: {tokens} tokens from byte {offset}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSession {
    pub session: DialogSession,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    offset: usize,
}

fn tokens_with_offsets(text: &str) -> Vec<Token<'_>> {
    let base = text.as_ptr() as usize;
    text.split_whitespace()
        .map(|t| Token {
            text: t,
            offset: t.as_ptr() as usize - base,
        })
        .collect()
}

struct Failure {
    diagnostic: Diagnostic,
    offset: usize,
    expected: Vec<String>,
    found: Option<String>,
}

impl Failure {
    fn into_error(self) -> Error {
        Error::Parse {
            offset: self.offset,
            expected: self.expected,
            found: self.found,
        }
    }
}

/// Parses `text` against `spec`. Strict mode fails with the byte offset and
/// the expected-token set of the first violation; lenient mode never fails.
pub fn parse_sequence(text: &str, spec: &GrammarSpec, mode: ParseMode) -> Result<ParsedSession> {
    spec.validate()?;
    let tokens = tokens_with_offsets(text);
    let mut turns = Vec::new();
    let mut diagnostics = Vec::new();
    let mut turn = Turn::default();
    let mut filled = 0usize;
    let mut field_idx = 0usize;
    let mut open: Option<usize> = None;
    let mut cycles = 0usize;
    let mut i = 0usize;

    // `garbage_from` is the index of the first token that is not recovered.
    let fail = |failure: Failure,
                garbage_from: usize,
                turns: &mut Vec<Turn>,
                diagnostics: &mut Vec<Diagnostic>,
                turn: Turn,
                filled: usize|
     -> Result<()> {
        if mode == ParseMode::Strict {
            return Err(failure.into_error());
        }
        diagnostics.push(failure.diagnostic);
        if filled > 0 {
            turns.push(turn);
        }
        if garbage_from < tokens.len() {
            diagnostics.push(Diagnostic::TrailingGarbage {
                offset: tokens[garbage_from].offset,
                tokens: tokens.len() - garbage_from,
            });
        }
        Ok(())
    };

    while i < tokens.len() {
        let tok = tokens[i];
        let field = &spec.fields[field_idx];
        match open {
            None => {
                if !spec.cyclic && cycles == 1 {
                    let failure = Failure {
                        diagnostic: Diagnostic::UnexpectedText {
                            offset: tok.offset,
                            found: tok.text.to_string(),
                        },
                        offset: tok.offset,
                        expected: vec!["end of input".into()],
                        found: Some(tok.text.to_string()),
                    };
                    fail(failure, i, &mut turns, &mut diagnostics, turn, filled)?;
                    return Ok(finish(turns, diagnostics));
                }
                if tok.text == field.marker.start_token {
                    open = Some(i);
                } else {
                    let expected = field.marker.start_token.clone();
                    let diagnostic = if spec.is_marker(tok.text) {
                        Diagnostic::OutOfOrderMarker {
                            offset: tok.offset,
                            found: tok.text.to_string(),
                            expected: expected.clone(),
                        }
                    } else {
                        Diagnostic::UnexpectedText {
                            offset: tok.offset,
                            found: tok.text.to_string(),
                        }
                    };
                    let failure = Failure {
                        diagnostic,
                        offset: tok.offset,
                        expected: vec![expected],
                        found: Some(tok.text.to_string()),
                    };
                    fail(failure, i, &mut turns, &mut diagnostics, turn, filled)?;
                    return Ok(finish(turns, diagnostics));
                }
            }
            Some(start) => {
                if tok.text == field.marker.end_token {
                    let content = &tokens[start + 1..i];
                    if let Err(failure) = fill_field(&mut turn, field, content, spec, tok.offset) {
                        if mode == ParseMode::Strict {
                            return Err(failure.into_error());
                        }
                        diagnostics.push(failure.diagnostic);
                    }
                    filled += 1;
                    open = None;
                    field_idx += 1;
                    if field_idx == spec.fields.len() {
                        turns.push(std::mem::take(&mut turn));
                        filled = 0;
                        field_idx = 0;
                        cycles += 1;
                    }
                } else if spec.is_marker(tok.text) {
                    let failure = Failure {
                        diagnostic: Diagnostic::OutOfOrderMarker {
                            offset: tok.offset,
                            found: tok.text.to_string(),
                            expected: field.marker.end_token.clone(),
                        },
                        offset: tok.offset,
                        expected: vec![field.marker.end_token.clone(), "field content".into()],
                        found: Some(tok.text.to_string()),
                    };
                    fail(failure, i, &mut turns, &mut diagnostics, turn, filled)?;
                    return Ok(finish(turns, diagnostics));
                }
            }
        }
        i += 1;
    }

    let end = text.len();
    let field = &spec.fields[field_idx];
    if open.is_some() {
        let failure = Failure {
            diagnostic: Diagnostic::UnterminatedField {
                field: field.marker.field_id,
                offset: end,
            },
            offset: end,
            expected: vec![field.marker.end_token.clone()],
            found: None,
        };
        fail(failure, tokens.len(), &mut turns, &mut diagnostics, turn, filled)?;
    } else if field_idx != 0 {
        let failure = Failure {
            diagnostic: Diagnostic::IncompleteCycle {
                offset: end,
                missing: field.marker.field_id,
            },
            offset: end,
            expected: vec![field.marker.start_token.clone()],
            found: None,
        };
        fail(failure, tokens.len(), &mut turns, &mut diagnostics, turn, filled)?;
    }
    Ok(finish(turns, diagnostics))
}

fn finish(turns: Vec<Turn>, diagnostics: Vec<Diagnostic>) -> ParsedSession {
    ParsedSession {
        session: DialogSession::new("", turns),
        diagnostics,
    }
}

fn content_failure(field: FieldId, tok: Token<'_>, reason: String, expected: &[&str]) -> Failure {
    Failure {
        diagnostic: Diagnostic::InvalidContent {
            field,
            offset: tok.offset,
            reason,
        },
        offset: tok.offset,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: Some(tok.text.to_string()),
    }
}

fn fill_field(
    turn: &mut Turn,
    field: &GrammarField,
    content: &[Token<'_>],
    spec: &GrammarSpec,
    end_offset: usize,
) -> Result<(), Failure> {
    let id = field.marker.field_id;
    let text = || content.iter().map(|t| t.text).collect::<Vec<_>>().join(" ");
    match (id, field.content.kind) {
        (_, ContentKind::Empty) => {
            if let Some(&tok) = content.first() {
                return Err(content_failure(
                    id,
                    tok,
                    format!("{id} field must be empty"),
                    &[&field.marker.end_token],
                ));
            }
        }
        (FieldId::U, ContentKind::FreeText) => turn.utterance = text(),
        (FieldId::R, ContentKind::FreeText) => turn.response = text(),
        (FieldId::B, ContentKind::Keyed) => {
            turn.belief = parse_belief(content, &field.content, end_offset)?;
        }
        (FieldId::A, ContentKind::Keyed) => {
            turn.actions = parse_actions(content, &field.content)?;
        }
        _ => {
            // rejected by GrammarSpec::validate
            let _ = spec;
            unreachable!("unsupported content class for {id}")
        }
    }
    Ok(())
}

fn parse_belief(content: &[Token<'_>], class: &ContentClass, end_offset: usize) -> Result<Vec<BeliefSlot>, Failure> {
    let mut slots: Vec<BeliefSlot> = Vec::new();
    let mut value: Vec<&str> = Vec::new();
    let mut domain = String::new();
    let mut pending_header: Option<Token<'_>> = None;

    let flush = |slots: &mut Vec<BeliefSlot>, value: &mut Vec<&str>, at: Token<'_>| -> Result<(), Failure> {
        if let Some(slot) = slots.last_mut() {
            slot.value = value.join(" ");
            if !slot.value.is_empty() && !class.value_vocab.is_empty() && !class.value_vocab.contains(&slot.value) {
                return Err(content_failure(
                    FieldId::B,
                    at,
                    format!("belief value {:?} not in grammar", slot.value),
                    &["belief value"],
                ));
            }
        }
        value.clear();
        Ok(())
    };

    for &tok in content {
        if is_bracketed(tok.text) {
            flush(&mut slots, &mut value, tok)?;
            if let Some(h) = pending_header {
                return Err(content_failure(
                    FieldId::B,
                    h,
                    "domain without slots".into(),
                    &["belief key"],
                ));
            }
            let label = unbracket(tok.text);
            if !class.domain_vocab.is_empty() && !class.domain_vocab.contains(label) {
                return Err(content_failure(
                    FieldId::B,
                    tok,
                    format!("unknown domain {label:?}"),
                    &["domain"],
                ));
            }
            domain = label.to_string();
            pending_header = Some(tok);
        } else if class.key_vocab.contains(tok.text) {
            flush(&mut slots, &mut value, tok)?;
            pending_header = None;
            slots.push(BeliefSlot::new(domain.clone(), tok.text, ""));
        } else if slots.is_empty() || pending_header.is_some() {
            return Err(content_failure(
                FieldId::B,
                tok,
                format!("{:?} is not a belief key", tok.text),
                &["belief key"],
            ));
        } else {
            value.push(tok.text);
        }
    }
    let end = Token {
        text: "",
        offset: end_offset,
    };
    flush(&mut slots, &mut value, end)?;
    if let Some(h) = pending_header {
        return Err(content_failure(
            FieldId::B,
            h,
            "domain without slots".into(),
            &["belief key"],
        ));
    }
    Ok(slots)
}

fn parse_actions(content: &[Token<'_>], class: &ContentClass) -> Result<Vec<DialogAct>, Failure> {
    let mut acts: Vec<DialogAct> = Vec::new();
    for &tok in content {
        if is_bracketed(tok.text) {
            let act = unbracket(tok.text);
            if !class.key_vocab.contains(act) {
                return Err(content_failure(
                    FieldId::A,
                    tok,
                    format!("unknown act {act:?}"),
                    &["act"],
                ));
            }
            acts.push(DialogAct::new(act, Vec::<String>::new()));
        } else {
            let Some(current) = acts.last_mut() else {
                return Err(content_failure(
                    FieldId::A,
                    tok,
                    format!("slot {:?} before any act", tok.text),
                    &["act"],
                ));
            };
            if !class.value_vocab.is_empty() && !class.value_vocab.contains(tok.text) {
                return Err(content_failure(
                    FieldId::A,
                    tok,
                    format!("unknown act slot {:?}", tok.text),
                    &["act slot"],
                ));
            }
            current.slots.push(tok.text.to_string());
        }
    }
    Ok(acts)
}
