use std::borrow::Cow;

use crate::dialog::{BeliefSlot, DialogAct, DialogSession, Turn};
use crate::error::{Error, Result};
use crate::grammar::{ContentClass, ContentKind, FieldId, GrammarSpec};

pub(crate) fn is_bracketed(tok: &str) -> bool {
    tok.len() > 2 && tok.starts_with('[') && tok.ends_with(']')
}

pub(crate) fn unbracket(tok: &str) -> &str {
    &tok[1..tok.len() - 1]
}

/// Encodes every turn as one delimited cycle, e.g.
/// `<sos_u> U <eos_u> <sos_b> B <eos_b> <sos_a> A <eos_a> <sos_r> R <eos_r>`.
///
/// Free text is re-joined with single spaces. A session without turns
/// encodes to the empty string (the empty word of the cyclic language).
pub fn encode_session(session: &DialogSession, spec: &GrammarSpec) -> Result<String> {
    if session.turns.is_empty() {
        tracing::warn!(session = %session.session_id, "encoding a session without turns");
        return Ok(String::new());
    }
    let mut tokens: Vec<Cow<'_, str>> = Vec::new();
    for (i, turn) in session.turns.iter().enumerate() {
        encode_turn_into(turn, spec, &mut tokens).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("session {:?} turn {i}: {msg}", session.session_id)),
            other => other,
        })?;
    }
    Ok(tokens.join(" "))
}

pub fn encode_turn(turn: &Turn, spec: &GrammarSpec) -> Result<String> {
    let mut tokens = Vec::new();
    encode_turn_into(turn, spec, &mut tokens)?;
    Ok(tokens.join(" "))
}

fn encode_turn_into<'a>(turn: &'a Turn, spec: &'a GrammarSpec, out: &mut Vec<Cow<'a, str>>) -> Result<()> {
    for id in FieldId::ALL {
        if spec.field(id).is_none() && !field_is_blank(turn, id) {
            return Err(Error::validation(format!(
                "grammar has no {id} field but the turn fills it"
            )));
        }
    }
    for field in &spec.fields {
        let id = field.marker.field_id;
        out.push(Cow::Borrowed(&field.marker.start_token));
        match (id, field.content.kind) {
            (_, ContentKind::Empty) => {
                if !field_is_blank(turn, id) {
                    return Err(Error::validation(format!("{id} field must be empty")));
                }
            }
            (FieldId::U, ContentKind::FreeText) => push_free_text(&turn.utterance, spec, id, out)?,
            (FieldId::R, ContentKind::FreeText) => push_free_text(&turn.response, spec, id, out)?,
            (FieldId::B, ContentKind::Keyed) => push_belief(&turn.belief, &field.content, spec, out)?,
            (FieldId::A, ContentKind::Keyed) => push_actions(&turn.actions, &field.content, spec, out)?,
            _ => return Err(Error::validation(format!("unsupported content for {id} field"))),
        }
        out.push(Cow::Borrowed(&field.marker.end_token));
    }
    Ok(())
}

fn field_is_blank(turn: &Turn, id: FieldId) -> bool {
    match id {
        FieldId::U => turn.utterance.trim().is_empty(),
        FieldId::B => turn.belief.is_empty(),
        FieldId::A => turn.actions.is_empty(),
        FieldId::R => turn.response.trim().is_empty(),
    }
}

fn push_free_text<'a>(text: &'a str, spec: &GrammarSpec, id: FieldId, out: &mut Vec<Cow<'a, str>>) -> Result<()> {
    for word in text.split_whitespace() {
        if spec.is_marker(word) {
            return Err(Error::validation(format!("marker token {word:?} inside {id} text")));
        }
        out.push(Cow::Borrowed(word));
    }
    Ok(())
}

fn check_single(tok: &str, what: &str) -> Result<()> {
    if tok.is_empty() || tok.contains(char::is_whitespace) || is_bracketed(tok) {
        return Err(Error::validation(format!(
            "{what} {tok:?} must be a single plain token"
        )));
    }
    Ok(())
}

fn push_belief<'a>(
    slots: &'a [BeliefSlot],
    content: &ContentClass,
    spec: &GrammarSpec,
    out: &mut Vec<Cow<'a, str>>,
) -> Result<()> {
    let mut domain = "";
    for slot in slots {
        if !slot.domain.is_empty() {
            check_single(&slot.domain, "domain")?;
            if !content.domain_vocab.is_empty() && !content.domain_vocab.contains(&slot.domain) {
                return Err(Error::validation(format!("domain {:?} not in grammar", slot.domain)));
            }
        } else if !domain.is_empty() {
            return Err(Error::validation(format!(
                "belief slot {:?} without domain follows a domain group",
                slot.key
            )));
        }
        check_single(&slot.key, "belief key")?;
        if !content.key_vocab.contains(&slot.key) {
            return Err(Error::validation(format!("belief key {:?} not in grammar", slot.key)));
        }
        if !slot.value.is_empty() && !content.value_vocab.is_empty() && !content.value_vocab.contains(&slot.value) {
            return Err(Error::validation(format!(
                "belief value {:?} not in grammar",
                slot.value
            )));
        }
        for word in slot.value.split_whitespace() {
            if content.key_vocab.contains(word) || is_bracketed(word) || spec.is_marker(word) {
                return Err(Error::validation(format!(
                    "belief value {:?} contains reserved token {word:?}",
                    slot.value
                )));
            }
        }
        if !slot.domain.is_empty() && slot.domain != domain {
            domain = &slot.domain;
            out.push(Cow::Owned(format!("[{domain}]")));
        }
        out.push(Cow::Borrowed(&slot.key));
        out.extend(slot.value.split_whitespace().map(Cow::Borrowed));
    }
    Ok(())
}

fn push_actions<'a>(
    acts: &'a [DialogAct],
    content: &ContentClass,
    spec: &GrammarSpec,
    out: &mut Vec<Cow<'a, str>>,
) -> Result<()> {
    for act in acts {
        check_single(&act.act, "act")?;
        if !content.key_vocab.contains(&act.act) {
            return Err(Error::validation(format!("act {:?} not in grammar", act.act)));
        }
        out.push(Cow::Owned(format!("[{}]", act.act)));
        for slot in &act.slots {
            check_single(slot, "act slot")?;
            if spec.is_marker(slot) || (!content.value_vocab.is_empty() && !content.value_vocab.contains(slot)) {
                return Err(Error::validation(format!("act slot {slot:?} not in grammar")));
            }
            out.push(Cow::Borrowed(slot));
        }
    }
    Ok(())
}
