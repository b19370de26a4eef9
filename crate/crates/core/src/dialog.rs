//! Structured dialog data shared by the codec, ingestion and evaluation.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// One belief-state constraint. `domain` is empty for label-only beliefs
/// (the forum topic), and `value` is empty for key-only entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeliefSlot {
    #[serde(default)]
    pub domain: String,
    pub key: String,
    #[serde(default)]
    pub value: String,
}

impl BeliefSlot {
    pub fn new(domain: impl Into<String>, key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            key: key.into(),
            value: value.into(),
        }
    }

    /// A bare classification label, e.g. the topic of a forum thread.
    pub fn label(key: impl Into<String>) -> Self {
        Self::new("", key, "")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogAct {
    pub act: String,
    #[serde(default)]
    pub slots: Vec<String>,
}

impl DialogAct {
    pub fn new<S: Into<String>>(act: impl Into<String>, slots: impl IntoIterator<Item = S>) -> Self {
        Self {
            act: act.into(),
            slots: slots.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub utterance: String,
    #[serde(default)]
    pub belief: Vec<BeliefSlot>,
    #[serde(default)]
    pub actions: Vec<DialogAct>,
    pub response: String,
}

/// Per-domain user goal: informable constraints plus requested slot keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGoal {
    #[serde(default)]
    pub inform: IndexMap<String, String>,
    #[serde(default)]
    pub request: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Goal {
    pub domains: BTreeMap<String, DomainGoal>,
}

impl Goal {
    pub fn is_evaluable(&self) -> bool {
        !self.domains.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Goal>,
}

impl DialogSession {
    pub fn new(session_id: impl Into<String>, turns: Vec<Turn>) -> Self {
        Self {
            session_id: session_id.into(),
            turns,
            goal: None,
        }
    }
}
