//! Fabrication of pseudo-supervised dialog corpora from forum threads.
//!
//! Each reply to a thread becomes one single-turn session: the creator's
//! message is the utterance, the thread topic the belief label, the action
//! stays empty and the reply is the response. Sessions are then shuffled
//! and packed into multi-turn lines that mix topics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_session, DEFAULT_WINDOW};
use crate::dialog::{BeliefSlot, DialogSession, Turn};
use crate::error::{Error, Result};
use crate::grammar::GrammarSpec;
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumThread {
    pub source_id: String,
    pub topic: String,
    pub creator_message: String,
    #[serde(default)]
    pub replies: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoCorpusConfig {
    pub rng_seed: u64,
    pub max_window_tokens: usize,
    pub shuffle: bool,
}

impl Default for PseudoCorpusConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            max_window_tokens: DEFAULT_WINDOW,
            shuffle: true,
        }
    }
}

fn is_sentence_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':')
}

/// Lowercases, spaces out sentence punctuation, escapes angle brackets and
/// collapses whitespace. Punctuation between two alphanumerics ("3.5",
/// "10:30") stays attached. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut spaced = String::with_capacity(lower.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        match c {
            // marker lookalikes such as "<sos_u>" can never survive
            '<' => spaced.push('\u{2039}'),
            '>' => spaced.push('\u{203a}'),
            c if is_sentence_punct(c) => {
                let prev = i.checked_sub(1).map(|j| chars[j]);
                let next = chars.get(i + 1).copied();
                let inner = prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric);
                if inner {
                    spaced.push(c);
                } else {
                    spaced.push(' ');
                    spaced.push(c);
                    spaced.push(' ');
                }
            }
            c => spaced.push(c),
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Topic labels are single lowercase tokens.
pub fn normalize_topic(raw: &str) -> String {
    normalize_text(raw)
        .split(' ')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// One single-turn session per reply, in reply order.
pub fn thread_to_sessions(thread: &ForumThread) -> Vec<DialogSession> {
    let utterance = normalize_text(&thread.creator_message);
    let topic = normalize_topic(&thread.topic);
    thread
        .replies
        .iter()
        .enumerate()
        .map(|(i, reply)| {
            let turn = Turn {
                utterance: utterance.clone(),
                belief: vec![BeliefSlot::label(topic.clone())],
                actions: Vec::new(),
                response: normalize_text(reply),
            };
            DialogSession::new(format!("{}#{i}", thread.source_id), vec![turn])
        })
        .collect()
}

pub fn threads_to_sessions(threads: &[ForumThread], exec: Execution) -> Vec<DialogSession> {
    exec.map(threads, thread_to_sessions).into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackDiagnostic {
    pub session_id: String,
    pub tokens: usize,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    /// One encoded multi-turn sequence per line.
    pub lines: Vec<String>,
    /// Sessions longer than the window; each sits alone on its own line and
    /// is split into windows at tokenization time.
    pub oversized: Vec<PackDiagnostic>,
    pub turns_per_line: Vec<usize>,
}

impl EncodedCorpus {
    pub fn total_turns(&self) -> usize {
        self.turns_per_line.iter().sum()
    }
}

fn shuffled<'a>(sessions: &'a [DialogSession], config: &PseudoCorpusConfig) -> Vec<&'a DialogSession> {
    let mut order: Vec<&DialogSession> = sessions.iter().collect();
    if config.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        order.shuffle(&mut rng);
    }
    order
}

fn pack(items: Vec<(String, usize, usize, String)>, limit: usize) -> EncodedCorpus {
    let mut corpus = EncodedCorpus {
        lines: Vec::new(),
        oversized: Vec::new(),
        turns_per_line: Vec::new(),
    };
    let mut line = String::new();
    let mut line_tokens = 0usize;
    let mut line_turns = 0usize;
    for (text, tokens, turns, id) in items {
        if tokens > limit {
            corpus.oversized.push(PackDiagnostic {
                session_id: id,
                tokens,
                limit,
            });
        }
        if line_tokens > 0 && line_tokens + tokens > limit {
            corpus.lines.push(std::mem::take(&mut line));
            corpus.turns_per_line.push(line_turns);
            line_tokens = 0;
            line_turns = 0;
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(&text);
        line_tokens += tokens;
        line_turns += turns;
    }
    if line_tokens > 0 {
        corpus.lines.push(line);
        corpus.turns_per_line.push(line_turns);
    }
    corpus
}

/// Shuffles sessions with a seeded permutation and packs consecutive
/// sessions into lines until the next one would overflow the window.
pub fn build_pseudo_corpus(
    sessions: &[DialogSession],
    spec: &GrammarSpec,
    config: &PseudoCorpusConfig,
) -> Result<EncodedCorpus> {
    check_config(sessions, config)?;
    let mut items = Vec::with_capacity(sessions.len());
    for s in shuffled(sessions, config) {
        let text = encode_session(s, spec)?;
        let tokens = text.split_whitespace().count();
        items.push((text, tokens, s.turns.len(), s.session_id.clone()));
    }
    let corpus = pack(items, config.max_window_tokens);
    for d in &corpus.oversized {
        tracing::warn!(session = %d.session_id, tokens = d.tokens, "session exceeds window limit");
    }
    Ok(corpus)
}

/// The same text without any encoding: utterance and response words only,
/// shuffled and packed like [`build_pseudo_corpus`].
pub fn build_plain_corpus(sessions: &[DialogSession], config: &PseudoCorpusConfig) -> Result<EncodedCorpus> {
    check_config(sessions, config)?;
    let items = shuffled(sessions, config)
        .into_iter()
        .map(|s| {
            let words: Vec<&str> = s
                .turns
                .iter()
                .flat_map(|t| t.utterance.split_whitespace().chain(t.response.split_whitespace()))
                .collect();
            (words.join(" "), words.len(), s.turns.len(), s.session_id.clone())
        })
        .filter(|item| item.1 > 0)
        .collect();
    Ok(pack(items, config.max_window_tokens))
}

fn check_config(sessions: &[DialogSession], config: &PseudoCorpusConfig) -> Result<()> {
    if sessions.is_empty() {
        return Err(Error::validation("no sessions to build a corpus from"));
    }
    if config.max_window_tokens == 0 {
        return Err(Error::validation("max_window_tokens must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::codec::{parse_sequence, ParseMode};
    use crate::grammar::{builtin_grammar, PSEUDO};

    fn thread(id: &str, topic: &str, replies: &[&str]) -> ForumThread {
        ForumThread {
            source_id: id.into(),
            topic: topic.into(),
            creator_message: format!("Going to {topic} next week, any tips?"),
            replies: replies.iter().map(|r| r.to_string()).collect(),
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("I'll  be in Amsterdam!"), "i'll be in amsterdam !");
        assert_eq!(normalize_text(""), "");
        assert_eq!(
            normalize_text("Costs 3.5 euros, at 10:30."),
            "costs 3.5 euros , at 10:30 ."
        );
        let escaped = normalize_text("try <sos_u> here");
        assert!(!escaped.contains('<') && !escaped.contains('>'));
        assert_eq!(normalize_topic("New York"), "new_york");
    }

    #[test]
    fn thread_becomes_one_session_per_reply() {
        let t = thread(
            "t1",
            "Amsterdam",
            &["Take your pick!", "Visit the Rijksmuseum.", "Rent a bike"],
        );
        let sessions = thread_to_sessions(&t);
        assert_eq!(sessions.len(), 3);
        let spec = builtin_grammar(PSEUDO).unwrap();
        for (s, reply) in sessions.iter().zip(&t.replies) {
            assert_eq!(s.turns.len(), 1);
            let turn = &s.turns[0];
            assert_eq!(turn.belief, vec![BeliefSlot::label("amsterdam")]);
            assert!(turn.actions.is_empty());
            assert_eq!(turn.response, normalize_text(reply));
            let text = encode_session(s, &spec).unwrap();
            parse_sequence(&text, &spec, ParseMode::Strict).unwrap();
        }
        assert!(thread_to_sessions(&thread("t2", "rome", &[])).is_empty());
    }

    fn sample_sessions() -> Vec<DialogSession> {
        let threads = vec![
            thread("a", "rome", &["eat pasta", "see the colosseum"]),
            thread("b", "paris", &["climb the tower", "walk along the seine"]),
        ];
        threads_to_sessions(&threads, Execution::Sequential)
    }

    #[test]
    fn packing_is_deterministic_and_conserves_turns() {
        let spec = builtin_grammar(PSEUDO).unwrap();
        let sessions = sample_sessions();
        let config = PseudoCorpusConfig {
            rng_seed: 1,
            ..Default::default()
        };
        let a = build_pseudo_corpus(&sessions, &spec, &config).unwrap();
        let b = build_pseudo_corpus(&sessions, &spec, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_turns(), 4);
        assert_eq!(a.lines.len(), 1);
        let parsed = parse_sequence(&a.lines[0], &spec, ParseMode::Strict).unwrap();
        assert_eq!(parsed.session.turns.len(), 4);
        let topics: Vec<&str> = parsed.session.turns.iter().map(|t| t.belief[0].key.as_str()).collect();
        assert!(topics.contains(&"rome") && topics.contains(&"paris"));
    }

    #[test]
    fn packing_respects_window() {
        let spec = builtin_grammar(PSEUDO).unwrap();
        let sessions = sample_sessions();
        let config = PseudoCorpusConfig {
            rng_seed: 3,
            max_window_tokens: 30,
            shuffle: true,
        };
        let corpus = build_pseudo_corpus(&sessions, &spec, &config).unwrap();
        assert!(corpus.lines.len() > 1);
        assert!(corpus.oversized.is_empty());
        for line in &corpus.lines {
            assert!(line.split_whitespace().count() <= 30);
            parse_sequence(line, &spec, ParseMode::Strict).unwrap();
        }
        assert_eq!(corpus.total_turns(), 4);
    }

    #[test]
    fn oversized_session_is_isolated_and_reported() {
        let spec = builtin_grammar(PSEUDO).unwrap();
        let sessions = sample_sessions();
        let config = PseudoCorpusConfig {
            rng_seed: 3,
            max_window_tokens: 10,
            shuffle: false,
        };
        let corpus = build_pseudo_corpus(&sessions, &spec, &config).unwrap();
        assert_eq!(corpus.oversized.len(), 4);
        assert_eq!(corpus.lines.len(), 4);
        assert_eq!(corpus.total_turns(), 4);
    }

    #[test]
    fn plain_corpus_has_no_markers() {
        let config = PseudoCorpusConfig::default();
        let corpus = build_plain_corpus(&sample_sessions(), &config).unwrap();
        assert!(corpus
            .lines
            .iter()
            .all(|l| !l.contains("<sos_") && !l.contains("<eos_")));
        assert_eq!(corpus.total_turns(), 4);
        assert!(build_plain_corpus(&[], &config).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,80}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(!once.contains('<') && !once.contains('>'));
        }
    }
}
