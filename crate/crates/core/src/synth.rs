//! Deterministic synthetic dialog corpora for fixture-free experiments.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::encode_session;
use crate::dialog::{DialogSession, DomainGoal, Goal};
use crate::error::Result;
use crate::grammar::{sample_session, GrammarSpec, SampleParams};
use crate::par::Execution;

/// `count` sessions sampled from `spec`. Per-session seeds come from one
/// seeded stream, so output is independent of the execution mode.
pub fn synth_sessions(
    spec: &GrammarSpec,
    count: usize,
    seed: u64,
    params: &SampleParams,
    exec: Execution,
) -> Result<Vec<DialogSession>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..count).map(|_| rng.next_u64()).collect();
    let mut sessions = exec
        .map(&seeds, |&s| sample_session(spec, s, params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for (i, s) in sessions.iter_mut().enumerate() {
        s.session_id = format!("{}-{seed}-{i:05}", spec.name);
        s.goal = goal_from_belief(s);
    }
    Ok(sessions)
}

/// A goal asking for what the final belief state constrains, when the
/// belief is domain-keyed.
fn goal_from_belief(session: &DialogSession) -> Option<Goal> {
    let mut goal = Goal::default();
    for turn in &session.turns {
        for b in turn.belief.iter().filter(|b| !b.domain.is_empty()) {
            goal.domains
                .entry(b.domain.clone())
                .or_insert_with(DomainGoal::default)
                .inform
                .insert(b.key.clone(), b.value.clone());
        }
    }
    goal.is_evaluable().then_some(goal)
}

/// One encoded session per line.
pub fn encode_lines(sessions: &[DialogSession], spec: &GrammarSpec, exec: Execution) -> Result<Vec<String>> {
    exec.map(sessions, |s| encode_session(s, spec)).into_iter().collect()
}
