use proptest::prelude::*;

use super::*;
use crate::grammar::{builtin_grammar, sample_session, SampleParams, PSEUDO, TARGET};

fn pseudo_turn(utterance: &str, topic: &str, response: &str) -> Turn {
    Turn {
        utterance: utterance.into(),
        belief: vec![BeliefSlot::label(topic)],
        actions: vec![],
        response: response.into(),
    }
}

#[test]
fn encodes_pseudo_template() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let s = DialogSession::new(
        "t",
        vec![pseudo_turn(
            "i'll be in amsterdam for a week",
            "amsterdam",
            "take your pick",
        )],
    );
    assert_eq!(
        encode_session(&s, &spec).unwrap(),
        "<sos_u> i'll be in amsterdam for a week <eos_u> <sos_b> amsterdam <eos_b> \
         <sos_a> <eos_a> <sos_r> take your pick <eos_r>"
    );
}

#[test]
fn encodes_target_belief_and_actions() {
    let spec = builtin_grammar(TARGET).unwrap();
    let turn = Turn {
        utterance: "i am looking for a cheap place".into(),
        belief: vec![
            BeliefSlot::new("restaurant", "pricerange", "cheap"),
            BeliefSlot::new("restaurant", "area", "centre"),
        ],
        actions: vec![
            DialogAct::new("inform", ["choice"]),
            DialogAct::new("request", ["food"]),
        ],
        response: "there are [value_count] restaurants".into(),
    };
    let text = encode_turn(&turn, &spec).unwrap();
    assert_eq!(
        text,
        "<sos_u> i am looking for a cheap place <eos_u> <sos_b> [restaurant] pricerange cheap area centre <eos_b> \
         <sos_a> [inform] choice [request] food <eos_a> <sos_r> there are [value_count] restaurants <eos_r>"
    );
    let parsed = parse_sequence(&text, &spec, ParseMode::Strict).unwrap();
    assert_eq!(parsed.session.turns, vec![turn]);
}

#[test]
fn empty_session_encodes_to_empty_string() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    assert_eq!(encode_session(&DialogSession::new("e", vec![]), &spec).unwrap(), "");
    let parsed = parse_sequence("", &spec, ParseMode::Strict).unwrap();
    assert!(parsed.session.turns.is_empty());
}

#[test]
fn two_turns_concatenate() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let a = pseudo_turn("hello there", "rome", "ciao");
    let b = pseudo_turn("where to eat", "paris", "anywhere");
    let both = DialogSession::new("x", vec![a.clone(), b.clone()]);
    let joined = format!(
        "{} {}",
        encode_session(&DialogSession::new("x", vec![a]), &spec).unwrap(),
        encode_session(&DialogSession::new("x", vec![b]), &spec).unwrap()
    );
    assert_eq!(encode_session(&both, &spec).unwrap(), joined);
}

#[test]
fn marker_in_free_text_is_rejected() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let s = DialogSession::new("m", vec![pseudo_turn("see <eos_u> here", "rome", "ok")]);
    assert!(matches!(encode_session(&s, &spec), Err(crate::Error::Validation(_))));
}

#[test]
fn action_in_empty_field_is_rejected() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let mut t = pseudo_turn("hi", "rome", "ok");
    t.actions.push(DialogAct::new("inform", ["name"]));
    assert!(encode_turn(&t, &spec).is_err());
}

#[test]
fn strict_parse_requires_utterance_first() {
    let spec = builtin_grammar(TARGET).unwrap();
    match parse_sequence("<sos_b> x <eos_b>", &spec, ParseMode::Strict) {
        Err(crate::Error::Parse {
            offset,
            expected,
            found,
        }) => {
            assert_eq!(offset, 0);
            assert_eq!(expected, vec!["<sos_u>".to_string()]);
            assert_eq!(found.as_deref(), Some("<sos_b>"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn strict_parse_reports_offsets() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let text = "<sos_u> hi <eos_u> <sos_b> rome <sos_a>";
    match parse_sequence(text, &spec, ParseMode::Strict) {
        Err(crate::Error::Parse { offset, expected, .. }) => {
            assert_eq!(offset, text.find("<sos_a>").unwrap());
            assert!(expected.contains(&"<eos_b>".to_string()));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    // incomplete cycle
    assert!(parse_sequence("<sos_u> hi <eos_u>", &spec, ParseMode::Strict).is_err());
    // unknown topic
    let bad = "<sos_u> hi <eos_u> <sos_b> tokyo <eos_b> <sos_a> <eos_a> <sos_r> ok <eos_r>";
    assert!(parse_sequence(bad, &spec, ParseMode::Strict).is_err());
}

#[test]
fn lenient_parse_recovers_truncated_prefix() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let parsed = parse_sequence("<sos_u> hi <eos_u> <sos_b> paris", &spec, ParseMode::Lenient).unwrap();
    assert_eq!(parsed.session.turns.len(), 1);
    assert_eq!(parsed.session.turns[0].utterance, "hi");
    assert!(parsed.session.turns[0].belief.is_empty());
    let messages: Vec<String> = parsed.diagnostics.iter().map(ToString::to_string).collect();
    assert_eq!(messages, vec!["unterminated belief field".to_string()]);
}

#[test]
fn lenient_parse_flags_out_of_order_and_garbage() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let text = "<sos_u> a <eos_u> <sos_b> rome <eos_b> <sos_a> <eos_a> <sos_r> ok <eos_r> <sos_b> junk more";
    let parsed = parse_sequence(text, &spec, ParseMode::Lenient).unwrap();
    assert_eq!(parsed.session.turns.len(), 1);
    assert!(matches!(parsed.diagnostics[0], Diagnostic::OutOfOrderMarker { .. }));
    assert!(matches!(
        parsed.diagnostics[1],
        Diagnostic::TrailingGarbage { tokens: 3, .. }
    ));
}

#[test]
fn vocab_counts_and_ties() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let v = build_vocab(["a a b"], 16, &spec).unwrap();
    assert!(v.id("a").is_some() && v.id("b").is_some());
    for m in spec.marker_tokens() {
        assert!(v.id(m).unwrap() < 10);
    }
    assert_eq!(v.special_tokens().len(), 10);
    assert_eq!(v.id(PAD), Some(0));
    assert_eq!(v.id(UNK), Some(1));

    let v = build_vocab(["c b a a"], 16, &spec).unwrap();
    assert!(v.id("a").unwrap() < v.id("b").unwrap());
    assert!(v.id("b").unwrap() < v.id("c").unwrap());

    let v = build_vocab(["z z y x"], 11, &spec).unwrap();
    assert_eq!(v.len(), 11);
    assert!(v.id("z").is_some() && v.id("y").is_none());

    assert!(build_vocab(["   "], 16, &spec).is_err());
    assert!(build_vocab(["a"], 4, &spec).is_err());
}

#[test]
fn tokenize_and_detokenize() {
    let spec = builtin_grammar(PSEUDO).unwrap();
    let v = build_vocab(["hi there"], 32, &spec).unwrap();
    let ids = v.tokenize("<sos_u> hi <eos_u>");
    assert_eq!(
        ids,
        vec![v.id("<sos_u>").unwrap(), v.id("hi").unwrap(), v.id("<eos_u>").unwrap()]
    );
    assert_eq!(v.detokenize(&ids).unwrap(), "<sos_u> hi <eos_u>");
    assert_eq!(v.tokenize("zzz"), vec![v.unk_id()]);
    assert!(v.detokenize(&[999]).is_err());
}

#[test]
fn vocab_file_round_trip() {
    let spec = builtin_grammar(TARGET).unwrap();
    let v = build_vocab(["x y z y"], 64, &spec).unwrap();
    let back = Vocabulary::from_file_str(&v.to_file_string()).unwrap();
    assert_eq!(back, v);
    assert_eq!(back.digest(), v.digest());
    assert_eq!(back.special_tokens().len(), 10);
}

#[test]
fn window_examples() {
    let ids: Vec<TokenId> = (0..600).collect();
    let sizes: Vec<usize> = split_windows(&ids, 256).iter().map(|w| w.ids.len()).collect();
    assert_eq!(sizes, vec![256, 256, 88]);
    assert_eq!(split_windows(&ids[..10], 256).len(), 1);
    assert_eq!(split_windows(&ids[..256], 256).len(), 1);
    assert!(split_windows(&[], 256).is_empty());
}

fn round_trips(spec_name: &str, seed: u64, turns: usize) -> bool {
    let spec = builtin_grammar(spec_name).unwrap();
    let params = SampleParams {
        turns,
        ..SampleParams::default()
    };
    let s = sample_session(&spec, seed, &params).unwrap();
    let text = encode_session(&s, &spec).unwrap();
    let parsed = parse_sequence(&text, &spec, ParseMode::Strict).unwrap();
    parsed.session.turns == s.turns && parsed.diagnostics.is_empty()
}

proptest! {
    #[test]
    fn sampled_sessions_round_trip(seed in any::<u64>(), turns in 1usize..6) {
        prop_assert!(round_trips(PSEUDO, seed, turns));
        prop_assert!(round_trips(TARGET, seed, turns));
    }

    #[test]
    fn windows_reassemble(ids in proptest::collection::vec(any::<u32>(), 0..2000), limit in 1usize..400) {
        let windows = split_windows(&ids, limit);
        prop_assert!(windows.iter().all(|w| w.ids.len() <= limit && !w.ids.is_empty()));
        prop_assert!(windows.iter().enumerate().all(|(i, w)| w.index == i));
        let joined: Vec<u32> = windows.into_iter().flat_map(|w| w.ids).collect();
        prop_assert_eq!(joined, ids);
    }

    #[test]
    fn lenient_parse_never_fails(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let text = String::from_utf8_lossy(&bytes);
        let spec = builtin_grammar(TARGET).unwrap();
        prop_assert!(parse_sequence(&text, &spec, ParseMode::Lenient).is_ok());
    }

    #[test]
    fn lenient_parse_never_fails_on_marker_soup(
        picks in proptest::collection::vec(0usize..12, 0..60)
    ) {
        let spec = builtin_grammar(PSEUDO).unwrap();
        let pool = ["<sos_u>", "<eos_u>", "<sos_b>", "<eos_b>", "<sos_a>", "<eos_a>",
                    "<sos_r>", "<eos_r>", "rome", "hi", "[x]", "london"];
        let text = picks.iter().map(|&i| pool[i]).collect::<Vec<_>>().join(" ");
        let parsed = parse_sequence(&text, &spec, ParseMode::Lenient).unwrap();
        if parse_sequence(&text, &spec, ParseMode::Strict).is_ok() {
            prop_assert!(parsed.diagnostics.is_empty());
        } else {
            prop_assert!(!parsed.diagnostics.is_empty());
        }
    }

    #[test]
    fn markers_round_trip_for_any_vocab(words in proptest::collection::vec("[a-z]{1,6}", 1..40)) {
        let spec = builtin_grammar(TARGET).unwrap();
        let text = words.join(" ");
        let v = build_vocab([text.as_str()], 12 + words.len(), &spec).unwrap();
        let markers: Vec<&str> = spec.marker_tokens().collect();
        let joined = markers.join(" ");
        let ids = v.tokenize(&joined);
        prop_assert!(ids.iter().all(|&i| v.is_special(i)));
        prop_assert_eq!(v.detokenize(&ids).unwrap(), joined);
    }
}
