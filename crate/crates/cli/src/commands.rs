use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ctl_core::codec::{build_vocab, encode_session, Vocabulary};
use ctl_core::curriculum::{run_curriculum, traces_from_csv, validate_manifest, CurriculumManifest, Violation};
use ctl_core::dialog::DialogSession;
use ctl_core::eval::{evaluate, generate_responses, EvalReport};
use ctl_core::grammar::{GrammarSpec, SampleParams, DEFAULT_TOPICS};
use ctl_core::hacking::{build_plain_corpus, build_pseudo_corpus, threads_to_sessions, PseudoCorpusConfig};
use ctl_core::ingest::{
    load_database, load_forum_dump, load_multiwoz_sessions, load_split_lists, split_by_lists, split_corpus,
    target_grammar_from_sessions, SplitSpec, VenueDatabase,
};
use ctl_core::lm::{Checkpoint, SamplerConfig};
use ctl_core::par::Execution;
use ctl_core::report::{emit_report, CurriculumTraces, MetricsRow, ReportFormat};
use ctl_core::synth::{encode_lines, synth_sessions};
use ctl_core::{Error, Result};

use crate::sidecar::RunManifest;
use crate::{CurriculumArgs, EvalArgs, HackArgs, IngestArgs, ReportArgs, SynthArgs, VocabArgs};

pub(crate) struct Context {
    pub exec: Execution,
    pub argv: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub log: Vec<String>,
}

impl Context {
    pub fn new(exec: Execution, argv: Vec<String>) -> Self {
        Self {
            exec,
            argv,
            artifacts: Vec::new(),
            log: Vec::new(),
        }
    }

    fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        tracing::info!("{line}");
        self.log.push(line);
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        ctl_core::io::write_atomic(path, bytes)?;
        self.artifacts.push(path.to_path_buf());
        Ok(())
    }

    fn write_lines(&mut self, path: &Path, lines: &[String]) -> Result<()> {
        ctl_core::io::write_lines_atomic(path, lines)?;
        self.artifacts.push(path.to_path_buf());
        Ok(())
    }

    fn run_manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, &self.argv)
    }

    fn finish(&mut self, mut manifest: RunManifest, anchor: &Path) -> Result<()> {
        manifest.outputs = self.artifacts.iter().map(|p| p.display().to_string()).collect();
        let path = manifest.write(anchor)?;
        self.artifacts.push(path);
        Ok(())
    }
}

fn sessions_jsonl(sessions: &[DialogSession]) -> Vec<String> {
    sessions
        .iter()
        .map(|s| serde_json::to_string(s).expect("sessions serialize"))
        .collect()
}

fn read_sessions(path: &Path) -> Result<Vec<DialogSession>> {
    let text = ctl_core::io::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1))))
        .collect()
}

fn parse_ratios(s: &str, seed: u64) -> Result<SplitSpec> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::validation(format!("--split expects three comma-separated numbers, got {s:?}")))?;
    let [train, val, test] = parts[..] else {
        return Err(Error::validation(format!(
            "--split expects three ratios, got {}",
            parts.len()
        )));
    };
    SplitSpec::new(train, val, test, seed)
}

pub(crate) fn ingest(ctx: &mut Context, a: &IngestArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("ingest");
    rm.input(&a.input)?;
    rm.seed("split", a.seed);
    let sessions = load_multiwoz_sessions(&a.input)?;
    if sessions.is_empty() {
        return Err(Error::validation(format!("no dialogs found in {}", a.input.display())));
    }
    let spec = target_grammar_from_sessions(&sessions)?;
    let lists = if a.input.is_dir() {
        load_split_lists(&a.input)?
    } else {
        None
    };
    let splits = match lists {
        Some((val, test)) => {
            ctx.note("using the official validation/test lists");
            split_by_lists(&sessions, &val, &test)
        }
        None => split_corpus(&sessions, &parse_ratios(&a.split, a.seed)?)?,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    ctx.write(&a.out.join("grammar.toml"), spec.to_toml_string().as_bytes())?;
    for (name, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let lines = part
            .iter()
            .map(|s| encode_session(s, &spec))
            .collect::<Result<Vec<_>>>()?;
        ctx.write_lines(&a.out.join(format!("{name}.txt")), &lines)?;
        ctx.write_lines(&a.out.join(format!("{name}.sessions.jsonl")), &sessions_jsonl(part))?;
        ctx.note(format!("{name}: {} dialogs", part.len()));
    }
    ctx.finish(rm, &a.out)
}

pub(crate) fn hack(ctx: &mut Context, a: &HackArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("hack");
    rm.input(&a.threads)?;
    rm.seed("shuffle", a.seed);
    let load = load_forum_dump(&a.threads)?;
    for s in &load.skipped {
        tracing::warn!(line = s.line, reason = %s.reason, "skipped forum record");
    }
    ctx.note(format!(
        "{} threads loaded, {} lines skipped",
        load.threads.len(),
        load.skipped.len()
    ));
    let sessions = threads_to_sessions(&load.threads, ctx.exec);
    if sessions.is_empty() {
        return Err(Error::validation("forum dump yields no reply sessions"));
    }
    let topics: BTreeSet<String> = sessions
        .iter()
        .flat_map(|s| &s.turns)
        .flat_map(|t| t.belief.iter().map(|b| b.key.clone()))
        .collect();
    let defaults: BTreeSet<String> = DEFAULT_TOPICS.iter().map(|t| t.to_string()).collect();
    let spec = if topics.is_subset(&defaults) {
        GrammarSpec::builtin(ctl_core::grammar::PSEUDO)?
    } else {
        if a.grammar_out.is_none() {
            tracing::warn!("thread topics extend the built-in list; pass --grammar-out to keep the derived grammar");
        }
        GrammarSpec::pseudo(topics)
    };
    let config = PseudoCorpusConfig {
        rng_seed: a.seed,
        max_window_tokens: a.window,
        shuffle: !a.no_shuffle,
    };
    let corpus = build_pseudo_corpus(&sessions, &spec, &config)?;
    ctx.note(format!(
        "{} sessions packed into {} lines ({} oversized)",
        sessions.len(),
        corpus.lines.len(),
        corpus.oversized.len()
    ));
    ctx.write_lines(&a.out, &corpus.lines)?;
    if let Some(p) = &a.plain_out {
        ctx.write_lines(p, &build_plain_corpus(&sessions, &config)?.lines)?;
    }
    if let Some(p) = &a.grammar_out {
        ctx.write(p, spec.to_toml_string().as_bytes())?;
    }
    ctx.finish(rm, &a.out)
}

pub(crate) fn synth(ctx: &mut Context, a: &SynthArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("synth");
    rm.seed("synth", a.seed);
    let spec = GrammarSpec::resolve(&a.grammar)?;
    let params = SampleParams {
        turns: a.turns,
        vocab_size: a.words,
        ..SampleParams::default()
    };
    let sessions = synth_sessions(&spec, a.n, a.seed, &params, ctx.exec)?;
    let lines = match a.pack {
        Some(window) => {
            let config = PseudoCorpusConfig {
                rng_seed: a.seed,
                max_window_tokens: window,
                shuffle: true,
            };
            build_pseudo_corpus(&sessions, &spec, &config)?.lines
        }
        None => encode_lines(&sessions, &spec, ctx.exec)?,
    };
    ctx.write_lines(&a.out, &lines)?;
    if let Some(p) = &a.sessions_out {
        ctx.write_lines(p, &sessions_jsonl(&sessions))?;
    }
    ctx.note(format!("{} sessions, {} lines", sessions.len(), lines.len()));
    ctx.finish(rm, &a.out)
}

pub(crate) fn vocab(ctx: &mut Context, a: &VocabArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("vocab");
    let spec = GrammarSpec::resolve(&a.grammar)?;
    let mut texts = Vec::new();
    for p in &a.corpora {
        rm.input(p)?;
        texts.push(ctl_core::io::read_to_string(p)?);
    }
    let v = build_vocab(texts.iter().map(String::as_str), a.max_size, &spec)?;
    ctx.write(&a.out, v.to_file_string().as_bytes())?;
    ctx.note(format!("{} tokens, digest {}", v.len(), v.digest_hex()));
    ctx.finish(rm, &a.out)
}

fn report_violations(ctx: &mut Context, violations: &[Violation]) -> Error {
    for v in violations {
        ctx.note(format!("violation: {v}"));
    }
    Error::validation(format!("manifest has {} violation(s)", violations.len()))
}

pub(crate) fn curriculum(ctx: &mut Context, a: &CurriculumArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("curriculum");
    rm.input(&a.manifest)?;
    let manifest = CurriculumManifest::load(&a.manifest)?;
    rm.seed("model", manifest.seed);
    let violations = validate_manifest(&manifest);
    if !violations.is_empty() {
        return Err(report_violations(ctx, &violations));
    }
    ctx.note(format!(
        "manifest {:?}: {} stages valid",
        manifest.name,
        manifest.stages.len()
    ));
    if a.validate_only {
        return Ok(());
    }
    let out = a.out.clone().unwrap_or_else(|| {
        a.manifest
            .parent()
            .unwrap_or(Path::new(""))
            .join("runs")
            .join(&manifest.name)
    });
    let result = run_curriculum(&manifest, &out, ctx.exec);
    // stage artifacts exist even when a later stage fails
    for entry in std::fs::read_dir(&out).into_iter().flatten().flatten() {
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "ckpt" || e == "csv") {
            ctx.artifacts.push(p);
        }
    }
    ctx.artifacts.sort();
    let outcome = result?;
    for t in &outcome.traces {
        ctx.note(format!(
            "stage {}: {} evaluations, initial val {:.4}, best val {:.4}",
            t.stage,
            t.points.len(),
            t.initial_val().unwrap_or(f64::NAN),
            t.best_val().unwrap_or(f64::NAN)
        ));
    }
    ctx.finish(rm, &out)
}

pub(crate) fn eval(ctx: &mut Context, a: &EvalArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("eval");
    for p in [&a.checkpoint, &a.vocab, &a.sessions] {
        rm.input(p)?;
    }
    rm.seed("sampling", a.seed);
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    if ckpt.vocab_digest != vocab.digest() {
        return Err(Error::validation("checkpoint was trained with a different vocabulary"));
    }
    let spec = GrammarSpec::resolve(&a.grammar)?;
    let db = match &a.db {
        Some(p) => {
            rm.input(p)?;
            load_database(p)?
        }
        None => VenueDatabase::default(),
    };
    let mut sessions = read_sessions(&a.sessions)?;
    if let Some(n) = a.limit {
        sessions.truncate(n);
    }
    let sampler = SamplerConfig {
        temperature: a.temperature,
        stop_token: None,
        max_new_tokens: a.max_new_tokens,
    };
    let records = generate_responses(&ckpt.model, &vocab, &sessions, &spec, &sampler, a.seed, ctx.exec)?;
    let (report, detail) = evaluate(&sessions, &records, &db)?;
    ctx.write(
        &a.out,
        serde_json::to_string_pretty(&report)
            .expect("reports serialize")
            .as_bytes(),
    )?;
    if let Some(p) = &a.detail {
        let lines: Vec<String> = detail
            .dialogs
            .iter()
            .map(|d| {
                let recs: Vec<_> = records.iter().filter(|r| r.dialog_id == d.dialog_id).collect();
                serde_json::json!({ "outcome": d, "records": recs }).to_string()
            })
            .collect();
        ctx.write_lines(p, &lines)?;
    }
    ctx.note(format!(
        "BLEU {:.2} INFORM {:.1} SUCCESS {:.1} COMBINED {:.1} over {} dialogs ({} excluded, {} truncated generations)",
        report.bleu,
        report.inform,
        report.success,
        report.combined,
        report.counts.evaluated_dialogs,
        report.counts.excluded_without_goal,
        report.truncated_generations
    ));
    ctx.finish(rm, &a.out)
}

fn split_pair<'a>(s: &'a str, flag: &str) -> Result<(&'a str, &'a str)> {
    s.split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Error::validation(format!("--{flag} expects NAME=PATH, got {s:?}")))
}

pub(crate) fn report(ctx: &mut Context, a: &ReportArgs) -> Result<()> {
    let mut rm = ctx.run_manifest("report");
    let mut runs = Vec::new();
    for spec in &a.runs {
        let (name, path) = split_pair(spec, "run")?;
        rm.input(Path::new(path))?;
        let traces = traces_from_csv(&ctl_core::io::read_to_string(Path::new(path))?)?;
        runs.push(CurriculumTraces {
            curriculum: name.to_string(),
            traces,
        });
    }
    let mut metrics = Vec::new();
    for spec in &a.metrics {
        let (key, path) = split_pair(spec, "metrics")?;
        let (curriculum, size) = key.split_once(':').unwrap_or((key, ""));
        rm.input(Path::new(path))?;
        let report: EvalReport = serde_json::from_str(&ctl_core::io::read_to_string(Path::new(path))?)
            .map_err(|e| Error::format(Path::new(path), e.to_string()))?;
        metrics.push(MetricsRow {
            curriculum: curriculum.to_string(),
            model_size: size.to_string(),
            report,
        });
    }
    let formats = a
        .format
        .iter()
        .map(|f| match f.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::validation(format!("unknown report format {other:?} (csv, svg)"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let files = emit_report(&a.out, &runs, &metrics, &formats)?;
    ctx.artifacts.extend(files);
    ctx.finish(rm, &a.out)
}
