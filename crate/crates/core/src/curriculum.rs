//! Ordered multi-stage training with early stopping and checkpoint hand-off.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{hex, split_windows, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::grammar::{complexity, validate_curriculum_order, ComplexityScore, GrammarSpec};
use crate::ingest::{split_corpus, SplitSpec};
use crate::lm::{train_step, AdamConfig, AdamState, Checkpoint, ModelConfig, Preset, RngState, DEFAULT_CONTEXT};
use crate::par::Execution;

/// Grammar reference for stages trained on unstructured text.
pub const NO_GRAMMAR: &str = "none";
pub const DEFAULT_PLATEAU: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_corpus: Option<PathBuf>,
    pub grammar: String,
    pub max_epochs: usize,
    #[serde(default = "default_plateau")]
    pub plateau: usize,
    pub eval_every: usize,
    /// Optional cap on optimizer steps, on top of `max_epochs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

fn default_plateau() -> usize {
    DEFAULT_PLATEAU
}

impl Stage {
    pub fn grammar_spec(&self) -> Result<Option<GrammarSpec>> {
        if self.grammar == NO_GRAMMAR {
            Ok(None)
        } else {
            GrammarSpec::resolve(&self.grammar).map(Some)
        }
    }

    pub fn complexity(&self) -> Result<Option<ComplexityScore>> {
        Ok(self.grammar_spec()?.as_ref().map(complexity))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
    #[serde(default = "default_context")]
    pub context_len: usize,
}

fn default_context() -> usize {
    DEFAULT_CONTEXT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    /// Token limit per training window.
    pub window: usize,
    /// Held-out share of a stage corpus when no `val_corpus` is given.
    pub val_fraction: f64,
    /// Largest tolerated share of `<unk>` tokens per corpus.
    pub max_unknown_rate: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 3e-4,
            clip_norm: Some(1.0),
            window: crate::codec::DEFAULT_WINDOW,
            val_fraction: 0.1,
            max_unknown_rate: 0.01,
        }
    }
}

impl TrainingSection {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumManifest {
    pub name: String,
    pub seed: u64,
    pub vocab: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    pub stages: Vec<Stage>,
}

impl CurriculumManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("invalid curriculum manifest: {e}")))
    }

    /// Loads a manifest; relative paths (and grammar files) resolve against
    /// the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m =
            Self::from_toml_str(&crate::io::read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        m.resolve_paths(base);
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.vocab);
        if let Some(p) = self.init_checkpoint.as_mut() {
            fix(p);
        }
        for s in &mut self.stages {
            fix(&mut s.corpus);
            if let Some(p) = s.val_corpus.as_mut() {
                fix(p);
            }
            let builtin = s.grammar == NO_GRAMMAR || GrammarSpec::builtin(&s.grammar).is_ok();
            if !builtin && Path::new(&s.grammar).is_relative() {
                s.grammar = base.join(&s.grammar).to_string_lossy().into_owned();
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifests always serialize")
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig::from_preset(self.model.preset, vocab_size, self.model.context_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Order,
    Grammar,
    Coverage,
    Corpus,
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending stage indices, empty for manifest-wide problems.
    pub stages: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ViolationKind::Order => "order",
            ViolationKind::Grammar => "grammar",
            ViolationKind::Coverage => "coverage",
            ViolationKind::Corpus => "corpus",
            ViolationKind::Config => "config",
        };
        if self.stages.is_empty() {
            write!(f, "{kind}: {}", self.message)
        } else {
            let idx: Vec<String> = self.stages.iter().map(usize::to_string).collect();
            write!(f, "{kind} (stage {}): {}", idx.join(", "), self.message)
        }
    }
}

fn violation(kind: ViolationKind, stages: Vec<usize>, message: impl Into<String>) -> Violation {
    Violation {
        kind,
        stages,
        message: message.into(),
    }
}

/// Share of `<unk>` ids when tokenizing every line of `text`.
fn unknown_rate(vocab: &Vocabulary, text: &str) -> (usize, f64) {
    let (mut total, mut unknown) = (0usize, 0usize);
    for line in text.lines() {
        for id in vocab.tokenize(line) {
            total += 1;
            unknown += usize::from(id == vocab.unk_id());
        }
    }
    (total, if total == 0 { 0.0 } else { unknown as f64 / total as f64 })
}

/// Checks stage order and similarity, grammar resolution, corpus presence
/// and vocabulary coverage, and configuration consistency. An empty list
/// means the manifest can run.
pub fn validate_manifest(m: &CurriculumManifest) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    if m.stages.is_empty() {
        out.push(violation(Config, vec![], "manifest has no stages"));
        return out;
    }
    let t = &m.training;
    if t.batch_size == 0 {
        out.push(violation(Config, vec![], "batch_size must be positive"));
    }
    if t.window < 2 || t.window > m.model.context_len {
        out.push(violation(
            Config,
            vec![],
            format!(
                "window {} must lie in 2..={} (context_len)",
                t.window, m.model.context_len
            ),
        ));
    }
    if !(t.val_fraction > 0.0 && t.val_fraction < 1.0) {
        out.push(violation(
            Config,
            vec![],
            "val_fraction must lie strictly between 0 and 1",
        ));
    }
    if let Err(e) = t.adam().validate() {
        out.push(violation(Config, vec![], e.to_string()));
    }
    for (i, s) in m.stages.iter().enumerate() {
        if s.plateau == 0 {
            out.push(violation(Config, vec![i], "plateau must be at least 1"));
        }
        if s.eval_every == 0 {
            out.push(violation(Config, vec![i], "eval_every must be at least 1"));
        }
        if m.stages[..i].iter().any(|o| o.name == s.name) {
            out.push(violation(Config, vec![i], format!("duplicate stage name {:?}", s.name)));
        }
    }

    let mut specs: Vec<(usize, GrammarSpec)> = Vec::new();
    for (i, s) in m.stages.iter().enumerate() {
        match s.grammar_spec() {
            Ok(Some(spec)) => specs.push((i, spec)),
            Ok(None) if i + 1 == m.stages.len() => out.push(violation(
                Grammar,
                vec![i],
                "the final stage must train on the target grammar",
            )),
            Ok(None) => {}
            Err(e) => out.push(violation(Grammar, vec![i], format!("grammar {:?}: {e}", s.grammar))),
        }
    }
    if !specs.is_empty() {
        let only: Vec<GrammarSpec> = specs.iter().map(|(_, s)| s.clone()).collect();
        for v in validate_curriculum_order(&only).unwrap_or_default() {
            out.push(violation(
                Order,
                vec![specs[v.first].0, specs[v.second].0],
                v.to_string(),
            ));
        }
    }

    let vocab = match Vocabulary::load(&m.vocab) {
        Ok(v) => v,
        Err(e) => {
            out.push(violation(Coverage, vec![], format!("vocabulary: {e}")));
            return out;
        }
    };
    if let Some(want) = &m.vocab_digest {
        if !want.eq_ignore_ascii_case(&vocab.digest_hex()) {
            out.push(violation(
                Coverage,
                vec![],
                format!(
                    "vocabulary digest {} does not match expected {want}",
                    vocab.digest_hex()
                ),
            ));
        }
    }
    if let Some(path) = &m.init_checkpoint {
        match Checkpoint::load(path) {
            Ok(c) if c.vocab_digest != vocab.digest() => out.push(violation(
                Coverage,
                vec![],
                "initial checkpoint was trained with a different vocabulary",
            )),
            Ok(c) if *c.config() != m.model_config(vocab.len()) => out.push(violation(
                Config,
                vec![],
                "initial checkpoint config differs from the manifest model",
            )),
            Ok(_) => {}
            Err(e) => out.push(violation(Config, vec![], format!("initial checkpoint: {e}"))),
        }
    }
    for (i, spec) in &specs {
        let missing: Vec<&str> = spec.marker_tokens().filter(|t| vocab.id(t).is_none()).collect();
        if !missing.is_empty() {
            out.push(violation(
                Coverage,
                vec![*i],
                format!("markers missing from vocabulary: {missing:?}"),
            ));
        }
    }
    for (i, s) in m.stages.iter().enumerate() {
        for path in std::iter::once(&s.corpus).chain(&s.val_corpus) {
            match crate::io::read_to_string(path) {
                Ok(text) => {
                    let (total, rate) = unknown_rate(&vocab, &text);
                    if total == 0 {
                        out.push(violation(
                            Corpus,
                            vec![i],
                            format!("corpus {} is empty", path.display()),
                        ));
                    } else if rate > t.max_unknown_rate {
                        out.push(violation(
                            Coverage,
                            vec![i],
                            format!(
                                "{:.2}% of tokens in {} are unknown to the vocabulary",
                                rate * 100.0,
                                path.display()
                            ),
                        ));
                    }
                }
                Err(e) => out.push(violation(Corpus, vec![i], e.to_string())),
            }
        }
    }
    out
}

/// True iff the earliest minimum lies at least `plateau` evaluations
/// before the latest one.
pub fn should_stop(val_losses: &[f64], plateau: usize) -> bool {
    assert!(plateau >= 1, "plateau must be at least 1");
    let Some(best) = val_losses
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v >= b || v.is_nan() => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
    else {
        return false;
    };
    val_losses.len() - 1 - best >= plateau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub stage: String,
    pub points: Vec<TracePoint>,
}

impl LossTrace {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            points: Vec::new(),
        }
    }

    pub fn initial_val(&self) -> Option<f64> {
        self.points.first().map(|p| p.val_loss)
    }

    pub fn best_val(&self) -> Option<f64> {
        self.points.iter().map(|p| p.val_loss).reduce(f64::min)
    }
}

pub const TRACE_HEADER: &str = "stage,step,train_loss,val_loss";

pub fn traces_to_csv(traces: &[LossTrace]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        for p in &t.points {
            out.push_str(&format!("{},{},{},{}\n", t.stage, p.step, p.train_loss, p.val_loss));
        }
    }
    out
}

pub fn traces_from_csv(text: &str) -> Result<Vec<LossTrace>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRACE_HEADER) {
        return Err(Error::validation(format!(
            "trace file must start with {TRACE_HEADER:?}"
        )));
    }
    let mut traces: Vec<LossTrace> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::validation(format!("malformed trace row {}: {line:?}", n + 2));
        let cols: Vec<&str> = line.split(',').collect();
        let [stage, step, train, val] = cols[..] else {
            return Err(bad());
        };
        let point = TracePoint {
            step: step.trim().parse().map_err(|_| bad())?,
            train_loss: train.trim().parse().map_err(|_| bad())?,
            val_loss: val.trim().parse().map_err(|_| bad())?,
        };
        match traces.last_mut() {
            Some(t) if t.stage == stage => t.points.push(point),
            _ => traces.push(LossTrace {
                stage: stage.to_string(),
                points: vec![point],
            }),
        }
    }
    Ok(traces)
}

/// Tokenized training and validation windows of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageData {
    pub train: Vec<Vec<TokenId>>,
    pub val: Vec<Vec<TokenId>>,
}

fn windows_of(lines: &[&str], vocab: &Vocabulary, window: usize) -> Vec<Vec<TokenId>> {
    lines
        .iter()
        .flat_map(|l| split_windows(&vocab.tokenize(l), window))
        .map(|w| w.ids)
        .filter(|w| w.len() >= 2)
        .collect()
}

impl StageData {
    pub fn from_lines(train: &[&str], val: &[&str], vocab: &Vocabulary, window: usize) -> Self {
        Self {
            train: windows_of(train, vocab, window),
            val: windows_of(val, vocab, window),
        }
    }

    /// Reads a stage corpus (one sequence per line). Without an explicit
    /// validation corpus, a seeded share of the lines is held out.
    pub fn load(stage: &Stage, vocab: &Vocabulary, training: &TrainingSection, seed: u64) -> Result<Self> {
        let text = crate::io::read_to_string(&stage.corpus)?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let data = match &stage.val_corpus {
            Some(p) => {
                let val_text = crate::io::read_to_string(p)?;
                let val: Vec<&str> = val_text.lines().filter(|l| !l.trim().is_empty()).collect();
                Self::from_lines(&lines, &val, vocab, training.window)
            }
            None => {
                let f = training.val_fraction;
                let split = split_corpus(&lines, &SplitSpec::new(1.0 - f, f, 0.0, seed)?)?;
                Self::from_lines(&split.train, &split.val, vocab, training.window)
            }
        };
        if data.train.is_empty() || data.val.is_empty() {
            return Err(Error::validation(format!(
                "stage {:?}: corpus yields {} training and {} validation windows; both must be non-empty",
                stage.name,
                data.train.len(),
                data.val.len()
            )));
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub exec: Execution,
}

impl TrainSettings {
    pub fn from_manifest(training: &TrainingSection, exec: Execution) -> Self {
        Self {
            adam: training.adam(),
            batch_size: training.batch_size,
            exec,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    /// The minimum-validation-loss checkpoint, not the last one.
    pub best: Checkpoint,
    pub trace: LossTrace,
    pub steps: usize,
    pub stopped_early: bool,
}

#[derive(Debug)]
pub struct StageFailure {
    pub error: Error,
    pub trace: LossTrace,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage {:?} failed after {} evaluations: {}",
            self.trace.stage,
            self.trace.points.len(),
            self.error
        )
    }
}

pub fn parameter_digest(c: &Checkpoint) -> String {
    let mut h = Sha256::new();
    for p in c.model.params() {
        h.update(p.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Trains one stage from `start`. Evaluates before the first update, every
/// `eval_every` steps and after the last step, stopping on a validation
/// plateau. The returned checkpoint is the best evaluated one.
pub fn run_stage(
    start: &Checkpoint,
    stage: &Stage,
    data: &StageData,
    settings: &TrainSettings,
) -> std::result::Result<StageOutcome, StageFailure> {
    let mut trace = LossTrace::new(&stage.name);
    let fail = |error: Error, trace: LossTrace| StageFailure { error, trace };
    if stage.max_epochs == 0 || stage.max_steps == Some(0) {
        return Ok(StageOutcome {
            best: start.clone(),
            trace,
            steps: 0,
            stopped_early: false,
        });
    }
    if stage.plateau == 0 || stage.eval_every == 0 || settings.batch_size == 0 {
        return Err(fail(
            Error::validation("plateau, eval_every and batch_size must be positive"),
            trace,
        ));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(fail(
            Error::validation("stage data has no training or validation windows"),
            trace,
        ));
    }
    let exec = settings.exec;
    let mut rng = start.rng_state.restore();
    let mut model = start.model.clone();
    let mut opt = AdamState::new(model.params().len());
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut rng);

    let evaluate = |m: &crate::lm::Model| -> Result<f64> {
        let v = m.validate(&data.val, exec)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Training(format!("non-finite validation loss {v}")))
        }
    };
    let first_batch: Vec<&[TokenId]> = order
        .iter()
        .take(settings.batch_size)
        .map(|&i| data.train[i].as_slice())
        .collect();
    let initial = model
        .loss(&first_batch, exec)
        .and_then(|train| Ok((train, evaluate(&model)?)));
    let (train0, val0) = match initial {
        Ok(x) => x,
        Err(e) => return Err(fail(e, trace)),
    };
    trace.points.push(TracePoint {
        step: 0,
        train_loss: train0,
        val_loss: val0,
    });
    let mut best = (val0, model.clone());
    let mut val_history = vec![val0];
    let (mut step, mut since_eval, mut train_sum) = (0usize, 0usize, 0.0f64);
    let mut stopped_early = false;

    'epochs: for epoch in 0..stage.max_epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(settings.batch_size) {
            if stage.max_steps.is_some_and(|cap| step >= cap) {
                break 'epochs;
            }
            let batch: Vec<&[TokenId]> = chunk.iter().map(|&i| data.train[i].as_slice()).collect();
            let stats = match train_step(&mut model, &batch, &mut opt, &settings.adam, exec) {
                Ok(s) if s.loss.is_finite() => s,
                Ok(s) => {
                    return Err(fail(
                        Error::Training(format!("non-finite training loss {}", s.loss)),
                        trace,
                    ))
                }
                Err(e) => return Err(fail(e, trace)),
            };
            step += 1;
            since_eval += 1;
            train_sum += stats.loss;
            if step % stage.eval_every == 0 {
                let val = evaluate(&model).map_err(|e| fail(e, trace.clone()))?;
                trace.points.push(TracePoint {
                    step,
                    train_loss: train_sum / since_eval as f64,
                    val_loss: val,
                });
                (since_eval, train_sum) = (0, 0.0);
                if val < best.0 {
                    best = (val, model.clone());
                }
                val_history.push(val);
                tracing::debug!(stage = %stage.name, step, val, "evaluation");
                if should_stop(&val_history, stage.plateau) {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }
    if since_eval > 0 {
        let val = evaluate(&model).map_err(|e| fail(e, trace.clone()))?;
        trace.points.push(TracePoint {
            step,
            train_loss: train_sum / since_eval as f64,
            val_loss: val,
        });
        if val < best.0 {
            best = (val, model.clone());
        }
    }
    let mut stages = start.trained_stages.clone();
    stages.push(stage.name.clone());
    Ok(StageOutcome {
        best: Checkpoint {
            model: best.1,
            vocab_digest: start.vocab_digest,
            trained_stages: stages,
            rng_state: RngState::capture(&rng),
        },
        trace,
        steps: step,
        stopped_early,
    })
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub final_checkpoint: Checkpoint,
    pub traces: Vec<LossTrace>,
    pub stage_checkpoints: Vec<PathBuf>,
}

pub fn stage_checkpoint_name(index: usize, stage: &str) -> String {
    format!("{index:02}-{stage}.ckpt")
}

pub const TRACE_FILE: &str = "trace.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Runs every stage in order, each from the previous stage's best
/// checkpoint. Per-stage checkpoints and the trace CSV land in `out_dir`
/// as soon as each stage completes; a failing stage leaves earlier
/// artifacts intact and the partial trace on disk.
pub fn run_curriculum(m: &CurriculumManifest, out_dir: &Path, exec: Execution) -> Result<CurriculumOutcome> {
    let violations = validate_manifest(m);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(Violation::to_string).collect();
        return Err(Error::validation(format!(
            "invalid curriculum:\n  {}",
            list.join("\n  ")
        )));
    }
    let vocab = Vocabulary::load(&m.vocab)?;
    let config = m.model_config(vocab.len());
    let mut ckpt = match &m.init_checkpoint {
        Some(p) => Checkpoint::load(p)?,
        None => Checkpoint::init(config, m.seed, vocab.digest())?,
    };
    let settings = TrainSettings::from_manifest(&m.training, exec);
    let mut traces = Vec::new();
    let mut paths = Vec::new();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let trace_path = out_dir.join(TRACE_FILE);
    for (i, stage) in m.stages.iter().enumerate() {
        tracing::info!(stage = %stage.name, index = i, "starting stage");
        let data = StageData::load(stage, &vocab, &m.training, m.seed.wrapping_add(i as u64))?;
        match run_stage(&ckpt, stage, &data, &settings) {
            Ok(outcome) => {
                let path = out_dir.join(stage_checkpoint_name(i, &stage.name));
                outcome.best.save(&path)?;
                traces.push(outcome.trace);
                crate::io::write_atomic(&trace_path, traces_to_csv(&traces).as_bytes())?;
                tracing::info!(
                    stage = %stage.name,
                    steps = outcome.steps,
                    best = traces.last().and_then(LossTrace::best_val).unwrap_or(f64::NAN),
                    "stage finished"
                );
                paths.push(path);
                ckpt = outcome.best;
            }
            Err(failure) => {
                let message = failure.to_string();
                traces.push(failure.trace);
                crate::io::write_atomic(&trace_path, traces_to_csv(&traces).as_bytes())?;
                return Err(Error::Training(message));
            }
        }
    }
    ckpt.save(&out_dir.join(FINAL_CHECKPOINT))?;
    Ok(CurriculumOutcome {
        final_checkpoint: ckpt,
        traces,
        stage_checkpoints: paths,
    })
}
