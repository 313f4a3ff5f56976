//! The subcommand implementations: dataset construction, estimation,
//! evaluation, cost planning and world generation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use seqconf::bci::{integrate, BciParams};
use seqconf::generator::http::HttpGenerator;
use seqconf::generator::simulated::{SimulatedGenerator, SimulatedWorld};
use seqconf::generator::{CostSnapshot, GenerationConfig, GeneratorError, TextGenerator};
use seqconf::mcsampler::{
    estimate_confidence, reconstruct_answer, score_full_answer, EstimateError, SamplingPlan,
};
use seqconf::metrics::{
    report, selective_accuracy, LabeledPrediction, MetricReport, PositionTag,
};
use seqconf::pipeline::{
    build_tree, emit_training_data, predicted_cost, PipelineParams, Strategy,
};
use seqconf::positions::{
    entropy_positions, paragraph_positions, periodic_positions, prefix_slice, token_ratio,
    CalibrationPosition, PositionError,
};
use seqconf::types::{Completion, FinishReason, Question, SequenceKind, SequenceState};
use seqconf::embed::HashedNgramEmbedder;

use crate::config::{GeneratorConfig, PositionStrategy, RunConfig};
use crate::error::CliError;
use crate::io::{
    read_jsonl, read_questions, to_json_line, write_lines, write_string, EstimateInputRow,
    LabelRow, QuestionRow, RecordRow,
};
use crate::manifest::RunManifest;
use crate::world_gen::{generate_world, WorldGenOptions};

pub enum Backend {
    Simulated(SimulatedGenerator),
    Http(HttpGenerator),
}

impl Backend {
    pub fn generator(&self) -> &dyn TextGenerator {
        match self {
            Backend::Simulated(g) => g,
            Backend::Http(g) => g,
        }
    }

    /// Same backend with a fresh ledger; a fork given exclusive use of one
    /// question yields per-question cost measurements.
    pub fn fork(&self) -> Backend {
        match self {
            Backend::Simulated(g) => Backend::Simulated(g.fork()),
            Backend::Http(g) => Backend::Http(g.fork()),
        }
    }

    pub fn supports_logprobs(&self) -> bool {
        self.generator().supports_logprobs()
    }
}

/// Instantiate the configured backend; returns the effective seed.
pub fn load_backend(config: &RunConfig) -> Result<(Backend, u64), CliError> {
    match &config.generator {
        GeneratorConfig::Simulated { world_path } => {
            let raw = fs::read_to_string(world_path).map_err(|e| {
                CliError::Input(format!("cannot read world {}: {e}", world_path.display()))
            })?;
            let mut world: SimulatedWorld = serde_json::from_str(&raw).map_err(|e| {
                CliError::Input(format!("malformed world {}: {e}", world_path.display()))
            })?;
            if let Some(seed) = config.seed {
                world.seed = seed;
            }
            let seed = world.seed;
            let gen = SimulatedGenerator::new(world)
                .map_err(|e| CliError::Input(format!("invalid world: {e}")))?;
            Ok((Backend::Simulated(gen), seed))
        }
        GeneratorConfig::Http { http } => {
            let gen = HttpGenerator::new(http.clone())
                .map_err(|e| CliError::Backend(e.to_string()))?;
            Ok((Backend::Http(gen), config.seed.unwrap_or(0)))
        }
    }
}

fn estimate_error_to_cli(e: EstimateError) -> CliError {
    match e {
        EstimateError::Generator { ref source, .. } => match source {
            GeneratorError::UnsupportedCapability(what) => {
                CliError::Capability((*what).to_owned())
            }
            GeneratorError::InvalidArgument(m) => CliError::Input(m.clone()),
            _ => CliError::Backend(e.to_string()),
        },
        other => CliError::Input(other.to_string()),
    }
}

fn generator_error_to_cli(e: GeneratorError) -> CliError {
    match e {
        GeneratorError::UnsupportedCapability(what) => CliError::Capability(what.to_owned()),
        GeneratorError::InvalidArgument(m) => CliError::Input(m),
        other => CliError::Backend(other.to_string()),
    }
}

fn position_error_to_cli(e: PositionError) -> CliError {
    match e {
        PositionError::Capability(inner) => generator_error_to_cli(inner),
        PositionError::TokenAlignment => {
            CliError::Capability("aligned token offsets".to_owned())
        }
        other => CliError::Input(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// construct
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct QuestionCost {
    question_id: String,
    predicted: u64,
    measured: u64,
    matched: Option<bool>,
    truncation_shortfall: bool,
    effective_m_reductions: usize,
}

#[derive(Debug, Serialize)]
struct CostReport {
    strategy: Strategy,
    k: u32,
    m: u32,
    t: u32,
    predicted_per_question: BTreeMap<String, u64>,
    per_question: Vec<QuestionCost>,
    totals: CostSnapshot,
}

#[derive(Debug, Serialize)]
struct QuestionFailure {
    question_id: String,
    error: String,
}

pub fn cmd_construct(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let questions_path = config
        .io
        .questions
        .as_ref()
        .ok_or_else(|| CliError::Input("no questions file configured".into()))?;
    let questions = read_questions(questions_path)?;
    let (backend, seed) = load_backend(config)?;
    let params = config.pipeline.params(config.sampling.k);
    params
        .validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let gen_config = config.sampling.generation_config(Some(seed));
    let embedder = HashedNgramEmbedder::default();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("cannot build worker pool: {e}")))?;

    struct Built {
        tree: seqconf::pipeline::AnswerTree,
        examples: Vec<seqconf::pipeline::TrainingExample>,
    }

    let results: Vec<Result<Built, QuestionFailure>> = pool.install(|| {
        questions
            .par_iter()
            .map(|question| {
                let gen = backend.fork();
                let plan = SamplingPlan::new(
                    config.sampling.k,
                    gen_config.clone(),
                    question.matcher_kind,
                )
                .map_err(|e| QuestionFailure {
                    question_id: question.id.clone(),
                    error: e.to_string(),
                })?;
                let tree =
                    build_tree(question, &params, &plan, gen.generator(), &embedder).map_err(
                        |e| QuestionFailure {
                            question_id: question.id.clone(),
                            error: e.to_string(),
                        },
                    )?;
                let examples = emit_training_data(&tree);
                Ok(Built { tree, examples })
            })
            .collect()
    });

    let mut question_lines = Vec::new();
    let mut partial_lines = Vec::new();
    let mut answer_lines = Vec::new();
    let mut per_question = Vec::new();
    let mut totals = CostSnapshot::default();
    let mut failures = Vec::new();

    for result in results {
        match result {
            Ok(built) => {
                for example in &built.examples {
                    let line = example.to_jsonl_line();
                    match example.kind {
                        SequenceKind::Question => question_lines.push(line),
                        SequenceKind::QuestionWithPartialAnswer => partial_lines.push(line),
                        SequenceKind::QuestionWithAnswer => answer_lines.push(line),
                    }
                }
                let tree = &built.tree;
                totals.add(&tree.ledger);
                let predicted = predicted_cost(&params);
                per_question.push(QuestionCost {
                    question_id: tree.question.id.clone(),
                    predicted,
                    measured: tree.ledger.inference_count,
                    matched: if tree.truncation_shortfall {
                        None
                    } else {
                        Some(tree.ledger.inference_count == predicted)
                    },
                    truncation_shortfall: tree.truncation_shortfall,
                    effective_m_reductions: tree.effective_m_reductions.len(),
                });
                let tree_json =
                    serde_json::to_string_pretty(tree).expect("tree serializes");
                write_string(
                    &out_dir.join("trees").join(format!("{}.json", tree.question.id)),
                    &tree_json,
                )?;
            }
            Err(failure) => failures.push(failure),
        }
    }

    write_lines(&out_dir.join("training_question.jsonl"), &question_lines)?;
    write_lines(&out_dir.join("training_partial.jsonl"), &partial_lines)?;
    write_lines(&out_dir.join("training_answer.jsonl"), &answer_lines)?;

    let predicted_per_question: BTreeMap<String, u64> = [
        ("full_tree".to_owned(), predicted_cost(&PipelineParams { strategy: Strategy::FullTree, ..params })),
        ("clustered".to_owned(), predicted_cost(&PipelineParams { strategy: Strategy::Clustered, ..params })),
        ("linear".to_owned(), predicted_cost(&PipelineParams { strategy: Strategy::Linear, ..params })),
    ]
    .into_iter()
    .collect();
    let cost_report = CostReport {
        strategy: params.strategy,
        k: params.k,
        m: params.m,
        t: params.t,
        predicted_per_question,
        per_question,
        totals,
    };
    write_string(
        &out_dir.join("cost_report.json"),
        &serde_json::to_string_pretty(&cost_report).expect("report serializes"),
    )?;

    let manifest = RunManifest::new("construct", config, seed, totals);
    write_string(&out_dir.join("run_manifest.json"), &manifest.to_json())?;

    if !failures.is_empty() {
        write_string(
            &out_dir.join("failures.json"),
            &serde_json::to_string_pretty(&failures).expect("failures serialize"),
        )?;
        return Err(CliError::Backend(format!(
            "{} of {} questions failed; see failures.json",
            failures.len(),
            questions.len()
        )));
    }
    println!(
        "constructed {} questions: {} question / {} partial / {} answer examples, {} inferences",
        questions.len(),
        question_lines.len(),
        partial_lines.len(),
        answer_lines.len(),
        totals.inference_count
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

/// A sequence being integrated backwards: its answer prefix so far and
/// whether it already ends in a complete answer.
#[derive(Clone)]
struct BciState {
    prefix: String,
    complete: bool,
}

struct Estimator<'a> {
    question: &'a Question,
    config: &'a RunConfig,
    gen: &'a dyn TextGenerator,
    plan: SamplingPlan,
}

impl<'a> Estimator<'a> {
    fn positions_of(
        &self,
        completion: &Completion,
    ) -> Result<Vec<CalibrationPosition>, CliError> {
        let positions = match self.config.positions.strategy {
            PositionStrategy::None => Vec::new(),
            PositionStrategy::Paragraph => {
                paragraph_positions(completion).map_err(position_error_to_cli)?
            }
            PositionStrategy::Periodic => {
                periodic_positions(completion, self.config.positions.interval)
                    .map_err(position_error_to_cli)?
            }
            PositionStrategy::Entropy => {
                entropy_positions(completion, self.config.positions.entropy_threshold)
                    .map_err(position_error_to_cli)?
            }
        };
        Ok(positions)
    }

    fn reference_config(&self) -> GenerationConfig {
        let mut cfg = self.plan.config.clone().with_n(1);
        if self.config.positions.strategy == PositionStrategy::Entropy {
            cfg.request_logprobs = true;
            cfg.top_logprobs_k = cfg.top_logprobs_k.max(2);
        }
        cfg
    }

    fn raw_conf_of(&self, state: &BciState) -> Result<f64, CliError> {
        if state.complete {
            let seq = SequenceState::full_answer(&self.question.id, &state.prefix, 0)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let record = score_full_answer(self.question, &seq, self.plan.matcher_kind)
                .map_err(estimate_error_to_cli)?;
            Ok(record.raw_conf)
        } else {
            let seq = if state.prefix.trim().is_empty() {
                SequenceState::question(&self.question.id)
            } else {
                SequenceState::partial(&self.question.id, &state.prefix, 0)
                    .map_err(|e| CliError::Input(e.to_string()))?
            };
            let est = estimate_confidence(self.question, &seq, &self.plan, self.gen)
                .map_err(estimate_error_to_cli)?;
            Ok(est.record.raw_conf)
        }
    }

    /// Sample `w` continuations and move each to its next calibration
    /// position. Continuations with no calibration position are dropped.
    fn continuations_of(&self, state: &BciState, w: u32) -> Result<Vec<BciState>, CliError> {
        if state.complete || w == 0 {
            return Ok(Vec::new());
        }
        let seq = if state.prefix.trim().is_empty() {
            SequenceState::question(&self.question.id)
        } else {
            SequenceState::partial(&self.question.id, &state.prefix, 0)
                .map_err(|e| CliError::Input(e.to_string()))?
        };
        let prompt = seq.prompt_text(self.question);
        let cfg = self.reference_config().with_n(w);
        let completions = self
            .gen
            .generate(&prompt, &cfg)
            .map_err(generator_error_to_cli)?;
        let mut branches = Vec::with_capacity(completions.len());
        for completion in &completions {
            let positions = self.positions_of(completion)?;
            let Some(first) = positions.first() else {
                continue;
            };
            let fragment = prefix_slice(&completion.text, first.char_offset).trim_end();
            if fragment.is_empty() {
                continue;
            }
            let at_end = token_ratio(first, completion) >= 1.0;
            branches.push(BciState {
                prefix: reconstruct_answer(&state.prefix, fragment),
                complete: at_end && completion.finish_reason == FinishReason::Stop,
            });
        }
        Ok(branches)
    }

    fn adjust(&self, state: &BciState, bci: &BciParams) -> Result<Option<f64>, CliError> {
        if bci.is_trivial() {
            return Ok(None);
        }
        let mut raw_fn = |s: &BciState| self.raw_conf_of(s);
        let mut cont_fn = |s: &BciState, w: u32| self.continuations_of(s, w);
        let outcome = integrate(state, bci, &mut raw_fn, &mut cont_fn)?;
        Ok(Some(outcome.adjusted))
    }
}

fn tag_for(index: usize, total: usize, at_end: bool) -> Option<PositionTag> {
    if index + 1 == total && at_end {
        return Some(PositionTag::Final);
    }
    if index == 0 {
        return Some(PositionTag::P1);
    }
    if index + 2 == total {
        return Some(PositionTag::PzMinus1);
    }
    None
}

pub fn cmd_estimate(config: &RunConfig, input: &Path, out_dir: &Path) -> Result<(), CliError> {
    let rows: Vec<EstimateInputRow> = read_jsonl(input)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "no input sequences in {}",
            input.display()
        )));
    }
    let (backend, seed) = load_backend(config)?;
    if config.positions.strategy == PositionStrategy::Entropy && !backend.supports_logprobs() {
        return Err(CliError::Capability(
            "entropy positions require a backend with token logprobs".into(),
        ));
    }
    let gen = backend.generator();
    let bci = config.bci.params();
    bci.validate().map_err(|e| CliError::Input(e.to_string()))?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    let records_path = out_dir.join("records.jsonl");
    let file = fs::File::create(&records_path).map_err(|e| {
        CliError::Input(format!("cannot create {}: {e}", records_path.display()))
    })?;
    let mut writer = std::io::BufWriter::new(file);
    let mut emitted = 0usize;
    let mut sink = |row: &RecordRow| -> Result<(), CliError> {
        writeln!(writer, "{}", to_json_line(row)).map_err(|e| {
            CliError::Input(format!("write to {} failed: {e}", records_path.display()))
        })?;
        // Records stream out as soon as they exist; early positions land
        // before later ones are even estimated.
        writer
            .flush()
            .map_err(|e| CliError::Input(format!("flush failed: {e}")))?;
        emitted += 1;
        Ok(())
    };

    for row in &rows {
        let question = row
            .question
            .clone()
            .into_question()
            .map_err(CliError::Input)?;
        let plan = SamplingPlan::new(
            config.sampling.k,
            config.sampling.generation_config(Some(seed)),
            question.matcher_kind,
        )
        .map_err(|e| CliError::Input(e.to_string()))?;
        let estimator = Estimator {
            question: &question,
            config,
            gen,
            plan,
        };
        estimate_sequence(&estimator, row, &bci, &mut sink)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Input(format!("flush failed: {e}")))?;

    let manifest = RunManifest::new("estimate", config, seed, gen.ledger().snapshot());
    write_string(&out_dir.join("run_manifest.json"), &manifest.to_json())?;
    println!("emitted {emitted} records to {}", records_path.display());
    Ok(())
}

fn estimate_sequence(
    estimator: &Estimator<'_>,
    row: &EstimateInputRow,
    bci: &BciParams,
    sink: &mut dyn FnMut(&RecordRow) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let question = estimator.question;
    match row.effective_kind() {
        SequenceKind::QuestionWithAnswer => {
            let prefix = row.prefix.clone().unwrap_or_default();
            let seq = SequenceState::full_answer(&question.id, prefix, 0)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let record = score_full_answer(question, &seq, estimator.plan.matcher_kind)
                .map_err(estimate_error_to_cli)?;
            sink(&RecordRow {
                question_id: question.id.clone(),
                kind: SequenceKind::QuestionWithAnswer,
                position_index: 0,
                position_tag: Some(PositionTag::Final),
                token_offset: None,
                token_ratio: Some(1.0),
                raw_conf: record.raw_conf,
                k_used: record.k_used,
                n_correct: record.n_correct,
                adjusted_conf: None,
                is_final_correct: record.is_final_correct,
            })
        }
        SequenceKind::QuestionWithPartialAnswer => {
            let prefix = row.prefix.clone().unwrap_or_default();
            let seq = SequenceState::partial(&question.id, &prefix, 0)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let est = estimate_confidence(question, &seq, &estimator.plan, estimator.gen)
                .map_err(estimate_error_to_cli)?;
            let adjusted = if estimator.config.positions.strategy == PositionStrategy::None {
                None
            } else {
                estimator.adjust(
                    &BciState {
                        prefix,
                        complete: false,
                    },
                    bci,
                )?
            };
            sink(&RecordRow {
                question_id: question.id.clone(),
                kind: SequenceKind::QuestionWithPartialAnswer,
                position_index: 0,
                position_tag: None,
                token_offset: None,
                token_ratio: None,
                raw_conf: est.record.raw_conf,
                k_used: est.record.k_used,
                n_correct: est.record.n_correct,
                adjusted_conf: adjusted,
                is_final_correct: None,
            })
        }
        SequenceKind::Question => {
            if estimator.config.positions.strategy == PositionStrategy::None {
                let seq = SequenceState::question(&question.id);
                let est =
                    estimate_confidence(question, &seq, &estimator.plan, estimator.gen)
                        .map_err(estimate_error_to_cli)?;
                return sink(&RecordRow {
                    question_id: question.id.clone(),
                    kind: SequenceKind::Question,
                    position_index: 0,
                    position_tag: None,
                    token_offset: None,
                    token_ratio: None,
                    raw_conf: est.record.raw_conf,
                    k_used: est.record.k_used,
                    n_correct: est.record.n_correct,
                    adjusted_conf: None,
                    is_final_correct: None,
                });
            }
            // Generate a reference answer and estimate at each calibration
            // position along it.
            let prompt = SequenceState::question(&question.id).prompt_text(question);
            let reference = estimator
                .gen
                .generate(&prompt, &estimator.reference_config())
                .map_err(generator_error_to_cli)?
                .into_iter()
                .next()
                .ok_or_else(|| CliError::Backend("backend returned no completion".into()))?;
            let positions = estimator.positions_of(&reference)?;
            let total = positions.len();
            for (index, position) in positions.iter().enumerate() {
                let fragment = prefix_slice(&reference.text, position.char_offset).trim_end();
                if fragment.is_empty() {
                    continue;
                }
                let ratio = token_ratio(position, &reference);
                let at_end = ratio >= 1.0;
                let complete = at_end && reference.finish_reason == FinishReason::Stop;
                let record = if complete {
                    let seq =
                        SequenceState::full_answer(&question.id, fragment, index as u32)
                            .map_err(|e| CliError::Input(e.to_string()))?;
                    score_full_answer(question, &seq, estimator.plan.matcher_kind)
                        .map_err(estimate_error_to_cli)?
                } else {
                    let seq = SequenceState::partial(&question.id, fragment, index as u32)
                        .map_err(|e| CliError::Input(e.to_string()))?;
                    estimate_confidence(question, &seq, &estimator.plan, estimator.gen)
                        .map_err(estimate_error_to_cli)?
                        .record
                };
                let adjusted = estimator.adjust(
                    &BciState {
                        prefix: fragment.to_owned(),
                        complete,
                    },
                    bci,
                )?;
                sink(&RecordRow {
                    question_id: question.id.clone(),
                    kind: record.sequence.kind,
                    position_index: index as u32,
                    position_tag: tag_for(index, total, at_end),
                    token_offset: Some(position.token_offset),
                    token_ratio: Some(ratio),
                    raw_conf: record.raw_conf,
                    k_used: record.k_used,
                    n_correct: record.n_correct,
                    adjusted_conf: adjusted,
                    is_final_correct: record.is_final_correct,
                })?;
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct SelectiveRow {
    delta: f64,
    accuracy_retained: Option<f64>,
    coverage: f64,
}

#[derive(Debug, Serialize)]
struct EvaluationOutput {
    pooled: MetricReport,
    by_tag: BTreeMap<String, MetricReport>,
    selective: Vec<SelectiveRow>,
    n_records: usize,
}

pub fn cmd_evaluate(
    config: &RunConfig,
    records_path: &Path,
    labels_path: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let records: Vec<RecordRow> = read_jsonl(records_path)?;
    if records.is_empty() {
        return Err(CliError::Input(format!(
            "no records in {}",
            records_path.display()
        )));
    }

    // Label join: explicit labels file first, otherwise per-question
    // correctness carried on final records.
    let mut labels: BTreeMap<String, bool> = BTreeMap::new();
    if let Some(path) = labels_path {
        let rows: Vec<LabelRow> = read_jsonl(path)?;
        for row in rows {
            labels.insert(row.question_id, row.correct);
        }
    } else {
        for record in &records {
            if let Some(correct) = record.is_final_correct {
                labels.insert(record.question_id.clone(), correct);
            }
        }
    }
    let mut unjoinable: Vec<String> = records
        .iter()
        .filter(|r| !labels.contains_key(&r.question_id))
        .map(|r| r.question_id.clone())
        .collect();
    unjoinable.sort();
    unjoinable.dedup();
    if !unjoinable.is_empty() {
        return Err(CliError::Input(format!(
            "records without a correctness label: {}",
            unjoinable.join(", ")
        )));
    }

    let mut pooled = Vec::with_capacity(records.len());
    let mut by_tag: BTreeMap<String, Vec<LabeledPrediction>> = BTreeMap::new();
    for record in &records {
        let confidence = record.adjusted_conf.unwrap_or(record.raw_conf);
        let correct = labels[&record.question_id];
        let pred = LabeledPrediction {
            confidence,
            correct,
            position_tag: record.position_tag,
        };
        pooled.push(pred);
        if let Some(tag) = record.position_tag {
            let key = match tag {
                PositionTag::P1 => "p1",
                PositionTag::PzMinus1 => "pz_minus_1",
                PositionTag::Final => "final",
            };
            by_tag.entry(key.to_owned()).or_default().push(pred);
        }
    }

    let num_bins = config.metrics.num_bins;
    let pooled_report = report(&pooled, num_bins).map_err(|e| CliError::Input(e.to_string()))?;
    let mut tag_reports = BTreeMap::new();
    for (tag, preds) in &by_tag {
        let r = report(preds, num_bins).map_err(|e| CliError::Input(e.to_string()))?;
        tag_reports.insert(tag.clone(), r);
    }
    let mut selective = Vec::new();
    for delta in config.metrics.deltas() {
        let s =
            selective_accuracy(&pooled, delta).map_err(|e| CliError::Input(e.to_string()))?;
        selective.push(SelectiveRow {
            delta,
            accuracy_retained: s.accuracy_retained,
            coverage: s.coverage,
        });
    }

    let output = EvaluationOutput {
        pooled: pooled_report,
        by_tag: tag_reports,
        selective,
        n_records: records.len(),
    };
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    write_string(
        &out_dir.join("report.json"),
        &serde_json::to_string_pretty(&output).expect("report serializes"),
    )?;
    write_string(
        &out_dir.join("reliability.csv"),
        &output.pooled.bins_to_csv(),
    )?;

    let auroc_text = output
        .pooled
        .auroc
        .map_or_else(|| "undefined (single class)".to_owned(), |v| format!("{v:.4}"));
    println!(
        "pooled: n={} accuracy={:.4} ece={:.4} auroc={}",
        output.pooled.n, output.pooled.accuracy, output.pooled.ece, auroc_text
    );
    for (tag, r) in &output.by_tag {
        let auroc_text = r
            .auroc
            .map_or_else(|| "undefined".to_owned(), |v| format!("{v:.4}"));
        println!(
            "{tag}: n={} accuracy={:.4} ece={:.4} auroc={}",
            r.n, r.accuracy, r.ece, auroc_text
        );
    }
    for row in &output.selective {
        let acc = row
            .accuracy_retained
            .map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
        println!(
            "delta={:.2}: coverage={:.4} accuracy_retained={acc}",
            row.delta, row.coverage
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cost
// ---------------------------------------------------------------------------

pub fn cmd_cost(ks: &[u32], ms: &[u32], ts: &[u32]) -> Result<(), CliError> {
    if ks.is_empty() || ms.is_empty() || ts.is_empty() {
        return Err(CliError::Input("k, m and t lists must be non-empty".into()));
    }
    println!("{:>4} {:>4} {:>4} {:>12} {:>12} {:>12}", "k", "m", "T", "full_tree", "clustered", "linear");
    for &k in ks {
        for &m in ms {
            if m == 0 || m > k {
                continue;
            }
            for &t in ts {
                let base = PipelineParams {
                    k,
                    m,
                    t,
                    strategy: Strategy::FullTree,
                    truncation_rule: seqconf::pipeline::TruncationRule::SentenceFraction,
                };
                let full = predicted_cost(&base);
                let clustered = predicted_cost(&PipelineParams {
                    strategy: Strategy::Clustered,
                    ..base
                });
                let linear = predicted_cost(&PipelineParams {
                    strategy: Strategy::Linear,
                    ..base
                });
                println!("{k:>4} {m:>4} {t:>4} {full:>12} {clustered:>12} {linear:>12}");
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate-world
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate_world(
    questions: usize,
    seed: u64,
    p_grid: &[f64],
    paragraphs: u32,
    sentences: u32,
    out_world: &Path,
    out_questions: &Path,
) -> Result<(), CliError> {
    if questions == 0 {
        return Err(CliError::Input("need at least one question".into()));
    }
    let world = generate_world(&WorldGenOptions {
        questions,
        seed,
        p_grid: p_grid.to_vec(),
        paragraphs,
        sentences_per_paragraph: sentences,
    });
    world
        .validate()
        .map_err(|e| CliError::Input(format!("generated world is invalid: {e}")))?;
    write_string(
        out_world,
        &serde_json::to_string_pretty(&world).expect("world serializes"),
    )?;
    let question_lines: Vec<String> = world
        .questions
        .iter()
        .map(|spec| {
            to_json_line(&QuestionRow {
                id: spec.question.id.clone(),
                text: spec.question.text.clone(),
                gold_answer: spec.question.gold_answer.clone(),
                matcher_kind: spec.question.matcher_kind,
            })
        })
        .collect();
    write_lines(out_questions, &question_lines)?;
    println!(
        "wrote {} questions to {} and world to {}",
        questions,
        out_questions.display(),
        out_world.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| CliError::Input(format!("bad {what} value {s:?}: {e}")))
        })
        .collect()
}

pub fn resolve_out_dir(out: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    Ok(out.to_owned())
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let raw = fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&raw)
                .map_err(|e| CliError::Input(format!("malformed config {}: {e}", p.display())))
        }
    }
}

