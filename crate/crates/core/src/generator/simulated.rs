//! Seeded simulated generation backend with analytically known per-prefix
//! correctness probabilities.
//!
//! Each simulated question carries branch rules mapping prefix patterns to
//! the probability that a continuation reaches the gold answer. A call draws
//! its randomness from `(world seed, question id, prompt hash, call
//! ordinal)`, so results are bit-reproducible regardless of how calls are
//! interleaved across threads.
//!
//! Stable contract relied on by oracle tests: the first `n` draws of a
//! call's RNG stream are the `n` correctness Bernoulli draws
//! (`rng.gen::<f64>() < p_correct`), in sample order; body construction
//! consumes the stream only afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{CostLedger, GenerationConfig, GeneratorError, TextGenerator};
use crate::hashing::{fnv1a, fnv1a_extend};
use crate::matcher::match_answer;
use crate::types::{Completion, FinishReason, MatcherKind, Question, TokenAlternative};

/// Maps a prefix pattern to the probability of continuing to the gold
/// answer. A rule applies when the answer prefix contains `prefix_contains`;
/// the empty pattern is the default rule and matches everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRule {
    pub prefix_contains: String,
    pub p_correct: f64,
}

/// One simulated question: the question itself, its branch rules, the wrong
/// answers it can emit, and the sentence stems its bodies are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimQuestionSpec {
    pub question: Question,
    pub rules: Vec<BranchRule>,
    pub distractors: Vec<String>,
    pub fragments: Vec<String>,
    pub paragraphs: u32,
    pub sentences_per_paragraph: u32,
}

/// Sentence stems used when a spec does not supply its own. Six to seven
/// words each, so sentences stay in a narrow length band.
pub const DEFAULT_FRAGMENTS: [&str; 6] = [
    "Combining both terms we now obtain",
    "The partial computation then reduces to",
    "Carrying this forward the subtotal becomes",
    "After simplification the intermediate value equals",
    "Checking the arithmetic once more yields",
    "Substituting back we find the quantity",
];

impl SimQuestionSpec {
    /// A numeric-answer question with a single default rule.
    pub fn numeric(
        id: impl Into<String>,
        text: impl Into<String>,
        gold: i64,
        p_correct: f64,
    ) -> Self {
        Self {
            question: Question {
                id: id.into(),
                text: text.into(),
                gold_answer: gold.to_string(),
                matcher_kind: MatcherKind::NumericFinalAnswer,
            },
            rules: vec![BranchRule {
                prefix_contains: String::new(),
                p_correct,
            }],
            distractors: vec![
                (gold + 1).to_string(),
                (gold - 1).to_string(),
                (gold + 10).to_string(),
            ],
            fragments: DEFAULT_FRAGMENTS.iter().map(|s| (*s).to_owned()).collect(),
            paragraphs: 3,
            sentences_per_paragraph: 2,
        }
    }

    pub fn with_rule(mut self, prefix_contains: impl Into<String>, p_correct: f64) -> Self {
        self.rules.push(BranchRule {
            prefix_contains: prefix_contains.into(),
            p_correct,
        });
        self
    }

    pub fn with_shape(mut self, paragraphs: u32, sentences_per_paragraph: u32) -> Self {
        self.paragraphs = paragraphs;
        self.sentences_per_paragraph = sentences_per_paragraph;
        self
    }

    /// The rule governing `prefix`: the matching rule with the longest
    /// pattern, earliest declaration winning ties.
    pub fn rule_for(&self, prefix: &str) -> Option<&BranchRule> {
        self.rules
            .iter()
            .filter(|r| prefix.contains(&r.prefix_contains))
            .max_by_key(|r| r.prefix_contains.len())
    }
}

/// A full simulated world: seed plus question specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorld {
    pub seed: u64,
    pub questions: Vec<SimQuestionSpec>,
    /// Fault injection for tests: calls fail once the ledger has recorded
    /// at least this many inferences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_after_inferences: Option<u64>,
}

impl SimulatedWorld {
    pub fn new(seed: u64, questions: Vec<SimQuestionSpec>) -> Self {
        Self {
            seed,
            questions,
            fail_after_inferences: None,
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        for spec in &self.questions {
            spec.question
                .validate()
                .map_err(|e| GeneratorError::InvalidArgument(e.to_string()))?;
            if !spec.rules.iter().any(|r| r.prefix_contains.is_empty()) {
                return Err(GeneratorError::InvalidArgument(format!(
                    "question {} lacks a default (empty-prefix) rule",
                    spec.question.id
                )));
            }
            for rule in &spec.rules {
                if !(0.0..=1.0).contains(&rule.p_correct) {
                    return Err(GeneratorError::InvalidArgument(format!(
                        "p_correct {} out of [0,1] for question {}",
                        rule.p_correct, spec.question.id
                    )));
                }
            }
            if spec.distractors.is_empty() {
                return Err(GeneratorError::InvalidArgument(format!(
                    "question {} has no distractors",
                    spec.question.id
                )));
            }
            for d in &spec.distractors {
                let hits = match_answer(d, &spec.question.gold_answer, spec.question.matcher_kind)
                    .map_err(|e| GeneratorError::InvalidArgument(e.to_string()))?;
                if hits {
                    return Err(GeneratorError::InvalidArgument(format!(
                        "distractor {d:?} matches the gold answer of question {}",
                        spec.question.id
                    )));
                }
            }
            if spec.fragments.is_empty() || spec.paragraphs == 0 || spec.sentences_per_paragraph == 0
            {
                return Err(GeneratorError::InvalidArgument(format!(
                    "question {} has an empty body shape",
                    spec.question.id
                )));
            }
        }
        Ok(())
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter().map(|s| &s.question)
    }
}

/// Deterministic backend over a [`SimulatedWorld`].
pub struct SimulatedGenerator {
    world: Arc<SimulatedWorld>,
    ledger: CostLedger,
    // Call ordinal per (question id, prompt hash); repeated calls with the
    // same prompt get fresh but reproducible streams.
    ordinals: Mutex<HashMap<(String, u64), u64>>,
}

impl SimulatedGenerator {
    pub fn new(world: SimulatedWorld) -> Result<Self, GeneratorError> {
        world.validate()?;
        Ok(Self {
            world: Arc::new(world),
            ledger: CostLedger::new(),
            ordinals: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_shared(world: Arc<SimulatedWorld>) -> Result<Self, GeneratorError> {
        world.validate()?;
        Ok(Self {
            world,
            ledger: CostLedger::new(),
            ordinals: Mutex::new(HashMap::new()),
        })
    }

    /// Same world, fresh ledger and ordinal state. Call ordinals restart, so
    /// a fork given exclusive use of a question reproduces the streams a
    /// fresh generator would produce.
    pub fn fork(&self) -> Self {
        Self {
            world: Arc::clone(&self.world),
            ledger: CostLedger::new(),
            ordinals: Mutex::new(HashMap::new()),
        }
    }

    pub fn world(&self) -> &SimulatedWorld {
        &self.world
    }

    /// The true correctness probability the world assigns to a prompt; the
    /// closed-form oracle tests compare estimates against.
    pub fn true_p_for_prompt(&self, prompt: &str) -> Option<f64> {
        let spec = self.resolve(prompt)?;
        let prefix = &prompt[spec.question.text.len()..];
        spec.rule_for(prefix).map(|r| r.p_correct)
    }

    fn resolve(&self, prompt: &str) -> Option<&SimQuestionSpec> {
        self.world
            .questions
            .iter()
            .filter(|s| prompt.starts_with(&s.question.text))
            .max_by_key(|s| s.question.text.len())
    }

    fn call_rng(&self, question_id: &str, prompt: &str) -> ChaCha8Rng {
        let prompt_hash = fnv1a(prompt.as_bytes());
        let ordinal = {
            let mut map = self.ordinals.lock().expect("ordinal map poisoned");
            let counter = map
                .entry((question_id.to_owned(), prompt_hash))
                .or_insert(0);
            let current = *counter;
            *counter += 1;
            current
        };
        let mut seed = fnv1a_extend(self.world.seed, question_id.as_bytes());
        seed = fnv1a_extend(seed, &prompt_hash.to_le_bytes());
        seed = fnv1a_extend(seed, &ordinal.to_le_bytes());
        ChaCha8Rng::seed_from_u64(seed)
    }
}

fn build_body(
    spec: &SimQuestionSpec,
    answer: &str,
    rng: &mut ChaCha8Rng,
) -> String {
    let mut paragraphs = Vec::with_capacity(spec.paragraphs as usize);
    for p in 0..spec.paragraphs {
        let mut sentences = Vec::new();
        for _ in 0..spec.sentences_per_paragraph {
            let stem = &spec.fragments[rng.gen_range(0..spec.fragments.len())];
            let value: u32 = rng.gen_range(0..1_000_000);
            sentences.push(format!("{stem} {value}."));
        }
        if p + 1 == spec.paragraphs {
            sentences.push(format!("The answer is {answer}."));
        }
        paragraphs.push(sentences.join(" "));
    }
    paragraphs.join("\n\n")
}

/// Character-end offsets (exclusive, in bytes) of whitespace tokens.
fn token_byte_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut in_token = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            in_token = false;
        } else {
            if in_token {
                ends.pop();
            }
            in_token = true;
            ends.push(i + ch.len_utf8());
        }
    }
    ends
}

impl TextGenerator for SimulatedGenerator {
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<Completion>, GeneratorError> {
        config.validate()?;
        if prompt.trim().is_empty() {
            return Err(GeneratorError::InvalidArgument(
                "prompt must be non-empty".into(),
            ));
        }
        if let Some(limit) = self.world.fail_after_inferences {
            if self.ledger.inference_count() >= limit {
                return Err(GeneratorError::Transport {
                    attempts: 1,
                    message: "simulated backend outage".into(),
                });
            }
        }
        let spec = self.resolve(prompt).ok_or_else(|| {
            GeneratorError::UnknownPrompt(prompt.chars().take(60).collect::<String>())
        })?;
        let prefix = &prompt[spec.question.text.len()..];
        let p_correct = spec
            .rule_for(prefix)
            .expect("validated worlds always have a default rule")
            .p_correct;

        let mut rng = self.call_rng(&spec.question.id, prompt);
        let n = config.n as usize;
        // Correctness draws come first; see the module contract.
        let correct_flags: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < p_correct).collect();

        let mut completions = Vec::with_capacity(n);
        let mut completion_tokens = 0u64;
        for correct in correct_flags {
            let answer = if correct {
                spec.question.gold_answer.clone()
            } else {
                spec.distractors[rng.gen_range(0..spec.distractors.len())].clone()
            };
            let mut text = build_body(spec, &answer, &mut rng);
            let mut finish = FinishReason::Stop;
            let ends = token_byte_ends(&text);
            if ends.len() > config.max_tokens as usize {
                text.truncate(ends[config.max_tokens as usize - 1]);
                finish = FinishReason::Length;
            }
            let tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
            let token_logprobs = config.request_logprobs.then(|| {
                tokens
                    .iter()
                    .map(|_| rng.gen_range(0.6..0.99f64).ln())
                    .collect::<Vec<f64>>()
            });
            let top_logprobs = (config.request_logprobs && config.top_logprobs_k > 0).then(|| {
                tokens
                    .iter()
                    .map(|tok| {
                        if config.top_logprobs_k == 1 || rng.gen::<f64>() < 0.75 {
                            vec![TokenAlternative {
                                token: tok.clone(),
                                logprob: 0.0,
                            }]
                        } else {
                            let p = rng.gen_range(0.55..0.95f64);
                            vec![
                                TokenAlternative {
                                    token: tok.clone(),
                                    logprob: p.ln(),
                                },
                                TokenAlternative {
                                    token: format!("~{tok}"),
                                    logprob: (1.0 - p).ln(),
                                },
                            ]
                        }
                    })
                    .collect::<Vec<_>>()
            });
            completion_tokens += tokens.len() as u64;
            completions.push(
                Completion::new(text, tokens, token_logprobs, top_logprobs, finish)
                    .expect("simulated completion is internally consistent"),
            );
        }

        let prompt_tokens = prompt.split_whitespace().count() as u64;
        self.ledger
            .record(n as u64, prompt_tokens, completion_tokens);
        Ok(completions)
    }

    fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    fn supports_logprobs(&self) -> bool {
        true
    }
}
