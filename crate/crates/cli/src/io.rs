//! Dataset IO: JSONL readers with line-numbered errors and the record
//! schemas shared by the subcommands.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::CliError;
use seqconf::metrics::PositionTag;
use seqconf::types::{MatcherKind, Question, SequenceKind};

fn default_matcher() -> MatcherKind {
    MatcherKind::NumericFinalAnswer
}

/// One line of a questions file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRow {
    pub id: String,
    pub text: String,
    pub gold_answer: String,
    #[serde(default = "default_matcher")]
    pub matcher_kind: MatcherKind,
}

impl QuestionRow {
    pub fn into_question(self) -> Result<Question, String> {
        Question::new(self.id, self.text, self.gold_answer, self.matcher_kind)
            .map_err(|e| e.to_string())
    }
}

/// One line of an estimate input file: a question plus an optional answer
/// prefix. When `kind` is omitted it is inferred from the prefix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateInputRow {
    #[serde(flatten)]
    pub question: QuestionRow,
    #[serde(default)]
    pub prefix: Option<String>,
    #[serde(default)]
    pub kind: Option<SequenceKind>,
}

impl EstimateInputRow {
    pub fn effective_kind(&self) -> SequenceKind {
        if let Some(kind) = self.kind {
            return kind;
        }
        match &self.prefix {
            Some(p) if !p.trim().is_empty() => SequenceKind::QuestionWithPartialAnswer,
            _ => SequenceKind::Question,
        }
    }
}

/// One emitted confidence record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordRow {
    pub question_id: String,
    pub kind: SequenceKind,
    pub position_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_tag: Option<PositionTag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_ratio: Option<f64>,
    pub raw_conf: f64,
    pub k_used: u32,
    pub n_correct: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_conf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_final_correct: Option<bool>,
}

/// One line of a labels file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRow {
    pub question_id: String,
    pub correct: bool,
}

/// Read a JSONL file, reporting the 1-based line number of the first
/// malformed line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line
            .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), idx + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(&line).map_err(|e| {
            CliError::Input(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_questions(path: &Path) -> Result<Vec<Question>, CliError> {
    let rows: Vec<QuestionRow> = read_jsonl(path)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "no questions in {}",
            path.display()
        )));
    }
    rows.into_iter()
        .enumerate()
        .map(|(idx, row)| {
            row.into_question()
                .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), idx + 1)))
        })
        .collect()
}

/// Write lines to a file, creating parent directories; a single writer per
/// file keeps output ordering deterministic.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
    }
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))?;
    for line in lines {
        writeln!(file, "{line}")
            .map_err(|e| CliError::Input(format!("write to {} failed: {e}", path.display())))?;
    }
    Ok(())
}

pub fn write_string(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, content)
        .map_err(|e| CliError::Input(format!("write to {} failed: {e}", path.display())))
}

pub fn to_json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("row serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_line_reports_number() {
        let dir = std::env::temp_dir().join("seqconf-io-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"t\",\"gold_answer\":\"1\"}\nnot json\n",
        )
        .unwrap();
        let err = read_questions(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn empty_questions_rejected() {
        let dir = std::env::temp_dir().join("seqconf-io-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.jsonl");
        fs::write(&path, "\n\n").unwrap();
        let err = read_questions(&path).unwrap_err();
        assert!(err.to_string().contains("no questions"));
    }

    #[test]
    fn estimate_input_kind_inference() {
        let row: EstimateInputRow = serde_json::from_str(
            r#"{"id":"q","text":"t","gold_answer":"1","prefix":"partial work"}"#,
        )
        .unwrap();
        assert_eq!(row.effective_kind(), SequenceKind::QuestionWithPartialAnswer);
        let row: EstimateInputRow =
            serde_json::from_str(r#"{"id":"q","text":"t","gold_answer":"1"}"#).unwrap();
        assert_eq!(row.effective_kind(), SequenceKind::Question);
        let row: EstimateInputRow = serde_json::from_str(
            r#"{"id":"q","text":"t","gold_answer":"1","prefix":"done. 1.","kind":"question_with_answer"}"#,
        )
        .unwrap();
        assert_eq!(row.effective_kind(), SequenceKind::QuestionWithAnswer);
    }
}
