//! File formats: plain-text corpora (one sentence per line) and JSON-lines
//! labeled datasets.

use super::{CorpusError, Example, Label, LabeledDataset, Sentence, TaskKind};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Reads a UTF-8 plain-text corpus, one sentence per line. Lines are split
/// on whitespace; blank lines are skipped.
pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_string()).collect();
        if !tokens.is_empty() {
            out.push(Sentence::new(tokens));
        }
    }
    Ok(out)
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for s in sentences {
        buf.push_str(&s.to_string());
        buf.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Record {
    segments: Vec<String>,
    label: serde_json::Value,
}

/// Writes a dataset as JSON lines: `{"segments": [...], "label": ...}` with
/// one record per example. Segment tokens are space-joined.
pub fn write_dataset_jsonl(path: &Path, dataset: &LabeledDataset) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for ex in &dataset.examples {
        let record = Record {
            segments: ex.segments.iter().map(|s| s.to_string()).collect(),
            label: match &ex.label {
                Label::Class(c) => serde_json::json!(c),
                Label::Tags(tags) => serde_json::json!(tags),
            },
        };
        buf.push_str(&serde_json::to_string(&record).expect("record serializes"));
        buf.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_dataset_jsonl(path: &Path, kind: TaskKind) -> Result<LabeledDataset, CorpusError> {
    let file = fs::File::open(path)?;
    let mut examples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| CorpusError::BadRecord {
                line: i + 1,
                detail: e.to_string(),
            })?;
        if record.segments.len() != kind.segment_arity() {
            return Err(CorpusError::BadRecord {
                line: i + 1,
                detail: format!(
                    "expected {} segments, got {}",
                    kind.segment_arity(),
                    record.segments.len()
                ),
            });
        }
        let segments: Vec<Sentence> = record
            .segments
            .iter()
            .map(|s| Sentence::new(s.split_whitespace().map(|t| t.to_string()).collect()))
            .collect();
        let label = match kind {
            TaskKind::TokenTagging => {
                let tags: Vec<u8> =
                    serde_json::from_value(record.label).map_err(|e| CorpusError::BadRecord {
                        line: i + 1,
                        detail: e.to_string(),
                    })?;
                if tags.len() != segments[0].len() {
                    return Err(CorpusError::BadRecord {
                        line: i + 1,
                        detail: format!(
                            "{} tags for {} tokens",
                            tags.len(),
                            segments[0].len()
                        ),
                    });
                }
                Label::Tags(tags)
            }
            _ => {
                let c: usize =
                    serde_json::from_value(record.label).map_err(|e| CorpusError::BadRecord {
                        line: i + 1,
                        detail: e.to_string(),
                    })?;
                Label::Class(c)
            }
        };
        examples.push(Example { segments, label });
    }
    Ok(LabeledDataset {
        kind,
        n_classes: 2,
        examples,
    })
}
