//! Dataset loading, confusion-matrix metrics, run reports and with/without
//! domain-knowledge comparison.
//!
//! The positive class for every metric is `Fake`, so recall reads as "the
//! fraction of fakes caught". Report tables render percentages rounded
//! half-up to integers; the machine-readable JSON keeps full precision.

use crate::model::{Conversation, DriftClass, Label, Review, Turn, Verdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("verdict {0} has no gold label")]
    MissingGold(String),
    #[error("empty confusion counts")]
    EmptyCounts,
    #[error("malformed row at line {line}: {detail}")]
    MalformedRow { line: u64, detail: String },
    #[error("unknown label {value:?} at line {line}")]
    UnknownLabel { line: u64, value: String },
    #[error("malformed line {line}: {detail}")]
    MalformedLine { line: u64, detail: String },
    #[error("reports cover different datasets ({a} vs {b})")]
    DatasetMismatch { a: String, b: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

/// Confusion counts with `Fake` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// accuracy = (tp+tn)/total, precision = tp/(tp+fp), recall = tp/(tp+fn),
/// f1 = harmonic mean; zero-denominator cases yield 0 by convention.
pub fn metrics(counts: &ConfusionCounts) -> Result<Metrics, EvalError> {
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::EmptyCounts);
    }
    let tp = counts.true_pos as f64;
    let accuracy = (tp + counts.true_neg as f64) / total as f64;
    let predicted_pos = counts.true_pos + counts.false_pos;
    let precision = if predicted_pos == 0 {
        0.0
    } else {
        tp / predicted_pos as f64
    };
    let actual_pos = counts.true_pos + counts.false_neg;
    let recall = if actual_pos == 0 { 0.0 } else { tp / actual_pos as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Percentage rounded half-up to an integer, matching report tables.
pub fn percent(value: f64) -> i64 {
    (value * 100.0).round() as i64
}

/// Tallies predictions against gold labels; every verdict id must be present
/// in `golds`.
pub fn accumulate(
    verdicts: &[Verdict],
    golds: &HashMap<String, Label>,
) -> Result<ConfusionCounts, EvalError> {
    let mut counts = ConfusionCounts::default();
    for verdict in verdicts {
        let gold = golds
            .get(&verdict.conversation_id)
            .ok_or_else(|| EvalError::MissingGold(verdict.conversation_id.clone()))?;
        match (verdict.label, gold) {
            (Label::Fake, Label::Fake) => counts.true_pos += 1,
            (Label::Fake, Label::Real) => counts.false_pos += 1,
            (Label::Real, Label::Fake) => counts.false_neg += 1,
            (Label::Real, Label::Real) => counts.true_neg += 1,
        }
    }
    Ok(counts)
}

/// Gold-label map from conversations that carry one.
pub fn golds_from_conversations(convs: &[Conversation]) -> HashMap<String, Label> {
    convs
        .iter()
        .filter_map(|c| c.gold_label.map(|l| (c.id.clone(), l)))
        .collect()
}

/// First 12 hex characters of the SHA-256 of `bytes`.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Review CSV loading (header: id,text,label)
// ---------------------------------------------------------------------------

/// Parses a review CSV with header `id,text,label`; `label` is `real` or
/// `fake` (case-insensitive) or empty for unlabeled rows.
pub fn load_reviews(path: impl AsRef<Path>) -> Result<Vec<Review>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| EvalError::Io(e.to_string()))?;
    {
        let headers = reader.headers().map_err(|e| EvalError::Io(e.to_string()))?;
        let expected = ["id", "text", "label"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(EvalError::MalformedRow {
                line: 1,
                detail: format!("header must be id,text,label, got {headers:?}"),
            });
        }
    }
    let mut reviews = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| EvalError::Io(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(EvalError::MalformedRow {
                line,
                detail: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let id = record[0].trim().to_string();
        let text = record[1].to_string();
        if id.is_empty() {
            return Err(EvalError::MalformedRow {
                line,
                detail: "empty id".into(),
            });
        }
        if text.is_empty() {
            return Err(EvalError::MalformedRow {
                line,
                detail: "empty review text".into(),
            });
        }
        let raw_label = record[2].trim();
        let gold_label = if raw_label.is_empty() {
            None
        } else {
            Some(raw_label.parse::<Label>().map_err(|_| EvalError::UnknownLabel {
                line,
                value: raw_label.to_string(),
            })?)
        };
        reviews.push(Review {
            id,
            text,
            gold_label,
        });
    }
    Ok(reviews)
}

/// Renders reviews back to the CSV schema accepted by [`load_reviews`].
pub fn render_reviews_csv(reviews: &[Review]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["id", "text", "label"])
        .expect("csv write cannot fail");
    for review in reviews {
        let label = review.gold_label.map(|l| l.to_string()).unwrap_or_default();
        writer
            .write_record([review.id.as_str(), review.text.as_str(), label.as_str()])
            .expect("csv write cannot fail");
    }
    String::from_utf8(writer.into_inner().expect("csv flush cannot fail"))
        .expect("csv output is utf-8")
}

/// Per-class counts of a review corpus: (real, fake, unlabeled).
pub fn review_class_counts(reviews: &[Review]) -> (usize, usize, usize) {
    let mut real = 0;
    let mut fake = 0;
    let mut unlabeled = 0;
    for review in reviews {
        match review.gold_label {
            Some(Label::Real) => real += 1,
            Some(Label::Fake) => fake += 1,
            None => unlabeled += 1,
        }
    }
    (real, fake, unlabeled)
}

// ---------------------------------------------------------------------------
// Conversation JSONL loading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConversation {
    pub split: Split,
    pub conversation: Conversation,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Permit turns with empty text (they featurize to the zero vector).
    pub allow_empty_turn_text: bool,
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    speaker: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct ConversationRecord {
    id: String,
    split: Split,
    label: String,
    turns: Vec<TurnRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift_class: Option<String>,
}

/// Parses conversation JSONL: one object per line with `id`, `split`
/// (train/test), `label` (real/fake), `turns` as `{speaker, text}` in order,
/// and optional `drift_class` (benign/adversarial). Turn indices are
/// assigned by position.
pub fn load_conversations(path: impl AsRef<Path>) -> Result<Vec<LoadedConversation>, EvalError> {
    load_conversations_with(path, LoadOptions::default())
}

pub fn load_conversations_with(
    path: impl AsRef<Path>,
    options: LoadOptions,
) -> Result<Vec<LoadedConversation>, EvalError> {
    let text = std::fs::read_to_string(&path).map_err(|e| EvalError::Io(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = (i + 1) as u64;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConversationRecord =
            serde_json::from_str(line).map_err(|e| EvalError::MalformedLine {
                line: line_no,
                detail: e.to_string(),
            })?;
        if record.turns.is_empty() {
            return Err(EvalError::MalformedLine {
                line: line_no,
                detail: format!("conversation {} has no turns", record.id),
            });
        }
        let gold_label = record.label.parse::<Label>().map_err(|_| EvalError::UnknownLabel {
            line: line_no,
            value: record.label.clone(),
        })?;
        let gold_drift_class = match &record.drift_class {
            None => None,
            Some(raw) => Some(raw.parse::<DriftClass>().map_err(|_| EvalError::UnknownLabel {
                line: line_no,
                value: raw.clone(),
            })?),
        };
        let turns: Vec<Turn> = record
            .turns
            .into_iter()
            .enumerate()
            .map(|(index, t)| Turn {
                index,
                speaker: t.speaker,
                text: t.text,
            })
            .collect();
        if !options.allow_empty_turn_text {
            if let Some(bad) = turns.iter().find(|t| t.text.is_empty()) {
                return Err(EvalError::MalformedLine {
                    line: line_no,
                    detail: format!(
                        "turn {} of conversation {} has empty text",
                        bad.index, record.id
                    ),
                });
            }
        }
        out.push(LoadedConversation {
            split: record.split,
            conversation: Conversation {
                id: record.id,
                turns,
                gold_label: Some(gold_label),
                gold_drift_class,
            },
        });
    }
    Ok(out)
}

/// Renders conversations back to the JSONL schema accepted by
/// [`load_conversations`].
pub fn render_conversations_jsonl(convs: &[LoadedConversation]) -> String {
    let mut out = String::new();
    for loaded in convs {
        let conv = &loaded.conversation;
        let record = ConversationRecord {
            id: conv.id.clone(),
            split: loaded.split,
            label: conv.gold_label.map(|l| l.to_string()).unwrap_or_default(),
            turns: conv
                .turns
                .iter()
                .map(|t| TurnRecord {
                    speaker: t.speaker.clone(),
                    text: t.text.clone(),
                })
                .collect(),
            drift_class: conv.gold_drift_class.map(|c| c.to_string()),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Per-split class counts of a conversation corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub train_fake: usize,
    pub train_real: usize,
    pub test_fake: usize,
    pub test_real: usize,
}

pub fn split_counts(convs: &[LoadedConversation]) -> SplitCounts {
    let mut counts = SplitCounts::default();
    for loaded in convs {
        match (loaded.split, loaded.conversation.gold_label) {
            (Split::Train, Some(Label::Fake)) => counts.train_fake += 1,
            (Split::Train, _) => counts.train_real += 1,
            (Split::Test, Some(Label::Fake)) => counts.test_fake += 1,
            (Split::Test, _) => counts.test_real += 1,
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Run reports and comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunErrorRecord {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub backends: (String, String),
    pub dk_enabled: bool,
    pub dataset_digest: String,
    pub config_digest: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub error_count: usize,
    pub errors: Vec<RunErrorRecord>,
}

impl EvalReport {
    /// Builds a report; errored items are excluded from `counts` upstream
    /// and recorded here so outages cannot silently skew metrics. The run id
    /// is a digest of the run's identifying inputs, so identical runs get
    /// identical ids.
    pub fn build(
        backends: (String, String),
        dk_enabled: bool,
        dataset_digest: String,
        config_digest: String,
        counts: ConfusionCounts,
        errors: Vec<RunErrorRecord>,
    ) -> Result<Self, EvalError> {
        let metrics = metrics(&counts)?;
        let run_id = digest_bytes(
            format!(
                "{}|{}|{}|{}|{}",
                dataset_digest, config_digest, dk_enabled, backends.0, backends.1
            )
            .as_bytes(),
        );
        Ok(EvalReport {
            run_id,
            backends,
            dk_enabled,
            dataset_digest,
            config_digest,
            counts,
            metrics,
            error_count: errors.len(),
            errors,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("report serializes");
        json.push('\n');
        json
    }

    pub fn from_json_str(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Json(e.to_string()))
    }

    /// Human-readable aligned-text report with integer percentages.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "run {}  backends {}/{}  dk={}",
            self.run_id,
            self.backends.0,
            self.backends.1,
            if self.dk_enabled { "on" } else { "off" }
        );
        let _ = writeln!(
            out,
            "dataset {}  config {}",
            self.dataset_digest, self.config_digest
        );
        let _ = writeln!(
            out,
            "counts  tp={} fp={} fn={} tn={}  errors={}",
            self.counts.true_pos,
            self.counts.false_pos,
            self.counts.false_neg,
            self.counts.true_neg,
            self.error_count
        );
        let _ = writeln!(out, "{:<12} {:>10} {:>6}", "metric", "value", "%");
        for (name, value) in [
            ("accuracy", self.metrics.accuracy),
            ("precision", self.metrics.precision),
            ("recall", self.metrics.recall),
            ("f1", self.metrics.f1),
        ] {
            let _ = writeln!(out, "{name:<12} {value:>10.4} {:>6}", percent(value));
        }
        out
    }
}

/// Side-by-side metric comparison of two runs over the same dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

/// Compares two reports metric by metric (delta = b − a); both must cover
/// the same dataset.
pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<RunComparison, EvalError> {
    if a.dataset_digest != b.dataset_digest {
        return Err(EvalError::DatasetMismatch {
            a: a.dataset_digest.clone(),
            b: b.dataset_digest.clone(),
        });
    }
    let label = |r: &EvalReport, other: &EvalReport| {
        if r.dk_enabled != other.dk_enabled {
            if r.dk_enabled { "with-dk" } else { "without-dk" }.to_string()
        } else {
            format!("run-{}", r.run_id)
        }
    };
    let rows = [
        ("accuracy", a.metrics.accuracy, b.metrics.accuracy),
        ("precision", a.metrics.precision, b.metrics.precision),
        ("recall", a.metrics.recall, b.metrics.recall),
        ("f1", a.metrics.f1, b.metrics.f1),
    ]
    .into_iter()
    .map(|(metric, va, vb)| ComparisonRow {
        metric: metric.to_string(),
        a: va,
        b: vb,
        delta: vb - va,
    })
    .collect();
    Ok(RunComparison {
        label_a: label(a, b),
        label_b: label(b, a),
        rows,
    })
}

impl RunComparison {
    /// Two-block percentage table with signed deltas, with prior reported
    /// results appended for context.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>14} {:>14} {:>8}",
            "metric",
            format!("{} (%)", self.label_a),
            format!("{} (%)", self.label_b),
            "delta"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>14} {:>14} {:>+8}",
                row.metric,
                percent(row.a),
                percent(row.b),
                percent(row.b) - percent(row.a)
            );
        }
        out.push('\n');
        out.push_str(&render_reference_rows());
        out
    }
}

/// Prior reported results carried as constants for context in comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub name: &'static str,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub const REFERENCE_ROWS: [ReferenceRow; 2] = [
    ReferenceRow {
        name: "ensemble-knn-svm-impkmeans",
        accuracy: 0.82,
        precision: 0.83,
        recall: 0.82,
        f1: 0.82,
    },
    ReferenceRow {
        name: "dual-llm-dk-llama",
        accuracy: 0.98,
        precision: 0.98,
        recall: 0.98,
        f1: 0.98,
    },
];

pub fn render_reference_rows() -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>9} {:>10} {:>7} {:>9}",
        "prior reported results", "acc (%)", "prec (%)", "rec (%)", "f1 (%)"
    );
    for row in REFERENCE_ROWS {
        let _ = writeln!(
            out,
            "{:<28} {:>9} {:>10} {:>7} {:>9}",
            row.name,
            percent(row.accuracy),
            percent(row.precision),
            percent(row.recall),
            percent(row.f1)
        );
    }
    out
}

/// Verdicts rendered one JSON object per line, mirroring the verdict type
/// field for field.
pub fn render_verdicts_jsonl(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for verdict in verdicts {
        out.push_str(&serde_json::to_string(verdict).expect("verdict serializes"));
        out.push('\n');
    }
    out
}
