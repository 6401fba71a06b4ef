//! Canonical data types shared by every stage of the pipeline.
//!
//! All types here are immutable values after construction and can be shared
//! freely across concurrent workers.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

/// A single utterance inside a [`Conversation`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// Position within the conversation, contiguous from 0.
    pub index: usize,
    /// Free-form role string, e.g. "attacker" or "target".
    pub speaker: String,
    pub text: String,
}

/// An ordered multi-turn dialogue with optional gold annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
    pub gold_label: Option<Label>,
    pub gold_drift_class: Option<DriftClass>,
}

/// A single-shot review record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub text: String,
    pub gold_label: Option<Label>,
}

/// Ground-truth / predicted class for deception screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Real => write!(f, "real"),
            Label::Fake => write!(f, "fake"),
        }
    }
}

impl FromStr for Label {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(ModelError::UnknownLabel(other.to_string())),
        }
    }
}

/// Nature of a detected semantic drift: benign covers spam-style pivots,
/// adversarial covers fraud, phishing and manipulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftClass {
    Benign,
    Adversarial,
}

impl fmt::Display for DriftClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftClass::Benign => write!(f, "benign"),
            DriftClass::Adversarial => write!(f, "adversarial"),
        }
    }
}

impl FromStr for DriftClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(DriftClass::Benign),
            "adversarial" => Ok(DriftClass::Adversarial),
            other => Err(ModelError::UnknownDriftClass(other.to_string())),
        }
    }
}

/// Per-conversation (or per-review) output of the pipeline.
///
/// Structural invariants, enforced by the constructors:
/// drift fields are present iff `drift_detected`, and a detected drift
/// implies a `Fake` label (drift detection only runs on flagged inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub conversation_id: String,
    pub label: Label,
    pub dk_enabled: bool,
    pub drift_detected: bool,
    pub drift_turn_index: Option<usize>,
    pub drift_class: Option<DriftClass>,
    pub rationale: String,
    /// (screening backend id, drift-classification backend id)
    pub backend_ids: (String, String),
}

impl Verdict {
    /// Verdict for an input screened as authentic: no drift fields.
    pub fn real(
        id: impl Into<String>,
        dk_enabled: bool,
        rationale: impl Into<String>,
        backend_ids: (String, String),
    ) -> Self {
        Verdict {
            conversation_id: id.into(),
            label: Label::Real,
            dk_enabled,
            drift_detected: false,
            drift_turn_index: None,
            drift_class: None,
            rationale: rationale.into(),
            backend_ids,
        }
    }

    /// Verdict for an input screened as deceptive with no drift located.
    pub fn fake_no_drift(
        id: impl Into<String>,
        dk_enabled: bool,
        rationale: impl Into<String>,
        backend_ids: (String, String),
    ) -> Self {
        Verdict {
            conversation_id: id.into(),
            label: Label::Fake,
            dk_enabled,
            drift_detected: false,
            drift_turn_index: None,
            drift_class: None,
            rationale: rationale.into(),
            backend_ids,
        }
    }

    /// Verdict for a deceptive input whose drift was located and classified.
    pub fn fake_with_drift(
        id: impl Into<String>,
        dk_enabled: bool,
        drift_turn_index: usize,
        drift_class: DriftClass,
        rationale: impl Into<String>,
        backend_ids: (String, String),
    ) -> Self {
        Verdict {
            conversation_id: id.into(),
            label: Label::Fake,
            dk_enabled,
            drift_detected: true,
            drift_turn_index: Some(drift_turn_index),
            drift_class: Some(drift_class),
            rationale: rationale.into(),
            backend_ids,
        }
    }

    /// Checks the structural invariants relating label and drift fields.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.drift_detected != self.drift_turn_index.is_some() {
            return Err(ModelError::InconsistentVerdict(
                "drift_turn_index must be present exactly when drift_detected".into(),
            ));
        }
        if self.drift_class.is_some() && !self.drift_detected {
            return Err(ModelError::InconsistentVerdict(
                "drift_class requires drift_detected".into(),
            ));
        }
        if self.drift_detected && self.label != Label::Fake {
            return Err(ModelError::InconsistentVerdict(
                "detected drift requires a fake label".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("conversation {0} has no turns")]
    EmptyTurns(String),
    #[error("conversation {id}: turn indices not contiguous from 0 (found {found} at position {position})")]
    NonContiguousIndices {
        id: String,
        position: usize,
        found: usize,
    },
    #[error("duplicate conversation id {0}")]
    DuplicateId(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown drift class {0:?}")]
    UnknownDriftClass(String),
    #[error("inconsistent verdict: {0}")]
    InconsistentVerdict(String),
}

impl Conversation {
    /// Validates turn invariants: non-empty and indices contiguous from 0.
    pub fn validate(&self) -> Result<(), ModelError> {
        validate_conversation(self).map(|_| ())
    }
}

/// Returns the conversation iff its turns are non-empty and indexed
/// contiguously from 0.
pub fn validate_conversation(conv: &Conversation) -> Result<&Conversation, ModelError> {
    if conv.turns.is_empty() {
        return Err(ModelError::EmptyTurns(conv.id.clone()));
    }
    for (position, turn) in conv.turns.iter().enumerate() {
        if turn.index != position {
            return Err(ModelError::NonContiguousIndices {
                id: conv.id.clone(),
                position,
                found: turn.index,
            });
        }
    }
    Ok(conv)
}

/// Dataset-level validation: every conversation valid and ids unique.
pub fn validate_dataset(convs: &[Conversation]) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for conv in convs {
        conv.validate()?;
        if !seen.insert(conv.id.as_str()) {
            return Err(ModelError::DuplicateId(conv.id.clone()));
        }
    }
    Ok(())
}
