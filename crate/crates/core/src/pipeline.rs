//! Dual-phase orchestration: deception screening, drift detection over the
//! flagged conversation's turns, and drift classification.
//!
//! Routing contract: the drift detector runs only on conversations the
//! screening backend flags as fake, and the drift-classification backend is
//! called only when the detector fires. A fake conversation with no located
//! drift keeps its fake label with the drift fields absent.

use crate::featurize::{featurize, FeaturizerConfig};
use crate::gateway::{
    parse_binary_verdict, parse_drift_class, ChatMessage, GatewayError, LlmBackend,
};
use crate::knowledge::{
    render_classification_prompt, render_drift_prompt, seed_conversation_cues, ClassifyInput,
    KnowledgeError, PatternLibrary, PromptTemplate,
};
use crate::model::{Conversation, Label, ModelError, Review, Verdict};
use crate::ocdd::{OcddConfig, OcddError, OcddState};
use crate::ocsvm::{fit_ocsvm, OcsvmError, OcsvmModel};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub struct PipelineConfig {
    pub llm1: LlmBackend,
    pub llm2: LlmBackend,
    pub dk_enabled: bool,
    pub review_library: Option<PatternLibrary>,
    pub conversation_library: Option<PatternLibrary>,
    pub ocdd: OcddConfig,
    pub featurizer: FeaturizerConfig,
    pub parallelism: usize,
    pub classify_template: PromptTemplate,
    pub drift_template: PromptTemplate,
}

impl PipelineConfig {
    pub fn new(llm1: LlmBackend, llm2: LlmBackend) -> Self {
        PipelineConfig {
            llm1,
            llm2,
            dk_enabled: false,
            review_library: None,
            conversation_library: None,
            ocdd: OcddConfig::default(),
            featurizer: FeaturizerConfig::default(),
            parallelism: 4,
            classify_template: PromptTemplate::builtin_classification(),
            drift_template: PromptTemplate::builtin_drift(),
        }
    }

    pub fn backend_ids(&self) -> (String, String) {
        (self.llm1.id().to_string(), self.llm2.id().to_string())
    }

    /// Deterministic digest over everything that shapes verdicts: backends,
    /// knowledge versions, detector and featurizer settings, templates.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({
            "llm1": {"id": self.llm1.id(), "model": self.llm1.descriptor().model_name},
            "llm2": {"id": self.llm2.id(), "model": self.llm2.descriptor().model_name},
            "dk_enabled": self.dk_enabled,
            "review_library": self.review_library.as_ref().map(|l| l.version.clone()),
            "conversation_library": self.conversation_library.as_ref().map(|l| l.version.clone()),
            "ocdd": serde_json::to_value(&self.ocdd).expect("config serializes"),
            "featurizer": serde_json::to_value(&self.featurizer).expect("config serializes"),
            "classify_template": self.classify_template.id,
            "drift_template": self.drift_template.id,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Screening,
    DriftDetection,
    DriftClassification,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Screening => write!(f, "screening"),
            Stage::DriftDetection => write!(f, "drift-detection"),
            Stage::DriftClassification => write!(f, "drift-classification"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PipelineError {
    #[error("[{stage}] {id}: {source}")]
    Gateway {
        stage: Stage,
        id: String,
        source: GatewayError,
    },
    #[error("[{stage}] {id}: {source}")]
    Knowledge {
        stage: Stage,
        id: String,
        source: KnowledgeError,
    },
    #[error("[drift-detection] {id}: {source}")]
    Drift { id: String, source: OcddError },
    #[error("{id}: {source}")]
    InvalidConversation { id: String, source: ModelError },
    #[error("training conversation {0} is not labeled real")]
    NonRealTrainingConversation(String),
    #[error("training conversations contain no non-empty turns")]
    EmptyTrainingSet,
    #[error(transparent)]
    Svm(#[from] OcsvmError),
    #[error("model dimension {model} does not match featurizer dimension {featurizer}")]
    ModelDimensionMismatch { model: usize, featurizer: usize },
    #[error("duplicate conversation id {0}")]
    DuplicateId(String),
}

impl Stage {
    fn gateway(self, id: &str) -> impl FnOnce(GatewayError) -> PipelineError + '_ {
        move |source| PipelineError::Gateway {
            stage: self,
            id: id.to_string(),
            source,
        }
    }

    fn knowledge(self, id: &str) -> impl FnOnce(KnowledgeError) -> PipelineError + '_ {
        move |source| PipelineError::Knowledge {
            stage: self,
            id: id.to_string(),
            source,
        }
    }
}

/// Screens a single review through the screening backend.
pub fn classify_review(review: &Review, cfg: &PipelineConfig) -> Result<Verdict, PipelineError> {
    let prompt = render_classification_prompt(
        ClassifyInput::Review(review),
        cfg.review_library.as_ref(),
        cfg.dk_enabled,
        &cfg.classify_template,
    )
    .map_err(Stage::Screening.knowledge(&review.id))?;
    let reply = cfg
        .llm1
        .complete(&[ChatMessage::user(prompt)])
        .map_err(Stage::Screening.gateway(&review.id))?;
    let label = parse_binary_verdict(&reply).map_err(Stage::Screening.gateway(&review.id))?;
    let verdict = match label {
        Label::Fake => Verdict::fake_no_drift(&review.id, cfg.dk_enabled, reply, cfg.backend_ids()),
        Label::Real => Verdict::real(&review.id, cfg.dk_enabled, reply, cfg.backend_ids()),
    };
    Ok(verdict)
}

/// Featurizes every non-empty turn of the real-labeled training
/// conversations and fits the normal-behavior model.
pub fn train_normal_model(
    training_convs: &[Conversation],
    cfg: &PipelineConfig,
) -> Result<OcsvmModel, PipelineError> {
    let mut vectors = Vec::new();
    for conv in training_convs {
        conv.validate()
            .map_err(|source| PipelineError::InvalidConversation {
                id: conv.id.clone(),
                source,
            })?;
        if conv.gold_label != Some(Label::Real) {
            return Err(PipelineError::NonRealTrainingConversation(conv.id.clone()));
        }
        for turn in &conv.turns {
            let v = featurize(&turn.text, &cfg.featurizer);
            if !v.is_zero() {
                vectors.push(v);
            }
        }
    }
    if vectors.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    Ok(fit_ocsvm(&vectors, &cfg.ocdd.svm)?)
}

fn drift_library(cfg: &PipelineConfig) -> PatternLibrary {
    // The drift prompt injects conversation cues unconditionally; the
    // with/without-DK toggle varies only the screening prompt.
    cfg.conversation_library
        .clone()
        .unwrap_or_else(seed_conversation_cues)
}

/// Runs the three-stage analysis on one conversation.
pub fn analyze_conversation(
    conv: &Conversation,
    model: &OcsvmModel,
    cfg: &PipelineConfig,
) -> Result<Verdict, PipelineError> {
    conv.validate()
        .map_err(|source| PipelineError::InvalidConversation {
            id: conv.id.clone(),
            source,
        })?;
    if let Some(sv) = model.support_points.first() {
        if sv.dim() != cfg.featurizer.dim() {
            return Err(PipelineError::ModelDimensionMismatch {
                model: sv.dim(),
                featurizer: cfg.featurizer.dim(),
            });
        }
    }

    // Stage 1: whole-conversation deception screening.
    let prompt = render_classification_prompt(
        ClassifyInput::Conversation(conv),
        cfg.conversation_library.as_ref(),
        cfg.dk_enabled,
        &cfg.classify_template,
    )
    .map_err(Stage::Screening.knowledge(&conv.id))?;
    let reply = cfg
        .llm1
        .complete(&[ChatMessage::user(prompt)])
        .map_err(Stage::Screening.gateway(&conv.id))?;
    let label = parse_binary_verdict(&reply).map_err(Stage::Screening.gateway(&conv.id))?;
    if label == Label::Real {
        return Ok(Verdict::real(&conv.id, cfg.dk_enabled, reply, cfg.backend_ids()));
    }

    // Stage 2: drift detection over the flagged conversation's turn stream.
    let mut state = OcddState::from_model(model, cfg.ocdd.clone())
        .map_err(|source| PipelineError::Drift {
            id: conv.id.clone(),
            source,
        })?;
    let mut drift_turn = None;
    for turn in &conv.turns {
        let vector = featurize(&turn.text, &cfg.featurizer);
        let result = state.observe(&vector).map_err(|source| PipelineError::Drift {
            id: conv.id.clone(),
            source,
        })?;
        if result.drift_fired {
            drift_turn = Some(turn.index);
            break;
        }
    }
    let drift_turn = match drift_turn {
        Some(t) => t,
        None => {
            return Ok(Verdict::fake_no_drift(
                &conv.id,
                cfg.dk_enabled,
                reply,
                cfg.backend_ids(),
            ))
        }
    };

    // Stage 3: drift classification by the second backend.
    let library = drift_library(cfg);
    let drift_prompt = render_drift_prompt(conv, drift_turn, &library, &cfg.drift_template)
        .map_err(Stage::DriftClassification.knowledge(&conv.id))?;
    let drift_reply = cfg
        .llm2
        .complete(&[ChatMessage::user(drift_prompt)])
        .map_err(Stage::DriftClassification.gateway(&conv.id))?;
    let (class, rationale) =
        parse_drift_class(&drift_reply).map_err(Stage::DriftClassification.gateway(&conv.id))?;
    Ok(Verdict::fake_with_drift(
        &conv.id,
        cfg.dk_enabled,
        drift_turn,
        class,
        rationale,
        cfg.backend_ids(),
    ))
}

/// Analysis outcome for one conversation of a corpus run.
#[derive(Debug)]
pub struct ConvOutcome {
    pub conversation_id: String,
    pub result: Result<Verdict, PipelineError>,
}

/// Analyzes a corpus with up to `cfg.parallelism` conversations in flight.
/// Output order matches input order regardless of completion order, and
/// per-conversation errors are captured without aborting the run.
pub fn run_corpus(
    convs: &[Conversation],
    model: &OcsvmModel,
    cfg: &PipelineConfig,
) -> Result<Vec<ConvOutcome>, PipelineError> {
    let mut seen = HashSet::new();
    for conv in convs {
        if !seen.insert(conv.id.as_str()) {
            return Err(PipelineError::DuplicateId(conv.id.clone()));
        }
    }

    let workers = cfg.parallelism.max(1).min(convs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ConvOutcome>>> =
        Mutex::new((0..convs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= convs.len() {
                    break;
                }
                let conv = &convs[i];
                let outcome = ConvOutcome {
                    conversation_id: conv.id.clone(),
                    result: analyze_conversation(conv, model, cfg),
                };
                slots.lock().expect("slots poisoned")[i] = Some(outcome);
            });
        }
    });

    let outcomes = slots
        .into_inner()
        .expect("slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every slot filled"))
        .collect();
    Ok(outcomes)
}
