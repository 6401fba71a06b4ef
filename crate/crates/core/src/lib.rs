//! Deception screening and concept-drift analysis for streaming dialogue.
//!
//! The pipeline screens reviews and multi-turn conversations with a
//! domain-knowledge-guided LLM, monitors flagged conversations for semantic
//! drift with a one-class SVM over hashed text features, and classifies a
//! detected drift as benign or adversarial with a second LLM. An evaluation
//! harness loads labeled corpora, tallies fake-positive binary metrics, and
//! compares with/without-knowledge runs.

pub mod eval;
pub mod featurize;
pub mod gateway;
pub mod knowledge;
pub mod model;
pub mod ocdd;
pub mod ocsvm;
pub mod pipeline;

pub use eval::{
    accumulate, compare_runs, load_conversations, load_reviews, metrics, ConfusionCounts,
    EvalError, EvalReport, Metrics, Split,
};
pub use featurize::{featurize, tokenize, FeatureVector, FeaturizerConfig};
pub use gateway::{
    parse_binary_verdict, parse_drift_class, BackendDescriptor, BackendKind, ChatMessage,
    GatewayError, LlmBackend, MockRuleSet,
};
pub use knowledge::{
    parse_pattern_library, render_classification_prompt, render_discovery_prompt,
    render_drift_prompt, seed_conversation_cues, seed_review_library, ClassifyInput, DkPattern,
    KnowledgeError, PatternLibrary, PromptTemplate,
};
pub use model::{Conversation, DriftClass, Label, ModelError, Review, Turn, Verdict};
pub use ocdd::{ocdd_init, ObserveResult, OcddConfig, OcddError, OcddState};
pub use ocsvm::{fit_ocsvm, kernel_eval, KernelConfig, KernelKind, OcsvmConfig, OcsvmError, OcsvmModel};
pub use pipeline::{
    analyze_conversation, classify_review, run_corpus, train_normal_model, ConvOutcome,
    PipelineConfig, PipelineError,
};
