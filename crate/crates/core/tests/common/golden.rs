//! The authored 20-conversation golden corpus: fixture loading, the mock
//! pipeline configuration it was designed against, and the expected
//! per-fixture outcomes.

use driftguard_core::eval::{
    accumulate, golds_from_conversations, load_conversations, render_verdicts_jsonl, EvalReport,
    Split,
};
use driftguard_core::gateway::{BackendDescriptor, LlmBackend, MockRuleSet};
use driftguard_core::knowledge::seed_conversation_cues;
use driftguard_core::model::{Conversation, DriftClass, Label, Verdict};
use driftguard_core::ocdd::OcddConfig;
use driftguard_core::ocsvm::{KernelConfig, KernelKind, OcsvmConfig};
use driftguard_core::pipeline::{run_corpus, train_normal_model, PipelineConfig};
use driftguard_core::FeaturizerConfig;

pub fn fixture_path() -> String {
    format!(
        "{}/tests/fixtures/conversations.jsonl",
        env!("CARGO_MANIFEST_DIR")
    )
}

pub fn golden_config() -> PipelineConfig {
    let cues = seed_conversation_cues();
    let llm1 = LlmBackend::mock(
        BackendDescriptor::mock("llm1-mock", "mock-screening"),
        MockRuleSet::classifier_from(&cues),
    )
    .unwrap();
    let llm2 = LlmBackend::mock(
        BackendDescriptor::mock("llm2-mock", "mock-drift"),
        MockRuleSet::drift_classifier(),
    )
    .unwrap();
    let mut cfg = PipelineConfig::new(llm1, llm2);
    cfg.dk_enabled = true;
    cfg.conversation_library = Some(cues);
    cfg.featurizer = FeaturizerConfig::new(10, [1], true).unwrap();
    cfg.ocdd = OcddConfig {
        window_size: 25,
        drift_threshold: 0.3,
        min_fill: 3,
        svm: OcsvmConfig {
            nu: 0.15,
            kernel: KernelConfig {
                kind: KernelKind::Rbf,
                gamma: 0.5,
            },
            tol: 1e-9,
            max_iter: 400_000,
        },
    };
    cfg
}

pub struct GoldenRun {
    pub verdicts_jsonl: String,
    pub report_json: String,
    pub llm1_calls: u64,
    pub llm2_calls: u64,
    pub verdicts: Vec<Verdict>,
    pub test_convs: Vec<Conversation>,
}

pub fn run_golden() -> GoldenRun {
    let loaded = load_conversations(fixture_path()).expect("fixture corpus loads");
    let train: Vec<Conversation> = loaded
        .iter()
        .filter(|c| c.split == Split::Train && c.conversation.gold_label == Some(Label::Real))
        .map(|c| c.conversation.clone())
        .collect();
    let test_convs: Vec<Conversation> = loaded
        .iter()
        .filter(|c| c.split == Split::Test)
        .map(|c| c.conversation.clone())
        .collect();
    assert_eq!(train.len(), 8);
    assert_eq!(test_convs.len(), 20);

    let cfg = golden_config();
    let model = train_normal_model(&train, &cfg).expect("training succeeds");
    assert_eq!(model.n_train, 22);
    let outcomes = run_corpus(&test_convs, &model, &cfg).expect("corpus run succeeds");

    let verdicts: Vec<Verdict> = outcomes
        .iter()
        .map(|o| o.result.as_ref().expect("no per-conversation errors").clone())
        .collect();
    let golds = golds_from_conversations(&test_convs);
    let counts = accumulate(&verdicts, &golds).expect("gold labels cover the corpus");
    let report = EvalReport::build(
        cfg.backend_ids(),
        cfg.dk_enabled,
        "fixture-corpus".into(),
        cfg.digest(),
        counts,
        vec![],
    )
    .expect("report builds");

    GoldenRun {
        verdicts_jsonl: render_verdicts_jsonl(&verdicts),
        report_json: report.to_json_string(),
        llm1_calls: cfg.llm1.calls(),
        llm2_calls: cfg.llm2.calls(),
        verdicts,
        test_convs,
    }
}

/// Expected outcome per fixture, from the window arithmetic the corpus was
/// authored around: the outlier ratio first reaches 0.3 at the third
/// shifted turn for the fraud fixtures (prefix 6 -> turn 8, prefix 5 ->
/// turn 7), at the second promo turn for the spam fixtures, and never for
/// the subtle ones.
pub const EXPECTED: [(&str, Label, Option<usize>, Option<DriftClass>); 20] = [
    ("real-1", Label::Real, None, None),
    ("real-2", Label::Real, None, None),
    ("real-3", Label::Real, None, None),
    ("real-4", Label::Real, None, None),
    ("real-5", Label::Real, None, None),
    ("real-6", Label::Real, None, None),
    ("real-7", Label::Real, None, None),
    ("real-8", Label::Real, None, None),
    ("real-9", Label::Real, None, None),
    ("real-10", Label::Real, None, None),
    ("fraud-1", Label::Fake, Some(8), Some(DriftClass::Adversarial)),
    ("fraud-2", Label::Fake, Some(7), Some(DriftClass::Adversarial)),
    ("fraud-3", Label::Fake, Some(8), Some(DriftClass::Adversarial)),
    ("fraud-4", Label::Fake, Some(7), Some(DriftClass::Adversarial)),
    ("fraud-5", Label::Fake, Some(8), Some(DriftClass::Adversarial)),
    ("fraud-6", Label::Fake, Some(7), Some(DriftClass::Adversarial)),
    ("spam-1", Label::Fake, Some(7), Some(DriftClass::Benign)),
    ("spam-2", Label::Fake, Some(7), Some(DriftClass::Benign)),
    ("subtle-1", Label::Fake, None, None),
    ("subtle-2", Label::Fake, None, None),
];
