//! Operator entry point: pattern discovery, review screening, conversation
//! analysis, and report comparison.
//!
//! Exit codes: 0 success, 1 configuration or fatal error, 2 data or parse
//! error. All commands are idempotent given identical inputs and mock
//! backends.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{BackendBlock, RunConfig};
use driftguard_core::eval::{
    accumulate, compare_runs, digest_bytes, golds_from_conversations, load_conversations,
    load_reviews, render_verdicts_jsonl, review_class_counts, split_counts, EvalReport,
    RunErrorRecord, Split,
};
use driftguard_core::gateway::{BackendKind, ChatMessage, LlmBackend, MockRuleSet};
use driftguard_core::knowledge::{
    parse_pattern_library, render_discovery_prompt, seed_conversation_cues, seed_review_library,
    PatternLibrary, PromptTemplate, REVIEW_DOMAIN,
};
use driftguard_core::model::{Conversation, Label};
use driftguard_core::pipeline::{classify_review, run_corpus, train_normal_model, PipelineConfig};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "driftguard",
    version,
    about = "Deception screening and concept-drift analysis for reviews and conversations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover deception patterns from labeled reviews and write a library file
    DiscoverPatterns {
        /// Review CSV with header id,text,label
        #[arg(long)]
        input: PathBuf,
        /// Which configured backend to use: llm1, llm2, or a backend id
        #[arg(long)]
        backend: String,
        /// Optional template file overriding the built-in discovery prompt body
        #[arg(long)]
        template: Option<PathBuf>,
        /// Output library file (JSON)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Screen a review corpus and write an evaluation report
    ClassifyReviews {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Inject the review pattern library into prompts
        #[arg(long, conflicts_with = "no_dk")]
        dk: bool,
        /// Zero-shot prompts (default)
        #[arg(long)]
        no_dk: bool,
        /// Output prefix: writes <out>.report.json and <out>.report.txt
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the drift detector on the real train split, analyze the test
    /// split, and write verdicts plus an evaluation report
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Inject the conversation cue library into screening prompts
        #[arg(long, conflicts_with = "no_dk")]
        dk: bool,
        /// Zero-shot screening prompts (default)
        #[arg(long)]
        no_dk: bool,
        /// Output prefix: writes <out>.verdicts.jsonl, <out>.report.json,
        /// and <out>.report.txt
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two machine-readable reports metric by metric
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

/// Command failure with its exit classification.
enum CmdError {
    /// Configuration or fatal runtime problem (exit 1).
    Config(anyhow::Error),
    /// Input data or reply parsing problem (exit 2).
    Data(anyhow::Error),
}

type CmdResult = Result<(), CmdError>;

trait IntoCmd<T> {
    fn or_config(self) -> Result<T, CmdError>;
    fn or_data(self) -> Result<T, CmdError>;
}

impl<T, E: Into<anyhow::Error>> IntoCmd<T> for Result<T, E> {
    fn or_config(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Config(e.into()))
    }

    fn or_data(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Data(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DiscoverPatterns {
            input,
            backend,
            template,
            out,
            config,
        } => cmd_discover_patterns(&input, &backend, template.as_deref(), &out, &config),
        Command::ClassifyReviews {
            input,
            config,
            dk,
            no_dk: _,
            out,
        } => cmd_classify_reviews(&input, &config, dk, &out),
        Command::Analyze {
            input,
            config,
            dk,
            no_dk: _,
            out,
        } => cmd_analyze(&input, &config, dk, &out),
        Command::Compare { a, b } => cmd_compare(&a, &b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CmdError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn build_backend(block: &BackendBlock, mock_rules: MockRuleSet) -> Result<LlmBackend> {
    let descriptor = block.descriptor()?;
    let backend = match descriptor.kind {
        BackendKind::Http => LlmBackend::http(descriptor)?,
        BackendKind::Mock => LlmBackend::mock(descriptor, mock_rules)?,
    };
    Ok(backend)
}

fn select_block<'a>(cfg: &'a RunConfig, name: &str) -> Result<&'a BackendBlock> {
    match name {
        "llm1" => Ok(&cfg.llm1),
        "llm2" => Ok(&cfg.llm2),
        other if cfg.llm1.id == other => Ok(&cfg.llm1),
        other if cfg.llm2.id == other => Ok(&cfg.llm2),
        other => bail!("no backend named {other:?} (use llm1, llm2, or a configured id)"),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_discover_patterns(
    input: &Path,
    backend_name: &str,
    template_path: Option<&Path>,
    out: &Path,
    config_path: &Path,
) -> CmdResult {
    let cfg = RunConfig::load(config_path).or_config()?;
    let reviews = load_reviews(input).or_data()?;
    let labeled: Vec<_> = reviews
        .into_iter()
        .filter(|r| r.gold_label.is_some())
        .collect();

    let template = match template_path {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading template {}", path.display()))
                .or_config()?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "custom-discovery".to_string());
            PromptTemplate::new(id, body, PromptTemplate::builtin_discovery().output_contract)
                .or_config()?
        }
        None => PromptTemplate::builtin_discovery(),
    };

    let block = select_block(&cfg, backend_name).or_config()?;
    let backend =
        build_backend(block, MockRuleSet::discovery_canned(&seed_review_library())).or_config()?;

    let prompt = render_discovery_prompt(&labeled, &template).or_data()?;
    let reply = backend
        .complete(&[ChatMessage::user(prompt)])
        .or_config()?;
    let library = match parse_pattern_library(&reply, REVIEW_DOMAIN) {
        Ok(library) => library,
        Err(e) => {
            let dump = with_suffix(out, ".reply.txt");
            write_file(&dump, &reply).or_config()?;
            return Err(CmdError::Data(anyhow!(
                "discovery reply did not parse ({e}); raw reply dumped to {}",
                dump.display()
            )));
        }
    };
    library.save(out).or_config()?;
    println!(
        "library {} v{} written to {} ({} patterns, {} recommendations)",
        library.domain,
        library.version,
        out.display(),
        library.patterns.len(),
        library.recommendations.len()
    );
    Ok(())
}

fn load_library_or_seed(
    path: Option<&PathBuf>,
    seed: fn() -> PatternLibrary,
) -> Result<PatternLibrary, CmdError> {
    match path {
        Some(p) => PatternLibrary::load(p).or_data(),
        None => Ok(seed()),
    }
}

fn cmd_classify_reviews(input: &Path, config_path: &Path, dk: bool, out: &Path) -> CmdResult {
    let cfg = RunConfig::load(config_path).or_config()?;
    if dk && cfg.paths.review_library.is_none() {
        return Err(CmdError::Config(anyhow!(
            "--dk requires paths.review_library in the config"
        )));
    }
    let reviews = load_reviews(input).or_data()?;
    let (real, fake, unlabeled) = review_class_counts(&reviews);
    println!("loaded {} reviews: real={real} fake={fake} unlabeled={unlabeled}", reviews.len());

    let library = load_library_or_seed(cfg.paths.review_library.as_ref(), seed_review_library)?;
    let llm1 = build_backend(&cfg.llm1, MockRuleSet::classifier_from(&library)).or_config()?;
    let llm2 = build_backend(&cfg.llm2, MockRuleSet::drift_classifier()).or_config()?;
    let mut pipeline = PipelineConfig::new(llm1, llm2);
    pipeline.dk_enabled = dk;
    pipeline.review_library = Some(library);
    pipeline.featurizer = cfg.featurizer.to_config().or_config()?;
    pipeline.ocdd = cfg.ocdd.to_config().or_config()?;
    pipeline.parallelism = cfg.parallelism;

    let mut verdicts = Vec::new();
    let mut errors = Vec::new();
    for review in &reviews {
        match classify_review(review, &pipeline) {
            Ok(v) => verdicts.push(v),
            Err(e) => errors.push(RunErrorRecord {
                id: review.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    if !reviews.is_empty() && errors.len() == reviews.len() {
        return Err(CmdError::Config(anyhow!(
            "all {} rows failed; first error: {}",
            errors.len(),
            errors[0].error
        )));
    }

    let golds: HashMap<String, Label> = reviews
        .iter()
        .filter_map(|r| r.gold_label.map(|l| (r.id.clone(), l)))
        .collect();
    let scored: Vec<_> = verdicts
        .iter()
        .filter(|v| golds.contains_key(&v.conversation_id))
        .cloned()
        .collect();
    let counts = accumulate(&scored, &golds).or_data()?;
    let dataset_digest =
        digest_bytes(&std::fs::read(input).context("re-reading input").or_data()?);
    let report = EvalReport::build(
        pipeline.backend_ids(),
        dk,
        dataset_digest,
        pipeline.digest(),
        counts,
        errors,
    )
    .or_data()?;
    write_file(&with_suffix(out, ".report.json"), &report.to_json_string()).or_config()?;
    write_file(&with_suffix(out, ".report.txt"), &report.render_text()).or_config()?;
    print!("{}", report.render_text());
    Ok(())
}

fn cmd_analyze(input: &Path, config_path: &Path, dk: bool, out: &Path) -> CmdResult {
    let cfg = RunConfig::load(config_path).or_config()?;
    if dk && cfg.paths.conversation_library.is_none() {
        return Err(CmdError::Config(anyhow!(
            "--dk requires paths.conversation_library in the config"
        )));
    }
    let loaded = load_conversations(input).or_data()?;
    let counts = split_counts(&loaded);
    println!(
        "loaded {} conversations: train fake={} real={}, test fake={} real={}",
        loaded.len(),
        counts.train_fake,
        counts.train_real,
        counts.test_fake,
        counts.test_real
    );

    let library =
        load_library_or_seed(cfg.paths.conversation_library.as_ref(), seed_conversation_cues)?;
    let llm1 = build_backend(&cfg.llm1, MockRuleSet::classifier_from(&library)).or_config()?;
    let llm2 = build_backend(&cfg.llm2, MockRuleSet::drift_classifier()).or_config()?;
    let mut pipeline = PipelineConfig::new(llm1, llm2);
    pipeline.dk_enabled = dk;
    pipeline.conversation_library = Some(library);
    pipeline.featurizer = cfg.featurizer.to_config().or_config()?;
    pipeline.ocdd = cfg.ocdd.to_config().or_config()?;
    pipeline.parallelism = cfg.parallelism;

    let train: Vec<Conversation> = loaded
        .iter()
        .filter(|c| c.split == Split::Train && c.conversation.gold_label == Some(Label::Real))
        .map(|c| c.conversation.clone())
        .collect();
    let test: Vec<Conversation> = loaded
        .iter()
        .filter(|c| c.split == Split::Test)
        .map(|c| c.conversation.clone())
        .collect();

    let model = train_normal_model(&train, &pipeline).or_config()?;
    println!(
        "normal model fitted on {} turns from {} real train conversations",
        model.n_train,
        train.len()
    );
    let outcomes = run_corpus(&test, &model, &pipeline).or_config()?;

    let mut verdicts = Vec::new();
    let mut errors = Vec::new();
    for outcome in &outcomes {
        match &outcome.result {
            Ok(v) => verdicts.push(v.clone()),
            Err(e) => errors.push(RunErrorRecord {
                id: outcome.conversation_id.clone(),
                error: e.to_string(),
            }),
        }
    }

    let golds = golds_from_conversations(&test);
    let scored: Vec<_> = verdicts
        .iter()
        .filter(|v| golds.contains_key(&v.conversation_id))
        .cloned()
        .collect();
    let counts = accumulate(&scored, &golds).or_data()?;
    let dataset_digest =
        digest_bytes(&std::fs::read(input).context("re-reading input").or_data()?);
    let report = EvalReport::build(
        pipeline.backend_ids(),
        dk,
        dataset_digest,
        pipeline.digest(),
        counts,
        errors,
    )
    .or_data()?;

    write_file(&with_suffix(out, ".verdicts.jsonl"), &render_verdicts_jsonl(&verdicts))
        .or_config()?;
    write_file(&with_suffix(out, ".report.json"), &report.to_json_string()).or_config()?;
    write_file(&with_suffix(out, ".report.txt"), &report.render_text()).or_config()?;
    print!("{}", report.render_text());
    Ok(())
}

fn cmd_compare(a_path: &Path, b_path: &Path) -> CmdResult {
    let a = EvalReport::from_json_str(
        &std::fs::read_to_string(a_path)
            .with_context(|| format!("reading {}", a_path.display()))
            .or_data()?,
    )
    .or_data()?;
    let b = EvalReport::from_json_str(
        &std::fs::read_to_string(b_path)
            .with_context(|| format!("reading {}", b_path.display()))
            .or_data()?,
    )
    .or_data()?;
    let comparison = compare_runs(&a, &b).or_config()?;
    print!("{}", comparison.render_table());
    Ok(())
}
