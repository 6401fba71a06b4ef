//! Domain-knowledge pattern libraries and prompt rendering.
//!
//! A [`PatternLibrary`] is the structured knowledge injected into prompts:
//! named deception patterns with a one-line description, an illustrative
//! snippet, and optional lowercase cue terms (used by the mock backend and
//! reporting). Libraries render to and parse from a fenced machine-readable
//! block, and persist as versioned JSON files whose version string is a
//! content-hash prefix, so runs record exactly which knowledge was injected.

use crate::model::{Conversation, Review};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const REVIEW_DOMAIN: &str = "reviews";
pub const CONVERSATION_DOMAIN: &str = "conversations";

const PATTERNS_PLACEHOLDER: &str = "{patterns}";
const INPUT_PLACEHOLDER: &str = "{input}";

/// Marker appended to the drifted turn in drift-classification prompts.
pub const DRIFT_MARKER: &str = "[drift detected here]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DkPattern {
    pub name: String,
    pub description: String,
    pub example: String,
    pub cue_terms: Vec<String>,
}

impl DkPattern {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        example: impl Into<String>,
        cue_terms: &[&str],
    ) -> Self {
        DkPattern {
            name: name.into(),
            description: description.into(),
            example: example.into(),
            cue_terms: cue_terms
                .iter()
                .map(|t| t.trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternLibrary {
    pub domain: String,
    /// Content-hash prefix over (domain, patterns, recommendations).
    pub version: String,
    pub patterns: Vec<DkPattern>,
    pub recommendations: Vec<String>,
}

impl PatternLibrary {
    /// Builds a library and stamps its content-derived version.
    pub fn new(
        domain: impl Into<String>,
        patterns: Vec<DkPattern>,
        recommendations: Vec<String>,
    ) -> Result<Self, KnowledgeError> {
        let domain = domain.into();
        for (i, p) in patterns.iter().enumerate() {
            if p.name.trim().is_empty() {
                return Err(KnowledgeError::EmptyPatternName);
            }
            if patterns[..i].iter().any(|q| q.name == p.name) {
                return Err(KnowledgeError::DuplicatePatternName(p.name.clone()));
            }
        }
        let version = content_version(&domain, &patterns, &recommendations);
        Ok(PatternLibrary {
            domain,
            version,
            patterns,
            recommendations,
        })
    }

    /// Renders the library as the fenced machine-readable block understood
    /// by [`parse_pattern_library`].
    pub fn render_fenced(&self) -> String {
        let mut out = String::from("```patterns\n");
        for p in &self.patterns {
            let _ = writeln!(out, "- name: {}", p.name);
            let _ = writeln!(out, "  description: {}", p.description);
            let _ = writeln!(out, "  example: {}", p.example);
            if !p.cue_terms.is_empty() {
                let _ = writeln!(out, "  cues: {}", p.cue_terms.join("; "));
            }
        }
        if !self.recommendations.is_empty() {
            out.push_str("recommendations:\n");
            for r in &self.recommendations {
                let _ = writeln!(out, "- {r}");
            }
        }
        out.push_str("```\n");
        out
    }

    /// Library rendered for the `{patterns}` prompt slot: one bullet per
    /// pattern with name, description and example.
    pub fn render_prompt_slot(&self) -> String {
        let mut out = String::from("Known deception patterns to weigh:\n");
        for p in &self.patterns {
            let _ = writeln!(out, "- {}: {} Example: {}", p.name, p.description, p.example);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let json = serde_json::to_string_pretty(self).expect("library serialization cannot fail");
        std::fs::write(path, json + "\n").map_err(|e| KnowledgeError::Io(e.to_string()))
    }

    /// Loads a library file and restamps its version from content, so a
    /// hand-edited file cannot carry a stale version string.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let text =
            std::fs::read_to_string(&path).map_err(|e| KnowledgeError::Io(e.to_string()))?;
        let parsed: PatternLibrary =
            serde_json::from_str(&text).map_err(|e| KnowledgeError::Json(e.to_string()))?;
        let restamped =
            PatternLibrary::new(parsed.domain, parsed.patterns, parsed.recommendations)?;
        if restamped.version != parsed.version {
            log::warn!(
                "library {} version restamped {} -> {} (content changed on disk)",
                path.as_ref().display(),
                parsed.version,
                restamped.version
            );
        }
        Ok(restamped)
    }
}

fn content_version(domain: &str, patterns: &[DkPattern], recommendations: &[String]) -> String {
    let canonical = serde_json::to_string(&(domain, patterns, recommendations))
        .expect("canonical serialization cannot fail");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(12);
    for b in digest.iter().take(6) {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// The built-in review-deception library: eight categories of fabricated
/// review writing plus detection recommendations.
pub fn seed_review_library() -> PatternLibrary {
    let patterns = vec![
        DkPattern::new(
            "Overly Positive Reviews",
            "Exaggerated praise with superlatives.",
            "Best experience ever! Everything was perfect!",
            &["best experience ever", "everything was perfect", "absolutely amazing"],
        ),
        DkPattern::new(
            "Copy-Pasted Content",
            "Reused text across platforms.",
            "Generic review found verbatim in multiple places.",
            &["verbatim"],
        ),
        DkPattern::new(
            "Fake Expert Claims",
            "Posing as professionals without credibility.",
            "As a food critic, I guarantee...",
            &["as a food critic", "i guarantee", "as an expert"],
        ),
        DkPattern::new(
            "Buzzword Overuse",
            "Trendy terms lacking substance.",
            "Instagrammable, artisanal, obsessed!",
            &["instagrammable", "artisanal"],
        ),
        DkPattern::new(
            "Unnatural Language",
            "Awkward or overly formal phrasing.",
            "I am pleased to report...",
            &["i am pleased to report"],
        ),
        DkPattern::new(
            "Inconsistent Sentiment",
            "Mixed praise and criticism.",
            "Great food but terrible experience.",
            &["but terrible"],
        ),
        DkPattern::new(
            "Suspicious Timing",
            "Multiple reviews in short bursts.",
            "Clustered 5-star reviews within 24 hours.",
            &[],
        ),
        DkPattern::new(
            "Lack of Details",
            "Vague statements with no specifics.",
            "It was good. I recommend it.",
            &["i recommend it"],
        ),
    ];
    let recommendations = vec![
        "Flag exaggerated or robotic phrasing.".to_string(),
        "Detect inconsistent sentiment within a single review.".to_string(),
        "Analyze timestamps for clustered activity.".to_string(),
        "Flag review bursts during unusual hours.".to_string(),
        "Identify tonal contradictions or extreme polarity.".to_string(),
        "Flag reviews exhibiting abrupt emotional shifts.".to_string(),
        "Detect vague or generic reviews lacking concrete details.".to_string(),
        "Compare sentiment with peer reviews for deviation.".to_string(),
        "Watch for overuse of superlatives and generic enthusiasm with no substance.".to_string(),
        "Watch for contradictory claims without logical support.".to_string(),
        "Use labeled review patterns to train supervised models.".to_string(),
        "Incorporate curated pattern cues as structured prompt input.".to_string(),
    ];
    PatternLibrary::new(REVIEW_DOMAIN, patterns, recommendations)
        .expect("seed review library is well-formed")
}

/// The built-in conversation-cue library: the four manipulative-dialogue
/// signals injected into screening and drift-classification prompts.
///
/// Cue terms are deliberately chosen so that none of them occurs inside the
/// library's own rendered text; a mock backend keyed on these terms then
/// reacts only to conversation content, never to the injected knowledge.
pub fn seed_conversation_cues() -> PatternLibrary {
    let patterns = vec![
        DkPattern::new(
            "Excessive Flattery",
            "Excessive flattery or persuasive language aimed at building misplaced trust.",
            "Someone with your background deserves a much bigger platform, and I can make that happen.",
            &["so impressed by your work", "perfect candidate"],
        ),
        DkPattern::new(
            "PII Request",
            "Requests for personally identifiable information (PII) such as credentials or card details.",
            "Before we continue I will need your full name and the number on file, purely for verification.",
            &["credit card", "social security number", "account password"],
        ),
        DkPattern::new(
            "Payment Urgency",
            "Expressions of urgency related to payment or access.",
            "The enrollment window closes tonight, so settle the fee right away or lose the slot.",
            &["wire transfer", "activation fee", "pay immediately"],
        ),
        DkPattern::new(
            "Abrupt Topic Shift",
            "Abrupt or unnatural shifts in tone or topic that steer the dialogue.",
            "Forget the survey for a moment, which bank do you use day to day?",
            &["quick favor", "one small favor"],
        ),
    ];
    PatternLibrary::new(CONVERSATION_DOMAIN, patterns, Vec::new())
        .expect("seed conversation cues are well-formed")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    /// Body with `{patterns}` and/or `{input}` placeholders, each at most once.
    pub body: String,
    /// Reply-format instruction appended after the substituted body.
    pub output_contract: String,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        body: impl Into<String>,
        output_contract: impl Into<String>,
    ) -> Result<Self, KnowledgeError> {
        let template = PromptTemplate {
            id: id.into(),
            body: body.into(),
            output_contract: output_contract.into(),
        };
        for placeholder in [PATTERNS_PLACEHOLDER, INPUT_PLACEHOLDER] {
            if template.body.matches(placeholder).count() > 1 {
                return Err(KnowledgeError::DuplicatePlaceholder {
                    template_id: template.id.clone(),
                    placeholder: placeholder.to_string(),
                });
            }
        }
        if !template.body.contains(INPUT_PLACEHOLDER) {
            return Err(KnowledgeError::MissingPlaceholder {
                template_id: template.id.clone(),
                placeholder: INPUT_PLACEHOLDER.to_string(),
            });
        }
        Ok(template)
    }

    pub fn builtin_discovery() -> Self {
        PromptTemplate::new(
            "discovery-v1",
            "You are building a catalogue of recurring characteristics that separate deceptive \
             writing from authentic writing on online platforms.\n\n\
             Labeled examples:\n{input}\n\
             Compare the fake and real examples above and identify the recurring categories of \
             deceptive writing they reveal.",
            "Reply with exactly one fenced code block opening with ```patterns and closing with \
             ```. Inside it, list one entry per category:\n\
             - name: <category name>\n\
             \x20 description: <one sentence>\n\
             \x20 example: <short illustrative snippet>\n\
             An entry may add a line `cues: term; term` with lowercase indicator phrases. After \
             the entries you may add a section starting with `recommendations:` followed by \
             `- <action>` lines.",
        )
        .expect("builtin discovery template is well-formed")
    }

    pub fn builtin_classification() -> Self {
        PromptTemplate::new(
            "classify-v1",
            "You are a deception-detection system for online platforms.\n\
             {patterns}\n\
             Input to classify:\n{input}",
            "Respond with exactly one word: True if the input is fake, or False if it is real.",
        )
        .expect("builtin classification template is well-formed")
    }

    pub fn builtin_drift() -> Self {
        PromptTemplate::new(
            "drift-v1",
            "You are reviewing a multi-turn conversation in which the monitored topic profile \
             shifted partway through.\n\
             {patterns}\n\
             Conversation, with the shift location marked:\n{input}\n\
             Decide whether the marked shift is a fraudulent attempt (for example phishing, a \
             scam, manipulation, or extraction of sensitive details) or spamming (for example \
             unsolicited repetition or irrelevant advertising), and explain the clues behind \
             your decision.",
            "End with one sentence that names your conclusion explicitly as either fraudulent \
             or spamming.",
        )
        .expect("builtin drift template is well-formed")
    }

    fn render(&self, substitutions: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body.as_str();
        loop {
            let next = substitutions
                .iter()
                .filter_map(|(ph, val)| rest.find(ph).map(|pos| (pos, *ph, *val)))
                .min_by_key(|(pos, ..)| *pos);
            match next {
                Some((pos, ph, val)) => {
                    out.push_str(&rest[..pos]);
                    out.push_str(val);
                    rest = &rest[pos + ph.len()..];
                }
                None => {
                    out.push_str(rest);
                    break;
                }
            }
        }
        let mut prompt = out.trim_end().to_string();
        prompt.push_str("\n\n");
        prompt.push_str(&self.output_contract);
        prompt.push('\n');
        prompt
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KnowledgeError {
    #[error("no labeled examples supplied")]
    EmptyExamples,
    #[error("example {0} has no gold label")]
    UnlabeledExample(String),
    #[error("reply contains no fenced block")]
    NoFencedBlock,
    #[error("malformed entry at line {line}: {detail}")]
    MalformedEntry { line: usize, detail: String },
    #[error("fenced block contains no pattern entries")]
    EmptyLibrary,
    #[error("pattern name must be non-empty")]
    EmptyPatternName,
    #[error("duplicate pattern name {0:?}")]
    DuplicatePatternName(String),
    #[error("domain knowledge enabled but no pattern library supplied")]
    MissingLibrary,
    #[error("drift turn index {index} out of range for {len} turns")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("template {template_id} lacks required placeholder {placeholder}")]
    MissingPlaceholder {
        template_id: String,
        placeholder: String,
    },
    #[error("template {template_id} repeats placeholder {placeholder}")]
    DuplicatePlaceholder {
        template_id: String,
        placeholder: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

/// Renders the pattern-discovery prompt over labeled example reviews.
pub fn render_discovery_prompt(
    examples: &[Review],
    template: &PromptTemplate,
) -> Result<String, KnowledgeError> {
    if examples.is_empty() {
        return Err(KnowledgeError::EmptyExamples);
    }
    let mut input = String::new();
    for review in examples {
        let label = review
            .gold_label
            .ok_or_else(|| KnowledgeError::UnlabeledExample(review.id.clone()))?;
        let _ = writeln!(input, "[{label}] {}", review.text);
    }
    Ok(template.render(&[(INPUT_PLACEHOLDER, input.trim_end())]))
}

/// Input accepted by the screening prompt: a single review or a whole
/// conversation rendered as `speaker: text` lines in turn order.
#[derive(Debug, Clone, Copy)]
pub enum ClassifyInput<'a> {
    Review(&'a Review),
    Conversation(&'a Conversation),
}

fn render_conversation_lines(conv: &Conversation, marked: Option<usize>) -> String {
    let mut out = String::new();
    for turn in &conv.turns {
        if Some(turn.index) == marked {
            let _ = writeln!(out, "{}: {}   <== {DRIFT_MARKER}", turn.speaker, turn.text);
        } else {
            let _ = writeln!(out, "{}: {}", turn.speaker, turn.text);
        }
    }
    out.trim_end().to_string()
}

/// Renders the fake/real screening prompt. With domain knowledge disabled
/// the `{patterns}` slot is substituted with an empty string, so zero-shot
/// and DK prompts differ only in that region.
pub fn render_classification_prompt(
    input: ClassifyInput<'_>,
    library: Option<&PatternLibrary>,
    dk_enabled: bool,
    template: &PromptTemplate,
) -> Result<String, KnowledgeError> {
    if !template.body.contains(PATTERNS_PLACEHOLDER) {
        return Err(KnowledgeError::MissingPlaceholder {
            template_id: template.id.clone(),
            placeholder: PATTERNS_PLACEHOLDER.to_string(),
        });
    }
    let patterns = if dk_enabled {
        library
            .ok_or(KnowledgeError::MissingLibrary)?
            .render_prompt_slot()
    } else {
        String::new()
    };
    let input_text = match input {
        ClassifyInput::Review(review) => review.text.clone(),
        ClassifyInput::Conversation(conv) => render_conversation_lines(conv, None),
    };
    Ok(template.render(&[
        (PATTERNS_PLACEHOLDER, patterns.trim_end()),
        (INPUT_PLACEHOLDER, input_text.as_str()),
    ]))
}

/// Renders the drift-classification prompt: the full conversation with the
/// drifted turn marked, conversation cues injected, and an instruction to
/// classify the shift as fraudulent or spamming with reasoning.
pub fn render_drift_prompt(
    conv: &Conversation,
    drift_turn_index: usize,
    library: &PatternLibrary,
    template: &PromptTemplate,
) -> Result<String, KnowledgeError> {
    if drift_turn_index >= conv.turns.len() {
        return Err(KnowledgeError::IndexOutOfRange {
            index: drift_turn_index,
            len: conv.turns.len(),
        });
    }
    if !template.body.contains(PATTERNS_PLACEHOLDER) {
        return Err(KnowledgeError::MissingPlaceholder {
            template_id: template.id.clone(),
            placeholder: PATTERNS_PLACEHOLDER.to_string(),
        });
    }
    let patterns = library.render_prompt_slot();
    let input_text = render_conversation_lines(conv, Some(drift_turn_index));
    Ok(template.render(&[
        (PATTERNS_PLACEHOLDER, patterns.trim_end()),
        (INPUT_PLACEHOLDER, input_text.as_str()),
    ]))
}

/// Extracts the first fenced block from an LLM reply and parses one pattern
/// per `- name:` entry, with an optional trailing `recommendations:` section.
pub fn parse_pattern_library(
    llm_text: &str,
    domain: &str,
) -> Result<PatternLibrary, KnowledgeError> {
    let mut fence_open = false;
    let mut fence_closed = false;
    // (absolute 1-based line number, line)
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (i, line) in llm_text.lines().enumerate() {
        let trimmed = line.trim_start();
        if !fence_open {
            if trimmed.starts_with("```") {
                fence_open = true;
            }
            continue;
        }
        if trimmed.starts_with("```") {
            fence_closed = true;
            break;
        }
        block.push((i + 1, line));
    }
    if !fence_open || !fence_closed {
        return Err(KnowledgeError::NoFencedBlock);
    }

    struct PartialEntry {
        line: usize,
        name: String,
        description: Option<String>,
        example: Option<String>,
        cue_terms: Vec<String>,
    }

    fn flush(entry: PartialEntry, out: &mut Vec<DkPattern>) -> Result<(), KnowledgeError> {
        let description = entry.description.ok_or(KnowledgeError::MalformedEntry {
            line: entry.line,
            detail: format!("entry {:?} lacks a description line", entry.name),
        })?;
        let example = entry.example.ok_or(KnowledgeError::MalformedEntry {
            line: entry.line,
            detail: format!("entry {:?} lacks an example line", entry.name),
        })?;
        out.push(DkPattern {
            name: entry.name,
            description,
            example,
            cue_terms: entry.cue_terms,
        });
        Ok(())
    }

    let mut patterns: Vec<DkPattern> = Vec::new();
    let mut recommendations: Vec<String> = Vec::new();
    let mut current: Option<PartialEntry> = None;
    let mut in_recommendations = false;

    for (line_no, raw) in block {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !in_recommendations && line == "recommendations:" {
            if let Some(entry) = current.take() {
                flush(entry, &mut patterns)?;
            }
            in_recommendations = true;
            continue;
        }
        if in_recommendations {
            match line.strip_prefix("- ") {
                Some(rec) => recommendations.push(rec.trim().to_string()),
                None => {
                    return Err(KnowledgeError::MalformedEntry {
                        line: line_no,
                        detail: "expected '- <recommendation>'".into(),
                    })
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("- name:") {
            if let Some(entry) = current.take() {
                flush(entry, &mut patterns)?;
            }
            let name = rest.trim();
            if name.is_empty() {
                return Err(KnowledgeError::MalformedEntry {
                    line: line_no,
                    detail: "empty pattern name".into(),
                });
            }
            current = Some(PartialEntry {
                line: line_no,
                name: name.to_string(),
                description: None,
                example: None,
                cue_terms: Vec::new(),
            });
            continue;
        }
        let entry = current
            .as_mut()
            .ok_or_else(|| KnowledgeError::MalformedEntry {
                line: line_no,
                detail: "field line before any '- name:' entry".into(),
            })?;
        if let Some(rest) = line.strip_prefix("description:") {
            if entry.description.replace(rest.trim().to_string()).is_some() {
                return Err(KnowledgeError::MalformedEntry {
                    line: line_no,
                    detail: "duplicate description line".into(),
                });
            }
        } else if let Some(rest) = line.strip_prefix("example:") {
            if entry.example.replace(rest.trim().to_string()).is_some() {
                return Err(KnowledgeError::MalformedEntry {
                    line: line_no,
                    detail: "duplicate example line".into(),
                });
            }
        } else if let Some(rest) = line.strip_prefix("cues:") {
            entry.cue_terms = rest
                .split(';')
                .map(|t| t.trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect();
        } else {
            return Err(KnowledgeError::MalformedEntry {
                line: line_no,
                detail: format!("unrecognized line {line:?}"),
            });
        }
    }
    if let Some(entry) = current.take() {
        flush(entry, &mut patterns)?;
    }
    if patterns.is_empty() {
        return Err(KnowledgeError::EmptyLibrary);
    }
    PatternLibrary::new(domain, patterns, recommendations)
}
