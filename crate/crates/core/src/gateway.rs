//! Backend-agnostic LLM access.
//!
//! [`LlmBackend`] wraps either a generic chat-completion HTTP endpoint or a
//! deterministic mock keyed on substring rules, behind one `complete` call
//! with bounded in-flight concurrency, per-request retry with exponential
//! backoff, and reply parsers for the pipeline's two output contracts.

use crate::knowledge::PatternLibrary;
use crate::model::{DriftClass, Label};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// Default bound on concurrent in-flight requests per backend.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

const BACKOFF_BASE: Duration = Duration::from_millis(200);
const BACKOFF_CAP: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

/// Connection settings for one LLM backend. Vendor choice is configuration:
/// any endpoint speaking the de-facto chat-completion schema works.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    pub kind: BackendKind,
    /// Chat-completion URL; required for `Http`.
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub max_retries: u32,
    /// Name of the environment variable holding the credential; the value
    /// itself never lives in configuration files.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout_secs() -> f64 {
    30.0
}

impl BackendDescriptor {
    pub fn mock(id: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendDescriptor {
            id: id.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: model_name.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: 0,
            api_key_env: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.id.trim().is_empty() {
            return Err(GatewayError::InvalidDescriptor("backend id is empty".into()));
        }
        if self.kind == BackendKind::Http {
            match &self.endpoint {
                Some(url) if !url.trim().is_empty() => {}
                _ => {
                    return Err(GatewayError::InvalidDescriptor(format!(
                        "http backend {} requires an endpoint",
                        self.id
                    )))
                }
            }
            if self.model_name.trim().is_empty() {
                return Err(GatewayError::InvalidDescriptor(format!(
                    "http backend {} requires a model name",
                    self.id
                )));
            }
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidDescriptor(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidDescriptor("max_tokens must be positive".into()));
        }
        if self.timeout_secs <= 0.0 || self.timeout_secs.is_nan() {
            return Err(GatewayError::InvalidDescriptor(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Ordered substring rules driving the mock backend: the first rule with
/// any term contained (case-insensitively) in the last user message wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRuleSet {
    pub rules: Vec<MockRule>,
    pub default_reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub terms: Vec<String>,
    pub reply: String,
}

impl MockRuleSet {
    pub fn new(rules: Vec<(Vec<&str>, &str)>, default_reply: impl Into<String>) -> Self {
        MockRuleSet {
            rules: rules
                .into_iter()
                .map(|(terms, reply)| MockRule {
                    terms: terms.iter().map(|t| t.to_lowercase()).collect(),
                    reply: reply.to_string(),
                })
                .collect(),
            default_reply: default_reply.into(),
        }
    }

    /// Screening mock: any cue term of any library pattern answers "True"
    /// (fake), everything else "False" (real).
    pub fn classifier_from(library: &PatternLibrary) -> Self {
        let rules = library
            .patterns
            .iter()
            .filter(|p| !p.cue_terms.is_empty())
            .map(|p| MockRule {
                terms: p.cue_terms.clone(),
                reply: "True".to_string(),
            })
            .collect();
        MockRuleSet {
            rules,
            default_reply: "False".to_string(),
        }
    }

    /// Drift-classification mock: payment/credential extraction reads as a
    /// fraudulent attempt, advertising reads as spamming.
    pub fn drift_classifier() -> Self {
        MockRuleSet::new(
            vec![
                (
                    vec![
                        "credit card",
                        "wire transfer",
                        "routing number",
                        "gift card",
                        "account password",
                        "social security number",
                        "verification fee",
                    ],
                    "The marked turns press for payment card details and credentials outside \
                     any legitimate channel, a classic phishing pattern; the shift is a \
                     fraudulent attempt.",
                ),
                (
                    vec![
                        "promo code",
                        "discount",
                        "subscribe",
                        "unsubscribe",
                        "limited-time offer",
                        "newsletter",
                    ],
                    "The marked turns pivot into unsolicited advertising with no attempt to \
                     extract personal details; the shift is spamming.",
                ),
            ],
            "No manipulation signals stand out beyond repetitive off-topic content; this is \
             spamming.",
        )
    }

    /// Discovery mock: always replies with the fenced rendering of the given
    /// library, so parsing the reply reproduces the library exactly.
    pub fn discovery_canned(library: &PatternLibrary) -> Self {
        MockRuleSet {
            rules: Vec::new(),
            default_reply: format!(
                "Here are the recurring categories extracted from the labeled examples.\n\n{}",
                library.render_fenced()
            ),
        }
    }

    pub fn reply_for(&self, messages: &[ChatMessage]) -> &str {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.to_lowercase())
            .unwrap_or_default();
        for rule in &self.rules {
            if rule.terms.iter().any(|t| last_user.contains(t)) {
                return &rule.reply;
            }
        }
        &self.default_reply
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GatewayError {
    #[error("invalid backend descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("message list is empty")]
    EmptyMessages,
    #[error("user message content is empty")]
    EmptyUserContent,
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body_excerpt}")]
    HttpStatus { status: u16, body_excerpt: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<GatewayError>,
    },
    #[error("reply contains both a true and a false token")]
    AmbiguousVerdict,
    #[error("reply contains no standalone true/false token")]
    NoVerdict,
    #[error("reply contains no drift-class marker")]
    NoClassMarker,
}

struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(count: usize) -> Self {
        Semaphore {
            permits: Mutex::new(count.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.sem.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.sem.available.notify_one();
    }
}

enum BackendInner {
    Http { client: reqwest::blocking::Client },
    Mock { rules: MockRuleSet },
}

/// A shareable, internally synchronized LLM handle.
pub struct LlmBackend {
    descriptor: BackendDescriptor,
    inner: BackendInner,
    limiter: Semaphore,
    calls: AtomicU64,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

impl LlmBackend {
    /// HTTP-backed handle speaking the chat-completion wire format.
    pub fn http(descriptor: BackendDescriptor) -> Result<Self, GatewayError> {
        descriptor.validate()?;
        if descriptor.kind != BackendKind::Http {
            return Err(GatewayError::InvalidDescriptor(format!(
                "backend {} is not of http kind",
                descriptor.id
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(descriptor.timeout())
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(LlmBackend {
            descriptor,
            inner: BackendInner::Http { client },
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
            calls: AtomicU64::new(0),
        })
    }

    /// Deterministic offline handle applying `rules` to the last user message.
    pub fn mock(descriptor: BackendDescriptor, rules: MockRuleSet) -> Result<Self, GatewayError> {
        descriptor.validate()?;
        if descriptor.kind != BackendKind::Mock {
            return Err(GatewayError::InvalidDescriptor(format!(
                "backend {} is not of mock kind",
                descriptor.id
            )));
        }
        Ok(LlmBackend {
            descriptor,
            inner: BackendInner::Mock { rules },
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
            calls: AtomicU64::new(0),
        })
    }

    pub fn with_max_in_flight(mut self, bound: usize) -> Self {
        self.limiter = Semaphore::new(bound);
        self
    }

    pub fn id(&self) -> &str {
        &self.descriptor.id
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    /// Number of `complete` calls served so far (retries are not separate
    /// calls). Used by routing assertions and run reports.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Sends the message list and returns the first choice's content.
    ///
    /// HTTP backends retry transient transport errors and 429/5xx responses
    /// with exponential backoff, up to `max_retries` retries. Other 4xx
    /// statuses fail immediately.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        if messages
            .iter()
            .any(|m| m.role == Role::User && m.content.is_empty())
        {
            return Err(GatewayError::EmptyUserContent);
        }
        let _permit = self.limiter.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.inner {
            BackendInner::Mock { rules } => Ok(rules.reply_for(messages).to_string()),
            BackendInner::Http { client } => self.complete_http(client, messages),
        }
    }

    fn complete_http(
        &self,
        client: &reqwest::blocking::Client,
        messages: &[ChatMessage],
    ) -> Result<String, GatewayError> {
        let endpoint = self.descriptor.endpoint.as_deref().expect("validated");
        let api_key = match &self.descriptor.api_key_env {
            Some(var) if !var.is_empty() => Some(
                std::env::var(var).map_err(|_| GatewayError::MissingApiKey(var.clone()))?,
            ),
            _ => None,
        };
        let body = ChatRequest {
            model: &self.descriptor.model_name,
            messages,
            temperature: self.descriptor.temperature,
            max_tokens: self.descriptor.max_tokens,
        };

        let mut attempt: u32 = 0;
        loop {
            let mut request = client.post(endpoint).json(&body);
            if let Some(key) = &api_key {
                request = request.bearer_auth(key);
            }
            let error = match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return extract_content(response);
                    }
                    let excerpt = body_excerpt(response);
                    let error = GatewayError::HttpStatus {
                        status: status.as_u16(),
                        body_excerpt: excerpt,
                    };
                    if status.as_u16() == 429 || status.is_server_error() {
                        error
                    } else {
                        return Err(error);
                    }
                }
                Err(e) if e.is_timeout() => GatewayError::Timeout(self.descriptor.timeout()),
                Err(e) => GatewayError::Transport(e.to_string()),
            };
            if attempt >= self.descriptor.max_retries {
                return if self.descriptor.max_retries == 0 {
                    Err(error)
                } else {
                    Err(GatewayError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(error),
                    })
                };
            }
            let backoff = BACKOFF_BASE
                .saturating_mul(1u32 << attempt.min(16))
                .min(BACKOFF_CAP);
            std::thread::sleep(backoff);
            attempt += 1;
        }
    }
}

fn extract_content(response: reqwest::blocking::Response) -> Result<String, GatewayError> {
    let value: serde_json::Value = response
        .json()
        .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(|s| s.to_string())
        .ok_or_else(|| {
            GatewayError::MalformedResponse(
                "response lacks choices[0].message.content".to_string(),
            )
        })
}

fn body_excerpt(response: reqwest::blocking::Response) -> String {
    let text = response.text().unwrap_or_default();
    let mut end = text.len().min(512);
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    text[..end].to_string()
}

/// Scans for standalone `true`/`false` tokens (case-insensitive, token
/// boundaries are non-alphanumeric): exactly one kind present decides the
/// label, `true` meaning fake.
pub fn parse_binary_verdict(reply: &str) -> Result<Label, GatewayError> {
    let lowered = reply.to_lowercase();
    let mut has_true = false;
    let mut has_false = false;
    for token in lowered.split(|c: char| !c.is_alphanumeric()) {
        match token {
            "true" => has_true = true,
            "false" => has_false = true,
            _ => {}
        }
    }
    match (has_true, has_false) {
        (true, false) => Ok(Label::Fake),
        (false, true) => Ok(Label::Real),
        (true, true) => Err(GatewayError::AmbiguousVerdict),
        (false, false) => Err(GatewayError::NoVerdict),
    }
}

const ADVERSARIAL_MARKERS: [&str; 6] = [
    "fraud",
    "fraudulent",
    "phishing",
    "scam",
    "adversarial",
    "manipulation",
];
const BENIGN_MARKERS: [&str; 4] = ["spam", "spamming", "benign", "promotional"];

/// Classifies a drift-analysis reply by the marker family of the LAST
/// class word it contains — replies argue through both classes before
/// concluding, and the conclusion comes last. The full reply text is
/// returned as the rationale.
pub fn parse_drift_class(reply: &str) -> Result<(DriftClass, String), GatewayError> {
    let lowered = reply.to_lowercase();
    let mut best: Option<(usize, DriftClass)> = None;
    for (markers, class) in [
        (&ADVERSARIAL_MARKERS[..], DriftClass::Adversarial),
        (&BENIGN_MARKERS[..], DriftClass::Benign),
    ] {
        for marker in markers {
            if let Some(pos) = lowered.rfind(marker) {
                if best.is_none_or(|(p, _)| pos > p) {
                    best = Some((pos, class));
                }
            }
        }
    }
    match best {
        Some((_, class)) => Ok((class, reply.to_string())),
        None => Err(GatewayError::NoClassMarker),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{seed_conversation_cues, seed_review_library};

    #[test]
    fn mock_first_matching_rule_wins() {
        let rules = MockRuleSet::new(
            vec![
                (vec!["credit card"], "True"),
                (vec!["card"], "second-rule"),
            ],
            "False",
        );
        let messages = [ChatMessage::user("they asked for my Credit Card number")];
        assert_eq!(rules.reply_for(&messages), "True");
    }

    #[test]
    fn mock_default_reply_when_nothing_matches() {
        let rules = MockRuleSet::new(vec![(vec!["credit card"], "True")], "False");
        let messages = [ChatMessage::user("nice weather today")];
        assert_eq!(rules.reply_for(&messages), "False");
    }

    #[test]
    fn mock_matches_last_user_message_only() {
        let rules = MockRuleSet::new(vec![(vec!["credit card"], "True")], "False");
        let messages = [
            ChatMessage::user("credit card talk in an earlier message"),
            ChatMessage::user("now just chit chat"),
        ];
        assert_eq!(rules.reply_for(&messages), "False");
    }

    #[test]
    fn mock_backend_is_deterministic() {
        let backend = LlmBackend::mock(
            BackendDescriptor::mock("m1", "mock"),
            MockRuleSet::new(vec![(vec!["credit card"], "True")], "False"),
        )
        .unwrap();
        let messages = [ChatMessage::user("give me your credit card")];
        let a = backend.complete(&messages).unwrap();
        let b = backend.complete(&messages).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, "True");
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn classifier_mock_from_library_flags_cue_terms() {
        let rules = MockRuleSet::classifier_from(&seed_conversation_cues());
        let fake = [ChatMessage::user("please send a wire transfer today")];
        let real = [ChatMessage::user("the meeting moved to thursday")];
        assert_eq!(rules.reply_for(&fake), "True");
        assert_eq!(rules.reply_for(&real), "False");
    }

    #[test]
    fn discovery_mock_round_trips_seed_library() {
        let seed = seed_review_library();
        let rules = MockRuleSet::discovery_canned(&seed);
        let reply = rules.reply_for(&[ChatMessage::user("discover patterns")]);
        let parsed = crate::knowledge::parse_pattern_library(reply, "reviews").unwrap();
        assert_eq!(parsed, seed);
    }

    #[test]
    fn empty_messages_rejected() {
        let backend = LlmBackend::mock(
            BackendDescriptor::mock("m1", "mock"),
            MockRuleSet::new(vec![], "x"),
        )
        .unwrap();
        assert_eq!(backend.complete(&[]).unwrap_err(), GatewayError::EmptyMessages);
        assert_eq!(
            backend.complete(&[ChatMessage::user("")]).unwrap_err(),
            GatewayError::EmptyUserContent
        );
    }

    #[test]
    fn binary_verdict_parses_bare_tokens() {
        assert_eq!(parse_binary_verdict("True").unwrap(), Label::Fake);
        assert_eq!(parse_binary_verdict("  false.").unwrap(), Label::Real);
        assert_eq!(parse_binary_verdict("TRUE!\n").unwrap(), Label::Fake);
    }

    #[test]
    fn binary_verdict_rejects_ambiguity_and_absence() {
        assert_eq!(
            parse_binary_verdict("true or false").unwrap_err(),
            GatewayError::AmbiguousVerdict
        );
        assert_eq!(parse_binary_verdict("maybe").unwrap_err(), GatewayError::NoVerdict);
    }

    #[test]
    fn binary_verdict_respects_token_boundaries() {
        // "untrue" must not count as a true token.
        assert_eq!(parse_binary_verdict("untrue").unwrap_err(), GatewayError::NoVerdict);
        assert_eq!(parse_binary_verdict("untrue, so false").unwrap(), Label::Real);
    }

    #[test]
    fn drift_class_uses_last_marker() {
        let (class, rationale) = parse_drift_class("Not phishing; it is just spam.").unwrap();
        assert_eq!(class, DriftClass::Benign);
        assert_eq!(rationale, "Not phishing; it is just spam.");
        let (class, _) = parse_drift_class("This is clearly spamming.").unwrap();
        assert_eq!(class, DriftClass::Benign);
    }

    #[test]
    fn drift_class_fraud_conclusion_reads_adversarial() {
        // Shaped like a real drift-analysis reply: trust-building first,
        // reasoning through tactics, explicit closing classification.
        let reply = "The counterpart builds rapport, floats an attractive offer, then pushes \
                     for card details through an unofficial portal for a small fee. Such \
                     staged escalation is a hallmark of phishing. The conversation is best \
                     classified as 'fraudulent'.";
        let (class, _) = parse_drift_class(reply).unwrap();
        assert_eq!(class, DriftClass::Adversarial);
    }

    #[test]
    fn drift_class_requires_a_marker() {
        assert_eq!(
            parse_drift_class("nothing to see here").unwrap_err(),
            GatewayError::NoClassMarker
        );
    }

    #[test]
    fn descriptor_validation() {
        let mut d = BackendDescriptor::mock("b1", "m");
        d.kind = BackendKind::Http;
        assert!(matches!(
            d.validate().unwrap_err(),
            GatewayError::InvalidDescriptor(_)
        ));
        d.endpoint = Some("http://localhost:1/v1/chat/completions".into());
        d.validate().unwrap();
        d.temperature = -1.0;
        assert!(d.validate().is_err());
    }
}
