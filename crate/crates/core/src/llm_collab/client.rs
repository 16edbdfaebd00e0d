//! Cloud model clients: an offline rule-table mock and a JSON-over-HTTP
//! remote client.

use std::collections::HashMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENDPOINT_ENV: &str = "EGOLOG_LLM_ENDPOINT";
pub const TOKEN_ENV: &str = "EGOLOG_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    /// Opaque id of the evidence window; never sent to a remote service.
    pub window_id: String,
    pub prompt: String,
    pub categories: Vec<String>,
}

pub trait LlmClient: Send + Sync {
    /// Raw completion text; parsing is the caller's job.
    fn complete(&self, request: &LlmRequest) -> Result<String>;
}

const NEAR_MARKER: &str = " is happening in the near front of the user";
const MOTION_PREFIX: &str = "the detected motion is ";
const ESTIMATE_PREFIX: &str = "the preliminary scenario estimation is ";

/// Votes per reduced event class (near field only) and per motion class.
const EVENT_RULES: [(&str, &str, f64); 14] = [
    ("food preparation", "cooking", 1.0),
    ("kitchenware", "cooking", 1.0),
    ("water tap", "cooking", 0.5),
    ("water tap", "cleaning", 0.5),
    ("domestic appliance", "cleaning", 1.0),
    ("household cleaning", "cleaning", 1.0),
    ("office equipment", "office_work", 1.0),
    ("human voice", "socializing", 0.6),
    ("human voice", "office_work", 0.4),
    ("hands", "socializing", 1.0),
    ("music", "socializing", 0.8),
    ("footsteps", "exercise", 0.6),
    ("vehicle", "commuting", 1.0),
    ("bicycle", "commuting", 1.0),
];
const MOTION_RULES: [(&str, &str, f64); 2] = [("walking", "commuting", 0.4), ("walking", "exercise", 0.4)];
const ESTIMATE_WEIGHT: f64 = 0.75;

#[derive(Debug, Clone)]
enum MockMode {
    Rules,
    /// Fixed answer per window id; rules for unknown ids.
    Oracle(HashMap<String, String>),
    Random,
}

/// Deterministic offline stand-in for the cloud model.
#[derive(Debug, Clone)]
pub struct MockLlm {
    mode: MockMode,
    /// Probability of replacing the answer with a random category.
    noise: f64,
    seed: u64,
}

impl MockLlm {
    /// Votes from near-field events, motion and the local estimate.
    pub fn rule_table() -> Self {
        Self {
            mode: MockMode::Rules,
            noise: 0.0,
            seed: 0,
        }
    }

    /// Answers the true label of each known window.
    pub fn oracle(truth: HashMap<String, String>) -> Self {
        Self {
            mode: MockMode::Oracle(truth),
            noise: 0.0,
            seed: 0,
        }
    }

    /// Uniformly random category per window, reproducible per seed.
    pub fn random(seed: u64) -> Self {
        Self {
            mode: MockMode::Random,
            noise: 0.0,
            seed,
        }
    }

    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise.clamp(0.0, 1.0);
        self.seed = seed;
        self
    }

    fn rng_for(&self, window_id: &str) -> ChaCha8Rng {
        let h = window_id
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
        ChaCha8Rng::seed_from_u64(self.seed ^ h)
    }

    fn rules(prompt: &str, categories: &[String]) -> String {
        let mut score: HashMap<&str, f64> = HashMap::new();
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix("the ") {
                if let Some(end) = rest.find(NEAR_MARKER) {
                    let event = &rest[..end];
                    for (e, s, w) in EVENT_RULES {
                        if e == event {
                            *score.entry(s).or_default() += w;
                        }
                    }
                }
            }
            if let Some(m) = line.strip_prefix(MOTION_PREFIX) {
                let m = m.trim_end_matches('.');
                for (c, s, w) in MOTION_RULES {
                    if c == m {
                        *score.entry(s).or_default() += w;
                    }
                }
            }
            if let Some(rest) = line.strip_prefix(ESTIMATE_PREFIX) {
                if let Some((label, _)) = rest.rsplit_once(", ") {
                    if let Some(c) = categories.iter().find(|c| c.as_str() == label) {
                        *score.entry(c.as_str()).or_default() += ESTIMATE_WEIGHT;
                    }
                }
            }
        }
        // Ties go to the earlier category.
        let mut best: Option<(&String, f64)> = None;
        for c in categories {
            let s = score.get(c.as_str()).copied().unwrap_or(0.0);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c.clone()).unwrap_or_default()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String> {
        if request.categories.is_empty() {
            return Err(Error::Empty("category list"));
        }
        let mut rng = self.rng_for(&request.window_id);
        let random = |rng: &mut ChaCha8Rng| request.categories[rng.random_range(0..request.categories.len())].clone();
        if self.noise > 0.0 && rng.random_bool(self.noise) {
            return Ok(random(&mut rng));
        }
        Ok(match &self.mode {
            MockMode::Rules => Self::rules(&request.prompt, &request.categories),
            MockMode::Oracle(truth) => match truth.get(&request.window_id) {
                Some(label) => label.clone(),
                None => Self::rules(&request.prompt, &request.categories),
            },
            MockMode::Random => random(&mut rng),
        })
    }
}

#[derive(Serialize)]
struct RemoteBody<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct RemoteReply {
    text: String,
}

/// POSTs `{prompt, max_tokens}` and reads `{text}`. Two retries with
/// doubling backoff, then the error is returned so the caller can keep the
/// local label.
#[derive(Debug, Clone)]
pub struct RemoteLlm {
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
    retries: u32,
    backoff: Duration,
}

impl RemoteLlm {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token,
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(250),
        }
    }

    /// Endpoint and bearer token from `EGOLOG_LLM_ENDPOINT` / `EGOLOG_LLM_TOKEN`.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| Error::Llm(format!("{ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(endpoint, std::env::var(TOKEN_ENV).ok()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, agent: &ureq::Agent, prompt: &str) -> Result<String> {
        let mut req = agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(RemoteBody { prompt, max_tokens: 16 })
            .map_err(|e| Error::Llm(e.to_string()))?;
        let reply: RemoteReply = resp.body_mut().read_json().map_err(|e| Error::Llm(e.to_string()))?;
        Ok(reply.text)
    }
}

impl LlmClient for RemoteLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&agent, &request.prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("llm request for {} failed (attempt {}): {e}", request.window_id, attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| Error::Llm("no attempt made".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats() -> Vec<String> {
        ["cooking", "cleaning", "office_work", "socializing", "exercise", "commuting"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn req(id: &str, prompt: &str) -> LlmRequest {
        LlmRequest {
            window_id: id.into(),
            prompt: prompt.into(),
            categories: cats(),
        }
    }

    #[test]
    fn rules_follow_near_events() {
        let p = "preamble\nthe food preparation is happening in the near front of the user, which is likely to be related to human activity.\nthe music is happening in the back.\nthe preliminary scenario estimation is office_work, 0.30.";
        assert_eq!(MockLlm::rule_table().complete(&req("a", p)).unwrap(), "cooking");
        let p = "preamble\nthe preliminary scenario estimation is exercise, 0.30.";
        assert_eq!(MockLlm::rule_table().complete(&req("a", p)).unwrap(), "exercise");
    }

    #[test]
    fn oracle_and_random_are_deterministic() {
        let truth = HashMap::from([("w1".to_string(), "commuting".to_string())]);
        assert_eq!(MockLlm::oracle(truth).complete(&req("w1", "")).unwrap(), "commuting");
        let r = MockLlm::random(3);
        let a: Vec<String> = (0..20).map(|i| r.complete(&req(&i.to_string(), "")).unwrap()).collect();
        let b: Vec<String> = (0..20).map(|i| r.complete(&req(&i.to_string(), "")).unwrap()).collect();
        assert_eq!(a, b);
        assert!(a.iter().collect::<std::collections::HashSet<_>>().len() > 2);
    }

    #[test]
    fn remote_failure_is_an_error() {
        let c = RemoteLlm::new("http://127.0.0.1:9/none", None)
            .with_timeout(Duration::from_millis(200))
            .with_backoff(Duration::from_millis(1));
        assert!(c.complete(&req("x", "p")).is_err());
    }
}
