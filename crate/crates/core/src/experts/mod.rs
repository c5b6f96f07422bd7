//! Expert panel: image-question answering backends behind one wire protocol,
//! a scripted mock, retries and an answer cache.

mod backend;
mod cache;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{
    script_key, CallOutcome, ExpertBackend, HttpBackend, MockBackend, MOCK_DEFAULT_ANSWER, MOCK_DEFAULT_KEY,
    MOCK_ERROR, MOCK_TIMEOUT,
};
pub use cache::{cache_key, AnswerCache};

use crate::probegen::GeneratedQuestion;
use crate::text::fold;

pub const DEFAULT_BACKOFF_BASE: Duration = Duration::from_millis(200);
pub const DEFAULT_GLOBAL_IN_FLIGHT: usize = 16;

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("expert panel is empty")]
    EmptyPanel,
    #[error("duplicate expert id {0:?}")]
    DuplicateId(String),
    #[error("expert {expert_id}: {message}")]
    InvalidConfig { expert_id: String, message: String },
    #[error("mock script {path}: {message}")]
    Script { path: PathBuf, message: String },
    #[error("cache directory {path}: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
}

fn default_timeout() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertConfig {
    pub expert_id: String,
    /// `http(s)://...` or `mock:<script-path>`.
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    /// Sent as `Authorization: Bearer <token>` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bearer_token: Option<String>,
}

impl ExpertConfig {
    pub fn mock(expert_id: &str, script: impl AsRef<Path>) -> Self {
        ExpertConfig {
            expert_id: expert_id.into(),
            endpoint: format!("mock:{}", script.as_ref().display()),
            timeout_ms: default_timeout(),
            max_retries: default_retries(),
            concurrency_limit: default_concurrency(),
            bearer_token: None,
        }
    }

    pub fn http(expert_id: &str, endpoint: &str) -> Self {
        ExpertConfig { endpoint: endpoint.into(), ..ExpertConfig::mock(expert_id, "") }
    }

    pub fn validate(&self) -> Result<(), ExpertError> {
        let bad =
            |message: &str| ExpertError::InvalidConfig { expert_id: self.expert_id.clone(), message: message.into() };
        if self.expert_id.trim().is_empty() {
            return Err(bad("empty expert_id"));
        }
        if self.timeout_ms == 0 {
            return Err(bad("timeout_ms must be positive"));
        }
        if self.concurrency_limit == 0 {
            return Err(bad("concurrency_limit must be positive"));
        }
        if self.mock_script().is_none()
            && !self.endpoint.starts_with("http://")
            && !self.endpoint.starts_with("https://")
        {
            return Err(bad("endpoint must be http(s)://... or mock:<path>"));
        }
        Ok(())
    }

    pub fn mock_script(&self) -> Option<&str> {
        self.endpoint.strip_prefix("mock:")
    }

    /// Build the backend; mock script paths resolve against `base_dir`.
    pub fn backend(&self, base_dir: &Path) -> Result<Box<dyn ExpertBackend>, ExpertError> {
        self.validate()?;
        Ok(match self.mock_script() {
            Some(p) => Box::new(MockBackend::load(&base_dir.join(p))?),
            None => Box::new(HttpBackend::new(
                &self.endpoint,
                Duration::from_millis(self.timeout_ms),
                self.bearer_token.clone(),
            )),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerStatus {
    Ok,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertAnswer {
    pub expert_id: String,
    pub question_id: String,
    /// Empty unless `status` is ok.
    pub text: String,
    pub status: AnswerStatus,
    pub latency_ms: u64,
}

impl ExpertAnswer {
    pub fn is_ok(&self) -> bool {
        self.status == AnswerStatus::Ok
    }
}

/// Lowercase, collapse whitespace, trim.
pub fn normalize_question(q: &str) -> String {
    fold(q)
}

/// Counting semaphore.
#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

struct Member {
    config: ExpertConfig,
    backend: Box<dyn ExpertBackend>,
    permits: Semaphore,
}

/// An ordered set of experts sharing a cache, a seed and a global in-flight cap.
pub struct Panel {
    members: Vec<Member>,
    cache: Option<Arc<AnswerCache>>,
    global: Semaphore,
    seed: u64,
    backoff_base: Duration,
    wire_calls: AtomicU64,
}

impl std::fmt::Debug for Panel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Panel").field("experts", &self.expert_ids()).field("seed", &self.seed).finish()
    }
}

impl Panel {
    pub fn new(members: Vec<(ExpertConfig, Box<dyn ExpertBackend>)>) -> Result<Self, ExpertError> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(members.len());
        for (config, backend) in members {
            config.validate()?;
            if !seen.insert(config.expert_id.clone()) {
                return Err(ExpertError::DuplicateId(config.expert_id));
            }
            let permits = Semaphore::new(config.concurrency_limit);
            out.push(Member { config, backend, permits });
        }
        Ok(Panel {
            members: out,
            cache: None,
            global: Semaphore::new(DEFAULT_GLOBAL_IN_FLIGHT),
            seed: 0,
            backoff_base: DEFAULT_BACKOFF_BASE,
            wire_calls: AtomicU64::new(0),
        })
    }

    pub fn from_configs(configs: &[ExpertConfig], base_dir: &Path) -> Result<Self, ExpertError> {
        let members =
            configs.iter().map(|c| Ok((c.clone(), c.backend(base_dir)?))).collect::<Result<Vec<_>, ExpertError>>()?;
        Panel::new(members)
    }

    pub fn with_cache(mut self, cache: Arc<AnswerCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_global_limit(mut self, n: usize) -> Self {
        self.global = Semaphore::new(n);
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn expert_ids(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.config.expert_id.as_str()).collect()
    }

    /// Number of backend calls made so far (cache hits excluded).
    pub fn wire_calls(&self) -> u64 {
        self.wire_calls.load(Ordering::Relaxed)
    }

    /// Full-jitter delay before retry number `attempt` (0-based).
    fn backoff(&self, expert_id: &str, question_id: &str, attempt: u32) -> Duration {
        let cap = self.backoff_base.saturating_mul(1u32 << attempt.min(16));
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(expert_id.as_bytes());
        h.update([0u8]);
        h.update(question_id.as_bytes());
        h.update(attempt.to_le_bytes());
        let digest = h.finalize();
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let nanos = cap.as_nanos().min(u64::MAX as u128) as u64;
        Duration::from_nanos(rng.gen_range(0..=nanos))
    }

    fn ask_member(&self, m: &Member, image: &str, question: &GeneratedQuestion) -> ExpertAnswer {
        let id = &m.config.expert_id;
        let normalized = normalize_question(&question.text);
        let answer = |text: String, status, latency: Duration| ExpertAnswer {
            expert_id: id.clone(),
            question_id: question.question_id.clone(),
            text,
            status,
            latency_ms: latency.as_millis() as u64,
        };
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(id, image, &normalized)) {
            return answer(hit, AnswerStatus::Ok, Duration::ZERO);
        }
        let _local = m.permits.acquire();
        let start = Instant::now();
        let mut attempt = 0;
        loop {
            let outcome = {
                let _global = self.global.acquire();
                self.wire_calls.fetch_add(1, Ordering::Relaxed);
                m.backend.call(image, &question.text)
            };
            match outcome {
                CallOutcome::Answer(text) => {
                    if let Some(cache) = &self.cache {
                        if let Err(e) = cache.put(id, image, &normalized, &text) {
                            log::warn!("cache write failed for {id}: {e}");
                        }
                    }
                    return answer(text, AnswerStatus::Ok, start.elapsed());
                }
                CallOutcome::Fatal(detail) => {
                    log::warn!("{id} failed on {}: {detail}", question.question_id);
                    return answer(String::new(), AnswerStatus::Error, start.elapsed());
                }
                CallOutcome::Transient { timed_out, detail } => {
                    if attempt >= m.config.max_retries {
                        log::warn!("{id} gave up on {} after {} attempts: {detail}", question.question_id, attempt + 1);
                        let status = if timed_out { AnswerStatus::Timeout } else { AnswerStatus::Error };
                        return answer(String::new(), status, start.elapsed());
                    }
                    std::thread::sleep(self.backoff(id, &question.question_id, attempt));
                    attempt += 1;
                }
            }
        }
    }

    /// Ask one expert by position.
    pub fn ask(&self, index: usize, image: &str, question: &GeneratedQuestion) -> ExpertAnswer {
        self.ask_member(&self.members[index], image, question)
    }

    /// Ask every expert concurrently. Answers come back in panel order.
    pub fn ask_panel(&self, image: &str, question: &GeneratedQuestion) -> Result<Vec<ExpertAnswer>, ExpertError> {
        match self.members.len() {
            0 => Err(ExpertError::EmptyPanel),
            1 => Ok(vec![self.ask_member(&self.members[0], image, question)]),
            _ => Ok(std::thread::scope(|s| {
                let handles: Vec<_> =
                    self.members.iter().map(|m| s.spawn(move || self.ask_member(m, image, question))).collect();
                handles.into_iter().map(|h| h.join().expect("expert worker panicked")).collect()
            })),
        }
    }
}

/// One-off query against a single expert without cache.
pub fn ask(expert: &ExpertConfig, image: &str, question: &GeneratedQuestion) -> Result<ExpertAnswer, ExpertError> {
    let backend = expert.backend(Path::new("."))?;
    Ok(Panel::new(vec![(expert.clone(), backend)])?.ask(0, image, question))
}

/// Convenience wrapper over [`Panel::ask_panel`].
pub fn ask_panel(panel: &Panel, image: &str, question: &GeneratedQuestion) -> Result<Vec<ExpertAnswer>, ExpertError> {
    panel.ask_panel(image, question)
}
