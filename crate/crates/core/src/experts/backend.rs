use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{normalize_question, ExpertError};

/// Result of a single wire attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallOutcome {
    Answer(String),
    /// Worth retrying: 5xx, transport failure, or timeout.
    Transient {
        timed_out: bool,
        detail: String,
    },
    /// Not worth retrying: 4xx or a malformed response.
    Fatal(String),
}

pub trait ExpertBackend: Send + Sync {
    fn call(&self, image: &str, question: &str) -> CallOutcome;
}

#[derive(Serialize)]
struct AnswerRequest<'a> {
    image: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct AnswerResponse {
    answer: String,
}

/// Client for `POST <endpoint>/v1/answer`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
    bearer: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: &str, timeout: Duration, bearer: Option<String>) -> Self {
        HttpBackend {
            url: format!("{}/v1/answer", endpoint.trim_end_matches('/')),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            bearer,
        }
    }
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

impl ExpertBackend for HttpBackend {
    fn call(&self, image: &str, question: &str) -> CallOutcome {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.bearer {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(AnswerRequest { image, question }) {
            Ok(resp) => match resp.into_json::<AnswerResponse>() {
                Ok(r) if !r.answer.trim().is_empty() => CallOutcome::Answer(r.answer),
                Ok(_) => CallOutcome::Fatal("empty answer".into()),
                Err(e) if e.kind() == ErrorKind::TimedOut || e.kind() == ErrorKind::WouldBlock => {
                    CallOutcome::Transient { timed_out: true, detail: e.to_string() }
                }
                Err(e) => CallOutcome::Fatal(format!("bad response body: {e}")),
            },
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                CallOutcome::Transient { timed_out: false, detail: format!("HTTP {code}") }
            }
            Err(ureq::Error::Status(code, _)) => CallOutcome::Fatal(format!("HTTP {code}")),
            Err(ureq::Error::Transport(t)) => {
                CallOutcome::Transient { timed_out: is_timeout(&t), detail: t.to_string() }
            }
        }
    }
}

pub const MOCK_DEFAULT_KEY: &str = "__default__";
pub const MOCK_DEFAULT_ANSWER: &str = "I don't know.";
/// Scripted answers that simulate failures instead of answering.
pub const MOCK_TIMEOUT: &str = "__timeout__";
pub const MOCK_ERROR: &str = "__error__";

/// Scripted expert: a table from `"<image>\u0000<normalized question>"` to answer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockBackend {
    script: BTreeMap<String, String>,
}

impl MockBackend {
    pub fn new(script: BTreeMap<String, String>) -> Self {
        MockBackend { script }
    }

    pub fn load(path: &Path) -> Result<Self, ExpertError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpertError::Script { path: path.to_path_buf(), message: e.to_string() })?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| ExpertError::Script { path: path.to_path_buf(), message: e.to_string() })?;
        // keys are normalized on load so scripts can be written in natural case
        let script = raw
            .into_iter()
            .map(|(k, v)| match k.split_once('\u{0}') {
                Some((img, q)) => (script_key(img, q), v),
                None => (k, v),
            })
            .collect();
        Ok(MockBackend { script })
    }

    pub fn insert(&mut self, image: &str, question: &str, answer: &str) {
        self.script.insert(script_key(image, question), answer.to_string());
    }

    pub fn set_default(&mut self, answer: &str) {
        self.script.insert(MOCK_DEFAULT_KEY.into(), answer.into());
    }
}

pub fn script_key(image: &str, question: &str) -> String {
    format!("{image}\u{0}{}", normalize_question(question))
}

impl ExpertBackend for MockBackend {
    fn call(&self, image: &str, question: &str) -> CallOutcome {
        let answer = self
            .script
            .get(&script_key(image, question))
            .or_else(|| self.script.get(MOCK_DEFAULT_KEY))
            .map(String::as_str)
            .unwrap_or(MOCK_DEFAULT_ANSWER);
        match answer {
            MOCK_TIMEOUT => CallOutcome::Transient { timed_out: true, detail: "scripted timeout".into() },
            MOCK_ERROR => CallOutcome::Fatal("scripted error".into()),
            a if a.trim().is_empty() => CallOutcome::Fatal("empty scripted answer".into()),
            a => CallOutcome::Answer(a.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_lookup_and_default() {
        let mut m = MockBackend::default();
        m.insert("img1", "Is there a  kite in the image?", "yes");
        assert_eq!(m.call("img1", "is there a kite in the image?"), CallOutcome::Answer("yes".into()));
        assert_eq!(m.call("img2", "is there a kite in the image?"), CallOutcome::Answer(MOCK_DEFAULT_ANSWER.into()));
        m.set_default("no");
        assert_eq!(m.call("img2", "anything?"), CallOutcome::Answer("no".into()));
    }

    #[test]
    fn mock_script_file_keys_are_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("script.json");
        std::fs::write(&p, r#"{"img1\u0000Is there a KITE in the image?": "yes", "__default__": "maybe"}"#).unwrap();
        let m = MockBackend::load(&p).unwrap();
        assert_eq!(m.call("img1", "is there a kite in the image?"), CallOutcome::Answer("yes".into()));
        assert_eq!(m.call("img1", "other"), CallOutcome::Answer("maybe".into()));
        std::fs::write(&p, "[1]").unwrap();
        assert!(matches!(MockBackend::load(&p), Err(ExpertError::Script { .. })));
    }
}
