//! One probe question per answer chunk.
//!
//! The default generator uses three fixed templates so every question has a
//! well-defined expected answer. An HTTP generator can replace the templates;
//! it falls back to them on any wire error.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sgparse::{AnswerChunk, ChunkKind};
use crate::text::{article, PLURAL_NOUNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionKind {
    Existence,
    RelationWhat,
    AttributeWhat,
}

impl From<ChunkKind> for QuestionKind {
    fn from(k: ChunkKind) -> Self {
        match k {
            ChunkKind::Object => QuestionKind::Existence,
            ChunkKind::Relation => QuestionKind::RelationWhat,
            ChunkKind::Attribute => QuestionKind::AttributeWhat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub question_id: String,
    pub chunk_id: String,
    pub text: String,
    pub kind: QuestionKind,
    pub expected_answer: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProbeError {
    #[error("duplicate chunk id {0:?}")]
    DuplicateChunk(String),
}

pub fn question_id(chunk_id: &str) -> String {
    format!("q:{chunk_id}")
}

fn is_plural_head(head: &str) -> bool {
    let last = head.rsplit(' ').next().unwrap_or(head);
    PLURAL_NOUNS.contains(&last)
}

/// Instantiate the template for the chunk's kind.
pub fn generate_question(chunk: &AnswerChunk) -> GeneratedQuestion {
    let (text, expected) = match chunk.kind {
        ChunkKind::Object => {
            (format!("Is there {} {} in the image?", article(&chunk.head), chunk.head), "yes".to_string())
        }
        ChunkKind::Relation => {
            let subject = chunk.subject.as_deref().unwrap_or_default();
            let object = chunk.object.as_deref().unwrap_or_default();
            let verb = if is_plural_head(subject) { "are" } else { "is" };
            (format!("What {verb} the {subject} doing?"), format!("{} {object}", chunk.head))
        }
        ChunkKind::Attribute => {
            let owner = chunk.object.as_deref().unwrap_or_default();
            (format!("How would you describe the {owner} in the image?"), chunk.head.clone())
        }
    };
    GeneratedQuestion {
        question_id: question_id(&chunk.chunk_id),
        chunk_id: chunk.chunk_id.clone(),
        text,
        kind: chunk.kind.into(),
        expected_answer: expected,
    }
}

/// Source of probe questions.
pub trait QuestionGenerator: Send + Sync {
    /// `context` is the sentence the chunk was parsed from.
    fn generate(&self, chunk: &AnswerChunk, context: &str) -> GeneratedQuestion;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl QuestionGenerator for TemplateGenerator {
    fn generate(&self, chunk: &AnswerChunk, _context: &str) -> GeneratedQuestion {
        generate_question(chunk)
    }
}

/// Template questions for a list of chunks, in order.
pub fn generate_all(chunks: &[AnswerChunk]) -> Result<Vec<GeneratedQuestion>, ProbeError> {
    generate_all_with(&TemplateGenerator, chunks, |_| String::new())
}

pub fn generate_all_with<G: QuestionGenerator + ?Sized>(
    generator: &G,
    chunks: &[AnswerChunk],
    context: impl Fn(&AnswerChunk) -> String,
) -> Result<Vec<GeneratedQuestion>, ProbeError> {
    let mut seen = HashSet::new();
    for c in chunks {
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(ProbeError::DuplicateChunk(c.chunk_id.clone()));
        }
    }
    Ok(chunks.iter().map(|c| generator.generate(c, &context(c))).collect())
}

#[derive(Serialize)]
struct QuestionRequest<'a> {
    context: &'a str,
    answer: &'a str,
    kind: &'a str,
}

#[derive(Deserialize)]
struct QuestionResponse {
    question: String,
    expected_answer: String,
}

/// Client for `POST <endpoint>/v1/question`.
#[derive(Debug, Clone)]
pub struct HttpQuestionGenerator {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpQuestionGenerator {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        HttpQuestionGenerator { endpoint: endpoint.into().trim_end_matches('/').to_string(), agent }
    }

    fn request(&self, chunk: &AnswerChunk, context: &str) -> Option<QuestionResponse> {
        let body = QuestionRequest { context, answer: &chunk.surface, kind: &chunk.kind.to_string() };
        let resp = self.agent.post(&format!("{}/v1/question", self.endpoint)).send_json(&body).ok()?;
        let parsed: QuestionResponse = resp.into_json().ok()?;
        let q = parsed.question.trim();
        (!q.is_empty() && !parsed.expected_answer.trim().is_empty()).then_some(parsed)
    }
}

impl QuestionGenerator for HttpQuestionGenerator {
    fn generate(&self, chunk: &AnswerChunk, context: &str) -> GeneratedQuestion {
        match self.request(chunk, context) {
            Some(r) => {
                let mut text = r.question.trim().to_string();
                if !text.ends_with('?') {
                    text.push('?');
                }
                GeneratedQuestion {
                    question_id: question_id(&chunk.chunk_id),
                    chunk_id: chunk.chunk_id.clone(),
                    text,
                    kind: chunk.kind.into(),
                    expected_answer: r.expected_answer.trim().to_string(),
                }
            }
            None => {
                log::warn!("question generator unavailable for {}; using template", chunk.chunk_id);
                generate_question(chunk)
            }
        }
    }
}
