use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::probegen::QuestionKind;
use crate::sgparse::{Lexicon, DETERMINERS, STOPWORDS};
use crate::text::{canonical_attribute, fold, lemma, singularize, tokenize, TokenKind};

/// Everything a scorer may look at for one (chunk, expert answer) pair.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub question: &'a str,
    pub kind: QuestionKind,
    /// The expected answer derived from the chunk.
    pub reference: &'a str,
    /// The chunk's own text, used when an existence answer has no polarity.
    pub surface: &'a str,
    pub candidate: &'a str,
}

pub trait EquivalenceScorer: Send + Sync {
    /// Score in `[0, 1]`.
    fn score(&self, req: &ScoreRequest<'_>) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

const YES: &[&str] = &["yes", "yeah", "yep", "yup", "correct", "true"];
const NO: &[&str] = &["no", "nope", "false"];
const NEGATIONS: &[&str] = &["not", "no", "isn't", "aren't", "don't", "doesn't", "never", "none", "nothing", "without"];

/// Polarity of a short answer, if it has one.
pub fn polarity(answer: &str) -> Option<Polarity> {
    let words: Vec<String> = tokenize(answer).iter().filter(|t| t.kind == TokenKind::Word).map(|t| t.lower()).collect();
    let first = words.first()?;
    if YES.contains(&first.as_str()) {
        return Some(Polarity::Positive);
    }
    if NO.contains(&first.as_str()) {
        return Some(Polarity::Negative);
    }
    words.iter().any(|w| NEGATIONS.contains(&w.as_str())).then_some(Polarity::Negative)
}

/// Lexical answer equivalence: polarity for existence questions, token F1
/// over normalized content words otherwise.
#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    synonyms: BTreeMap<String, String>,
}

impl LexicalScorer {
    pub fn new() -> Self {
        LexicalScorer::default()
    }

    /// Map nouns through the lexicon's synonym table as well.
    pub fn with_lexicon(lexicon: &Lexicon) -> Self {
        LexicalScorer { synonyms: lexicon.synonyms().clone() }
    }

    /// Normalized content tokens of a text.
    pub fn content_tokens(&self, text: &str) -> BTreeSet<String> {
        tokenize(text)
            .iter()
            .filter(|t| t.kind == TokenKind::Word)
            .map(|t| fold(t.text))
            .filter(|w| !is_stopword(w))
            .map(|w| {
                let w = singularize(&w);
                let w = lemma(&w).to_string();
                let w = canonical_attribute(&w);
                self.synonyms.get(&w).cloned().unwrap_or(w)
            })
            .filter(|w| !is_stopword(w))
            .collect()
    }

    /// Set F1 between the content tokens of two texts; 0 when either is empty.
    pub fn token_f1(&self, reference: &str, candidate: &str) -> f64 {
        let r = self.content_tokens(reference);
        let c = self.content_tokens(candidate);
        if r.is_empty() || c.is_empty() {
            return 0.0;
        }
        let overlap = r.intersection(&c).count();
        2.0 * overlap as f64 / (r.len() + c.len()) as f64
    }
}

fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w) || DETERMINERS.contains(&w) || YES.contains(&w) || NO.contains(&w)
}

impl EquivalenceScorer for LexicalScorer {
    fn score(&self, req: &ScoreRequest<'_>) -> f64 {
        if req.kind == QuestionKind::Existence {
            if let (Some(want), Some(got)) = (polarity(req.reference), polarity(req.candidate)) {
                return if want == got { 1.0 } else { 0.0 };
            }
            return self.token_f1(req.surface, req.candidate);
        }
        self.token_f1(req.reference, req.candidate)
    }
}

/// Score with the default lexical scorer, using `expected` as the surface.
pub fn score_equivalence(expected: &str, candidate: &str, kind: QuestionKind) -> f64 {
    LexicalScorer::new().score(&ScoreRequest { question: "", kind, reference: expected, surface: expected, candidate })
}

#[derive(Serialize)]
struct EquivalenceRequest<'a> {
    question: &'a str,
    reference: &'a str,
    candidate: &'a str,
}

#[derive(Deserialize)]
struct EquivalenceResponse {
    score: f64,
}

/// Client for `POST <endpoint>/v1/equivalence`; falls back to the lexical
/// scorer when the service fails or returns a score outside `[0, 1]`.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
    fallback: LexicalScorer,
}

impl HttpScorer {
    pub fn new(endpoint: &str, timeout: Duration, fallback: LexicalScorer) -> Self {
        HttpScorer {
            url: format!("{}/v1/equivalence", endpoint.trim_end_matches('/')),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            fallback,
        }
    }
}

impl EquivalenceScorer for HttpScorer {
    fn score(&self, req: &ScoreRequest<'_>) -> f64 {
        let body = EquivalenceRequest { question: req.question, reference: req.reference, candidate: req.candidate };
        let remote = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .ok()
            .and_then(|r| r.into_json::<EquivalenceResponse>().ok())
            .map(|r| r.score)
            .filter(|s| (0.0..=1.0).contains(s));
        remote.unwrap_or_else(|| {
            log::warn!("equivalence service failed; scoring lexically");
            self.fallback.score(req)
        })
    }
}
