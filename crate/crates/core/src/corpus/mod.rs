//! Instruction corpora (LLaVA conversation JSONL) and image annotation sets.

mod annotations;

pub use annotations::{
    AnnotatedObject, AnnotationError, AnnotationSet, AttributePair, BBox, ImageAnnotation, RelationTriple,
};

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speaker of one conversation turn. Serialized with LLaVA's `from` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "human")]
    Human,
    #[serde(rename = "gpt")]
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Human => f.write_str("human"),
            Role::Assistant => f.write_str("gpt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Role,
    pub value: String,
}

impl Turn {
    pub fn human(text: impl Into<String>) -> Self {
        Turn { from: Role::Human, value: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn { from: Role::Assistant, value: text.into() }
    }
}

/// One image with its instruction/response turns.
///
/// Field names follow the LLaVA JSONL layout so a sample serializes to exactly
/// one corpus line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub image: String,
    pub conversations: Vec<Turn>,
}

impl InstructionSample {
    pub fn new(id: impl Into<String>, image: impl Into<String>, turns: Vec<Turn>) -> Self {
        InstructionSample { id: id.into(), image: image.into(), conversations: turns }
    }

    /// Check the per-sample invariants: non-empty id, non-empty turns,
    /// roles alternating from human, no NUL characters.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.conversations.is_empty() {
            return Err("no conversation turns".into());
        }
        for (i, turn) in self.conversations.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::Human } else { Role::Assistant };
            if turn.from != expected {
                return Err(format!("turn {i} is from {} but roles must alternate starting with human", turn.from));
            }
            if turn.value.contains('\0') {
                return Err(format!("turn {i} contains a NUL character"));
            }
        }
        if self.id.contains('\0') || self.image.contains('\0') {
            return Err("id or image contains a NUL character".into());
        }
        Ok(())
    }

    /// Assistant turns with their index in `conversations`.
    pub fn assistant_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.conversations.iter().enumerate().filter(|(_, t)| t.from == Role::Assistant)
    }
}

/// An ordered set of samples. Equality ignores `source_path`.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub samples: Vec<InstructionSample>,
    pub source_path: String,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl Corpus {
    pub fn new(samples: Vec<InstructionSample>) -> Result<Self, CorpusError> {
        let corpus = Corpus { samples, source_path: String::new() };
        let mut seen = std::collections::HashMap::new();
        let mut errors = Vec::new();
        for (i, s) in corpus.samples.iter().enumerate() {
            if let Err(e) = s.validate() {
                errors.push(LineError { line: i + 1, message: e });
            }
            if let Some(first) = seen.insert(s.id.as_str(), i + 1) {
                errors.push(LineError { line: i + 1, message: format!("duplicate id {:?} (first at {first})", s.id) });
            }
        }
        if errors.is_empty() {
            Ok(corpus)
        } else {
            Err(CorpusError::Invalid { path: "<memory>".into(), errors })
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InstructionSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// The corpus rendered exactly as [`save_corpus`] writes it.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid corpus ({})", .errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { path: PathBuf, errors: Vec<LineError> },
}

impl CorpusError {
    /// 1-based line numbers of offending lines, if any.
    pub fn lines(&self) -> Vec<usize> {
        match self {
            CorpusError::Invalid { errors, .. } => errors.iter().map(|e| e.line).collect(),
            CorpusError::Io { .. } => Vec::new(),
        }
    }
}

/// Parse a LLaVA-style JSONL corpus.
///
/// Blank lines are skipped. Every line is checked before failing, so the
/// error lists all offending line numbers at once.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let mut corpus =
        parse_corpus(&content).map_err(|errors| CorpusError::Invalid { path: path.to_path_buf(), errors })?;
    corpus.source_path = path.display().to_string();
    Ok(corpus)
}

/// Parse JSONL text; errors carry 1-based line numbers.
pub fn parse_corpus(content: &str) -> Result<Corpus, Vec<LineError>> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sample: InstructionSample = match serde_json::from_str::<RawSample>(line) {
            Ok(raw) => raw.into(),
            Err(e) => {
                errors.push(LineError { line: lineno, message: e.to_string() });
                continue;
            }
        };
        if let Err(msg) = sample.validate() {
            errors.push(LineError { line: lineno, message: msg });
            continue;
        }
        if let Some(first) = seen.get(&sample.id) {
            errors.push(LineError {
                line: lineno,
                message: format!("duplicate id {:?} (first on line {first})", sample.id),
            });
            continue;
        }
        seen.insert(sample.id.clone(), lineno);
        samples.push(sample);
    }
    if errors.is_empty() {
        Ok(Corpus { samples, source_path: String::new() })
    } else {
        Err(errors)
    }
}

/// Write the corpus as JSONL. Key order is `id`, `image`, `conversations`;
/// line order is sample order.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(corpus.to_jsonl().as_bytes()).map_err(io)?;
    file.sync_all().map_err(io)
}

// LLaVA ids are usually strings but some exports use integers.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Str(String),
    Int(i64),
}

#[derive(Deserialize)]
struct RawSample {
    id: RawId,
    image: String,
    conversations: Vec<Turn>,
}

impl From<RawSample> for InstructionSample {
    fn from(raw: RawSample) -> Self {
        let id = match raw.id {
            RawId::Str(s) => s,
            RawId::Int(i) => i.to_string(),
        };
        InstructionSample { id, image: raw.image, conversations: raw.conversations }
    }
}
