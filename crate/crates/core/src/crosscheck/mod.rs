//! Cross-checking chunks against expert answers, and removing the ones the
//! experts disagree with.

mod eliminate;
mod rewrite;
mod scorer;

use std::io::{BufRead, Write};
use std::path::Path;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eliminate::{carry_verdicts, EliminationResult, Eliminator};
pub use rewrite::{rewrite_external, HttpRewriter, Rewriter};
pub use scorer::{polarity, score_equivalence, EquivalenceScorer, HttpScorer, LexicalScorer, Polarity, ScoreRequest};

use crate::experts::ExpertAnswer;
use crate::probegen::GeneratedQuestion;
use crate::sgparse::{AnswerChunk, ChunkKind};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const SWEEP_THRESHOLDS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Error)]
pub enum CrossCheckError {
    #[error("verdict references unknown chunk {0:?}")]
    UnknownChunk(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertScore {
    pub expert_id: String,
    pub score: f64,
}

/// Outcome of cross-checking one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub chunk_id: String,
    pub sample_id: String,
    pub kind: ChunkKind,
    pub head: String,
    /// Scores of the experts that answered.
    pub per_expert: Vec<ExpertScore>,
    /// Experts whose call timed out or failed.
    #[serde(default)]
    pub failed_experts: Vec<String>,
    /// Mean of `per_expert`; absent when no expert answered.
    pub conscore: Option<f64>,
    pub is_hallucination: bool,
    pub unverifiable: bool,
}

impl ConsistencyVerdict {
    /// Same scores, new threshold.
    pub fn reclassify(&self, threshold: f64) -> ConsistencyVerdict {
        ConsistencyVerdict { is_hallucination: self.conscore.is_some_and(|c| classify(c, threshold)), ..self.clone() }
    }

    pub fn removable(&self) -> bool {
        self.is_hallucination && !self.unverifiable
    }
}

/// Arithmetic mean, correctly rounded from the exact rational mean.
/// `None` for an empty list.
pub fn compute_conscore(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let sum = scores
        .iter()
        .map(|&s| BigRational::from_float(s).expect("finite score"))
        .fold(BigRational::from_integer(0.into()), |acc, x| acc + x);
    let mean = sum / BigRational::from_integer(scores.len().into());
    mean.to_f64()
}

/// Hallucination iff `conscore < threshold`.
pub fn classify(conscore: f64, threshold: f64) -> bool {
    conscore < threshold
}

/// Score every ok answer against the chunk and vote.
pub fn cross_check(
    chunk: &AnswerChunk,
    question: &GeneratedQuestion,
    answers: &[ExpertAnswer],
    scorer: &dyn EquivalenceScorer,
    threshold: f64,
) -> ConsistencyVerdict {
    let mut per_expert = Vec::new();
    let mut failed_experts = Vec::new();
    let surface = match chunk.kind {
        ChunkKind::Object => chunk.head.as_str(),
        _ => chunk.surface.as_str(),
    };
    for a in answers {
        if a.is_ok() {
            let req = ScoreRequest {
                question: &question.text,
                kind: question.kind,
                reference: &question.expected_answer,
                surface,
                candidate: &a.text,
            };
            let score = scorer.score(&req).clamp(0.0, 1.0);
            per_expert.push(ExpertScore { expert_id: a.expert_id.clone(), score });
        } else {
            failed_experts.push(a.expert_id.clone());
        }
    }
    let scores: Vec<f64> = per_expert.iter().map(|e| e.score).collect();
    let conscore = compute_conscore(&scores);
    ConsistencyVerdict {
        chunk_id: chunk.chunk_id.clone(),
        sample_id: chunk.span.sample_id.clone(),
        kind: chunk.kind,
        head: chunk.head.clone(),
        per_expert,
        failed_experts,
        conscore,
        is_hallucination: conscore.is_some_and(|c| classify(c, threshold)),
        unverifiable: conscore.is_none(),
    }
}

pub fn write_verdicts(path: &Path, verdicts: &[ConsistencyVerdict]) -> Result<(), CrossCheckError> {
    let io = |source| CrossCheckError::Io { path: path.display().to_string(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for v in verdicts {
        serde_json::to_writer(&mut f, v).expect("verdict serializes");
        f.write_all(b"\n").map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<ConsistencyVerdict>, CrossCheckError> {
    let name = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| CrossCheckError::Io { path: name.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| CrossCheckError::Io { path: name.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| CrossCheckError::Parse {
            path: name.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}
