//! Extended CHAIR: sentence- and instance-level hallucination rates for
//! objects, relations and attributes against ground-truth annotations.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{AnnotationSet, Corpus, ImageAnnotation, InstructionSample, Role};
use crate::sgparse::{split_sentences, AnswerChunk, ChunkIdentity, ChunkKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChairError {
    #[error("image {0:?} has no annotations")]
    UnknownImage(String),
    #[error("{samples} samples but {chunk_lists} chunk lists")]
    Misaligned { samples: usize, chunk_lists: usize },
}

/// An exact ratio kept as raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn new(num: u64, den: u64) -> Self {
        Rate { num, den }
    }

    pub fn is_defined(&self) -> bool {
        self.den > 0
    }

    pub fn value(&self) -> Option<f64> {
        self.is_defined().then(|| self.num as f64 / self.den as f64)
    }

    /// `scale * num / den` rounded half up to one decimal, or "n/a".
    pub fn format_scaled(&self, scale: u64) -> String {
        if !self.is_defined() {
            return "n/a".into();
        }
        let n = self.num as u128 * scale as u128 * 10;
        let d = self.den as u128;
        let tenths = (2 * n + d) / (2 * d);
        format!("{}.{}", tenths / 10, tenths % 10)
    }

    /// Percentage with one decimal.
    pub fn percent(&self) -> String {
        self.format_scaled(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeRates {
    pub sentence: Rate,
    pub instance: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChairReport {
    pub obj: TypeRates,
    pub rel: TypeRates,
    pub attri: TypeRates,
    /// Assistant words per sample.
    pub avg_length: Rate,
    pub samples: u64,
    pub sentences: u64,
    pub corpus_id: String,
    pub annotation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

/// Hallucination flags for one assistant sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceFlags {
    pub sample_id: String,
    pub turn_index: usize,
    pub sentence_index: usize,
    pub obj: bool,
    pub rel: bool,
    pub attri: bool,
}

/// Whether `term` names an object annotated in `image_id`.
pub fn object_exists(term: &str, image_id: &str, annotations: &AnnotationSet) -> Result<bool, ChairError> {
    let img = annotations.get(image_id).ok_or_else(|| ChairError::UnknownImage(image_id.into()))?;
    Ok(img.contains_object(term))
}

/// Per-chunk verdict against the annotations. `None` means the chunk does not
/// count (a relation or attribute with a nonexistent endpoint).
fn chunk_hallucinated(c: &AnswerChunk, img: &ImageAnnotation) -> Option<bool> {
    match c.kind {
        ChunkKind::Object => Some(!img.contains_object(&c.head)),
        ChunkKind::Relation => {
            let (s, o) = (c.subject.as_deref()?, c.object.as_deref()?);
            (img.contains_object(s) && img.contains_object(o)).then(|| !img.has_relation(s, &c.head, o))
        }
        ChunkKind::Attribute => {
            let o = c.object.as_deref()?;
            img.contains_object(o).then(|| !img.has_attribute(o, &c.head))
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    sentences: u64,
    words: u64,
    sent: [u64; 3],
    inst_num: [u64; 3],
    inst_den: [u64; 3],
    flags: Vec<SentenceFlags>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.sentences += other.sentences;
        self.words += other.words;
        for k in 0..3 {
            self.sent[k] += other.sent[k];
            self.inst_num[k] += other.inst_num[k];
            self.inst_den[k] += other.inst_den[k];
        }
        self.flags.extend(other.flags);
        self
    }
}

fn slot(kind: ChunkKind) -> usize {
    match kind {
        ChunkKind::Object => 0,
        ChunkKind::Relation => 1,
        ChunkKind::Attribute => 2,
    }
}

fn tally_sample(
    sample: &InstructionSample,
    chunks: &[AnswerChunk],
    annotations: &AnnotationSet,
) -> Result<Tally, ChairError> {
    let img = annotations.get(&sample.image).ok_or_else(|| ChairError::UnknownImage(sample.image.clone()))?;
    let mut t = Tally::default();
    for (ti, turn) in sample.conversations.iter().enumerate() {
        if turn.from != Role::Assistant {
            continue;
        }
        t.words += turn.value.split_whitespace().count() as u64;
        for s in split_sentences(&turn.value) {
            t.sentences += 1;
            let mut seen: HashSet<ChunkIdentity> = HashSet::new();
            let mut flag = [false; 3];
            for c in chunks.iter().filter(|c| c.span.turn_index == ti && c.span.sentence_index == s.sentence_index) {
                if !seen.insert(c.identity()) {
                    continue;
                }
                let k = slot(c.kind);
                t.inst_den[k] += 1;
                if chunk_hallucinated(c, img) == Some(true) {
                    t.inst_num[k] += 1;
                    flag[k] = true;
                }
            }
            for (sent, hit) in t.sent.iter_mut().zip(flag) {
                *sent += hit as u64;
            }
            t.flags.push(SentenceFlags {
                sample_id: sample.id.clone(),
                turn_index: ti,
                sentence_index: s.sentence_index,
                obj: flag[0],
                rel: flag[1],
                attri: flag[2],
            });
        }
    }
    Ok(t)
}

fn tally(corpus: &Corpus, chunks: &[Vec<AnswerChunk>], annotations: &AnnotationSet) -> Result<Tally, ChairError> {
    if corpus.samples.len() != chunks.len() {
        return Err(ChairError::Misaligned { samples: corpus.samples.len(), chunk_lists: chunks.len() });
    }
    let parts: Vec<Tally> = corpus
        .samples
        .par_iter()
        .zip(chunks.par_iter())
        .map(|(s, c)| tally_sample(s, c, annotations))
        .collect::<Result<_, _>>()?;
    Ok(parts.into_iter().fold(Tally::default(), Tally::merge))
}

/// Flags of every assistant sentence, in corpus order.
pub fn sentence_flags(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    annotations: &AnnotationSet,
) -> Result<Vec<SentenceFlags>, ChairError> {
    Ok(tally(corpus, chunks, annotations)?.flags)
}

/// Sentence-level rates `(obj, rel, attri)`.
pub fn sentence_chair(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    annotations: &AnnotationSet,
) -> Result<[Rate; 3], ChairError> {
    let t = tally(corpus, chunks, annotations)?;
    Ok(t.sent.map(|n| Rate::new(n, t.sentences)))
}

/// Instance-level rates `(obj, rel, attri)`.
pub fn instance_chair(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    annotations: &AnnotationSet,
) -> Result<[Rate; 3], ChairError> {
    let t = tally(corpus, chunks, annotations)?;
    Ok([0, 1, 2].map(|k| Rate::new(t.inst_num[k], t.inst_den[k])))
}

pub fn corpus_id(corpus: &Corpus) -> String {
    hex::encode(Sha256::digest(corpus.to_jsonl().as_bytes()))
}

pub fn annotation_id(annotations: &AnnotationSet) -> String {
    hex::encode(Sha256::digest(annotations.to_json().as_bytes()))
}

pub fn chair_report(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    annotations: &AnnotationSet,
) -> Result<ChairReport, ChairError> {
    let t = tally(corpus, chunks, annotations)?;
    let rates = |k: usize| TypeRates {
        sentence: Rate::new(t.sent[k], t.sentences),
        instance: Rate::new(t.inst_num[k], t.inst_den[k]),
    };
    Ok(ChairReport {
        obj: rates(0),
        rel: rates(1),
        attri: rates(2),
        avg_length: Rate::new(t.words, corpus.samples.len() as u64),
        samples: corpus.samples.len() as u64,
        sentences: t.sentences,
        corpus_id: corpus_id(corpus),
        annotation_id: annotation_id(annotations),
        run_id: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

/// Render one report as JSON or as a single-row markdown table.
pub fn render_report(report: &ChairReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(&[("corpus", report)]),
    }
}

/// One sentence row and one instance row per labelled report.
pub fn render_markdown(rows: &[(&str, &ChairReport)]) -> String {
    let mut out = String::new();
    out.push_str("| Data | Level | CHAIR_obj | CHAIR_rel | CHAIR_attri | Length |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for (label, r) in rows {
        for (level, pick) in [("sentence", 0), ("instance", 1)] {
            let cell = |t: &TypeRates| if pick == 0 { t.sentence.percent() } else { t.instance.percent() };
            let _ = writeln!(
                out,
                "| {label} | {level} | {} | {} | {} | {} |",
                cell(&r.obj),
                cell(&r.rel),
                cell(&r.attri),
                r.avg_length.format_scaled(1)
            );
        }
    }
    if let Some((_, first)) = rows.first() {
        let _ = writeln!(out, "\ncorpus `{}`, annotations `{}`", short(&first.corpus_id), short(&first.annotation_id));
        if let Some(run) = &first.run_id {
            let _ = writeln!(out, "run `{}`", short(run));
        }
    }
    out
}

fn short(id: &str) -> &str {
    &id[..id.len().min(12)]
}
