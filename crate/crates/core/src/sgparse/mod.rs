//! Rule-based textual scene-graph parsing: sentence splitting and extraction
//! of object, relation and attribute answer chunks.

mod external;
mod grammar;
mod lexicon;

pub use external::ExternalParser;
pub use grammar::{parse_sentence, NounPhrase, ParsedSentence, Unit, UnitTag};
pub use lexicon::{Lexicon, ADJECTIVES, COCO_CATEGORIES, COMMON_OBJECTS, DETERMINERS, PREPOSITIONS, STOPWORDS};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationSet, InstructionSample};
use crate::text::{fold, singularize};

/// A sentence cut from one conversation turn. `char_range` is a byte range
/// into the turn text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sample_id: String,
    pub turn_index: usize,
    pub sentence_index: usize,
    pub text: String,
    pub char_range: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkKind {
    Object,
    Relation,
    Attribute,
}

impl ChunkKind {
    fn code(self) -> char {
        match self {
            ChunkKind::Object => 'o',
            ChunkKind::Relation => 'r',
            ChunkKind::Attribute => 'a',
        }
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChunkKind::Object => "object",
            ChunkKind::Relation => "relation",
            ChunkKind::Attribute => "attribute",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub sample_id: String,
    pub turn_index: usize,
    pub sentence_index: usize,
    pub char_range: (usize, usize),
}

/// One object, relation or attribute parsed from a description.
///
/// `head` is the canonical noun (object), the predicate phrase (relation) or
/// the attribute word. For relations `subject`/`object` are the endpoint
/// nouns; for attributes `object` is the owner. `head_range` locates the head
/// words inside the turn text and is what elimination deletes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerChunk {
    pub chunk_id: String,
    pub kind: ChunkKind,
    pub head: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub surface: String,
    pub span: ChunkSpan,
    pub head_range: (usize, usize),
}

/// Identity used for deduplication and for elimination checks.
pub type ChunkIdentity = (ChunkKind, String, Option<String>, Option<String>);

impl AnswerChunk {
    pub fn identity(&self) -> ChunkIdentity {
        (self.kind, self.head.clone(), self.subject.clone(), self.object.clone())
    }

    pub fn make_id(span: &ChunkSpan, kind: ChunkKind) -> String {
        format!(
            "{}#t{}.s{}.{}{}-{}",
            span.sample_id,
            span.turn_index,
            span.sentence_index,
            kind.code(),
            span.char_range.0,
            span.char_range.1
        )
    }

    /// Check the structural invariants against the sample the chunk claims
    /// to come from.
    pub fn validate(&self, sample: &InstructionSample) -> Result<(), String> {
        match self.kind {
            ChunkKind::Object if self.subject.is_some() || self.object.is_some() => {
                return Err(format!("{}: object chunk with endpoints", self.chunk_id))
            }
            ChunkKind::Relation if self.subject.is_none() || self.object.is_none() => {
                return Err(format!("{}: relation chunk without both endpoints", self.chunk_id))
            }
            ChunkKind::Attribute if self.object.is_none() || self.subject.is_some() => {
                return Err(format!("{}: attribute chunk must have only an owner", self.chunk_id))
            }
            _ => {}
        }
        if self.span.sample_id != sample.id {
            return Err(format!("{}: span names sample {:?}", self.chunk_id, self.span.sample_id));
        }
        let turn = sample
            .conversations
            .get(self.span.turn_index)
            .ok_or_else(|| format!("{}: turn {} out of range", self.chunk_id, self.span.turn_index))?;
        let (s, e) = self.span.char_range;
        match turn.value.get(s..e) {
            Some(text) if text == self.surface => Ok(()),
            _ => Err(format!("{}: surface {:?} is not at {s}..{e}", self.chunk_id, self.surface)),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("external parser: {0}")]
    External(String),
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),
}

/// Anything that turns a sample into answer chunks.
pub trait ChunkExtractor: Send + Sync {
    fn extract(&self, sample: &InstructionSample) -> Result<Vec<AnswerChunk>, ParseError>;
}

const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "mr.", "mrs.", "ms.", "dr.", "vs.", "st."];

/// Split turn text into sentences.
///
/// A boundary is a run of `.`, `!` or `?` (plus closing quotes/brackets)
/// followed by whitespace or the end of the text. A lone period after a
/// guarded abbreviation or a bare list number is not a boundary. Returned
/// sentences carry empty sample ids and turn index 0; see [`sentences_of`].
pub fn split_sentences(turn_text: &str) -> Vec<Sentence> {
    let bytes = turn_text.as_bytes();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < bytes.len() {
        let c = turn_text[i..].chars().next().expect("char boundary");
        let len = c.len_utf8();
        if c.is_whitespace() {
            i += len;
            continue;
        }
        let s = *start.get_or_insert(i);
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            let mut single_period = true;
            let mut count = 0;
            while j < bytes.len() && matches!(bytes[j], b'.' | b'!' | b'?') {
                if bytes[j] != b'.' {
                    single_period = false;
                }
                j += 1;
                count += 1;
            }
            while j < bytes.len() && matches!(bytes[j], b'"' | b'\'' | b')' | b']') {
                j += 1;
            }
            let at_break = j >= bytes.len() || turn_text[j..].starts_with(char::is_whitespace);
            let guarded = single_period && count == 1 && is_guarded(&turn_text[s..i + 1]);
            if at_break && !guarded {
                push_sentence(&mut out, turn_text, s, j);
                start = None;
            }
            i = j;
            continue;
        }
        i += len;
    }
    if let Some(s) = start {
        let end = turn_text.trim_end().len();
        if end > s {
            push_sentence(&mut out, turn_text, s, end);
        }
    }
    out
}

fn is_guarded(upto_period: &str) -> bool {
    let word = upto_period.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
        || (lower.len() > 1 && lower[..lower.len() - 1].chars().all(|c| c.is_ascii_digit()))
}

fn push_sentence(out: &mut Vec<Sentence>, text: &str, s: usize, e: usize) {
    out.push(Sentence {
        sample_id: String::new(),
        turn_index: 0,
        sentence_index: out.len(),
        text: text[s..e].to_string(),
        char_range: (s, e),
    });
}

/// Sentences of every turn of a sample, located in the sample.
pub fn sentences_of(sample: &InstructionSample) -> Vec<Sentence> {
    let mut out = Vec::new();
    for (t, turn) in sample.conversations.iter().enumerate() {
        for mut s in split_sentences(&turn.value) {
            s.sample_id = sample.id.clone();
            s.turn_index = t;
            out.push(s);
        }
    }
    out
}

/// Fold, singularize and map through the image's synonym table.
///
/// Unknown images and unknown terms fall back to the normalized surface.
pub fn normalize_term(surface: &str, annotations: &AnnotationSet, image_id: &str) -> String {
    let folded = fold(surface);
    let single = singularize(&folded);
    if let Some(img) = annotations.get(image_id) {
        let table = img.synonym_table();
        if let Some(c) = table.get(&single).or_else(|| table.get(&folded)) {
            return c.clone();
        }
    }
    single
}

/// The built-in rule grammar over a [`Lexicon`].
#[derive(Debug, Clone)]
pub struct RuleParser {
    pub lexicon: Lexicon,
}

impl RuleParser {
    pub fn new(lexicon: Lexicon) -> Self {
        RuleParser { lexicon }
    }

    /// Chunks of one sentence of one turn; ids use the given location.
    pub fn sentence_chunks(&self, turn_text: &str, location: &Sentence) -> Vec<AnswerChunk> {
        let parsed = parse_sentence(&self.lexicon, turn_text, location.char_range);
        grammar::chunks_from_parse(&parsed, turn_text, location)
    }
}

impl ChunkExtractor for RuleParser {
    fn extract(&self, sample: &InstructionSample) -> Result<Vec<AnswerChunk>, ParseError> {
        Ok(extract_chunks(sample, &self.lexicon))
    }
}

/// Extract answer chunks from every turn of a sample, ordered by span.
pub fn extract_chunks(sample: &InstructionSample, lexicon: &Lexicon) -> Vec<AnswerChunk> {
    let mut out = Vec::new();
    for sentence in sentences_of(sample) {
        let turn = &sample.conversations[sentence.turn_index].value;
        let parsed = parse_sentence(lexicon, turn, sentence.char_range);
        out.extend(grammar::chunks_from_parse(&parsed, turn, &sentence));
    }
    out
}
