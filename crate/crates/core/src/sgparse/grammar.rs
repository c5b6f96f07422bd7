//! The pattern grammar.
//!
//! ```text
//! NP        := DET* (ADV? ADJ ((,|and) ADJ)*)? NOUN
//! Relation  := NP BE? ADV* (VERB PREP? | PREP) NP
//! Attribute := ADJ inside an NP | NP (BE|COPULA) ADV* ADJ ((,|and) ADJ)*
//! ```
//!
//! Multi-word nouns and prepositions are matched greedily, longest first.
//! A word that is both a noun and an adjective is a noun.

use std::collections::HashSet;

use super::{AnswerChunk, ChunkKind, ChunkSpan, Lexicon, Sentence};
use crate::text::{fold, tokenize, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitTag {
    Noun,
    Det,
    Adj,
    Verb,
    Prep,
    /// is / are / was / were: auxiliary or copula depending on what follows.
    Be,
    /// looks / appears / seems
    Copula,
    Aux,
    Adverb,
    Conj,
    Comma,
    Punct,
    Other,
}

/// A tagged token or multi-token noun/preposition. Offsets are into the turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub tag: UnitTag,
    pub start: usize,
    pub end: usize,
    pub lower: String,
    pub canonical: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounPhrase {
    /// First unit of the phrase (determiner, adjective or the noun).
    pub start_unit: usize,
    pub noun_unit: usize,
    pub adjectives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatch {
    pub subject_np: usize,
    pub object_np: usize,
    /// First and last unit of the predicate (auxiliaries excluded).
    pub predicate: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopulaAttribute {
    pub np: usize,
    pub copula_unit: usize,
    pub adjective_unit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    pub range: (usize, usize),
    pub units: Vec<Unit>,
    pub noun_phrases: Vec<NounPhrase>,
    pub relations: Vec<RelationMatch>,
    pub copula_attributes: Vec<CopulaAttribute>,
}

const BE: &[&str] = &["is", "are", "was", "were"];
const COPULA: &[&str] = &["looks", "look", "appears", "appear", "seems", "seem"];
const AUX: &[&str] = &["be", "being", "been"];

fn tag_units(lexicon: &Lexicon, turn_text: &str, range: (usize, usize)) -> Vec<Unit> {
    let offset = range.0;
    let tokens = tokenize(&turn_text[range.0..range.1]);
    let mut units = Vec::new();
    let mut i = 0;
    let word_run = |from: usize, len: usize| -> Option<String> {
        if from + len > tokens.len() {
            return None;
        }
        let slice = &tokens[from..from + len];
        if slice.iter().any(|t| t.kind != TokenKind::Word) {
            return None;
        }
        Some(slice.iter().map(|t| fold(t.text)).collect::<Vec<_>>().join(" "))
    };
    while i < tokens.len() {
        let tok = &tokens[i];
        if tok.kind == TokenKind::Punct {
            let tag = if tok.text == "," { UnitTag::Comma } else { UnitTag::Punct };
            units.push(Unit {
                tag,
                start: tok.start + offset,
                end: tok.end + offset,
                lower: tok.text.to_string(),
                canonical: None,
            });
            i += 1;
            continue;
        }
        let mut matched = None;
        for len in (1..=lexicon.max_noun_words()).rev() {
            if let Some(phrase) = word_run(i, len) {
                if let Some(canon) = lexicon.noun(&phrase) {
                    matched = Some((UnitTag::Noun, len, phrase, Some(canon)));
                    break;
                }
            }
        }
        if matched.is_none() {
            for len in (1..=lexicon.max_prep_words()).rev() {
                if let Some(phrase) = word_run(i, len) {
                    if lexicon.is_preposition(&phrase) {
                        matched = Some((UnitTag::Prep, len, phrase, None));
                        break;
                    }
                }
            }
        }
        let (tag, len, lower, canonical) = matched.unwrap_or_else(|| {
            let w = fold(tok.text);
            let tag = if lexicon.is_determiner(&w) {
                UnitTag::Det
            } else if BE.contains(&w.as_str()) {
                UnitTag::Be
            } else if COPULA.contains(&w.as_str()) {
                UnitTag::Copula
            } else if AUX.contains(&w.as_str()) {
                UnitTag::Aux
            } else if lexicon.is_adjective(&w) {
                UnitTag::Adj
            } else if lexicon.is_verb(&w) {
                UnitTag::Verb
            } else if super::lexicon::ADVERBS.contains(&w.as_str()) {
                UnitTag::Adverb
            } else if super::lexicon::CONJUNCTIONS.contains(&w.as_str()) {
                UnitTag::Conj
            } else {
                UnitTag::Other
            };
            (tag, 1, w, None)
        });
        let last = &tokens[i + len - 1];
        units.push(Unit { tag, start: tok.start + offset, end: last.end + offset, lower, canonical });
        i += len;
    }
    units
}

fn noun_phrases(units: &[Unit]) -> Vec<NounPhrase> {
    let mut nps = Vec::new();
    let mut claimed_until = 0usize;
    for (k, u) in units.iter().enumerate() {
        if u.tag != UnitTag::Noun {
            continue;
        }
        let mut adjectives = Vec::new();
        let mut start = k;
        let mut j = k;
        // adjectives, possibly joined by commas / "and", possibly with an adverb
        while j > claimed_until {
            let prev = &units[j - 1];
            match prev.tag {
                UnitTag::Adj => {
                    adjectives.push(j - 1);
                    start = j - 1;
                    j -= 1;
                }
                UnitTag::Adverb if !adjectives.is_empty() && start == j => {
                    start = j - 1;
                    j -= 1;
                }
                UnitTag::Comma | UnitTag::Conj
                    if !adjectives.is_empty() && j >= claimed_until + 2 && units[j - 2].tag == UnitTag::Adj =>
                {
                    j -= 1;
                }
                _ => break,
            }
        }
        while j > claimed_until && units[j - 1].tag == UnitTag::Det {
            start = j - 1;
            j -= 1;
        }
        adjectives.reverse();
        nps.push(NounPhrase { start_unit: start, noun_unit: k, adjectives });
        claimed_until = k + 1;
    }
    nps
}

fn relation_between(units: &[Unit], a: &NounPhrase, b: &NounPhrase) -> Option<(usize, usize)> {
    let mut i = a.noun_unit + 1;
    let end = b.start_unit;
    if i >= end {
        return None;
    }
    while i < end && matches!(units[i].tag, UnitTag::Be | UnitTag::Aux) {
        i += 1;
    }
    while i < end && units[i].tag == UnitTag::Adverb {
        i += 1;
    }
    if i >= end {
        return None;
    }
    let first = i;
    match units[i].tag {
        UnitTag::Verb | UnitTag::Copula => {
            i += 1;
            if i < end && units[i].tag == UnitTag::Prep {
                i += 1;
            }
        }
        UnitTag::Prep => i += 1,
        _ => return None,
    }
    (i == end).then_some((first, end - 1))
}

fn copula_attributes(units: &[Unit], nps: &[NounPhrase]) -> Vec<CopulaAttribute> {
    let in_np: HashSet<usize> = nps.iter().flat_map(|np| np.adjectives.iter().copied()).collect();
    let mut out = Vec::new();
    for (n, np) in nps.iter().enumerate() {
        let cop = np.noun_unit + 1;
        if cop >= units.len() || !matches!(units[cop].tag, UnitTag::Be | UnitTag::Copula) {
            continue;
        }
        let mut i = cop + 1;
        loop {
            while i < units.len() && units[i].tag == UnitTag::Adverb {
                i += 1;
            }
            if i >= units.len() || units[i].tag != UnitTag::Adj || in_np.contains(&i) {
                break;
            }
            out.push(CopulaAttribute { np: n, copula_unit: cop, adjective_unit: i });
            i += 1;
            if i < units.len() && matches!(units[i].tag, UnitTag::Comma | UnitTag::Conj) {
                i += 1;
                if i < units.len() && units[i].tag == UnitTag::Conj {
                    i += 1;
                }
            } else {
                break;
            }
        }
    }
    out
}

/// Tag and chunk one sentence located at `range` in `turn_text`.
pub fn parse_sentence(lexicon: &Lexicon, turn_text: &str, range: (usize, usize)) -> ParsedSentence {
    let units = tag_units(lexicon, turn_text, range);
    let noun_phrases = noun_phrases(&units);
    let relations = noun_phrases
        .windows(2)
        .enumerate()
        .filter_map(|(k, pair)| {
            relation_between(&units, &pair[0], &pair[1]).map(|predicate| RelationMatch {
                subject_np: k,
                object_np: k + 1,
                predicate,
            })
        })
        .collect();
    let copula_attributes = copula_attributes(&units, &noun_phrases);
    ParsedSentence { range, units, noun_phrases, relations, copula_attributes }
}

impl ParsedSentence {
    pub fn np_canonical(&self, np: usize) -> &str {
        self.units[self.noun_phrases[np].noun_unit].canonical.as_deref().expect("noun unit has canonical")
    }

    /// True if at least one unit carries scene content.
    pub fn has_content(&self, lexicon: &Lexicon) -> bool {
        self.units.iter().any(|u| match u.tag {
            UnitTag::Noun | UnitTag::Adj | UnitTag::Verb => true,
            UnitTag::Other => !lexicon.is_stopword(&u.lower) && u.lower.chars().any(char::is_alphanumeric),
            _ => false,
        })
    }
}

pub(crate) fn chunks_from_parse(parsed: &ParsedSentence, turn_text: &str, loc: &Sentence) -> Vec<AnswerChunk> {
    let units = &parsed.units;
    let mut raw: Vec<AnswerChunk> = Vec::new();
    let mut push = |kind: ChunkKind,
                    head: String,
                    subject: Option<String>,
                    object: Option<String>,
                    range: (usize, usize),
                    head_range: (usize, usize)| {
        let span = ChunkSpan {
            sample_id: loc.sample_id.clone(),
            turn_index: loc.turn_index,
            sentence_index: loc.sentence_index,
            char_range: range,
        };
        raw.push(AnswerChunk {
            chunk_id: AnswerChunk::make_id(&span, kind),
            kind,
            head,
            subject,
            object,
            surface: turn_text[range.0..range.1].to_string(),
            span,
            head_range,
        });
    };

    for (n, np) in parsed.noun_phrases.iter().enumerate() {
        let noun = &units[np.noun_unit];
        let canon = parsed.np_canonical(n).to_string();
        push(ChunkKind::Object, canon.clone(), None, None, (noun.start, noun.end), (noun.start, noun.end));
        for &a in &np.adjectives {
            let adj = &units[a];
            push(
                ChunkKind::Attribute,
                adj.lower.clone(),
                None,
                Some(canon.clone()),
                (adj.start, noun.end),
                (adj.start, adj.end),
            );
        }
    }
    for ca in &parsed.copula_attributes {
        let noun = &units[parsed.noun_phrases[ca.np].noun_unit];
        let adj = &units[ca.adjective_unit];
        push(
            ChunkKind::Attribute,
            adj.lower.clone(),
            None,
            Some(parsed.np_canonical(ca.np).to_string()),
            (noun.start, adj.end),
            (adj.start, adj.end),
        );
    }
    for rel in &parsed.relations {
        let subj = &units[parsed.noun_phrases[rel.subject_np].noun_unit];
        let obj = &units[parsed.noun_phrases[rel.object_np].noun_unit];
        let (p0, p1) = (units[rel.predicate.0].start, units[rel.predicate.1].end);
        push(
            ChunkKind::Relation,
            fold(&turn_text[p0..p1]),
            Some(parsed.np_canonical(rel.subject_np).to_string()),
            Some(parsed.np_canonical(rel.object_np).to_string()),
            (subj.start, obj.end),
            (p0, p1),
        );
    }

    raw.sort_by_key(|c| (c.span.char_range, c.kind));
    let mut seen = HashSet::new();
    raw.retain(|c| seen.insert(c.identity()));
    raw
}
