use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ConsistencyVerdict, CrossCheckError};
use crate::corpus::{InstructionSample, Role, Turn};
use crate::sgparse::{
    parse_sentence, split_sentences, AnswerChunk, ChunkIdentity, ChunkKind, Lexicon, ParsedSentence, RuleParser,
    Sentence, UnitTag,
};
use crate::text::{article, fold, is_plural};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationResult {
    pub sample_id: String,
    pub rewritten_turns: Vec<Turn>,
    /// Flagged chunks that no longer appear.
    pub removed_chunk_ids: Vec<String>,
    /// Unflagged attribute/relation chunks removed with their flagged object.
    #[serde(default)]
    pub cascaded_chunk_ids: Vec<String>,
    /// `(turn, sentence)` pairs of sentences removed entirely.
    pub dropped_sentences: Vec<(usize, usize)>,
    /// Subset of `dropped_sentences` dropped because the rules could not
    /// produce a verified edit.
    #[serde(default)]
    pub fallback_sentences: Vec<(usize, usize)>,
}

impl EliminationResult {
    /// The sample with its turns replaced.
    pub fn apply(&self, sample: &InstructionSample) -> InstructionSample {
        InstructionSample { conversations: self.rewritten_turns.clone(), ..sample.clone() }
    }

    pub fn changed(&self, sample: &InstructionSample) -> bool {
        self.rewritten_turns != sample.conversations
    }
}

/// Deterministic span-removal rules over the rule grammar.
#[derive(Debug, Clone)]
pub struct Eliminator {
    parser: RuleParser,
    removable: Vec<Role>,
}

enum SentenceEdit {
    Keep(String),
    Drop { fallback: bool },
}

fn is_separator(tag: UnitTag) -> bool {
    matches!(tag, UnitTag::Comma | UnitTag::Conj)
}

impl Eliminator {
    /// Only assistant turns are edited.
    pub fn new(lexicon: Lexicon) -> Self {
        Eliminator { parser: RuleParser::new(lexicon), removable: vec![Role::Assistant] }
    }

    pub fn with_removable_roles(mut self, roles: Vec<Role>) -> Self {
        self.removable = roles;
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.parser.lexicon
    }

    /// Flagged chunks that sit in removable turns.
    pub fn flagged<'a>(
        &self,
        sample: &InstructionSample,
        chunks: &'a [AnswerChunk],
        verdicts: &[ConsistencyVerdict],
    ) -> Result<Vec<&'a AnswerChunk>, CrossCheckError> {
        let by_id: HashMap<&str, &AnswerChunk> = chunks.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
        let mut flagged_ids = HashSet::new();
        for v in verdicts {
            if !by_id.contains_key(v.chunk_id.as_str()) {
                return Err(CrossCheckError::UnknownChunk(v.chunk_id.clone()));
            }
            if v.removable() {
                flagged_ids.insert(v.chunk_id.as_str());
            }
        }
        Ok(chunks
            .iter()
            .filter(|c| flagged_ids.contains(c.chunk_id.as_str()))
            .filter(|c| sample.conversations.get(c.span.turn_index).is_some_and(|t| self.removable.contains(&t.from)))
            .collect())
    }

    pub fn eliminate(
        &self,
        sample: &InstructionSample,
        chunks: &[AnswerChunk],
        verdicts: &[ConsistencyVerdict],
    ) -> Result<EliminationResult, CrossCheckError> {
        let flagged = self.flagged(sample, chunks, verdicts)?;
        let flagged_ids: HashSet<&str> = flagged.iter().map(|c| c.chunk_id.as_str()).collect();
        let mut by_sentence: BTreeMap<(usize, usize), Vec<&AnswerChunk>> = BTreeMap::new();
        for c in chunks {
            by_sentence.entry((c.span.turn_index, c.span.sentence_index)).or_default().push(c);
        }
        let touched: BTreeMap<(usize, usize), &Vec<&AnswerChunk>> = by_sentence
            .iter()
            .filter(|(_, cs)| cs.iter().any(|c| flagged_ids.contains(c.chunk_id.as_str())))
            .map(|(k, v)| (*k, v))
            .collect();

        let mut result = EliminationResult {
            sample_id: sample.id.clone(),
            rewritten_turns: sample.conversations.clone(),
            removed_chunk_ids: flagged.iter().map(|c| c.chunk_id.clone()).collect(),
            cascaded_chunk_ids: Vec::new(),
            dropped_sentences: Vec::new(),
            fallback_sentences: Vec::new(),
        };

        let turns: Vec<usize> =
            touched.keys().map(|(t, _)| *t).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        for t in turns {
            let text = &sample.conversations[t].value;
            let sentences = split_sentences(text);
            let mut replaced: Vec<Option<String>> = sentences.iter().map(|s| Some(s.text.clone())).collect();
            for (i, sentence) in sentences.iter().enumerate() {
                let Some(cs) = touched.get(&(t, i)) else { continue };
                let flagged_here: Vec<&AnswerChunk> =
                    cs.iter().copied().filter(|c| flagged_ids.contains(c.chunk_id.as_str())).collect();
                let dead_objects: HashSet<&str> =
                    flagged_here.iter().filter(|c| c.kind == ChunkKind::Object).map(|c| c.head.as_str()).collect();
                for c in cs.iter().filter(|c| !flagged_ids.contains(c.chunk_id.as_str())) {
                    if attached_to(c, &dead_objects) {
                        result.cascaded_chunk_ids.push(c.chunk_id.clone());
                    }
                }
                match self.edit_sentence(sample, t, text, sentence, cs, &flagged_here, &dead_objects) {
                    SentenceEdit::Keep(s) => replaced[i] = Some(s),
                    SentenceEdit::Drop { fallback } => {
                        replaced[i] = None;
                        result.dropped_sentences.push((t, i));
                        if fallback {
                            log::warn!("{}: turn {t} sentence {i} could not be edited cleanly; dropped", sample.id);
                            result.fallback_sentences.push((t, i));
                        }
                    }
                }
            }
            result.rewritten_turns[t].value = join_sentences(text, &sentences, &replaced);
        }
        Ok(result)
    }

    #[allow(clippy::too_many_arguments)]
    fn edit_sentence(
        &self,
        sample: &InstructionSample,
        turn: usize,
        text: &str,
        sentence: &Sentence,
        chunks: &[&AnswerChunk],
        flagged: &[&AnswerChunk],
        dead_objects: &HashSet<&str>,
    ) -> SentenceEdit {
        let lexicon = &self.parser.lexicon;
        let parsed = parse_sentence(lexicon, text, sentence.char_range);
        let Some(deleted) = mark_deletions(&parsed, text, flagged, dead_objects) else {
            return SentenceEdit::Drop { fallback: true };
        };
        let new_text = rebuild(&parsed, text, deleted, lexicon);
        let reparsed = parse_sentence(lexicon, &new_text, (0, new_text.len()));
        if !reparsed.has_content(lexicon) {
            return SentenceEdit::Drop { fallback: false };
        }

        // verify: flagged identities gone, everything else that should survive is still there
        let loc = Sentence {
            sample_id: sample.id.clone(),
            turn_index: turn,
            sentence_index: 0,
            text: new_text.clone(),
            char_range: (0, new_text.len()),
        };
        let after: HashSet<ChunkIdentity> =
            self.parser.sentence_chunks(&new_text, &loc).iter().map(AnswerChunk::identity).collect();
        let flagged_ids: HashSet<&str> = flagged.iter().map(|c| c.chunk_id.as_str()).collect();
        let sound = flagged.iter().all(|c| !after.contains(&c.identity()));
        let conservative = chunks
            .iter()
            .filter(|c| !flagged_ids.contains(c.chunk_id.as_str()) && !attached_to(c, dead_objects))
            .all(|c| after.contains(&c.identity()));
        if sound && conservative {
            SentenceEdit::Keep(new_text)
        } else {
            SentenceEdit::Drop { fallback: true }
        }
    }
}

/// True for attribute/relation chunks that hang off a removed object.
fn attached_to(c: &AnswerChunk, dead_objects: &HashSet<&str>) -> bool {
    c.kind != ChunkKind::Object
        && [c.subject.as_deref(), c.object.as_deref()].into_iter().flatten().any(|o| dead_objects.contains(o))
}

fn mark_range(deleted: &mut [bool], from: usize, to_inclusive: usize) {
    for d in deleted.iter_mut().take(to_inclusive + 1).skip(from) {
        *d = true;
    }
}

/// Unit-level deletions for the flagged chunks of one sentence, or `None` if
/// some flagged chunk has no counterpart in the rule parse.
fn mark_deletions(
    parsed: &ParsedSentence,
    text: &str,
    flagged: &[&AnswerChunk],
    dead_objects: &HashSet<&str>,
) -> Option<Vec<bool>> {
    let units = &parsed.units;
    let nps = &parsed.noun_phrases;
    let mut deleted = vec![false; units.len()];
    let canon = |n: usize| parsed.np_canonical(n);

    // copula runs: (np, copula unit) -> adjective units in order
    let mut runs: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for ca in &parsed.copula_attributes {
        runs.entry((ca.np, ca.copula_unit)).or_default().push(ca.adjective_unit);
    }
    for c in flagged {
        match c.kind {
            ChunkKind::Object => {
                let hits: Vec<usize> = (0..nps.len()).filter(|&n| canon(n) == c.head).collect();
                if hits.is_empty() {
                    return None;
                }
                for n in hits {
                    mark_range(&mut deleted, nps[n].start_unit, nps[n].noun_unit);
                    for ((np, cop), adjs) in &runs {
                        if *np == n {
                            mark_range(&mut deleted, *cop, *adjs.last().expect("non-empty run"));
                        }
                    }
                    for r in parsed.relations.iter().filter(|r| r.subject_np == n || r.object_np == n) {
                        mark_range(&mut deleted, nps[r.subject_np].noun_unit + 1, nps[r.object_np].start_unit - 1);
                    }
                }
            }
            ChunkKind::Attribute => {
                let owner = c.object.as_deref()?;
                if dead_objects.contains(owner) {
                    continue;
                }
                let mut found = false;
                for np in nps.iter().enumerate().filter(|(n, _)| canon(*n) == owner).map(|(_, np)| np) {
                    for &a in np.adjectives.iter().filter(|&&a| units[a].lower == c.head) {
                        found = true;
                        deleted[a] = true;
                        let mut j = a;
                        while j > np.start_unit && units[j - 1].tag == UnitTag::Adverb {
                            j -= 1;
                            deleted[j] = true;
                        }
                    }
                }
                for ((np, cop), adjs) in &runs {
                    if canon(*np) != owner {
                        continue;
                    }
                    for &a in adjs.iter().filter(|&&a| units[a].lower == c.head) {
                        found = true;
                        deleted[a] = true;
                        let mut j = a;
                        while j > cop + 1 && units[j - 1].tag == UnitTag::Adverb {
                            j -= 1;
                            deleted[j] = true;
                        }
                    }
                    if adjs.iter().all(|&a| deleted[a]) {
                        mark_range(&mut deleted, *cop, *adjs.last().expect("non-empty run"));
                    }
                }
                if !found {
                    return None;
                }
            }
            ChunkKind::Relation => {
                let (subj, obj) = (c.subject.as_deref()?, c.object.as_deref()?);
                if dead_objects.contains(subj) || dead_objects.contains(obj) {
                    continue;
                }
                let mut found = false;
                for r in &parsed.relations {
                    let (p0, p1) = (units[r.predicate.0].start, units[r.predicate.1].end);
                    if canon(r.subject_np) == subj && canon(r.object_np) == obj && fold(&text[p0..p1]) == c.head {
                        found = true;
                        mark_range(&mut deleted, nps[r.subject_np].noun_unit + 1, nps[r.object_np].start_unit - 1);
                    }
                }
                if !found {
                    return None;
                }
            }
        }
    }
    Some(deleted)
}

fn starts_np(tag: UnitTag) -> bool {
    matches!(tag, UnitTag::Det | UnitTag::Adj | UnitTag::Adverb | UnitTag::Noun)
}

fn carries_content(tag: UnitTag, lower: &str, lexicon: &Lexicon) -> bool {
    match tag {
        UnitTag::Noun | UnitTag::Adj | UnitTag::Verb => true,
        UnitTag::Other => !lexicon.is_stopword(lower),
        _ => false,
    }
}

/// Apply deletions plus the repair rules and render the sentence.
fn rebuild(parsed: &ParsedSentence, text: &str, mut deleted: Vec<bool>, lexicon: &Lexicon) -> String {
    let units = &parsed.units;
    let n = units.len();
    let near_deletion = |deleted: &[bool], i: usize| (i > 0 && deleted[i - 1]) || (i + 1 < n && deleted[i + 1]);
    let prev_kept = |deleted: &[bool], i: usize| (0..i).rev().find(|&j| !deleted[j]);
    let next_kept = |deleted: &[bool], i: usize| (i + 1..n).find(|&j| !deleted[j]);

    // separator repair, to a fixed point
    loop {
        let mut changed = false;
        for i in 0..n {
            if deleted[i] || !is_separator(units[i].tag) || !near_deletion(&deleted, i) {
                continue;
            }
            let p = prev_kept(&deleted, i);
            let nx = next_kept(&deleted, i);
            let dangling_left = p.is_none_or(|p| !carries_content(units[p].tag, &units[p].lower, lexicon));
            let dangling_right =
                nx.is_none_or(|j| matches!(units[j].tag, UnitTag::Punct | UnitTag::Comma | UnitTag::Conj));
            let list_tail = matches!(
                (p.map(|p| units[p].tag), nx.map(|j| units[j].tag)),
                (Some(UnitTag::Adj), Some(UnitTag::Noun))
            );
            if dangling_left || dangling_right || list_tail {
                deleted[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&i| !deleted[i]).collect();
    let mut replacement: HashMap<usize, String> = HashMap::new();
    let mut and_before: HashSet<usize> = HashSet::new();

    // two noun phrases that became adjacent get joined with "and"
    for w in kept.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q > p + 1 && units[p].tag == UnitTag::Noun && starts_np(units[q].tag) {
            and_before.insert(q);
        }
    }

    // "there are" + one singular noun phrase
    for (k, &i) in kept.iter().enumerate() {
        if units[i].lower != "there" || k + 1 >= kept.len() || units[kept[k + 1]].lower != "are" {
            continue;
        }
        let nouns: Vec<usize> = kept[k + 2..]
            .iter()
            .copied()
            .take_while(|&j| starts_np(units[j].tag) || is_separator(units[j].tag))
            .filter(|&j| units[j].tag == UnitTag::Noun)
            .collect();
        let plural_det = kept[k + 2..].iter().take_while(|&&j| units[j].tag != UnitTag::Noun).any(|&j| {
            units[j].tag == UnitTag::Det
                && !matches!(units[j].lower.as_str(), "a" | "an" | "one" | "the" | "this" | "that")
        });
        if nouns.len() == 1 && !is_plural(&units[nouns[0]].lower) && !plural_det {
            let are = kept[k + 1];
            let orig = &text[units[are].start..units[are].end];
            replacement.insert(are, if orig.starts_with('A') { "Is".into() } else { "is".into() });
        }
    }

    // a/an agreement
    for (k, &i) in kept.iter().enumerate() {
        if !matches!(units[i].lower.as_str(), "a" | "an") || k + 1 >= kept.len() {
            continue;
        }
        let next = kept[k + 1];
        let want = article(&text[units[next].start..units[next].end]);
        if want != units[i].lower {
            let orig = &text[units[i].start..units[i].end];
            let cased = if orig.starts_with(char::is_uppercase) { capitalize(want) } else { want.to_string() };
            replacement.insert(i, cased);
        }
    }

    let mut out = String::new();
    let mut prev: Option<usize> = None;
    for &i in &kept {
        let piece = replacement.get(&i).cloned().unwrap_or_else(|| text[units[i].start..units[i].end].to_string());
        if let Some(p) = prev {
            if and_before.contains(&i) {
                out.push_str(" and ");
            } else if i == p + 1 {
                out.push_str(&text[units[p].end..units[i].start]);
            } else if !matches!(units[i].tag, UnitTag::Comma | UnitTag::Punct) {
                out.push(' ');
            }
        }
        out.push_str(&piece);
        prev = Some(i);
    }

    let original_capital = units.first().is_some_and(|u| text[u.start..].starts_with(char::is_uppercase));
    if original_capital && out.starts_with(char::is_lowercase) {
        out = capitalize(&out);
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Reassemble a turn from per-sentence replacements, keeping the original
/// whitespace around untouched sentences.
fn join_sentences(text: &str, sentences: &[Sentence], replaced: &[Option<String>]) -> String {
    let mut out = String::new();
    let mut cursor = 0;
    let mut any = false;
    let leading = sentences.first().map_or("", |s| &text[..s.char_range.0]);
    for (s, r) in sentences.iter().zip(replaced) {
        let gap = &text[cursor..s.char_range.0];
        cursor = s.char_range.1;
        if let Some(r) = r {
            out.push_str(if any { gap } else { leading });
            out.push_str(r);
            any = true;
        }
    }
    if any {
        out.push_str(&text[cursor..]);
    }
    out
}

/// Re-key verdicts onto freshly extracted chunks by (sample, turn, identity).
pub fn carry_verdicts(
    original: &[AnswerChunk],
    verdicts: &[ConsistencyVerdict],
    fresh: &[AnswerChunk],
) -> Vec<ConsistencyVerdict> {
    let by_id: HashMap<&str, &ConsistencyVerdict> = verdicts.iter().map(|v| (v.chunk_id.as_str(), v)).collect();
    let mut by_identity: HashMap<(String, usize, ChunkIdentity), &ConsistencyVerdict> = HashMap::new();
    for c in original {
        if let Some(v) = by_id.get(c.chunk_id.as_str()) {
            by_identity.entry((c.span.sample_id.clone(), c.span.turn_index, c.identity())).or_insert(v);
        }
    }
    fresh
        .iter()
        .filter_map(|c| {
            let v = by_identity.get(&(c.span.sample_id.clone(), c.span.turn_index, c.identity()))?;
            Some(ConsistencyVerdict { chunk_id: c.chunk_id.clone(), ..(*v).clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgparse::extract_chunks;

    fn lexicon() -> Lexicon {
        let mut lex = Lexicon::builtin();
        lex.add_nouns(["unicorn", "park"]);
        lex
    }

    fn sample(text: &str) -> InstructionSample {
        InstructionSample::new("s", "im", vec![Turn::human("Describe the image."), Turn::assistant(text)])
    }

    fn verdict(c: &AnswerChunk, bad: bool) -> ConsistencyVerdict {
        ConsistencyVerdict {
            chunk_id: c.chunk_id.clone(),
            sample_id: c.span.sample_id.clone(),
            kind: c.kind,
            head: c.head.clone(),
            per_expert: vec![],
            failed_experts: vec![],
            conscore: Some(if bad { 0.0 } else { 1.0 }),
            is_hallucination: bad,
            unverifiable: false,
        }
    }

    /// Flag chunks whose "kind:head" key is listed, e.g. "o:kite", "a:red", "r:riding".
    fn run(text: &str, flags: &[&str]) -> (EliminationResult, Vec<AnswerChunk>, Vec<ConsistencyVerdict>) {
        let lex = lexicon();
        let s = sample(text);
        let chunks = extract_chunks(&s, &lex);
        let verdicts: Vec<_> = chunks
            .iter()
            .map(|c| {
                let key = format!("{}:{}", &c.kind.to_string()[..1], c.head);
                verdict(c, flags.contains(&key.as_str()))
            })
            .collect();
        let r = Eliminator::new(lex).eliminate(&s, &chunks, &verdicts).unwrap();
        (r, chunks, verdicts)
    }

    fn out(text: &str, flags: &[&str]) -> String {
        run(text, flags).0.rewritten_turns[1].value.clone()
    }

    #[test]
    fn object_in_there_are_list() {
        assert_eq!(out("There are a few traffic lights and a kite.", &["o:traffic light"]), "There is a kite.");
        assert_eq!(out("There are a few traffic lights and a kite.", &["o:kite"]), "There are a few traffic lights.");
        assert_eq!(out("There is a dog, a cat and a kite.", &["o:cat"]), "There is a dog and a kite.");
    }

    #[test]
    fn no_flags_is_identity() {
        let text = "  A man riding a red bicycle.\nThe sky is blue!  ";
        let (r, ..) = run(text, &[]);
        assert_eq!(r.rewritten_turns[1].value, text);
        assert!(r.removed_chunk_ids.is_empty() && r.dropped_sentences.is_empty());
    }

    #[test]
    fn fully_flagged_sentence_is_dropped() {
        let (r, ..) = run("A dog sleeps. There is a unicorn. The grass is green.", &["o:unicorn"]);
        assert_eq!(r.rewritten_turns[1].value, "A dog sleeps. The grass is green.");
        assert_eq!(r.dropped_sentences, [(1, 1)]);
        assert!(r.fallback_sentences.is_empty());
    }

    #[test]
    fn attribute_lists() {
        let text = "A man riding a big, old and dirty bus.";
        assert_eq!(out(text, &["a:old"]), "A man riding a big and dirty bus.");
        assert_eq!(out(text, &["a:big"]), "A man riding an old and dirty bus.");
        assert_eq!(out(text, &["a:dirty"]), "A man riding a big, old bus.");
        assert_eq!(out("A very red kite.", &["a:red"]), "A kite.");
    }

    #[test]
    fn copula_attributes() {
        assert_eq!(out("The sky is blue and cloudy.", &["a:blue"]), "The sky is cloudy.");
        assert_eq!(out("The sky is blue and cloudy.", &["a:cloudy"]), "The sky is blue.");
        assert_eq!(out("The sky is blue and cloudy.", &["a:blue", "a:cloudy"]), "The sky.");
    }

    #[test]
    fn relations_become_coordination() {
        assert_eq!(out("A man riding a bicycle.", &["r:riding"]), "A man and a bicycle.");
        assert_eq!(out("The cat is sitting on the bed.", &["r:sitting on"]), "The cat and the bed.");
    }

    #[test]
    fn object_cascades_to_attached_chunks() {
        let (r, chunks, _) = run("A man riding a unicorn on the beach.", &["o:unicorn"]);
        assert_eq!(r.rewritten_turns[1].value, "A man and the beach.");
        let cascaded: Vec<&str> =
            chunks.iter().filter(|c| r.cascaded_chunk_ids.contains(&c.chunk_id)).map(|c| c.head.as_str()).collect();
        assert_eq!(cascaded, ["riding", "on"]);
        assert_eq!(out("A man riding a white unicorn.", &["o:unicorn"]), "A man.");
        assert_eq!(out("The unicorn is on the beach.", &["o:unicorn"]), "The beach.");
    }

    #[test]
    fn human_turns_are_not_edited() {
        let lex = lexicon();
        let s =
            InstructionSample::new("s", "im", vec![Turn::human("Is there a kite?"), Turn::assistant("A kite flies.")]);
        let chunks = extract_chunks(&s, &lex);
        let verdicts: Vec<_> = chunks.iter().map(|c| verdict(c, c.span.turn_index == 0)).collect();
        let r = Eliminator::new(lex).eliminate(&s, &chunks, &verdicts).unwrap();
        assert_eq!(r.rewritten_turns, s.conversations);
        assert!(r.removed_chunk_ids.is_empty());
    }

    #[test]
    fn unverifiable_is_never_removed() {
        let lex = lexicon();
        let s = sample("A unicorn.");
        let chunks = extract_chunks(&s, &lex);
        let mut v = verdict(&chunks[0], false);
        v.conscore = None;
        v.unverifiable = true;
        let r = Eliminator::new(lex).eliminate(&s, &chunks, &[v]).unwrap();
        assert!(!r.changed(&s));
    }

    #[test]
    fn unknown_chunk_is_an_error() {
        let lex = lexicon();
        let s = sample("A dog.");
        let chunks = extract_chunks(&s, &lex);
        let mut v = verdict(&chunks[0], true);
        v.chunk_id = "nope".into();
        assert!(matches!(Eliminator::new(lex).eliminate(&s, &chunks, &[v]), Err(CrossCheckError::UnknownChunk(_))));
    }

    #[test]
    fn sound_conservative_and_idempotent() {
        let cases: &[(&str, &[&str])] = &[
            (
                "There are a few traffic lights and a kite. Two people flying kites on the beach, near a big, old bus.",
                &["o:traffic light", "a:old"],
            ),
            ("A man riding a red bicycle next to a car. The sky is blue and cloudy.", &["r:riding", "a:cloudy"]),
            ("A cat is sitting on the bed. A laptop and a cup are on the table.", &["o:cup", "o:cat"]),
            ("A brown dog chases a frisbee in the park. There is a unicorn.", &["o:unicorn", "a:brown"]),
        ];
        let lex = lexicon();
        let elim = Eliminator::new(lex.clone());
        for (text, flags) in cases {
            let (r, chunks, verdicts) = run(text, flags);
            assert!(r.fallback_sentences.is_empty(), "{text}: {r:?}");
            let edited = r.apply(&sample(text));
            let after: HashSet<ChunkIdentity> =
                extract_chunks(&edited, &lex).iter().map(AnswerChunk::identity).collect();
            let flagged: HashSet<&str> =
                verdicts.iter().filter(|v| v.is_hallucination).map(|v| v.chunk_id.as_str()).collect();
            for c in &chunks {
                let dropped = r.dropped_sentences.contains(&(c.span.turn_index, c.span.sentence_index));
                if flagged.contains(c.chunk_id.as_str()) {
                    assert!(
                        !after.contains(&c.identity()),
                        "{text}: {:?} survived in {:?}",
                        c.identity(),
                        edited.conversations[1].value
                    );
                } else if !r.cascaded_chunk_ids.contains(&c.chunk_id) && !dropped {
                    assert!(
                        after.contains(&c.identity()),
                        "{text}: lost {:?} in {:?}",
                        c.identity(),
                        edited.conversations[1].value
                    );
                }
            }
            // same verdicts, carried onto the new chunks by identity
            let fresh = extract_chunks(&edited, &lex);
            let carried = carry_verdicts(&chunks, &verdicts, &fresh);
            let again = elim.eliminate(&edited, &fresh, &carried).unwrap();
            assert_eq!(again.rewritten_turns, edited.conversations, "{text}");
        }
    }
}
