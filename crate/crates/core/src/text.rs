//! String normalization shared by the parser, the scorer and the metrics.
//!
//! Everything that compares names goes through [`fold`] first so matching is
//! identical across platforms: NFC, lowercase, trimmed, single spaces.

use unicode_normalization::UnicodeNormalization;

/// NFC + lowercase + trim + collapse internal whitespace runs to one space.
pub fn fold(s: &str) -> String {
    let nfc: String = s.nfc().collect::<String>().to_lowercase();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Words that are left untouched by [`singularize`].
///
/// Versioned with the crate: changing this list changes chunk heads and
/// therefore metric values.
pub const SINGULAR_INVARIANT: &[&str] = &[
    "bus",
    "gas",
    "lens",
    "glass",
    "grass",
    "dress",
    "class",
    "news",
    "series",
    "species",
    "people",
    "sheep",
    "fish",
    "deer",
    "scissors",
    "pants",
    "jeans",
    "shorts",
    "glasses",
    "sunglasses",
    "clothes",
    "police",
    "cattle",
    "tennis",
    "chess",
];

/// Irregular plural → singular pairs.
pub const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("mice", "mouse"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("geese", "goose"),
    ("oxen", "ox"),
    ("knives", "knife"),
    ("wives", "wife"),
    ("leaves", "leaf"),
    ("loaves", "loaf"),
    ("shelves", "shelf"),
    ("scarves", "scarf"),
    ("wolves", "wolf"),
    ("calves", "calf"),
    ("halves", "half"),
    ("buses", "bus"),
    ("gases", "gas"),
    ("lenses", "lens"),
    ("tomatoes", "tomato"),
    ("potatoes", "potato"),
    ("mangoes", "mango"),
    ("heroes", "hero"),
    ("cacti", "cactus"),
    ("cookies", "cookie"),
    ("movies", "movie"),
    ("brownies", "brownie"),
    ("zombies", "zombie"),
    ("hoodies", "hoodie"),
];

pub const LIST_VERSION: &str = "singularize-v1";

fn singularize_word(w: &str) -> String {
    if let Some((_, s)) = IRREGULAR_PLURALS.iter().find(|(p, _)| *p == w) {
        return (*s).to_string();
    }
    if w.chars().count() <= 3 || SINGULAR_INVARIANT.contains(&w) {
        return w.to_string();
    }
    if w.len() > 4 && w.ends_with("ies") {
        return format!("{}y", &w[..w.len() - 3]);
    }
    for suffix in ["sses", "shes", "ches", "xes", "zzes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.ends_with('s') && !(w.ends_with("ss") || w.ends_with("us")) {
        return w[..w.len() - 1].to_string();
    }
    w.to_string()
}

/// Singularize the last word of a (possibly multi-word) folded term.
pub fn singularize(term: &str) -> String {
    match term.rsplit_once(' ') {
        Some((head, last)) => format!("{head} {}", singularize_word(last)),
        None => singularize_word(term),
    }
}

/// True if [`singularize`] would change the term, or the term is one of the
/// inherently plural nouns.
pub fn is_plural(term: &str) -> bool {
    let folded = fold(term);
    let last = folded.rsplit(' ').next().unwrap_or("");
    PLURAL_NOUNS.contains(&last) || singularize(&folded) != folded
}

/// Nouns that take plural agreement without changing form.
pub const PLURAL_NOUNS: &[&str] = &[
    "people",
    "scissors",
    "pants",
    "jeans",
    "shorts",
    "glasses",
    "sunglasses",
    "clothes",
    "police",
    "cattle",
    "sheep",
    "deer",
];

/// "a" or "an" by the initial letter of `word`.
pub fn article(word: &str) -> &'static str {
    match word.trim_start().chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Verb inflection table: lemma followed by its surface forms.
pub const VERB_FORMS: &[&str] = &[
    "ride rides riding rode ridden",
    "sit sits sitting sat",
    "stand stands standing stood",
    "hold holds holding held",
    "fly flies flying flew flown",
    "eat eats eating ate eaten",
    "walk walks walking walked",
    "run runs running ran",
    "lie lies lying lay",
    "lay lays laying laid",
    "play plays playing played",
    "carry carries carrying carried",
    "wear wears wearing wore worn",
    "watch watches watching watched",
    "drive drives driving drove driven",
    "park parks parking parked",
    "hang hangs hanging hung",
    "throw throws throwing threw thrown",
    "catch catches catching caught",
    "cross crosses crossing crossed",
    "cut cuts cutting",
    "drink drinks drinking drank",
    "read reads reading",
    "swim swims swimming swam",
    "surf surfs surfing surfed",
    "ski skis skiing skied",
    "skate skates skating skated",
    "kick kicks kicking kicked",
    "hit hits hitting",
    "jump jumps jumping jumped",
    "lean leans leaning leaned",
    "pull pulls pulling pulled",
    "push pushes pushing pushed",
    "rest rests resting rested",
    "sleep sleeps sleeping slept",
    "cover covers covering covered",
    "fill fills filling filled",
    "surround surrounds surrounding surrounded",
    "face faces facing faced",
    "sell sells selling sold",
    "cook cooks cooking cooked",
    "prepare prepares preparing prepared",
    "use uses using used",
    "chase chases chasing chased",
    "graze grazes grazing grazed",
    "feed feeds feeding fed",
    "pet pets petting petted",
    "hug hugs hugging hugged",
    "touch touches touching touched",
    "wait waits waiting waited",
    "perch perches perching perched",
    "float floats floating floated",
    "grow grows growing grew grown",
    "line lines lining lined",
    "contain contains containing contained",
    "display displays displaying displayed",
    "place places placing placed",
    "sail sails sailing sailed",
    "tow tows towing towed",
    "load loads loading loaded",
    "climb climbs climbing climbed",
    "sniff sniffs sniffing sniffed",
];

/// Map an inflected verb to its lemma; unknown words are returned unchanged.
pub fn lemma(word: &str) -> &str {
    for row in VERB_FORMS {
        let mut forms = row.split(' ');
        let base = forms.next().unwrap_or("");
        if base == word || forms.any(|f| f == word) {
            return base;
        }
    }
    word
}

/// Canonical groups for relation predicates: (canonical, aliases).
pub const PREDICATE_SYNONYMS: &[(&str, &[&str])] = &[
    ("on", &["on top of", "atop", "upon"]),
    ("next to", &["beside", "near", "by", "alongside", "close to", "nearby"]),
    ("in", &["inside", "inside of", "within"]),
    ("under", &["below", "beneath", "underneath"]),
    ("behind", &["in back of"]),
];

const AUXILIARIES: &[&str] = &["is", "are", "was", "were", "be", "being", "been", "am"];

/// Normalize a predicate phrase: fold, drop auxiliaries, lemmatize each word
/// and map through [`PREDICATE_SYNONYMS`].
pub fn canonical_predicate(phrase: &str) -> String {
    let folded = fold(phrase);
    let words: Vec<&str> = folded.split(' ').filter(|w| !w.is_empty() && !AUXILIARIES.contains(w)).map(lemma).collect();
    let joined = words.join(" ");
    for (canon, aliases) in PREDICATE_SYNONYMS {
        if joined == *canon || aliases.contains(&joined.as_str()) {
            return (*canon).to_string();
        }
    }
    joined
}

/// Attribute spelling variants.
pub const ATTRIBUTE_SYNONYMS: &[(&str, &str)] = &[("grey", "gray"), ("colour", "color")];

pub fn canonical_attribute(word: &str) -> String {
    let folded = fold(word);
    ATTRIBUTE_SYNONYMS.iter().find(|(from, _)| *from == folded).map(|(_, to)| (*to).to_string()).unwrap_or(folded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Punct,
}

/// A token with byte offsets into the text it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

impl Token<'_> {
    pub fn lower(&self) -> String {
        fold(self.text)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Split text into words and single-character punctuation tokens.
///
/// Apostrophes and hyphens between letters stay inside the word, as does a
/// decimal point between digits.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_word_char(cj) {
                    j += 1;
                    continue;
                }
                let joiner = matches!(cj, '\'' | '’' | '-' | '.');
                let next_is_word = j + 1 < chars.len() && is_word_char(chars[j + 1].1);
                if joiner && next_is_word {
                    if cj == '.' && !(chars[j - 1].1.is_ascii_digit() && chars[j + 1].1.is_ascii_digit()) {
                        break;
                    }
                    j += 2;
                    continue;
                }
                break;
            }
            let end = if j < chars.len() { chars[j].0 } else { text.len() };
            out.push(Token { text: &text[start..end], start, end, kind: TokenKind::Word });
            i = j;
        } else {
            let end = start + c.len_utf8();
            out.push(Token { text: &text[start..end], start, end, kind: TokenKind::Punct });
            i += 1;
        }
    }
    out
}
