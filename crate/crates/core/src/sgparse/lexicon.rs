use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::AnnotationSet;
use crate::text::{fold, singularize, VERB_FORMS};

/// The 80 MSCOCO detection categories.
pub const COCO_CATEGORIES: &[&str] = &[
    "person",
    "bicycle",
    "car",
    "motorcycle",
    "airplane",
    "bus",
    "train",
    "truck",
    "boat",
    "traffic light",
    "fire hydrant",
    "stop sign",
    "parking meter",
    "bench",
    "bird",
    "cat",
    "dog",
    "horse",
    "sheep",
    "cow",
    "elephant",
    "bear",
    "zebra",
    "giraffe",
    "backpack",
    "umbrella",
    "handbag",
    "tie",
    "suitcase",
    "frisbee",
    "skis",
    "snowboard",
    "sports ball",
    "kite",
    "baseball bat",
    "baseball glove",
    "skateboard",
    "surfboard",
    "tennis racket",
    "bottle",
    "wine glass",
    "cup",
    "fork",
    "knife",
    "spoon",
    "bowl",
    "banana",
    "apple",
    "sandwich",
    "orange",
    "broccoli",
    "carrot",
    "hot dog",
    "pizza",
    "donut",
    "cake",
    "chair",
    "couch",
    "potted plant",
    "bed",
    "dining table",
    "toilet",
    "tv",
    "laptop",
    "mouse",
    "remote",
    "keyboard",
    "cell phone",
    "microwave",
    "oven",
    "toaster",
    "sink",
    "refrigerator",
    "book",
    "clock",
    "vase",
    "scissors",
    "teddy bear",
    "hair drier",
    "toothbrush",
];

/// People and scene nouns that show up constantly in generated descriptions
/// but are not detection categories.
pub const COMMON_OBJECTS: &[&str] = &[
    "man", "woman", "boy", "girl", "child", "kid", "baby", "people", "player", "table", "road", "street", "tree",
    "building", "sky", "water", "window", "door", "wall", "floor", "field", "sidewalk", "fence", "sign", "plate",
    "shirt", "hat", "pole", "ball", "ocean", "beach", "mountain", "cloud", "plant", "flower", "desk", "shelf", "box",
    "bag", "counter", "bike", "jacket", "helmet", "lamp", "rock", "sand", "snow", "wave", "bridge", "house", "river",
];

pub const DETERMINERS: &[&str] = &[
    "a", "an", "the", "some", "several", "many", "few", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "this", "that", "these", "those", "its", "their", "his", "her", "my", "our", "your", "each",
    "every", "another", "other", "both", "all", "any", "no", "multiple", "numerous", "various", "couple", "pair",
    "group", "lot", "of", "bunch",
];

pub const ADJECTIVES: &[&str] = &[
    "red", "yellow", "green", "blue", "purple", "pink", "brown", "black", "white", "gray", "grey", "silver", "gold",
    "golden", "beige", "tan", "colorful", "big", "large", "small", "little", "tiny", "huge", "tall", "short", "long",
    "wide", "narrow", "old", "new", "young", "wooden", "metal", "plastic", "open", "closed", "empty", "full", "wet",
    "dry", "dirty", "clean", "broken", "bright", "dark", "striped", "sunny", "cloudy", "snowy", "busy", "crowded",
    "sliced", "fresh", "ripe", "shiny", "fluffy", "furry", "round", "square", "modern", "vintage", "cute", "happy",
    "smiling", "leafy", "grassy", "sandy", "rusty", "messy", "neat", "parked", "spotted", "stuffed", "frosted",
    "toasted", "cooked", "hot", "cold", "warm", "calm",
];

/// Single- and multi-word prepositions usable as relation predicates.
pub const PREPOSITIONS: &[&str] = &[
    "on top of",
    "in front of",
    "in back of",
    "next to",
    "close to",
    "inside of",
    "on",
    "in",
    "at",
    "under",
    "near",
    "beside",
    "behind",
    "above",
    "below",
    "beneath",
    "underneath",
    "over",
    "across",
    "along",
    "alongside",
    "against",
    "by",
    "inside",
    "outside",
    "atop",
    "around",
    "between",
    "through",
    "toward",
    "towards",
    "into",
    "onto",
    "upon",
    "down",
    "up",
];

pub const ADVERBS: &[&str] = &[
    "very",
    "quite",
    "rather",
    "slightly",
    "mostly",
    "fairly",
    "really",
    "extremely",
    "also",
    "partially",
    "completely",
];

pub const CONJUNCTIONS: &[&str] = &["and", "or"];

/// Function words that carry no scene content. A sentence made only of these
/// (plus punctuation) is empty after elimination.
pub const STOPWORDS: &[&str] = &[
    "there",
    "here",
    "it",
    "its",
    "it's",
    "they",
    "them",
    "this",
    "that",
    "these",
    "those",
    "he",
    "she",
    "we",
    "you",
    "i",
    "me",
    "him",
    "her",
    "us",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "am",
    "has",
    "have",
    "had",
    "do",
    "does",
    "did",
    "don't",
    "doesn't",
    "can",
    "could",
    "will",
    "would",
    "should",
    "may",
    "might",
    "and",
    "or",
    "but",
    "so",
    "also",
    "as",
    "of",
    "with",
    "from",
    "for",
    "to",
    "in",
    "on",
    "at",
    "by",
    "into",
    "onto",
    "image",
    "picture",
    "photo",
    "scene",
    "view",
    "visible",
    "seen",
    "appears",
    "appear",
    "seems",
    "can",
    "which",
    "who",
    "what",
    "where",
    "while",
    "some",
    "just",
    "very",
    "not",
    "yes",
    "no",
    "a",
    "an",
    "the",
    "overall",
    "additionally",
    "furthermore",
    "moreover",
    "know",
    "sure",
    "see",
];

/// Word lists driving the rule grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    nouns: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
    adjectives: BTreeSet<String>,
    determiners: BTreeSet<String>,
    stopwords: BTreeSet<String>,
    verbs: BTreeSet<String>,
    prepositions: BTreeSet<String>,
    max_noun_words: usize,
    max_prep_words: usize,
}

fn set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| fold(w)).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::builtin()
    }
}

impl Lexicon {
    /// Built-in lists only: COCO categories, common objects, closed-class words.
    pub fn builtin() -> Self {
        let verbs = VERB_FORMS.iter().flat_map(|row| row.split(' ')).map(str::to_string).collect();
        let mut lex = Lexicon {
            nouns: BTreeSet::new(),
            synonyms: BTreeMap::new(),
            adjectives: set(ADJECTIVES),
            determiners: set(DETERMINERS),
            stopwords: set(STOPWORDS),
            verbs,
            prepositions: set(PREPOSITIONS),
            max_noun_words: 1,
            max_prep_words: 1,
        };
        lex.add_nouns(COCO_CATEGORIES.iter().copied());
        lex.add_nouns(COMMON_OBJECTS.iter().copied());
        lex.max_prep_words = lex.prepositions.iter().map(|p| p.split(' ').count()).max().unwrap_or(1);
        lex
    }

    /// Built-in lists plus every annotated canonical name and synonym.
    ///
    /// A surface form mapped to different canonical names in different images
    /// is kept as a noun but left unmapped, so per-image resolution decides.
    pub fn with_annotations(annotations: &AnnotationSet) -> Self {
        let mut lex = Lexicon::builtin();
        lex.absorb_annotations(annotations);
        lex
    }

    pub fn absorb_annotations(&mut self, annotations: &AnnotationSet) {
        let mut mapping: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for img in annotations.images.values() {
            for obj in &img.objects {
                mapping.entry(obj.name.clone()).or_default().insert(obj.name.clone());
                for s in &obj.synonyms {
                    mapping.entry(s.clone()).or_default().insert(obj.name.clone());
                }
            }
        }
        for (surface, canon) in mapping {
            self.add_nouns([surface.as_str()]);
            if canon.len() == 1 {
                let target = canon.into_iter().next().expect("len 1");
                if target != surface {
                    self.synonyms.insert(surface.clone(), target.clone());
                    let single = singularize(&surface);
                    if single != surface && !self.synonyms.contains_key(&single) {
                        self.synonyms.insert(single, target);
                    }
                }
            }
        }
    }

    /// Add nouns (folded). Determiners are never admitted as nouns.
    pub fn add_nouns<'a>(&mut self, nouns: impl IntoIterator<Item = &'a str>) {
        for n in nouns {
            let n = fold(n);
            if n.is_empty() || self.determiners.contains(&n) {
                continue;
            }
            self.max_noun_words = self.max_noun_words.max(n.split(' ').count());
            self.nouns.insert(n);
        }
    }

    pub fn add_synonym(&mut self, surface: &str, canonical: &str) {
        let (s, c) = (fold(surface), fold(canonical));
        self.add_nouns([s.as_str(), c.as_str()]);
        self.synonyms.insert(s, c);
    }

    pub fn add_adjectives<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) {
        self.adjectives.extend(words.into_iter().map(fold));
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }

    /// Canonical noun for a folded phrase, or `None` if it is not a noun.
    pub fn noun(&self, phrase: &str) -> Option<String> {
        let single = singularize(phrase);
        let known = self.nouns.contains(phrase) || self.nouns.contains(&single);
        if !known {
            return None;
        }
        if let Some(c) = self.synonyms.get(phrase).or_else(|| self.synonyms.get(&single)) {
            return Some(c.clone());
        }
        Some(single)
    }

    pub fn is_noun(&self, phrase: &str) -> bool {
        self.noun(phrase).is_some()
    }

    pub fn is_adjective(&self, w: &str) -> bool {
        self.adjectives.contains(w)
    }

    pub fn is_determiner(&self, w: &str) -> bool {
        self.determiners.contains(w) || w.chars().all(|c| c.is_ascii_digit())
    }

    pub fn is_verb(&self, w: &str) -> bool {
        self.verbs.contains(w)
    }

    pub fn is_preposition(&self, phrase: &str) -> bool {
        self.prepositions.contains(phrase)
    }

    pub fn is_stopword(&self, w: &str) -> bool {
        self.stopwords.contains(w) || self.determiners.contains(w) || self.prepositions.contains(w)
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    pub fn max_noun_words(&self) -> usize {
        self.max_noun_words
    }

    pub fn max_prep_words(&self) -> usize {
        self.max_prep_words
    }
}
