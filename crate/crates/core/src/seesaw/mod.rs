//! Co-occurrence statistics and counterfactual scene selection.
//!
//! For a hallucinated object `o`, the object it co-occurs with most (`o*`)
//! is the likely source of the spurious association. Candidates that rarely
//! appear with `o` but often with `o*` get the highest score, and a scene
//! holding the best such candidate (but not `o`) receives a synthetic
//! statement that `o` is present.

mod placement;

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use placement::{largest_free_rect, snap, Rect, MIN_FREE_SIDE};

use crate::corpus::{AnnotationSet, Corpus, InstructionSample, Turn};
use crate::sgparse::{AnswerChunk, ChunkKind};
use crate::text::{article, fold, singularize};

pub const INSTRUCTION_TEXT: &str = "Describe any additional objects present in the image.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeesawError {
    #[error("object {0:?} is not in the co-occurrence vocabulary")]
    UnknownObject(String),
    #[error("vocabulary has {0} objects; ranking needs at least 3")]
    VocabularyTooSmall(usize),
    #[error("object {0:?} never co-occurs with another object")]
    NoCooccurrence(String),
    #[error("no admissible scene for {0:?}")]
    NoAdmissibleScene(String),
    #[error("image {0:?} has no annotation")]
    UnknownImage(String),
    #[error("image {0:?} has no size")]
    MissingSize(String),
    #[error("image {0:?} already contains {1:?}")]
    ObjectPresent(String, String),
    #[error("no free rectangle of at least {MIN_FREE_SIDE}x{MIN_FREE_SIDE} px in image {0:?}")]
    NoFreeRectangle(String),
}

mod ratio_serde {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        num: u64,
        den: u64,
        value: f64,
    }

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        Repr { num: *r.numer(), den: *r.denom(), value: super::to_f64(r) }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Ratio::new(r.num, r.den))
    }
}

pub fn to_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Symmetric image co-occurrence counts over a sorted vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub vocabulary: Vec<String>,
    /// Row-major `n × n`.
    counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    /// One set of canonical names per image.
    pub fn from_object_sets(sets: Vec<BTreeSet<String>>) -> Self {
        let vocabulary: Vec<String> = sets.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let n = vocabulary.len();
        let index: BTreeMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let counts = sets
            .par_iter()
            .fold(
                || vec![0u64; n * n],
                |mut acc, set| {
                    let ids: Vec<usize> = set.iter().map(|o| index[o.as_str()]).collect();
                    for &i in &ids {
                        for &j in &ids {
                            acc[i * n + j] += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; n * n],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        CooccurrenceMatrix { vocabulary, counts }
    }

    /// Build from raw counts. Used by tests and callers with precomputed
    /// statistics; panics unless `counts` is square and symmetric.
    pub fn from_counts(vocabulary: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        let n = vocabulary.len();
        assert!(vocabulary.windows(2).all(|w| w[0] < w[1]), "vocabulary must be sorted and unique");
        assert!(counts.len() == n && counts.iter().all(|r| r.len() == n), "counts must be {n}x{n}");
        for (i, row) in counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c, counts[j][i], "counts must be symmetric");
            }
        }
        CooccurrenceMatrix { vocabulary, counts: counts.into_iter().flatten().collect() }
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    /// Index of a name, tolerant of case and plural forms.
    pub fn index(&self, name: &str) -> Option<usize> {
        let folded = fold(name);
        let find = |k: &str| self.vocabulary.binary_search_by(|v| v.as_str().cmp(k)).ok();
        find(&folded).or_else(|| find(&singularize(&folded)))
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let n = self.len();
        &self.counts[i * n..(i + 1) * n]
    }
}

/// Co-occurrence over annotated object lists.
pub fn build_cooccurrence(annotations: &AnnotationSet) -> CooccurrenceMatrix {
    let sets =
        annotations.images.values().map(|img| img.object_names().into_iter().map(str::to_string).collect()).collect();
    CooccurrenceMatrix::from_object_sets(sets)
}

/// Co-occurrence over object chunks, one set per image (samples sharing an
/// image are merged).
pub fn build_cooccurrence_from_chunks(corpus: &Corpus, chunks: &[Vec<AnswerChunk>]) -> CooccurrenceMatrix {
    let mut per_image: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (sample, cs) in corpus.samples.iter().zip(chunks) {
        let set = per_image.entry(sample.image.as_str()).or_default();
        set.extend(cs.iter().filter(|c| c.kind == ChunkKind::Object).map(|c| c.head.clone()));
    }
    CooccurrenceMatrix::from_object_sets(per_image.into_values().collect())
}

/// `(o*, n*)`: the object co-occurring most with `o`, ties to the smallest name.
pub fn most_relevant(o: &str, matrix: &CooccurrenceMatrix) -> Result<(String, u64), SeesawError> {
    let i = matrix.index(o).ok_or_else(|| SeesawError::UnknownObject(o.to_string()))?;
    let mut best: Option<(usize, u64)> = None;
    for (j, &c) in matrix.row(i).iter().enumerate() {
        // vocabulary is sorted, so strict > keeps the smallest name on ties
        if j != i && best.is_none_or(|(_, b)| c > b) {
            best = Some((j, c));
        }
    }
    let (j, n) = best.ok_or_else(|| SeesawError::VocabularyTooSmall(matrix.len()))?;
    Ok((matrix.vocabulary[j].clone(), n))
}

pub fn enhancement_factor(n_star: u64, n_i: u64) -> Ratio<u64> {
    if n_i <= n_star {
        Ratio::new(n_star, n_i.max(1))
    } else {
        Ratio::from_integer(1)
    }
}

/// Panics when `n_star == 0`; callers skip that case.
pub fn inhibiting_factor(n_star: u64, m_i: u64) -> Ratio<u64> {
    assert!(n_star > 0, "inhibiting factor is undefined for n* = 0");
    if m_i <= n_star {
        Ratio::new(m_i, n_star)
    } else {
        Ratio::from_integer(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeesawEntry {
    pub candidate: String,
    pub n_i: u64,
    pub m_i: u64,
    #[serde(with = "ratio_serde")]
    pub enhancement: Ratio<u64>,
    #[serde(with = "ratio_serde")]
    pub inhibiting: Ratio<u64>,
    #[serde(with = "ratio_serde")]
    pub score: Ratio<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeesawRanking {
    pub hallucinatory_object: String,
    pub most_relevant: String,
    pub n_star: u64,
    /// Score descending, then candidate name ascending.
    pub entries: Vec<SeesawEntry>,
}

pub fn rank_targets(o: &str, matrix: &CooccurrenceMatrix) -> Result<SeesawRanking, SeesawError> {
    if matrix.len() < 3 {
        return Err(SeesawError::VocabularyTooSmall(matrix.len()));
    }
    let (o_star, n_star) = most_relevant(o, matrix)?;
    if n_star == 0 {
        return Err(SeesawError::NoCooccurrence(o.to_string()));
    }
    let (io, is) = (matrix.index(o).unwrap(), matrix.index(&o_star).unwrap());
    let mut entries: Vec<SeesawEntry> = (0..matrix.len())
        .filter(|&j| j != io && j != is)
        .map(|j| {
            let (n_i, m_i) = (matrix.count(io, j), matrix.count(is, j));
            let enhancement = enhancement_factor(n_star, n_i);
            let inhibiting = inhibiting_factor(n_star, m_i);
            SeesawEntry {
                candidate: matrix.vocabulary[j].clone(),
                n_i,
                m_i,
                enhancement,
                inhibiting,
                score: enhancement * inhibiting,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.candidate.cmp(&b.candidate)));
    Ok(SeesawRanking { hallucinatory_object: matrix.vocabulary[io].clone(), most_relevant: o_star, n_star, entries })
}

/// Every admissible `(image, entry index)` in preference order: entries in
/// ranking order, images ascending. An image is admissible for an entry when
/// it contains the candidate and not `o`.
pub fn admissible_scenes<'a>(
    o: &str,
    ranking: &SeesawRanking,
    annotations: &'a AnnotationSet,
) -> Vec<(&'a str, usize)> {
    let mut out = Vec::new();
    for (k, e) in ranking.entries.iter().enumerate() {
        for (id, img) in &annotations.images {
            if img.contains_object(&e.candidate) && !img.contains_object(o) {
                out.push((id.as_str(), k));
            }
        }
    }
    out
}

/// First admissible scene: best-scored candidate with an `o`-free image,
/// smallest image id.
pub fn select_scene(o: &str, ranking: &SeesawRanking, annotations: &AnnotationSet) -> Result<String, SeesawError> {
    admissible_scenes(o, ranking, annotations)
        .first()
        .map(|(id, _)| id.to_string())
        .ok_or_else(|| SeesawError::NoAdmissibleScene(o.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub o: String,
    pub o_star: String,
    pub candidate: String,
    #[serde(with = "ratio_serde")]
    pub score: Ratio<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualInstruction {
    pub new_sample_id: String,
    pub target_image_id: String,
    pub inserted_object: String,
    pub instruction_text: String,
    pub response_text: String,
    pub placement: Rect,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRequest {
    pub image: String,
    pub insert_object: String,
    pub bbox: [i64; 4],
    pub caption: String,
}

impl CounterfactualInstruction {
    pub fn to_sample(&self) -> InstructionSample {
        InstructionSample::new(
            self.new_sample_id.clone(),
            self.target_image_id.clone(),
            vec![Turn::human(self.instruction_text.clone()), Turn::assistant(self.response_text.clone())],
        )
    }

    pub fn edit_request(&self) -> EditRequest {
        EditRequest {
            image: self.target_image_id.clone(),
            insert_object: self.inserted_object.clone(),
            bbox: self.placement.as_array(),
            caption: self.response_text.clone(),
        }
    }
}

pub fn counterfactual_phrase(object: &str) -> String {
    format!("There is also {} {object} in the image.", article(object))
}

/// Counterfactual sample asserting `o` in `image_id`, placed in the largest
/// free region of the image.
pub fn emit_counterfactual(
    o: &str,
    image_id: &str,
    annotations: &AnnotationSet,
) -> Result<CounterfactualInstruction, SeesawError> {
    let img = annotations.get(image_id).ok_or_else(|| SeesawError::UnknownImage(image_id.to_string()))?;
    if img.contains_object(o) {
        return Err(SeesawError::ObjectPresent(image_id.to_string(), o.to_string()));
    }
    let (w, h) = img.size.ok_or_else(|| SeesawError::MissingSize(image_id.to_string()))?;
    let (w, h) = (i64::from(w), i64::from(h));
    let obstacles: Vec<Rect> = img.bboxes().filter_map(|b| snap(b, w, h)).collect();
    let free = largest_free_rect(w, h, &obstacles, MIN_FREE_SIDE)
        .ok_or_else(|| SeesawError::NoFreeRectangle(image_id.to_string()))?;
    let object = fold(o);
    Ok(CounterfactualInstruction {
        new_sample_id: format!("cf-{object}-{image_id}"),
        target_image_id: image_id.to_string(),
        response_text: counterfactual_phrase(&object),
        inserted_object: object,
        instruction_text: INSTRUCTION_TEXT.to_string(),
        placement: free.shrink_centered(),
        provenance: None,
    })
}

/// Why an object produced no counterfactual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub object: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansion {
    pub instructions: Vec<CounterfactualInstruction>,
    pub rankings: Vec<SeesawRanking>,
    pub skipped: Vec<Skipped>,
}

fn expand_one(
    o: &str,
    matrix: &CooccurrenceMatrix,
    annotations: &AnnotationSet,
) -> Result<(SeesawRanking, CounterfactualInstruction), SeesawError> {
    let ranking = rank_targets(o, matrix)?;
    let mut last = SeesawError::NoAdmissibleScene(o.to_string());
    for (image, k) in admissible_scenes(o, &ranking, annotations) {
        match emit_counterfactual(o, image, annotations) {
            Ok(mut cf) => {
                let e = &ranking.entries[k];
                cf.provenance = Some(Provenance {
                    o: ranking.hallucinatory_object.clone(),
                    o_star: ranking.most_relevant.clone(),
                    candidate: e.candidate.clone(),
                    score: e.score,
                });
                return Ok((ranking, cf));
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// One counterfactual per object, in the given order, until `budget` is
/// spent. Objects that cannot be expanded are skipped with a reason. Scenes
/// without room for a placement fall through to the next admissible one.
pub fn expand(
    objects: &[String],
    matrix: &CooccurrenceMatrix,
    annotations: &AnnotationSet,
    budget: usize,
) -> Expansion {
    let results: Vec<_> = objects.par_iter().map(|o| (o, expand_one(o, matrix, annotations))).collect();
    let mut out = Expansion::default();
    for (o, r) in results {
        match r {
            Ok(_) if out.instructions.len() >= budget => break,
            Ok((ranking, cf)) => {
                out.rankings.push(ranking);
                out.instructions.push(cf);
            }
            Err(e) => {
                log::info!("skipping expansion for {o:?}: {e}");
                out.skipped.push(Skipped { object: o.clone(), reason: e.to_string() });
            }
        }
    }
    out
}
