use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{canonical_attribute, canonical_predicate, fold, singularize};

/// Axis-aligned box in pixels, `(x, y, w, h)` with the origin at the top left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub name: String,
    pub synonyms: BTreeSet<String>,
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RelationTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AttributePair {
    pub object: String,
    pub attribute: String,
}

/// Ground truth for one image. Names are folded; relation and attribute
/// endpoints are stored as canonical object names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageAnnotation {
    pub size: Option<(u32, u32)>,
    pub objects: Vec<AnnotatedObject>,
    pub relations: Vec<RelationTriple>,
    pub attributes: Vec<AttributePair>,
    lookup: BTreeMap<String, String>,
}

impl ImageAnnotation {
    /// Canonical name for a surface form (canonical name or synonym).
    /// Accepts folded or singularized variants.
    pub fn resolve(&self, term: &str) -> Option<&str> {
        let folded = fold(term);
        self.lookup.get(&folded).or_else(|| self.lookup.get(&singularize(&folded))).map(String::as_str)
    }

    pub fn contains_object(&self, term: &str) -> bool {
        self.resolve(term).is_some()
    }

    /// Distinct canonical object names, sorted.
    pub fn object_names(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.name.as_str()).collect()
    }

    /// Surface → canonical table (every name and synonym).
    pub fn synonym_table(&self) -> &BTreeMap<String, String> {
        &self.lookup
    }

    pub fn has_relation(&self, subject: &str, predicate: &str, object: &str) -> bool {
        let (Some(s), Some(o)) = (self.resolve(subject), self.resolve(object)) else {
            return false;
        };
        let p = canonical_predicate(predicate);
        self.relations.iter().any(|r| r.subject == s && r.object == o && canonical_predicate(&r.predicate) == p)
    }

    pub fn has_attribute(&self, object: &str, attribute: &str) -> bool {
        let Some(o) = self.resolve(object) else {
            return false;
        };
        let a = canonical_attribute(attribute);
        self.attributes.iter().any(|p| p.object == o && canonical_attribute(&p.attribute) == a)
    }

    pub fn bboxes(&self) -> impl Iterator<Item = &BBox> {
        self.objects.iter().filter_map(|o| o.bbox.as_ref())
    }
}

/// Annotations keyed by image id. The image id is the same string as the
/// corpus sample's `image` field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub images: BTreeMap<String, ImageAnnotation>,
    pub source_path: String,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("annotation schema mismatch: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("image {image_id:?}, {field}: {message}")]
    Invalid { image_id: String, field: &'static str, message: String },
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<[u32; 2]>,
    #[serde(default)]
    objects: Vec<RawObject>,
    #[serde(default)]
    relations: Vec<[String; 3]>,
    #[serde(default)]
    attributes: Vec<[String; 2]>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    name: String,
    #[serde(default)]
    synonyms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
}

impl AnnotationSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        load_annotations(path)
    }

    pub fn from_json_str(s: &str) -> Result<Self, AnnotationError> {
        let raw: BTreeMap<String, RawImage> = serde_json::from_str(s)?;
        let mut images = BTreeMap::new();
        for (image_id, raw_image) in raw {
            let ann = build_image(&image_id, raw_image)?;
            images.insert(image_id, ann);
        }
        Ok(AnnotationSet { images, source_path: String::new() })
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageAnnotation> {
        self.images.get(image_id)
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Serialize back to the annotation JSON schema.
    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&str, RawImage> = self
            .images
            .iter()
            .map(|(id, img)| {
                let objects = img
                    .objects
                    .iter()
                    .map(|o| RawObject {
                        name: o.name.clone(),
                        synonyms: o.synonyms.iter().cloned().collect(),
                        bbox: o.bbox.map(|b| [b.x, b.y, b.w, b.h]),
                    })
                    .collect();
                let raw = RawImage {
                    size: img.size.map(|(w, h)| [w, h]),
                    objects,
                    relations: img
                        .relations
                        .iter()
                        .map(|r| [r.subject.clone(), r.predicate.clone(), r.object.clone()])
                        .collect(),
                    attributes: img.attributes.iter().map(|a| [a.object.clone(), a.attribute.clone()]).collect(),
                };
                (id.as_str(), raw)
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("annotations serialize")
    }
}

/// Read and validate an annotation file. Names are folded, synonym sets
/// must be disjoint across objects, and relation/attribute endpoints must
/// name annotated objects.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet, AnnotationError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io { path: path.to_path_buf(), source })?;
    let mut set = AnnotationSet::from_json_str(&text)?;
    set.source_path = path.display().to_string();
    Ok(set)
}

fn build_image(image_id: &str, raw: RawImage) -> Result<ImageAnnotation, AnnotationError> {
    let invalid = |field: &'static str, message: String| AnnotationError::Invalid {
        image_id: image_id.to_string(),
        field,
        message,
    };

    if let Some([w, h]) = raw.size {
        if w == 0 || h == 0 {
            return Err(invalid("size", format!("degenerate size {w}x{h}")));
        }
    }

    // Objects sharing a canonical name are instances of one object class.
    let mut objects = Vec::new();
    let mut synonyms_of: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for o in raw.objects {
        let name = fold(&o.name);
        if name.is_empty() {
            return Err(invalid("objects", "empty object name".into()));
        }
        let synonyms: BTreeSet<String> =
            o.synonyms.iter().map(|s| fold(s)).filter(|s| !s.is_empty() && *s != name).collect();
        let bbox = match o.bbox {
            Some([x, y, w, h]) => {
                if !(w >= 0.0 && h >= 0.0 && x.is_finite() && y.is_finite()) {
                    return Err(invalid("bbox", format!("invalid bbox for {name:?}")));
                }
                Some(BBox::new(x, y, w, h))
            }
            None => None,
        };
        synonyms_of.entry(name.clone()).or_default().extend(synonyms.iter().cloned());
        objects.push(AnnotatedObject { name, synonyms, bbox });
    }

    let mut lookup: BTreeMap<String, String> = BTreeMap::new();
    for name in synonyms_of.keys() {
        lookup.insert(name.clone(), name.clone());
    }
    for (name, syns) in &synonyms_of {
        for s in syns {
            match lookup.get(s) {
                Some(owner) if owner != name => {
                    return Err(invalid("synonyms", format!("{s:?} is claimed by both {owner:?} and {name:?}")));
                }
                _ => {
                    lookup.insert(s.clone(), name.clone());
                }
            }
        }
    }
    // Singular variants resolve too, unless they would collide.
    let variants: Vec<(String, String)> = lookup
        .iter()
        .map(|(surface, canon)| (singularize(surface), canon.clone()))
        .filter(|(v, _)| !lookup.contains_key(v))
        .collect();
    let mut ambiguous = BTreeSet::new();
    let mut extra: BTreeMap<String, String> = BTreeMap::new();
    for (v, canon) in variants {
        match extra.get(&v) {
            Some(c) if *c != canon => {
                ambiguous.insert(v);
            }
            _ => {
                extra.insert(v, canon);
            }
        }
    }
    for (v, canon) in extra {
        if !ambiguous.contains(&v) {
            lookup.insert(v, canon);
        }
    }

    let resolve = |term: &str| -> Option<String> {
        let f = fold(term);
        lookup.get(&f).or_else(|| lookup.get(&singularize(&f))).cloned()
    };

    let mut relations = Vec::new();
    for [s, p, o] in raw.relations {
        let (Some(subject), Some(object)) = (resolve(&s), resolve(&o)) else {
            return Err(invalid("relations", format!("dangling endpoint in ({s:?}, {p:?}, {o:?})")));
        };
        let predicate = fold(&p);
        if predicate.is_empty() {
            return Err(invalid("relations", format!("empty predicate in ({s:?}, {p:?}, {o:?})")));
        }
        relations.push(RelationTriple { subject, predicate, object });
    }
    let mut attributes = Vec::new();
    for [o, a] in raw.attributes {
        let Some(object) = resolve(&o) else {
            return Err(invalid("attributes", format!("dangling owner in ({o:?}, {a:?})")));
        };
        attributes.push(AttributePair { object, attribute: fold(&a) });
    }

    Ok(ImageAnnotation { size: raw.size.map(|[w, h]| (w, h)), objects, relations, attributes, lookup })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "img1": {
            "size": [640, 480],
            "objects": [
                {"name": " Bicycle ", "synonyms": ["Bike", "bicycles"], "bbox": [10, 20, 100, 80]},
                {"name": "man", "synonyms": ["person", "guy"]}
            ],
            "relations": [["man", "riding", "bike"]],
            "attributes": [["bicycle", "Red"]]
        }
    }"#;

    #[test]
    fn synonyms_map_to_canonical() {
        let set = AnnotationSet::from_json_str(SAMPLE).unwrap();
        let img = set.get("img1").unwrap();
        assert_eq!(img.resolve("bike"), Some("bicycle"));
        assert_eq!(img.resolve("Bikes"), Some("bicycle"));
        assert_eq!(img.resolve("men"), Some("man"));
        assert_eq!(img.resolve("dog"), None);
        assert_eq!(img.resolve("guy"), Some("man"));
        assert_eq!(img.size, Some((640, 480)));
        assert_eq!(img.relations[0].object, "bicycle");
        assert!(img.has_relation("guy", "rides", "bike"));
        assert!(img.has_attribute("bike", "red"));
        assert!(!img.has_attribute("bike", "blue"));
    }

    #[test]
    fn dangling_relation_endpoint_is_rejected() {
        let text = r#"{"im": {"objects": [{"name": "man"}], "relations": [["man", "riding", "car"]]}}"#;
        let err = AnnotationSet::from_json_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"im\"") && msg.contains("car"), "{msg}");
    }

    #[test]
    fn synonym_collision_is_rejected() {
        let text = r#"{"im": {"objects": [
            {"name": "bicycle", "synonyms": ["bike"]},
            {"name": "motorcycle", "synonyms": ["bike"]}]}}"#;
        assert!(matches!(AnnotationSet::from_json_str(text), Err(AnnotationError::Invalid { field: "synonyms", .. })));
    }

    #[test]
    fn schema_mismatch() {
        assert!(matches!(AnnotationSet::from_json_str(r#"{"im": {"objs": []}}"#), Err(AnnotationError::Schema(_))));
        assert!(matches!(AnnotationSet::from_json_str("[1,2]"), Err(AnnotationError::Schema(_))));
    }

    #[test]
    fn repeated_instances_share_a_class() {
        let text = r#"{"im": {"objects": [
            {"name": "person", "synonyms": ["man"], "bbox": [0,0,1,1]},
            {"name": "person", "synonyms": ["woman"], "bbox": [5,5,1,1]}]}}"#;
        let set = AnnotationSet::from_json_str(text).unwrap();
        let img = set.get("im").unwrap();
        assert_eq!(img.object_names().len(), 1);
        assert_eq!(img.resolve("woman"), Some("person"));
        assert_eq!(img.bboxes().count(), 2);
    }

    #[test]
    fn json_round_trip() {
        let set = AnnotationSet::from_json_str(SAMPLE).unwrap();
        let again = AnnotationSet::from_json_str(&set.to_json()).unwrap();
        assert_eq!(set, again);
    }
}
