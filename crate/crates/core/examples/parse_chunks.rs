//! Print the answer chunks the rule grammar finds in a corpus.
//!
//!     cargo run --example parse_chunks -- [corpus.jsonl] [annotations.json]
//!
//! Defaults to the bundled fixture.

use std::path::PathBuf;

use hallucheck::corpus::{load_corpus, AnnotationSet};
use hallucheck::sgparse::{extract_chunks, Lexicon};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut args = std::env::args().skip(1);
    let corpus_path = args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("corpus.jsonl"));
    let ann_path = args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("annotations.json"));

    let corpus = load_corpus(&corpus_path)?;
    // annotated names extend the built-in noun list
    let lexicon = match AnnotationSet::load(&ann_path) {
        Ok(a) => Lexicon::with_annotations(&a),
        Err(_) => Lexicon::builtin(),
    };
    for sample in &corpus.samples {
        println!("{} ({})", sample.id, sample.image);
        for c in extract_chunks(sample, &lexicon) {
            let ends = match (&c.subject, &c.object) {
                (Some(s), Some(o)) => format!("{s} -> {o}"),
                (None, Some(o)) => format!("of {o}"),
                _ => String::new(),
            };
            println!(
                "  t{} s{} {:<9} {:<14} {:<24} {:?}",
                c.span.turn_index,
                c.span.sentence_index,
                c.kind.to_string(),
                c.head,
                ends,
                c.surface
            );
        }
    }
    Ok(())
}
