//! Template probe questions for every chunk of one sample.
//!
//!     cargo run --example probe_questions -- [sample-id]

use std::path::PathBuf;

use hallucheck::corpus::{load_corpus, AnnotationSet};
use hallucheck::pipeline::build_lexicon;
use hallucheck::probegen::generate_all;
use hallucheck::sgparse::extract_chunks;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let id = std::env::args().nth(1).unwrap_or_else(|| "s08".into());
    let corpus = load_corpus(fixtures.join("corpus.jsonl"))?;
    let ann = AnnotationSet::load(fixtures.join("annotations.json"))?;
    let sample = corpus.get(&id).ok_or_else(|| format!("no sample {id:?}"))?;

    let chunks = extract_chunks(sample, &build_lexicon(Some(&ann)));
    for q in generate_all(&chunks)? {
        println!("{:<14} {:<48} expect {:?}", format!("{:?}", q.kind), q.text, q.expected_answer);
    }
    Ok(())
}
