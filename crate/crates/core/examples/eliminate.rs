//! Remove hallucinated chunks from one sample and show the text before and
//! after. Verdicts come from a fresh detection run over the fixture.
//!
//!     cargo run --example eliminate -- [sample-id]

use std::path::PathBuf;

use hallucheck::corpus::{load_corpus, AnnotationSet, Role};
use hallucheck::crosscheck::{Eliminator, LexicalScorer};
use hallucheck::pipeline::{build_lexicon, detect, make_panel, Detector, Overrides, RunConfig};
use hallucheck::probegen::TemplateGenerator;
use hallucheck::sgparse::extract_chunks;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let id = std::env::args().nth(1).unwrap_or_else(|| "s11".into());
    let scratch = tempfile::tempdir()?;
    let cfg = RunConfig::load(
        Some(&fixtures.join("run.toml")),
        &Overrides { out: Some(scratch.path().to_path_buf()), ..Default::default() },
    )?;

    let corpus = load_corpus(fixtures.join("corpus.jsonl"))?;
    let sample = corpus.get(&id).ok_or_else(|| format!("no sample {id:?}"))?;
    let lexicon = build_lexicon(Some(&AnnotationSet::load(fixtures.join("annotations.json"))?));
    let chunks = extract_chunks(sample, &lexicon);

    let one = hallucheck::corpus::Corpus::new(vec![sample.clone()])?;
    let panel = make_panel(&cfg)?;
    let scorer = LexicalScorer::with_lexicon(&lexicon);
    let detector = Detector { panel: &panel, generator: &TemplateGenerator, scorer: &scorer, threshold: cfg.threshold };
    let verdicts = detect(&one, std::slice::from_ref(&chunks), &detector)?;

    let result = Eliminator::new(lexicon).eliminate(sample, &chunks, &verdicts)?;
    for (before, after) in sample.conversations.iter().zip(&result.rewritten_turns) {
        if before.from == Role::Assistant {
            println!("before: {}\nafter:  {}\n", before.value, after.value);
        }
    }
    println!("removed:  {:?}", result.removed_chunk_ids);
    println!("cascaded: {:?}", result.cascaded_chunk_ids);
    println!("dropped sentences: {:?}", result.dropped_sentences);
    Ok(())
}
