//! Cross-check every chunk of the fixture corpus and print the ConScore of
//! each, marking the ones below the threshold.
//!
//!     cargo run --example cross_check -- [threshold]

use std::path::PathBuf;

use hallucheck::corpus::{load_corpus, AnnotationSet};
use hallucheck::crosscheck::LexicalScorer;
use hallucheck::pipeline::{build_lexicon, detect, extract_all, make_panel, Detector, Overrides, RunConfig};
use hallucheck::probegen::TemplateGenerator;
use hallucheck::sgparse::RuleParser;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let threshold: f64 = std::env::args().nth(1).map(|t| t.parse()).transpose()?.unwrap_or(0.5);
    let scratch = tempfile::tempdir()?;
    let overrides = Overrides { out: Some(scratch.path().to_path_buf()), ..Default::default() };
    let cfg = RunConfig::load(Some(&fixtures.join("run.toml")), &overrides)?;

    let corpus = load_corpus(fixtures.join("corpus.jsonl"))?;
    let lexicon = build_lexicon(Some(&AnnotationSet::load(fixtures.join("annotations.json"))?));
    let chunks = extract_all(&corpus, &RuleParser::new(lexicon.clone()))?;
    let panel = make_panel(&cfg)?;
    let scorer = LexicalScorer::with_lexicon(&lexicon);
    let detector = Detector { panel: &panel, generator: &TemplateGenerator, scorer: &scorer, threshold };

    for v in detect(&corpus, &chunks, &detector)? {
        let score = v.conscore.map_or("  n/a".to_string(), |c| format!("{c:.3}"));
        let mark = if v.unverifiable {
            "?"
        } else if v.is_hallucination {
            "!"
        } else {
            " "
        };
        let per: Vec<String> = v.per_expert.iter().map(|e| format!("{:.2}", e.score)).collect();
        println!("{mark} {score} {:<28} {:<10} {:<14} [{}]", v.chunk_id, v.kind.to_string(), v.head, per.join(" "));
    }
    Ok(())
}
