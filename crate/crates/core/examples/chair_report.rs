//! Sentence- and instance-level CHAIR for a corpus against its annotations.
//!
//!     cargo run --example chair_report -- [corpus.jsonl] [annotations.json]

use std::path::PathBuf;

use hallucheck::chairmetrics::{chair_report, render_markdown, sentence_flags};
use hallucheck::corpus::{load_corpus, AnnotationSet};
use hallucheck::pipeline::{build_lexicon, extract_all};
use hallucheck::sgparse::RuleParser;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut args = std::env::args().skip(1);
    let corpus = load_corpus(args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("corpus.jsonl")))?;
    let ann = AnnotationSet::load(args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("annotations.json")))?;

    let chunks = extract_all(&corpus, &RuleParser::new(build_lexicon(Some(&ann))))?;
    let report = chair_report(&corpus, &chunks, &ann)?;
    print!("{}", render_markdown(&[("corpus", &report)]));
    println!(
        "\nobjects {}/{}  relations {}/{}  attributes {}/{} (instance level)\n",
        report.obj.instance.num,
        report.obj.instance.den,
        report.rel.instance.num,
        report.rel.instance.den,
        report.attri.instance.num,
        report.attri.instance.den
    );

    for f in sentence_flags(&corpus, &chunks, &ann)? {
        let kinds: Vec<&str> = [(f.obj, "object"), (f.rel, "relation"), (f.attri, "attribute")]
            .into_iter()
            .filter_map(|(hit, k)| hit.then_some(k))
            .collect();
        if !kinds.is_empty() {
            println!("{} turn {} sentence {}: {}", f.sample_id, f.turn_index, f.sentence_index, kinds.join(", "));
        }
    }
    Ok(())
}
