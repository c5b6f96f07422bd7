//! Ask a scripted expert panel about one image, twice. The second pass is
//! served from the answer cache; failed calls are not cached and go out again.
//!
//!     cargo run --example expert_panel

use std::path::PathBuf;
use std::sync::Arc;

use hallucheck::experts::{AnswerCache, ExpertConfig, Panel};
use hallucheck::probegen::{generate_question, QuestionKind};
use hallucheck::sgparse::{AnswerChunk, ChunkKind, ChunkSpan};

fn object_chunk(sample: &str, head: &str) -> AnswerChunk {
    let span = ChunkSpan { sample_id: sample.into(), turn_index: 1, sentence_index: 0, char_range: (0, head.len()) };
    AnswerChunk {
        chunk_id: AnswerChunk::make_id(&span, ChunkKind::Object),
        kind: ChunkKind::Object,
        head: head.into(),
        subject: None,
        object: None,
        surface: head.into(),
        span,
        head_range: (0, head.len()),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let configs: Vec<ExpertConfig> =
        ["a", "b", "c"].iter().map(|x| ExpertConfig::mock(&format!("vqa-{x}"), format!("expert_{x}.json"))).collect();
    let cache = tempfile::tempdir()?;
    let panel = Panel::from_configs(&configs, &fixtures)?
        .with_cache(Arc::new(AnswerCache::on_disk(cache.path())?))
        .with_seed(7);

    for pass in 1..=2 {
        println!("pass {pass}");
        for head in ["giraffe", "zebra", "elephant"] {
            let q = generate_question(&object_chunk("s09", head));
            assert_eq!(q.kind, QuestionKind::Existence);
            let answers = panel.ask_panel("img09", &q)?;
            let shown: Vec<String> =
                answers.iter().map(|a| format!("{}={:?}/{:?}", a.expert_id, a.status, a.text)).collect();
            println!("  {:<32} {}", q.text, shown.join("  "));
        }
        println!("  calls over the wire so far: {}", panel.wire_calls());
    }
    Ok(())
}
