use std::path::{Path, PathBuf};

use hallucheck::corpus::{load_corpus, AnnotationSet};
use hallucheck::crosscheck::{Eliminator, LexicalScorer};
use hallucheck::pipeline::{
    self, build_lexicon, detect, detect_and_eliminate, eliminate_corpus, extract_all, make_panel, read_manifest,
    Detector, Overrides, PipelineError, RunConfig,
};
use hallucheck::probegen::TemplateGenerator;
use hallucheck::sgparse::RuleParser;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn config(out: &Path, overrides: Overrides) -> RunConfig {
    let o = Overrides { out: Some(out.to_path_buf()), cache_dir: Some(out.join("cache")), ..overrides };
    RunConfig::load(Some(&fixtures().join("run.toml")), &o).unwrap()
}

#[test]
fn fused_run_equals_detect_then_eliminate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Overrides::default());
    let corpus = load_corpus(fixtures().join("corpus.jsonl")).unwrap();
    let ann = AnnotationSet::load(fixtures().join("annotations.json")).unwrap();
    let lexicon = build_lexicon(Some(&ann));
    let chunks = extract_all(&corpus, &RuleParser::new(lexicon.clone())).unwrap();
    let panel = make_panel(&cfg).unwrap();
    let scorer = LexicalScorer::with_lexicon(&lexicon);
    let detector = Detector { panel: &panel, generator: &TemplateGenerator, scorer: &scorer, threshold: 0.5 };
    let eliminator = Eliminator::new(lexicon);

    let (fused_verdicts, fused, _) = detect_and_eliminate(&corpus, &chunks, &detector, &eliminator).unwrap();
    let verdicts = detect(&corpus, &chunks, &detector).unwrap();
    let (staged, _) = eliminate_corpus(&corpus, &chunks, &verdicts, &eliminator, None).unwrap();
    assert_eq!(fused_verdicts, verdicts);
    assert_eq!(fused.to_jsonl(), staged.to_jsonl());

    // the CLI stages agree with the library calls
    pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_eliminate(&cfg).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("rectified.jsonl")).unwrap(), staged.to_jsonl());
}

#[test]
fn zero_threshold_flags_nothing_and_leaves_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Overrides { threshold: Some(0.0), ..Default::default() });
    let outcome = pipeline::cmd_detect(&cfg).unwrap();
    assert!(outcome.message.contains("flagged=0"), "{}", outcome.message);
    pipeline::cmd_eliminate(&cfg).unwrap();
    let original = load_corpus(fixtures().join("corpus.jsonl")).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("rectified.jsonl")).unwrap(), original.to_jsonl());
}

#[test]
fn zero_budget_expands_to_the_rectified_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Overrides { budget: Some(0), ..Default::default() });
    pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_eliminate(&cfg).unwrap();
    pipeline::cmd_expand(&cfg).unwrap();
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    assert_eq!(read("expanded.jsonl"), read("rectified.jsonl"));
    assert_eq!(read("counterfactuals.jsonl"), "");
}

#[test]
fn expansion_appends_one_sample_per_counterfactual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Overrides::default());
    pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_eliminate(&cfg).unwrap();
    pipeline::cmd_expand(&cfg).unwrap();
    let rectified = load_corpus(dir.path().join("rectified.jsonl")).unwrap();
    let expanded = load_corpus(dir.path().join("expanded.jsonl")).unwrap();
    let cf = std::fs::read_to_string(dir.path().join("counterfactuals.jsonl")).unwrap();
    assert!(cf.lines().count() > 0);
    assert_eq!(expanded.len(), rectified.len() + cf.lines().count());
    assert_eq!(expanded.samples[..rectified.len()], rectified.samples[..]);
}

#[test]
fn chunk_cooccurrence_source_also_expands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        Overrides { co_occurrence_source: Some(pipeline::CooccurrenceSource::Chunks), ..Default::default() },
    );
    pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_eliminate(&cfg).unwrap();
    let outcome = pipeline::cmd_expand(&cfg).unwrap();
    assert!(outcome.message.starts_with("appended"), "{}", outcome.message);
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("expansion_log.json")).unwrap()).unwrap();
    assert_eq!(log["source"], "chunks");
}

#[test]
fn verdict_for_unknown_sample_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Overrides::default());
    pipeline::cmd_detect(&cfg).unwrap();
    let vpath = dir.path().join("verdicts.jsonl");
    let text = std::fs::read_to_string(&vpath).unwrap();
    let first = text.lines().next().unwrap().replacen("\"s01\"", "\"s99\"", 1);
    std::fs::write(&vpath, format!("{first}\n{text}")).unwrap();
    let err = pipeline::cmd_eliminate(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Input(_)), "{err}");
    assert!(err.to_string().contains("s99"), "{err}");
}

#[test]
fn manifest_records_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Overrides::default());
    pipeline::cmd_chair(&cfg).unwrap();
    pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_eliminate(&cfg).unwrap();
    let m = read_manifest(dir.path()).unwrap();
    assert_eq!(m.stages.keys().map(String::as_str).collect::<Vec<_>>(), ["chair", "detect", "eliminate"]);
    let det = &m.stages["detect"];
    assert!(det.inputs.contains_key("corpus") && det.outputs.contains_key("verdicts.jsonl"));
    // eliminate consumed exactly what detect wrote
    assert_eq!(m.stages["eliminate"].inputs["verdicts"], det.outputs["verdicts.jsonl"]);
    assert!(dir.path().join(pipeline::TIMINGS_FILE).exists());

    // a different threshold is a different run
    let other = config(dir.path(), Overrides { threshold: Some(0.7), ..Default::default() });
    assert_ne!(cfg.config_hash(), other.config_hash());
    let moved = config(&dir.path().join("elsewhere"), Overrides { jobs: Some(1), ..Default::default() });
    assert_eq!(cfg.config_hash(), moved.config_hash());
}
