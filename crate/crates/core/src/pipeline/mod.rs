//! File-level runs: loading inputs, running stages in a bounded thread pool,
//! writing outputs with a manifest. Each `cmd_*` function backs one
//! subcommand of the binary.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    interpolate, load_experts_file, CooccurrenceSource, Overrides, RunConfig, DEFAULT_EXPANSION_BUDGET,
    DEFAULT_SERVICE_TIMEOUT_MS,
};

use crate::chairmetrics::{chair_report, render_markdown, render_report, ChairReport, ReportFormat, TypeRates};
use crate::corpus::{load_corpus, AnnotationSet, Corpus, Role};
use crate::crosscheck::{
    cross_check, read_verdicts, rewrite_external, ConsistencyVerdict, EliminationResult, Eliminator, EquivalenceScorer,
    HttpRewriter, HttpScorer, LexicalScorer, Rewriter,
};
use crate::experts::{AnswerCache, Panel};
use crate::probegen::{HttpQuestionGenerator, QuestionGenerator, TemplateGenerator};
use crate::seesaw::{build_cooccurrence, build_cooccurrence_from_chunks, expand, Expansion};
use crate::sgparse::{sentences_of, AnswerChunk, ChunkExtractor, ChunkKind, ExternalParser, Lexicon, RuleParser};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_DEGRADED: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad or missing input; exit code 1.
    #[error("{0}")]
    Input(String),
    /// Anything else; exit code 3.
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => EXIT_INPUT,
            PipelineError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input(e.to_string())
}

/// What a command did, for the terminal and the exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub message: String,
    /// Some chunks could not be verified.
    pub degraded: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.degraded {
            EXIT_DEGRADED
        } else {
            EXIT_OK
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub run_id: String,
    /// Logical input name to sha256 of the file.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (inside the output directory) to sha256.
    pub outputs: BTreeMap<String, String>,
}

/// `manifest.json`: one record per stage that has written to the output
/// directory. Wall-clock timings live in `timings.json` so the manifest
/// stays reproducible.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

pub fn read_manifest(out_dir: &Path) -> Option<Manifest> {
    serde_json::from_slice(&std::fs::read(out_dir.join(MANIFEST_FILE)).ok()?).ok()
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("value serializes"));
        s.push('\n');
    }
    s
}

/// Input digests and output files of one stage run.
struct Stage<'a> {
    name: &'static str,
    cfg: &'a RunConfig,
    started: Instant,
    record: StageRecord,
}

impl<'a> Stage<'a> {
    fn new(name: &'static str, cfg: &'a RunConfig) -> Self {
        let record = StageRecord { config_hash: cfg.config_hash(), ..Default::default() };
        Stage { name, cfg, started: Instant::now(), record }
    }

    fn input(&mut self, label: &str, path: &Path) -> Result<(), PipelineError> {
        let d = file_digest(path)?;
        self.record.inputs.insert(label.to_string(), d);
        Ok(())
    }

    /// Hash of the config hash and every input digest registered so far.
    fn run_id(&self) -> String {
        let mut s = self.record.config_hash.clone();
        for (k, v) in &self.record.inputs {
            let _ = write!(s, "\n{k}={v}");
        }
        sha256_hex(s.as_bytes())
    }

    fn write(&mut self, name: &str, content: &str) -> Result<PathBuf, PipelineError> {
        let dir = &self.cfg.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Input(format!("{}: {e}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| PipelineError::Internal(format!("{}: {e}", path.display())))?;
        self.record.outputs.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(path)
    }

    fn finish(mut self) -> Result<(), PipelineError> {
        self.record.run_id = self.run_id();
        let dir = self.cfg.output_dir.clone();
        let mut manifest = read_manifest(&dir).unwrap_or_default();
        manifest.tool = TOOL_NAME.into();
        manifest.version = TOOL_VERSION.into();
        manifest.stages.insert(self.name.to_string(), self.record.clone());
        let text = pretty(&manifest);
        std::fs::write(dir.join(MANIFEST_FILE), text).map_err(|e| PipelineError::Internal(e.to_string()))?;

        let tpath = dir.join(TIMINGS_FILE);
        let mut timings: BTreeMap<String, u64> =
            std::fs::read(&tpath).ok().and_then(|b| serde_json::from_slice(&b).ok()).unwrap_or_default();
        timings.insert(self.name.to_string(), self.started.elapsed().as_millis() as u64);
        std::fs::write(&tpath, pretty(&timings)).map_err(|e| PipelineError::Internal(e.to_string()))
    }
}

fn thread_pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::Internal(format!("thread pool: {e}")))
}

fn require<'p>(path: &'p Option<PathBuf>, what: &str) -> Result<&'p Path, PipelineError> {
    path.as_deref().ok_or_else(|| PipelineError::Input(format!("no {what} path configured")))
}

fn read_corpus(path: &Path) -> Result<Corpus, PipelineError> {
    load_corpus(path).map_err(input_err)
}

fn read_annotations(path: &Path) -> Result<AnnotationSet, PipelineError> {
    AnnotationSet::load(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn read_verdict_file(path: &Path) -> Result<Vec<ConsistencyVerdict>, PipelineError> {
    read_verdicts(path).map_err(input_err)
}

/// Built-in vocabulary plus annotated names when available.
pub fn build_lexicon(annotations: Option<&AnnotationSet>) -> Lexicon {
    match annotations {
        Some(a) => Lexicon::with_annotations(a),
        None => Lexicon::builtin(),
    }
}

/// Chunk extractor for a config: the external command if one is set,
/// otherwise the rule grammar over `lexicon`.
pub fn extractor_for(cfg: &RunConfig, lexicon: &Lexicon) -> Result<Box<dyn ChunkExtractor>, PipelineError> {
    match &cfg.parser {
        Some(cmd) => Ok(Box::new(
            ExternalParser::from_command_line(cmd)
                .ok_or_else(|| PipelineError::Input("empty parser command".into()))?,
        )),
        None => Ok(Box::new(RuleParser::new(lexicon.clone()))),
    }
}

/// Chunks of every sample, in corpus order.
pub fn extract_all(corpus: &Corpus, extractor: &dyn ChunkExtractor) -> Result<Vec<Vec<AnswerChunk>>, PipelineError> {
    corpus
        .samples
        .par_iter()
        .map(|s| extractor.extract(s).map_err(|e| PipelineError::Input(format!("sample {}: {e}", s.id))))
        .collect()
}

/// The three pluggable pieces of cross-checking plus the threshold.
pub struct Detector<'a> {
    pub panel: &'a Panel,
    pub generator: &'a dyn QuestionGenerator,
    pub scorer: &'a dyn EquivalenceScorer,
    pub threshold: f64,
}

/// Cross-check every chunk in an assistant turn. Verdicts come back in
/// corpus order.
pub fn detect(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    detector: &Detector<'_>,
) -> Result<Vec<ConsistencyVerdict>, PipelineError> {
    if detector.panel.is_empty() {
        return Err(PipelineError::Input("no experts configured".into()));
    }
    let per_sample: Vec<Result<Vec<ConsistencyVerdict>, PipelineError>> = corpus
        .samples
        .par_iter()
        .zip(chunks.par_iter())
        .map(|(sample, cs)| {
            let sentences: HashMap<(usize, usize), String> =
                sentences_of(sample).into_iter().map(|s| ((s.turn_index, s.sentence_index), s.text)).collect();
            let mut out = Vec::new();
            for c in cs {
                let in_assistant =
                    sample.conversations.get(c.span.turn_index).is_some_and(|t| t.from == Role::Assistant);
                if !in_assistant {
                    continue;
                }
                let context = sentences.get(&(c.span.turn_index, c.span.sentence_index)).map_or("", String::as_str);
                let q = detector.generator.generate(c, context);
                let answers = detector.panel.ask_panel(&sample.image, &q).map_err(input_err)?;
                out.push(cross_check(c, &q, &answers, detector.scorer, detector.threshold));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_sample {
        all.extend(r?);
    }
    Ok(all)
}

/// Remove flagged chunks from every sample. With a rewriter, each sample is
/// first offered to it and checked by re-parsing.
pub fn eliminate_corpus(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    verdicts: &[ConsistencyVerdict],
    eliminator: &Eliminator,
    rewriter: Option<&dyn Rewriter>,
) -> Result<(Corpus, Vec<EliminationResult>), PipelineError> {
    let mut by_sample: HashMap<&str, Vec<ConsistencyVerdict>> = HashMap::new();
    for v in verdicts {
        if corpus.get(&v.sample_id).is_none() {
            return Err(PipelineError::Input(format!(
                "verdict {} refers to unknown sample {:?}",
                v.chunk_id, v.sample_id
            )));
        }
        by_sample.entry(v.sample_id.as_str()).or_default().push(v.clone());
    }
    let empty = Vec::new();
    let results: Vec<EliminationResult> = corpus
        .samples
        .par_iter()
        .zip(chunks.par_iter())
        .map(|(s, cs)| {
            let vs = by_sample.get(s.id.as_str()).unwrap_or(&empty);
            let r = match rewriter {
                Some(rw) => rewrite_external(eliminator, rw, s, cs, vs),
                None => eliminator.eliminate(s, cs, vs),
            };
            r.map_err(|e| PipelineError::Input(format!("sample {}: {e}", s.id)))
        })
        .collect::<Result<_, _>>()?;
    let samples = corpus.samples.iter().zip(&results).map(|(s, r)| r.apply(s)).collect();
    let mut rectified = Corpus::new(samples).map_err(|e| PipelineError::Internal(e.to_string()))?;
    rectified.source_path = corpus.source_path.clone();
    Ok((rectified, results))
}

/// Detection followed directly by elimination, without the verdict file in
/// between.
pub fn detect_and_eliminate(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    detector: &Detector<'_>,
    eliminator: &Eliminator,
) -> Result<(Vec<ConsistencyVerdict>, Corpus, Vec<EliminationResult>), PipelineError> {
    let verdicts = detect(corpus, chunks, detector)?;
    let (rectified, log) = eliminate_corpus(corpus, chunks, &verdicts, eliminator, None)?;
    Ok((verdicts, rectified, log))
}

/// Heads of removable object verdicts, most frequent first, ties by name.
pub fn flagged_objects(verdicts: &[ConsistencyVerdict]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in verdicts.iter().filter(|v| v.kind == ChunkKind::Object && v.removable()) {
        *counts.entry(v.head.as_str()).or_default() += 1;
    }
    let mut objs: Vec<(&str, usize)> = counts.into_iter().collect();
    objs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    objs.into_iter().map(|(o, _)| o.to_string()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub chunks: u64,
    pub flagged: u64,
    pub unverifiable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub threshold: f64,
    pub experts: Vec<String>,
    pub samples: u64,
    pub total: KindCounts,
    pub by_kind: BTreeMap<String, KindCounts>,
    pub run_id: String,
}

pub fn summarize_verdicts(verdicts: &[ConsistencyVerdict]) -> (KindCounts, BTreeMap<String, KindCounts>) {
    let mut total = KindCounts::default();
    let mut by_kind: BTreeMap<String, KindCounts> = BTreeMap::new();
    for v in verdicts {
        for k in [&mut total, by_kind.entry(v.kind.to_string()).or_default()] {
            k.chunks += 1;
            k.flagged += v.removable() as u64;
            k.unverifiable += v.unverifiable as u64;
        }
    }
    (total, by_kind)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRates {
    pub obj: TypeRates,
    pub rel: TypeRates,
    pub attri: TypeRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub flagged: u64,
    pub unverifiable: u64,
    /// Rates after elimination at this threshold; absent without annotations.
    pub chair: Option<SweepRates>,
}

/// Re-threshold stored verdicts and eliminate at each threshold. No expert
/// is queried.
pub fn sweep(
    corpus: &Corpus,
    chunks: &[Vec<AnswerChunk>],
    verdicts: &[ConsistencyVerdict],
    thresholds: &[f64],
    eliminator: &Eliminator,
    extractor: &dyn ChunkExtractor,
    annotations: Option<&AnnotationSet>,
) -> Result<Vec<SweepRow>, PipelineError> {
    thresholds
        .iter()
        .map(|&t| {
            let re: Vec<ConsistencyVerdict> = verdicts.iter().map(|v| v.reclassify(t)).collect();
            let (total, _) = summarize_verdicts(&re);
            let chair = match annotations {
                Some(a) => {
                    let (rectified, _) = eliminate_corpus(corpus, chunks, &re, eliminator, None)?;
                    let fresh = extract_all(&rectified, extractor)?;
                    let r = chair_report(&rectified, &fresh, a).map_err(input_err)?;
                    Some(SweepRates { obj: r.obj, rel: r.rel, attri: r.attri })
                }
                None => None,
            };
            Ok(SweepRow { threshold: t, flagged: total.flagged, unverifiable: total.unverifiable, chair })
        })
        .collect()
}

pub fn render_sweep_markdown(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "| Threshold | Flagged | CHAIR_obj (S) | CHAIR_rel (S) | CHAIR_attri (S) | CHAIR_obj (I) | CHAIR_rel (I) | CHAIR_attri (I) |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let cells: Vec<String> = match &r.chair {
            Some(c) => [&c.obj, &c.rel, &c.attri]
                .iter()
                .map(|t| t.sentence.percent())
                .chain([&c.obj, &c.rel, &c.attri].iter().map(|t| t.instance.percent()))
                .collect(),
            None => vec!["n/a".into(); 6],
        };
        let _ = writeln!(out, "| {} | {} | {} |", r.threshold, r.flagged, cells.join(" | "));
    }
    out
}

fn service_timeout(cfg: &RunConfig) -> Duration {
    Duration::from_millis(cfg.service_timeout_ms)
}

fn make_generator(cfg: &RunConfig) -> Box<dyn QuestionGenerator> {
    match &cfg.question_endpoint {
        Some(e) => Box::new(HttpQuestionGenerator::new(e.clone(), service_timeout(cfg))),
        None => Box::new(TemplateGenerator),
    }
}

fn make_scorer(cfg: &RunConfig, lexicon: &Lexicon) -> Box<dyn EquivalenceScorer> {
    let lexical = LexicalScorer::with_lexicon(lexicon);
    match &cfg.scorer_endpoint {
        Some(e) => Box::new(HttpScorer::new(e, service_timeout(cfg), lexical)),
        None => Box::new(lexical),
    }
}

fn make_rewriter(cfg: &RunConfig) -> Option<HttpRewriter> {
    cfg.rewriter_endpoint.as_deref().map(|e| HttpRewriter::new(e, service_timeout(cfg)))
}

/// Expert panel with the on-disk answer cache.
pub fn make_panel(cfg: &RunConfig) -> Result<Panel, PipelineError> {
    if cfg.experts.is_empty() {
        return Err(PipelineError::Input("no experts configured".into()));
    }
    let cache = AnswerCache::on_disk(&cfg.cache_dir)
        .map_err(|e| PipelineError::Input(format!("cache directory {}: {e}", cfg.cache_dir.display())))?;
    Ok(Panel::from_configs(&cfg.experts, &cfg.experts_base)
        .map_err(input_err)?
        .with_cache(Arc::new(cache))
        .with_seed(cfg.seed))
}

fn register_experts(stage: &mut Stage<'_>, cfg: &RunConfig) -> Result<(), PipelineError> {
    for e in &cfg.experts {
        if let Some(script) = e.mock_script() {
            stage.input(&format!("expert:{}", e.expert_id), &cfg.experts_base.join(script))?;
        }
    }
    Ok(())
}

/// Corpus, optional annotations and the lexicon, registered as stage inputs.
fn load_inputs(
    stage: &mut Stage<'_>,
    cfg: &RunConfig,
    need_annotations: bool,
) -> Result<(Corpus, Option<AnnotationSet>, Lexicon), PipelineError> {
    let cpath = require(&cfg.corpus_path, "corpus")?;
    stage.input("corpus", cpath)?;
    let corpus = read_corpus(cpath)?;
    let annotations = match &cfg.annotations_path {
        Some(p) => {
            stage.input("annotations", p)?;
            Some(read_annotations(p)?)
        }
        None if need_annotations => return Err(PipelineError::Input("no annotations path configured".into())),
        None => None,
    };
    let lexicon = build_lexicon(annotations.as_ref());
    Ok((corpus, annotations, lexicon))
}

/// Sentence- and instance-level CHAIR for the configured corpus.
pub fn cmd_chair(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    thread_pool(cfg)?.install(|| {
        let mut stage = Stage::new("chair", cfg);
        let (corpus, annotations, lexicon) = load_inputs(&mut stage, cfg, true)?;
        let annotations = annotations.expect("required above");
        let chunks = extract_all(&corpus, extractor_for(cfg, &lexicon)?.as_ref())?;
        let mut report = chair_report(&corpus, &chunks, &annotations).map_err(input_err)?;
        report.run_id = Some(stage.run_id());
        stage.write("chair_report.json", &render_report(&report, ReportFormat::Json))?;
        let md = render_markdown(&[("corpus", &report)]);
        stage.write("chair_report.md", &md)?;
        stage.finish()?;
        Ok(Outcome { message: md, degraded: false })
    })
}

/// Cross-check every assistant chunk and write `verdicts.jsonl`.
pub fn cmd_detect(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    thread_pool(cfg)?.install(|| {
        let mut stage = Stage::new("detect", cfg);
        let (corpus, _, lexicon) = load_inputs(&mut stage, cfg, false)?;
        register_experts(&mut stage, cfg)?;
        let panel = make_panel(cfg)?;
        let chunks = extract_all(&corpus, extractor_for(cfg, &lexicon)?.as_ref())?;
        let generator = make_generator(cfg);
        let scorer = make_scorer(cfg, &lexicon);
        let detector = Detector {
            panel: &panel,
            generator: generator.as_ref(),
            scorer: scorer.as_ref(),
            threshold: cfg.threshold,
        };
        let verdicts = detect(&corpus, &chunks, &detector)?;
        let (total, by_kind) = summarize_verdicts(&verdicts);
        let summary = DetectSummary {
            threshold: cfg.threshold,
            experts: panel.expert_ids().into_iter().map(String::from).collect(),
            samples: corpus.len() as u64,
            total: total.clone(),
            by_kind,
            run_id: stage.run_id(),
        };
        stage.write("verdicts.jsonl", &jsonl(&verdicts))?;
        stage.write("detect_summary.json", &pretty(&summary))?;
        stage.finish()?;
        log::info!("{} expert calls went over the wire", panel.wire_calls());
        Ok(Outcome {
            message: format!(
                "chunks={} flagged={} unverifiable={} threshold={}",
                total.chunks, total.flagged, total.unverifiable, cfg.threshold
            ),
            degraded: total.unverifiable > 0,
        })
    })
}

/// Apply stored verdicts and write the rectified corpus.
pub fn cmd_eliminate(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    thread_pool(cfg)?.install(|| {
        let mut stage = Stage::new("eliminate", cfg);
        let (corpus, annotations, lexicon) = load_inputs(&mut stage, cfg, false)?;
        let vpath = cfg.verdicts_file();
        stage.input("verdicts", &vpath)?;
        let verdicts = read_verdict_file(&vpath)?;
        let extractor = extractor_for(cfg, &lexicon)?;
        let chunks = extract_all(&corpus, extractor.as_ref())?;
        let eliminator = Eliminator::new(lexicon);
        let rewriter = make_rewriter(cfg);
        let (rectified, log) =
            eliminate_corpus(&corpus, &chunks, &verdicts, &eliminator, rewriter.as_ref().map(|r| r as &dyn Rewriter))?;
        let touched: Vec<&EliminationResult> = corpus
            .samples
            .iter()
            .zip(&log)
            .filter(|(s, r)| !r.removed_chunk_ids.is_empty() || r.changed(s))
            .map(|(_, r)| r)
            .collect();
        stage.write("rectified.jsonl", &rectified.to_jsonl())?;
        stage.write("elimination_log.jsonl", &jsonl(&touched))?;
        let mut message = format!("rewrote {} of {} samples", touched.len(), corpus.len());
        if let Some(a) = &annotations {
            let fresh = extract_all(&rectified, extractor.as_ref())?;
            let run_id = Some(stage.run_id());
            let before =
                ChairReport { run_id: run_id.clone(), ..chair_report(&corpus, &chunks, a).map_err(input_err)? };
            let after = ChairReport { run_id, ..chair_report(&rectified, &fresh, a).map_err(input_err)? };
            let md = render_markdown(&[("original", &before), ("rectified", &after)]);
            stage.write("elimination_chair.md", &md)?;
            message = format!("{message}\n{md}");
        }
        stage.finish()?;
        Ok(Outcome { message, degraded: false })
    })
}

#[derive(Debug, Clone, Serialize)]
struct ExpansionLog<'a> {
    objects: &'a [String],
    budget: usize,
    source: CooccurrenceSource,
    #[serde(flatten)]
    expansion: &'a Expansion,
}

/// Append counterfactual samples for flagged objects to the rectified corpus.
pub fn cmd_expand(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    thread_pool(cfg)?.install(|| {
        let mut stage = Stage::new("expand", cfg);
        let apath = require(&cfg.annotations_path, "annotations")?;
        stage.input("annotations", apath)?;
        let annotations = read_annotations(apath)?;
        let rpath = cfg.rectified_file();
        stage.input("rectified", &rpath)?;
        let rectified = read_corpus(&rpath)?;
        let vpath = cfg.verdicts_file();
        stage.input("verdicts", &vpath)?;
        let verdicts = read_verdict_file(&vpath)?;

        let matrix = match cfg.co_occurrence_source {
            CooccurrenceSource::Annotations => build_cooccurrence(&annotations),
            CooccurrenceSource::Chunks => {
                let cpath = require(&cfg.corpus_path, "corpus")?;
                stage.input("corpus", cpath)?;
                let corpus = read_corpus(cpath)?;
                let lexicon = build_lexicon(Some(&annotations));
                let chunks = extract_all(&corpus, extractor_for(cfg, &lexicon)?.as_ref())?;
                build_cooccurrence_from_chunks(&corpus, &chunks)
            }
        };
        let objects = flagged_objects(&verdicts);
        let expansion = expand(&objects, &matrix, &annotations, cfg.expansion_budget);

        let mut samples = rectified.samples.clone();
        samples.extend(expansion.instructions.iter().map(|c| c.to_sample()));
        let expanded = Corpus::new(samples).map_err(|e| PipelineError::Input(format!("expanded corpus: {e}")))?;
        let edits: Vec<_> = expansion.instructions.iter().map(|c| c.edit_request()).collect();
        stage.write("expanded.jsonl", &expanded.to_jsonl())?;
        stage.write("counterfactuals.jsonl", &jsonl(&expansion.instructions))?;
        stage.write("edit_requests.jsonl", &jsonl(&edits))?;
        let log = ExpansionLog {
            objects: &objects,
            budget: cfg.expansion_budget,
            source: cfg.co_occurrence_source,
            expansion: &expansion,
        };
        stage.write("expansion_log.json", &pretty(&log))?;
        stage.finish()?;
        Ok(Outcome {
            message: format!(
                "appended {} counterfactual samples for {} flagged objects ({} skipped)",
                expansion.instructions.len(),
                objects.len(),
                expansion.skipped.len()
            ),
            degraded: false,
        })
    })
}

/// Flagged counts and post-elimination CHAIR at each sweep threshold.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    thread_pool(cfg)?.install(|| {
        let mut stage = Stage::new("sweep", cfg);
        let (corpus, annotations, lexicon) = load_inputs(&mut stage, cfg, false)?;
        let vpath = cfg.verdicts_file();
        stage.input("verdicts", &vpath)?;
        let verdicts = read_verdict_file(&vpath)?;
        let extractor = extractor_for(cfg, &lexicon)?;
        let chunks = extract_all(&corpus, extractor.as_ref())?;
        let eliminator = Eliminator::new(lexicon);
        let rows = sweep(
            &corpus,
            &chunks,
            &verdicts,
            &cfg.sweep_thresholds,
            &eliminator,
            extractor.as_ref(),
            annotations.as_ref(),
        )?;
        let md = render_sweep_markdown(&rows);
        stage.write("sweep.json", &pretty(&rows))?;
        stage.write("sweep.md", &md)?;
        stage.finish()?;
        Ok(Outcome { message: md, degraded: false })
    })
}

/// `report.md`: CHAIR for the original, rectified and expanded corpora
/// (whichever exist) plus the detection, sweep and expansion summaries
/// already in the output directory.
pub fn cmd_report(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    thread_pool(cfg)?.install(|| {
        let mut stage = Stage::new("report", cfg);
        let (corpus, annotations, lexicon) = load_inputs(&mut stage, cfg, true)?;
        let annotations = annotations.expect("required above");
        let extractor = extractor_for(cfg, &lexicon)?;
        let mut corpora = vec![("original".to_string(), corpus)];
        for (label, name) in [("rectified", "rectified.jsonl"), ("expanded", "expanded.jsonl")] {
            let p = cfg.output_dir.join(name);
            if p.exists() {
                stage.input(label, &p)?;
                corpora.push((label.to_string(), read_corpus(&p)?));
            }
        }
        let run_id = stage.run_id();
        let mut reports = Vec::new();
        for (label, c) in &corpora {
            let chunks = extract_all(c, extractor.as_ref())?;
            let r = chair_report(c, &chunks, &annotations).map_err(input_err)?;
            reports.push((label.as_str(), ChairReport { run_id: Some(run_id.clone()), ..r }));
        }
        let rows: Vec<(&str, &ChairReport)> = reports.iter().map(|(l, r)| (*l, r)).collect();
        let mut md = String::from("# Hallucination report\n\n## CHAIR\n\n");
        md.push_str(&render_markdown(&rows));

        let out = &cfg.output_dir;
        if let Some(s) = std::fs::read(out.join("detect_summary.json")).ok().and_then(|b| serde_json::from_slice::<DetectSummary>(&b).ok()) {
            let _ = write!(
                md,
                "\n## Detection\n\nthreshold {}, experts {}: {} chunks, {} flagged, {} unverifiable\n\n| Kind | Chunks | Flagged | Unverifiable |\n|---|---|---|---|\n",
                s.threshold,
                s.experts.join(", "),
                s.total.chunks,
                s.total.flagged,
                s.total.unverifiable
            );
            for (k, c) in &s.by_kind {
                let _ = writeln!(md, "| {k} | {} | {} | {} |", c.chunks, c.flagged, c.unverifiable);
            }
        }
        if let Ok(sweep_md) = std::fs::read_to_string(out.join("sweep.md")) {
            md.push_str("\n## Threshold sweep\n\n");
            md.push_str(&sweep_md);
        }
        if let Some(log) = std::fs::read(out.join("expansion_log.json")).ok().and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok()) {
            let n = |k: &str| log[k].as_array().map_or(0, Vec::len);
            let _ = writeln!(md, "\n## Expansion\n\n{} counterfactual samples, {} objects skipped", n("instructions"), n("skipped"));
        }
        if let Some(m) = read_manifest(out) {
            let _ = writeln!(md, "\nmanifest stages: {}", m.stages.keys().cloned().collect::<Vec<_>>().join(", "));
        }
        stage.write("report.md", &md)?;
        stage.finish()?;
        Ok(Outcome { message: md, degraded: false })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crosscheck::ExpertScore;

    fn verdict(id: &str, kind: ChunkKind, head: &str, conscore: Option<f64>) -> ConsistencyVerdict {
        ConsistencyVerdict {
            chunk_id: id.into(),
            sample_id: "s".into(),
            kind,
            head: head.into(),
            per_expert: conscore.map(|c| ExpertScore { expert_id: "a".into(), score: c }).into_iter().collect(),
            failed_experts: vec![],
            conscore,
            is_hallucination: conscore.is_some_and(|c| c < 0.5),
            unverifiable: conscore.is_none(),
        }
    }

    #[test]
    fn flagged_objects_by_frequency() {
        let vs = vec![
            verdict("1", ChunkKind::Object, "kite", Some(0.0)),
            verdict("2", ChunkKind::Object, "dog", Some(0.0)),
            verdict("3", ChunkKind::Object, "kite", Some(0.2)),
            verdict("4", ChunkKind::Object, "cat", Some(0.0)),
            verdict("5", ChunkKind::Object, "bus", Some(1.0)),
            verdict("6", ChunkKind::Object, "car", None),
            verdict("7", ChunkKind::Attribute, "red", Some(0.0)),
        ];
        assert_eq!(flagged_objects(&vs), ["kite", "cat", "dog"]);
        let (total, by_kind) = summarize_verdicts(&vs);
        assert_eq!(total, KindCounts { chunks: 7, flagged: 5, unverifiable: 1 });
        assert_eq!(by_kind["attribute"].flagged, 1);
    }

    #[test]
    fn outcome_exit_codes() {
        assert_eq!(Outcome { message: String::new(), degraded: false }.exit_code(), EXIT_OK);
        assert_eq!(Outcome { message: String::new(), degraded: true }.exit_code(), EXIT_DEGRADED);
        assert_eq!(PipelineError::Input("x".into()).exit_code(), EXIT_INPUT);
        assert_eq!(PipelineError::Internal("x".into()).exit_code(), EXIT_INTERNAL);
    }

    #[test]
    fn missing_inputs_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides {
            corpus: Some(dir.path().join("nope.jsonl")),
            annotations: Some(dir.path().join("ann.json")),
            out: Some(dir.path().join("out")),
            ..Default::default()
        };
        let cfg = RunConfig::load(None, &o).unwrap();
        let err = cmd_chair(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INPUT);
        assert!(err.to_string().contains("nope.jsonl"), "{err}");
        let o = Overrides { out: Some(dir.path().join("out")), ..Default::default() };
        assert!(cmd_detect(&RunConfig::load(None, &o).unwrap()).unwrap_err().to_string().contains("corpus"));
    }
}
