//! End-to-end acceptance checks. Every test prints one `[PASS]`/`[FAIL]`
//! line.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hallucheck::chairmetrics::{chair_report, sentence_flags, ChairReport, Rate};
use hallucheck::corpus::{load_corpus, AnnotationSet, Corpus, InstructionSample, Role, Turn};
use hallucheck::crosscheck::{classify, compute_conscore, ConsistencyVerdict, SWEEP_THRESHOLDS};
use hallucheck::pipeline::{self, build_lexicon, extract_all, Overrides, RunConfig};
use hallucheck::seesaw::{enhancement_factor, expand, inhibiting_factor, rank_targets, CooccurrenceMatrix, Expansion};
use hallucheck::sgparse::{extract_chunks, ChunkKind, RuleParser};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Written straight to stderr so the line shows up even when the harness
/// captures test output.
fn verdict_line(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!("[{}] criterion {n}: {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn fixture_config(out: &Path, cache: &Path) -> RunConfig {
    let o = Overrides { out: Some(out.to_path_buf()), cache_dir: Some(cache.to_path_buf()), ..Default::default() };
    RunConfig::load(Some(&fixtures().join("run.toml")), &o).unwrap()
}

// ---------------------------------------------------------------------------
// 1. CHAIR against a hand-labelled oracle

/// Object lookup straight from the annotation JSON: name or listed synonym.
fn resolve<'a>(img: &'a Value, term: &str) -> Option<&'a str> {
    img["objects"].as_array()?.iter().find_map(|o| {
        let name = o["name"].as_str()?;
        let syn = o["synonyms"].as_array().is_some_and(|s| s.iter().any(|x| x.as_str() == Some(term)));
        (name == term || syn).then_some(name)
    })
}

fn has_triple(list: &Value, wanted: &[&str]) -> bool {
    list.as_array().unwrap().iter().any(|t| {
        let t: Vec<&str> = t.as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
        t == wanted
    })
}

#[derive(Default, Debug, PartialEq)]
struct OracleRates {
    sentence: [(u64, u64); 3],
    instance: [(u64, u64); 3],
    flags: Vec<(String, [bool; 3])>,
}

/// Exhaustive recount from the labels. Per sentence, each distinct mention
/// counts once; relation/attribute numerators require existing endpoints.
fn chair_oracle(labels: &Value, ann: &Value) -> OracleRates {
    let mut r = OracleRates::default();
    for s in labels["sentences"].as_array().unwrap() {
        let img = &ann[s["image"].as_str().unwrap()];
        let mut hit = [false; 3];
        let mut seen: [BTreeSet<Vec<String>>; 3] = Default::default();
        let strs = |v: &Value| -> Vec<String> {
            match v {
                Value::String(x) => vec![x.clone()],
                _ => v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect(),
            }
        };
        for (k, field) in ["objects", "relations", "attributes"].iter().enumerate() {
            for m in s[*field].as_array().unwrap() {
                let raw = strs(m);
                // endpoints resolved to annotation names where they exist
                let mut key = raw.clone();
                let ends: Vec<usize> = match k {
                    0 => vec![0],
                    1 => vec![0, 2],
                    _ => vec![0],
                };
                let mut all_exist = true;
                for &e in &ends {
                    match resolve(img, &raw[e]) {
                        Some(n) => key[e] = n.to_string(),
                        None => all_exist = false,
                    }
                }
                if !seen[k].insert(key.clone()) {
                    continue;
                }
                r.instance[k].1 += 1;
                let bad = match k {
                    0 => !all_exist,
                    1 => all_exist && !has_triple(&img["relations"], &[&key[0], &key[1], &key[2]]),
                    _ => all_exist && !has_triple(&img["attributes"], &[&key[0], &key[1]]),
                };
                if bad {
                    r.instance[k].0 += 1;
                    hit[k] = true;
                }
            }
        }
        for (rate, h) in r.sentence.iter_mut().zip(hit) {
            rate.0 += h as u64;
            rate.1 += 1;
        }
        r.flags.push((s["sample"].as_str().unwrap().to_string(), hit));
    }
    r
}

fn pairs(rates: [&Rate; 3]) -> [(u64, u64); 3] {
    rates.map(|r| (r.num, r.den))
}

#[test]
fn c1_chair_matches_hand_labelled_oracle() {
    let fx = fixtures();
    let labels: Value = serde_json::from_str(&std::fs::read_to_string(fx.join("chair_labels.json")).unwrap()).unwrap();
    let ann_json: Value = serde_json::from_str(&std::fs::read_to_string(fx.join("annotations.json")).unwrap()).unwrap();
    let oracle = chair_oracle(&labels, &ann_json);

    let t = Instant::now();
    let corpus = load_corpus(fx.join("corpus.jsonl")).unwrap();
    let ann = AnnotationSet::load(fx.join("annotations.json")).unwrap();
    let parser = RuleParser::new(build_lexicon(Some(&ann)));
    let chunks = extract_all(&corpus, &parser).unwrap();
    let report: ChairReport = chair_report(&corpus, &chunks, &ann).unwrap();
    let flags = sentence_flags(&corpus, &chunks, &ann).unwrap();
    let elapsed = t.elapsed();

    let got_sentence = pairs([&report.obj.sentence, &report.rel.sentence, &report.attri.sentence]);
    let got_instance = pairs([&report.obj.instance, &report.rel.instance, &report.attri.instance]);
    let got_flags: Vec<(String, [bool; 3])> =
        flags.iter().map(|f| (f.sample_id.clone(), [f.obj, f.rel, f.attri])).collect();

    let shape_ok = corpus.len() == 12 && report.sentences >= 30 && oracle.flags.len() as u64 == report.sentences;
    let seeded = oracle.instance.iter().all(|&(n, _)| n > 0);
    let ok = shape_ok
        && seeded
        && got_sentence == oracle.sentence
        && got_instance == oracle.instance
        && got_flags == oracle.flags
        && elapsed < Duration::from_secs(1);
    verdict_line(
        1,
        "CHAIR oracle equivalence",
        ok,
        &format!(
            "sentence {:?} vs oracle {:?}, instance {:?} vs oracle {:?}, {} sentences, {:?}",
            got_sentence, oracle.sentence, got_instance, oracle.instance, report.sentences, elapsed
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 2. relations and attributes only count among existing objects

#[test]
fn c2_nonexistent_endpoint_counts_for_objects_only() {
    let ann = AnnotationSet::from_json_str(
        r#"{"im": {"objects": [{"name": "dog"}, {"name": "grass"}],
                   "relations": [["dog", "on", "grass"]], "attributes": [["grass", "green"]]}}"#,
    )
    .unwrap();
    let sample = InstructionSample::new(
        "s",
        "im",
        vec![
            Turn::human("What is happening?"),
            Turn::assistant("The dog is chasing a red frisbee. The dog is on the grass."),
        ],
    );
    let corpus = Corpus::new(vec![sample]).unwrap();
    let lexicon = build_lexicon(Some(&ann));
    let chunks: Vec<_> = corpus.samples.iter().map(|s| extract_chunks(s, &lexicon)).collect();
    let r = chair_report(&corpus, &chunks, &ann).unwrap();

    // objects: dog, frisbee | dog, grass -> frisbee is the only nonexistent one
    // relations: dog-chasing-frisbee (endpoint missing), dog-on-grass (true)
    // attributes: frisbee-red (owner missing)
    let expected =
        [(Rate::new(1, 2), Rate::new(1, 4)), (Rate::new(0, 2), Rate::new(0, 2)), (Rate::new(0, 2), Rate::new(0, 1))];
    let got =
        [(r.obj.sentence, r.obj.instance), (r.rel.sentence, r.rel.instance), (r.attri.sentence, r.attri.instance)];
    let ok = got == expected;
    verdict_line(2, "existent-endpoint restriction", ok, &format!("got {got:?}"));
    assert!(ok, "{got:?}");
}

// ---------------------------------------------------------------------------
// 3. ConScore

#[test]
fn c3_conscore_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=12);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        // oracle: compensated summation in f64
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &s in &scores {
            let y = s - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let mean = sum / n as f64;
        worst = worst.max((compute_conscore(&scores).unwrap() - mean).abs());
    }
    let strict = !classify(0.5, 0.5) && classify(0.4999999, 0.5);
    let ok = worst <= 1e-12 && strict && compute_conscore(&[]).is_none();
    verdict_line(
        3,
        "ConScore and classification",
        ok,
        &format!("max |err| {worst:e}, classify(0.5, 0.5) = {}", classify(0.5, 0.5)),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 4. detect + eliminate on the fixture

const SEEDED: [(&str, ChunkKind, &str); 15] = [
    ("s01", ChunkKind::Object, "dog"),
    ("s02", ChunkKind::Object, "toaster"),
    ("s05", ChunkKind::Object, "frisbee"),
    ("s07", ChunkKind::Object, "knife"),
    ("s09", ChunkKind::Object, "elephant"),
    ("s10", ChunkKind::Object, "cell phone"),
    ("s12", ChunkKind::Object, "cow"),
    ("s02", ChunkKind::Attribute, "white"),
    ("s04", ChunkKind::Attribute, "black"),
    ("s08", ChunkKind::Attribute, "red"),
    ("s11", ChunkKind::Attribute, "cloudy"),
    ("s03", ChunkKind::Relation, "lies on"),
    ("s06", ChunkKind::Relation, "behind"),
    ("s10", ChunkKind::Relation, "beside"),
    ("s11", ChunkKind::Relation, "flying over"),
];

fn read_verdicts(out: &Path) -> Vec<ConsistencyVerdict> {
    hallucheck::crosscheck::read_verdicts(&out.join("verdicts.jsonl")).unwrap()
}

#[test]
fn c4_detect_then_eliminate_detoxifies_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("out"), dir.path().join("cache"));
    let cfg = fixture_config(&out, &cache);
    // first pass fills the answer cache
    pipeline::cmd_detect(&cfg).unwrap();

    let t = Instant::now();
    let detect = pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_eliminate(&cfg).unwrap();
    let elapsed = t.elapsed();

    let verdicts = read_verdicts(&out);
    let flagged: BTreeSet<(String, ChunkKind, String)> =
        verdicts.iter().filter(|v| v.removable()).map(|v| (v.sample_id.clone(), v.kind, v.head.clone())).collect();
    let expected: BTreeSet<(String, ChunkKind, String)> =
        SEEDED.iter().map(|(s, k, h)| (s.to_string(), *k, h.to_string())).collect();
    let flagged_count = verdicts.iter().filter(|v| v.removable()).count();
    let missed = expected.difference(&flagged).count();
    let false_pos = flagged.difference(&expected).count();

    let corpus = load_corpus(fixtures().join("corpus.jsonl")).unwrap();
    let rectified = load_corpus(out.join("rectified.jsonl")).unwrap();
    let ann = AnnotationSet::load(fixtures().join("annotations.json")).unwrap();
    let lexicon = build_lexicon(Some(&ann));
    let fresh: Vec<_> = rectified.samples.iter().map(|s| extract_chunks(s, &lexicon)).collect();
    let after = chair_report(&rectified, &fresh, &ann).unwrap();
    let sentence_zero = [after.obj.sentence, after.rel.sentence, after.attri.sentence].iter().all(|r| r.num == 0);

    // every unflagged assistant chunk survives, by identity, in its sample
    let flagged_ids: HashSet<&str> = verdicts.iter().filter(|v| v.removable()).map(|v| v.chunk_id.as_str()).collect();
    let (mut kept, mut lost) = (0, Vec::new());
    for (orig, rect) in corpus.samples.iter().zip(&rectified.samples) {
        let after: HashSet<_> = extract_chunks(rect, &lexicon).iter().map(|c| c.identity()).collect();
        for c in extract_chunks(orig, &lexicon) {
            let assistant = orig.conversations[c.span.turn_index].from == Role::Assistant;
            if !assistant || flagged_ids.contains(c.chunk_id.as_str()) {
                continue;
            }
            if after.contains(&c.identity()) {
                kept += 1;
            } else {
                lost.push(c.chunk_id.clone());
            }
        }
    }

    let ok = flagged_count == 15
        && missed == 0
        && false_pos == 0
        && !detect.degraded
        && sentence_zero
        && lost.is_empty()
        && elapsed < Duration::from_secs(5);
    verdict_line(
        4,
        "end-to-end detoxification",
        ok,
        &format!(
            "{flagged_count} flagged ({missed} missed, {false_pos} false positives), post-elimination sentence CHAIR {}/{}/{}, {kept} unflagged chunks kept, {} lost, {:?} warm",
            after.obj.sentence.percent(),
            after.rel.sentence.percent(),
            after.attri.sentence.percent(),
            lost.len(),
            elapsed
        ),
    );
    assert!(ok, "lost: {lost:?}");
}

// ---------------------------------------------------------------------------
// 5. seesaw ranking against brute force

type Frac = (u128, u128);

/// (candidate, n_i, m_i, score)
type OracleRow = (String, u64, u64, Frac);

fn frac_cmp(a: Frac, b: Frac) -> std::cmp::Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

/// Enumerates every candidate with integer fractions; returns
/// (o*, n*, [(candidate, n_i, m_i, score)]) sorted by score desc, name asc.
fn seesaw_oracle(vocab: &[String], counts: &[Vec<u64>], o: usize) -> Option<(String, u64, Vec<OracleRow>)> {
    let mut star: Option<usize> = None;
    for j in 0..vocab.len() {
        if j == o {
            continue;
        }
        let better = match star {
            None => true,
            Some(s) => counts[o][j] > counts[o][s] || (counts[o][j] == counts[o][s] && vocab[j] < vocab[s]),
        };
        if better {
            star = Some(j);
        }
    }
    let s = star?;
    let n_star = counts[o][s] as u128;
    if n_star == 0 {
        return None;
    }
    let mut rows = Vec::new();
    for i in 0..vocab.len() {
        if i == o || i == s {
            continue;
        }
        let (n_i, m_i) = (counts[o][i] as u128, counts[s][i] as u128);
        let e: Frac = if n_i <= n_star { (n_star, n_i.max(1)) } else { (1, 1) };
        let inh: Frac = if m_i <= n_star { (m_i, n_star) } else { (1, 1) };
        rows.push((vocab[i].clone(), n_i as u64, m_i as u64, (e.0 * inh.0, e.1 * inh.1)));
    }
    rows.sort_by(|a, b| frac_cmp(b.3, a.3).then_with(|| a.0.cmp(&b.0)));
    Some((vocab[s].clone(), n_star as u64, rows))
}

fn ratio_eq(r: &Ratio<u64>, f: Frac) -> bool {
    *r.numer() as u128 * f.1 == f.0 * *r.denom() as u128
}

#[test]
fn c5_seesaw_ranking_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut compared, mut mismatches, mut mono_fail) = (0, 0, 0);
    for trial in 0..200 {
        let v = rng.gen_range(3..=50);
        let images = rng.gen_range(1..=60);
        let density = rng.gen_range(0.05..0.5);
        let sets: Vec<BTreeSet<String>> = (0..images)
            .map(|_| (0..v).filter(|_| rng.gen_bool(density)).map(|i| format!("obj{i:02}")).collect())
            .collect();
        let matrix = CooccurrenceMatrix::from_object_sets(sets.clone());
        if matrix.len() < 3 {
            continue;
        }
        // independent counts straight from the sets
        let vocab: Vec<String> = sets.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let idx: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut counts = vec![vec![0u64; vocab.len()]; vocab.len()];
        for s in &sets {
            for a in s {
                for b in s {
                    if a != b {
                        counts[idx[a.as_str()]][idx[b.as_str()]] += 1;
                    }
                }
            }
        }
        for (o, name) in vocab.iter().enumerate() {
            let got = rank_targets(name, &matrix).ok();
            let want = seesaw_oracle(&vocab, &counts, o);
            compared += 1;
            let same = match (&got, &want) {
                (None, None) => true,
                (Some(g), Some((star, n_star, rows))) => {
                    g.most_relevant == *star
                        && g.n_star == *n_star
                        && g.entries.len() == rows.len()
                        && g.entries.iter().zip(rows).all(|(e, (c, n_i, m_i, s))| {
                            e.candidate == *c && e.n_i == *n_i && e.m_i == *m_i && ratio_eq(&e.score, *s)
                        })
                }
                _ => false,
            };
            if !same {
                mismatches += 1;
                eprintln!("trial {trial}: ranking for {name} differs");
            }
        }
        // monotonicity over the whole range for this trial's n*
        let n_star = counts.iter().flatten().copied().max().unwrap_or(0).max(1);
        for m in 0..=n_star {
            for n in 0..n_star {
                let (a, b) = (enhancement_factor(n_star, n), enhancement_factor(n_star, n + 1));
                if a * inhibiting_factor(n_star, m) < b * inhibiting_factor(n_star, m) {
                    mono_fail += 1;
                }
            }
        }
        for n in 0..=n_star {
            for m in 0..n_star {
                let e = enhancement_factor(n_star, n);
                if e * inhibiting_factor(n_star, m) > e * inhibiting_factor(n_star, m + 1) {
                    mono_fail += 1;
                }
            }
        }
    }
    let ok = mismatches == 0 && mono_fail == 0 && compared > 0;
    verdict_line(
        5,
        "seesaw exactness",
        ok,
        &format!("{compared} rankings over 200 trials, {mismatches} mismatches, {mono_fail} monotonicity violations"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 6. counterfactual validity

fn article_oracle(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Problems with each emitted instruction, checked against the raw JSON.
fn counterfactual_problems(expansion: &Expansion, ann_json: &Value) -> Vec<String> {
    let mut problems = Vec::new();
    for cf in &expansion.instructions {
        let img = &ann_json[&cf.target_image_id];
        if resolve(img, &cf.inserted_object).is_some() {
            problems.push(format!("{}: image already has {}", cf.new_sample_id, cf.inserted_object));
        }
        let p = cf.placement;
        for o in img["objects"].as_array().unwrap() {
            let b: Vec<f64> = o["bbox"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            let (x0, y0, x1, y1) = (p.x as f64, p.y as f64, (p.x + p.w) as f64, (p.y + p.h) as f64);
            let disjoint = x1 <= b[0] || b[0] + b[2] <= x0 || y1 <= b[1] || b[1] + b[3] <= y0;
            if !disjoint {
                problems.push(format!("{}: placement overlaps {}", cf.new_sample_id, o["name"]));
            }
        }
        let phrase =
            format!("There is also {} {} in the image.", article_oracle(&cf.inserted_object), cf.inserted_object);
        if cf.response_text != phrase {
            problems.push(format!("{}: {:?} != {phrase:?}", cf.new_sample_id, cf.response_text));
        }
    }
    problems
}

#[test]
fn c6_counterfactuals_are_valid() {
    // fixture expansion driven by the seeded hallucinations
    let fx = fixtures();
    let ann_text = std::fs::read_to_string(fx.join("annotations.json")).unwrap();
    let ann = AnnotationSet::from_json_str(&ann_text).unwrap();
    let ann_json: Value = serde_json::from_str(&ann_text).unwrap();
    let objects: Vec<String> =
        SEEDED.iter().filter(|(_, k, _)| *k == ChunkKind::Object).map(|(_, _, h)| h.to_string()).collect();
    let fixture = expand(&objects, &hallucheck::seesaw::build_cooccurrence(&ann), &ann, 100);

    // an "an" object whose best scene hides it behind a synonym
    let inline_text = r#"{
      "a": {"size": [640, 480], "objects": [
          {"name": "umbrella", "bbox": [0, 0, 100, 100]}, {"name": "chair", "bbox": [200, 200, 100, 100]},
          {"name": "person", "bbox": [400, 100, 100, 300]}]},
      "b": {"size": [640, 480], "objects": [
          {"name": "umbrella", "bbox": [0, 0, 100, 100]}, {"name": "chair", "bbox": [200, 200, 100, 100]}]},
      "c": {"size": [640, 480], "objects": [
          {"name": "chair", "bbox": [0, 0, 320, 480]}, {"name": "table", "bbox": [320, 300, 320, 180]}]},
      "d": {"size": [640, 480], "objects": [
          {"name": "parasol", "synonyms": ["umbrella"], "bbox": [100, 0, 200, 200]},
          {"name": "chair", "bbox": [300, 200, 100, 100]}]}
    }"#;
    let inline = AnnotationSet::from_json_str(inline_text).unwrap();
    let inline_json: Value = serde_json::from_str(inline_text).unwrap();
    let umbrella = expand(&["umbrella".to_string()], &hallucheck::seesaw::build_cooccurrence(&inline), &inline, 10);

    let mut problems = counterfactual_problems(&fixture, &ann_json);
    problems.extend(counterfactual_problems(&umbrella, &inline_json));
    let inline_target = umbrella.instructions.first().map(|c| (c.target_image_id.as_str(), c.response_text.as_str()));
    let ok = problems.is_empty()
        && fixture.instructions.len() >= 3
        && inline_target == Some(("c", "There is also an umbrella in the image."));
    verdict_line(
        6,
        "counterfactual validity",
        ok,
        &format!(
            "{} fixture + {} inline counterfactuals checked, {} problems, inline target {:?}",
            fixture.instructions.len(),
            umbrella.instructions.len(),
            problems.len(),
            inline_target
        ),
    );
    assert!(ok, "{problems:?}");
}

// ---------------------------------------------------------------------------
// 7. sweep monotonicity

#[test]
fn c7_sweep_flags_grow_with_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(&dir.path().join("out"), &dir.path().join("cache"));
    pipeline::cmd_detect(&cfg).unwrap();
    pipeline::cmd_sweep(&cfg).unwrap();
    let rows: Vec<pipeline::SweepRow> =
        serde_json::from_str(&std::fs::read_to_string(cfg.output_dir.join("sweep.json")).unwrap()).unwrap();
    let thresholds: Vec<f64> = rows.iter().map(|r| r.threshold).collect();
    let flagged: Vec<u64> = rows.iter().map(|r| r.flagged).collect();
    let ok = thresholds == SWEEP_THRESHOLDS && flagged.windows(2).all(|w| w[0] <= w[1]);
    verdict_line(7, "threshold sweep monotonicity", ok, &format!("flagged {flagged:?} at {thresholds:?}"));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 8. determinism

fn full_run(cfg: &RunConfig) {
    pipeline::cmd_chair(cfg).unwrap();
    pipeline::cmd_detect(cfg).unwrap();
    pipeline::cmd_eliminate(cfg).unwrap();
    pipeline::cmd_expand(cfg).unwrap();
    pipeline::cmd_sweep(cfg).unwrap();
    pipeline::cmd_report(cfg).unwrap();
}

fn output_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != pipeline::TIMINGS_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn c8_full_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    full_run(&fixture_config(&dir.path().join("warm"), &cache));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    full_run(&fixture_config(&a, &cache));
    full_run(&fixture_config(&b, &cache));
    let (fa, fb) = (output_files(&a), output_files(&b));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let required = [
        "rectified.jsonl",
        "expanded.jsonl",
        "verdicts.jsonl",
        "report.md",
        "chair_report.json",
        pipeline::MANIFEST_FILE,
    ];
    let complete = required.iter().all(|f| fa.contains_key(*f));
    let ok = complete && differing.is_empty() && fa.len() == fb.len();
    verdict_line(8, "determinism", ok, &format!("{} files compared, differing: {differing:?}", fa.len()));
    assert!(ok);
}
