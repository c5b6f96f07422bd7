use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::crosscheck::{DEFAULT_THRESHOLD, SWEEP_THRESHOLDS};
use crate::experts::ExpertConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CooccurrenceSource {
    #[default]
    Annotations,
    Chunks,
}

/// Resolved run settings. Paths are absolute or relative to the working
/// directory; file paths in the config file are taken relative to it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub annotations_path: Option<PathBuf>,
    pub experts: Vec<ExpertConfig>,
    /// Directory mock script paths resolve against.
    pub experts_base: PathBuf,
    pub threshold: f64,
    pub sweep_thresholds: Vec<f64>,
    pub jobs: usize,
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub expansion_budget: usize,
    pub co_occurrence_source: CooccurrenceSource,
    /// Verdicts to consume; defaults to `<output_dir>/verdicts.jsonl`.
    pub verdicts_path: Option<PathBuf>,
    /// Corpus to expand; defaults to `<output_dir>/rectified.jsonl`.
    pub rectified_path: Option<PathBuf>,
    /// External chunk extractor command line.
    pub parser: Option<String>,
    pub question_endpoint: Option<String>,
    pub scorer_endpoint: Option<String>,
    pub rewriter_endpoint: Option<String>,
    pub service_timeout_ms: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    corpus: Option<PathBuf>,
    annotations: Option<PathBuf>,
    #[serde(default)]
    experts: Vec<ExpertConfig>,
    experts_file: Option<PathBuf>,
    threshold: Option<f64>,
    sweep_thresholds: Option<Vec<f64>>,
    jobs: Option<usize>,
    seed: Option<u64>,
    cache_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    expansion_budget: Option<usize>,
    co_occurrence_source: Option<CooccurrenceSource>,
    verdicts: Option<PathBuf>,
    rectified: Option<PathBuf>,
    parser: Option<String>,
    question_endpoint: Option<String>,
    scorer_endpoint: Option<String>,
    rewriter_endpoint: Option<String>,
    service_timeout_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpertsFile {
    experts: Vec<ExpertConfig>,
}

/// Command-line values that win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub budget: Option<usize>,
    pub co_occurrence_source: Option<CooccurrenceSource>,
    pub experts_file: Option<PathBuf>,
}

pub const DEFAULT_EXPANSION_BUDGET: usize = 2500;
pub const DEFAULT_SERVICE_TIMEOUT_MS: u64 = 30_000;

/// Replace `${NAME}` with the value of `lookup(NAME)`. `$$` is a literal `$`.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        if let Some(t) = tail.strip_prefix('$') {
            out.push('$');
            rest = t;
        } else if let Some(t) = tail.strip_prefix('{') {
            let end = t.find('}').ok_or_else(|| "unterminated ${...}".to_string())?;
            let name = &t[..end];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(format!("invalid variable name {name:?}"));
            }
            out.push_str(&lookup(name).ok_or_else(|| format!("environment variable {name} is not set"))?);
            rest = &t[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn read_interpolated(path: &Path) -> Result<String, PipelineError> {
    let raw = std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    interpolate(&raw, |k| std::env::var(k).ok()).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// Expert list from a TOML (`[[experts]]`) or JSON (array or `{"experts": [...]}`) file.
pub fn load_experts_file(path: &Path) -> Result<Vec<ExpertConfig>, PipelineError> {
    let text = read_interpolated(path)?;
    let bad = |e: String| PipelineError::Input(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        if let Ok(list) = serde_json::from_str::<Vec<ExpertConfig>>(&text) {
            return Ok(list);
        }
        serde_json::from_str::<ExpertsFile>(&text).map(|f| f.experts).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str::<ExpertsFile>(&text).map(|f| f.experts).map_err(|e| bad(e.to_string()))
    }
}

fn dir_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl RunConfig {
    /// Defaults, then the config file (if any), then `overrides`.
    pub fn load(config: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, PipelineError> {
        let (file, base) = match config {
            Some(p) => {
                let text = read_interpolated(p)?;
                let f: ConfigFile =
                    toml::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display())))?;
                (f, dir_of(p))
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| base.join(p));

        let (mut experts, mut experts_base) = (file.experts, base.clone());
        if let Some(f) = rel(file.experts_file) {
            experts = load_experts_file(&f)?;
            experts_base = dir_of(&f);
        }
        if let Some(f) = &overrides.experts_file {
            experts = load_experts_file(f)?;
            experts_base = dir_of(f);
        }

        let output_dir = overrides.out.clone().or(rel(file.output_dir)).unwrap_or_else(|| PathBuf::from("out"));
        let cfg = RunConfig {
            corpus_path: overrides.corpus.clone().or(rel(file.corpus)),
            annotations_path: overrides.annotations.clone().or(rel(file.annotations)),
            experts,
            experts_base,
            threshold: overrides.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD),
            sweep_thresholds: file.sweep_thresholds.unwrap_or_else(|| SWEEP_THRESHOLDS.to_vec()),
            jobs: overrides.jobs.or(file.jobs).unwrap_or_else(default_jobs),
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            cache_dir: overrides.cache_dir.clone().or(rel(file.cache_dir)).unwrap_or_else(|| output_dir.join("cache")),
            expansion_budget: overrides.budget.or(file.expansion_budget).unwrap_or(DEFAULT_EXPANSION_BUDGET),
            co_occurrence_source: overrides.co_occurrence_source.or(file.co_occurrence_source).unwrap_or_default(),
            verdicts_path: overrides.verdicts.clone().or(rel(file.verdicts)),
            rectified_path: rel(file.rectified),
            parser: file.parser,
            question_endpoint: file.question_endpoint,
            scorer_endpoint: file.scorer_endpoint,
            rewriter_endpoint: file.rewriter_endpoint,
            service_timeout_ms: file.service_timeout_ms.unwrap_or(DEFAULT_SERVICE_TIMEOUT_MS),
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Input(m));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} is outside [0, 1]", self.threshold));
        }
        if self.sweep_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("sweep thresholds must lie in [0, 1]".into());
        }
        if self.sweep_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sweep thresholds must be strictly ascending".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be positive".into());
        }
        for e in &self.experts {
            e.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        }
        Ok(())
    }

    pub fn verdicts_file(&self) -> PathBuf {
        self.verdicts_path.clone().unwrap_or_else(|| self.output_dir.join("verdicts.jsonl"))
    }

    pub fn rectified_file(&self) -> PathBuf {
        self.rectified_path.clone().unwrap_or_else(|| self.output_dir.join("rectified.jsonl"))
    }

    /// Hash of every setting that can change an output. Paths, job count
    /// and secrets are left out; input contents are digested separately.
    pub fn config_hash(&self) -> String {
        let experts: Vec<_> = self
            .experts
            .iter()
            .map(|e| serde_json::json!([e.expert_id, e.endpoint, e.timeout_ms, e.max_retries]))
            .collect();
        let v = serde_json::json!({
            "threshold": self.threshold,
            "sweep_thresholds": self.sweep_thresholds,
            "seed": self.seed,
            "expansion_budget": self.expansion_budget,
            "co_occurrence_source": self.co_occurrence_source,
            "experts": experts,
            "parser": self.parser,
            "question_endpoint": self.question_endpoint,
            "scorer_endpoint": self.scorer_endpoint,
            "rewriter_endpoint": self.rewriter_endpoint,
        });
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let env = |k: &str| (k == "TOKEN").then(|| "abc".to_string());
        assert_eq!(interpolate("bearer ${TOKEN}!", env).unwrap(), "bearer abc!");
        assert_eq!(interpolate("cost $$5 and $x", env).unwrap(), "cost $5 and $x");
        assert!(interpolate("${MISSING}", env).unwrap_err().contains("MISSING"));
        assert!(interpolate("${TOKEN", env).is_err());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            r#"
corpus = "data/corpus.jsonl"
threshold = 0.3
jobs = 2
output_dir = "out"

[[experts]]
expert_id = "a"
endpoint = "mock:a.json"
"#,
        )
        .unwrap();
        let c = RunConfig::load(Some(&cfg), &Overrides::default()).unwrap();
        assert_eq!(c.corpus_path.unwrap(), dir.path().join("data/corpus.jsonl"));
        assert_eq!(c.threshold, 0.3);
        assert_eq!(c.cache_dir, dir.path().join("out/cache"));
        assert_eq!(c.experts_base, dir.path());
        assert_eq!(c.sweep_thresholds, SWEEP_THRESHOLDS);

        let o = Overrides { threshold: Some(0.7), jobs: Some(8), ..Default::default() };
        let c2 = RunConfig::load(Some(&cfg), &o).unwrap();
        assert_eq!((c2.threshold, c2.jobs), (0.7, 8));
        assert_ne!(c2.config_hash(), RunConfig::load(Some(&cfg), &Overrides::default()).unwrap().config_hash());
        // job count does not change outputs, so it is not hashed
        let o = Overrides { jobs: Some(1), ..Default::default() };
        assert_eq!(
            RunConfig::load(Some(&cfg), &o).unwrap().config_hash(),
            RunConfig::load(Some(&cfg), &Overrides::default()).unwrap().config_hash()
        );
    }

    #[test]
    fn invalid_values_are_input_errors() {
        let o = Overrides { threshold: Some(1.5), ..Default::default() };
        assert!(matches!(RunConfig::load(None, &o), Err(PipelineError::Input(_))));
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "sweep_thresholds = [0.5, 0.1]\n").unwrap();
        assert!(RunConfig::load(Some(&cfg), &Overrides::default()).is_err());
        std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
        assert!(RunConfig::load(Some(&cfg), &Overrides::default()).is_err());
    }

    #[test]
    fn experts_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("e.toml");
        std::fs::write(&t, "[[experts]]\nexpert_id = \"x\"\nendpoint = \"http://h\"\n").unwrap();
        assert_eq!(load_experts_file(&t).unwrap()[0].expert_id, "x");
        let j = dir.path().join("e.json");
        std::fs::write(&j, r#"[{"expert_id": "y", "endpoint": "mock:s.json"}]"#).unwrap();
        assert_eq!(load_experts_file(&j).unwrap()[0].expert_id, "y");
    }
}
