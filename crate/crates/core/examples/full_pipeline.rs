//! Every stage in order against the fixture, then the combined report.
//!
//!     cargo run --example full_pipeline -- [config.toml] [out-dir]
//!
//! Without an output directory a temporary one is used.

use std::path::PathBuf;

use hallucheck::pipeline::{self, Overrides, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/run.toml"));
    let scratch = tempfile::tempdir()?;
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| scratch.path().to_path_buf());
    let cfg = RunConfig::load(Some(&config), &Overrides { out: Some(out.clone()), ..Default::default() })?;

    type Stage = fn(&RunConfig) -> Result<pipeline::Outcome, pipeline::PipelineError>;
    let stages: [(&str, Stage); 5] = [
        ("detect", pipeline::cmd_detect),
        ("eliminate", pipeline::cmd_eliminate),
        ("expand", pipeline::cmd_expand),
        ("sweep", pipeline::cmd_sweep),
        ("report", pipeline::cmd_report),
    ];
    for (name, run) in stages {
        let outcome = run(&cfg)?;
        if name == "report" {
            println!("{}", outcome.message);
        } else {
            println!("== {name}: {}", outcome.message.lines().next().unwrap_or(""));
        }
    }
    let manifest = pipeline::read_manifest(&out).expect("manifest written");
    for (stage, rec) in &manifest.stages {
        println!("{stage}: run {} ({} outputs)", &rec.run_id[..12], rec.outputs.len());
    }
    Ok(())
}
