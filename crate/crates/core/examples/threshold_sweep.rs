//! Detect once, then re-threshold the stored verdicts and report CHAIR after
//! elimination at each threshold.
//!
//!     cargo run --example threshold_sweep

use std::path::PathBuf;

use hallucheck::pipeline::{cmd_detect, cmd_sweep, Overrides, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = tempfile::tempdir()?;
    let cfg = RunConfig::load(
        Some(&fixtures.join("run.toml")),
        &Overrides { out: Some(out.path().to_path_buf()), ..Default::default() },
    )?;
    println!("{}", cmd_detect(&cfg)?.message);
    // no expert is consulted from here on
    print!("{}", cmd_sweep(&cfg)?.message);
    Ok(())
}
