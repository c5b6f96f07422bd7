//! Seesaw ranking and counterfactual samples for a few hallucinated objects.
//!
//!     cargo run --example seesaw_expand -- [object ...]

use std::path::PathBuf;

use hallucheck::corpus::AnnotationSet;
use hallucheck::seesaw::{build_cooccurrence, expand, to_f64};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut objects: Vec<String> = std::env::args().skip(1).collect();
    if objects.is_empty() {
        objects = ["dog", "knife", "cow", "toaster"].map(String::from).to_vec();
    }
    let ann = AnnotationSet::load(fixtures.join("annotations.json"))?;
    let matrix = build_cooccurrence(&ann);
    println!("vocabulary of {} objects", matrix.len());

    let expansion = expand(&objects, &matrix, &ann, 10);
    for r in &expansion.rankings {
        println!("\n{}: o* = {} (n* = {})", r.hallucinatory_object, r.most_relevant, r.n_star);
        for e in r.entries.iter().take(5) {
            println!(
                "  {:<14} n_i={} m_i={}  E={} I={}  S={} ({:.3})",
                e.candidate,
                e.n_i,
                e.m_i,
                e.enhancement,
                e.inhibiting,
                e.score,
                to_f64(&e.score)
            );
        }
    }
    println!();
    for cf in &expansion.instructions {
        let p = cf.placement;
        println!(
            "{} -> {}: {:?} at ({}, {}, {}x{})",
            cf.inserted_object, cf.target_image_id, cf.response_text, p.x, p.y, p.w, p.h
        );
    }
    for s in &expansion.skipped {
        println!("skipped {}: {}", s.object, s.reason);
    }
    Ok(())
}
