//! Writes the built-in pattern libraries to a directory as JSON files.
//!
//! Usage: cargo run -p driftguard-core --example export_seed_libraries -- <dir>

use driftguard_core::knowledge::{seed_conversation_cues, seed_review_library};
use std::path::PathBuf;

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .expect("usage: export_seed_libraries <dir>")
        .into();
    std::fs::create_dir_all(&dir).expect("output directory");

    let reviews = seed_review_library();
    let reviews_path = dir.join("review_patterns.json");
    reviews.save(&reviews_path).expect("write review library");
    println!(
        "wrote {} ({} patterns, v{})",
        reviews_path.display(),
        reviews.patterns.len(),
        reviews.version
    );

    let cues = seed_conversation_cues();
    let cues_path = dir.join("conversation_cues.json");
    cues.save(&cues_path).expect("write conversation cues");
    println!(
        "wrote {} ({} cues, v{})",
        cues_path.display(),
        cues.patterns.len(),
        cues.version
    );
}
