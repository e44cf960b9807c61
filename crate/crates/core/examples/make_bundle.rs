//! Regenerates demos/, limits/ and registry/ at the given root (default: the
//! workspace root).

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../.."));
    predress::synth::write_bundle(&root)?;
    println!("bundle written to {}", root.display());
    Ok(())
}
