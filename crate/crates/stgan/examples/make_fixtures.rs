//! Regenerates the bundled fixtures: `cargo run -p stgan --example make_fixtures [DIR]`.

fn main() -> stgan::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    stgan::fixtures::write_fixtures(&dir)?;
    println!("{}", dir.display());
    Ok(())
}
