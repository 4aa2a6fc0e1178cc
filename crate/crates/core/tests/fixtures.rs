//! The bundled fixtures must match what the generator produces. Run with
//! `H2R_BLESS=1` to rewrite them after an intentional change.

use std::path::PathBuf;

#[test]
fn bundled_fixtures_are_current() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let bless = std::env::var("H2R_BLESS").is_ok_and(|v| v == "1");
    let mut stale = Vec::new();
    for (rel, text) in h2r::fixture::bundle_files().unwrap() {
        let path = root.join(&rel);
        if bless {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        } else if std::fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
            stale.push(rel);
        }
    }
    assert!(stale.is_empty(), "stale fixtures (rerun with H2R_BLESS=1): {stale:?}");
}
