//! The committed fixture directory must be exactly what the generator
//! produces today; regenerate with `cargo run --release -p causeway-synth`.

use std::path::Path;

use causeway_synth::{build_fixtures, FixtureOptions};

#[test]
fn committed_fixtures_match_a_fresh_build() {
    let dir = tempfile::tempdir().unwrap();
    let table = build_fixtures(dir.path(), &FixtureOptions::default()).unwrap();
    assert!(table.starts_with("Stages"));
    let committed = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic");
    for name in [
        "triples.jsonl",
        "sample_triples.jsonl",
        "passages.jsonl",
        "gold.jsonl",
        "config.toml",
        "env.toml",
        "cassette.jsonl",
        "policy.json",
    ] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let old = std::fs::read(committed.join(name)).unwrap();
        assert!(fresh == old, "{name} is stale; rerun the generator");
    }
}
