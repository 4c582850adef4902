//! The shipped fixture is exactly what the generator produces.

mod common;

use std::fs;

use rolecast_core::corpus::{load_corpus, DomainRegistry};
use rolecast_core::synth::{corpus_jsonl, generate, registry_tsv, SynthConfig};

use common::fixture_dir;

#[test]
fn shipped_fixture_matches_generator() {
    let synth = generate(&SynthConfig::default());
    let dir = fixture_dir();
    let corpus = fs::read_to_string(dir.join("corpus.jsonl")).unwrap();
    assert!(
        corpus == corpus_jsonl(&synth.posts),
        "regenerate with `rolecast fixture --seed 2018 --out data/fixture`"
    );
    let registry = fs::read_to_string(dir.join("registry.tsv")).unwrap();
    assert_eq!(registry, registry_tsv(&synth.registry));
}

#[test]
fn shipped_fixture_loads_cleanly() {
    let dir = fixture_dir();
    let (posts, report) = load_corpus(&dir.join("corpus.jsonl")).unwrap();
    assert_eq!(report.skipped, 0);
    assert_eq!(posts.len(), generate(&SynthConfig::default()).posts.len());
    let reg = DomainRegistry::load(&dir.join("registry.tsv")).unwrap();
    assert_eq!(reg.len(), 10);
    let accounts: std::collections::BTreeSet<_> = posts.iter().map(|p| &p.account_id).collect();
    assert_eq!(accounts.len(), 200);
}
