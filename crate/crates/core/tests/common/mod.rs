//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rolecast_core::corpus::{DomainRegistry, PostRecord, SourceType};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `per_blob` unit-variance Gaussian points around each of `blobs` centres
/// placed on scaled axes so every pair of centres is `separation` apart.
pub fn planted_blobs(
    blobs: usize,
    per_blob: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let scale = separation / 2f64.sqrt();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for b in 0..blobs {
        for _ in 0..per_blob {
            let p: Vec<f64> = (0..dim)
                .map(|d| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    z + if d == b { scale } else { 0.0 }
                })
                .collect();
            points.push(p);
            labels.push(b);
        }
    }
    (points, labels)
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the contingency table.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(a.len() as u64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub fn post(id: &str, account: &str, ts: i64, text: &str, links: &[&str]) -> PostRecord {
    PostRecord {
        post_id: id.into(),
        account_id: account.into(),
        timestamp: ts,
        text: text.into(),
        links: links.iter().map(|s| s.to_string()).collect(),
        likes: 0,
        shares: 0,
        comments: 0,
    }
}

pub fn extremist_registry() -> DomainRegistry {
    let mut r = DomainRegistry::new();
    r.insert("bad.example", SourceType::Extremist).unwrap();
    r.insert("spin.example", SourceType::Biased).unwrap();
    r
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixture")
}
