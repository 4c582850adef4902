//! Deterministic synthetic corpus for end-to-end runs.
//!
//! Accounts follow one of five behavioural archetypes per window, with a
//! small chance of switching archetype between windows. In the first window a
//! set of cascade links is shared in bursts by accounts of several
//! archetypes, giving the influence stage something to fit.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DomainRegistry, PostRecord, SourceType, WindowSpec};

/// 2018-01-01T00:00:00Z.
pub const FIXTURE_START: i64 = 1_514_764_800;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub accounts: usize,
    pub seed: u64,
    pub window: WindowSpec,
    /// Links shared in bursts during the first window.
    pub cascade_links: usize,
    /// Probability of changing archetype between consecutive windows.
    pub switch_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            accounts: 200,
            seed: 2018,
            window: WindowSpec::with_defaults(FIXTURE_START),
            cascade_links: 16,
            switch_probability: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub posts: Vec<PostRecord>,
    pub registry: DomainRegistry,
    /// Account → archetype per window; `None` where the account is silent.
    pub archetypes: BTreeMap<String, Vec<Option<usize>>>,
}

const REGISTRY: [(&str, SourceType); 10] = [
    ("stormfront-like.example", SourceType::Extremist),
    ("nationalist-daily.example", SourceType::Extremist),
    ("purity-front.example", SourceType::Extremist),
    ("blog.host.example/iron-guard", SourceType::Extremist),
    ("slanted-news.example", SourceType::Biased),
    ("partisan-wire.example", SourceType::Biased),
    ("hoax-herald.example", SourceType::FakeNews),
    ("clickbait-gazette.example", SourceType::FakeNews),
    ("truth-hidden.example", SourceType::Conspiracy),
    ("chemtrail-watch.example", SourceType::Conspiracy),
];

const MAINSTREAM: [&str; 3] = ["news.mainstream.example", "video.example", "wiki.example"];

struct Archetype {
    /// Drive words mixed into extremist-link posts.
    drive_words: &'static [&'static str],
    sentences: &'static [&'static str],
    /// Probability that a link post points at an extremist domain.
    extremist_share: f64,
    posts_per_month: (u32, u32),
    /// Monthly change in posting volume.
    growth: i32,
    reaction_scale: u64,
}

const ARCHETYPES: [Archetype; 5] = [
    // promoter: solicitation heavy
    Archetype {
        drive_words: &["we", "our", "success", "achieve", "us"],
        sentences: &[
            "Please donate to our cause today.",
            "Sign the petition for our people.",
            "Will you join the rally this weekend?",
            "Contact us to volunteer.",
            "Please share this with your friends.",
        ],
        extremist_share: 0.5,
        posts_per_month: (5, 8),
        growth: 1,
        reaction_scale: 40,
    },
    // flamer: anger and injustice
    Archetype {
        drive_words: &["hate", "rage", "angry", "injustice", "prejudice", "furious"],
        sentences: &[
            "This is an outrage and nobody cares.",
            "They lie every single day.",
            "Enough is enough.",
            "Look at what they did now.",
        ],
        extremist_share: 0.8,
        posts_per_month: (8, 12),
        growth: 0,
        reaction_scale: 15,
    },
    // educator: opinion heavy
    Archetype {
        drive_words: &["rights", "justice", "fair", "equality"],
        sentences: &[
            "I believe the history here is misunderstood.",
            "We think this report explains the issue.",
            "In my opinion the numbers tell the story.",
            "They should read the whole article.",
            "I am convinced the facts are clear.",
        ],
        extremist_share: 0.4,
        posts_per_month: (3, 5),
        growth: 0,
        reaction_scale: 25,
    },
    // alarmist: risk and threat
    Archetype {
        drive_words: &["danger", "threat", "crisis", "risk", "caution"],
        sentences: &[
            "Stay alert out there.",
            "The situation is getting worse.",
            "Protect your family.",
            "Read this before it is removed.",
        ],
        extremist_share: 0.6,
        posts_per_month: (4, 7),
        growth: -1,
        reaction_scale: 10,
    },
    // sympathizer: occasional reward talk
    Archetype {
        drive_words: &["benefit", "reward", "bonus", "prize"],
        sentences: &[
            "Interesting read.",
            "Worth a look.",
            "Found this today.",
            "Good points in here.",
        ],
        extremist_share: 0.2,
        posts_per_month: (1, 3),
        growth: 0,
        reaction_scale: 5,
    },
];

pub const ARCHETYPE_NAMES: [&str; 5] =
    ["promoter", "flamer", "educator", "alarmist", "sympathizer"];

fn fixture_registry() -> DomainRegistry {
    let mut r = DomainRegistry::new();
    for (pattern, st) in REGISTRY {
        r.insert(pattern, st)
            .expect("fixture registry is consistent");
    }
    r
}

fn registry_domains(st: SourceType) -> Vec<&'static str> {
    REGISTRY
        .iter()
        .filter(|(_, t)| *t == st)
        .map(|(p, _)| *p)
        .collect()
}

struct Builder {
    rng: ChaCha8Rng,
    posts: Vec<PostRecord>,
}

impl Builder {
    fn post(
        &mut self,
        account: &str,
        timestamp: i64,
        text: String,
        links: Vec<String>,
        scale: u64,
    ) {
        let id = format!("p{:06}", self.posts.len());
        let likes = self.rng.random_range(0..=scale * 2);
        let shares = self.rng.random_range(0..=scale / 2 + 1);
        let comments = self.rng.random_range(0..=scale / 3 + 1);
        self.posts.push(PostRecord {
            post_id: id,
            account_id: account.to_string(),
            timestamp,
            text,
            links,
            likes,
            shares,
            comments,
        });
    }
}

fn text_for(arch: &Archetype, extremist: bool, rng: &mut ChaCha8Rng) -> String {
    let mut parts = vec![arch.sentences.choose(rng).expect("non-empty").to_string()];
    if extremist {
        let n = rng.random_range(1..=3);
        let words: Vec<&str> = (0..n)
            .map(|_| *arch.drive_words.choose(rng).expect("non-empty"))
            .collect();
        parts.push(format!("Read about the {} here.", words.join(" and ")));
    }
    parts.join(" ")
}

/// Generates the corpus; identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let registry = fixture_registry();
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        posts: Vec::new(),
    };
    let extremist = registry_domains(SourceType::Extremist);
    let windows = cfg.window.window_count as usize;
    let months = cfg.window.window_length_months as usize;
    let mut archetypes = BTreeMap::new();

    for a in 0..cfg.accounts {
        let account = format!("acct{a:03}");
        // every tenth account stays below the inclusion threshold
        let light = a % 10 == 9;
        let mut arch = a % ARCHETYPES.len();
        let mut history = Vec::with_capacity(windows);
        let mut link_serial = 0usize;
        for w in 0..windows {
            if w > 0 && b.rng.random_bool(cfg.switch_probability) {
                arch = b.rng.random_range(0..ARCHETYPES.len());
            }
            // some accounts go quiet in the last window
            if w == windows - 1 && a % 7 == 3 {
                history.push(None);
                continue;
            }
            history.push(Some(arch));
            let spec = &ARCHETYPES[arch];
            let (start, end) = cfg.window.bounds(w);
            let month_len = (end - start) / months as i64;
            for m in 0..months {
                let base = spec.posts_per_month.0 as i32 + spec.growth * m as i32;
                let jitter = b
                    .rng
                    .random_range(0..=(spec.posts_per_month.1 - spec.posts_per_month.0));
                let count = (base + jitter as i32).max(1) as usize;
                let count = if light { 1 } else { count };
                for _ in 0..count {
                    let offset = b.rng.random_range(0..month_len);
                    let ts = start + m as i64 * month_len + offset;
                    let roll: f64 = b.rng.random();
                    let (links, is_ext) = if light {
                        if m == 0 && w == 0 {
                            (
                                vec![format!(
                                    "https://{}/item/{account}-{link_serial}",
                                    extremist[0]
                                )],
                                true,
                            )
                        } else {
                            (Vec::new(), false)
                        }
                    } else if roll < 0.25 {
                        (Vec::new(), false)
                    } else if roll < 0.25 + 0.75 * spec.extremist_share {
                        let d = extremist.choose(&mut b.rng).expect("non-empty");
                        (
                            vec![format!("https://{d}/item/{account}-{link_serial}")],
                            true,
                        )
                    } else {
                        let d = MAINSTREAM.choose(&mut b.rng).expect("non-empty");
                        (
                            vec![format!("https://{d}/story/{account}-{link_serial}")],
                            false,
                        )
                    };
                    if !links.is_empty() {
                        link_serial += 1;
                    }
                    let text = text_for(spec, is_ext, &mut b.rng);
                    let scale = if is_ext {
                        spec.reaction_scale * 2
                    } else {
                        spec.reaction_scale
                    };
                    b.post(&account, ts, text, links, scale);
                }
            }
        }
        archetypes.insert(account, history);
    }

    // Cascades: a seed post followed by bursts from accounts of several
    // archetypes, seconds to minutes apart.
    let cascade_domains: Vec<&str> = REGISTRY.iter().map(|(p, _)| *p).collect();
    let (w0_start, w0_end) = cfg.window.bounds(0);
    let eligible: Vec<usize> = (0..cfg.accounts).filter(|a| a % 10 != 9).collect();
    for c in 0..cfg.cascade_links {
        let domain = cascade_domains[c % cascade_domains.len()];
        let url = format!("https://{domain}/viral/{c}");
        let mut t = b.rng.random_range(w0_start..w0_end - 86_400 * 3);
        let sharers = b.rng.random_range(12..=30);
        let chosen: Vec<usize> = eligible
            .choose_multiple(&mut b.rng, sharers)
            .copied()
            .collect();
        for a in chosen {
            let account = format!("acct{a:03}");
            let arch = archetypes[&account][0].unwrap_or(0);
            let spec = &ARCHETYPES[arch];
            let text = text_for(spec, true, &mut b.rng);
            b.post(
                &account,
                t,
                text,
                vec![url.clone()],
                spec.reaction_scale * 3,
            );
            // mostly quick reshares, occasionally a long pause
            t += if b.rng.random_bool(0.8) {
                b.rng.random_range(5..600)
            } else {
                b.rng.random_range(600..20_000)
            };
        }
    }

    let mut posts = b.posts;
    posts.sort_by(|x, y| (x.timestamp, &x.post_id).cmp(&(y.timestamp, &y.post_id)));
    SynthCorpus {
        posts,
        registry,
        archetypes,
    }
}

/// Registry in its tab-separated file format.
pub fn registry_tsv(registry: &DomainRegistry) -> String {
    let mut out = String::from("# pattern\tsource_type\n");
    for (pattern, st) in registry.entries() {
        out.push_str(pattern);
        out.push('\t');
        out.push_str(st.as_str());
        out.push('\n');
    }
    out
}

/// Posts as line-delimited JSON.
pub fn corpus_jsonl(posts: &[PostRecord]) -> String {
    let mut out = String::new();
    for p in posts {
        out.push_str(&serde_json::to_string(p).expect("post serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::classify_link;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            accounts: 20,
            ..Default::default()
        };
        assert_eq!(
            corpus_jsonl(&generate(&cfg).posts),
            corpus_jsonl(&generate(&cfg).posts)
        );
    }

    #[test]
    fn post_ids_unique_and_in_span() {
        let c = generate(&SynthConfig::default());
        let ids: std::collections::BTreeSet<_> = c.posts.iter().map(|p| &p.post_id).collect();
        assert_eq!(ids.len(), c.posts.len());
        let (lo, hi) = SynthConfig::default().window.span();
        assert!(c
            .posts
            .iter()
            .all(|p| p.timestamp >= lo && p.timestamp < hi));
    }

    #[test]
    fn registry_round_trips() {
        let c = generate(&SynthConfig::default());
        let text = registry_tsv(&c.registry);
        let back = DomainRegistry::parse(&text, std::path::Path::new("mem")).unwrap();
        assert_eq!(back.len(), c.registry.len());
        assert_eq!(
            classify_link("https://www.hoax-herald.example/a", &back),
            SourceType::FakeNews
        );
    }
}
