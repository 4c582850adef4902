//! Post ingestion, link source typing, time windowing and account selection.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Months, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// One timestamped post by an account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub account_id: String,
    /// Epoch seconds.
    pub timestamp: i64,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub links: Vec<String>,
    #[serde(default)]
    pub likes: u64,
    #[serde(default)]
    pub shares: u64,
    #[serde(default)]
    pub comments: u64,
}

impl PostRecord {
    pub fn has_links(&self) -> bool {
        !self.links.is_empty()
    }
}

/// Counts produced while loading a post file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    /// Lines skipped because their `post_id` was already seen.
    pub duplicates: usize,
    /// First few skip reasons, `line: message`.
    pub messages: Vec<String>,
}

const MAX_REPORT_MESSAGES: usize = 20;

/// Reads a line-delimited JSON post file.
///
/// Malformed lines, negative timestamps and repeated post ids are skipped and
/// counted; only an unreadable file is an error. Records keep file order.
pub fn load_corpus(path: &Path) -> Result<(Vec<PostRecord>, LoadReport)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut posts = Vec::new();
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let skip = |report: &mut LoadReport, msg: String| {
            report.skipped += 1;
            if report.messages.len() < MAX_REPORT_MESSAGES {
                report.messages.push(format!("{}: {}", idx + 1, msg));
            }
        };
        let post: PostRecord = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                skip(&mut report, e.to_string());
                continue;
            }
        };
        if post.timestamp < 0 {
            skip(
                &mut report,
                format!("negative timestamp {}", post.timestamp),
            );
            continue;
        }
        if !seen.insert(post.post_id.clone()) {
            report.duplicates += 1;
            skip(&mut report, format!("duplicate post_id {}", post.post_id));
            continue;
        }
        posts.push(post);
    }
    report.loaded = posts.len();
    Ok((posts, report))
}

/// Classification of a link's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceType {
    Extremist,
    Biased,
    #[serde(rename = "fake")]
    FakeNews,
    Conspiracy,
    Other,
}

impl SourceType {
    /// The four types that take part in influence analysis.
    pub const CLASSIFIED: [SourceType; 4] = [
        SourceType::Extremist,
        SourceType::Biased,
        SourceType::FakeNews,
        SourceType::Conspiracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceType::Extremist => "extremist",
            SourceType::Biased => "biased",
            SourceType::FakeNews => "fake",
            SourceType::Conspiracy => "conspiracy",
            SourceType::Other => "other",
        }
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "extremist" => Ok(SourceType::Extremist),
            "biased" | "bias" => Ok(SourceType::Biased),
            "fake" | "fakenews" | "fake_news" => Ok(SourceType::FakeNews),
            "conspiracy" => Ok(SourceType::Conspiracy),
            "other" => Ok(SourceType::Other),
            other => Err(Error::InvalidInput(format!(
                "unknown source type `{other}`"
            ))),
        }
    }
}

/// Map from domain pattern to source type.
///
/// Patterns are either bare hosts (`vdare.com`) or host plus path prefix
/// (`sites.google.com/site/newblackliberationinstitute`). Lookup prefers the
/// most specific pattern: longest path prefix on the exact host, then the
/// host, then parent domains.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRegistry {
    entries: BTreeMap<String, SourceType>,
}

impl DomainRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pattern. Re-adding a pattern with a different type is an error.
    pub fn insert(&mut self, pattern: &str, source_type: SourceType) -> Result<()> {
        let key = normalize_pattern(pattern)
            .ok_or_else(|| Error::InvalidInput(format!("empty domain pattern `{pattern}`")))?;
        match self.entries.get(&key) {
            Some(&existing) if existing != source_type => Err(Error::InvalidInput(format!(
                "pattern `{key}` mapped to both {existing} and {source_type}"
            ))),
            _ => {
                self.entries.insert(key, source_type);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, SourceType)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Parses `pattern<TAB>source_type` lines; `#` starts a comment.
    pub fn parse(src: &str, path: &Path) -> Result<Self> {
        let mut registry = Self::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (pattern, kind) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `pattern<TAB>source_type`".into()))?;
            let kind: SourceType = kind.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            registry
                .insert(pattern.trim(), kind)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src, path)
    }

    /// The registry pattern that decides `url`, if any.
    pub fn matching_pattern(&self, url: &str) -> Option<&str> {
        let (host, segments) = split_url(url)?;
        let mut host_path = host.clone();
        let mut prefixes = Vec::with_capacity(segments.len());
        for seg in &segments {
            host_path.push('/');
            host_path.push_str(seg);
            prefixes.push(host_path.clone());
        }
        for candidate in prefixes.iter().rev() {
            if let Some((k, _)) = self.entries.get_key_value(candidate.as_str()) {
                return Some(k);
            }
        }
        let mut h = host.as_str();
        loop {
            if let Some((k, _)) = self.entries.get_key_value(h) {
                return Some(k);
            }
            match h.split_once('.') {
                Some((_, parent)) if parent.contains('.') => h = parent,
                _ => return None,
            }
        }
    }
}

/// Source type of the most specific registry pattern matching `url`.
///
/// Scheme, port, `www.` and host case are ignored. Unparseable URLs and URLs
/// with no matching pattern are `Other`.
pub fn classify_link(url: &str, registry: &DomainRegistry) -> SourceType {
    match registry.matching_pattern(url) {
        Some(p) => registry.entries[p],
        None => {
            if split_url(url).is_none() {
                log::debug!("unparseable link `{url}` classified as other");
            }
            SourceType::Other
        }
    }
}

fn strip_www(host: &str) -> &str {
    host.strip_prefix("www.").unwrap_or(host)
}

/// Host (lowercase, no `www.`) and non-empty path segments.
fn split_url(raw: &str) -> Option<(String, Vec<String>)> {
    let raw = raw.trim();
    let parsed = url::Url::parse(raw)
        .ok()
        .filter(|u| u.host_str().is_some())
        .or_else(|| url::Url::parse(&format!("http://{raw}")).ok())?;
    let host = parsed
        .host_str()?
        .trim_end_matches('.')
        .to_ascii_lowercase();
    let host = strip_www(&host).to_string();
    if host.is_empty() {
        return None;
    }
    let segments = parsed
        .path_segments()
        .map(|s| s.filter(|p| !p.is_empty()).map(str::to_string).collect())
        .unwrap_or_default();
    Some((host, segments))
}

fn normalize_pattern(pattern: &str) -> Option<String> {
    let (host, segments) = split_url(pattern)?;
    let mut key = host;
    for seg in segments {
        key.push('/');
        key.push_str(&seg);
    }
    Some(key)
}

/// Contiguous calendar-month windows starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Epoch seconds of the first window's start.
    pub start: i64,
    pub window_length_months: u32,
    pub window_count: u32,
}

impl WindowSpec {
    pub fn new(start: i64, window_length_months: u32, window_count: u32) -> Result<Self> {
        let spec = Self {
            start,
            window_length_months,
            window_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Four six-month windows from `start`.
    pub fn with_defaults(start: i64) -> Self {
        Self {
            start,
            window_length_months: 6,
            window_count: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length_months == 0 || self.window_count == 0 {
            return Err(Error::InvalidInput(
                "window length and count must be positive".into(),
            ));
        }
        if self.start < 0 {
            return Err(Error::InvalidInput("window start must be >= 0".into()));
        }
        self.month_boundary(self.window_length_months * self.window_count)
            .map(|_| ())
    }

    fn start_datetime(&self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.start, 0)
            .single()
            .expect("validated start timestamp")
    }

    /// Epoch seconds `months` calendar months after `start`.
    fn month_boundary(&self, months: u32) -> Result<i64> {
        let start = Utc
            .timestamp_opt(self.start, 0)
            .single()
            .ok_or_else(|| Error::InvalidInput(format!("bad start timestamp {}", self.start)))?;
        start
            .checked_add_months(Months::new(months))
            .map(|d| d.timestamp())
            .ok_or_else(|| Error::InvalidInput("window span overflows the calendar".into()))
    }

    /// Half-open `[start, end)` bounds of window `index`.
    pub fn bounds(&self, index: usize) -> (i64, i64) {
        let len = self.window_length_months;
        let i = index as u32;
        (
            self.month_boundary(len * i)
                .expect("validated window layout"),
            self.month_boundary(len * (i + 1))
                .expect("validated window layout"),
        )
    }

    pub fn span(&self) -> (i64, i64) {
        (self.start, self.bounds(self.window_count as usize - 1).1)
    }

    pub fn window_of(&self, timestamp: i64) -> Option<usize> {
        let (lo, hi) = self.span();
        if timestamp < lo || timestamp >= hi {
            return None;
        }
        (0..self.window_count as usize).find(|&i| {
            let (a, b) = self.bounds(i);
            a <= timestamp && timestamp < b
        })
    }

    /// 0-based calendar month of `timestamp` within its window.
    pub fn month_in_window(&self, window: usize, timestamp: i64) -> Option<usize> {
        (0..self.window_length_months as usize).find(|&m| {
            let offset = self.window_length_months * window as u32;
            let a = self
                .month_boundary(offset + m as u32)
                .expect("validated window layout");
            let b = self
                .month_boundary(offset + m as u32 + 1)
                .expect("validated window layout");
            a <= timestamp && timestamp < b
        })
    }

    /// `YYYY-MM` label of a window's first month.
    pub fn label(&self, index: usize) -> String {
        let d = self
            .start_datetime()
            .checked_add_months(Months::new(self.window_length_months * index as u32))
            .expect("validated window layout");
        format!("{:04}-{:02}", d.year(), d.month())
    }
}

/// The posts of one account within one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountWindowActivity<'a> {
    pub account_id: String,
    pub window_index: usize,
    pub posts: Vec<&'a PostRecord>,
    pub link_posts: Vec<&'a PostRecord>,
    /// Link posts with at least one extremist-classified link.
    pub extremist_link_posts: Vec<&'a PostRecord>,
}

impl<'a> AccountWindowActivity<'a> {
    pub fn new(account_id: impl Into<String>, window_index: usize) -> Self {
        Self {
            account_id: account_id.into(),
            window_index,
            posts: Vec::new(),
            link_posts: Vec::new(),
            extremist_link_posts: Vec::new(),
        }
    }

    pub fn push(&mut self, post: &'a PostRecord, registry: &DomainRegistry) {
        self.posts.push(post);
        if post.has_links() {
            self.link_posts.push(post);
            if is_extremist_post(post, registry) {
                self.extremist_link_posts.push(post);
            }
        }
    }

    /// Link posts without any extremist link.
    pub fn non_extremist_link_posts(&self) -> impl Iterator<Item = &'a PostRecord> + '_ {
        let ids: HashSet<&str> = self
            .extremist_link_posts
            .iter()
            .map(|p| p.post_id.as_str())
            .collect();
        self.link_posts
            .iter()
            .copied()
            .filter(move |p| !ids.contains(p.post_id.as_str()))
    }
}

pub fn is_extremist_post(post: &PostRecord, registry: &DomainRegistry) -> bool {
    post.links
        .iter()
        .any(|l| classify_link(l, registry) == SourceType::Extremist)
}

pub type ActivityKey = (String, usize);

/// Window assignment of a corpus.
#[derive(Debug, Clone)]
pub struct WindowSlices<'a> {
    pub activities: BTreeMap<ActivityKey, AccountWindowActivity<'a>>,
    pub assigned: usize,
    pub dropped: usize,
}

/// Groups posts by (account, window); posts outside every window are dropped.
pub fn slice_windows<'a>(
    posts: &'a [PostRecord],
    spec: &WindowSpec,
    registry: &DomainRegistry,
) -> WindowSlices<'a> {
    let mut activities: BTreeMap<ActivityKey, AccountWindowActivity<'a>> = BTreeMap::new();
    let mut assigned = 0;
    let mut dropped = 0;
    for post in posts {
        match spec.window_of(post.timestamp) {
            Some(w) => {
                assigned += 1;
                activities
                    .entry((post.account_id.clone(), w))
                    .or_insert_with(|| AccountWindowActivity::new(post.account_id.clone(), w))
                    .push(post, registry);
            }
            None => dropped += 1,
        }
    }
    WindowSlices {
        activities,
        assigned,
        dropped,
    }
}

/// How distinct extremist URLs are counted against the account threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// Distinct URLs across all windows combined.
    #[default]
    FullSpan,
    /// Best single window.
    PerWindow,
}

/// Distinct extremist-classified URLs per account.
pub fn unique_extremist_links<'a, I>(
    activities: I,
    registry: &DomainRegistry,
    scope: ThresholdScope,
) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = &'a AccountWindowActivity<'a>>,
{
    let mut per_window: BTreeMap<(String, usize), BTreeSet<&str>> = BTreeMap::new();
    for act in activities {
        let window = match scope {
            ThresholdScope::FullSpan => 0,
            ThresholdScope::PerWindow => act.window_index,
        };
        let set = per_window
            .entry((act.account_id.clone(), window))
            .or_default();
        for post in &act.extremist_link_posts {
            for link in &post.links {
                if classify_link(link, registry) == SourceType::Extremist {
                    set.insert(link.as_str());
                }
            }
        }
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for ((account, _), set) in per_window {
        let c = counts.entry(account).or_default();
        *c = (*c).max(set.len());
    }
    counts
}

/// Accounts with at least `min_unique_extremist_links` distinct extremist URLs.
pub fn apply_account_threshold<'a, I>(
    activities: I,
    registry: &DomainRegistry,
    min_unique_extremist_links: usize,
    scope: ThresholdScope,
) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a AccountWindowActivity<'a>>,
{
    unique_extremist_links(activities, registry, scope)
        .into_iter()
        .filter(|&(_, n)| n >= min_unique_extremist_links)
        .map(|(a, _)| a)
        .collect()
}

/// Accounts that a lower threshold would add on top of the `base` selection.
///
/// Returns one entry per threshold in `lower`, each the set difference
/// `retained(t) \ retained(base)`.
pub fn threshold_sensitivity(
    counts: &BTreeMap<String, usize>,
    base: usize,
    lower: &[usize],
) -> Vec<(usize, BTreeSet<String>)> {
    let retained = |t: usize| -> BTreeSet<&String> {
        counts
            .iter()
            .filter(|&(_, &n)| n >= t)
            .map(|(a, _)| a)
            .collect()
    };
    let base_set = retained(base);
    lower
        .iter()
        .map(|&t| {
            let added = retained(t)
                .difference(&base_set)
                .map(|s| s.to_string())
                .collect();
            (t, added)
        })
        .collect()
}

/// Linear-interpolation percentile of `values`.
pub fn percentile_cutoff(values: &[f64], percentile: f64) -> Result<f64> {
    stats::percentile(values, percentile)
}
