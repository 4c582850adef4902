//! The 13-dimensional account feature vector and its standardization.

use serde::{Deserialize, Serialize};

use crate::corpus::{AccountWindowActivity, PostRecord, WindowSpec};
use crate::error::{Error, Result};
use crate::lexicon::{words, Lexicon, StrategyMatcher};
use crate::stats;

pub const NUM_FEATURES: usize = 13;

/// Canonical column order for feature matrices.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "injustice",
    "achievement",
    "group_identity",
    "anger",
    "risk",
    "reward",
    "extremist_link_proportion",
    "likes_ratio",
    "shares_ratio",
    "comments_ratio",
    "trend",
    "opinions",
    "solicitation",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub injustice: f64,
    pub achievement: f64,
    pub group_identity: f64,
    pub anger: f64,
    pub risk: f64,
    pub reward: f64,
    pub extremist_link_proportion: f64,
    pub likes_ratio: f64,
    pub shares_ratio: f64,
    pub comments_ratio: f64,
    pub trend: f64,
    pub opinions: f64,
    pub solicitation: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.injustice,
            self.achievement,
            self.group_identity,
            self.anger,
            self.risk,
            self.reward,
            self.extremist_link_proportion,
            self.likes_ratio,
            self.shares_ratio,
            self.comments_ratio,
            self.trend,
            self.opinions,
            self.solicitation,
        ]
    }

    pub fn from_array(v: [f64; NUM_FEATURES]) -> Self {
        Self {
            injustice: v[0],
            achievement: v[1],
            group_identity: v[2],
            anger: v[3],
            risk: v[4],
            reward: v[5],
            extremist_link_proportion: v[6],
            likes_ratio: v[7],
            shares_ratio: v[8],
            comments_ratio: v[9],
            trend: v[10],
            opinions: v[11],
            solicitation: v[12],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Lexicon category backing each drive feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriveCategories {
    pub injustice: String,
    pub achievement: String,
    pub group_identity: String,
    pub anger: String,
    pub risk: String,
    pub reward: String,
}

impl Default for DriveCategories {
    fn default() -> Self {
        Self {
            injustice: "fairness".into(),
            achievement: "achievement".into(),
            group_identity: "we".into(),
            anger: "anger".into(),
            risk: "risk".into(),
            reward: "reward".into(),
        }
    }
}

impl DriveCategories {
    fn ordered(&self) -> [&str; 6] {
        [
            &self.injustice,
            &self.achievement,
            &self.group_identity,
            &self.anger,
            &self.risk,
            &self.reward,
        ]
    }
}

/// Drive proportions over the pooled tokens of the window's extremist link
/// posts, in `FEATURE_NAMES` order. All zero when there are none.
pub fn drive_features(
    activity: &AccountWindowActivity<'_>,
    lexicon: &Lexicon,
    categories: &DriveCategories,
) -> Result<[f64; 6]> {
    let sets = categories.ordered().map(|name| lexicon.category(name));
    let sets = {
        let mut out = Vec::with_capacity(6);
        for s in sets {
            out.push(s?);
        }
        out
    };
    let mut hits = [0usize; 6];
    let mut total = 0usize;
    for post in &activity.extremist_link_posts {
        for token in words(&post.text) {
            total += 1;
            for (h, set) in hits.iter_mut().zip(&sets) {
                if set.matches(&token) {
                    *h += 1;
                }
            }
        }
    }
    if total == 0 {
        return Ok([0.0; 6]);
    }
    Ok(hits.map(|h| h as f64 / total as f64))
}

/// Extremist link posts over all link posts; 0 with no link posts.
pub fn extremist_link_proportion(activity: &AccountWindowActivity<'_>) -> f64 {
    if activity.link_posts.is_empty() {
        0.0
    } else {
        activity.extremist_link_posts.len() as f64 / activity.link_posts.len() as f64
    }
}

/// Which link posts form the popularity denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityBaseline {
    /// Link posts without an extremist link.
    #[default]
    Rest,
    /// Every link post, extremist ones included.
    AllLinks,
}

pub const POPULARITY_EPSILON: f64 = 1.0;

fn reaction_means(posts: &[&PostRecord]) -> [f64; 3] {
    let n = posts.len() as f64;
    let mut sums = [0.0; 3];
    for p in posts {
        sums[0] += p.likes as f64;
        sums[1] += p.shares as f64;
        sums[2] += p.comments as f64;
    }
    sums.map(|s| s / n)
}

/// Smoothed ratio of mean likes, shares and comments on extremist link posts
/// to the baseline; 1.0 when either side is empty.
pub fn popularity_ratios(
    activity: &AccountWindowActivity<'_>,
    baseline: PopularityBaseline,
    epsilon: f64,
) -> [f64; 3] {
    let baseline_posts: Vec<&PostRecord> = match baseline {
        PopularityBaseline::Rest => activity.non_extremist_link_posts().collect(),
        PopularityBaseline::AllLinks => activity.link_posts.clone(),
    };
    if activity.extremist_link_posts.is_empty() || baseline_posts.is_empty() {
        return [1.0; 3];
    }
    let num = reaction_means(&activity.extremist_link_posts);
    let den = reaction_means(&baseline_posts);
    [0, 1, 2].map(|i| (num[i] + epsilon) / (den[i] + epsilon))
}

/// OLS slope of monthly counts against month index 1..m.
pub fn trend_from_counts(counts: &[f64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::InsufficientData(
            "trend needs at least two months".into(),
        ));
    }
    let xs: Vec<f64> = (1..=counts.len()).map(|i| i as f64).collect();
    Ok(stats::ols_slope(&xs, counts).expect("two distinct month indices"))
}

/// Per-calendar-month extremist link post counts of the activity's window.
pub fn monthly_counts(activity: &AccountWindowActivity<'_>, spec: &WindowSpec) -> Vec<f64> {
    let mut counts = vec![0.0; spec.window_length_months as usize];
    for post in &activity.extremist_link_posts {
        if let Some(m) = spec.month_in_window(activity.window_index, post.timestamp) {
            counts[m] += 1.0;
        }
    }
    counts
}

/// Least-squares trend of extremist link posts per month.
pub fn monthly_trend(activity: &AccountWindowActivity<'_>, spec: &WindowSpec) -> Result<f64> {
    if spec.window_length_months < 2 {
        return Err(Error::InvalidInput(
            "monthly trend needs windows of at least two months".into(),
        ));
    }
    trend_from_counts(&monthly_counts(activity, spec))
}

/// Fractions of extremist link posts with opinion and solicitation
/// expressions.
pub fn strategy_proportions(
    activity: &AccountWindowActivity<'_>,
    matcher: &StrategyMatcher,
) -> [f64; 2] {
    let n = activity.extremist_link_posts.len();
    if n == 0 {
        return [0.0; 2];
    }
    let (mut op, mut sol) = (0usize, 0usize);
    for post in &activity.extremist_link_posts {
        let flags = matcher.strategy_flags(&post.text);
        op += usize::from(flags.has_opinion);
        sol += usize::from(flags.has_solicitation);
    }
    [op as f64 / n as f64, sol as f64 / n as f64]
}

/// Everything needed to featurize one activity.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub matcher: StrategyMatcher,
    pub drives: DriveCategories,
    pub window: WindowSpec,
    pub popularity_baseline: PopularityBaseline,
    pub popularity_epsilon: f64,
}

impl FeatureContext {
    pub fn new(matcher: StrategyMatcher, window: WindowSpec) -> Self {
        Self {
            matcher,
            drives: DriveCategories::default(),
            window,
            popularity_baseline: PopularityBaseline::Rest,
            popularity_epsilon: POPULARITY_EPSILON,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        self.matcher.tagger.lexicon()
    }
}

/// Feature vector for one (account, window) plus whether the account posted
/// any extremist link in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountFeatures {
    pub account_id: String,
    pub window_index: usize,
    pub active: bool,
    pub features: FeatureVector,
}

pub fn compute_features(
    activity: &AccountWindowActivity<'_>,
    ctx: &FeatureContext,
) -> Result<AccountFeatures> {
    let drives = drive_features(activity, ctx.lexicon(), &ctx.drives)?;
    let pop = popularity_ratios(activity, ctx.popularity_baseline, ctx.popularity_epsilon);
    let trend = monthly_trend(activity, &ctx.window)?;
    let [opinions, solicitation] = strategy_proportions(activity, &ctx.matcher);
    let features = FeatureVector {
        injustice: drives[0],
        achievement: drives[1],
        group_identity: drives[2],
        anger: drives[3],
        risk: drives[4],
        reward: drives[5],
        extremist_link_proportion: extremist_link_proportion(activity),
        likes_ratio: pop[0],
        shares_ratio: pop[1],
        comments_ratio: pop[2],
        trend,
        opinions,
        solicitation,
    };
    Ok(AccountFeatures {
        account_id: activity.account_id.clone(),
        window_index: activity.window_index,
        active: !activity.extremist_link_posts.is_empty(),
        features,
    })
}

/// Per-dimension z-scoring with population statistics.
///
/// A dimension with zero variance has `std == 0` and standardizes to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardizer needs at least 2 vectors, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars.iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(v.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect())
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

pub fn fit_standardizer(vectors: &[FeatureVector]) -> Result<Standardizer> {
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.to_array().to_vec()).collect();
    Standardizer::fit(&rows)
}

pub fn apply_standardizer(v: &FeatureVector, s: &Standardizer) -> Result<[f64; NUM_FEATURES]> {
    let out = s.apply(&v.to_array())?;
    Ok(out.try_into().expect("dimension checked"))
}

/// Pairwise Pearson correlations between columns of `rows`.
pub fn correlation_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    let cols: Vec<Vec<f64>> = (0..dim)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        stats::pearson(&cols[i], &cols[j])
                    }
                })
                .collect()
        })
        .collect()
}
