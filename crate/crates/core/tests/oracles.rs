//! Worked examples checked against independently computed expectations.

mod common;

use std::collections::BTreeMap;
use std::path::Path;

use approx::assert_abs_diff_eq;
use rand::Rng;
use rolecast_core::corpus::{AccountWindowActivity, PostRecord, SourceType, WindowSpec};
use rolecast_core::dynamics::{
    build_sequences, transition_matrix, InactiveMode, State, StateSequence,
};
use rolecast_core::features::{
    drive_features, popularity_ratios, strategy_proportions, trend_from_counts, DriveCategories,
    PopularityBaseline, Standardizer,
};
use rolecast_core::hawkes::{
    aggregate_influence, choose_bin_width, compute_rates, fit_em, geometric_lag_pmf, simulate,
    EmConfig, EventSeries, HawkesParams, LinkFit,
};
use rolecast_core::lexicon::{category_proportion, Lexicon, StrategyMatcher};
use rolecast_core::roles::{
    agglomerative_fit, assign_to_model, elbow_scan, jaccard_overlap_labels, kmeans_fit,
    silhouette_score, vif, ward_dendrogram, KMeansConfig,
};
use rolecast_core::stats::percentile;

use common::{ari_oracle, extremist_registry, planted_blobs, post, rng};

fn activity<'a>(posts: &'a [PostRecord]) -> AccountWindowActivity<'a> {
    let reg = extremist_registry();
    let mut a = AccountWindowActivity::new("acct", 0);
    for p in posts {
        a.push(p, &reg);
    }
    a
}

fn drives_lexicon() -> Lexicon {
    Lexicon::parse(
        "fairness: unfair\nachievement: win\nwe: we\nanger: angry\nrisk: danger\nreward: prize\n",
        Path::new("drives.txt"),
    )
    .unwrap()
}

#[test]
fn percentile_interpolates_between_two_values() {
    assert_abs_diff_eq!(
        percentile(&[0.0, 10.0], 25.0).unwrap(),
        2.5,
        epsilon = 1e-12
    );
}

#[test]
fn category_proportion_two_of_ten() {
    let lex = Lexicon::parse("anger: resent, argue, angry", Path::new("a.txt")).unwrap();
    let text = "they argue and we are angry about this whole thing";
    assert_eq!(text.split_whitespace().count(), 10);
    assert_abs_diff_eq!(category_proportion(text, &lex, "anger").unwrap(), 0.2);
}

#[test]
fn drive_proportion_single_post() {
    let posts = [post(
        "1",
        "acct",
        0,
        "there is real danger in the streets of this town",
        &["https://bad.example/a"],
    )];
    let f = drive_features(
        &activity(&posts),
        &drives_lexicon(),
        &DriveCategories::default(),
    )
    .unwrap();
    assert_abs_diff_eq!(f[4], 0.1);
    assert_eq!(f[0], 0.0);
}

#[test]
fn drive_proportions_pool_tokens_across_posts() {
    // 10 tokens with one hit and 5 tokens with two: pooled 3/15, averaged 0.25
    let posts = [
        post(
            "1",
            "acct",
            0,
            "there is real danger in the streets of this town",
            &["https://bad.example/a"],
        ),
        post(
            "2",
            "acct",
            1,
            "danger danger said the man",
            &["https://bad.example/b"],
        ),
    ];
    let f = drive_features(
        &activity(&posts),
        &drives_lexicon(),
        &DriveCategories::default(),
    )
    .unwrap();
    assert_abs_diff_eq!(f[4], 3.0 / 15.0, epsilon = 1e-15);
}

#[test]
fn popularity_ratio_with_smoothing() {
    let mut ext = post("1", "acct", 0, "", &["https://bad.example/a"]);
    ext.likes = 10;
    let mut rest = post("2", "acct", 1, "", &["https://news.example/a"]);
    rest.likes = 5;
    let posts = [ext, rest];
    let r = popularity_ratios(&activity(&posts), PopularityBaseline::Rest, 1.0);
    assert_abs_diff_eq!(r[0], 11.0 / 6.0, epsilon = 1e-15);
    assert_abs_diff_eq!(r[1], 1.0);
}

#[test]
fn trend_matches_closed_form_ols() {
    let ys = [0.0, 0.0, 3.0, 0.0, 0.0, 3.0];
    let n = ys.len() as f64;
    let xs: Vec<f64> = (1..=6).map(f64::from).collect();
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert_abs_diff_eq!(trend_from_counts(&ys).unwrap(), slope, epsilon = 1e-12);
}

#[test]
fn strategy_share_one_of_four() {
    let url = ["https://bad.example/a"];
    let posts = [
        post("1", "acct", 0, "I believe this is the truth.", &url),
        post("2", "acct", 1, "The weather is nice.", &url),
        post("3", "acct", 2, "Read the article below.", &url),
        post("4", "acct", 3, "A long road ahead.", &url),
    ];
    let s = strategy_proportions(&activity(&posts), &StrategyMatcher::bundled());
    assert_eq!(s, [0.25, 0.0]);
}

#[test]
fn standardizer_single_vector_by_hand() {
    let rows = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
    let s = Standardizer::fit(&rows).unwrap();
    // population std of 1,3,5 is sqrt(8/3)
    let out = s.apply(&[6.0, 4.0]).unwrap();
    assert_abs_diff_eq!(out[0], 3.0 / (8.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    assert_eq!(out[1], 0.0);
}

#[test]
fn kmeans_and_ward_recover_planted_blobs() {
    let (points, truth) = planted_blobs(5, 100, 13, 6.0, 11);
    let (model, a) = kmeans_fit(&points, &KMeansConfig::new(5, 3).with_n_init(10)).unwrap();
    assert!(ari_oracle(&a.labels, &truth) >= 0.95);
    let h = agglomerative_fit(&points, 5).unwrap();
    assert!(ari_oracle(&h.labels, &truth) >= 0.95);
    let again = assign_to_model(&points, &model).unwrap();
    assert_eq!(again.labels, a.labels);
}

#[test]
fn elbow_finds_planted_k() {
    let (points, _) = planted_blobs(5, 60, 13, 6.0, 12);
    assert_eq!(elbow_scan(&points, 2, 10, 0, 5).unwrap().suggested_k, 5);
}

fn brute_silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let d = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..points.len() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..points.len() {
            if i != j {
                sums[labels[j]] += d(&points[i], &points[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / points.len() as f64
}

#[test]
fn silhouette_equals_brute_force() {
    let (points, labels) = planted_blobs(3, 7, 4, 1.5, 5);
    let s = silhouette_score(&points, &labels).unwrap();
    assert_abs_diff_eq!(s, brute_silhouette(&points, &labels), epsilon = 1e-9);

    let (tight, labels) = planted_blobs(2, 10, 2, 200.0, 6);
    assert!(silhouette_score(&tight, &labels).unwrap() > 0.9);
}

/// Greedy Ward merging on centroids: cost 2 n_a n_b / (n_a + n_b) |c_a - c_b|^2.
fn naive_ward_heights(points: &[Vec<f64>]) -> Vec<f64> {
    let mut clusters: Vec<(Vec<f64>, f64)> = points.iter().map(|p| (p.clone(), 1.0)).collect();
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (ci, ni) = &clusters[i];
                let (cj, nj) = &clusters[j];
                let d2: f64 = ci.iter().zip(cj).map(|(a, b)| (a - b).powi(2)).sum();
                let cost = 2.0 * ni * nj / (ni + nj) * d2;
                if cost < best.2 {
                    best = (i, j, cost);
                }
            }
        }
        let (i, j, h) = best;
        let (cj, nj) = clusters.remove(j);
        let (ci, ni) = &mut clusters[i];
        for (a, b) in ci.iter_mut().zip(&cj) {
            *a = (*a * *ni + b * nj) / (*ni + nj);
        }
        *ni += nj;
        heights.push(h);
    }
    heights
}

#[test]
fn ward_heights_match_greedy_merging() {
    let (points, _) = planted_blobs(3, 8, 3, 2.0, 9);
    let fast: Vec<f64> = ward_dendrogram(&points).iter().map(|m| m.height).collect();
    let slow = naive_ward_heights(&points);
    assert_eq!(fast.len(), slow.len());
    for (a, b) in fast.iter().zip(&slow) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * b.max(1.0));
    }
}

#[test]
fn jaccard_swapped_halves_is_one_third() {
    // clusters {0,1},{2,3} against {0,2},{1,3}: every pairing shares one of three
    let m = jaccard_overlap_labels(&[0, 0, 1, 1], &[0, 1, 0, 1]);
    for s in m.scores.values() {
        assert_abs_diff_eq!(*s, 1.0 / 3.0, epsilon = 1e-15);
    }
}

#[test]
fn vif_two_variables_matches_closed_form() {
    let mut r = rng(4);
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let x: f64 = r.random::<f64>();
            vec![x, x + 0.3 * r.random::<f64>()]
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|v| (v[0], v[1])).unzip();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let v = vif(&rows, &["x", "y"]).unwrap();
    for got in v {
        assert_abs_diff_eq!(got, 1.0 / (1.0 - r2), epsilon = 1e-6);
    }
}

#[test]
fn transitions_counted_by_hand() {
    let seqs: Vec<StateSequence> = [[0, 1], [0, 1], [0, 0]]
        .iter()
        .enumerate()
        .map(|(i, s)| StateSequence {
            account_id: i.to_string(),
            states: s.iter().map(|&r| State::Role(r)).collect(),
        })
        .collect();
    let m = transition_matrix(&seqs, 2, InactiveMode::Exclude).unwrap();
    assert_abs_diff_eq!(m.probabilities[0][1], 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(m.probabilities[0][0], 1.0 / 3.0, epsilon = 1e-15);
}

#[test]
fn transitions_recover_generating_chain() {
    let truth = [
        [0.6, 0.1, 0.1, 0.1, 0.1],
        [0.05, 0.7, 0.1, 0.1, 0.05],
        [0.2, 0.2, 0.2, 0.2, 0.2],
        [0.0, 0.1, 0.3, 0.5, 0.1],
        [0.1, 0.0, 0.0, 0.1, 0.8],
    ];
    let mut r = rng(8);
    let draw = |r: &mut rand_chacha::ChaCha8Rng, row: &[f64; 5]| {
        let u: f64 = r.random();
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        4
    };
    let mut windows: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); 4];
    for a in 0..5000 {
        let mut s = r.random_range(0..5);
        for w in &mut windows {
            w.insert(format!("a{a:04}"), s);
            s = draw(&mut r, &truth[s]);
        }
    }
    let m = transition_matrix(&build_sequences(&windows, 4), 5, InactiveMode::Exclude).unwrap();
    for (i, row) in m.probabilities.iter().enumerate() {
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        for (j, p) in row.iter().enumerate() {
            assert!((p - truth[i][j]).abs() < 0.02, "P[{i}][{j}] = {p}");
        }
    }
}

#[test]
fn bin_width_from_tenth_percentile() {
    let gaps: Vec<f64> = (1..=10).map(|i| 10.0 * i as f64).collect();
    assert_eq!(choose_bin_width(&gaps, 10.0).unwrap(), 19);
}

#[test]
fn single_parent_rate_by_hand() {
    let params = HawkesParams {
        background_rates: vec![0.1, 0.2],
        weights: vec![vec![0.0, 0.5], vec![0.0, 0.0]],
        lag_pmf: vec![1.0],
        pair_lag_pmf: None,
    };
    let s = EventSeries::from_counts("x", SourceType::Other, 1, 3, 2, [(0, 0, 1)]).unwrap();
    let r = compute_rates(&s, &params).unwrap();
    assert_abs_diff_eq!(r[1][1], 0.2 + 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(r[2][1], 0.2);
}

#[test]
fn background_only_mean_is_poisson_rate() {
    let c = 0.3;
    let params = HawkesParams {
        background_rates: vec![c],
        weights: vec![vec![0.0]],
        lag_pmf: vec![1.0],
        pair_lag_pmf: None,
    };
    let n = 100_000;
    let sim = simulate(&params, n, 21).unwrap();
    let mean = sim.series.total_events() as f64 / n as f64;
    let se = (c / n as f64).sqrt();
    assert!((mean - c).abs() < 3.0 * se, "mean {mean}");
}

#[test]
fn single_process_stationary_rate() {
    let params = HawkesParams {
        background_rates: vec![0.01],
        weights: vec![vec![0.5]],
        lag_pmf: geometric_lag_pmf(0.3, 20),
        pair_lag_pmf: None,
    };
    let n = 200_000;
    let sim = simulate(&params, n, 22).unwrap();
    let mean = sim.series.total_events() as f64 / n as f64;
    let expected = 0.01 / (1.0 - 0.5);
    assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean}");
}

#[test]
fn lag_one_pairs_concentrate_lag_mass() {
    let counts: Vec<(usize, usize, u64)> = (0..200)
        .flat_map(|i| [(i * 50, 0, 1), (i * 50 + 1, 0, 1)])
        .collect();
    let s = EventSeries::from_counts("x", SourceType::Other, 1, 10_010, 1, counts).unwrap();
    let fit = fit_em(
        &s,
        &EmConfig {
            lag_horizon: 5,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(fit.params.lag_pmf[0] > 0.95, "{:?}", fit.params.lag_pmf);
    assert!((fit.params.weights[0][0] - 0.5).abs() < 0.05);
}

#[test]
fn influence_mean_of_two_links_by_hand() {
    let reg = extremist_registry();
    let fit = |url: &str, w: Vec<Vec<f64>>| LinkFit {
        link_url: url.into(),
        source_type: SourceType::Extremist,
        events_per_role: vec![1, 1],
        params: HawkesParams {
            background_rates: vec![0.1, 0.1],
            weights: w,
            lag_pmf: vec![1.0],
            pair_lag_pmf: None,
        },
    };
    let fits = [
        fit(
            "https://bad.example/1",
            vec![vec![1.0, 3.0], vec![0.0, 2.0]],
        ),
        fit(
            "https://bad.example/2",
            vec![vec![1.0, 1.0], vec![1.0, 0.0]],
        ),
    ];
    // normalized rows: [.25,.75],[0,1] and [.5,.5],[1,0]
    let r = aggregate_influence(&fits, &reg).unwrap();
    assert_eq!(r.len(), 1);
    let m = &r[0].mean_normalized_weights;
    let want = [[0.375, 0.625], [0.5, 0.5]];
    for i in 0..2 {
        for j in 0..2 {
            assert_abs_diff_eq!(m[i][j], want[i][j], epsilon = 1e-15);
        }
    }
    assert_eq!(r[0].links_fitted, 2);
    assert_eq!(r[0].events_total, 4);
}

#[test]
fn window_spec_default_covers_two_years() {
    let start = 1_514_764_800; // 2018-01-01
    let spec = WindowSpec::with_defaults(start);
    assert_eq!(spec.bounds(0).0, start);
    assert_eq!(spec.bounds(3).1, 1_577_836_800); // 2020-01-01
}
