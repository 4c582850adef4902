//! Ingest, featurize, clustering and dynamics stages.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context, Result};
use rolecast_core::corpus::{
    apply_account_threshold, load_corpus, percentile_cutoff, slice_windows, threshold_sensitivity,
    unique_extremist_links, DomainRegistry, LoadReport, PostRecord,
};
use rolecast_core::dynamics::{
    build_sequences, pair_transition_matrix, retention_distribution, transition_matrix,
    InactiveMode, TransitionMatrix,
};
use rolecast_core::features::{
    compute_features, FeatureContext, Standardizer, FEATURE_NAMES, NUM_FEATURES,
};
use rolecast_core::lexicon::{Lexicon, PatternSet, StrategyMatcher};
use rolecast_core::roles::{
    adjusted_rand_index, agglomerative_fit, assign_to_model, elbow_scan, jaccard_overlap_labels,
    kmeans_fit, silhouette_score, vif, KMeansConfig, RoleModel,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{fmt_f64, Store};
use crate::config::PipelineConfig;

pub const ACCOUNTS_CSV: &str = "ingest/accounts.csv";
pub const MODEL_JSON: &str = "roles/model.json";
pub const ASSIGNMENTS_CSV: &str = "roles/assignments.csv";

pub fn features_csv(window: usize) -> String {
    format!("features/window_{window}.csv")
}

pub fn standardizer_json(window: usize) -> String {
    format!("features/standardizer_{window}.json")
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<(Vec<PostRecord>, LoadReport, DomainRegistry)> {
    let corpus = cfg.required_path("corpus")?;
    let registry_path = cfg.required_path("registry")?;
    let (posts, report) = load_corpus(&corpus)?;
    let registry = DomainRegistry::load(&registry_path)?;
    Ok((posts, report, registry))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestSummary {
    pub load: LoadReport,
    pub registry_patterns: usize,
    pub posts_in_windows: usize,
    pub posts_outside_windows: usize,
    pub accounts_seen: usize,
    pub accounts_with_extremist_links: usize,
    pub accounts_retained: usize,
    pub account_threshold: usize,
    /// 95th percentile of distinct extremist links per account, over
    /// accounts with at least one.
    pub extremist_link_p95: Option<f64>,
}

pub fn ingest(cfg: &PipelineConfig, store: &Store) -> Result<IngestSummary> {
    let (posts, load, registry) = load_inputs(cfg)?;
    let window = cfg.window()?;
    let slices = slice_windows(&posts, &window, &registry);
    let scope = cfg.threshold_scope()?;
    let threshold = cfg.account_threshold()?;
    let counts = unique_extremist_links(slices.activities.values(), &registry, scope);
    let retained = apply_account_threshold(slices.activities.values(), &registry, threshold, scope);
    let positive: Vec<f64> = counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64)
        .collect();
    let p95 = if positive.is_empty() {
        None
    } else {
        Some(percentile_cutoff(&positive, 95.0)?)
    };

    let mut window_rows = Vec::new();
    for w in 0..window.window_count as usize {
        let (start, end) = window.bounds(w);
        let acts: Vec<_> = slices
            .activities
            .values()
            .filter(|a| a.window_index == w)
            .collect();
        let posts_in: usize = acts.iter().map(|a| a.posts.len()).sum();
        let retained_active = acts
            .iter()
            .filter(|a| retained.contains(&a.account_id) && !a.extremist_link_posts.is_empty())
            .count();
        window_rows.push(vec![
            w.to_string(),
            window.label(w),
            start.to_string(),
            end.to_string(),
            posts_in.to_string(),
            acts.len().to_string(),
            retained_active.to_string(),
        ]);
    }
    store.write_csv(
        "ingest/windows.csv",
        &strings(&[
            "window_index",
            "label",
            "start",
            "end",
            "posts",
            "accounts",
            "retained_active",
        ]),
        &window_rows,
    )?;

    let accounts: BTreeSet<&str> = posts.iter().map(|p| p.account_id.as_str()).collect();
    let account_rows: Vec<Vec<String>> = accounts
        .iter()
        .map(|a| {
            vec![
                a.to_string(),
                counts.get(*a).copied().unwrap_or(0).to_string(),
                u8::from(retained.contains(*a)).to_string(),
            ]
        })
        .collect();
    store.write_csv(
        ACCOUNTS_CSV,
        &strings(&["account_id", "unique_extremist_links", "retained"]),
        &account_rows,
    )?;

    let sensitivity = threshold_sensitivity(&counts, threshold, &cfg.sensitivity_thresholds()?);
    let sens_rows: Vec<Vec<String>> = sensitivity
        .iter()
        .map(|(t, added)| {
            vec![
                t.to_string(),
                added.len().to_string(),
                added.iter().cloned().collect::<Vec<_>>().join(";"),
            ]
        })
        .collect();
    store.write_csv(
        "ingest/threshold_sensitivity.csv",
        &strings(&["threshold", "added_accounts", "accounts"]),
        &sens_rows,
    )?;

    let summary = IngestSummary {
        load,
        registry_patterns: registry.len(),
        posts_in_windows: slices.assigned,
        posts_outside_windows: slices.dropped,
        accounts_seen: accounts.len(),
        accounts_with_extremist_links: positive.len(),
        accounts_retained: retained.len(),
        account_threshold: threshold,
        extremist_link_p95: p95,
    };
    store.write_json("ingest/summary.json", &summary)?;
    Ok(summary)
}

pub fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn matcher(cfg: &PipelineConfig) -> Result<StrategyMatcher> {
    let lexicon_paths = cfg.lexicon_paths()?;
    let lexicon = if lexicon_paths.is_empty() {
        Lexicon::bundled()
    } else {
        let mut lex = Lexicon::new();
        for p in &lexicon_paths {
            lex.merge(Lexicon::load(p)?)?;
        }
        lex
    };
    let patterns = match cfg.existing_path("patterns")? {
        Some(p) => PatternSet::load(&p)?,
        None => PatternSet::bundled(),
    };
    Ok(StrategyMatcher::new(lexicon, patterns))
}

fn retained_accounts(store: &Store) -> Result<BTreeSet<String>> {
    let t = store.read_csv(ACCOUNTS_CSV, "ingest")?;
    let (a, r) = (t.column("account_id")?, t.column("retained")?);
    Ok(t.rows
        .iter()
        .filter(|row| row[r] == "1")
        .map(|row| row[a].clone())
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StandardizerFile {
    pub window_index: usize,
    pub rows: usize,
    pub active_rows: usize,
    /// Fitted on active rows; absent with fewer than two.
    pub standardizer: Option<Standardizer>,
}

pub fn featurize(cfg: &PipelineConfig, store: &Store) -> Result<Vec<usize>> {
    let retained = retained_accounts(store)?;
    let (posts, _, registry) = load_inputs(cfg)?;
    let window = cfg.window()?;
    let mut ctx = FeatureContext::new(matcher(cfg)?, window);
    ctx.popularity_baseline = cfg.popularity_baseline()?;
    ctx.popularity_epsilon = cfg.popularity_epsilon()?;
    let slices = slice_windows(&posts, &window, &registry);

    let mut header = strings(&["account_id", "window_index", "active"]);
    header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    let mut row_counts = Vec::new();
    for w in 0..window.window_count as usize {
        let mut rows = Vec::new();
        let mut active = Vec::new();
        for ((account, aw), act) in &slices.activities {
            if *aw != w || !retained.contains(account) {
                continue;
            }
            let f = compute_features(act, &ctx)?;
            let arr = f.features.to_array();
            let mut row = vec![
                account.clone(),
                w.to_string(),
                u8::from(f.active).to_string(),
            ];
            row.extend(arr.iter().map(|v| fmt_f64(*v)));
            rows.push(row);
            if f.active {
                active.push(arr.to_vec());
            }
        }
        let standardizer = if active.len() >= 2 {
            Some(Standardizer::fit(&active)?)
        } else {
            log::warn!(
                "window {w}: {} active accounts, no standardizer",
                active.len()
            );
            None
        };
        store.write_csv(&features_csv(w), &header, &rows)?;
        store.write_json(
            &standardizer_json(w),
            &StandardizerFile {
                window_index: w,
                rows: rows.len(),
                active_rows: active.len(),
                standardizer,
            },
        )?;
        row_counts.push(rows.len());
    }
    Ok(row_counts)
}

/// Active accounts and raw feature rows of one window.
pub fn active_features(store: &Store, window: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let t = store.read_csv(&features_csv(window), "featurize")?;
    let a = t.column("account_id")?;
    let act = t.column("active")?;
    let first = t.column(FEATURE_NAMES[0])?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for row in &t.rows {
        if row[act] != "1" {
            continue;
        }
        let v = row[first..first + NUM_FEATURES]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("feature row for {}", row[a]))?;
        ids.push(row[a].clone());
        rows.push(v);
    }
    Ok((ids, rows))
}

fn standardized_window0(store: &Store) -> Result<(Vec<String>, Vec<Vec<f64>>, Standardizer)> {
    let (ids, rows) = active_features(store, 0)?;
    let file: StandardizerFile = store.read_json(&standardizer_json(0), "featurize")?;
    let Some(std) = file.standardizer else {
        bail!(
            "window 0 has {} active accounts; clustering needs more",
            file.active_rows
        );
    };
    let points = std.apply_all(&rows)?;
    Ok((ids, points, std))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Robustness {
    pub k: usize,
    pub accounts: usize,
    pub sizes: Vec<usize>,
    pub inertia: f64,
    pub silhouette: Option<f64>,
    pub agglomerative_ari: f64,
    pub agglomerative_jaccard: BTreeMap<usize, f64>,
    pub agglomerative_jaccard_mean: f64,
}

fn kmeans_config(cfg: &PipelineConfig) -> Result<KMeansConfig> {
    let mut c = KMeansConfig::new(cfg.k()?, cfg.seed()?).with_n_init(cfg.n_init()?);
    c.max_iters = cfg.kmeans_max_iters()?;
    c.tol = cfg.kmeans_tol()?;
    Ok(c)
}

pub fn cluster(cfg: &PipelineConfig, store: &Store) -> Result<Robustness> {
    let (ids, points, std) = standardized_window0(store)?;
    let (mut model, assignment) = kmeans_fit(&points, &kmeans_config(cfg)?)?;
    model.standardizer = Some(std);
    let labels = cfg.role_labels();
    if !labels.is_empty() {
        if labels.len() != model.k {
            bail!(
                "config `role_labels` has {} names for k={}",
                labels.len(),
                model.k
            );
        }
        model.labels = labels.into_iter().enumerate().collect();
    }
    model.validate()?;
    store.write_json(MODEL_JSON, &model)?;
    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&assignment.labels)
        .map(|(a, c)| vec![a.clone(), "0".into(), c.to_string()])
        .collect();
    store.write_csv(
        "roles/clusters_window_0.csv",
        &strings(&["account_id", "window_index", "cluster"]),
        &rows,
    )?;

    let silhouette = match silhouette_score(&points, &assignment.labels) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("silhouette skipped: {e}");
            None
        }
    };
    let agg = agglomerative_fit(&points, model.k)?;
    let jac = jaccard_overlap_labels(&assignment.labels, &agg.labels);
    let report = Robustness {
        k: model.k,
        accounts: ids.len(),
        sizes: assignment.sizes(),
        inertia: assignment.inertia,
        silhouette,
        agglomerative_ari: adjusted_rand_index(&assignment.labels, &agg.labels),
        agglomerative_jaccard_mean: jac.mean(),
        agglomerative_jaccard: jac.scores,
    };
    store.write_json("roles/robustness.json", &report)?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ElbowFile {
    pub suggested_k: usize,
    pub configured_k: usize,
}

pub fn elbow(cfg: &PipelineConfig, store: &Store) -> Result<usize> {
    let (_, points, _) = standardized_window0(store)?;
    let (lo, hi) = cfg.elbow_range()?;
    let hi = hi.min(points.len());
    let curve = elbow_scan(&points, lo, hi, cfg.seed()?, cfg.n_init()?)?;
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![p.k.to_string(), fmt_f64(p.distortion), fmt_f64(p.inertia)])
        .collect();
    store.write_csv(
        "roles/elbow.csv",
        &strings(&["k", "distortion", "inertia"]),
        &rows,
    )?;
    store.write_json(
        "roles/elbow.json",
        &ElbowFile {
            suggested_k: curve.suggested_k,
            configured_k: cfg.k()?,
        },
    )?;
    Ok(curve.suggested_k)
}

pub fn vif_stage(store: &Store) -> Result<Vec<f64>> {
    let (_, points, _) = standardized_window0(store)?;
    let values = vif(&points, &FEATURE_NAMES)?;
    let rows: Vec<Vec<String>> = FEATURE_NAMES
        .iter()
        .zip(&values)
        .map(|(n, v)| vec![n.to_string(), fmt_f64(*v)])
        .collect();
    store.write_csv("roles/vif.csv", &strings(&["feature", "vif"]), &rows)?;
    Ok(values)
}

pub fn load_model(store: &Store) -> Result<RoleModel> {
    let model: RoleModel = store.read_json(MODEL_JSON, "cluster")?;
    model.validate()?;
    Ok(model)
}

/// Assigns every window's active accounts to the window-0 centroids, using
/// the window-0 standardizer.
pub fn assign(cfg: &PipelineConfig, store: &Store) -> Result<Vec<usize>> {
    let model = load_model(store)?;
    let std = model
        .standardizer
        .clone()
        .context("role model has no standardizer")?;
    let window = cfg.window()?;
    let mut rows = Vec::new();
    let mut per_window = Vec::new();
    for w in 0..window.window_count as usize {
        let (ids, raw) = active_features(store, w)?;
        per_window.push(ids.len());
        if ids.is_empty() {
            continue;
        }
        let points = std.apply_all(&raw)?;
        let a = assign_to_model(&points, &model)?;
        for (id, c) in ids.iter().zip(&a.labels) {
            rows.push(vec![id.clone(), w.to_string(), c.to_string()]);
        }
    }
    store.write_csv(
        ASSIGNMENTS_CSV,
        &strings(&["account_id", "window_index", "cluster"]),
        &rows,
    )?;
    Ok(per_window)
}

/// Per-window account → cluster maps from the assignments file.
pub fn read_assignments(store: &Store, windows: usize) -> Result<Vec<BTreeMap<String, usize>>> {
    let t = store.read_csv(ASSIGNMENTS_CSV, "assign")?;
    let (a, w, c) = (
        t.column("account_id")?,
        t.column("window_index")?,
        t.column("cluster")?,
    );
    let mut out = vec![BTreeMap::new(); windows];
    for row in &t.rows {
        let wi: usize = row[w].parse().context("window_index")?;
        let ci: usize = row[c].parse().context("cluster")?;
        if wi >= windows {
            bail!("assignment for window {wi} but only {windows} windows configured");
        }
        out[wi].insert(row[a].clone(), ci);
    }
    Ok(out)
}

fn state_names(model: &RoleModel, mode: InactiveMode) -> Vec<String> {
    let mut names: Vec<String> = (0..model.k).map(|i| model.role_name(i)).collect();
    if mode == InactiveMode::AsState {
        names.push("inactive".into());
    }
    names
}

fn matrix_rows<T: ToString>(names: &[String], m: &[Vec<T>]) -> Vec<Vec<String>> {
    names
        .iter()
        .zip(m)
        .map(|(n, row)| {
            let mut r = vec![n.clone()];
            r.extend(row.iter().map(ToString::to_string));
            r
        })
        .collect()
}

fn write_transitions(
    store: &Store,
    rel: &str,
    names: &[String],
    t: &TransitionMatrix,
) -> Result<()> {
    let mut header = vec!["from".to_string()];
    header.extend(names.iter().cloned());
    let probs: Vec<Vec<String>> = t
        .probabilities
        .iter()
        .map(|r| r.iter().map(|v| fmt_f64(*v)).collect())
        .collect();
    store.write_csv(rel, &header, &matrix_rows(names, &probs))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub accounts: usize,
    pub excluded_from_retention: usize,
    pub transitions_counted: u64,
    pub empty_rows: Vec<String>,
}

pub fn dynamics(cfg: &PipelineConfig, store: &Store) -> Result<DynamicsSummary> {
    let windows = cfg.window()?.window_count as usize;
    let assignments = read_assignments(store, windows)?;
    let model = load_model(store)?;
    let mode = cfg.inactive_mode()?;
    let names = state_names(&model, mode);
    let seqs = build_sequences(&assignments, windows);

    let pooled = transition_matrix(&seqs, model.k, mode)?;
    write_transitions(store, "dynamics/transitions.csv", &names, &pooled)?;
    let mut header = vec!["from".to_string()];
    header.extend(names.iter().cloned());
    store.write_csv(
        "dynamics/transition_counts.csv",
        &header,
        &matrix_rows(&names, &pooled.counts),
    )?;
    for w in 0..windows.saturating_sub(1) {
        let m = pair_transition_matrix(&seqs, model.k, mode, w)?;
        write_transitions(
            store,
            &format!("dynamics/transitions_pair_{w}.csv"),
            &names,
            &m,
        )?;
    }

    let retention = retention_distribution(&seqs);
    let mut rheader = strings(&["role", "accounts"]);
    rheader.extend((1..=windows).map(|s| format!("span_{s}")));
    let rrows: Vec<Vec<String>> = retention
        .proportions
        .iter()
        .map(|(role, props)| {
            let mut r = vec![model.role_name(*role), retention.accounts[role].to_string()];
            r.extend(props.iter().map(|v| fmt_f64(*v)));
            r
        })
        .collect();
    store.write_csv("dynamics/retention.csv", &rheader, &rrows)?;

    let summary = DynamicsSummary {
        accounts: seqs.len(),
        excluded_from_retention: retention.excluded,
        transitions_counted: pooled.total(),
        empty_rows: pooled
            .empty_rows
            .iter()
            .map(|&i| names[i].clone())
            .collect(),
    };
    store.write_json("dynamics/summary.json", &summary)?;
    Ok(summary)
}
