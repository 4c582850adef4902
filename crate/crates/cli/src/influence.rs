//! Hawkes fitting, influence reports and simulation.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rolecast_core::corpus::{classify_link, SourceType};
use rolecast_core::hawkes::{
    aggregate_influence, build_event_series, choose_bin_width, fit_em, inter_arrival_times,
    select_links, simulate, EmConfig, EmFit, EventSeries, HawkesParams, LinkFit,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{fmt_f64, Stamped, Store};
use crate::config::PipelineConfig;
use crate::stages::{load_inputs, load_model, read_assignments, strings};

/// Non-convergence or numerical failure, reported after all outputs are
/// written.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn digest(s: &str) -> [u8; 32] {
    Sha256::digest(s.as_bytes()).into()
}

/// Stable file stem for a link.
pub fn link_id(link: &str) -> String {
    hex::encode(&digest(link)[..8])
}

/// Per-link EM seed derived from the global seed and the link.
pub fn link_seed(seed: u64, link: &str) -> u64 {
    let d = digest(link);
    seed ^ u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkFitFile {
    pub link_url: String,
    pub source_type: SourceType,
    pub bin_width_seconds: u64,
    pub horizon_bins: usize,
    pub events_per_role: Vec<u64>,
    pub params: HawkesParams,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkEntry {
    pub link_url: String,
    pub file: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HawkesSummary {
    pub window_index: usize,
    pub roles: usize,
    pub bin_width_seconds: u64,
    pub bin_width_source: String,
    pub em: EmConfig,
    pub links: Vec<LinkEntry>,
    pub failed: usize,
}

fn fit_link(
    link: &str,
    posts: &[rolecast_core::corpus::PostRecord],
    roles: &BTreeMap<String, usize>,
    k: usize,
    bin_width: u64,
    em: &EmConfig,
    registry: &rolecast_core::corpus::DomainRegistry,
) -> Result<(EventSeries, EmFit)> {
    let series = build_event_series(link, posts, roles, k, bin_width, em.lag_horizon, registry)?;
    let fit = fit_em(&series, em)?;
    Ok((series, fit))
}

pub fn hawkes(cfg: &PipelineConfig, store: &Store) -> Result<HawkesSummary> {
    let window = cfg.window()?;
    let w = cfg.influence_window()?;
    if w >= window.window_count as usize {
        bail!(
            "config `influence_window` = {w} is outside the {} windows",
            window.window_count
        );
    }
    let model = load_model(store)?;
    let assignments = read_assignments(store, window.window_count as usize)?;
    let roles = &assignments[w];
    let (all_posts, _, registry) = load_inputs(cfg)?;
    let posts: Vec<_> = all_posts
        .into_iter()
        .filter(|p| window.window_of(p.timestamp) == Some(w))
        .collect();
    let (min_accounts, min_roles) = cfg.link_thresholds()?;
    let links = select_links(&posts, roles, &registry, min_accounts, min_roles);
    let seed = cfg.seed()?;
    let em = cfg.em_config(seed)?;

    let (bin_width, source) = match cfg.bin_width()? {
        Some(b) if b > 0 => (b, "config".to_string()),
        Some(_) => bail!("config `bin_width` must be positive"),
        None => {
            let gaps = inter_arrival_times(&links, &posts, roles);
            if gaps.is_empty() {
                (1, "default (no inter-arrival times)".to_string())
            } else {
                let pct = cfg.bin_percentile()?;
                (choose_bin_width(&gaps, pct)?, format!("percentile {pct}"))
            }
        }
    };
    log::info!("fitting {} links, bin width {bin_width}s", links.len());

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building worker pool")?;
    let results: Vec<(String, Result<(EventSeries, EmFit)>)> = pool.install(|| {
        links
            .par_iter()
            .map(|link| {
                let em = EmConfig {
                    seed: link_seed(seed, link),
                    ..em
                };
                let r = fit_link(link, &posts, roles, model.k, bin_width, &em, &registry);
                (link.clone(), r)
            })
            .collect()
    });

    let mut entries = Vec::new();
    let mut failed = 0;
    for (link, r) in results {
        match r {
            Ok((series, fit)) => {
                let rel = format!("hawkes/fits/{}.json", link_id(&link));
                store.write_json(
                    &rel,
                    &LinkFitFile {
                        link_url: link.clone(),
                        source_type: series.source_type,
                        bin_width_seconds: series.bin_width_seconds,
                        horizon_bins: series.horizon_bins,
                        events_per_role: series.events_per_process(),
                        params: fit.params,
                        iterations: fit.iterations,
                        converged: fit.converged,
                        log_likelihood: fit.log_likelihood,
                    },
                )?;
                failed += usize::from(!fit.converged);
                entries.push(LinkEntry {
                    link_url: link,
                    file: Some(rel),
                    converged: fit.converged,
                    iterations: fit.iterations,
                    error: None,
                });
            }
            Err(e) => {
                failed += 1;
                entries.push(LinkEntry {
                    link_url: link,
                    file: None,
                    converged: false,
                    iterations: 0,
                    error: Some(format!("{e:#}")),
                });
            }
        }
    }
    let summary = HawkesSummary {
        window_index: w,
        roles: model.k,
        bin_width_seconds: bin_width,
        bin_width_source: source,
        em,
        links: entries,
        failed,
    };
    store.write_json("hawkes/summary.json", &summary)?;
    if failed > 0 {
        return Err(NumericalFailure(format!(
            "{failed} of {} link fits did not converge; see {}",
            summary.links.len(),
            store.path("hawkes/summary.json").display()
        ))
        .into());
    }
    Ok(summary)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulatedSeries {
    pub series: EventSeries,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeriesFitFile {
    pub source: String,
    pub fit: EmFit,
}

/// Fits one series file, such as the output of `simulate`.
pub fn hawkes_series(cfg: &PipelineConfig, store: &Store, path: &Path) -> Result<EmFit> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Stamped<SimulatedSeries> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let fit = fit_em(&doc.body.series, &cfg.em_config(cfg.seed()?)?)?;
    store.write_json(
        "hawkes/series_fit.json",
        &SeriesFitFile {
            source: path.display().to_string(),
            fit: fit.clone(),
        },
    )?;
    if !fit.converged {
        return Err(NumericalFailure(format!(
            "EM stopped after {} iterations without converging",
            fit.iterations
        ))
        .into());
    }
    Ok(fit)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub params: HawkesParams,
    pub spectral_radius: f64,
    pub horizon_bins: usize,
    pub background_counts: Vec<u64>,
    pub offspring: Vec<Vec<u64>>,
    pub offspring_per_parent: Vec<Vec<f64>>,
}

pub fn simulate_stage(cfg: &PipelineConfig, store: &Store) -> Result<usize> {
    let params = cfg.sim_params()?;
    let bins = cfg.sim_bins()?;
    let sim = simulate(&params, bins, cfg.seed()?)?;
    let n = sim.series.events.len();
    store.write_json(
        "simulate/truth.json",
        &Truth {
            spectral_radius: params.spectral_radius(),
            offspring_per_parent: sim.offspring_per_parent(),
            params,
            horizon_bins: bins,
            background_counts: sim.background_counts,
            offspring: sim.offspring,
        },
    )?;
    store.write_json(
        "simulate/series.json",
        &SimulatedSeries { series: sim.series },
    )?;
    Ok(n)
}

pub fn report(cfg: &PipelineConfig, store: &Store) -> Result<usize> {
    let summary: HawkesSummary = store.read_json("hawkes/summary.json", "hawkes")?;
    let model = load_model(store)?;
    let registry_path = cfg.required_path("registry")?;
    let registry = rolecast_core::corpus::DomainRegistry::load(&registry_path)?;
    let mut fits = Vec::new();
    for entry in &summary.links {
        let Some(file) = &entry.file else { continue };
        let f: LinkFitFile = store.read_json(file, "hawkes")?;
        fits.push(LinkFit {
            source_type: classify_link(&f.link_url, &registry),
            link_url: f.link_url,
            events_per_role: f.events_per_role,
            params: f.params,
        });
    }
    let reports = aggregate_influence(&fits, &registry)?;
    let names: Vec<String> = (0..model.k).map(|i| model.role_name(i)).collect();
    let mut header = vec!["from".to_string()];
    header.extend(names.iter().cloned());
    for r in &reports {
        let rows: Vec<Vec<String>> = names
            .iter()
            .zip(&r.mean_normalized_weights)
            .map(|(n, row)| {
                let mut out = vec![n.clone()];
                out.extend(row.iter().map(|v| fmt_f64(*v)));
                out
            })
            .collect();
        store.write_csv(
            &format!("report/influence_{}.csv", r.source_type.as_str()),
            &header,
            &rows,
        )?;
    }
    let mut aheader = strings(&["source_type", "labeled_domains", "unique_links", "events"]);
    aheader.extend(names.iter().map(|n| format!("pct_{n}")));
    let arows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.source_type.as_str().to_string(),
                r.labeled_domains.to_string(),
                r.links_fitted.to_string(),
                r.events_total.to_string(),
            ];
            row.extend(r.events_per_role.iter().map(|&e| {
                fmt_f64(if r.events_total == 0 {
                    0.0
                } else {
                    100.0 * e as f64 / r.events_total as f64
                })
            }));
            row
        })
        .collect();
    store.write_csv("report/accounting.csv", &aheader, &arows)?;
    store.write_json("report/influence.json", &ReportFile { reports })?;
    Ok(fits.len())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub reports: Vec<rolecast_core::hawkes::InfluenceReport>,
}
