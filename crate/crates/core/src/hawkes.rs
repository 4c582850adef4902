//! Discrete-time multivariate Hawkes processes over role-labelled link
//! posting events.
//!
//! The rate of process `k` in bin `t` is
//!
//! ```text
//! rate[t][k] = background[k] + sum_{k'} sum_{lag=1..L, lag<=t} count[t-lag][k'] * W[k'][k] * G[lag]
//! ```
//!
//! and bin counts are Poisson with that mean. `W[i][j]` is the expected
//! number of events in process `j` triggered by one event in process `i`;
//! `G` is the lag distribution of those offspring.
//!
//! Fitting uses latent-parent EM: each unit event is attributed to the
//! background or to an earlier event within the lag horizon, and the
//! parameters are re-estimated from those responsibilities.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{classify_link, DomainRegistry, PostRecord, SourceType};
use crate::error::{Error, Result};
use crate::stats;

/// Events of one process in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub bin: usize,
    pub process: usize,
    pub count: u64,
}

/// Sparse bin-by-process count matrix for one link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeries {
    pub link_url: String,
    pub source_type: SourceType,
    pub bin_width_seconds: u64,
    pub horizon_bins: usize,
    pub processes: usize,
    /// Sorted by (bin, process); every count >= 1.
    pub events: Vec<Event>,
}

impl EventSeries {
    /// Builds a series from unsorted (bin, process, count) triples, merging
    /// duplicates and dropping zero counts.
    pub fn from_counts(
        link_url: impl Into<String>,
        source_type: SourceType,
        bin_width_seconds: u64,
        horizon_bins: usize,
        processes: usize,
        counts: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (bin, process, count) in counts {
            if bin >= horizon_bins || process >= processes {
                return Err(Error::InvalidInput(format!(
                    "event at bin {bin}, process {process} outside {horizon_bins}x{processes}"
                )));
            }
            if count > 0 {
                *merged.entry((bin, process)).or_default() += count;
            }
        }
        Ok(Self {
            link_url: link_url.into(),
            source_type,
            bin_width_seconds,
            horizon_bins,
            processes,
            events: merged
                .into_iter()
                .map(|((bin, process), count)| Event {
                    bin,
                    process,
                    count,
                })
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.events.windows(2) {
            if (pair[0].bin, pair[0].process) >= (pair[1].bin, pair[1].process) {
                return Err(Error::InvalidInput("events not strictly sorted".into()));
            }
        }
        for e in &self.events {
            if e.bin >= self.horizon_bins || e.process >= self.processes || e.count == 0 {
                return Err(Error::InvalidInput(format!("invalid event {e:?}")));
            }
        }
        Ok(())
    }

    pub fn total_events(&self) -> u64 {
        self.events.iter().map(|e| e.count).sum()
    }

    pub fn events_per_process(&self) -> Vec<u64> {
        let mut out = vec![0; self.processes];
        for e in &self.events {
            out[e.process] += e.count;
        }
        out
    }

    /// Dense `horizon x processes` count matrix.
    pub fn dense(&self) -> Vec<Vec<u64>> {
        let mut m = vec![vec![0; self.processes]; self.horizon_bins];
        for e in &self.events {
            m[e.bin][e.process] = e.count;
        }
        m
    }
}

/// Background rates, weight matrix and lag distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub background_rates: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    /// Shared lag mass function; `lag_pmf[i]` is the mass at lag `i + 1`.
    pub lag_pmf: Vec<f64>,
    /// Optional per-pair lag functions `[from][to][lag - 1]`, overriding
    /// `lag_pmf` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_lag_pmf: Option<Vec<Vec<Vec<f64>>>>,
}

impl HawkesParams {
    pub fn k(&self) -> usize {
        self.background_rates.len()
    }

    pub fn lag_horizon(&self) -> usize {
        self.lag_pmf.len()
    }

    pub fn lag(&self, from: usize, to: usize) -> &[f64] {
        match &self.pair_lag_pmf {
            Some(p) => &p[from][to],
            None => &self.lag_pmf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidInput("no processes".into()));
        }
        if self.weights.len() != k || self.weights.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput(format!(
                "weight matrix must be {k}x{k}"
            )));
        }
        if self.lag_pmf.is_empty() {
            return Err(Error::InvalidInput("empty lag distribution".into()));
        }
        let bad = |v: &f64| !v.is_finite() || *v < 0.0;
        if self.background_rates.iter().any(bad) || self.weights.iter().flatten().any(bad) {
            return Err(Error::InvalidInput(
                "rates and weights must be finite and >= 0".into(),
            ));
        }
        let check_pmf = |pmf: &[f64]| -> Result<()> {
            if pmf.len() != self.lag_horizon() || pmf.iter().any(bad) {
                return Err(Error::InvalidInput("malformed lag distribution".into()));
            }
            let s: f64 = pmf.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("lag distribution sums to {s}")));
            }
            Ok(())
        };
        check_pmf(&self.lag_pmf)?;
        if let Some(p) = &self.pair_lag_pmf {
            if p.len() != k || p.iter().any(|r| r.len() != k) {
                return Err(Error::InvalidInput("per-pair lag table must be KxK".into()));
            }
            for pmf in p.iter().flatten() {
                check_pmf(pmf)?;
            }
        }
        Ok(())
    }

    /// Largest eigenvalue modulus of the weight matrix.
    pub fn spectral_radius(&self) -> f64 {
        let k = self.k();
        let m = DMatrix::from_fn(k, k, |i, j| self.weights[i][j]);
        m.complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Truncated geometric lag distribution `p (1-p)^(lag-1)`, lags `1..=horizon`.
pub fn geometric_lag_pmf(p: f64, horizon: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..horizon).map(|i| p * (1.0 - p).powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn check_k(series: &EventSeries, params: &HawkesParams) -> Result<()> {
    if series.processes != params.k() {
        return Err(Error::DimensionMismatch {
            expected: params.k(),
            got: series.processes,
        });
    }
    Ok(())
}

/// Dense `horizon x K` conditional rates. Bin `t` only sees bins `< t`.
pub fn compute_rates(series: &EventSeries, params: &HawkesParams) -> Result<Vec<Vec<f64>>> {
    check_k(series, params)?;
    let k = params.k();
    let l = params.lag_horizon();
    let mut rates = vec![params.background_rates.clone(); series.horizon_bins];
    for e in &series.events {
        for lag in 1..=l {
            let t = e.bin + lag;
            if t >= series.horizon_bins {
                break;
            }
            for to in 0..k {
                rates[t][to] += e.count as f64
                    * params.weights[e.process][to]
                    * params.lag(e.process, to)[lag - 1];
            }
        }
    }
    Ok(rates)
}

/// A simulated series together with its branching structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub series: EventSeries,
    /// Events per process attributed to the background.
    pub background_counts: Vec<u64>,
    /// `offspring[i][j]`: events in `j` triggered by events in `i`.
    pub offspring: Vec<Vec<u64>>,
}

impl Simulation {
    /// Observed offspring per parent event, `offspring[i][j] / events_in_i`.
    pub fn offspring_per_parent(&self) -> Vec<Vec<f64>> {
        let per = self.series.events_per_process();
        self.offspring
            .iter()
            .zip(&per)
            .map(|(row, &n)| {
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }
}

fn poisson_draw(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u64
}

/// Simulates `horizon_bins` bins. Each bin draws a Poisson background count
/// and one Poisson offspring count per source process, which sums to the
/// Poisson count of the full rate and records who triggered what.
pub fn simulate(params: &HawkesParams, horizon_bins: usize, seed: u64) -> Result<Simulation> {
    params.validate()?;
    let rho = params.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::Explosive(rho));
    }
    let k = params.k();
    let l = params.lag_horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut recent: VecDeque<Event> = VecDeque::new();
    let mut counts = Vec::new();
    let mut background_counts = vec![0u64; k];
    let mut offspring = vec![vec![0u64; k]; k];
    let mut excitation = vec![vec![0.0; k]; k];

    for t in 0..horizon_bins {
        while recent.front().is_some_and(|e| e.bin + l < t) {
            recent.pop_front();
        }
        for row in excitation.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        for e in &recent {
            let lag = t - e.bin;
            for to in 0..k {
                excitation[e.process][to] += e.count as f64
                    * params.weights[e.process][to]
                    * params.lag(e.process, to)[lag - 1];
            }
        }
        for to in 0..k {
            let mut total = poisson_draw(params.background_rates[to], &mut rng);
            background_counts[to] += total;
            for from in 0..k {
                let n = poisson_draw(excitation[from][to], &mut rng);
                offspring[from][to] += n;
                total += n;
            }
            if total > 0 {
                let ev = Event {
                    bin: t,
                    process: to,
                    count: total,
                };
                recent.push_back(ev);
                counts.push(ev);
            }
        }
    }
    Ok(Simulation {
        series: EventSeries {
            link_url: format!("simulated:{seed}"),
            source_type: SourceType::Other,
            bin_width_seconds: 1,
            horizon_bins,
            processes: k,
            events: counts,
        },
        background_counts,
        offspring,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Lag horizon L in bins.
    pub lag_horizon: usize,
    pub max_iters: usize,
    /// Convergence threshold on the per-event log-likelihood change.
    pub tol: f64,
    pub seed: u64,
    /// Estimate one lag distribution per (from, to) pair.
    pub per_pair_lags: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            lag_horizon: 2880,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            per_pair_lags: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub params: HawkesParams,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the returned parameters.
    pub log_likelihood: f64,
    /// Log-likelihood at the start of every iteration, then of the result.
    pub log_likelihood_history: Vec<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Parent window of each event: the index range of events in the `L` bins
/// before it.
fn parent_ranges(events: &[Event], l: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(events.len());
    let mut lo = 0;
    let mut hi = 0;
    for e in events {
        while lo < events.len() && events[lo].bin + l < e.bin {
            lo += 1;
        }
        while hi < events.len() && events[hi].bin < e.bin {
            hi += 1;
        }
        out.push((lo, hi));
    }
    out
}

/// Lag mass that falls inside the horizon for an event at `bin`.
fn in_horizon_mass(pmf: &[f64], bin: usize, horizon: usize) -> f64 {
    let max_lag = (horizon - 1 - bin).min(pmf.len());
    pmf[..max_lag].iter().sum()
}

/// Observed-data log-likelihood, up to the constant `-sum ln(count!)`.
pub fn log_likelihood(series: &EventSeries, params: &HawkesParams) -> Result<f64> {
    check_k(series, params)?;
    let ranges = parent_ranges(&series.events, params.lag_horizon());
    Ok(e_step(series, params, &ranges, None).log_likelihood)
}

/// Posterior cause of the unit events in one (bin, process) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibility {
    pub background: f64,
    /// (parent event index, probability)
    pub parents: Vec<(usize, f64)>,
}

impl Responsibility {
    pub fn total(&self) -> f64 {
        self.background + self.parents.iter().map(|p| p.1).sum::<f64>()
    }
}

/// Per-event responsibilities under `params`, aligned with `series.events`.
pub fn responsibilities(
    series: &EventSeries,
    params: &HawkesParams,
) -> Result<Vec<Responsibility>> {
    check_k(series, params)?;
    let ranges = parent_ranges(&series.events, params.lag_horizon());
    let mut out = Vec::with_capacity(series.events.len());
    for (e, &(lo, hi)) in series.events.iter().zip(&ranges) {
        let bg = params.background_rates[e.process];
        let parents: Vec<(usize, f64)> = (lo..hi)
            .map(|p| {
                let pe = &series.events[p];
                let lag = e.bin - pe.bin;
                let v = pe.count as f64
                    * params.weights[pe.process][e.process]
                    * params.lag(pe.process, e.process)[lag - 1];
                (p, v)
            })
            .collect();
        let rate = bg + parents.iter().map(|p| p.1).sum::<f64>();
        if rate <= 0.0 {
            return Err(Error::Numerical {
                iteration: 0,
                message: format!("zero rate at an observed event {e:?}"),
            });
        }
        out.push(Responsibility {
            background: bg / rate,
            parents: parents.into_iter().map(|(p, v)| (p, v / rate)).collect(),
        });
    }
    Ok(out)
}

struct Sufficient {
    log_likelihood: f64,
    background: Vec<f64>,
    /// [from][to][lag-1]
    lag_mass: Vec<Vec<Vec<f64>>>,
}

fn e_step(
    series: &EventSeries,
    params: &HawkesParams,
    ranges: &[(usize, usize)],
    mut stats: Option<&mut Sufficient>,
) -> Sufficient {
    let k = params.k();
    let l = params.lag_horizon();
    let events = &series.events;
    let mut ll = CompensatedSum::default();
    let mut own = Sufficient {
        log_likelihood: 0.0,
        background: vec![0.0; k],
        lag_mass: if stats.is_some() {
            Vec::new()
        } else {
            vec![vec![vec![0.0; l]; k]; k]
        },
    };
    let acc: &mut Sufficient = match stats.as_deref_mut() {
        Some(s) => s,
        None => &mut own,
    };
    let mut contrib = Vec::new();
    for (e, &(lo, hi)) in events.iter().zip(ranges) {
        let to = e.process;
        let bg = params.background_rates[to];
        contrib.clear();
        let mut rate = bg;
        for pe in &events[lo..hi] {
            let lag = e.bin - pe.bin;
            let v = pe.count as f64
                * params.weights[pe.process][to]
                * params.lag(pe.process, to)[lag - 1];
            contrib.push((pe.process, lag, v));
            rate += v;
        }
        let s = e.count as f64;
        ll.add(s * rate.ln());
        if rate > 0.0 {
            acc.background[to] += s * bg / rate;
            for &(from, lag, v) in &contrib {
                acc.lag_mass[from][to][lag - 1] += s * v / rate;
            }
        }
    }
    // compensator: integral of the rate over all bins
    let horizon = series.horizon_bins;
    for to in 0..k {
        ll.add(-params.background_rates[to] * horizon as f64);
    }
    for e in events {
        for to in 0..k {
            let w = params.weights[e.process][to];
            if w > 0.0 {
                let mass = in_horizon_mass(params.lag(e.process, to), e.bin, horizon);
                ll.add(-(e.count as f64) * w * mass);
            }
        }
    }
    acc.log_likelihood = ll.value();
    let out_ll = acc.log_likelihood;
    if stats.is_some() {
        Sufficient {
            log_likelihood: out_ll,
            background: Vec::new(),
            lag_mass: Vec::new(),
        }
    } else {
        own
    }
}

/// Maximizes `sum R[i] ln G[i] - sum A[i] G[i]` over the simplex.
///
/// Stationarity gives `G[i] = R[i] / (A[i] + mu)`; `mu` is found by bisection
/// so the masses sum to one. With constant `A` this is `R / sum R`.
fn constrained_lag_update(mass: &[f64], exposure: &[f64], previous: &[f64]) -> Vec<f64> {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return previous.to_vec();
    }
    let support: Vec<usize> = (0..mass.len()).filter(|&i| mass[i] > 0.0).collect();
    let min_a = support
        .iter()
        .map(|&i| exposure[i])
        .fold(f64::INFINITY, f64::min);
    let max_a = support.iter().map(|&i| exposure[i]).fold(0.0, f64::max);
    if max_a - min_a <= 1e-12 * max_a.max(1.0) {
        return mass.iter().map(|m| m / total).collect();
    }
    let f = |mu: f64| {
        support
            .iter()
            .map(|&i| mass[i] / (exposure[i] + mu))
            .sum::<f64>()
    };
    let mut lo = -min_a;
    let mut hi = total - min_a;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    let mut g: Vec<f64> = mass
        .iter()
        .zip(exposure)
        .map(|(&m, &a)| if m > 0.0 { m / (a + mu) } else { 0.0 })
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

fn initial_params(series: &EventSeries, config: &EmConfig) -> HawkesParams {
    let k = series.processes;
    let l = config.lag_horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut jitter = || 1.0 + 0.01 * (2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0);
    let per = series.events_per_process();
    let t = series.horizon_bins as f64;
    let background_rates = per
        .iter()
        .map(|&n| n as f64 / (2.0 * t) * jitter())
        .collect();
    let weights = (0..k)
        .map(|_| (0..k).map(|_| 0.1 * jitter()).collect())
        .collect();
    let mut uniform = |len: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..len).map(|_| jitter() / len as f64).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let lag_pmf = uniform(l);
    let pair_lag_pmf = config.per_pair_lags.then(|| {
        (0..k)
            .map(|_| (0..k).map(|_| uniform(l)).collect())
            .collect()
    });
    HawkesParams {
        background_rates,
        weights,
        lag_pmf,
        pair_lag_pmf,
    }
}

/// Fits background rates, weights and lag distribution(s) by EM.
///
/// Each iteration runs one E-step and then conditional maximizations: the
/// background rates, the weights given the current lag distribution, and the
/// lag distribution given the new weights. Every step maximizes the expected
/// complete-data log-likelihood, so the observed log-likelihood never
/// decreases. When no event's lag window reaches past the horizon the
/// updates reduce to `W[i][j] = mass(i->j) / events(i)` and
/// `G = lag mass / total mass`.
pub fn fit_em(series: &EventSeries, config: &EmConfig) -> Result<EmFit> {
    series.validate()?;
    if config.lag_horizon == 0 {
        return Err(Error::InvalidInput("lag horizon must be positive".into()));
    }
    let n_events = series.total_events();
    if n_events < 2 {
        return Err(Error::InsufficientData(format!(
            "EM needs at least 2 events, got {n_events}"
        )));
    }
    let k = series.processes;
    let l = config.lag_horizon;
    let horizon = series.horizon_bins;
    let ranges = parent_ranges(&series.events, l);
    let mut params = initial_params(series, config);

    // exposure[i][lag-1]: parent events in process i whose lag fits the horizon
    let mut exposure = vec![vec![0.0; l]; k];
    let mut parent_events = vec![0.0; k];
    for e in &series.events {
        let max_lag = (horizon - 1 - e.bin).min(l);
        for slot in exposure[e.process][..max_lag].iter_mut() {
            *slot += e.count as f64;
        }
        parent_events[e.process] += e.count as f64;
    }

    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut stats = Sufficient {
        log_likelihood: 0.0,
        background: vec![0.0; k],
        lag_mass: vec![vec![vec![0.0; l]; k]; k],
    };
    loop {
        stats.background.iter_mut().for_each(|v| *v = 0.0);
        stats
            .lag_mass
            .iter_mut()
            .flatten()
            .for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
        e_step(series, &params, &ranges, Some(&mut stats));
        let ll = stats.log_likelihood;
        if !ll.is_finite() {
            return Err(Error::Numerical {
                iteration: iterations,
                message: format!(
                    "log-likelihood {ll}; background {:?}, last log-likelihoods {:?}",
                    params.background_rates,
                    history.iter().rev().take(3).collect::<Vec<_>>()
                ),
            });
        }
        if let Some(&prev) = history.last() {
            debug_assert!(
                ll >= prev - 1e-9 * prev.abs().max(1.0),
                "EM log-likelihood decreased at iteration {iterations}: {prev} -> {ll}"
            );
            if ((ll - prev) / n_events as f64).abs() < config.tol {
                converged = true;
                history.push(ll);
                break;
            }
        }
        history.push(ll);
        if iterations == config.max_iters {
            break;
        }
        iterations += 1;

        for to in 0..k {
            params.background_rates[to] = stats.background[to] / horizon as f64;
        }
        let pair_mass = |from: usize, to: usize| stats.lag_mass[from][to].iter().sum::<f64>();
        for from in 0..k {
            for to in 0..k {
                let g = params.lag(from, to);
                let denom: f64 = exposure[from].iter().zip(g).map(|(x, gv)| x * gv).sum();
                params.weights[from][to] = if denom > 0.0 {
                    pair_mass(from, to) / denom
                } else {
                    0.0
                };
            }
        }
        match params.pair_lag_pmf.as_mut() {
            None => {
                let mass: Vec<f64> = (0..l)
                    .map(|i| {
                        let mut s = 0.0;
                        for row in &stats.lag_mass {
                            for cell in row {
                                s += cell[i];
                            }
                        }
                        s
                    })
                    .collect();
                let exp: Vec<f64> = (0..l)
                    .map(|i| {
                        (0..k)
                            .map(|from| {
                                exposure[from][i] * params.weights[from].iter().sum::<f64>()
                            })
                            .sum()
                    })
                    .collect();
                params.lag_pmf = constrained_lag_update(&mass, &exp, &params.lag_pmf);
            }
            Some(pairs) => {
                for from in 0..k {
                    for to in 0..k {
                        let w = params.weights[from][to];
                        let exp: Vec<f64> = exposure[from].iter().map(|x| x * w).collect();
                        pairs[from][to] = constrained_lag_update(
                            &stats.lag_mass[from][to],
                            &exp,
                            &pairs[from][to],
                        );
                    }
                }
                // the shared field reports the mass-weighted average
                let mut avg = vec![0.0; l];
                for from in 0..k {
                    for to in 0..k {
                        for (a, g) in avg.iter_mut().zip(&pairs[from][to]) {
                            *a += g * params.weights[from][to].max(1e-300);
                        }
                    }
                }
                let s: f64 = avg.iter().sum();
                params.lag_pmf = avg.into_iter().map(|v| v / s).collect();
            }
        }
    }
    let log_likelihood = *history.last().expect("at least one evaluation");
    Ok(EmFit {
        params,
        iterations,
        converged,
        log_likelihood,
        log_likelihood_history: history,
    })
}

/// Divides each row by its sum; all-zero rows stay zero.
pub fn row_normalize(weights: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if weights.iter().flatten().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "row normalization needs finite non-negative entries".into(),
        ));
    }
    Ok(weights
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter().map(|v| v / s).collect()
            } else {
                vec![0.0; row.len()]
            }
        })
        .collect())
}

/// Links shared by at least `min_accounts` role-assigned accounts covering at
/// least `min_roles` roles, excluding unclassified sources. Sorted.
pub fn select_links(
    posts: &[PostRecord],
    roles: &BTreeMap<String, usize>,
    registry: &DomainRegistry,
    min_accounts: usize,
    min_roles: usize,
) -> Vec<String> {
    let mut sharers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for post in posts {
        if !roles.contains_key(&post.account_id) {
            continue;
        }
        for link in &post.links {
            sharers
                .entry(link.as_str())
                .or_default()
                .insert(post.account_id.as_str());
        }
    }
    sharers
        .into_iter()
        .filter(|(link, accounts)| {
            let role_count = accounts
                .iter()
                .map(|a| roles[*a])
                .collect::<BTreeSet<_>>()
                .len();
            accounts.len() >= min_accounts
                && role_count >= min_roles
                && classify_link(link, registry) != SourceType::Other
        })
        .map(|(link, _)| link.to_string())
        .collect()
}

/// Sorted posting times of `link` by role-assigned accounts.
fn link_times(
    link: &str,
    posts: &[PostRecord],
    roles: &BTreeMap<String, usize>,
) -> Vec<(i64, usize)> {
    let mut times: Vec<(i64, usize)> = posts
        .iter()
        .filter(|p| p.links.iter().any(|l| l == link))
        .filter_map(|p| roles.get(&p.account_id).map(|&r| (p.timestamp, r)))
        .collect();
    times.sort();
    times
}

/// Seconds between consecutive postings of each link.
pub fn inter_arrival_times(
    links: &[String],
    posts: &[PostRecord],
    roles: &BTreeMap<String, usize>,
) -> Vec<f64> {
    let mut out = Vec::new();
    for link in links {
        let times = link_times(link, posts, roles);
        out.extend(times.windows(2).map(|w| (w[1].0 - w[0].0) as f64));
    }
    out
}

/// Percentile of inter-arrival times, floored to whole seconds, at least 1.
pub fn choose_bin_width(inter_arrival_seconds: &[f64], percentile: f64) -> Result<u64> {
    let p = stats::percentile(inter_arrival_seconds, percentile)?;
    Ok((p.floor() as i64).max(1) as u64)
}

/// Bins the role-assigned postings of `link` relative to its first posting.
/// The horizon extends `lag_horizon` bins past the last event.
pub fn build_event_series(
    link: &str,
    posts: &[PostRecord],
    roles: &BTreeMap<String, usize>,
    processes: usize,
    bin_width: u64,
    lag_horizon: usize,
    registry: &DomainRegistry,
) -> Result<EventSeries> {
    if bin_width == 0 {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    let times = link_times(link, posts, roles);
    let Some(&(first, _)) = times.first() else {
        return Err(Error::InsufficientData(format!(
            "no role-assigned posts of {link}"
        )));
    };
    let triples: Vec<(usize, usize, u64)> = times
        .iter()
        .map(|&(ts, role)| (((ts - first) as u64 / bin_width) as usize, role, 1))
        .collect();
    if let Some(&(_, role, _)) = triples.iter().find(|t| t.1 >= processes) {
        return Err(Error::InvalidInput(format!(
            "role {role} outside 0..{processes}"
        )));
    }
    let last = triples.iter().map(|t| t.0).max().unwrap_or(0);
    EventSeries::from_counts(
        link,
        classify_link(link, registry),
        bin_width,
        last + lag_horizon + 1,
        processes,
        triples,
    )
}

/// A per-link fit for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFit {
    pub link_url: String,
    pub source_type: SourceType,
    pub events_per_role: Vec<u64>,
    pub params: HawkesParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub source_type: SourceType,
    /// Entry-wise mean of the row-normalized weight matrices.
    pub mean_normalized_weights: Vec<Vec<f64>>,
    pub links_fitted: usize,
    pub events_total: u64,
    pub events_per_role: Vec<u64>,
    /// Registry patterns of this type matched by at least one fitted link.
    pub labeled_domains: usize,
}

/// Per-source-type mean of row-normalized weights, in
/// [`SourceType::CLASSIFIED`] order; types without fits are omitted.
pub fn aggregate_influence(
    fits: &[LinkFit],
    registry: &DomainRegistry,
) -> Result<Vec<InfluenceReport>> {
    let mut reports = Vec::new();
    for st in SourceType::CLASSIFIED {
        let group: Vec<&LinkFit> = fits.iter().filter(|f| f.source_type == st).collect();
        let Some(first) = group.first() else {
            continue;
        };
        let k = first.params.k();
        let mut sum = vec![vec![0.0; k]; k];
        let mut events_per_role = vec![0u64; k];
        let mut domains = BTreeSet::new();
        for fit in &group {
            if fit.params.k() != k || fit.events_per_role.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: fit.params.k(),
                });
            }
            let norm = row_normalize(&fit.params.weights)?;
            for (srow, nrow) in sum.iter_mut().zip(&norm) {
                for (s, v) in srow.iter_mut().zip(nrow) {
                    *s += v;
                }
            }
            for (a, b) in events_per_role.iter_mut().zip(&fit.events_per_role) {
                *a += b;
            }
            if let Some(p) = registry.matching_pattern(&fit.link_url) {
                domains.insert(p.to_string());
            }
        }
        let n = group.len() as f64;
        reports.push(InfluenceReport {
            source_type: st,
            mean_normalized_weights: sum
                .into_iter()
                .map(|r| r.into_iter().map(|v| v / n).collect())
                .collect(),
            links_fitted: group.len(),
            events_total: events_per_role.iter().sum(),
            events_per_role,
            labeled_domains: domains.len(),
        });
    }
    Ok(reports)
}
