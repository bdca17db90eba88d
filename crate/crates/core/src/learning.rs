//! Bayesian learning-by-doing with an AI signal channel.
//!
//! Each developer holds Normal beliefs about their latent productivity in every
//! language and sector. Using a language produces one signal of variance
//! `signal_noise_var`; AI access produces `ai_signal_count` signals of variance
//! `ai_signal_var` about *every* language and sector each period, used or not.
//! Beliefs are scored by the mean-variance utility `μ − ρ/(2π)` and a language
//! is held in the portfolio while its utility clears the entry threshold.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every precision.
pub const PRECISION_FLOOR: f64 = 1e-12;

/// Structural parameters of the learning model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_languages: usize,
    pub n_sectors: usize,
    /// Initial precision on known languages and sectors.
    pub prior_precision_known: f64,
    /// Initial precision on unknown languages and sectors.
    pub prior_precision_unknown: f64,
    pub signal_noise_var: f64,
    pub risk_aversion: f64,
    /// Signals per period under AI access. Zero means no AI.
    pub ai_signal_count: f64,
    pub ai_signal_var: f64,
    pub entry_threshold: f64,
    pub entry_cost: f64,
    pub repo_base_cost: f64,
    pub repo_cap: usize,
    /// Expected commits per active (language, sector) repository per month.
    pub commit_rate: f64,
    pub mean_prior_loc: f64,
    pub mean_prior_scale: f64,
    /// Whether AI signals move posterior means as well as precisions.
    pub ai_updates_means: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            n_languages: 10,
            n_sectors: 6,
            prior_precision_known: 4.0,
            prior_precision_unknown: 0.5,
            signal_noise_var: 1.0,
            risk_aversion: 2.0,
            ai_signal_count: 1.0,
            ai_signal_var: 10.0,
            entry_threshold: 0.0,
            entry_cost: 0.0,
            repo_base_cost: 0.5,
            repo_cap: 10,
            commit_rate: 2.5,
            mean_prior_loc: 0.5,
            mean_prior_scale: 1.0,
            ai_updates_means: true,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(
                    name,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        let nonnegative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(
                    name,
                    format!("must be nonnegative and finite, got {v}"),
                ))
            }
        };
        if self.n_languages == 0 {
            return Err(Error::validation("n_languages", "must be at least 1"));
        }
        if self.n_sectors == 0 {
            return Err(Error::validation("n_sectors", "must be at least 1"));
        }
        if self.repo_cap == 0 {
            return Err(Error::validation("repo_cap", "must be at least 1"));
        }
        positive("prior_precision_known", self.prior_precision_known)?;
        positive("prior_precision_unknown", self.prior_precision_unknown)?;
        if self.prior_precision_unknown >= self.prior_precision_known {
            return Err(Error::validation(
                "prior_precision_unknown",
                "must be strictly below prior_precision_known",
            ));
        }
        positive("signal_noise_var", self.signal_noise_var)?;
        positive("risk_aversion", self.risk_aversion)?;
        nonnegative("ai_signal_count", self.ai_signal_count)?;
        positive("ai_signal_var", self.ai_signal_var)?;
        if !self.entry_threshold.is_finite() {
            return Err(Error::validation("entry_threshold", "must be finite"));
        }
        nonnegative("entry_cost", self.entry_cost)?;
        nonnegative("repo_base_cost", self.repo_base_cost)?;
        positive("commit_rate", self.commit_rate)?;
        if !self.mean_prior_loc.is_finite() {
            return Err(Error::validation("mean_prior_loc", "must be finite"));
        }
        nonnegative("mean_prior_scale", self.mean_prior_scale)?;
        Ok(())
    }

    /// Precision added to every language and sector per period of AI access.
    pub fn ai_precision_rate(&self) -> f64 {
        self.ai_signal_count / self.ai_signal_var
    }
}

/// Posterior precision after one period: `π + 1{used}/σ_ε² + n_A/σ_A²`.
pub fn update_precision(
    precision: f64,
    signal_noise_var: f64,
    used: bool,
    ai_signal_count: f64,
    ai_signal_var: f64,
) -> Result<f64> {
    if !(precision > 0.0) {
        return Err(Error::domain(format!(
            "precision must be positive, got {precision}"
        )));
    }
    if !(signal_noise_var > 0.0) || !(ai_signal_var > 0.0) {
        return Err(Error::domain("signal variances must be positive"));
    }
    if !(ai_signal_count >= 0.0) {
        return Err(Error::domain("ai_signal_count must be nonnegative"));
    }
    let usage = if used { 1.0 / signal_noise_var } else { 0.0 };
    Ok((precision + usage + ai_signal_count / ai_signal_var).max(PRECISION_FLOOR))
}

/// Conjugate Normal mean update with one signal `x` of variance `signal_var`.
pub fn update_mean(mean: f64, precision: f64, x: f64, signal_var: f64) -> Result<f64> {
    if !(precision > 0.0) {
        return Err(Error::domain(format!(
            "precision must be positive, got {precision}"
        )));
    }
    if !(signal_var > 0.0) {
        return Err(Error::domain(format!(
            "signal variance must be positive, got {signal_var}"
        )));
    }
    let signal_precision = 1.0 / signal_var;
    Ok((precision * mean + signal_precision * x) / (precision + signal_precision))
}

/// Risk-adjusted payoff `μ − ρ/(2π)`.
pub fn utility(mean: f64, precision: f64, risk_aversion: f64) -> Result<f64> {
    if !(precision > 0.0) {
        return Err(Error::domain(format!(
            "precision must be positive, got {precision}"
        )));
    }
    Ok(mean - risk_aversion / (2.0 * precision))
}

/// Extra mean productivity a new language needs over the current one:
/// `(ρ/2)(1/π_new − 1/π_cur)`.
pub fn switching_barrier(
    risk_aversion: f64,
    precision_new: f64,
    precision_current: f64,
) -> Result<f64> {
    if !(precision_new > 0.0) || !(precision_current > 0.0) {
        return Err(Error::domain("precisions must be positive"));
    }
    Ok(0.5 * risk_aversion * (1.0 / precision_new - 1.0 / precision_current))
}

/// Width of the band of prior means that an AI precision gain `delta` moves
/// across the entry threshold: `ρδ / (2π̲(π̲+δ))`.
pub fn activation_zone_width(
    risk_aversion: f64,
    precision_unknown: f64,
    delta: f64,
) -> Result<f64> {
    if !(precision_unknown > 0.0) {
        return Err(Error::domain("baseline precision must be positive"));
    }
    if !(delta >= 0.0) {
        return Err(Error::domain("precision gain must be nonnegative"));
    }
    Ok(risk_aversion * delta / (2.0 * precision_unknown * (precision_unknown + delta)))
}

/// One (language, sector) repository an agent contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RepoSlot {
    pub language: usize,
    pub sector: usize,
}

/// An agent's beliefs, latent truths and holdings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeveloperState {
    pub id: u64,
    pub lang_mean: Vec<f64>,
    pub lang_precision: Vec<f64>,
    pub sector_mean: Vec<f64>,
    pub sector_precision: Vec<f64>,
    pub lang_truth: Vec<f64>,
    pub sector_truth: Vec<f64>,
    /// Languages known before the simulation starts.
    pub known_languages: BTreeSet<usize>,
    pub portfolio: BTreeSet<usize>,
    pub ever_used: BTreeSet<usize>,
    /// Repositories active in the most recent period.
    pub repos: Vec<RepoSlot>,
    /// First period with AI access; `None` for never.
    pub adoption_period: Option<u32>,
    /// Last period simulated, 0 before the first step.
    pub period: u32,
}

impl DeveloperState {
    /// Draw a fresh agent. Prior means are i.i.d. `N(loc, scale²)`, latent
    /// truths are drawn from the agent's own prior, and the known sets are
    /// sampled uniformly at the requested sizes.
    pub fn draw<R: Rng + ?Sized>(
        id: u64,
        params: &ModelParams,
        n_known_languages: usize,
        n_known_sectors: usize,
        adoption_period: Option<u32>,
        rng: &mut R,
    ) -> Self {
        let known_languages = sample_subset(params.n_languages, n_known_languages, rng);
        let known_sectors = sample_subset(params.n_sectors, n_known_sectors, rng);
        let (lang_mean, lang_precision, lang_truth) =
            draw_beliefs(params, params.n_languages, &known_languages, rng);
        let (sector_mean, sector_precision, sector_truth) =
            draw_beliefs(params, params.n_sectors, &known_sectors, rng);

        let mut state = DeveloperState {
            id,
            lang_mean,
            lang_precision,
            sector_mean,
            sector_precision,
            lang_truth,
            sector_truth,
            portfolio: BTreeSet::new(),
            ever_used: BTreeSet::new(),
            known_languages,
            repos: Vec::new(),
            adoption_period,
            period: 0,
        };
        // Known languages count as already held when the window opens.
        let incumbent = state.known_languages.clone();
        state.portfolio = select_portfolio(&state, params, &incumbent);
        state
    }

    pub fn is_specialist(&self) -> bool {
        self.known_languages.len() <= 2
    }

    /// Utility-maximizing language in the current portfolio.
    pub fn current_language(&self, params: &ModelParams) -> Option<usize> {
        self.portfolio
            .iter()
            .copied()
            .map(|k| {
                let u = self.lang_mean[k] - params.risk_aversion / (2.0 * self.lang_precision[k]);
                (k, u)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }

    /// Switching barrier from the current language to `candidate`.
    pub fn barrier_to(&self, params: &ModelParams, candidate: usize) -> Option<f64> {
        let current = self.current_language(params)?;
        switching_barrier(
            params.risk_aversion,
            self.lang_precision[candidate],
            self.lang_precision[current],
        )
        .ok()
    }
}

fn sample_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> BTreeSet<usize> {
    rand::seq::index::sample(rng, n, k.min(n))
        .into_iter()
        .collect()
}

fn draw_beliefs<R: Rng + ?Sized>(
    params: &ModelParams,
    n: usize,
    known: &BTreeSet<usize>,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut mean = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for k in 0..n {
        let z_mean: f64 = StandardNormal.sample(rng);
        let z_truth: f64 = StandardNormal.sample(rng);
        let pi = if known.contains(&k) {
            params.prior_precision_known
        } else {
            params.prior_precision_unknown
        };
        let mu = params.mean_prior_loc + params.mean_prior_scale * z_mean;
        mean.push(mu);
        precision.push(pi);
        truth.push(mu + z_truth / pi.sqrt());
    }
    (mean, precision, truth)
}

/// Languages whose utility clears `Ū − c_entry·1[k ∉ previous]`.
fn select_portfolio(
    state: &DeveloperState,
    params: &ModelParams,
    previous: &BTreeSet<usize>,
) -> BTreeSet<usize> {
    (0..params.n_languages)
        .filter(|k| {
            let u = state.lang_mean[*k] - params.risk_aversion / (2.0 * state.lang_precision[*k]);
            let bar = if previous.contains(k) {
                params.entry_threshold
            } else {
                params.entry_threshold - params.entry_cost
            };
            u > bar
        })
        .collect()
}

/// Repository surplus `μ^L + μ^S − (c₀ + ρ/(2π^L) + ρ/(2π^S))`.
pub fn repo_surplus(state: &DeveloperState, params: &ModelParams, slot: RepoSlot) -> f64 {
    let half_rho = 0.5 * params.risk_aversion;
    state.lang_mean[slot.language] + state.sector_mean[slot.sector]
        - (params.repo_base_cost
            + half_rho / state.lang_precision[slot.language]
            + half_rho / state.sector_precision[slot.sector])
}

/// Repositories with positive surplus among portfolio languages, keeping the
/// `repo_cap` best, returned in (language, sector) order.
pub fn select_repos(state: &DeveloperState, params: &ModelParams) -> Vec<RepoSlot> {
    let mut candidates: Vec<(f64, RepoSlot)> = state
        .portfolio
        .iter()
        .flat_map(|&language| {
            (0..params.n_sectors).map(move |sector| RepoSlot { language, sector })
        })
        .map(|slot| (repo_surplus(state, params, slot), slot))
        .filter(|(surplus, _)| *surplus > 0.0)
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates.truncate(params.repo_cap);
    let mut repos: Vec<RepoSlot> = candidates.into_iter().map(|(_, slot)| slot).collect();
    repos.sort();
    repos
}

/// Advance one agent by one month.
///
/// Draw order is fixed at `2·(K + S)` standard normals per call regardless of
/// which signals are actually consumed, so two runs that differ only in AI
/// access see identical noise.
pub fn step_developer<R: Rng + ?Sized>(
    mut state: DeveloperState,
    params: &ModelParams,
    period: u32,
    ai_active: bool,
    rng: &mut R,
) -> Result<DeveloperState> {
    if period == 0 {
        return Err(Error::domain("period must be at least 1"));
    }
    let k_count = params.n_languages;
    let s_count = params.n_sectors;
    let mut noise: Vec<f64> = Vec::with_capacity(2 * (k_count + s_count));
    for _ in 0..2 * (k_count + s_count) {
        noise.push(StandardNormal.sample(rng));
    }
    let (lang_noise, sector_noise) = noise.split_at(2 * k_count);

    let ai_on = ai_active && params.ai_signal_count > 0.0;
    let ai_var = params.ai_signal_var / params.ai_signal_count.max(f64::MIN_POSITIVE);
    let usage_sd = params.signal_noise_var.sqrt();

    let used_sectors: BTreeSet<usize> = state.repos.iter().map(|r| r.sector).collect();

    for k in 0..k_count {
        let used = state.portfolio.contains(&k);
        let (z_use, z_ai) = (lang_noise[2 * k], lang_noise[2 * k + 1]);
        absorb(
            &mut state.lang_mean[k],
            &mut state.lang_precision[k],
            state.lang_truth[k],
            params,
            used.then_some(z_use * usage_sd),
            ai_on.then_some(z_ai * ai_var.sqrt()),
            ai_var,
        )?;
    }
    for s in 0..s_count {
        let used = used_sectors.contains(&s);
        let (z_use, z_ai) = (sector_noise[2 * s], sector_noise[2 * s + 1]);
        absorb(
            &mut state.sector_mean[s],
            &mut state.sector_precision[s],
            state.sector_truth[s],
            params,
            used.then_some(z_use * usage_sd),
            ai_on.then_some(z_ai * ai_var.sqrt()),
            ai_var,
        )?;
    }

    let previous = std::mem::take(&mut state.portfolio);
    state.portfolio = select_portfolio(&state, params, &previous);
    state.ever_used.extend(state.portfolio.iter().copied());
    state.repos = select_repos(&state, params);
    state.period = period;
    Ok(state)
}

/// Apply an optional usage signal then an optional AI batch to one belief.
/// The AI batch is summarized by its mean, a single signal of variance
/// `σ_A²/n_A`.
fn absorb(
    mean: &mut f64,
    precision: &mut f64,
    truth: f64,
    params: &ModelParams,
    usage_error: Option<f64>,
    ai_error: Option<f64>,
    ai_batch_var: f64,
) -> Result<()> {
    if let Some(err) = usage_error {
        *mean = update_mean(*mean, *precision, truth + err, params.signal_noise_var)?;
        *precision = update_precision(*precision, params.signal_noise_var, true, 0.0, 1.0)?;
    }
    if let Some(err) = ai_error {
        if params.ai_updates_means {
            *mean = update_mean(*mean, *precision, truth + err, ai_batch_var)?;
        }
        *precision = update_precision(
            *precision,
            params.signal_noise_var,
            false,
            params.ai_signal_count,
            params.ai_signal_var,
        )?;
    }
    Ok(())
}
