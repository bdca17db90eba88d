//! Population simulator with staggered AI adoption.
//!
//! Each developer is an independent agent driven by [`step_developer`] over
//! calendar months `1..=n_periods`, with AI access from its cohort month on.
//! Active repositories emit commit records; the records feed the panel
//! builder exactly like externally supplied data would.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{step_developer, DeveloperState, ModelParams, RepoSlot};
use crate::panel::{build_outcomes, AdoptionMap, Outcome, OutcomePanel};
use crate::rng::{substream, Purpose};

/// One (developer, month, repository) contribution cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommitRecord {
    pub developer_id: u64,
    pub month: u32,
    pub repo_id: u64,
    pub language_id: u32,
    pub sector_id: u32,
    pub n_commits: u64,
}

/// Cohort sizes by first-treatment month, plus developers never treated
/// inside the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionSchedule {
    pub cohorts: BTreeMap<u32, usize>,
    pub never_treated: usize,
}

impl AdoptionSchedule {
    /// Late-concentrated adoption: 15% never treated, the rest spread over
    /// months `round(0.55·T)..=T−1` with linearly increasing mass.
    pub fn default_shape(n_developers: usize, n_periods: u32) -> Self {
        let never_treated = ((n_developers as f64) * 0.15).round() as usize;
        let treated = n_developers - never_treated.min(n_developers);
        let upper = n_periods.saturating_sub(1).max(2);
        let lower = ((0.55 * n_periods as f64).round() as u32).clamp(2, upper);
        let months: Vec<u32> = (lower..=upper).collect();
        let weights: Vec<f64> = months.iter().map(|&g| (g - lower + 1) as f64).collect();
        let total: f64 = weights.iter().sum();

        // Largest-remainder apportionment keeps the total exact.
        let quotas: Vec<f64> = weights.iter().map(|w| treated as f64 * w / total).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut leftover = treated - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..months.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(b.cmp(&a))
        });
        for idx in order {
            if leftover == 0 {
                break;
            }
            counts[idx] += 1;
            leftover -= 1;
        }
        let cohorts = months
            .into_iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .collect();
        AdoptionSchedule {
            cohorts,
            never_treated,
        }
    }

    pub fn total(&self) -> usize {
        self.cohorts.values().sum::<usize>() + self.never_treated
    }
}

/// Everything needed to simulate one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPanelConfig {
    pub model: ModelParams,
    pub n_developers: usize,
    pub n_periods: u32,
    pub schedule: AdoptionSchedule,
    /// Fraction of developers with one or two known languages.
    pub specialist_share: f64,
    /// Generalists know between 3 and this many languages.
    pub max_generalist_languages: usize,
    pub known_sectors: usize,
    pub seed: u64,
    /// Additive shift on `injected_outcome` for treated post-adoption cells.
    pub injected_effect: f64,
    pub injected_outcome: Outcome,
}

impl Default for SimPanelConfig {
    fn default() -> Self {
        SimPanelConfig::sized(1000, 28)
    }
}

impl SimPanelConfig {
    /// Default parameters at the given size, with the default adoption shape.
    pub fn sized(n_developers: usize, n_periods: u32) -> Self {
        SimPanelConfig {
            model: ModelParams::default(),
            n_developers,
            n_periods,
            schedule: AdoptionSchedule::default_shape(n_developers, n_periods),
            specialist_share: 0.5,
            max_generalist_languages: 5,
            known_sectors: 2,
            seed: 2025,
            injected_effect: 0.0,
            injected_outcome: Outcome::NLanguages,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_developers == 0 {
            return Err(Error::validation("n_developers", "must be at least 1"));
        }
        if self.n_periods < 2 {
            return Err(Error::validation("n_periods", "must be at least 2"));
        }
        if self.schedule.total() != self.n_developers {
            return Err(Error::validation(
                "adoption_schedule",
                format!(
                    "cohort counts sum to {} but n_developers is {}",
                    self.schedule.total(),
                    self.n_developers
                ),
            ));
        }
        if let Some(g) = self
            .schedule
            .cohorts
            .keys()
            .find(|&&g| g < 2 || g > self.n_periods)
        {
            return Err(Error::validation(
                "adoption_schedule",
                format!("cohort month {g} outside 2..={}", self.n_periods),
            ));
        }
        if !(0.0..=1.0).contains(&self.specialist_share) {
            return Err(Error::validation("specialist_share", "must lie in [0, 1]"));
        }
        if self.max_generalist_languages < 3 {
            return Err(Error::validation(
                "max_generalist_languages",
                "must be at least 3",
            ));
        }
        if self.known_sectors == 0 || self.known_sectors > self.model.n_sectors {
            return Err(Error::validation(
                "known_sectors",
                "must lie in 1..=n_sectors",
            ));
        }
        if !self.injected_effect.is_finite() {
            return Err(Error::validation("injected_effect", "must be finite"));
        }
        Ok(())
    }

    /// Developer ids `1..=n` with their cohort, cohorts in ascending order
    /// followed by the never-treated.
    pub fn developer_plan(&self) -> Vec<(u64, Option<u32>)> {
        let mut plan = Vec::with_capacity(self.n_developers);
        for (&g, &count) in &self.schedule.cohorts {
            plan.extend(std::iter::repeat_n(Some(g), count));
        }
        plan.extend(std::iter::repeat_n(None, self.schedule.never_treated));
        plan.into_iter()
            .enumerate()
            .map(|(i, g)| (i as u64 + 1, g))
            .collect()
    }

    pub fn adoption_map(&self) -> AdoptionMap {
        self.developer_plan()
            .into_iter()
            .map(|(id, g)| (id, g.unwrap_or(0)))
            .collect()
    }
}

/// Draw developer `id`'s initial state from the `Init` stream.
pub fn init_developer(
    config: &SimPanelConfig,
    seed: u64,
    id: u64,
    cohort: Option<u32>,
) -> DeveloperState {
    let mut rng = substream(seed, Purpose::Init, id, 0);
    let k = config.model.n_languages;
    let specialist = rng.random::<f64>() < config.specialist_share;
    let n_known = if specialist {
        rng.random_range(1..=2)
    } else {
        rng.random_range(3..=config.max_generalist_languages)
    };
    DeveloperState::draw(
        id,
        &config.model,
        n_known.min(k),
        config.known_sectors,
        cohort,
        &mut rng,
    )
}

/// Run one developer through the window, calling `visit` after every month.
/// With `ai_enabled = false` the developer never receives AI signals whatever
/// its cohort, which is the counterfactual arm of paired experiments.
pub fn run_trajectory(
    config: &SimPanelConfig,
    seed: u64,
    mut state: DeveloperState,
    ai_enabled: bool,
    mut visit: impl FnMut(&DeveloperState) -> Result<()>,
) -> Result<()> {
    let cohort = state.adoption_period;
    for month in 1..=config.n_periods {
        let ai_active = ai_enabled && cohort.is_some_and(|g| month >= g);
        let mut rng = substream(seed, Purpose::Signals, state.id, month);
        state = step_developer(state, &config.model, month, ai_active, &mut rng)?;
        visit(&state)?;
    }
    Ok(())
}

/// Stable repository id for a developer's (language, sector) slot.
pub fn repo_id(developer_id: u64, slot: RepoSlot, params: &ModelParams) -> u64 {
    let per_dev = (params.n_languages * params.n_sectors) as u64;
    (developer_id - 1) * per_dev + (slot.language * params.n_sectors + slot.sector) as u64 + 1
}

/// Simulator output: sorted commit records and the adoption map.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub records: Vec<CommitRecord>,
    pub adoption: AdoptionMap,
}

/// Simulate a full panel of commit records.
pub fn simulate_panel(config: &SimPanelConfig) -> Result<SimOutput> {
    config.validate()?;
    let params = &config.model;
    let poisson = Poisson::new(params.commit_rate)
        .map_err(|e| Error::validation("commit_rate", e.to_string()))?;
    let plan = config.developer_plan();
    let per_developer: Vec<Vec<CommitRecord>> = plan
        .par_iter()
        .map(|&(id, cohort)| {
            let state = init_developer(config, config.seed, id, cohort);
            let mut out = Vec::new();
            run_trajectory(config, config.seed, state, true, |s| {
                let mut rng = substream(config.seed, Purpose::Commits, id, s.period);
                let mut active = s.repos.iter().peekable();
                // One draw per slot, active or not, keeps streams aligned.
                for language in 0..params.n_languages {
                    for sector in 0..params.n_sectors {
                        let n: f64 = poisson.sample(&mut rng);
                        let slot = RepoSlot { language, sector };
                        if active.peek() == Some(&&slot) {
                            active.next();
                            if n >= 1.0 {
                                out.push(CommitRecord {
                                    developer_id: id,
                                    month: s.period,
                                    repo_id: repo_id(id, slot, params),
                                    language_id: language as u32,
                                    sector_id: sector as u32,
                                    n_commits: n as u64,
                                });
                            }
                        }
                    }
                }
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<CommitRecord> = per_developer.into_iter().flatten().collect();
    records.sort();
    Ok(SimOutput {
        records,
        adoption: config.adoption_map(),
    })
}

/// Add `effect` to `outcome` on every treated developer-month at or after
/// adoption. By construction the true ATT(g, t) of the shifted panel is
/// `effect` on every post-treatment cell.
pub fn inject_effect(panel: &mut OutcomePanel, effect: f64, outcome: Outcome) -> Result<()> {
    if !effect.is_finite() {
        return Err(Error::validation("injected_effect", "must be finite"));
    }
    let t_count = panel.n_periods() as usize;
    let first_treat = panel.first_treat().to_vec();
    let values = panel.outcome_values_mut(outcome)?;
    if effect == 0.0 {
        return Ok(());
    }
    for (i, &g) in first_treat.iter().enumerate() {
        if g == 0 {
            continue;
        }
        for t in (g as usize).max(1)..=t_count {
            values[i * t_count + t - 1] += effect;
        }
    }
    Ok(())
}

/// Simulate, build the six-outcome panel (plus sectors) and apply the
/// configured injected effect.
pub fn simulate_outcome_panel(config: &SimPanelConfig) -> Result<OutcomePanel> {
    let sim = simulate_panel(config)?;
    let build = build_outcomes(&sim.records, &sim.adoption, config.n_periods)?;
    let mut panel = OutcomePanel::from_rows(&build.rows, true)?;
    inject_effect(&mut panel, config.injected_effect, config.injected_outcome)?;
    Ok(panel)
}
