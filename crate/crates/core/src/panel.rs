//! Developer-month outcome panel.
//!
//! Commit-level records are collapsed to one row per developer and month with
//! six activity and diversity outcomes. The panel is balanced: months without
//! commits are materialized as zero rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CommitRecord;

/// Developer id → first treated month (0 = never treated).
pub type AdoptionMap = BTreeMap<u64, u32>;

/// Panel outcome columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    NCommits,
    NRepos,
    NLanguages,
    LanguageEntropy,
    NNewLanguages,
    CumulativeLanguages,
    NSectors,
}

impl Outcome {
    /// The six headline outcomes, in reporting order.
    pub const MAIN: [Outcome; 6] = [
        Outcome::NCommits,
        Outcome::NRepos,
        Outcome::NLanguages,
        Outcome::LanguageEntropy,
        Outcome::NNewLanguages,
        Outcome::CumulativeLanguages,
    ];

    pub const ALL: [Outcome; 7] = [
        Outcome::NCommits,
        Outcome::NRepos,
        Outcome::NLanguages,
        Outcome::LanguageEntropy,
        Outcome::NNewLanguages,
        Outcome::CumulativeLanguages,
        Outcome::NSectors,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Outcome::NCommits => "n_commits",
            Outcome::NRepos => "n_repos",
            Outcome::NLanguages => "n_languages",
            Outcome::LanguageEntropy => "language_entropy",
            Outcome::NNewLanguages => "n_new_languages",
            Outcome::CumulativeLanguages => "cumulative_languages",
            Outcome::NSectors => "n_sectors",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Outcome::NCommits => "Monthly commits",
            Outcome::NRepos => "Repositories",
            Outcome::NLanguages => "Programming languages",
            Outcome::LanguageEntropy => "Language entropy",
            Outcome::NNewLanguages => "Newly-used languages",
            Outcome::CumulativeLanguages => "Cumulative languages",
            Outcome::NSectors => "Sectors",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.column() == s)
            .ok_or_else(|| Error::validation("outcome", format!("unknown outcome `{s}`")))
    }
}

/// One developer-month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub developer_id: u64,
    pub month: u32,
    pub first_treat: u32,
    pub n_commits: u64,
    pub n_repos: u32,
    pub n_languages: u32,
    pub language_entropy: f64,
    pub n_new_languages: u32,
    pub cumulative_languages: u32,
    pub n_sectors: u32,
}

impl PanelRow {
    pub fn outcome(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::NCommits => self.n_commits as f64,
            Outcome::NRepos => self.n_repos as f64,
            Outcome::NLanguages => self.n_languages as f64,
            Outcome::LanguageEntropy => self.language_entropy,
            Outcome::NNewLanguages => self.n_new_languages as f64,
            Outcome::CumulativeLanguages => self.cumulative_languages as f64,
            Outcome::NSectors => self.n_sectors as f64,
        }
    }
}

/// `−Σ p ln p` over commit shares, with `0·ln 0 = 0`.
pub fn shannon_entropy(shares: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &p in shares {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(
                "shares",
                format!("share {p} outside [0, 1]"),
            ));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(
            "shares",
            format!("shares sum to {total}, not 1"),
        ));
    }
    let h: f64 = shares
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(h.max(0.0))
}

const BOT_PATTERNS: [&str; 10] = [
    "[bot]",
    "-bot",
    "_bot",
    "bot-",
    "dependabot",
    "renovate",
    "github-actions",
    "codecov",
    "greenkeeper",
    "snyk",
];

/// True when a login looks like an automation account.
pub fn filter_bot_login(login: &str) -> bool {
    let lower = login.to_lowercase();
    BOT_PATTERNS.iter().any(|p| lower.contains(p))
}

/// Result of collapsing records into a panel.
#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub rows: Vec<PanelRow>,
    /// Records folded into an earlier record with the same
    /// (developer, month, repo, language) key.
    pub merged_duplicates: usize,
}

/// Collapse commit records into a balanced developer-month panel over months
/// `1..=n_periods`. Every developer in `adoption` gets a full set of rows.
pub fn build_outcomes(
    records: &[CommitRecord],
    adoption: &AdoptionMap,
    n_periods: u32,
) -> Result<PanelBuild> {
    if n_periods == 0 {
        return Err(Error::validation("n_periods", "must be at least 1"));
    }
    // (developer, month, repo, language) → (sector, commits)
    let mut cells: BTreeMap<(u64, u32, u64, u32), (u32, u64)> = BTreeMap::new();
    let mut merged_duplicates = 0;
    for r in records {
        if !adoption.contains_key(&r.developer_id) {
            return Err(Error::validation(
                "adoption",
                format!("no adoption entry for developer {}", r.developer_id),
            ));
        }
        if r.month == 0 || r.month > n_periods {
            return Err(Error::validation(
                "month",
                format!("record month {} outside window 1..={n_periods}", r.month),
            ));
        }
        if r.n_commits == 0 {
            continue;
        }
        let key = (r.developer_id, r.month, r.repo_id, r.language_id);
        match cells.get_mut(&key) {
            Some(cell) => {
                cell.0 = cell.0.min(r.sector_id);
                cell.1 += r.n_commits;
                merged_duplicates += 1;
            }
            None => {
                cells.insert(key, (r.sector_id, r.n_commits));
            }
        }
    }

    let mut rows = Vec::with_capacity(adoption.len() * n_periods as usize);
    let mut iter = cells.into_iter().peekable();
    for (&developer_id, &first_treat) in adoption {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for month in 1..=n_periods {
            let mut by_language: BTreeMap<u32, u64> = BTreeMap::new();
            let mut repos: BTreeSet<u64> = BTreeSet::new();
            let mut sectors: BTreeSet<u32> = BTreeSet::new();
            while let Some(((dev, m, repo, language), (sector, commits))) = iter.peek().copied() {
                if dev != developer_id || m != month {
                    break;
                }
                *by_language.entry(language).or_default() += commits;
                repos.insert(repo);
                sectors.insert(sector);
                iter.next();
            }
            let n_commits: u64 = by_language.values().sum();
            let language_entropy = if by_language.len() <= 1 {
                0.0
            } else {
                let shares: Vec<f64> = by_language
                    .values()
                    .map(|&c| c as f64 / n_commits as f64)
                    .collect();
                shannon_entropy(&shares)?
            };
            let before = seen.len();
            seen.extend(by_language.keys().copied());
            rows.push(PanelRow {
                developer_id,
                month,
                first_treat,
                n_commits,
                n_repos: repos.len() as u32,
                n_languages: by_language.len() as u32,
                language_entropy,
                n_new_languages: (seen.len() - before) as u32,
                cumulative_languages: seen.len() as u32,
                n_sectors: sectors.len() as u32,
            });
        }
    }
    Ok(PanelBuild {
        rows,
        merged_duplicates,
    })
}

/// Mean and standard deviation of one outcome within one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

/// Descriptive statistics for one group of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n_developers: usize,
    pub n_rows: usize,
    pub outcomes: BTreeMap<Outcome, Moments>,
}

/// Treated-pre, treated-post and control descriptive summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub treated_pre: GroupSummary,
    pub treated_post: GroupSummary,
    pub control: GroupSummary,
    pub n_months: usize,
    pub n_rows: usize,
}

/// Summarize a panel. Treated developers (first_treat > 0) contribute their
/// months before adoption to the pre group and the rest to the post group;
/// never-treated developers form the control group.
pub fn summarize(rows: &[PanelRow]) -> Result<SummaryTable> {
    if rows.is_empty() {
        return Err(Error::validation(
            "panel",
            "cannot summarize an empty panel",
        ));
    }
    let mut groups: [Vec<&PanelRow>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in rows {
        let idx = match row.first_treat {
            0 => 2,
            g if row.month < g => 0,
            _ => 1,
        };
        groups[idx].push(row);
    }
    let months: BTreeSet<u32> = rows.iter().map(|r| r.month).collect();
    let [pre, post, control] = groups;
    Ok(SummaryTable {
        treated_pre: group_summary("Treated, pre-adoption", &pre),
        treated_post: group_summary("Treated, post-adoption", &post),
        control: group_summary("Control, all months", &control),
        n_months: months.len(),
        n_rows: rows.len(),
    })
}

fn group_summary(name: &str, rows: &[&PanelRow]) -> GroupSummary {
    let developers: BTreeSet<u64> = rows.iter().map(|r| r.developer_id).collect();
    let outcomes = Outcome::ALL
        .into_iter()
        .map(|o| {
            let values: Vec<f64> = rows.iter().map(|r| r.outcome(o)).collect();
            (o, moments(&values))
        })
        .collect();
    GroupSummary {
        name: name.to_string(),
        n_developers: developers.len(),
        n_rows: rows.len(),
        outcomes,
    }
}

fn moments(values: &[f64]) -> Moments {
    let n = values.len();
    if n == 0 {
        return Moments {
            mean: f64::NAN,
            sd: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Moments { mean, sd }
}

impl SummaryTable {
    /// Plain-text rendering with standard deviations beneath the means.
    pub fn render(&self) -> String {
        let groups = [&self.treated_pre, &self.treated_post, &self.control];
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28}{:>16}{:>16}{:>16}{:>16}\n",
            "Variable", "Treated pre", "Treated post", "Control", "Post - Control"
        ));
        for o in Outcome::MAIN {
            let m: Vec<Moments> = groups.iter().map(|g| g.outcomes[&o]).collect();
            out.push_str(&format!(
                "{:<28}{:>16.2}{:>16.2}{:>16.2}{:>16.2}\n",
                o.label(),
                m[0].mean,
                m[1].mean,
                m[2].mean,
                m[1].mean - m[2].mean
            ));
            out.push_str(&format!(
                "{:<28}{:>16}{:>16}{:>16}\n",
                "",
                format!("({:.2})", m[0].sd),
                format!("({:.2})", m[1].sd),
                format!("({:.2})", m[2].sd)
            ));
        }
        out.push_str(&format!(
            "{:<28}{:>32}{:>16}\n",
            "Developers",
            self.treated_post
                .n_developers
                .max(self.treated_pre.n_developers),
            self.control.n_developers
        ));
        out.push_str(&format!("{:<28}{:>32}\n", "Months", self.n_months));
        out.push_str(&format!(
            "{:<28}{:>32}\n",
            "Observations (panel rows)", self.n_rows
        ));
        out
    }
}

/// Wide, estimation-ready panel: outcomes stored as `f64` per developer and
/// month, plus optional time-invariant covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomePanel {
    developer_ids: Vec<u64>,
    first_treat: Vec<u32>,
    n_periods: u32,
    values: BTreeMap<Outcome, Vec<f64>>,
    covariates: BTreeMap<String, Vec<f64>>,
}

impl OutcomePanel {
    pub fn new(developer_ids: Vec<u64>, first_treat: Vec<u32>, n_periods: u32) -> Result<Self> {
        if developer_ids.len() != first_treat.len() {
            return Err(Error::validation(
                "first_treat",
                "length differs from developer ids",
            ));
        }
        if n_periods == 0 {
            return Err(Error::validation("n_periods", "must be at least 1"));
        }
        Ok(OutcomePanel {
            developer_ids,
            first_treat,
            n_periods,
            values: BTreeMap::new(),
            covariates: BTreeMap::new(),
        })
    }

    /// Build from balanced panel rows sorted by (developer, month).
    pub fn from_rows(rows: &[PanelRow], include_sectors: bool) -> Result<Self> {
        let n_periods = rows.iter().map(|r| r.month).max().unwrap_or(0);
        let mut ids = Vec::new();
        let mut first_treat = Vec::new();
        for chunk in rows.chunks(n_periods.max(1) as usize) {
            let id = chunk[0].developer_id;
            if chunk.len() != n_periods as usize
                || chunk
                    .iter()
                    .enumerate()
                    .any(|(t, r)| r.developer_id != id || r.month != t as u32 + 1)
            {
                return Err(Error::validation(
                    "panel",
                    format!("rows for developer {id} are not a balanced 1..={n_periods} sequence"),
                ));
            }
            ids.push(id);
            first_treat.push(chunk[0].first_treat);
        }
        let mut panel = OutcomePanel::new(ids, first_treat, n_periods)?;
        let outcomes: &[Outcome] = if include_sectors {
            &Outcome::ALL
        } else {
            &Outcome::MAIN
        };
        for &o in outcomes {
            panel
                .values
                .insert(o, rows.iter().map(|r| r.outcome(o)).collect());
        }
        Ok(panel)
    }

    pub fn n_units(&self) -> usize {
        self.developer_ids.len()
    }

    pub fn n_periods(&self) -> u32 {
        self.n_periods
    }

    pub fn developer_ids(&self) -> &[u64] {
        &self.developer_ids
    }

    pub fn first_treat(&self) -> &[u32] {
        &self.first_treat
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.values.keys().copied()
    }

    pub fn has_outcome(&self, outcome: Outcome) -> bool {
        self.values.contains_key(&outcome)
    }

    /// Install an outcome given as a row-major `n_units × n_periods` array.
    pub fn set_outcome(&mut self, outcome: Outcome, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_units() * self.n_periods as usize {
            return Err(Error::validation(
                outcome.column(),
                "wrong number of values",
            ));
        }
        self.values.insert(outcome, values);
        Ok(())
    }

    pub fn outcome_values(&self, outcome: Outcome) -> Result<&[f64]> {
        self.values
            .get(&outcome)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation("outcome", format!("panel has no `{outcome}` column")))
    }

    pub(crate) fn outcome_values_mut(&mut self, outcome: Outcome) -> Result<&mut Vec<f64>> {
        self.values
            .get_mut(&outcome)
            .ok_or_else(|| Error::validation("outcome", format!("panel has no `{outcome}` column")))
    }

    /// Outcome path of unit `i` over months `1..=n_periods`.
    pub fn series(&self, outcome: Outcome, unit: usize) -> Result<&[f64]> {
        let t = self.n_periods as usize;
        Ok(&self.outcome_values(outcome)?[unit * t..(unit + 1) * t])
    }

    pub fn set_covariate(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_units() {
            return Err(Error::validation(
                name,
                "covariate length differs from unit count",
            ));
        }
        self.covariates.insert(name.to_string(), values);
        Ok(())
    }

    pub fn covariate(&self, name: &str) -> Result<&[f64]> {
        self.covariates.get(name).map(Vec::as_slice).ok_or_else(|| {
            Error::validation("covariates", format!("panel has no covariate `{name}`"))
        })
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.keys().map(String::as_str)
    }

    /// Keep only the units for which `keep` returns true.
    pub fn retain_units(&self, keep: impl Fn(usize) -> bool) -> OutcomePanel {
        let t = self.n_periods as usize;
        let kept: Vec<usize> = (0..self.n_units()).filter(|&i| keep(i)).collect();
        let values = self
            .values
            .iter()
            .map(|(&o, v)| {
                (
                    o,
                    kept.iter()
                        .flat_map(|&i| v[i * t..(i + 1) * t].iter().copied())
                        .collect(),
                )
            })
            .collect();
        let covariates = self
            .covariates
            .iter()
            .map(|(name, v)| (name.clone(), kept.iter().map(|&i| v[i]).collect()))
            .collect();
        OutcomePanel {
            developer_ids: kept.iter().map(|&i| self.developer_ids[i]).collect(),
            first_treat: kept.iter().map(|&i| self.first_treat[i]).collect(),
            n_periods: self.n_periods,
            values,
            covariates,
        }
    }
}
