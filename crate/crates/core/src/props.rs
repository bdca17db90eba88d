//! Paired AI-on/AI-off experiments on the learning model.
//!
//! Each replicate draws a fresh population and runs every developer twice
//! from the same initial state and the same random substreams, once with AI
//! from its cohort month and once without. Differences are taken
//! developer-month by developer-month over treated post-adoption months, so
//! the Monte Carlo noise of the population draw cancels.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::learning::DeveloperState;
use crate::rng::derive_seed;
use crate::sim::{init_developer, run_trajectory, SimPanelConfig};

/// Event times of the dynamic profile.
pub const PROFILE_EVENT_TIMES: std::ops::RangeInclusive<i64> = 0..=10;
/// One-sided level for the three portfolio propositions.
pub const LEVEL_MAIN: f64 = 0.01;
/// One-sided level for the specialist comparison.
pub const LEVEL_SPECIALIST: f64 = 0.05;
/// Minimum rank correlation for the dynamic profile.
pub const MIN_RANK_CORRELATION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropositionStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionResult {
    pub id: String,
    pub description: String,
    /// Mean paired difference across replicates (for P5, the rank correlation).
    pub estimate: f64,
    pub mc_se: f64,
    pub p_value: Option<f64>,
    pub status: PropositionStatus,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub n_reps: usize,
    pub seed: u64,
    pub propositions: Vec<PropositionResult>,
    /// Mean cumulative-language difference by event time.
    pub profile: Vec<(i64, f64)>,
}

impl PropositionReport {
    pub fn all_pass(&self) -> bool {
        self.propositions
            .iter()
            .all(|p| p.status == PropositionStatus::Pass)
    }

    pub fn any_inconclusive(&self) -> bool {
        self.propositions
            .iter()
            .any(|p| p.status == PropositionStatus::Inconclusive)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Proposition checks ({} paired replications, seed {})",
            self.n_reps, self.seed
        );
        let _ = writeln!(
            out,
            "{:<4} {:<46} {:>10} {:>10} {:>10}  status",
            "id", "claim", "estimate", "mc se", "p"
        );
        for p in &self.propositions {
            let pv = p
                .p_value
                .map_or_else(|| "-".to_string(), |v| format!("{v:.2e}"));
            let status = match p.status {
                PropositionStatus::Pass => "pass",
                PropositionStatus::Fail => "FAIL",
                PropositionStatus::Inconclusive => "inconclusive",
            };
            let _ = writeln!(
                out,
                "{:<4} {:<46} {:>10.4} {:>10.4} {:>10}  {status}",
                p.id, p.description, p.estimate, p.mc_se, pv
            );
        }
        let _ = writeln!(out, "cumulative-language gap by event time:");
        for (e, d) in &self.profile {
            let _ = writeln!(out, "  e={e:>2}  {d:.4}");
        }
        out
    }
}

/// Per-replicate paired differences.
#[derive(Debug, Clone, Default)]
struct Replicate {
    languages: f64,
    sectors: f64,
    repos: f64,
    specialist_gap: Option<f64>,
    /// (sum, count) of cumulative-language differences per profile event time.
    profile: Vec<(f64, usize)>,
    any_difference: bool,
}

struct Snapshot {
    languages: usize,
    sectors: usize,
    repos: usize,
    cumulative: usize,
}

fn snapshot(s: &DeveloperState) -> Snapshot {
    let sectors: std::collections::BTreeSet<usize> = s.repos.iter().map(|r| r.sector).collect();
    Snapshot {
        languages: s.portfolio.len(),
        sectors: sectors.len(),
        repos: s.repos.len(),
        cumulative: s.ever_used.len(),
    }
}

fn trajectory(
    config: &SimPanelConfig,
    seed: u64,
    state: DeveloperState,
    ai: bool,
) -> Result<Vec<Snapshot>> {
    let mut out = Vec::with_capacity(config.n_periods as usize);
    run_trajectory(config, seed, state, ai, |s| {
        out.push(snapshot(s));
        Ok(())
    })?;
    Ok(out)
}

fn replicate(config: &SimPanelConfig, seed: u64) -> Result<Replicate> {
    let n_profile = PROFILE_EVENT_TIMES.clone().count();
    let mut rep = Replicate {
        profile: vec![(0.0, 0); n_profile],
        ..Replicate::default()
    };
    let (mut sums, mut count) = ([0.0f64; 3], 0usize);
    let mut spec = [(0.0f64, 0usize); 2];
    for (id, cohort) in config.developer_plan() {
        let Some(g) = cohort else { continue };
        let state = init_developer(config, seed, id, cohort);
        let specialist = state.is_specialist();
        let on = trajectory(config, seed, state.clone(), true)?;
        let off = trajectory(config, seed, state, false)?;
        for month in g..=config.n_periods {
            let (a, b) = (&on[month as usize - 1], &off[month as usize - 1]);
            let d_lang = a.languages as f64 - b.languages as f64;
            let d_sec = a.sectors as f64 - b.sectors as f64;
            let d_repo = a.repos as f64 - b.repos as f64;
            let d_cum = a.cumulative as f64 - b.cumulative as f64;
            rep.any_difference |= d_lang != 0.0 || d_sec != 0.0 || d_repo != 0.0 || d_cum != 0.0;
            sums[0] += d_lang;
            sums[1] += d_sec;
            sums[2] += d_repo;
            count += 1;
            let slot = &mut spec[usize::from(!specialist)];
            slot.0 += d_lang;
            slot.1 += 1;
            let e = (month - g) as i64;
            if PROFILE_EVENT_TIMES.contains(&e) {
                let p = &mut rep.profile[e as usize];
                p.0 += d_cum;
                p.1 += 1;
            }
        }
    }
    if count > 0 {
        rep.languages = sums[0] / count as f64;
        rep.sectors = sums[1] / count as f64;
        rep.repos = sums[2] / count as f64;
    }
    if spec[0].1 > 0 && spec[1].1 > 0 {
        rep.specialist_gap = Some(spec[0].0 / spec[0].1 as f64 - spec[1].0 / spec[1].1 as f64);
    }
    Ok(rep)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ranks with ties averaged, 1-based.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` if either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn one_sided(
    id: &str,
    description: &str,
    values: &[f64],
    level: f64,
    note: Option<String>,
) -> PropositionResult {
    let (mean, se) = mean_se(values);
    let mut result = PropositionResult {
        id: id.into(),
        description: description.into(),
        estimate: mean,
        mc_se: se,
        p_value: None,
        status: PropositionStatus::Inconclusive,
        note,
    };
    if result.note.is_some() || values.iter().all(|&v| v == 0.0) {
        result.note.get_or_insert_with(|| "arms identical".into());
        return result;
    }
    let p = if se > 0.0 {
        Normal::standard().sf(mean / se)
    } else if mean > 0.0 {
        0.0
    } else {
        1.0
    };
    result.p_value = Some(p);
    result.status = if mean > 0.0 && p < level {
        PropositionStatus::Pass
    } else {
        PropositionStatus::Fail
    };
    result
}

/// Run `n_reps` paired replications and evaluate the five propositions.
///
/// Replicate `r` uses seed `derive_seed(config.seed, r)`; replicates run in
/// parallel and the result does not depend on the thread count.
pub fn check_propositions(config: &SimPanelConfig, n_reps: usize) -> Result<PropositionReport> {
    config.validate()?;
    if n_reps < 2 {
        return Err(Error::validation(
            "reps",
            "at least 2 replications required",
        ));
    }
    let reps: Vec<Replicate> = (0..n_reps)
        .into_par_iter()
        .map(|r| replicate(config, derive_seed(config.seed, r as u64)))
        .collect::<Result<_>>()?;
    let identical = reps.iter().all(|r| !r.any_difference);
    let single_language = (config.model.n_languages == 1).then(|| "only one language".to_string());
    let degenerate = identical.then(|| "arms identical".to_string());
    let lang_note = degenerate.clone().or(single_language.clone());

    let col = |f: fn(&Replicate) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let mut props = vec![
        one_sided(
            "P1",
            "languages in portfolio higher with AI",
            &col(|r| r.languages),
            LEVEL_MAIN,
            lang_note.clone(),
        ),
        one_sided(
            "P2",
            "sectors among repositories higher with AI",
            &col(|r| r.sectors),
            LEVEL_MAIN,
            degenerate.clone(),
        ),
        one_sided(
            "P3",
            "active repositories higher with AI",
            &col(|r| r.repos),
            LEVEL_MAIN,
            degenerate.clone(),
        ),
    ];
    let gaps: Vec<f64> = reps.iter().filter_map(|r| r.specialist_gap).collect();
    let p4_note = lang_note
        .clone()
        .or_else(|| (gaps.len() < 2).then(|| "specialists or generalists missing".to_string()));
    props.push(if gaps.len() < 2 {
        PropositionResult {
            id: "P4".into(),
            description: "language effect larger for specialists".into(),
            estimate: f64::NAN,
            mc_se: f64::NAN,
            p_value: None,
            status: PropositionStatus::Inconclusive,
            note: p4_note,
        }
    } else {
        one_sided(
            "P4",
            "language effect larger for specialists",
            &gaps,
            LEVEL_SPECIALIST,
            p4_note,
        )
    });

    let mut profile = Vec::new();
    for (j, e) in PROFILE_EVENT_TIMES.enumerate() {
        let (sum, n): (f64, usize) = reps
            .iter()
            .map(|r| r.profile[j])
            .fold((0.0, 0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        if n > 0 {
            profile.push((e, sum / n as f64));
        }
    }
    let es: Vec<f64> = profile.iter().map(|p| p.0 as f64).collect();
    let gaps: Vec<f64> = profile.iter().map(|p| p.1).collect();
    let rho = if profile.len() >= 3 {
        spearman(&es, &gaps)
    } else {
        None
    };
    let p5_note = lang_note.or_else(|| {
        rho.is_none()
            .then(|| "profile too short or flat".to_string())
    });
    props.push(PropositionResult {
        id: "P5".into(),
        description: "cumulative-language effect rising in event time".into(),
        estimate: rho.unwrap_or(f64::NAN),
        mc_se: f64::NAN,
        p_value: None,
        status: match (&p5_note, rho) {
            (Some(_), _) | (None, None) => PropositionStatus::Inconclusive,
            (None, Some(r)) if r >= MIN_RANK_CORRELATION => PropositionStatus::Pass,
            _ => PropositionStatus::Fail,
        },
        note: p5_note,
    });
    Ok(PropositionReport {
        n_reps,
        seed: config.seed,
        propositions: props,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn no_ai_is_inconclusive() {
        let mut config = SimPanelConfig::sized(60, 14);
        config.model.ai_signal_count = 0.0;
        let report = check_propositions(&config, 4).unwrap();
        assert!(report
            .propositions
            .iter()
            .all(|p| p.status == PropositionStatus::Inconclusive));
        assert!(report.any_inconclusive());
    }

    #[test]
    fn single_language_is_inconclusive_for_language_claims() {
        let mut config = SimPanelConfig::sized(40, 12);
        config.model.n_languages = 1;
        config.max_generalist_languages = 3;
        let report = check_propositions(&config, 3).unwrap();
        assert_eq!(
            report.propositions[0].status,
            PropositionStatus::Inconclusive
        );
    }

    #[test]
    fn one_rep_rejected() {
        let err = check_propositions(&SimPanelConfig::sized(10, 6), 1).unwrap_err();
        assert!(err.to_string().contains("reps"));
    }

    #[test]
    fn small_run_is_deterministic() {
        let config = SimPanelConfig::sized(80, 16);
        let a = check_propositions(&config, 3).unwrap();
        let b = check_propositions(&config, 3).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
