//! Event-study and simple aggregation of group-time effects, with
//! multiplier-bootstrap standard errors, uniform bands and a pre-trend test.
//!
//! Aggregation weights are cohort shares treated as fixed constants, so an
//! aggregate's influence column is the same weighted sum of cell columns.
//! Only cells with status [`CellStatus::Identified`] enter any aggregate.

pub mod bootstrap;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::did::{AttGtResult, CellStatus};
use crate::error::{Error, Result};
use crate::panel::Outcome;

pub use bootstrap::{
    multiplier_bootstrap, quantile_sorted, BootstrapResult, BootstrapSettings, WeightLaw, Z_975,
};

/// Event-time window of the joint pre-trend test.
pub const PRETREND_WINDOW: (i64, i64) = (-6, -2);

/// One weighted combination of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    /// `(index into AttGtResult::cells, weight)`; weights sum to one.
    pub terms: Vec<(usize, f64)>,
    pub estimate: f64,
    pub influence: Vec<f64>,
}

fn combine(attgt: &AttGtResult, terms: Vec<(usize, f64)>) -> Combination {
    let mut influence = vec![0.0; attgt.n_units];
    let mut estimate = 0.0;
    for &(k, w) in &terms {
        estimate += w * attgt.cells[k].estimate;
        for (acc, v) in influence.iter_mut().zip(&attgt.influence[k]) {
            *acc += w * v;
        }
    }
    Combination {
        terms,
        estimate,
        influence,
    }
}

fn cohort_weighted(attgt: &AttGtResult, cells: Vec<usize>) -> Option<Combination> {
    let total: usize = cells
        .iter()
        .map(|&k| attgt.cohort_sizes[&attgt.cells[k].g])
        .sum();
    if total == 0 {
        return None;
    }
    let terms = cells
        .into_iter()
        .map(|k| {
            (
                k,
                attgt.cohort_sizes[&attgt.cells[k].g] as f64 / total as f64,
            )
        })
        .collect();
    Some(combine(attgt, terms))
}

/// ATT(e) as a cohort-size-weighted mean of the identified cells with
/// `t − g = e`; `None` when no cohort is observed at `e`.
pub fn event_time_combination(attgt: &AttGtResult, e: i64) -> Option<Combination> {
    let cells: Vec<usize> = (0..attgt.cells.len())
        .filter(|&k| {
            attgt.cells[k].status == CellStatus::Identified && attgt.cells[k].event_time() == e
        })
        .collect();
    if cells.is_empty() {
        return None;
    }
    cohort_weighted(attgt, cells)
}

/// Weighted mean of every identified post cell (t ≥ g), weights ∝ cohort size.
pub fn simple_combination(attgt: &AttGtResult) -> Result<Combination> {
    let cells: Vec<usize> = (0..attgt.cells.len())
        .filter(|&k| attgt.cells[k].status == CellStatus::Identified && attgt.cells[k].is_post())
        .collect();
    if cells.is_empty() {
        return Err(Error::Identification {
            g: attgt.cells.iter().find(|c| c.is_post()).map_or(0, |c| c.g),
            t: attgt.cells.iter().find(|c| c.is_post()).map_or(0, |c| c.t),
            reason: "no identified post-treatment cell".into(),
        });
    }
    cohort_weighted(attgt, cells).ok_or_else(|| Error::domain("empty cohorts in post cells"))
}

fn analytic_se(influence: &[f64]) -> f64 {
    let n = influence.len() as f64;
    influence.iter().map(|v| v * v).sum::<f64>().sqrt() / n
}

/// An aggregate with its inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEstimate {
    pub att: f64,
    /// Bootstrap IQR-based SE.
    pub se: f64,
    /// Bootstrap standard deviation.
    pub se_sd: f64,
    /// sqrt(mean ψ² / n).
    pub se_analytic: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl AggregateEstimate {
    fn new(att: f64, se: f64, se_sd: f64, se_analytic: f64) -> Self {
        AggregateEstimate {
            att,
            se,
            se_sd,
            se_analytic,
            ci_lo: att - Z_975 * se,
            ci_hi: att + Z_975 * se,
        }
    }
}

/// Simple ATT over all identified post cells.
pub fn simple_att(attgt: &AttGtResult, settings: &BootstrapSettings) -> Result<AggregateEstimate> {
    let comb = simple_combination(attgt)?;
    let boot = multiplier_bootstrap(
        std::slice::from_ref(&comb.influence),
        &attgt.developer_ids,
        settings,
    )?;
    Ok(AggregateEstimate::new(
        comb.estimate,
        boot.se[0],
        boot.sd[0],
        analytic_se(&comb.influence),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTimeEstimate {
    pub e: i64,
    pub att: f64,
    pub se: f64,
    pub se_sd: f64,
    pub se_analytic: f64,
    pub unif_lo: f64,
    pub unif_hi: f64,
    pub n_cohorts: usize,
    /// Cohort weights ω_g(e).
    pub weights: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrendTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub n_coefficients: usize,
    pub event_times: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyResult {
    pub outcome: Outcome,
    pub estimates: Vec<EventTimeEstimate>,
    /// Requested event times with no observed cohort.
    pub omitted: Vec<i64>,
    pub critical_value: f64,
    pub pretrend: Option<PretrendTest>,
    /// Bootstrap draws for each entry of `estimates`, draw-major.
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
}

impl EventStudyResult {
    pub fn at(&self, e: i64) -> Option<&EventTimeEstimate> {
        self.estimates.iter().find(|x| x.e == e)
    }
}

/// Aggregate to event times `e_min..=e_max` with a uniform band and the
/// pre-trend test.
pub fn event_study(
    attgt: &AttGtResult,
    e_min: i64,
    e_max: i64,
    settings: &BootstrapSettings,
) -> Result<EventStudyResult> {
    if e_min > e_max {
        return Err(Error::validation("e-min", "must not exceed e-max"));
    }
    let mut combos = Vec::new();
    let mut omitted = Vec::new();
    for e in e_min..=e_max {
        match event_time_combination(attgt, e) {
            Some(c) => combos.push((e, c)),
            None => omitted.push(e),
        }
    }
    let columns: Vec<Vec<f64>> = combos.iter().map(|(_, c)| c.influence.clone()).collect();
    let boot = multiplier_bootstrap(&columns, &attgt.developer_ids, settings)?;
    let crit = boot.critical_value;
    let estimates: Vec<EventTimeEstimate> = combos
        .iter()
        .enumerate()
        .map(|(j, (e, c))| {
            let se = boot.se[j];
            EventTimeEstimate {
                e: *e,
                att: c.estimate,
                se,
                se_sd: boot.sd[j],
                se_analytic: analytic_se(&c.influence),
                unif_lo: c.estimate - crit * se,
                unif_hi: c.estimate + crit * se,
                n_cohorts: c.terms.len(),
                weights: c
                    .terms
                    .iter()
                    .map(|&(k, w)| (attgt.cells[k].g, w))
                    .collect(),
            }
        })
        .collect();
    let mut result = EventStudyResult {
        outcome: attgt.outcome,
        estimates,
        omitted,
        critical_value: crit,
        pretrend: None,
        draws: boot.draws,
    };
    result.pretrend = pretrend_wald(&result)?;
    Ok(result)
}

const PINV_TOLERANCE: f64 = 1e-10;

/// Joint Wald test that ATT(e) = 0 for e in the pre-trend window, using the
/// bootstrap covariance of the draws. A singular covariance is inverted by
/// eigen pseudo-inverse and the degrees of freedom drop to its rank.
/// `None` when no pre-window estimate exists.
pub fn pretrend_wald(es: &EventStudyResult) -> Result<Option<PretrendTest>> {
    let idx: Vec<usize> = (0..es.estimates.len())
        .filter(|&j| (PRETREND_WINDOW.0..=PRETREND_WINDOW.1).contains(&es.estimates[j].e))
        .collect();
    if idx.is_empty() {
        return Ok(None);
    }
    if es.draws.len() < 2 {
        return Err(Error::validation(
            "draws",
            "pre-trend test needs bootstrap draws",
        ));
    }
    let k = idx.len();
    let theta = DVector::from_iterator(k, idx.iter().map(|&j| es.estimates[j].att));
    let b = es.draws.len() as f64;
    let means: Vec<f64> = idx
        .iter()
        .map(|&j| es.draws.iter().map(|d| d[j]).sum::<f64>() / b)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for d in &es.draws {
        for (a, &ja) in idx.iter().enumerate() {
            for (c, &jc) in idx.iter().enumerate() {
                cov[(a, c)] += (d[ja] - means[a]) * (d[jc] - means[c]);
            }
        }
    }
    cov /= b - 1.0;

    let eig = cov.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut statistic = 0.0;
    let mut rank = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if max_ev > 0.0 && lambda > PINV_TOLERANCE * max_ev {
            rank += 1;
            let proj = eig.eigenvectors.column(i).dot(&theta);
            statistic += proj * proj / lambda;
        }
    }
    let p_value = if rank == 0 {
        1.0
    } else {
        ChiSquared::new(rank as f64)
            .map_err(|e| Error::domain(e.to_string()))?
            .sf(statistic)
    };
    Ok(Some(PretrendTest {
        statistic,
        df: rank,
        p_value,
        n_coefficients: k,
        event_times: idx.iter().map(|&j| es.estimates[j].e).collect(),
    }))
}
