//! Sample restrictions and the estimate stage shared by the CLI and tests.

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    event_study, simple_att, AggregateEstimate, BootstrapSettings, EventStudyResult,
};
use crate::did::{att_gt_all, AttGtResult, Design};
use crate::error::{Error, Result};
use crate::panel::{Outcome, OutcomePanel};

/// Developer-level filters applied before estimation. Activity means a
/// month with at least one commit; a developer's pre-period is months
/// before adoption, or the whole window if never treated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRestrictions {
    pub require_pre_activity: bool,
    pub min_pre_active_frac: Option<f64>,
    pub min_pre_active_months: Option<u32>,
}

impl Default for SampleRestrictions {
    fn default() -> Self {
        SampleRestrictions {
            require_pre_activity: true,
            min_pre_active_frac: None,
            min_pre_active_months: None,
        }
    }
}

impl SampleRestrictions {
    pub fn none() -> Self {
        SampleRestrictions {
            require_pre_activity: false,
            ..Self::default()
        }
    }

    fn is_active(&self) -> bool {
        self.require_pre_activity
            || self.min_pre_active_frac.is_some()
            || self.min_pre_active_months.is_some()
    }
}

/// Apply `restrictions`, returning the kept panel.
pub fn apply_restrictions(
    panel: &OutcomePanel,
    restrictions: &SampleRestrictions,
) -> Result<OutcomePanel> {
    if !restrictions.is_active() {
        return Ok(panel.clone());
    }
    if let Some(f) = restrictions.min_pre_active_frac {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::validation(
                "min-pre-active-frac",
                "must lie in [0, 1]",
            ));
        }
    }
    let commits = panel.outcome_values(Outcome::NCommits)?;
    let t = panel.n_periods() as usize;
    let keep: Vec<bool> = panel
        .first_treat()
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let pre = if g == 0 { t } else { (g as usize - 1).min(t) };
            let active = commits[i * t..i * t + pre]
                .iter()
                .filter(|&&c| c > 0.0)
                .count();
            let mut ok = true;
            if restrictions.require_pre_activity {
                ok &= active > 0;
            }
            if let Some(m) = restrictions.min_pre_active_months {
                ok &= pre >= m as usize;
            }
            if let Some(f) = restrictions.min_pre_active_frac {
                ok &= pre > 0 && active as f64 >= f * pre as f64;
            }
            ok
        })
        .collect();
    Ok(panel.retain_units(|i| keep[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub design: Design,
    pub bootstrap: BootstrapSettings,
    pub e_min: i64,
    pub e_max: i64,
    pub restrictions: SampleRestrictions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            design: Design::default(),
            bootstrap: BootstrapSettings::default(),
            e_min: -6,
            e_max: 10,
            restrictions: SampleRestrictions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeEstimate {
    pub attgt: AttGtResult,
    pub event_study: EventStudyResult,
    pub simple: AggregateEstimate,
}

/// Group-time effects, event study and simple ATT for one outcome on an
/// already restricted panel. Fails with an identification error naming the
/// first post cell when no post cell can be estimated.
pub fn estimate_outcome(
    panel: &OutcomePanel,
    outcome: Outcome,
    options: &EstimateOptions,
) -> Result<OutcomeEstimate> {
    options.bootstrap.validate()?;
    let attgt = att_gt_all(panel, outcome, &options.design)?;
    if !attgt
        .cells
        .iter()
        .any(|c| c.is_post() && c.status.is_identified())
    {
        let first = attgt.cells.iter().find(|c| c.is_post());
        return Err(Error::Identification {
            g: first.map_or(0, |c| c.g),
            t: first.map_or(0, |c| c.t),
            reason: first.map_or_else(
                || "no treated cohort in the panel".to_string(),
                |c| format!("{:?}", c.status),
            ),
        });
    }
    let es = event_study(&attgt, options.e_min, options.e_max, &options.bootstrap)?;
    let simple = simple_att(&attgt, &options.bootstrap)?;
    Ok(OutcomeEstimate {
        attgt,
        event_study: es,
        simple,
    })
}
