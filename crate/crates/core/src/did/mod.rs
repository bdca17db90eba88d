//! Group-time average treatment effects for staggered adoption.
//!
//! Each ATT(g, t) is a 2×2 comparison of outcome changes `Y_t − Y_b` between
//! the cohort first treated at `g` and a comparison set of units not (yet)
//! treated by the comparison window. The doubly robust estimator reweights
//! comparison units by their propensity odds and subtracts an outcome
//! regression; with no covariates it collapses to a difference of means.
//!
//! Every cell carries a per-developer influence column ψ scaled so that
//! `estimate − ATT ≈ mean(ψ)` over all `N` developers of the panel. Columns of
//! developers outside a cell are zero.

pub mod nuisance;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Outcome, OutcomePanel};

pub use nuisance::{fit_outcome_regression, fit_propensity, OutcomeFit, PropensityFit};

/// Fitted propensities outside `[ε, 1 − ε]` flag the cell.
pub const OVERLAP_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlGroup {
    NotYetTreated,
    NeverTreated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasePeriod {
    Varying,
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimation {
    Unconditional,
    DoublyRobust,
}

macro_rules! kebab_enum {
    ($ty:ty, $field:literal, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::validation($field, format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

kebab_enum!(ControlGroup, "control", NotYetTreated => "not-yet-treated", NeverTreated => "never-treated");
kebab_enum!(BasePeriod, "base-period", Varying => "varying", Universal => "universal");
kebab_enum!(Estimation, "estimation", Unconditional => "unconditional", DoublyRobust => "dr");

/// Estimator options. The default is one month of anticipation,
/// not-yet-treated comparisons, varying base periods and doubly robust
/// estimation without covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub anticipation: u32,
    pub control_group: ControlGroup,
    pub base_period: BasePeriod,
    pub estimation: Estimation,
    pub covariates: Vec<String>,
}

impl Default for Design {
    fn default() -> Self {
        Design {
            anticipation: 1,
            control_group: ControlGroup::NotYetTreated,
            base_period: BasePeriod::Varying,
            estimation: Estimation::DoublyRobust,
            covariates: Vec::new(),
        }
    }
}

impl Design {
    /// Base period for cell (g, t); may fall outside the window.
    pub fn base_period_for(&self, g: u32, t: u32) -> i64 {
        let (g, t, delta) = (g as i64, t as i64, self.anticipation as i64);
        let universal = g - delta - 1;
        match self.base_period {
            BasePeriod::Varying if t < g - delta => t - 1,
            _ => universal,
        }
    }

    /// Whether unit with first-treatment `first_treat` (0 = never) is a
    /// comparison unit for cohort `g` at calendar time `t` with base `b`.
    pub fn is_control(&self, first_treat: u32, g: u32, t: u32, b: u32) -> bool {
        if first_treat == g {
            return false;
        }
        match self.control_group {
            ControlGroup::NeverTreated => first_treat == 0,
            ControlGroup::NotYetTreated => {
                first_treat == 0 || first_treat as u64 > t.max(b) as u64 + self.anticipation as u64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellStatus {
    Identified,
    /// Empty treated or comparison set, or no base period in the window.
    NotIdentified {
        reason: String,
    },
    /// A fitted propensity fell outside `[ε, 1 − ε]`.
    OverlapViolation {
        reason: String,
    },
    /// A nuisance fit failed (separation, rank deficiency).
    Failed {
        reason: String,
    },
}

impl CellStatus {
    pub fn is_identified(&self) -> bool {
        matches!(self, CellStatus::Identified)
    }
}

/// One group-time cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttGtCell {
    pub g: u32,
    pub t: u32,
    pub base: i64,
    pub estimate: f64,
    pub se: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub status: CellStatus,
}

impl AttGtCell {
    pub fn event_time(&self) -> i64 {
        self.t as i64 - self.g as i64
    }

    pub fn is_post(&self) -> bool {
        self.t >= self.g
    }
}

/// A cell with its influence column over all panel units.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFit {
    pub cell: AttGtCell,
    pub influence: Vec<f64>,
}

/// The full matrix of group-time effects for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttGtResult {
    pub outcome: Outcome,
    pub design: Design,
    pub n_units: usize,
    pub cohort_sizes: BTreeMap<u32, usize>,
    pub cells: Vec<AttGtCell>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub developer_ids: Vec<u64>,
    /// One column per cell, each of length `n_units`.
    #[serde(skip)]
    pub influence: Vec<Vec<f64>>,
}

impl AttGtResult {
    pub fn cell(&self, g: u32, t: u32) -> Option<(&AttGtCell, &[f64])> {
        self.cells
            .iter()
            .position(|c| c.g == g && c.t == t)
            .map(|i| (&self.cells[i], self.influence[i].as_slice()))
    }
}

/// Estimate ATT(g, t) for one cell.
pub fn att_gt(
    panel: &OutcomePanel,
    outcome: Outcome,
    g: u32,
    t: u32,
    design: &Design,
) -> Result<CellFit> {
    let values = panel.outcome_values(outcome)?;
    let n_periods = panel.n_periods();
    if g == 0 || t == 0 || t > n_periods {
        return Err(Error::validation(
            "cell",
            format!("(g={g}, t={t}) outside the panel window"),
        ));
    }
    let n_units = panel.n_units();
    let base = design.base_period_for(g, t);
    let mut cell = AttGtCell {
        g,
        t,
        base,
        estimate: f64::NAN,
        se: f64::NAN,
        n_treated: 0,
        n_control: 0,
        status: CellStatus::Identified,
    };
    let not_identified = |mut cell: AttGtCell, reason: String| {
        cell.status = CellStatus::NotIdentified { reason };
        Ok(CellFit {
            cell,
            influence: vec![0.0; n_units],
        })
    };
    if base < 1 || base > n_periods as i64 || base == t as i64 {
        return not_identified(cell, format!("base period {base} unavailable"));
    }
    let b = base as u32;

    let tp = n_periods as usize;
    let mut members = Vec::new();
    let mut treated = Vec::new();
    let mut delta_y = Vec::new();
    for (i, &ft) in panel.first_treat().iter().enumerate() {
        let is_treated = ft == g;
        if is_treated || design.is_control(ft, g, t, b) {
            members.push(i);
            treated.push(is_treated);
            delta_y.push(values[i * tp + t as usize - 1] - values[i * tp + b as usize - 1]);
        }
    }
    cell.n_treated = treated.iter().filter(|&&d| d).count();
    cell.n_control = members.len() - cell.n_treated;
    if cell.n_treated == 0 {
        return not_identified(cell, "empty treated cohort".into());
    }
    if cell.n_control == 0 {
        return not_identified(cell, "empty comparison set".into());
    }

    let fit = match design.estimation {
        Estimation::Unconditional => Ok(unconditional(&treated, &delta_y)),
        Estimation::DoublyRobust => {
            let covariates = covariate_matrix(panel, &design.covariates, &members)?;
            doubly_robust(&covariates, &design.covariates, &treated, &delta_y)
        }
    };
    let (estimate, sub_influence, overlap) = match fit {
        Ok(v) => v,
        Err(
            e @ (Error::Separation { .. } | Error::RankDeficient { .. } | Error::Validation { .. }),
        ) => {
            cell.status = CellStatus::Failed {
                reason: e.to_string(),
            };
            return Ok(CellFit {
                cell,
                influence: vec![0.0; n_units],
            });
        }
        Err(e) => return Err(e),
    };

    // Rescale from the cell subsample to the whole panel.
    let scale = n_units as f64 / members.len() as f64;
    let mut influence = vec![0.0; n_units];
    for (k, &i) in members.iter().enumerate() {
        influence[i] = scale * sub_influence[k];
    }
    let n = n_units as f64;
    cell.estimate = estimate;
    cell.se = (influence.iter().map(|v| v * v).sum::<f64>()).sqrt() / n;
    if let Some(reason) = overlap {
        cell.status = CellStatus::OverlapViolation { reason };
    }
    Ok(CellFit { cell, influence })
}

type SubsampleFit = (f64, Vec<f64>, Option<String>);

/// Difference of mean changes with its two-sample influence function.
fn unconditional(treated: &[bool], delta_y: &[f64]) -> SubsampleFit {
    let n = delta_y.len() as f64;
    let (mut sum_t, mut sum_c, mut n_t) = (0.0, 0.0, 0usize);
    for (&d, &y) in treated.iter().zip(delta_y) {
        if d {
            sum_t += y;
            n_t += 1;
        } else {
            sum_c += y;
        }
    }
    let n_c = delta_y.len() - n_t;
    let mean_t = sum_t / n_t as f64;
    let mean_c = sum_c / n_c as f64;
    let share_t = n_t as f64 / n;
    let share_c = n_c as f64 / n;
    let influence = treated
        .iter()
        .zip(delta_y)
        .map(|(&d, &y)| {
            if d {
                (y - mean_t) / share_t
            } else {
                -(y - mean_c) / share_c
            }
        })
        .collect();
    (mean_t - mean_c, influence, None)
}

fn covariate_matrix(
    panel: &OutcomePanel,
    names: &[String],
    members: &[usize],
) -> Result<DMatrix<f64>> {
    let mut x = DMatrix::<f64>::zeros(members.len(), names.len());
    for (j, name) in names.iter().enumerate() {
        let col = panel.covariate(name)?;
        for (r, &i) in members.iter().enumerate() {
            x[(r, j)] = col[i];
        }
    }
    Ok(x)
}

/// Doubly robust ATT for one 2×2 block with its influence function,
/// including the estimation effect of both nuisance fits.
///
/// With `D` the treated flag, `p̂` the logistic propensity, `m̂` the control
/// outcome regression and `r = ΔY − m̂(X)`:
///
/// ```text
/// w₁ = D,  w₀ = p̂(1−D)/(1−p̂)
/// η₁ = E[w₁ r]/E[w₁],  η₀ = E[w₀ r]/E[w₀],  ATT = η₁ − η₀
/// ψ  = [w₁(r − η₁) − l_ols·E[w₁X]] / E[w₁]
///    − [w₀(r − η₀) + l_ps·E[w₀(r − η₀)X] − l_ols·E[w₀X]] / E[w₀]
/// ```
///
/// where `l_ols = (1−D) r X' E[(1−D)XX']⁻¹` and
/// `l_ps = (D − p̂) X' E[p̂(1−p̂)XX']⁻¹` are the linear representations of the
/// two nuisance estimators.
pub fn doubly_robust(
    covariates: &DMatrix<f64>,
    names: &[String],
    treated: &[bool],
    delta_y: &[f64],
) -> Result<SubsampleFit> {
    let n = delta_y.len();
    let nf = n as f64;
    let control: Vec<bool> = treated.iter().map(|&d| !d).collect();
    let ps = fit_propensity(covariates, treated, names)?;
    let reg = fit_outcome_regression(covariates, delta_y, &control)?;
    let x = nuisance::with_intercept(covariates);
    let k = x.ncols();

    let overlap = ps
        .fitted
        .iter()
        .find(|&&p| !(OVERLAP_EPSILON..=1.0 - OVERLAP_EPSILON).contains(&p))
        .map(|p| {
            format!(
                "fitted propensity {p:.3e} outside [{OVERLAP_EPSILON}, {}]",
                1.0 - OVERLAP_EPSILON
            )
        });

    let d: Vec<f64> = treated.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let resid: Vec<f64> = delta_y
        .iter()
        .zip(&reg.fitted)
        .map(|(y, m)| y - m)
        .collect();
    let w1 = d.clone();
    let w0: Vec<f64> = (0..n)
        .map(|i| ps.fitted[i] * (1.0 - d[i]) / (1.0 - ps.fitted[i]))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let mean_w1 = mean(&w1);
    let mean_w0 = mean(&w0);
    let eta1 = (0..n).map(|i| w1[i] * resid[i]).sum::<f64>() / nf / mean_w1;
    let eta0 = (0..n).map(|i| w0[i] * resid[i]).sum::<f64>() / nf / mean_w0;
    let att = eta1 - eta0;

    let weighted_gram = |weights: &dyn Fn(usize) -> f64| -> Result<DMatrix<f64>> {
        let mut g = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let wi = weights(i);
            let row = x.row(i);
            g += wi * row.transpose() * row;
        }
        (g / nf).try_inverse().ok_or(Error::RankDeficient {
            rank: 0,
            columns: k,
        })
    };
    let weighted_mean_x = |weights: &dyn Fn(usize) -> f64| -> DVector<f64> {
        let mut m = DVector::<f64>::zeros(k);
        for i in 0..n {
            m += weights(i) * x.row(i).transpose();
        }
        m / nf
    };

    let ols_inv = weighted_gram(&|i| 1.0 - d[i])?;
    let ps_inv = weighted_gram(&|i| ps.fitted[i] * (1.0 - ps.fitted[i]))?;
    let m1 = weighted_mean_x(&|i| w1[i]);
    let m2 = weighted_mean_x(&|i| w0[i] * (resid[i] - eta0));
    let m3 = weighted_mean_x(&|i| w0[i]);
    // Project the moment vectors once so each unit needs only dot products.
    let ols_m1 = &ols_inv * &m1;
    let ols_m3 = &ols_inv * &m3;
    let ps_m2 = &ps_inv * &m2;

    let influence = (0..n)
        .map(|i| {
            let xi = x.row(i).transpose();
            let ols_lin = (1.0 - d[i]) * resid[i];
            let ps_lin = d[i] - ps.fitted[i];
            let inf_treat = (w1[i] * (resid[i] - eta1) - ols_lin * xi.dot(&ols_m1)) / mean_w1;
            let inf_control = (w0[i] * (resid[i] - eta0) + ps_lin * xi.dot(&ps_m2)
                - ols_lin * xi.dot(&ols_m3))
                / mean_w0;
            inf_treat - inf_control
        })
        .collect();
    Ok((att, influence, overlap))
}

/// Which cells `att_gt_all` enumerates for cohort `g`.
fn cell_plan(g: u32, n_periods: u32, design: &Design) -> Vec<u32> {
    (1..=n_periods)
        .filter(|&t| {
            let b = design.base_period_for(g, t);
            let pre = (t as i64) < g as i64 - design.anticipation as i64;
            match design.base_period {
                // Pre cells exist only where a previous month exists; post
                // cells are always listed so missing bases surface as flags.
                BasePeriod::Varying => !pre || b >= 1,
                BasePeriod::Universal => b != t as i64 && (!pre || b >= 1),
            }
        })
        .collect()
}

/// Estimate every (g, t) cell for every observed cohort, in (g, t) order.
pub fn att_gt_all(panel: &OutcomePanel, outcome: Outcome, design: &Design) -> Result<AttGtResult> {
    panel.outcome_values(outcome)?;
    for name in &design.covariates {
        panel.covariate(name)?;
    }
    let mut cohort_sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &ft in panel.first_treat() {
        if ft > 0 {
            *cohort_sizes.entry(ft).or_default() += 1;
        }
    }
    let plan: Vec<(u32, u32)> = cohort_sizes
        .keys()
        .flat_map(|&g| {
            cell_plan(g, panel.n_periods(), design)
                .into_iter()
                .map(move |t| (g, t))
        })
        .collect();
    let fits: Vec<CellFit> = plan
        .par_iter()
        .map(|&(g, t)| att_gt(panel, outcome, g, t, design))
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(fits.len());
    let mut influence = Vec::with_capacity(fits.len());
    let mut warnings = Vec::new();
    for fit in fits {
        match &fit.cell.status {
            CellStatus::Identified => {}
            CellStatus::NotIdentified { reason }
            | CellStatus::OverlapViolation { reason }
            | CellStatus::Failed { reason } => {
                warnings.push(format!("(g={}, t={}): {reason}", fit.cell.g, fit.cell.t));
            }
        }
        cells.push(fit.cell);
        influence.push(fit.influence);
    }
    Ok(AttGtResult {
        outcome,
        design: design.clone(),
        n_units: panel.n_units(),
        cohort_sizes,
        cells,
        warnings,
        developer_ids: panel.developer_ids().to_vec(),
        influence,
    })
}
