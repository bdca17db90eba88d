//! Cluster multiplier bootstrap over influence columns.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Two-sided 95% normal quantile; the uniform critical value never drops below it.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// IQR of a standard normal, used to turn an interquartile range into a scale.
pub const NORMAL_IQR: f64 = 1.348_979_500_392_163_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightLaw {
    Rademacher,
    Mammen,
}

impl fmt::Display for WeightLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightLaw::Rademacher => "rademacher",
            WeightLaw::Mammen => "mammen",
        })
    }
}

impl FromStr for WeightLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(WeightLaw::Rademacher),
            "mammen" => Ok(WeightLaw::Mammen),
            other => Err(Error::validation(
                "weight-law",
                format!("unknown value `{other}`"),
            )),
        }
    }
}

impl WeightLaw {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            WeightLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            WeightLaw::Mammen => {
                let s5 = 5f64.sqrt();
                let p_low = (s5 + 1.0) / (2.0 * s5);
                if rng.random::<f64>() < p_low {
                    -(s5 - 1.0) / 2.0
                } else {
                    (s5 + 1.0) / 2.0
                }
            }
        }
    }
}

/// Bootstrap options. Clusters are developers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub n_draws: usize,
    pub weight_law: WeightLaw,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            n_draws: 1000,
            weight_law: WeightLaw::Rademacher,
            seed: 2025,
        }
    }
}

impl BootstrapSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 100 {
            return Err(Error::validation(
                "bootstrap-draws",
                "at least 100 draws required",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Robust scale IQR/1.349 per statistic.
    pub se: Vec<f64>,
    /// Plain standard deviation of the draws per statistic.
    pub sd: Vec<f64>,
    /// Uniform 95% critical value over statistics with positive SE.
    pub critical_value: f64,
    /// `draws[b][j]`: perturbed statistic `j` in draw `b`, centred at zero.
    pub draws: Vec<Vec<f64>>,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Perturb each influence column with one multiplier per cluster.
///
/// `influence[j]` is statistic `j`'s column over all rows; `clusters[i]` is
/// row `i`'s cluster label. Draw `b` uses its own random substream, so the
/// output does not depend on thread scheduling.
pub fn multiplier_bootstrap(
    influence: &[Vec<f64>],
    clusters: &[u64],
    settings: &BootstrapSettings,
) -> Result<BootstrapResult> {
    settings.validate()?;
    let n = clusters.len();
    if influence.iter().any(|col| col.len() != n) {
        return Err(Error::validation(
            "influence",
            "column length differs from cluster count",
        ));
    }
    let m = influence.len();
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    for &c in clusters {
        let next = index.len();
        index.entry(c).or_insert(next);
    }
    // Re-number clusters in label order so the multiplier sequence does not
    // depend on row order.
    for (k, v) in index.values_mut().enumerate() {
        *v = k;
    }
    let n_clusters = index.len();
    let mut summed = vec![vec![0.0; m]; n_clusters];
    for (i, c) in clusters.iter().enumerate() {
        let row = &mut summed[index[c]];
        for j in 0..m {
            row[j] += influence[j][i];
        }
    }

    let nf = n as f64;
    let draws: Vec<Vec<f64>> = (0..settings.n_draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(settings.seed, Purpose::Bootstrap, b as u64, 0);
            let mut out = vec![0.0; m];
            for row in &summed {
                let v = settings.weight_law.draw(&mut rng);
                for j in 0..m {
                    out[j] += v * row[j];
                }
            }
            out.iter_mut().for_each(|x| *x /= nf);
            out
        })
        .collect();

    let bf = settings.n_draws as f64;
    let mut se = Vec::with_capacity(m);
    let mut sd = Vec::with_capacity(m);
    for j in 0..m {
        let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let mean = col.iter().sum::<f64>() / bf;
        sd.push((col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (bf - 1.0)).sqrt());
        col.sort_by(f64::total_cmp);
        se.push((quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25)) / NORMAL_IQR);
    }

    let active: Vec<usize> = (0..m).filter(|&j| se[j] > 0.0).collect();
    let critical_value = if active.is_empty() {
        Z_975
    } else {
        let mut maxima: Vec<f64> = draws
            .iter()
            .map(|d| {
                active
                    .iter()
                    .map(|&j| (d[j] / se[j]).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        maxima.sort_by(f64::total_cmp);
        quantile_sorted(&maxima, 0.95).max(Z_975)
    };
    Ok(BootstrapResult {
        se,
        sd,
        critical_value,
        draws,
    })
}
