//! Line-oriented `key = value` configuration for simulations.
//!
//! Blank lines and text after `#` are ignored. Keys are the field names of
//! [`SimPanelConfig`] and [`ModelParams`](crate::learning::ModelParams).
//! Cohorts are given as `cohort.<month> = <count>` plus `never_treated`; when
//! no cohort key appears the default late-adoption shape is used.
//!
//! ```text
//! n_developers = 10
//! n_periods = 6
//! seed = 7
//! ai_signal_count = 2     # per month
//! cohort.4 = 5
//! cohort.5 = 3
//! never_treated = 2
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::panel::Outcome;
use crate::sim::{AdoptionSchedule, SimPanelConfig};

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::validation(key, format!("cannot parse `{value}`: {e}")))
}

/// Parse configuration text into a validated config.
pub fn parse_config(text: &str) -> Result<SimPanelConfig> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::validation(
                "config",
                format!("line {}: expected `key = value`", lineno + 1),
            ));
        };
        let key = key.trim().to_string();
        if entries
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(Error::validation(
                &key,
                format!("line {}: duplicate key", lineno + 1),
            ));
        }
    }

    let mut config = SimPanelConfig::default();
    let mut cohorts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut never_treated: Option<usize> = None;
    for (key, value) in &entries {
        let k = key.as_str();
        let v = value.as_str();
        let m = &mut config.model;
        match k {
            "n_developers" => config.n_developers = parse(k, v)?,
            "n_periods" => config.n_periods = parse(k, v)?,
            "seed" => config.seed = parse(k, v)?,
            "specialist_share" => config.specialist_share = parse(k, v)?,
            "max_generalist_languages" => config.max_generalist_languages = parse(k, v)?,
            "known_sectors" => config.known_sectors = parse(k, v)?,
            "injected_effect" => config.injected_effect = parse(k, v)?,
            "injected_outcome" => config.injected_outcome = parse::<Outcome>(k, v)?,
            "never_treated" => never_treated = Some(parse(k, v)?),
            "n_languages" => m.n_languages = parse(k, v)?,
            "n_sectors" => m.n_sectors = parse(k, v)?,
            "prior_precision_known" => m.prior_precision_known = parse(k, v)?,
            "prior_precision_unknown" => m.prior_precision_unknown = parse(k, v)?,
            "signal_noise_var" => m.signal_noise_var = parse(k, v)?,
            "risk_aversion" => m.risk_aversion = parse(k, v)?,
            "ai_signal_count" => m.ai_signal_count = parse(k, v)?,
            "ai_signal_var" => m.ai_signal_var = parse(k, v)?,
            "entry_threshold" => m.entry_threshold = parse(k, v)?,
            "entry_cost" => m.entry_cost = parse(k, v)?,
            "repo_base_cost" => m.repo_base_cost = parse(k, v)?,
            "repo_cap" => m.repo_cap = parse(k, v)?,
            "commit_rate" => m.commit_rate = parse(k, v)?,
            "mean_prior_loc" => m.mean_prior_loc = parse(k, v)?,
            "mean_prior_scale" => m.mean_prior_scale = parse(k, v)?,
            "ai_updates_means" => m.ai_updates_means = parse(k, v)?,
            _ => match k.strip_prefix("cohort.") {
                Some(g) => {
                    let g: u32 = parse(k, g)?;
                    cohorts.insert(g, parse(k, v)?);
                }
                None => return Err(Error::validation(k, "unknown configuration key")),
            },
        }
    }
    config.schedule = if cohorts.is_empty() && never_treated.is_none() {
        AdoptionSchedule::default_shape(config.n_developers, config.n_periods)
    } else {
        AdoptionSchedule {
            cohorts,
            never_treated: never_treated.unwrap_or(0),
        }
    };
    config.validate()?;
    Ok(config)
}

/// Render a config with every key spelled out; parsing the result gives
/// back an identical config.
pub fn to_config_text(config: &SimPanelConfig) -> String {
    let m = &config.model;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("n_developers", config.n_developers.to_string());
    kv("n_periods", config.n_periods.to_string());
    kv("seed", config.seed.to_string());
    kv("specialist_share", format!("{:?}", config.specialist_share));
    kv(
        "max_generalist_languages",
        config.max_generalist_languages.to_string(),
    );
    kv("known_sectors", config.known_sectors.to_string());
    kv("injected_effect", format!("{:?}", config.injected_effect));
    kv("injected_outcome", config.injected_outcome.to_string());
    kv("n_languages", m.n_languages.to_string());
    kv("n_sectors", m.n_sectors.to_string());
    kv(
        "prior_precision_known",
        format!("{:?}", m.prior_precision_known),
    );
    kv(
        "prior_precision_unknown",
        format!("{:?}", m.prior_precision_unknown),
    );
    kv("signal_noise_var", format!("{:?}", m.signal_noise_var));
    kv("risk_aversion", format!("{:?}", m.risk_aversion));
    kv("ai_signal_count", format!("{:?}", m.ai_signal_count));
    kv("ai_signal_var", format!("{:?}", m.ai_signal_var));
    kv("entry_threshold", format!("{:?}", m.entry_threshold));
    kv("entry_cost", format!("{:?}", m.entry_cost));
    kv("repo_base_cost", format!("{:?}", m.repo_base_cost));
    kv("repo_cap", m.repo_cap.to_string());
    kv("commit_rate", format!("{:?}", m.commit_rate));
    kv("mean_prior_loc", format!("{:?}", m.mean_prior_loc));
    kv("mean_prior_scale", format!("{:?}", m.mean_prior_scale));
    kv("ai_updates_means", m.ai_updates_means.to_string());
    for (g, n) in &config.schedule.cohorts {
        kv(&format!("cohort.{g}"), n.to_string());
    }
    kv("never_treated", config.schedule.never_treated.to_string());
    out
}
