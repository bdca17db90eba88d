//! CSV and JSON readers and writers for every artifact the pipeline emits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::aggregate::EventStudyResult;
use crate::did::AttGtResult;
use crate::error::{Error, Result};
use crate::panel::{AdoptionMap, Outcome, OutcomePanel};
use crate::sim::CommitRecord;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn flush(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_commits(path: &Path, records: &[CommitRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_commits(path: &Path) -> Result<Vec<CommitRecord>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_adoption(path: &Path, adoption: &AdoptionMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["developer_id", "first_treat"])?;
    for (id, g) in adoption {
        w.write_record([id.to_string(), g.to_string()])?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_adoption(path: &Path) -> Result<AdoptionMap> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut map = AdoptionMap::new();
    for row in r.deserialize::<(u64, u32)>() {
        let (id, g) = row?;
        if map.insert(id, g).is_some() {
            return Err(Error::validation(
                "adoption",
                format!("developer {id} listed twice"),
            ));
        }
    }
    Ok(map)
}

/// `developer_id,login` pairs.
pub fn read_logins(path: &Path) -> Result<BTreeMap<u64, String>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize::<(u64, String)>()
        .map(|row| row.map_err(Error::from))
        .collect()
}

const KEY_COLUMNS: [&str; 3] = ["developer_id", "month", "first_treat"];

/// Write a panel in long form: one row per developer-month, outcome columns
/// in canonical order, then covariates repeated on every month.
pub fn write_panel(path: &Path, panel: &OutcomePanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let outcomes: Vec<Outcome> = Outcome::ALL
        .into_iter()
        .filter(|o| panel.has_outcome(*o))
        .collect();
    let covariates: Vec<&str> = panel.covariate_names().collect();
    let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
    header.extend(outcomes.iter().map(|o| o.column()));
    header.extend(covariates.iter().copied());
    w.write_record(&header)?;
    let t = panel.n_periods() as usize;
    let columns: Vec<&[f64]> = outcomes
        .iter()
        .map(|&o| panel.outcome_values(o))
        .collect::<Result<_>>()?;
    let cov_columns: Vec<&[f64]> = covariates
        .iter()
        .map(|c| panel.covariate(c))
        .collect::<Result<_>>()?;
    for (i, (&id, &g)) in panel
        .developer_ids()
        .iter()
        .zip(panel.first_treat())
        .enumerate()
    {
        for month in 1..=t {
            let mut rec = vec![id.to_string(), month.to_string(), g.to_string()];
            rec.extend(columns.iter().map(|c| c[i * t + month - 1].to_string()));
            rec.extend(cov_columns.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a long-form panel. The six main outcome columns are required,
/// `n_sectors` is optional, and every other column is read as a
/// time-invariant covariate (its first-month value).
pub fn read_panel(path: &Path) -> Result<OutcomePanel> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let headers = r.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let key_idx: Vec<usize> = KEY_COLUMNS
        .iter()
        .map(|c| {
            position(c).ok_or_else(|| Error::validation("panel", format!("missing column `{c}`")))
        })
        .collect::<Result<_>>()?;
    let mut outcome_idx = Vec::new();
    for o in Outcome::ALL {
        match position(o.column()) {
            Some(i) => outcome_idx.push((o, i)),
            None if o == Outcome::NSectors => {}
            None => {
                return Err(Error::validation(
                    "panel",
                    format!("missing column `{}`", o.column()),
                ))
            }
        }
    }
    let known: Vec<usize> = key_idx
        .iter()
        .copied()
        .chain(outcome_idx.iter().map(|p| p.1))
        .collect();
    let cov_idx: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !known.contains(i))
        .map(|(i, h)| (h.to_string(), i))
        .collect();

    let mut rows: Vec<(u64, u32, u32, Vec<f64>, Vec<f64>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |col: &str| {
            Error::validation("panel", format!("row {}: bad value in `{col}`", line + 2))
        };
        let id: u64 = field(key_idx[0]).parse().map_err(|_| bad("developer_id"))?;
        let month: u32 = field(key_idx[1]).parse().map_err(|_| bad("month"))?;
        let g: u32 = field(key_idx[2]).parse().map_err(|_| bad("first_treat"))?;
        let ys = outcome_idx
            .iter()
            .map(|&(o, i)| field(i).parse::<f64>().map_err(|_| bad(o.column())))
            .collect::<Result<Vec<_>>>()?;
        let xs = cov_idx
            .iter()
            .map(|(name, i)| field(*i).parse::<f64>().map_err(|_| bad(name)))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, month, g, ys, xs));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let n_periods = rows.iter().map(|r| r.1).max().unwrap_or(0);
    if n_periods == 0 {
        return Err(Error::validation("panel", "no rows"));
    }
    let t = n_periods as usize;
    let mut ids = Vec::new();
    let mut first_treat = Vec::new();
    for chunk in rows.chunks(t) {
        let id = chunk[0].0;
        if chunk.len() != t
            || chunk
                .iter()
                .enumerate()
                .any(|(m, r)| r.0 != id || r.1 as usize != m + 1 || r.2 != chunk[0].2)
        {
            return Err(Error::validation(
                "panel",
                format!("developer {id} does not have one row per month 1..={n_periods}"),
            ));
        }
        ids.push(id);
        first_treat.push(chunk[0].2);
    }
    let mut panel = OutcomePanel::new(ids, first_treat, n_periods)?;
    for (k, &(o, _)) in outcome_idx.iter().enumerate() {
        panel.set_outcome(o, rows.iter().map(|r| r.3[k]).collect())?;
    }
    for (k, (name, _)) in cov_idx.iter().enumerate() {
        panel.set_covariate(name, rows.iter().step_by(t).map(|r| r.4[k]).collect())?;
    }
    Ok(panel)
}

/// Plot-ready event study: `e,att,se,unif_lo,unif_hi,n_cohorts`.
pub fn write_event_study(path: &Path, es: &EventStudyResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["e", "att", "se", "unif_lo", "unif_hi", "n_cohorts"])?;
    for x in &es.estimates {
        w.write_record([
            x.e.to_string(),
            x.att.to_string(),
            x.se.to_string(),
            x.unif_lo.to_string(),
            x.unif_hi.to_string(),
            x.n_cohorts.to_string(),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Developers × cells influence matrix, one column `g<g>_t<t>` per cell.
pub fn write_influence(path: &Path, attgt: &AttGtResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["developer_id".to_string()];
    header.extend(attgt.cells.iter().map(|c| format!("g{}_t{}", c.g, c.t)));
    w.write_record(&header)?;
    for (i, id) in attgt.developer_ids.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(attgt.influence.iter().map(|col| col[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    flush(w, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
