//! The aggregate JSON document and the comparison tables rendered from it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregateEstimate, BootstrapSettings, EventTimeEstimate, PretrendTest};
use crate::did::Design;
use crate::error::{Error, Result};
use crate::panel::Outcome;
use crate::pipeline::{OutcomeEstimate, SampleRestrictions};

pub const SCHEMA_VERSION: u32 = 1;

/// Significance threshold on |estimate / SE| for the star.
pub const STAR_THRESHOLD: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub outcome: Outcome,
    pub simple_att: AggregateEstimate,
    pub event_study: Vec<EventTimeEstimate>,
    pub omitted_event_times: Vec<i64>,
    pub uniform_critical_value: f64,
    pub pretrend: Option<PretrendTest>,
    pub n_cells: usize,
    pub n_identified: usize,
    pub warnings: Vec<String>,
}

impl OutcomeSummary {
    pub fn from_estimate(est: &OutcomeEstimate) -> Self {
        OutcomeSummary {
            outcome: est.attgt.outcome,
            simple_att: est.simple.clone(),
            event_study: est.event_study.estimates.clone(),
            omitted_event_times: est.event_study.omitted.clone(),
            uniform_critical_value: est.event_study.critical_value,
            pretrend: est.event_study.pretrend.clone(),
            n_cells: est.attgt.cells.len(),
            n_identified: est
                .attgt
                .cells
                .iter()
                .filter(|c| c.status.is_identified())
                .count(),
            warnings: est.attgt.warnings.clone(),
        }
    }

    fn at(&self, e: i64) -> Option<&EventTimeEstimate> {
        self.event_study.iter().find(|x| x.e == e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub software_version: String,
    /// Column heading when several reports are compared.
    pub label: String,
    pub seed: u64,
    pub design: Design,
    pub bootstrap: BootstrapSettings,
    pub restrictions: SampleRestrictions,
    pub n_developers: usize,
    pub n_periods: u32,
    pub outcomes: Vec<OutcomeSummary>,
}

impl AggregateReport {
    /// Parse a report and reject other schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(Error::Schema(format!(
                "expected schema_version {SCHEMA_VERSION}, found {}",
                version.map_or("none".to_string(), |v| v.to_string())
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// `1.000*` style estimate.
pub fn format_estimate(att: f64, se: f64) -> String {
    let star = if se > 0.0 && (att / se).abs() > STAR_THRESHOLD {
        "*"
    } else {
        ""
    };
    format!("{att:.3}{star}")
}

pub fn format_se(se: f64) -> String {
    format!("({se:.3})")
}

fn pair(est: Option<(f64, f64)>) -> (String, String) {
    match est {
        Some((att, se)) => (format_estimate(att, se), format_se(se)),
        None => ("-".into(), String::new()),
    }
}

fn render_grid(header: &[String], rows: &[(String, Vec<(String, String)>)]) -> String {
    let label_w = rows.iter().map(|r| r.0.len()).chain([7]).max().unwrap_or(7);
    let col_w = header
        .iter()
        .map(String::len)
        .chain(
            rows.iter()
                .flat_map(|r| r.1.iter().map(|c| c.0.len().max(c.1.len()))),
        )
        .max()
        .unwrap_or(8)
        + 2;
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "Outcome");
    for h in header {
        let _ = write!(out, "{h:>col_w$}");
    }
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "{label:<label_w$}");
        for c in cells {
            let _ = write!(out, "{:>col_w$}", c.0);
        }
        out.push('\n');
        let _ = write!(out, "{:<label_w$}", "");
        for c in cells {
            let _ = write!(out, "{:>col_w$}", c.1);
        }
        out.push('\n');
    }
    out
}

/// Outcomes by ATT(0), ATT(1), ATT(2) and the simple ATT, SEs beneath.
pub fn render_single(report: &AggregateReport) -> String {
    let header: Vec<String> = ["ATT(0)", "ATT(1)", "ATT(2)", "Simple ATT"]
        .map(String::from)
        .to_vec();
    let rows: Vec<(String, Vec<(String, String)>)> = report
        .outcomes
        .iter()
        .map(|o| {
            let mut cells: Vec<(String, String)> = (0..3)
                .map(|e| pair(o.at(e).map(|x| (x.att, x.se))))
                .collect();
            cells.push(pair(Some((o.simple_att.att, o.simple_att.se))));
            (o.outcome.label().to_string(), cells)
        })
        .collect();
    let mut out = render_grid(&header, &rows);
    out.push_str("* |t| > 1.96. Bootstrap standard errors in parentheses.\n");
    out
}

/// ATT(0) for each report side by side, one column per report.
pub fn render_comparison(reports: &[AggregateReport]) -> String {
    let header: Vec<String> = reports.iter().map(|r| r.label.clone()).collect();
    let mut outcomes: Vec<Outcome> = Vec::new();
    for r in reports {
        for o in &r.outcomes {
            if !outcomes.contains(&o.outcome) {
                outcomes.push(o.outcome);
            }
        }
    }
    let rows: Vec<(String, Vec<(String, String)>)> = outcomes
        .iter()
        .map(|&oc| {
            let cells = reports
                .iter()
                .map(|r| {
                    pair(
                        r.outcomes
                            .iter()
                            .find(|o| o.outcome == oc)
                            .and_then(|o| o.at(0))
                            .map(|x| (x.att, x.se)),
                    )
                })
                .collect();
            (oc.label().to_string(), cells)
        })
        .collect();
    let mut out = render_grid(&header, &rows);
    out.push_str("ATT at event time 0. * |t| > 1.96. Bootstrap standard errors in parentheses.\n");
    out
}

/// One report renders the full layout; several render the ATT(0) comparison.
pub fn render(reports: &[AggregateReport]) -> Result<String> {
    match reports {
        [] => Err(Error::validation("report", "at least one input required")),
        [one] => Ok(render_single(one)),
        many => Ok(render_comparison(many)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn est(e: i64, att: f64, se: f64) -> EventTimeEstimate {
        EventTimeEstimate {
            e,
            att,
            se,
            se_sd: se,
            se_analytic: se,
            unif_lo: att - 2.5 * se,
            unif_hi: att + 2.5 * se,
            n_cohorts: 1,
            weights: BTreeMap::new(),
        }
    }

    fn report(label: &str, att0: f64) -> AggregateReport {
        AggregateReport {
            schema_version: SCHEMA_VERSION,
            software_version: crate::VERSION.into(),
            label: label.into(),
            seed: 1,
            design: Design::default(),
            bootstrap: BootstrapSettings::default(),
            restrictions: SampleRestrictions::default(),
            n_developers: 10,
            n_periods: 6,
            outcomes: vec![OutcomeSummary {
                outcome: Outcome::NLanguages,
                simple_att: AggregateEstimate {
                    att: 0.05,
                    se: 0.1,
                    se_sd: 0.1,
                    se_analytic: 0.1,
                    ci_lo: 0.0,
                    ci_hi: 0.0,
                },
                event_study: vec![est(0, att0, 0.1), est(1, 0.2, 0.1)],
                omitted_event_times: vec![],
                uniform_critical_value: 2.5,
                pretrend: None,
                n_cells: 2,
                n_identified: 2,
                warnings: vec![],
            }],
        }
    }

    #[test]
    fn star_formatting() {
        assert_eq!(format_estimate(1.0, 0.1), "1.000*");
        assert_eq!(format_se(0.1), "(0.100)");
        assert_eq!(format_estimate(0.15, 0.1), "0.150");
        assert_eq!(format_estimate(-0.5, 0.1), "-0.500*");
    }

    #[test]
    fn single_table_layout() {
        let text = render(&[report("main", 1.0)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("ATT(0)") && lines[0].contains("Simple ATT"));
        assert!(lines[1].contains("1.000*"));
        assert!(lines[2].contains("(0.100)"));
        assert!(lines[1].contains("0.050") && !lines[1].contains("0.050*"));
    }

    #[test]
    fn comparison_has_one_column_per_report() {
        let reps = [
            report("main", 1.0),
            report("50% active", 0.8),
            report("6 pre-months", 0.9),
        ];
        let text = render(&reps).unwrap();
        let header = text.lines().next().unwrap();
        for label in ["main", "50% active", "6 pre-months"] {
            assert!(header.contains(label));
        }
        assert!(text.contains("0.800*"));
    }

    #[test]
    fn schema_version_checked() {
        let mut r = report("x", 1.0);
        let ok = serde_json::to_string(&r).unwrap();
        assert_eq!(AggregateReport::from_json(&ok).unwrap(), r);
        r.schema_version = 2;
        let bad = serde_json::to_string(&r).unwrap();
        assert!(matches!(
            AggregateReport::from_json(&bad),
            Err(Error::Schema(_))
        ));
    }
}
