//! `frontier`: simulate developer panels, build outcome panels, estimate
//! staggered-adoption effects, check model propositions and render reports.
//!
//! Exit codes: 0 ok, 1 proposition failed, 2 validation, 3 I/O,
//! 4 identification failure, 5 inconclusive.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use frontier::aggregate::{BootstrapSettings, WeightLaw};
use frontier::config::{parse_config, to_config_text};
use frontier::did::{BasePeriod, ControlGroup, Design, Estimation};
use frontier::io;
use frontier::panel::{build_outcomes, filter_bot_login, summarize, Outcome, OutcomePanel};
use frontier::pipeline::{
    apply_restrictions, estimate_outcome, EstimateOptions, SampleRestrictions,
};
use frontier::props::check_propositions;
use frontier::report::{render, AggregateReport, OutcomeSummary, SCHEMA_VERSION};
use frontier::sim::{inject_effect, simulate_panel, SimPanelConfig};
use frontier::{Error, Result, VERSION};

#[derive(Parser)]
#[command(
    name = "frontier",
    version,
    about = "Skill-frontier simulation and staggered DiD estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate commit records and adoption dates.
    Simulate(SimulateArgs),
    /// Turn commit records into the developer-month outcome panel.
    BuildPanel(BuildPanelArgs),
    /// Estimate group-time effects, event studies and the simple ATT.
    Estimate(EstimateArgs),
    /// Run paired AI-on/AI-off experiments on the learning model.
    CheckProps(CheckPropsArgs),
    /// Render aggregate JSON files as a comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct Shared {
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct BuildPanelArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    commits: PathBuf,
    #[arg(long)]
    adoption: PathBuf,
    /// Window length; defaults to `n_periods` from the config, else the last month seen.
    #[arg(long)]
    n_periods: Option<u32>,
    /// `developer_id,login` file; developers with bot logins are dropped.
    #[arg(long)]
    logins: Option<PathBuf>,
    /// Additive effect on treated post-adoption cells (overrides config).
    #[arg(long, allow_hyphen_values = true)]
    inject_effect: Option<f64>,
    #[arg(long)]
    inject_outcome: Option<Outcome>,
    /// Omit the `n_sectors` column.
    #[arg(long)]
    no_sectors: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    panel: PathBuf,
    #[arg(
        long,
        conflicts_with = "all_outcomes",
        required_unless_present = "all_outcomes"
    )]
    outcome: Option<String>,
    /// The six headline outcomes.
    #[arg(long)]
    all_outcomes: bool,
    #[arg(long, default_value_t = 1)]
    anticipation: u32,
    #[arg(long, default_value = "not-yet-treated")]
    control: ControlGroup,
    #[arg(long, default_value = "varying")]
    base_period: BasePeriod,
    #[arg(long, default_value = "dr")]
    estimation: Estimation,
    /// Comma-separated covariate columns of the panel.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    bootstrap_draws: usize,
    #[arg(long, default_value = "rademacher")]
    weight_law: WeightLaw,
    #[arg(long, default_value_t = -6, allow_hyphen_values = true)]
    e_min: i64,
    #[arg(long, default_value_t = 10, allow_hyphen_values = true)]
    e_max: i64,
    /// Keep only developers with commits before adoption.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    require_pre_activity: bool,
    #[arg(long)]
    min_pre_active_frac: Option<f64>,
    #[arg(long)]
    min_pre_active_months: Option<u32>,
    /// Column heading in comparison reports.
    #[arg(long, default_value = "main")]
    label: String,
    /// Also write the developers × cells influence matrix.
    #[arg(long)]
    write_influence: bool,
}

#[derive(Args)]
struct CheckPropsArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long, default_value_t = 200)]
    reps: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Aggregate JSON files, one column each.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    version: String,
    seed: Option<u64>,
    settings: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    row_counts: BTreeMap<String, usize>,
    started_unix: u64,
    finished_unix: u64,
}

struct Run {
    manifest: RunManifest,
    out: PathBuf,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Run {
    fn start(subcommand: &str, out: &Path, seed: Option<u64>) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
        Ok(Run {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                version: VERSION.into(),
                seed,
                settings: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                row_counts: BTreeMap::new(),
                started_unix: now(),
                finished_unix: 0,
            },
            out: out.to_path_buf(),
        })
    }

    fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.display().to_string());
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.outputs.push(p.display().to_string());
        p
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finished_unix = now();
        let p = self.out.join("manifest.json");
        io::write_json(&p, &self.manifest)
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimPanelConfig> {
    let mut config = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            parse_config(&text)?
        }
        None => SimPanelConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let config = load_config(args.shared.config.as_deref(), args.shared.seed)?;
    let mut run = Run::start("simulate", &args.shared.out, Some(config.seed))?;
    if let Some(p) = &args.shared.config {
        run.input(p);
    }
    let sim = simulate_panel(&config)?;
    io::write_commits(&run.path("commits.csv"), &sim.records)?;
    io::write_adoption(&run.path("adoption.csv"), &sim.adoption)?;
    io::write_text(&run.path("config.resolved.txt"), &to_config_text(&config))?;
    run.manifest.settings = serde_json::to_value(&config)?;
    run.manifest
        .row_counts
        .insert("commits".into(), sim.records.len());
    run.manifest
        .row_counts
        .insert("developers".into(), sim.adoption.len());
    eprintln!(
        "simulated {} commit records for {} developers",
        sim.records.len(),
        sim.adoption.len()
    );
    run.finish()
}

fn cmd_build_panel(args: BuildPanelArgs) -> Result<()> {
    let config = match &args.shared.config {
        Some(_) => Some(load_config(
            args.shared.config.as_deref(),
            args.shared.seed,
        )?),
        None => None,
    };
    let mut run = Run::start(
        "build-panel",
        &args.shared.out,
        config.as_ref().map(|c| c.seed),
    )?;
    run.input(&args.commits);
    run.input(&args.adoption);
    let mut records = io::read_commits(&args.commits)?;
    let mut adoption = io::read_adoption(&args.adoption)?;
    let mut dropped_bots = 0;
    if let Some(p) = &args.logins {
        run.input(p);
        let logins = io::read_logins(p)?;
        let bots: Vec<u64> = logins
            .iter()
            .filter(|(_, login)| filter_bot_login(login))
            .map(|(&id, _)| id)
            .collect();
        dropped_bots = bots.len();
        records.retain(|r| !bots.contains(&r.developer_id));
        adoption.retain(|id, _| !bots.contains(id));
    }
    let n_periods = args
        .n_periods
        .or(config.as_ref().map(|c| c.n_periods))
        .or_else(|| records.iter().map(|r| r.month).max())
        .ok_or_else(|| Error::Validation {
            field: "n-periods".into(),
            message: "cannot infer the window from an empty record set".into(),
        })?;
    let build = build_outcomes(&records, &adoption, n_periods)?;
    let mut panel = OutcomePanel::from_rows(&build.rows, !args.no_sectors)?;
    let effect = args
        .inject_effect
        .or(config.as_ref().map(|c| c.injected_effect))
        .unwrap_or(0.0);
    let outcome = args
        .inject_outcome
        .or(config.as_ref().map(|c| c.injected_outcome))
        .unwrap_or(Outcome::NLanguages);
    inject_effect(&mut panel, effect, outcome)?;
    io::write_panel(&run.path("panel.csv"), &panel)?;
    let summary = summarize(&build.rows)?;
    io::write_text(&run.path("summary.txt"), &summary.render())?;
    run.manifest.settings = serde_json::json!({
        "n_periods": n_periods,
        "injected_effect": effect,
        "injected_outcome": outcome,
        "include_sectors": !args.no_sectors,
    });
    run.manifest
        .row_counts
        .insert("records".into(), records.len());
    run.manifest
        .row_counts
        .insert("panel_rows".into(), build.rows.len());
    run.manifest
        .row_counts
        .insert("merged_duplicates".into(), build.merged_duplicates);
    run.manifest
        .row_counts
        .insert("dropped_bots".into(), dropped_bots);
    if build.merged_duplicates > 0 {
        eprintln!(
            "warning: merged {} duplicate cells",
            build.merged_duplicates
        );
    }
    eprintln!("built {} panel rows", build.rows.len());
    run.finish()
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let seed = args
        .shared
        .seed
        .unwrap_or(BootstrapSettings::default().seed);
    let mut run = Run::start("estimate", &args.shared.out, Some(seed))?;
    run.input(&args.panel);
    let options = EstimateOptions {
        design: Design {
            anticipation: args.anticipation,
            control_group: args.control,
            base_period: args.base_period,
            estimation: args.estimation,
            covariates: args.covariates.clone(),
        },
        bootstrap: BootstrapSettings {
            n_draws: args.bootstrap_draws,
            weight_law: args.weight_law,
            seed,
        },
        e_min: args.e_min,
        e_max: args.e_max,
        restrictions: SampleRestrictions {
            require_pre_activity: args.require_pre_activity,
            min_pre_active_frac: args.min_pre_active_frac,
            min_pre_active_months: args.min_pre_active_months,
        },
    };
    let outcomes: Vec<Outcome> = match &args.outcome {
        Some(name) => vec![name.parse()?],
        None => Outcome::MAIN.to_vec(),
    };
    let panel = io::read_panel(&args.panel)?;
    for &o in &outcomes {
        panel.outcome_values(o)?;
    }
    let restricted = apply_restrictions(&panel, &options.restrictions)?;
    run.manifest
        .row_counts
        .insert("developers_in".into(), panel.n_units());
    run.manifest
        .row_counts
        .insert("developers_kept".into(), restricted.n_units());

    let mut summaries = Vec::new();
    for &o in &outcomes {
        let est = estimate_outcome(&restricted, o, &options)?;
        io::write_event_study(&run.path(&format!("event_study_{o}.csv")), &est.event_study)?;
        io::write_json(&run.path(&format!("attgt_{o}.json")), &est.attgt)?;
        if args.write_influence {
            io::write_influence(&run.path(&format!("influence_{o}.csv")), &est.attgt)?;
        }
        for w in &est.attgt.warnings {
            eprintln!("warning [{o}] {w}");
        }
        summaries.push(OutcomeSummary::from_estimate(&est));
    }
    let report = AggregateReport {
        schema_version: SCHEMA_VERSION,
        software_version: VERSION.into(),
        label: args.label.clone(),
        seed,
        design: options.design.clone(),
        bootstrap: options.bootstrap,
        restrictions: options.restrictions.clone(),
        n_developers: restricted.n_units(),
        n_periods: restricted.n_periods(),
        outcomes: summaries,
    };
    io::write_json(&run.path("aggregate.json"), &report)?;
    let table = render(std::slice::from_ref(&report))?;
    io::write_text(&run.path("table.txt"), &table)?;
    print!("{table}");
    run.manifest.settings = serde_json::to_value(&options)?;
    run.finish()
}

/// Outcome of the proposition run, mapped to an exit code by the caller.
enum PropsVerdict {
    Pass,
    Fail,
    Inconclusive,
}

fn cmd_check_props(args: CheckPropsArgs) -> Result<PropsVerdict> {
    let config = load_config(args.shared.config.as_deref(), args.shared.seed)?;
    if args.reps < 2 {
        return Err(Error::Validation {
            field: "reps".into(),
            message: "at least 2 replications required".into(),
        });
    }
    let mut run = Run::start("check-props", &args.shared.out, Some(config.seed))?;
    if let Some(p) = &args.shared.config {
        run.input(p);
    }
    let report = check_propositions(&config, args.reps)?;
    io::write_json(&run.path("props.json"), &report)?;
    let text = report.render();
    io::write_text(&run.path("props.txt"), &text)?;
    io::write_text(&run.path("config.resolved.txt"), &to_config_text(&config))?;
    print!("{text}");
    run.manifest.settings = serde_json::json!({ "config": config, "reps": args.reps });
    run.finish()?;
    Ok(if report.all_pass() {
        PropsVerdict::Pass
    } else if report.any_inconclusive() {
        PropsVerdict::Inconclusive
    } else {
        PropsVerdict::Fail
    })
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let reports = args
        .inputs
        .iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            AggregateReport::from_json(&text)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = render(&reports)?;
    if let Some(p) = &args.out {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        io::write_text(p, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        Error::Identification { .. } => 4,
        Error::Inconclusive(_) => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|()| 0),
        Command::BuildPanel(a) => cmd_build_panel(a).map(|()| 0),
        Command::Estimate(a) => cmd_estimate(a).map(|()| 0),
        Command::CheckProps(a) => cmd_check_props(a).map(|v| match v {
            PropsVerdict::Pass => 0,
            PropsVerdict::Fail => 1,
            PropsVerdict::Inconclusive => 5,
        }),
        Command::Report(a) => cmd_report(a).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
