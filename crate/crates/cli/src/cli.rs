//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use traffic_dfa_core::dfa::{analyze, DfaOptions, MIN_BOX};
use traffic_dfa_core::phase::{phase_report, PipelineOptions, TRAFFIC_MIN_BOX};
use traffic_dfa_core::traffic::{run_on, Strategy};

use crate::config::{BetaGrid, Resolved, Settings};
use crate::formats::{
    read_curve_csv, read_edge_list, read_json, read_series_csv, write_dfa_csv, write_edge_list,
    write_json, write_series_csv, DfaSummary, Manifest, PhaseReportFile,
};
use crate::sweep::{run_sweep, SweepJob};
use crate::{validate, CliError, ExitCode};

#[derive(Debug, Parser)]
#[command(
    name = "traffic-dfa",
    version,
    about = "Packet traffic on scale-free networks, analysed with DFA"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write the load time series.
    Simulate(SimulateArgs),
    /// Detrended fluctuation analysis of a series file.
    Dfa(DfaArgs),
    /// Alpha versus beta for one or all strategies.
    Sweep(SweepArgs),
    /// Phase labels and thresholds for a curve file.
    Phases(PhasesArgs),
    /// Run the calibration suite.
    Validate,
}

/// Flags that map onto config keys.
#[derive(Debug, Clone, Default, Args)]
pub struct SettingFlags {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub strategy: Option<Strategy>,
    /// Packets created per node per step.
    #[arg(long, value_name = "R", allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Capacity per unit degree.
    #[arg(long, value_name = "R", allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Distance weight of the traffic-aware strategy.
    #[arg(long, value_name = "R", allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long, value_name = "N")]
    pub nodes: Option<usize>,
    /// Links per new node during network growth.
    #[arg(long, value_name = "M")]
    pub links: Option<usize>,
    #[arg(long, value_name = "T")]
    pub steps: Option<u64>,
    #[arg(long, value_name = "W")]
    pub warmup: Option<u64>,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Beta grid as lo:hi:count[:log|:lin].
    #[arg(long, value_name = "GRID")]
    pub betas: Option<BetaGrid>,
    #[arg(long, value_name = "E")]
    pub ensemble: Option<usize>,
    #[arg(long, value_name = "K")]
    pub workers: Option<usize>,
    /// Smallest DFA box size.
    #[arg(long, value_name = "M")]
    pub min_box: Option<usize>,
}

impl SettingFlags {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let base = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let flags = Settings {
            strategy: self.strategy,
            lambda: self.lambda,
            beta: self.beta,
            h: self.h,
            nodes: self.nodes,
            links: self.links,
            steps: self.steps,
            warmup: self.warmup,
            seed: self.seed,
            betas: self.betas,
            ensemble: self.ensemble,
            workers: self.workers,
            min_box: self.min_box,
            detrend: None,
        };
        base.overlay(flags).resolve()
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub settings: SettingFlags,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Use this edge list instead of growing a network.
    #[arg(long, value_name = "PATH")]
    pub network: Option<PathBuf>,
    /// Also write the network as `network.txt`.
    #[arg(long)]
    pub save_network: bool,
}

#[derive(Debug, Args)]
pub struct DfaArgs {
    /// Series file with a `t,avg_packets` header.
    pub input: PathBuf,
    #[command(flatten)]
    pub settings: SettingFlags,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Skip the global linear detrending step.
    #[arg(long)]
    pub no_detrend: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub settings: SettingFlags,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Stop after this many new cells per strategy; rerun to continue.
    #[arg(long, value_name = "N")]
    pub max_cells: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PhasesArgs {
    /// Curve file with a `beta,alpha,alpha_stderr,growth_slope,phase` header.
    pub curve: PathBuf,
    /// Defaults to the name of the curve's directory.
    #[arg(long, value_name = "NAME")]
    pub strategy: Option<Strategy>,
    /// Defaults to the curve's directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Ensemble size recorded in the report.
    #[arg(long, value_name = "E")]
    pub ensemble: Option<usize>,
}

/// Runs a parsed command line. Output for the user goes to stdout.
pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Dfa(a) => dfa(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Phases(a) => phases(&a),
        Command::Validate => {
            let checks = validate::run(&validate::Hooks::default());
            print!("{}", validate::render_table(&checks));
            Ok(validate::exit_code(&checks))
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode, CliError> {
    let mut r = args.settings.resolve()?;
    let net = match &args.network {
        Some(path) => {
            let net = read_edge_list(path)?;
            r.sim.n_nodes = net.node_count();
            net
        }
        None => r.sim.build_network()?,
    };
    let out = run_on(&net, &r.sim)?;
    let mut artifacts = vec!["series.csv"];
    write_series_csv(&args.out.join("series.csv"), &out.series)?;
    if args.save_network {
        write_edge_list(&args.out.join("network.txt"), &net)?;
        artifacts.push("network.txt");
    }
    let mut config = r.to_json();
    if let Some(path) = &args.network {
        config["network"] = path.display().to_string().into();
    }
    write_json(
        &args.out.join("manifest.json"),
        &Manifest::new("simulate", config, Some(r.sim.seed), &artifacts),
    )?;
    println!(
        "{} steps, {} created, {} delivered; mean load {:.4}",
        out.series.len(),
        out.created_total,
        out.delivered_total,
        traffic_dfa_core::stats::mean(&out.series.values)
    );
    Ok(ExitCode::Success)
}

fn dfa(args: &DfaArgs) -> Result<ExitCode, CliError> {
    let mut r = args.settings.resolve()?;
    if args.no_detrend {
        r.detrend = false;
    }
    let values = read_series_csv(&args.input)?;
    let opts = DfaOptions {
        remove_global_trend: r.detrend,
        min_box: r.min_box.unwrap_or(MIN_BOX),
        ..DfaOptions::default()
    };
    let result = analyze(&values, &opts)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.input.display())))?;
    write_dfa_csv(&args.out.join("dfa.csv"), &result)?;
    let summary = DfaSummary::from(&result);
    write_json(&args.out.join("dfa.json"), &summary)?;
    let mut config = r.to_json();
    config["input"] = args.input.display().to_string().into();
    write_json(
        &args.out.join("manifest.json"),
        &Manifest::new("dfa", config, None, &["dfa.csv", "dfa.json"]),
    )?;
    match (summary.alpha, summary.crossover) {
        (Some(a), Some(c)) => println!("alpha = {a:.4} below crossover m* = {c}"),
        (Some(a), None) => println!("alpha = {a:.4}"),
        _ => println!("degenerate input: no scaling fit"),
    }
    Ok(ExitCode::Success)
}

fn sweep(args: &SweepArgs) -> Result<ExitCode, CliError> {
    let r = args.settings.resolve()?;
    let strategies: Vec<Strategy> = match args.settings.strategy {
        Some(s) => vec![s],
        None => {
            let from_file = args
                .settings
                .config
                .as_deref()
                .map(Settings::load)
                .transpose()?
                .and_then(|s| s.strategy);
            from_file.map_or_else(|| Strategy::ALL.to_vec(), |s| vec![s])
        }
    };
    check_sweep_manifest(&args.out, &r, &strategies)?;

    let net = r.sim.build_network()?;
    let betas = r.betas.values();
    let mut opts = PipelineOptions::default();
    opts.dfa.min_box = r.min_box.unwrap_or(TRAFFIC_MIN_BOX);
    opts.dfa.remove_global_trend = r.detrend;

    let mut any_ok = false;
    let mut all_complete = true;
    for strategy in strategies {
        let job = SweepJob {
            net: &net,
            template: traffic_dfa_core::traffic::SimConfig {
                strategy,
                ..r.sim.clone()
            },
            betas: betas.clone(),
            ensemble: r.ensemble,
            opts: opts.clone(),
            workers: r.workers,
            max_cells: args.max_cells,
        };
        let st = run_sweep(&job, &args.out.join(strategy.name()))?;
        any_ok |= st.cells_ok > 0;
        all_complete &= st.complete();
        println!(
            "{:<10} {}/{} cells ({} failed){}",
            strategy.name(),
            st.cells_ok + st.cells_failed,
            st.cells_total,
            st.cells_failed,
            st.curve_path
                .map(|p| format!(" -> {}", p.display()))
                .unwrap_or_default()
        );
    }
    if !any_ok && all_complete {
        return Err(CliError::AllCellsFailed);
    }
    Ok(ExitCode::Success)
}

/// The sweep manifest is written on the first invocation; later invocations
/// must resolve to the same configuration to resume.
fn check_sweep_manifest(out: &Path, r: &Resolved, strategies: &[Strategy]) -> Result<(), CliError> {
    let path = out.join("manifest.json");
    let mut config = r.to_json();
    config["strategies"] = strategies
        .iter()
        .map(|s| s.name())
        .collect::<Vec<_>>()
        .into();
    let artifacts: Vec<String> = strategies
        .iter()
        .map(|s| format!("{}/{}", s.name(), crate::sweep::CURVE_NAME))
        .collect();
    let artifacts: Vec<&str> = artifacts.iter().map(String::as_str).collect();
    let manifest = Manifest::new("sweep", config, Some(r.sim.seed), &artifacts);
    if path.exists() {
        let existing: Manifest = read_json(&path)?;
        if existing.config != manifest.config {
            return Err(CliError::Usage(format!(
                "{} holds a sweep with a different configuration",
                out.display()
            )));
        }
        return Ok(());
    }
    write_json(&path, &manifest)
}

fn phases(args: &PhasesArgs) -> Result<ExitCode, CliError> {
    let dir = args
        .curve
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let strategy = match args.strategy {
        Some(s) => s,
        None => dir
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "cannot infer the strategy from {}; pass --strategy",
                    args.curve.display()
                ))
            })?,
    };
    let (curve, _) = read_curve_csv(&args.curve, strategy, args.ensemble.unwrap_or(0))?;
    let report = phase_report(&curve, None)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.curve.display())))?;
    let out = args.out.clone().unwrap_or(dir);
    write_json(
        &out.join("phase_report.json"),
        &PhaseReportFile::new(&report, args.ensemble),
    )?;
    let config = serde_json::json!({
        "curve": args.curve.display().to_string(),
        "strategy": strategy.name(),
        "ensemble": args.ensemble,
    });
    write_json(
        &out.join("manifest.json"),
        &Manifest::new("phases", config, None, &["phase_report.json"]),
    )?;
    println!(
        "{}: beta_c = {:.4}, beta_1 = {:.4}",
        strategy.name(),
        report.beta_c,
        report.beta_1
    );
    Ok(ExitCode::Success)
}
