use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use dsfdi_core::data::{generate_synthetic_flight, SyntheticConfig};
use dsfdi_core::harness::{self, emit_series, DesignBundle, DiagnosisReport, PipelineConfig, SeriesId};

#[derive(Parser)]
#[command(name = "dsfdi", version, about = "Sensor fault detection and isolation with evidence filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic flight-like dataset as CSV.
    Synth(Common),
    /// Offline design: normalization, detection, fault directions, thresholds.
    Design(Common),
    /// Online phase: run every fault scenario and write the metrics report.
    Run(RunArgs),
    /// Run the scenarios and write per-sample series CSVs plus the metrics report.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed of every synthetic source and of the solver.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Reuse a design bundle instead of running the offline phase.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Scenario labels to export (default: all).
    #[arg(long)]
    scenario: Vec<String>,
    /// Series to export: detection, evidence, combined[:RULE], fault-evidence (default: all).
    #[arg(long)]
    series: Vec<String>,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_file(path).with_context(|| format!("configuration {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn bundle_for(cfg: &PipelineConfig, bundle: Option<&Path>) -> Result<DesignBundle> {
    Ok(match bundle {
        Some(p) => DesignBundle::load(p).with_context(|| format!("design bundle {}", p.display()))?,
        None => harness::run_offline_design(cfg)?,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

fn print_table(report: &DiagnosisReport) {
    println!(
        "Th_D = {:.4}  Th_R = {:.4}  W_Is objective = {:.4}",
        report.design.th_d, report.design.th_r, report.design.isolation_objective
    );
    println!("{:<12} {:>8} {:<6} {:>7} {:>7} {:>7}", "scenario", "amp", "rule", "TDR%", "TIR%", "FA%");
    for s in &report.scenarios {
        let amp = s.fault.map_or_else(|| "-".to_owned(), |f| format!("{:.3}", f.amplitude));
        for r in &s.rules {
            println!(
                "{:<12} {:>8} {:<6} {:>7} {:>7} {:>7}",
                s.label,
                amp,
                r.rule.to_string(),
                fmt_opt(r.tdr),
                fmt_opt(r.tir),
                fmt_opt(r.false_alarm_rate)
            );
        }
    }
}

fn synth(args: &Common) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: SyntheticConfig = serde_json::from_str(&text).context("synthetic configuration")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ds = generate_synthetic_flight(&cfg).context("synthetic generation")?;
    ds.write_csv(&args.out)?;
    info!("wrote {} samples x {} channels to {}", ds.m(), ds.n(), args.out.display());
    Ok(())
}

fn design(args: &Common) -> Result<()> {
    let cfg = load_config(&args.config, args.seed)?;
    let bundle = harness::run_offline_design(&cfg)?;
    bundle.save(&args.out)?;
    println!(
        "Th_D = {:.6}  Th_R = {:.6}  W_Is objective = {:.6} ({} iterations, converged: {})",
        bundle.th_d(),
        bundle.reliability.th_r,
        bundle.isolation.objective,
        bundle.isolation.iterations,
        bundle.isolation.converged
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.common.config, args.common.seed)?;
    let bundle = bundle_for(&cfg, args.bundle.as_deref())?;
    let report = harness::run_with_bundle(&cfg, &bundle)?;
    report.save(&args.common.out)?;
    print_table(&report);
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let cfg = load_config(&args.common.config, args.common.seed)?;
    let bundle = bundle_for(&cfg, args.bundle.as_deref())?;
    let report = harness::run_with_bundle(&cfg, &bundle)?;
    let dir = &args.common.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.save(dir.join("report.json"))?;

    let mut series: Vec<SeriesId> = args.series.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    if series.is_empty() {
        series.extend([SeriesId::Detection, SeriesId::Evidence, SeriesId::FaultEvidence]);
        series.extend(cfg.rules.iter().cloned().map(SeriesId::Combined));
    }
    let labels: Vec<String> = if args.scenario.is_empty() {
        report.scenarios.iter().map(|s| s.label.clone()).collect()
    } else {
        args.scenario.clone()
    };
    for label in &labels {
        if report.scenario(label).is_none() {
            bail!("unknown scenario {label:?}");
        }
        for id in &series {
            let file = dir.join(format!("{label}_{}.csv", id.to_string().replace(':', "_")));
            emit_series(&report, label, id, &file)?;
        }
    }
    print_table(&report);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Design(a) => design(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    }
}
