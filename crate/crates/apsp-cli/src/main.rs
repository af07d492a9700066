use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use apsp::channel::{build_adcpm, Scenario};
use apsp::experiments::{
    evaluate_spectral_efficiency, load_experiment, psop_segment_length, run_mse_experiment,
    write_rate_report, write_results, FrameKind, MseRow, RowSource, ScenarioChoice, Scheme,
};
use apsp::pilots::make_psop_schedule;
use apsp::scheduling::{
    check_nonoverlap_condition, replay_overlaps, schedule_apsp_with, ScheduleOptions, UtOrder,
};
use apsp::ExperimentSpec64;

/// Link-level simulator for channel acquisition in wideband massive
/// MIMO-OFDM with adjustable phase shift pilots.
#[derive(Parser)]
#[command(
    name = "apsp",
    version,
    after_help = "Worker threads follow RAYON_NUM_THREADS (default: all cores). \
                  Results are bit-identical for any thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep channel estimation / prediction MSE over SNR and delay.
    Mse(RunArgs),
    /// Evaluate uplink and downlink spectral efficiency over a frame.
    Rate(RunArgs),
    /// Compute and save a pilot shift schedule.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; flags below override individual keys
    #[arg(long)]
    config: Option<PathBuf>,

    /// Scenario preset: su, uma or umi
    #[arg(long)]
    scenario: Option<String>,

    /// Pilot scheme: apsp or psop
    #[arg(long)]
    scheme: Option<String>,

    /// Pilot segment length in OFDM symbols
    #[arg(long)]
    q: Option<usize>,

    /// Number of user terminals
    #[arg(long)]
    k: Option<usize>,

    /// Training SNR grid in dB, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,

    /// Delay offsets in symbols, comma separated (default: the frame's lags)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_ell: Vec<i64>,

    /// Monte Carlo trials per empirical point
    #[arg(long)]
    trials: Option<usize>,

    /// Master seed for all random draws
    #[arg(long)]
    seed: Option<u64>,

    /// Frame layout: type-a (pilots first) or type-b (pilots mid-frame)
    #[arg(long)]
    frame: Option<String>,

    /// Frame length in OFDM symbols, pilots included
    #[arg(long)]
    frame_len: Option<usize>,

    /// Greedy scheduling overlap threshold
    #[arg(long)]
    gamma: Option<f64>,

    /// Taps per user in the preset scenarios
    #[arg(long)]
    num_taps: Option<usize>,

    /// Evaluate every n-th subcarrier in the rate sweep
    #[arg(long)]
    subcarrier_step: Option<usize>,

    /// Output CSV path (default: results.csv / rates.csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Greedy visiting order: index | power (strongest UT first)
    #[arg(long, default_value = "index")]
    order: String,

    /// Also write a per-UT CSV (shift, group, accepted overlap)
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec64> {
    let mut spec = match &args.config {
        Some(path) => load_experiment::<f64>(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentSpec64::desk_default()?,
    };
    if let Some(name) = &args.scenario {
        spec.scenario = ScenarioChoice::Preset(Scenario::parse(name)?);
    }
    if let Some(name) = &args.scheme {
        spec.scheme = Scheme::parse(name)?;
    }
    if let Some(k) = args.k {
        spec.cfg = spec.cfg.with_k(k)?;
    }
    if let Some(q) = args.q {
        spec.q = q;
    } else if spec.scheme == Scheme::Psop {
        // orthogonal pilots fix the segment length; recompute it whenever the
        // user did not pin q, so `--scheme psop` works without further flags
        spec.q = psop_segment_length(spec.cfg.k(), spec.cfg.ng(), spec.cfg.nc());
    }
    if !args.snr.is_empty() {
        spec.snr_db = args.snr.clone();
    }
    if !args.delta_ell.is_empty() {
        spec.delta_ells = args.delta_ell.clone();
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(name) = &args.frame {
        spec.frame = FrameKind::parse(name)?;
    }
    if let Some(len) = args.frame_len {
        spec.frame_len = len;
    }
    if let Some(gamma) = args.gamma {
        spec.gamma = gamma;
    }
    if args.num_taps.is_some() {
        spec.num_taps = args.num_taps;
    }
    if let Some(step) = args.subcarrier_step {
        spec.subcarrier_step = step;
    }
    spec.validate()?;
    Ok(spec)
}

fn to_db(x: f64) -> f64 {
    10.0 * x.max(f64::MIN_POSITIVE).log10()
}

fn run_mse(args: &RunArgs) -> Result<()> {
    let spec = build_spec(args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results.csv"));
    println!(
        "mse sweep: scenario {}, scheme {}, q {}, k {}, {} trials, seed {}",
        spec.scenario_name(),
        spec.scheme.name(),
        spec.q,
        spec.cfg.k(),
        spec.trials,
        spec.seed
    );
    let rows = run_mse_experiment(&spec)?;
    write_results(&rows, &out)?;
    summarize_mse(&rows);
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

fn summarize_mse(rows: &[MseRow<f64>]) {
    for row in rows {
        if row.source != RowSource::Analytic || row.delta_ell != 0 {
            continue;
        }
        println!(
            "  snr {:>5.1} dB: {} {:>8.2} dB (bound {:>8.2} dB)",
            row.snr_db,
            row.kind.name(),
            to_db(row.total),
            to_db(row.bound)
        );
    }
}

fn run_rate(args: &RunArgs) -> Result<()> {
    let spec = build_spec(args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("rates.csv"));
    println!(
        "rate sweep: scenario {}, scheme {}, frame {}, q {}, k {}, {} trials, seed {}",
        spec.scenario_name(),
        spec.scheme.name(),
        spec.frame.name(),
        spec.q,
        spec.cfg.k(),
        spec.trials,
        spec.seed
    );
    let report = evaluate_spectral_efficiency(&spec)?;
    write_rate_report(&report, &out)?;
    for row in &report.rows {
        println!(
            "  snr {:>5.1} dB: ul {:>7.3} + dl {:>7.3} = {:>7.3} bit/s/Hz",
            row.snr_db, row.ul_se, row.dl_se, row.total_se
        );
    }
    println!("{} rows -> {}", report.rows.len(), out.display());
    Ok(())
}

fn run_schedule(args: &ScheduleArgs) -> Result<()> {
    let spec = build_spec(&args.run)?;
    let out = args
        .run
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("schedule.txt"));
    let profiles = spec.profiles()?;
    let adcpms = profiles
        .iter()
        .map(|p| build_adcpm(p, &spec.cfg))
        .collect::<apsp::Result<Vec<_>>>()?;
    let order = match args.order.as_str() {
        "index" => UtOrder::Index,
        "power" => UtOrder::DescendingTotalPower,
        other => anyhow::bail!("unknown order {other:?} (expected index | power)"),
    };
    let (schedule, overlaps, condition_met) = match spec.scheme {
        Scheme::Apsp => {
            let opts = ScheduleOptions {
                order,
                ..ScheduleOptions::default()
            };
            let result = schedule_apsp_with(&adcpms, &spec.cfg, spec.q, spec.gamma, &opts)?;
            (
                result.schedule,
                result.achieved_overlaps,
                result.condition_met,
            )
        }
        Scheme::Psop => {
            let schedule = make_psop_schedule::<f64>(spec.cfg.k(), spec.cfg.ng(), spec.cfg.nc())?;
            let overlaps = replay_overlaps(&schedule, &adcpms, &spec.cfg);
            let check = check_nonoverlap_condition(&schedule, &adcpms, &spec.cfg, None)?;
            (schedule, overlaps, check.all_ok)
        }
    };
    schedule.save(&out)?;
    let max_overlap = overlaps.iter().cloned().fold(0.0f64, f64::max);
    println!(
        "{} schedule for k {}: q {}, max accepted overlap {:.3e}, non-overlap condition {}",
        spec.scheme.name(),
        spec.cfg.k(),
        schedule.q(),
        max_overlap,
        if condition_met { "met" } else { "not met" }
    );
    println!("shifts -> {}", out.display());
    if let Some(path) = &args.diagnostics {
        write_schedule_diagnostics(path, &schedule, &overlaps)?;
        println!("diagnostics -> {}", path.display());
    }
    Ok(())
}

fn write_schedule_diagnostics(
    path: &Path,
    schedule: &apsp::PilotSchedule64,
    overlaps: &[f64],
) -> Result<()> {
    if overlaps.len() != schedule.k() {
        bail!(
            "overlaps cover {} UTs, schedule has {}",
            overlaps.len(),
            schedule.k()
        );
    }
    let mut text = String::from("ut,phi,group,base_shift,overlap\n");
    for ut in 0..schedule.k() {
        text.push_str(&format!(
            "{},{},{},{},{:e}\n",
            ut,
            schedule.phis()[ut],
            schedule.group(ut),
            schedule.base_shift(ut),
            overlaps[ut]
        ));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Mse(args) => run_mse(args),
        Command::Rate(args) => run_rate(args),
        Command::Schedule(args) => run_schedule(args),
    }
}
