//! `dualrail` — simulate, herald, sweep and optimize dual-rail heralded CZ
//! gates from structured-text configuration files.
//!
//! Exit status: 0 on success, 2 on configuration/validation errors, 3 on
//! numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualrail_core::gate::{block_trajectory, RailDiagnostics};
use dualrail_core::propagator::IntegratorSettings;
use dualrail_core::report::{complex_pair, herald_json, pt_check_json, sig12};
use dualrail_core::sweep::METRIC_FLOOR;
use dualrail_core::*;

#[derive(Parser)]
#[command(name = "dualrail", version, about = "Heralded dual-rail buffer-atom-mediated CZ gate toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate every block of both rails and dump state trajectories as CSV.
    Simulate(SimulateArgs),
    /// Evaluate the heralded gate of a configuration and write the report JSON.
    Herald(HeraldArgs),
    /// Grid sweep over one or two perturbation axes; writes CSV + metadata JSON.
    Sweep(SweepArgs),
    /// Search for CZ-realizing waveforms; writes a config file + history CSV.
    Optimize(OptimizeArgs),
    /// PT-consistency report: CZ diagnostics of both detuning orientations.
    PtCheck(PtCheckArgs),
    /// Closed-form and integrated return amplitude of a constant dressing drive.
    DressCheck(DressCheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the trajectory CSV files.
    #[arg(long, default_value = "trajectories")]
    outdir: PathBuf,
    /// Rail to simulate (0, 1 or both).
    #[arg(long, default_value = "both")]
    rail: String,
    /// Samples per pulse window.
    #[arg(long, default_value_t = 501)]
    samples: usize,
}

#[derive(Args)]
struct HeraldArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured relative rail phase: a number in rad, or "auto".
    #[arg(long)]
    eta: Option<String>,
    /// Report path.
    #[arg(long, default_value = "herald.json")]
    out: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Swept parameter: rabi_scale, rabi_scale_buffer, rabi_scale_qubits,
    /// detuning_buffer, detuning_qubits, b0, b1 or batch_mismatch.
    #[arg(long)]
    param: String,
    #[arg(long)]
    min: f64,
    #[arg(long)]
    max: f64,
    #[arg(long)]
    points: usize,
    /// Logarithmic spacing for the first axis.
    #[arg(long)]
    log: bool,
    /// Optional second axis.
    #[arg(long)]
    param2: Option<String>,
    #[arg(long)]
    min2: Option<f64>,
    #[arg(long)]
    max2: Option<f64>,
    #[arg(long)]
    points2: Option<usize>,
    #[arg(long)]
    log2: bool,
    /// Evaluate grid points sequentially (default: parallel).
    #[arg(long)]
    serial: bool,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Metadata sidecar path (defaults to <out>.meta.json).
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct OptimizeArgs {
    /// Layout under optimization: chain_no_qq or all_blockade_ideal.
    #[arg(long, default_value = "chain_no_qq")]
    layout: String,
    /// Blockade strengths in 2π×MHz; inf for ideal blockade.
    #[arg(long, default_value_t = f64::INFINITY)]
    b0: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    b1: f64,
    /// Highest harmonic index of each coefficient list.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    evals: usize,
    #[arg(long, default_value_t = 1.0)]
    w_fid: f64,
    #[arg(long, default_value_t = 0.5)]
    w_leak: f64,
    #[arg(long, default_value_t = 1e-3)]
    w_power: f64,
    /// Peak-Rabi cap in 2π×MHz.
    #[arg(long, default_value_t = 30.0)]
    power_cap: f64,
    /// Where to write the found waveform configuration.
    #[arg(long, default_value = "optimized.cfg")]
    out: PathBuf,
    #[arg(long, default_value = "history.csv")]
    history: PathBuf,
}

#[derive(Args)]
struct PtCheckArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "pt_check.json")]
    out: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct DressCheckArgs {
    /// Dressing Rabi frequency, rad/μs.
    #[arg(long)]
    omega: f64,
    /// Dressing detuning, rad/μs.
    #[arg(long)]
    delta: f64,
    /// Pulse duration, μs.
    #[arg(long)]
    time: f64,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load(path: &Path) -> Result<(RunConfig, String)> {
    let text = fs::read_to_string(path)?;
    let rc = parse_config(&text)?;
    Ok((rc, text))
}

fn parse_eta(s: &str) -> Result<EtaMode> {
    if s == "auto" {
        return Ok(EtaMode::Auto);
    }
    s.parse::<f64>()
        .map(EtaMode::Fixed)
        .map_err(|_| Error::InvalidConfig(format!("eta must be a number in rad or \"auto\", got `{s}`")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Herald(args) => herald(args),
        Command::Sweep(args) => sweep(args),
        Command::Optimize(args) => optimize_cmd(args),
        Command::PtCheck(args) => pt_check_cmd(args),
        Command::DressCheck(args) => dress_check(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (rc, _) = load(&args.config)?;
    if args.samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    let rails: Vec<Rail> = match args.rail.as_str() {
        "0" => vec![Rail::Zero],
        "1" => vec![Rail::One],
        "both" => vec![Rail::Zero, Rail::One],
        other => {
            return Err(Error::InvalidConfig(format!("rail must be 0, 1 or both, got `{other}`")))
        }
    };
    fs::create_dir_all(&args.outdir)?;
    for rail in rails {
        for q in QubitState::ALL {
            let traj = block_trajectory(&rc.system, q, rail, args.samples, &rc.integrator)?;
            let mut csv = String::from("t_us");
            for label in &traj.labels {
                csv.push_str(&format!(",pop_{label},phase_{label}"));
            }
            csv.push('\n');
            for (t, amps) in &traj.samples {
                csv.push_str(&format!("{t:.11e}"));
                for a in amps {
                    csv.push_str(&format!(",{:.11e},{:.11e}", a.norm_sqr(), a.arg()));
                }
                csv.push('\n');
            }
            let name = format!("traj_rail{}_q{}.csv", rail.index(), q.index());
            fs::write(args.outdir.join(&name), csv)?;
            println!("wrote {}", args.outdir.join(&name).display());
        }
    }
    Ok(())
}

fn herald(args: HeraldArgs) -> Result<()> {
    let (rc, _) = load(&args.config)?;
    let eta = match args.eta {
        Some(s) => parse_eta(&s)?,
        None => rc.eta,
    };
    let eval = evaluate_herald(&rc.system, eta, &rc.integrator)?;
    let json = herald_json(&eval, rc.hash);
    fs::write(&args.out, serde_json::to_string_pretty(&json).expect("serializable") + "\n")?;
    println!(
        "p_herald = {:.9}  F_raw = {:.9}  F_herald = {:.12}  eta = {:.6e}  conjugacy_residual = {:.3e}",
        eval.stats.p_herald,
        eval.stats.f_raw,
        eval.stats.f_herald,
        eval.result.eta,
        eval.result.conjugacy_residual,
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (rc, _) = load(&args.config)?;
    let mut axes = vec![SweepAxis {
        kind: AxisKind::parse(&args.param)?,
        min: args.min,
        max: args.max,
        points: args.points,
        spacing: if args.log { Spacing::Log } else { Spacing::Linear },
    }];
    if let Some(param2) = &args.param2 {
        let (Some(min2), Some(max2), Some(points2)) = (args.min2, args.max2, args.points2) else {
            return Err(Error::InvalidSweep(
                "--param2 requires --min2, --max2 and --points2".into(),
            ));
        };
        axes.push(SweepAxis {
            kind: AxisKind::parse(param2)?,
            min: min2,
            max: max2,
            points: points2,
            spacing: if args.log2 { Spacing::Log } else { Spacing::Linear },
        });
    }
    let spec = SweepSpec { axes, parallel: !args.serial };
    let table = run_sweep(&rc, &spec)?;
    fs::write(&args.out, table.to_csv())?;
    let meta_path = args
        .meta
        .unwrap_or_else(|| PathBuf::from(format!("{}.meta.json", args.out.display())));
    let meta = table.metadata_json(&rc);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("serializable") + "\n")?;
    let failures = table.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "swept {} points ({} failed); metric floor {METRIC_FLOOR:.0e}",
        table.rows.len(),
        failures
    );
    println!("wrote {} and {}", args.out.display(), meta_path.display());
    Ok(())
}

fn optimize_cmd(args: OptimizeArgs) -> Result<()> {
    let layout = match args.layout.as_str() {
        "chain_no_qq" => Layout::ChainNoQq,
        "all_blockade_ideal" => Layout::AllBlockadeIdeal,
        other => {
            return Err(Error::InvalidConfig(format!(
                "layout must be chain_no_qq or all_blockade_ideal, got `{other}`"
            )))
        }
    };
    let blockade = [Blockade::from_two_pi_mhz(args.b0)?, Blockade::from_two_pi_mhz(args.b1)?];
    let spec = CostSpec {
        w_fid: args.w_fid,
        w_leak: args.w_leak,
        w_power: args.w_power,
        power_cap: std::f64::consts::TAU * args.power_cap,
        n: args.n,
        ..CostSpec::new(layout, blockade)
    };
    let result = optimize(&spec, args.seed, args.evals)?;
    println!(
        "best cost {:.6e} after {} evaluations ({} failures), seed {}",
        result.cost, result.evals, result.failures, result.seed
    );
    let system = result.params.to_config(&spec)?;
    let text = write_config(
        &system,
        &IntegratorSettings::default(),
        EtaMode::Fixed(0.0),
        &Default::default(),
    );
    fs::write(&args.out, &text)?;
    fs::write(&args.history, result.history_csv())?;
    println!("wrote {} and {}", args.out.display(), args.history.display());
    Ok(())
}

fn print_rail(tag: &str, d: &RailDiagnostics) {
    println!(
        "{tag}: populations = [{:.6}, {:.6}, {:.6}, {:.6}]  conditional_phase = {:+.6} rad  max_leak = {:.3e}  cz_ok = {}",
        d.populations[0], d.populations[1], d.populations[2], d.populations[3],
        d.conditional_phase, d.max_leak, d.cz_ok
    );
}

fn pt_check_cmd(args: PtCheckArgs) -> Result<()> {
    let (rc, _) = load(&args.config)?;
    let report = pt_check(&rc.system, rc.eta, &rc.integrator)?;
    print_rail("rail 0 (−Δ1)", &report.rail0);
    print_rail("rail 1 (+Δ1)", &report.rail1);
    println!(
        "conjugacy residual = {:.3e}  p_herald = {:.9}  F_herald = {:.12}",
        report.evaluation.result.conjugacy_residual,
        report.evaluation.stats.p_herald,
        report.evaluation.stats.f_herald,
    );
    let json = pt_check_json(&report, &rc.system, rc.hash);
    fs::write(&args.out, serde_json::to_string_pretty(&json).expect("serializable") + "\n")?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn dress_check(args: DressCheckArgs) -> Result<()> {
    let amp = dressing_phase(args.omega, args.delta, args.time);
    let settings = IntegratorSettings {
        max_step: (args.time / 200.0).min(0.0025),
        ..Default::default()
    };
    let integrated = gate::dressing_phase_integrated(args.omega, args.delta, args.time, &settings)?;
    let residual = (amp - integrated).norm();
    println!(
        "return amplitude = {:+.9}{:+.9}i  phase = {:+.9} rad  population = {:.9}",
        amp.re,
        amp.im,
        amp.arg(),
        amp.norm_sqr()
    );
    println!("closed form vs integration residual = {residual:.3e}");
    if let Some(out) = args.out {
        let json = serde_json::json!({
            "amplitude": complex_pair(amp),
            "phase": sig12(amp.arg()),
            "return_population": sig12(amp.norm_sqr()),
            "integration_residual": sig12(residual),
        });
        fs::write(&out, serde_json::to_string_pretty(&json).expect("serializable") + "\n")?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
