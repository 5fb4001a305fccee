//! Command-line front end: run scenarios, compare protocols, query the KKT
//! oracle, and check schedule connectivity.
//!
//! Exit codes: 0 on success, 1 on configuration errors (including unknown
//! flags and unreadable config files), 2 when a run fails numerically.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resalloc_core::config::{parse_scenario_config, ScenarioConfig};
use resalloc_core::dynamics::{ProtocolKind, ProtocolSpec};
use resalloc_core::graph::GraphSnapshot;
use resalloc_core::harness::{
    build_scenario, compare, comparison_summary, protocol_spec, reference_scenario_cycle_config,
    reference_scenario_switching_config, run_scenario, run_summary, trajectory_csv,
    CompareOptions, Scenario, CYCLE_SEED, SWITCHING_SEED,
};
use resalloc_core::oracle::solve_kkt;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;

#[derive(Parser)]
#[command(
    name = "resalloc",
    about = "Distributed resource allocation over time-varying networks",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes trajectory.csv and summary.txt.
    Run(RunArgs),
    /// Run a protocol set on shared inputs; one CSV per protocol plus a
    /// comparison summary.
    Compare(CompareArgs),
    /// Print the KKT solution for the scenario's costs and K.
    Oracle(ScenarioArgs),
    /// Report per-snapshot connectivity and the joint-connectivity verdict.
    CheckGraph(CheckGraphArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario name (cycle-quartic | switching-quadlse) or a
    /// config file path.
    #[arg(long)]
    scenario: String,
    /// Replace the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the integration step size.
    #[arg(long)]
    h: Option<f64>,
    /// Override the end time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Override the sampling stride (in steps).
    #[arg(long)]
    sample_every: Option<usize>,
    /// Override the protocol kind (linear | sign-power | combined).
    #[arg(long)]
    protocol: Option<String>,
    /// Override the first-term gain.
    #[arg(long)]
    eta1: Option<f64>,
    /// Override the second-term gain.
    #[arg(long)]
    eta2: Option<f64>,
    /// Override the sublinear exponent.
    #[arg(long)]
    v1: Option<f64>,
    /// Override the superlinear exponent.
    #[arg(long)]
    v2: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory (default: the config's `[output]` dir, else "out").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory (default: the config's `[output]` dir, else "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated protocol kinds to run, built from the scenario's
    /// protocol parameters.
    #[arg(long, default_value = "combined,linear,sign-power")]
    protocols: String,
    /// Rescale weights to a symmetric doubly stochastic matrix for this
    /// comparison.
    #[arg(long)]
    normalize_weights: bool,
}

#[derive(Args)]
struct CheckGraphArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Window length for the joint-connectivity check.
    #[arg(long)]
    window: f64,
}

fn main() -> ExitCode {
    // Die quietly on closed pipes (e.g. `resalloc oracle ... | head`) the way
    // other line-oriented tools do, instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            // clap renders usage text for both help and errors.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::CheckGraph(args) => cmd_check_graph(args),
    }
    .unwrap_or_else(|failure| failure)
}

/// Loads the scenario description, applies overrides, and materializes it.
fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, ExitCode> {
    let mut config = load_config(&args.scenario, args.seed)?;
    apply_overrides(&mut config, args).map_err(|msg| config_error(&msg))?;
    build_scenario(&config).map_err(|e| config_error(&e.to_string()))
}

fn load_config(source: &str, seed: Option<u64>) -> Result<ScenarioConfig, ExitCode> {
    match source {
        "cycle-quartic" => Ok(reference_scenario_cycle_config(seed.unwrap_or(CYCLE_SEED))),
        "switching-quadlse" => {
            Ok(reference_scenario_switching_config(seed.unwrap_or(SWITCHING_SEED)))
        }
        path => {
            let p = Path::new(path);
            let text = std::fs::read_to_string(p).map_err(|e| {
                config_error(&format!("cannot read scenario '{path}': {e}"))
            })?;
            let default_name =
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
            let mut config = parse_scenario_config(&text, &default_name)
                .map_err(|e| config_error(&format!("{path}: {e}")))?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            Ok(config)
        }
    }
}

fn apply_overrides(config: &mut ScenarioConfig, args: &ScenarioArgs) -> Result<(), String> {
    if let Some(h) = args.h {
        config.integration.h = h;
    }
    if let Some(t_end) = args.t_end {
        config.integration.t_end = t_end;
    }
    if let Some(every) = args.sample_every {
        config.integration.sample_every = every;
    }
    if let Some(kind) = &args.protocol {
        config.protocol.kind = match kind.as_str() {
            "linear" => ProtocolKind::Linear,
            "sign-power" => ProtocolKind::SignPower,
            "combined" => ProtocolKind::Combined,
            other => return Err(format!("unknown protocol '{other}'")),
        };
        // Kind-specific invariants; keep the remaining parameters sane when
        // switching families.
        match config.protocol.kind {
            ProtocolKind::Linear => {
                config.protocol.v1 = 1.0;
                config.protocol.v2 = 1.0;
                config.protocol.eta2 = 0.0;
            }
            ProtocolKind::SignPower => {
                config.protocol.eta2 = 0.0;
                config.protocol.v2 = 1.0;
            }
            _ => {}
        }
    }
    if let Some(v) = args.eta1 {
        config.protocol.eta1 = v;
    }
    if let Some(v) = args.eta2 {
        config.protocol.eta2 = v;
    }
    if let Some(v) = args.v1 {
        config.protocol.v1 = v;
    }
    if let Some(v) = args.v2 {
        config.protocol.v2 = v;
    }
    Ok(())
}

fn config_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn output_dir(flag: &Option<PathBuf>, scenario: &Scenario, config_dir: &Option<String>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.clone();
    }
    if let Some(dir) = config_dir {
        return PathBuf::from(dir);
    }
    let _ = scenario;
    PathBuf::from("out")
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExitCode> {
    std::fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, ExitCode> {
    let config_dir = load_config(&args.scenario.scenario, args.scenario.seed)
        .ok()
        .and_then(|c| c.output_dir);
    let scenario = load_scenario(&args.scenario)?;
    let run = run_scenario(&scenario).map_err(|e| config_error(&e.to_string()))?;
    let dir = output_dir(&args.out, &scenario, &config_dir);
    std::fs::create_dir_all(&dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&run.metrics))?;
    let summary = run_summary(&scenario, &run);
    write_file(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    if run.trajectory.termination.is_failure() {
        return Ok(ExitCode::from(EXIT_NUMERIC));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode, ExitCode> {
    let config_dir = load_config(&args.scenario.scenario, args.scenario.seed)
        .ok()
        .and_then(|c| c.output_dir);
    let scenario = load_scenario(&args.scenario)?;
    let mut specs: Vec<ProtocolSpec> = Vec::new();
    for token in args.protocols.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let mut p = resalloc_core::config::ProtocolConfig {
            kind: ProtocolKind::Combined,
            eta1: scenario.spec.eta1,
            eta2: scenario.spec.eta2,
            v1: scenario.spec.v1,
            v2: scenario.spec.v2,
            dim: 1,
        };
        match token {
            "combined" => {}
            "linear" => {
                p.kind = ProtocolKind::Linear;
                p.eta2 = 0.0;
                p.v1 = 1.0;
                p.v2 = 1.0;
            }
            "sign-power" => {
                p.kind = ProtocolKind::SignPower;
                p.eta2 = 0.0;
                p.v2 = 1.0;
            }
            other => return Err(config_error(&format!("unknown protocol '{other}' in --protocols"))),
        }
        specs.push(protocol_spec(&p).map_err(|e| config_error(&e.to_string()))?);
    }
    let report = compare(
        &scenario,
        &specs,
        &CompareOptions { normalize_weights: args.normalize_weights },
    )
    .map_err(|e| config_error(&e.to_string()))?;
    let dir = output_dir(&args.out, &scenario, &config_dir);
    std::fs::create_dir_all(&dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    for run in &report.runs {
        let name = format!("trajectory_{}.csv", run.spec.kind.slug());
        write_file(&dir.join(name), &trajectory_csv(&run.metrics))?;
    }
    let summary = comparison_summary(&scenario, &report);
    write_file(&dir.join("comparison.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: ScenarioArgs) -> Result<ExitCode, ExitCode> {
    let scenario = load_scenario(&args)?;
    let sol = solve_kkt(&scenario.costs, scenario.k).map_err(|e| config_error(&e.to_string()))?;
    println!("scenario: {}", scenario.name);
    println!("seed: {}", scenario.seed);
    println!("n: {}", scenario.n());
    println!("K: {}", scenario.k);
    println!("psi* = {:.16e}", sol.psi_star);
    println!("F* = {:.16e}", sol.f_star);
    println!("residual = {:.3e}", sol.residual);
    for (i, x) in sol.x_star.iter().enumerate() {
        println!("x*[{i}] = {x:.16e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_graph(args: CheckGraphArgs) -> Result<ExitCode, ExitCode> {
    if !args.window.is_finite() || args.window <= 0.0 {
        return Err(config_error("--window must be positive"));
    }
    let scenario = load_scenario(&args.scenario)?;
    let segments = scenario.schedule.segments();
    println!("scenario: {} (n = {})", scenario.name, scenario.n());
    for (idx, (duration, snap)) in segments.iter().enumerate() {
        let status = if snap.has_spanning_tree() { "connected" } else { "disconnected" };
        println!(
            "snapshot {idx}: duration = {duration}, edges = {}, {status}",
            snap.edges().len()
        );
    }
    let union = GraphSnapshot::union(
        &segments.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>(),
    )
    .map_err(|e| config_error(&e.to_string()))?;
    let union_status = if union.has_spanning_tree() { "connected" } else { "disconnected" };
    let verdict = if scenario.schedule.check_assumption_tree(args.window) {
        "satisfied"
    } else {
        "violated"
    };
    println!("union: {union_status}; Assumption 1: {verdict} (window = {})", args.window);
    Ok(ExitCode::SUCCESS)
}
