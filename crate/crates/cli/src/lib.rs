//! The `faultbench` command line: `validate`, `run` and `sweep`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use faultbench_core::experiments::{
    classify_run, coarse_durations, fine_durations, render_rmse_svg, run_sweep, write_results_csv, Classification, SweepPlan,
    SweepResult, DEFAULT_CONSECUTIVE_GAP_S, DEFAULT_SEEDS_PER_DURATION,
};
use faultbench_core::plant::write_violations_csv;
use faultbench_core::scenario::{Scenario, ScenarioConfig};
use faultbench_core::Error;

/// Fault-injection experiments on a simulated lower-limb exoskeleton.
#[derive(Debug, Parser)]
#[command(name = "faultbench", version)]
struct Cli {
    /// Run seed (sweeps use it as the base seed). Overrides the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Only print errors and the machine-readable verdict.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file and list every problem found.
    Validate { scenario: PathBuf },
    /// Simulate one scenario and write trace.csv and violations.csv.
    Run(RunArgs),
    /// Sweep fault durations and write results, summary and plot.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Run with every injector disabled.
    #[arg(long)]
    disable_faults: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// 0.05 s to 0.5 s in 0.05 s steps.
    Fine,
    /// 0.5 s to 3.0 s in 0.25 s steps.
    Coarse,
}

#[derive(Debug, Args)]
struct SweepArgs {
    scenario: PathBuf,
    /// Duration grid (default: fine).
    #[arg(long, value_enum, conflicts_with = "durations")]
    preset: Option<Preset>,
    /// Explicit comma-separated durations in seconds.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    durations: Option<Vec<f64>>,
    /// Seeds per duration.
    #[arg(long, default_value_t = DEFAULT_SEEDS_PER_DURATION)]
    seeds: usize,
    /// Worker threads (default: all cores).
    #[arg(long, env = "FAULTBENCH_JOBS")]
    jobs: Option<usize>,
    /// Injectors whose window length is swept (default: the case-study pair).
    #[arg(long, value_delimiter = ',')]
    vary: Option<Vec<String>>,
    /// Joint whose signals are scored.
    #[arg(long, default_value = "knee_right")]
    joint: String,
    /// Gap below which two fault windows count as consecutive, in seconds.
    #[arg(long, default_value_t = DEFAULT_CONSECUTIVE_GAP_S)]
    consecutive_gap: f64,
}

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INVALID: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const ERROR: u8 = 3;
    pub const FAILURE: u8 = 4;
    pub const DIVERGED: u8 = 5;
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match &cli.command {
        Command::Validate { scenario } => validate(scenario, cli.quiet),
        Command::Run(args) => run(&cli, args),
        Command::Sweep(args) => sweep(&cli, args),
    }
}

fn validate(path: &Path, quiet: bool) -> u8 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return exit::CONFIG;
        }
    };
    let config = match ScenarioConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return exit::CONFIG;
        }
    };
    let mut problems = config.violations();
    if problems.is_empty() {
        match Scenario::from_config(config, path.parent()) {
            Ok(_) => {}
            Err(Error::Invalid(v)) => problems = v,
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        if !quiet {
            println!("OK");
        }
        return exit::OK;
    }
    for p in &problems {
        println!("{}: {p}", path.display());
    }
    exit::INVALID
}

fn load(path: &Path) -> Result<Scenario, u8> {
    Scenario::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        exit::CONFIG
    })
}

fn code_for(err: &Error) -> u8 {
    match err.root() {
        Error::NumericalDivergence { .. } => exit::DIVERGED,
        _ => exit::CONFIG,
    }
}

fn create_out(dir: &Path) -> Result<(), u8> {
    fs::create_dir_all(dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        exit::CONFIG
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), u8> {
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        exit::CONFIG
    })
}

fn run(cli: &Cli, args: &RunArgs) -> u8 {
    match try_run(cli, args) {
        Ok(code) | Err(code) => code,
    }
}

fn try_run(cli: &Cli, args: &RunArgs) -> Result<u8, u8> {
    let mut scenario = load(&args.scenario)?;
    if args.disable_faults {
        scenario.config = scenario.config.with_injectors_disabled();
    }
    let seed = cli.seed.unwrap_or(scenario.config.seed.base);
    let outcome = scenario
        .build_graph()
        .and_then(|mut g| g.run(&scenario.clock()?, seed));
    let trace = outcome.map_err(|e| {
        eprintln!("error: {e}");
        code_for(&e)
    })?;

    create_out(&cli.out)?;
    let mut trace_csv = Vec::new();
    trace.write_csv(&mut trace_csv).expect("in-memory write");
    write_file(&cli.out.join("trace.csv"), trace_csv)?;
    let mut violations_csv = Vec::new();
    write_violations_csv(trace.violations(), &mut violations_csv).expect("in-memory write");
    write_file(&cli.out.join("violations.csv"), violations_csv)?;

    let class = classify_run(trace.violations());
    println!("{}", class.as_str());
    if !cli.quiet {
        eprintln!(
            "seed {seed}: {} steps, {} violations, outputs in {}",
            trace.len(),
            trace.violations().count(),
            cli.out.display()
        );
    }
    Ok(match class {
        Classification::Nominal => exit::OK,
        Classification::Error => exit::ERROR,
        Classification::Failure => exit::FAILURE,
    })
}

fn sweep(cli: &Cli, args: &SweepArgs) -> u8 {
    match try_sweep(cli, args) {
        Ok(()) => exit::OK,
        Err(code) => code,
    }
}

fn try_sweep(cli: &Cli, args: &SweepArgs) -> Result<(), u8> {
    let scenario = load(&args.scenario)?;
    let durations = match (&args.durations, args.preset) {
        (Some(d), _) => d.clone(),
        (None, Some(Preset::Coarse)) => coarse_durations(),
        (None, Some(Preset::Fine) | None) => fine_durations(),
    };
    let mut plan = SweepPlan::new(scenario, durations);
    plan.seeds_per_duration = args.seeds;
    if let Some(seed) = cli.seed {
        plan.base_seed = seed;
    }
    if let Some(vary) = &args.vary {
        plan.varied_injectors = vary.clone();
    }
    plan.observed_joint = args.joint.parse().map_err(|e| {
        eprintln!("error: --joint: {e}");
        exit::CONFIG
    })?;
    plan.consecutive_gap_s = args.consecutive_gap;
    plan.jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let result = run_sweep(&plan).map_err(|e| {
        eprintln!("error: {e}");
        code_for(&e)
    })?;

    create_out(&cli.out)?;
    let mut csv = Vec::new();
    write_results_csv(&result.rows(), &mut csv).expect("in-memory write");
    write_file(&cli.out.join("sweep_results.csv"), csv)?;
    write_file(&cli.out.join("sweep_summary.json"), result.summary.to_json_pretty() + "\n")?;
    write_file(&cli.out.join("rmse_plot.svg"), render_rmse_svg(&result.summary))?;
    if !cli.quiet {
        print_summary(&result);
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3} s"))
}

fn print_summary(result: &SweepResult) {
    let s = &result.summary;
    println!("duration_s  runs  mean_pos_rmse  min      max      nominal  error  failure");
    for d in &s.durations {
        println!(
            "{:<10.3}  {:<4}  {:<13.4}  {:<7.4}  {:<7.4}  {:<7}  {:<5}  {}",
            d.duration_s, d.runs, d.rmse_pos_rad.mean, d.rmse_pos_rad.min, d.rmse_pos_rad.max, d.nominal, d.error, d.failure
        );
    }
    if let Some(fit) = s.fit {
        println!("fit: {:.4} d^2 + {:.4} d + {:.4} (residual {:.4})", fit.a, fit.b, fit.c, fit.residual);
    }
    println!("d* (50% failures): {}", fmt_opt(s.d_star_s));
    println!("longest duration with <= 10% failures: {}", fmt_opt(s.max_safe_duration_s));
    println!(
        "consecutive faults (gap < {} s): d* {}; isolated: d* {}",
        s.consecutive_gap_s,
        fmt_opt(s.consecutive.d_star_s),
        fmt_opt(s.isolated.d_star_s)
    );
}
