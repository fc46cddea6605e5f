use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cellfree_ris::{
    admm_formula, complexity_estimate, generate_channels, run_baseline, signaling_formula, sweep_with_workers, verify,
    write_csv, MethodId, ScenarioConfig, SolveOptions, SweepKind, SweepSpec,
};

#[derive(Parser)]
#[command(name = "cellfree-ris", version, about = "Partially distributed beamforming for RIS-aided cell-free networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization and print the report as JSON.
    Solve(SolveArgs),
    /// Run a Monte-Carlo sweep and write CSV.
    Sweep(SweepArgs),
    /// Run the randomized invariant suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print backhaul signaling of the proposed scheme against fully distributed ADMM.
    Overhead {
        /// Scenario file, or `default`.
        #[arg(long, default_value = "default")]
        config: String,
        /// Iteration counts to tabulate.
        #[arg(long, value_delimiter = ',', default_value = "10")]
        iterations: Vec<u64>,
    },
}

#[derive(Args)]
struct Tuning {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Snap the RIS phases to unit modulus after every passive solve.
    #[arg(long)]
    finalize_unit_modulus: bool,
}

impl Tuning {
    fn apply(&self, config: &mut ScenarioConfig, opts: &mut SolveOptions) {
        if let Some(n) = self.max_iters {
            config.max_iterations = n;
        }
        if let Some(e) = self.eps {
            config.convergence_eps = e;
        }
        if self.finalize_unit_modulus {
            opts.passive.finalize_unit_modulus = true;
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Scenario file, or `default`.
    #[arg(long, default_value = "default")]
    config: String,
    /// Channel seed (defaults to the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "pd_with_ris")]
    method: MethodId,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the wall-clock time so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Power,
    UserLocation,
    RisElements,
}

impl From<KindArg> for SweepKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Power => SweepKind::Power,
            KindArg::UserLocation => SweepKind::UserLocation,
            KindArg::RisElements => SweepKind::RisElements,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec file; otherwise the default grid of `--kind`.
    #[arg(long, conflicts_with = "kind")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Base scenario file replacing the sweep file's `base_config`.
    #[arg(long)]
    config: Option<String>,
    /// Monte-Carlo seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these methods (repeatable).
    #[arg(long)]
    method: Vec<MethodId>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

fn load_config(arg: &str) -> cellfree_ris::Result<ScenarioConfig> {
    if arg == "default" {
        Ok(ScenarioConfig::default())
    } else {
        ScenarioConfig::load(arg.as_ref())
    }
}

fn solve(args: SolveArgs) -> cellfree_ris::Result<()> {
    let mut config = load_config(&args.config)?;
    let mut opts = SolveOptions::default();
    args.tuning.apply(&mut config, &mut opts);
    let seed = args.seed.unwrap_or(config.seed);
    let ch = generate_channels(&config, seed)?;
    let (_, report) = run_baseline(args.method, &config, &ch, &opts)?;
    let text = report.to_json(!args.no_timing);
    match args.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> cellfree_ris::Result<()> {
    let mut spec = match (&args.spec, args.kind) {
        (Some(path), _) => SweepSpec::load(path)?,
        (None, Some(kind)) => SweepSpec::default_for(kind.into()),
        (None, None) => SweepSpec::default_for(SweepKind::Power),
    };
    if let Some(c) = &args.config {
        spec.base_config = load_config(c)?;
    }
    if let Some(n) = args.seeds {
        spec.num_seeds = n;
    }
    if let Some(s) = args.seed {
        spec.first_seed = s;
    }
    if !args.method.is_empty() {
        spec.methods = args.method.clone();
    }
    args.tuning.apply(&mut spec.base_config, &mut spec.options);
    let result = sweep_with_workers(&spec, args.workers)?;
    for row in result.failures() {
        eprintln!(
            "warning: {} at {} seed {} failed: {}",
            row.method,
            row.sweep_value,
            row.seed,
            row.error.as_deref().unwrap_or("")
        );
    }
    match &args.out {
        Some(path) => cellfree_ris::emit_csv(&result, path)?,
        None => write_csv(&result, std::io::stdout().lock())?,
    }
    Ok(())
}

fn run_verify(seed: u64) -> cellfree_ris::Result<bool> {
    let checks = verify::run_suite(seed);
    let mut out = std::io::stdout().lock();
    for c in &checks {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn overhead(config: &str, iterations: &[u64]) -> cellfree_ris::Result<()> {
    let c = load_config(config)?;
    let (b, nt, k, m) = (c.num_aps as u64, c.antennas_per_ap as u64, c.num_users as u64, c.ris_elements as u64);
    let mut out = std::io::stdout().lock();
    writeln!(out, "B = {b}, N_t = {nt}, K = {k}, M = {m}")?;
    writeln!(out, "{:>10} {:>12} {:>12} {:>14}", "iterations", "proposed", "admm", "complexity")?;
    for &i in iterations {
        writeln!(
            out,
            "{:>10} {:>12} {:>12} {:>14.4e}",
            i,
            signaling_formula(b, nt, k, m, i),
            admm_formula(b, nt, k, m, i),
            complexity_estimate(b, nt, k, m, i)
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => solve(args).map(|_| true),
        Command::Sweep(args) => run_sweep(args).map(|_| true),
        Command::Verify { seed } => run_verify(seed),
        Command::Overhead { config, iterations } => overhead(&config, &iterations).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        // downstream reader closed early (e.g. `| head`)
        Err(cellfree_ris::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
