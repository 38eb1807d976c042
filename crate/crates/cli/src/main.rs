//! Command-line front end: thresholds, capacities, large-dimension constants,
//! G diagnostics and optimized shell laws, as CSV or JSON.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use wiretap_amp::{find_r_bar, optimize, ChannelParams, Error, OptimizerConfig, QuadratureSpec};

use output::{emit, Format, RunManifest};

const THREADS_VAR: &str = "WIRETAP_AMP_THREADS";

#[derive(Parser, Serialize)]
#[command(name = "wiretap-amp", version, about = "Secrecy capacity of the amplitude-constrained Gaussian wiretap channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write the artifact here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    #[serde(skip)]
    format: Format,

    /// Seed for the Monte-Carlo paths
    #[arg(long, default_value_t = QuadratureSpec::default().seed, global = true)]
    seed: u64,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Small-amplitude threshold
    Rbar {
        #[command(flatten)]
        channel: ChannelArgs,
        /// Bracket width for the threshold
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Sweep the reference grid of dimensions and variances
        #[arg(long)]
        table1: bool,
    },
    /// Secrecy capacity at one budget or over a sweep
    Capacity {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, value_enum, default_value_t = Regime::Auto)]
        regime: Regime,
        /// Candidate radii scanned per optimizer round
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Threshold growth with the dimension and its limiting constant
    Asymptotic {
        #[arg(long, default_value_t = 1.0)]
        s1: f64,
        #[arg(long)]
        s2: f64,
        #[arg(long, default_value_t = 35)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Samples and sign changes of G on a log-spaced grid
    DiagnoseG {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(short = 'R', long = "radius")]
        radius: f64,
        /// Grid points
        #[arg(long, default_value_t = 400)]
        grid: usize,
    },
    /// Optimized shell laws at one budget or over a sweep
    Optimize {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
}

#[derive(Args, Serialize)]
struct ChannelArgs {
    /// Dimension
    #[arg(short = 'n', default_value_t = 1)]
    n: usize,
    /// Legitimate receiver noise variance
    #[arg(long, default_value_t = 1.0)]
    s1: f64,
    /// Eavesdropper noise variance
    #[arg(long)]
    s2: Option<f64>,
}

impl ChannelArgs {
    fn params(&self) -> anyhow::Result<ChannelParams> {
        let s2 = self.s2.ok_or_else(|| anyhow!(Error::InvalidParams("--s2 is required".into())))?;
        Ok(ChannelParams::new(self.n, self.s1, s2)?)
    }
}

#[derive(Args, Serialize)]
struct BudgetArgs {
    /// Amplitude budget
    #[arg(short = 'R', long = "radius", conflicts_with = "sweep", required_unless_present = "sweep")]
    radius: Option<f64>,
    /// Evenly spaced budgets `lo:hi:steps`, both ends included
    #[arg(long)]
    sweep: Option<Sweep>,
}

impl BudgetArgs {
    fn budgets(&self) -> Vec<f64> {
        match (&self.sweep, self.radius) {
            (Some(sweep), _) => sweep.points(),
            (None, Some(r)) => vec![r],
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Sweep {
    lo: f64,
    hi: f64,
    steps: usize,
}

impl Sweep {
    fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        (0..self.steps)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts[..] else {
            return Err(format!("expected lo:hi:steps, got {s:?}"));
        };
        let lo: f64 = lo.parse().map_err(|e| format!("bad lower end: {e}"))?;
        let hi: f64 = hi.parse().map_err(|e| format!("bad upper end: {e}"))?;
        let steps: usize = steps.parse().map_err(|e| format!("bad step count: {e}"))?;
        if !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() || steps == 0 {
            return Err(format!("need 0 <= lo <= hi and steps >= 1, got {s:?}"));
        }
        Ok(Self { lo, hi, steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Closed form up to the threshold, optimizer beyond it
    Auto,
    ClosedForm,
    Optimizer,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| anyhow!(Error::InvalidParams(format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("building worker pool")?;
    Ok(())
}

fn optimizer_config(grid: usize, spec: QuadratureSpec) -> OptimizerConfig {
    OptimizerConfig {
        grid_size: grid,
        spec,
        ..OptimizerConfig::default()
    }
}

/// Runs the command. A `false` flag in the result marks an artifact that was
/// written but holds unconverged optimizer runs.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    let started = Instant::now();
    let spec = QuadratureSpec {
        seed: cli.seed,
        ..QuadratureSpec::default()
    };
    let mut converged = true;
    let (name, artifact) = match &cli.command {
        Command::Rbar { channel, tol, table1 } => {
            if *table1 {
                ("rbar", commands::table1(channel.s1, *tol, &spec)?)
            } else {
                ("rbar", commands::rbar(&channel.params()?, *tol, &spec)?)
            }
        }
        Command::Capacity {
            channel,
            budget,
            regime,
            grid,
            tol,
        } => {
            let p = channel.params()?;
            let cfg = optimizer_config(*grid, spec);
            cfg.validate()?;
            let r_bar = find_r_bar(&p, *tol, &spec)?.r_bar;
            let points: Result<Vec<_>, Error> = budget
                .budgets()
                .par_iter()
                .map(|&r| commands::capacity_at(&p, r, r_bar, *regime, &cfg))
                .collect();
            let points = points?;
            for c in points.iter().filter(|c| !c.converged) {
                eprintln!(
                    "not certified at R = {}: KKT gap {:.3e} nats, {} atoms",
                    c.radius,
                    c.kkt_gap,
                    c.pmf.len()
                );
                converged = false;
            }
            ("capacity", commands::capacity(&p, r_bar, &points))
        }
        Command::Asymptotic { s1, s2, n_max, tol } => {
            if *n_max == 0 {
                bail!(Error::InvalidParams("--n-max must be >= 1".into()));
            }
            ("asymptotic", commands::asymptotic(*s1, *s2, *n_max, *tol, &spec)?)
        }
        Command::DiagnoseG { channel, radius, grid } => {
            ("diagnose-g", commands::g_diagnostic(&channel.params()?, *radius, *grid, &spec)?)
        }
        Command::Optimize { channel, budget, grid } => {
            let p = channel.params()?;
            let cfg = optimizer_config(*grid, spec);
            let outcomes: Result<Vec<_>, Error> = budget
                .budgets()
                .par_iter()
                .map(|&r| Ok((r, optimize(&p, r, &cfg)?)))
                .collect();
            let outcomes = outcomes?;
            for (r, out) in outcomes.iter().filter(|o| !o.1.converged) {
                eprintln!(
                    "not certified at R = {r}: KKT gap {:.3e} nats, support residual {:.3e}, argmax {}, {} iterations",
                    out.report.gap, out.report.support_residual, out.report.argmax, out.iterations
                );
                converged = false;
            }
            ("optimize", commands::pmf_evolution(&p, &outcomes))
        }
    };
    let manifest = RunManifest {
        command: name.to_string(),
        params: serde_json::to_value(&cli.command)?,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cli.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    emit(&artifact.render(cli.format, &manifest)?, cli.out.as_deref())?;
    Ok(converged)
}

/// 2 for bad input, 3 for numerical trouble.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Domain(_) | Error::InvalidParams(_) | Error::Regime { .. }) => 2,
        Some(Error::NonConvergence { .. } | Error::Bracket { .. }) => 3,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(&cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
