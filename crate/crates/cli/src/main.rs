use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use halt_cli::commands::{self, SynthOptions};
use halt_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "haltstudy", version, about = "Event study of trading halts")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs). Does not affect output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify, filter, analyze and fit; write the full output tree.
    Run(RunArgs),
    /// Repeat the analysis for several trend windows and count sign flips.
    Robustness {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated trend windows, e.g. 60,240.
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
    },
    /// Eligibility report and count table only.
    Counts(RunArgs),
    /// Refit exponents from a curves.csv of an earlier run.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        curves: PathBuf,
    },
    /// Generate a synthetic panel, halt registry and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        events_per_group: usize,
        #[arg(long, default_value_t = 0.25)]
        sigma: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bars: Option<PathBuf>,
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long)]
    halts: Option<PathBuf>,
    #[arg(long)]
    trend_window: Option<usize>,
    #[arg(long)]
    lookback_days: Option<usize>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    #[arg(long)]
    min_r2: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(seed, bars, calendar, halts, trend_window, lookback_days, bootstrap_resamples, min_r2);
        if let Some(out) = &self.out {
            c.out_dir = Some(out.clone());
        }
        let out = c.required(&c.out_dir, "out")?;
        Ok((c, out))
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let (c, out) = args.resolve()?;
            commands::cmd_run(&c, &out)?;
        }
        Command::Robustness { run, windows } => {
            let (mut c, out) = run.resolve()?;
            if let Some(w) = windows {
                c.robustness_windows = w;
            }
            let flips = commands::cmd_robustness(&c, &out)?;
            let changed = flips.iter().filter(|f| f.flips > 0).count();
            eprintln!("{changed} of {} events change sign across windows", flips.len());
        }
        Command::Counts(args) => {
            let (c, out) = args.resolve()?;
            commands::cmd_counts(&c, &out)?;
        }
        Command::Fit { run, curves } => {
            let (c, out) = run.resolve()?;
            commands::cmd_fit(&c, &curves, &out)?;
        }
        Command::Synth {
            out,
            seed,
            events_per_group,
            sigma,
        } => {
            let opts = SynthOptions {
                events_per_group,
                sigma,
                seed,
            };
            commands::cmd_synth(&opts, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
