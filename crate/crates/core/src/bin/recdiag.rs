use clap::{Args, Parser, Subcommand};
use recdiag::cusum::Boundary;
use recdiag::engine::Method;
use recdiag::io::{CsvOptions, IoError};
use recdiag::permute::ScheduleRule;
use recdiag::pipeline::{self, Error, Formats, Manifest, RunConfig, RunSettings, Source};
use recdiag::simgen::parse_scenario_config;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Recursive-estimation outlier diagnostics for linear regression.
#[derive(Parser)]
#[command(name = "recdiag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace ensemble, cusum and diagnostics for one CSV dataset.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Full run plus one reduced run per drop set, with overlay plots.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated row ids to remove; repeat for several sets.
        #[arg(long, required = true)]
        drop: Vec<String>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Simulate the scenarios of a TOML file and run each.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Print the cusum boundary constant `a` for a significance level.
    Boundary {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
    },
    /// Repeat the job recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "recdiag-out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    response: String,
    /// Prepend a column of ones (the default).
    #[arg(long, overrides_with = "no_intercept")]
    intercept: bool,
    #[arg(long)]
    no_intercept: bool,
    /// Column holding row identifiers; rows are numbered 1..n otherwise.
    #[arg(long)]
    id_column: Option<String>,
}

impl InputArgs {
    fn config(&self, settings: RunSettings) -> RunConfig {
        let mut options = CsvOptions::new(&self.response);
        options.intercept = self.intercept || !self.no_intercept;
        options.id_column = self.id_column.clone();
        RunConfig {
            source: Source::Csv {
                path: self.input.clone(),
                options,
            },
            settings,
        }
    }
}

#[derive(Args)]
struct SettingsArgs {
    /// auto, circular, random:N or exhaustive.
    #[arg(long, default_value = "auto")]
    schedule: ScheduleRule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    trim_alpha: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_CUSUM_ALPHA)]
    cusum_alpha: f64,
    #[arg(long, default_value = "resolve")]
    method: Method,
    #[arg(long, default_value = "recdiag-out")]
    out: PathBuf,
    /// Comma-separated subset of csv, json, svg.
    #[arg(long, default_value = "csv,json,svg")]
    format: String,
}

impl SettingsArgs {
    fn settings(&self) -> Result<RunSettings, Error> {
        Ok(RunSettings {
            schedule: self.schedule,
            seed: self.seed,
            trim_alpha: self.trim_alpha,
            cusum_alpha: self.cusum_alpha,
            method: self.method,
            formats: self.format.parse::<Formats>()?,
        })
    }
}

fn report(manifest: &Manifest, out: &Path) {
    for run in &manifest.runs {
        let dir = if run.dir.is_empty() { "." } else { &run.dir };
        println!(
            "{dir}: n={} p={} permutations={} valid={} crossings={}",
            run.n, run.p, run.permutations, run.valid_traces, run.crossings
        );
        for w in &run.warnings {
            eprintln!("warning: {dir}: {w}");
        }
    }
    println!("wrote {} files to {}", manifest.files.len(), out.display());
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { input, settings } => {
            let cfg = input.config(settings.settings()?);
            report(&pipeline::run_pipeline(&cfg, &settings.out)?, &settings.out);
        }
        Command::Compare {
            input,
            drop,
            settings,
        } => {
            let cfg = input.config(settings.settings()?);
            let drops: Vec<Vec<String>> = drop
                .iter()
                .map(|set| {
                    set.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                })
                .collect();
            report(&pipeline::run_compare(&cfg, &drops, &settings.out)?, &settings.out);
        }
        Command::Simulate { scenario, settings } => {
            let text = std::fs::read_to_string(&scenario).map_err(|source| IoError::Read {
                path: scenario.display().to_string(),
                source,
            })?;
            let specs = parse_scenario_config(&text)?.specs();
            let run = settings.settings()?;
            report(&pipeline::run_simulate(&run, &specs, &settings.out)?, &settings.out);
        }
        Command::Boundary { alpha } => {
            println!("{}", Boundary::new(alpha)?.a);
        }
        Command::Rerun { manifest, out } => {
            report(&pipeline::rerun(&manifest, &out)?, &out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = pipeline::thread_cap_from_env()
        .and_then(|cap| pipeline::with_threads(cap, || execute(cli.command)))
        .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("recdiag: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
