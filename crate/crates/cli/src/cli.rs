use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checks::{Outcome, DEFAULT_ORDERS};
use crate::commands::{self, RunOptions};
use crate::config::Experiment;
use crate::error::CliError;
use crate::plot::PlotKind;

#[derive(Debug, Parser)]
#[command(name = "ctsd", version, about = "Continuous-time sigma-delta simulation and filtered-error analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate each input once and write trace, demodulation and plot files.
    Simulate(RunArgs),
    /// Measure ‖I‖₂ across oversampling ratios and fit log-log slopes.
    Sweep(RunArgs),
    /// Run the kernel and shape self-checks.
    Validate(ValidateArgs),
    /// Render a demod or sweep CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Skip SVG output.
    #[arg(long)]
    pub no_svg: bool,
    /// Worker threads; overrides `sweep.jobs`.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Check a single kernel order instead of 1 through 6.
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u32).range(1..=16))]
    pub kernel_order: Option<u32>,
    /// Corrupt the named builtin shape before checking.
    #[arg(long, value_name = "SHAPE", hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Demod,
    Sweep,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV written by `simulate` (demod_*.csv) or `sweep` (sweep.csv).
    #[arg(value_name = "CSV")]
    pub csv: PathBuf,
    /// Expected schema; detected from the header when omitted.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Output directory; defaults to the CSV's directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<(Experiment, RunOptions), CliError> {
        let exp = Experiment::load(&self.config)?;
        let opts = RunOptions {
            out: self.out.clone(),
            no_svg: self.no_svg,
            jobs: self.jobs.map(|j| j as usize),
        };
        Ok((exp, opts))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let (exp, opts) = args.load()?;
            for s in commands::simulate(&exp, &opts)? {
                println!(
                    "{}: N={} samples={} l2_error={:.6e} max|I|={:.6e}",
                    s.label, s.ratio, s.samples, s.l2_error, s.max_abs_error
                );
                for f in &s.files {
                    println!("  wrote {}", f.display());
                }
            }
        }
        Command::Sweep(args) => {
            let (exp, opts) = args.load()?;
            let out = commands::sweep(&exp, &opts)?;
            for r in &out.results {
                for p in &r.points {
                    println!("{} N={:<5} l2_error={:.6e}", r.label, p.ratio, p.l2_error);
                }
                for f in &r.failures {
                    eprintln!("warning: {} N={} excluded: {}", r.label, f.ratio, f.reason);
                }
                match r.fit {
                    Some(fit) => println!(
                        "{}: slope {:.4} residual {:.4} ({} points)",
                        r.label,
                        fit.slope,
                        fit.residual,
                        r.points.len()
                    ),
                    None => eprintln!("warning: {}: fewer than 3 stable points, no slope", r.label),
                }
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate(args) => {
            let orders: Vec<u32> = match args.kernel_order {
                Some(k) => vec![k],
                None => DEFAULT_ORDERS.collect(),
            };
            let results = commands::validate(&orders, args.inject_fault.as_deref())?;
            let width = results.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0);
            for (name, outcome) in &results {
                println!("{name:<width$}  {outcome}");
            }
            let failed = results.iter().filter(|(_, o)| o.is_failure()).count();
            let skipped = results
                .iter()
                .filter(|(_, o)| matches!(o, Outcome::NotApplicable(_)))
                .count();
            println!(
                "{} passed, {failed} failed, {skipped} not applicable",
                results.len() - failed - skipped
            );
            if failed > 0 {
                return Err(CliError::ChecksFailed {
                    failed,
                    total: results.len(),
                });
            }
        }
        Command::Plot(args) => {
            let kind = args.kind.map(|k| match k {
                KindArg::Demod => PlotKind::Demod,
                KindArg::Sweep => PlotKind::Sweep,
            });
            let path = commands::plot(&args.csv, kind, args.out.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
