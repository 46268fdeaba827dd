use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ctsd::analysis::{convergence_sweep, l2_error, SweepResult};
use ctsd::filter::{error_signal, uniform_grid, DemodulationResult};
use ctsd::modulator::{run, SimulationTrace};
use rayon::prelude::*;

use crate::checks::{CheckContext, CheckRegistry, Outcome};
use crate::config::Experiment;
use crate::error::CliError;
use crate::plot::{self, DemodTable, PlotKind, SweepTable};

/// Command-line overrides shared by `simulate` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub no_svg: bool,
    pub jobs: Option<usize>,
}

impl RunOptions {
    fn out_dir(&self, exp: &Experiment) -> PathBuf {
        self.out.clone().unwrap_or_else(|| exp.output_dir.clone())
    }

    fn svg(&self, exp: &Experiment) -> bool {
        exp.svg && !self.no_svg
    }

    fn pool(&self, exp: &Experiment) -> Result<rayon::ThreadPool, CliError> {
        let threads = self.jobs.or(exp.jobs).unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub label: String,
    pub ratio: u32,
    pub samples: usize,
    pub l2_error: f64,
    pub max_abs_error: f64,
    pub files: Vec<PathBuf>,
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn demod_table(r: &DemodulationResult) -> DemodTable {
    DemodTable {
        t: r.grid.clone(),
        z_hat: r.z_hat.clone(),
        z_hat_sd: r.z_hat_sd.clone(),
        error: r.error.clone(),
    }
}

/// Runs every input at the configured ratio and writes
/// `trace_<label>.csv`, `demod_<label>.csv` and `demod_<label>.svg`.
pub fn simulate(exp: &Experiment, opts: &RunOptions) -> Result<Vec<SimulateSummary>, CliError> {
    let out = opts.out_dir(exp);
    let pool = opts.pool(exp)?;
    let grid = uniform_grid(0.0, exp.duration, exp.grid_spacing);
    let runs: Vec<(SimulationTrace, DemodulationResult)> = pool.install(|| {
        exp.inputs
            .par_iter()
            .map(|case| -> Result<_, CliError> {
                let trace = run(&case.input, &exp.modulator, exp.duration)?;
                let demod = error_signal(
                    &case.input,
                    &trace,
                    &case.demod_shape,
                    &exp.kernel,
                    &grid,
                    &exp.quadrature,
                )?;
                Ok((trace, demod))
            })
            .collect::<Result<_, _>>()
    })?;

    prepare_dir(&out)?;
    let mut summaries = Vec::with_capacity(runs.len());
    for (case, (trace, demod)) in exp.inputs.iter().zip(&runs) {
        let trace_path = out.join(format!("trace_{}.csv", case.label));
        let demod_path = out.join(format!("demod_{}.csv", case.label));
        write_with(&trace_path, |w| trace.write_csv(w))?;
        write_with(&demod_path, |w| demod.write_csv(w))?;
        let mut files = vec![trace_path, demod_path];
        if opts.svg(exp) {
            let svg_path = out.join(format!("demod_{}.svg", case.label));
            let title = format!("demod_{}", case.label);
            write_text(&svg_path, &plot::demod_svg(&demod_table(demod), &title)?)?;
            files.push(svg_path);
        }
        summaries.push(SimulateSummary {
            label: case.label.clone(),
            ratio: exp.modulator.oversampling_ratio,
            samples: trace.bitstream.len(),
            l2_error: l2_error(demod, exp.norm_window.0, exp.norm_window.1)?,
            max_abs_error: demod.max_abs_error(),
            files,
        });
    }
    Ok(summaries)
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub results: Vec<SweepResult>,
    pub files: Vec<PathBuf>,
}

pub fn write_sweep_csv<W: Write>(results: &[SweepResult], w: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(plot::SWEEP_COLUMNS)?;
    for r in results {
        for p in &r.points {
            out.write_record([r.label.clone(), p.ratio.to_string(), p.l2_error.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `failed_n` lists the ratios left out of the fit, separated by `;`.
pub fn write_summary_csv<W: Write>(results: &[SweepResult], w: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["input_label", "slope", "residual", "points_used", "failed_n"])?;
    for r in results {
        let (slope, residual) = match r.fit {
            Some(fit) => (fit.slope.to_string(), fit.residual.to_string()),
            None => (String::new(), String::new()),
        };
        let failed: Vec<String> = r.failures.iter().map(|f| f.ratio.to_string()).collect();
        out.write_record([
            r.label.clone(),
            slope,
            residual,
            r.points.len().to_string(),
            failed.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn csv_file(path: &Path, f: impl FnOnce(File) -> Result<(), csv::Error>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    f(file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Runtime(format!("{}: {other:?}", path.display())),
    })
}

/// Every input across every ratio; writes `sweep.csv`, `summary.csv` and
/// `sweep.svg`.
pub fn sweep(exp: &Experiment, opts: &RunOptions) -> Result<SweepOutput, CliError> {
    let mut distinct = exp.ratios.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(CliError::config(format!(
            "sweep.ratios needs at least 3 distinct values, got {}",
            distinct.len()
        )));
    }
    let out = opts.out_dir(exp);
    let pool = opts.pool(exp)?;
    let results: Vec<SweepResult> = pool.install(|| {
        exp.inputs
            .par_iter()
            .map(|case| convergence_sweep(&exp.sweep_spec(case)).map_err(CliError::from))
            .collect::<Result<_, _>>()
    })?;

    prepare_dir(&out)?;
    let sweep_path = out.join("sweep.csv");
    let summary_path = out.join("summary.csv");
    csv_file(&sweep_path, |f| write_sweep_csv(&results, f))?;
    csv_file(&summary_path, |f| write_summary_csv(&results, f))?;
    let mut files = vec![sweep_path, summary_path];
    if opts.svg(exp) {
        let table = SweepTable {
            series: results
                .iter()
                .map(|r| {
                    let pts = r.points.iter().map(|p| (p.ratio as f64, p.l2_error)).collect();
                    (r.label.clone(), pts)
                })
                .filter(|(_, pts): &(String, Vec<(f64, f64)>)| !pts.is_empty())
                .collect(),
        };
        if !table.series.is_empty() {
            let svg_path = out.join("sweep.svg");
            write_text(&svg_path, &plot::sweep_svg(&table, "sweep")?)?;
            files.push(svg_path);
        }
    }
    Ok(SweepOutput { results, files })
}

/// Runs the check suite; `fault` corrupts the named builtin shape first.
pub fn validate(orders: &[u32], fault: Option<&str>) -> Result<Vec<(String, Outcome)>, CliError> {
    let mut ctx = CheckContext::builtin();
    if let Some(name) = fault {
        if !ctx.corrupt_shape(name) {
            return Err(CliError::config(format!("no builtin shape `{name}` to corrupt")));
        }
    }
    Ok(CheckRegistry::builtin(orders.iter().copied()).run_all(&ctx))
}

/// Renders a CSV next to it, or into `out` when given.
pub fn plot(csv_path: &Path, kind: Option<PlotKind>, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => csv_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    prepare_dir(&dir)?;
    plot::plot_file(csv_path, kind, &dir)
}
