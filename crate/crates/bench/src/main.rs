use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dram_bench::config::{
    parse_method, parse_methods, parse_problem, parse_sigma_grid, Correction, SweepConfig, DEFAULT_K, DEFAULT_SEED,
    DEFAULT_SIGMA, DEFAULT_SIGMA_GRID, DEFAULT_SORTED_TRIALS, DEFAULT_TRIALS,
};
use dram_bench::error::{BenchError, Result};
use dram_bench::record::write_records_csv;
use dram_bench::solve::{solve_files, write_solve_csv};
use dram_bench::sorted::{run_sorted_losses, sorted_svg, write_sorted_csv};
use dram_bench::sweep::{run_sweep, sweep_svg, write_sweep_csv};
use dram_bench::table::{render_table, run_table, write_table_csv};
use dram_bench::timing::{render_timing, time_methods, write_timing_csv, DEFAULT_REPS};
use dram_bench::trial::{replay, Skipped, TrialSpec};
use dram_pose::rmsd::Problem;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dram-bench", version, about = "Benchmarks determinant-ratio and least-squares rotation estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Median loss, angle, defect and time per method on exact and noisy data
    Table(Common),
    /// Mean loss per method over a noise grid
    Sweep(Common),
    /// Per-trial losses sorted by the optimal loss
    Sorted(Common),
    /// Per-call solver times relative to the pseudoinverse map
    Time {
        #[command(flatten)]
        common: Common,
        /// Timed calls per method, of which the first 10% are warmup
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
    },
    /// Re-runs one trial and prints its records
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trial_id: u64,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        out: OutFormat,
    },
    /// Solves one pose from CSV point files
    Solve {
        #[arg(long, default_value = "enp", value_parser = parse_problem)]
        problem: Problem,
        /// Reference cloud, one point per row with a header
        #[arg(long)]
        cloud: PathBuf,
        /// Target cloud (enp) or orthographic image (onp)
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "dram", value_parser = parse_method)]
        method: dram_pose::rmsd::Method,
        #[arg(long = "correct", default_value = "svd")]
        correction: Correction,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        out: OutFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Trials per noise level
    #[arg(long)]
    trials: Option<usize>,
    /// Points per trial
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Single noise level
    #[arg(long, conflicts_with = "sigma_grid")]
    sigma: Option<f64>,
    /// Noise grid a:b:step
    #[arg(long)]
    sigma_grid: Option<String>,
    /// Point dimension; anything but 3 runs the N-dimensional DRaM mode
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Comma-separated methods or "all"
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long = "correct", default_value = "svd")]
    correction: Correction,
    #[arg(long, default_value = "enp", value_parser = parse_problem)]
    problem: Problem,
}

impl Common {
    /// `default_sigmas` applies when neither `--sigma` nor `--sigma-grid`
    /// is given.
    fn config(&self, default_trials: usize, default_sigmas: Vec<f64>) -> Result<SweepConfig> {
        let sigmas = match (&self.sigma_grid, self.sigma) {
            (Some(grid), _) => parse_sigma_grid(grid)?,
            (None, Some(s)) => vec![s],
            (None, None) => default_sigmas,
        };
        let methods = if self.dim != 3 && self.methods == "all" {
            vec![dram_pose::rmsd::Method::Dram]
        } else {
            parse_methods(&self.methods)?
        };
        let config = SweepConfig {
            problem: self.problem,
            sigmas,
            trials_per_sigma: self.trials.unwrap_or(default_trials),
            k: self.k,
            seed: self.seed,
            methods,
            correction: self.correction,
            dim: self.dim,
        };
        config.validate()?;
        Ok(config)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out_dir).map_err(|e| BenchError::Io(format!("{}: {e}", common.out_dir.display())))?;
    Ok(&common.out_dir)
}

fn report_skipped(skipped: &[Skipped]) {
    if !skipped.is_empty() {
        eprintln!("note: {} solver runs skipped on degenerate input", skipped.len());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Table(common) => {
            let config = common.config(DEFAULT_TRIALS, vec![0.0, DEFAULT_SIGMA])?;
            let report = run_table(&config)?;
            let dir = out_dir(&common)?;
            let text = render_table(&report);
            write_table_csv(create(dir, "table.csv")?, &report.rows)?;
            write_json(dir, "table.json", &report)?;
            write_text(dir, "table.txt", &text)?;
            let problems: &[Problem] = if config.is_nd() { &[Problem::Enp] } else { &[Problem::Enp, Problem::Onp] };
            for &p in problems {
                write_records_csv(create(dir, &format!("records_{}.csv", p.tag()))?, &report.records_for(p))?;
            }
            print!("{text}");
            report_skipped(&report.skipped);
        }
        Command::Sweep(common) => {
            let config = common.config(DEFAULT_TRIALS, parse_sigma_grid(DEFAULT_SIGMA_GRID)?)?;
            let report = run_sweep(&config)?;
            let dir = out_dir(&common)?;
            let p = config.problem.tag();
            write_sweep_csv(create(dir, &format!("sweep_{p}.csv"))?, &report.points)?;
            write_json(dir, &format!("sweep_{p}.json"), &report)?;
            write_text(dir, &format!("sweep_{p}.svg"), &sweep_svg(&report))?;
            write_records_csv(create(dir, &format!("records_{p}.csv"))?, &report.records)?;
            println!("{} sweep points written to {}", report.points.len(), dir.display());
            report_skipped(&report.skipped);
        }
        Command::Sorted(common) => {
            let config = common.config(DEFAULT_SORTED_TRIALS, vec![DEFAULT_SIGMA])?;
            let report = run_sorted_losses(&config)?;
            let dir = out_dir(&common)?;
            let p = config.problem.tag();
            write_sorted_csv(create(dir, &format!("sorted_{p}.csv"))?, &report.rows)?;
            write_json(dir, &format!("sorted_{p}.json"), &report)?;
            write_text(dir, &format!("sorted_{p}.svg"), &sorted_svg(&report))?;
            println!("{} sorted trials written to {}", report.rows.len(), dir.display());
            report_skipped(&report.skipped);
        }
        Command::Time { common, reps } => {
            let config = common.config(DEFAULT_TRIALS, vec![DEFAULT_SIGMA])?;
            let report = time_methods(&config, reps)?;
            let dir = out_dir(&common)?;
            let p = config.problem.tag();
            write_timing_csv(create(dir, &format!("timing_{p}.csv"))?, &report.rows)?;
            write_json(dir, &format!("timing_{p}.json"), &report)?;
            print!("{}", render_timing(&report));
        }
        Command::Replay { common, trial_id, out } => {
            let config = common.config(DEFAULT_TRIALS, vec![DEFAULT_SIGMA])?;
            if config.sigmas.len() != 1 {
                return Err(BenchError::Config("replay takes one noise level".into()));
            }
            let spec = TrialSpec {
                problem: config.problem,
                seed: config.seed,
                trial_id,
                k: config.k,
                sigma: config.sigmas[0],
                dim: config.dim,
            };
            let outcome = replay(&spec, &config.methods, config.correction)?;
            let stdout = io::stdout().lock();
            match out {
                OutFormat::Csv => write_records_csv(stdout, &outcome.records)?,
                OutFormat::Json => {
                    let mut w = stdout;
                    serde_json::to_writer_pretty(&mut w, &outcome)?;
                    writeln!(w)?;
                }
            }
            report_skipped(&outcome.skipped);
        }
        Command::Solve { problem, cloud, target, method, correction, out } => {
            let open = |p: &Path| File::open(p).map_err(|e| BenchError::Io(format!("{}: {e}", p.display())));
            let result = solve_files(problem, open(&cloud)?, open(&target)?, method, correction)?;
            let mut stdout = io::stdout().lock();
            match out {
                OutFormat::Csv => write_solve_csv(stdout, &result)?,
                OutFormat::Json => {
                    serde_json::to_writer_pretty(&mut stdout, &result)?;
                    writeln!(stdout)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let code = if e.use_stderr() { 2 } else { 0 };
        let _ = e.print();
        std::process::exit(code);
    });
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
