//! Command-line front end for the `aada` experiment harness.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aada::harness::{
    emit_curves, find_run_logs, output_root, read_scores, run_grid, sorted_scores, GridReport,
    Preset, RunConfig, RunDocument,
};
use aada::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "aada", version, about = "Active learning under domain shift")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Toy,
    PaperDigits,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Toy => Preset::Toy,
            PresetArg::PaperDigits => Preset::PaperDigits,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML file layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run this seed only, replacing the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; overrides AADA_OUT_DIR and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Concurrent runs.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value = "toy")]
    pub preset: PresetArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured scheme and strategy over every seed.
    Run(ExperimentArgs),
    /// Cross the configured schemes, strategies and seeds.
    Grid(ExperimentArgs),
    /// Aggregate run logs into a curve table.
    Curves {
        /// Run-log files or directories searched for them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output CSV; defaults to curves.csv in the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a round's score file sorted by score.
    InspectScores {
        /// A scores CSV, or a run directory together with --round.
        path: PathBuf,
        #[arg(long)]
        round: Option<usize>,
        /// Print only the first N rows.
        #[arg(long)]
        top: Option<usize>,
    },
}

fn load_config(args: &ExperimentArgs) -> Result<RunConfig> {
    let preset = Preset::from(args.preset);
    let mut config = match &args.config {
        Some(path) => RunConfig::from_path(preset, path)?,
        None => RunConfig::preset(preset)?,
    };
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if args.workers == Some(0) {
        return Err(Error::InvalidArgument("--workers must be positive".into()));
    }
    Ok(config)
}

fn experiment(args: &ExperimentArgs, grid: bool) -> Result<GridReport> {
    let mut config = load_config(args)?;
    if !grid {
        config.grid = Default::default();
    }
    let root = output_root(&config, args.out.as_deref());
    run_grid(&config, &root, args.workers)
}

fn report(report: &GridReport) -> bool {
    let mut ok = true;
    for cell in &report.cells {
        match &cell.result {
            Ok(doc) => {
                let acc = doc
                    .log
                    .final_accuracy()
                    .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
                println!(
                    "ok     {} {} seed {}: final accuracy {} -> {}",
                    cell.scheme,
                    cell.strategy,
                    cell.seed,
                    acc,
                    cell.dir.display()
                );
            }
            Err(e) => {
                ok = false;
                eprintln!("failed {} {} seed {}: {e}", cell.scheme, cell.strategy, cell.seed);
            }
        }
    }
    if let Some(path) = &report.curves_path {
        println!("curves -> {}", path.display());
    }
    ok
}

fn curves(inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut logs = Vec::new();
    for input in inputs {
        for path in find_run_logs(input)? {
            logs.push(RunDocument::read(&path)?.log);
        }
    }
    let out = out.map_or_else(|| PathBuf::from("curves.csv"), Path::to_path_buf);
    let rows = emit_curves(&logs, &out)?;
    println!("{} rows from {} run logs -> {}", rows.len(), logs.len(), out.display());
    Ok(())
}

fn inspect_scores(path: &Path, round: Option<usize>, top: Option<usize>) -> Result<()> {
    let file = match round {
        Some(r) => path.join("scores").join(format!("round_{r:03}.csv")),
        None => path.to_path_buf(),
    };
    let rows = sorted_scores(read_scores(&file)?);
    let mut out = std::io::stdout().lock();
    let io = |e| Error::InvalidArgument(format!("writing to stdout: {e}"));
    writeln!(out, "index,score,diversity_cue,uncertainty_cue,selected").map_err(io)?;
    for r in rows.iter().take(top.unwrap_or(usize::MAX)) {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.index, r.score, r.diversity_cue, r.uncertainty_cue, r.selected
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Parses `args` (program name first) and executes the command.
pub fn cli_run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => experiment(a, false).map(|r| report(&r)),
        Command::Grid(a) => experiment(a, true).map(|r| report(&r)),
        Command::Curves { inputs, out } => curves(inputs, out.as_deref()).map(|_| true),
        Command::InspectScores { path, round, top } => inspect_scores(path, *round, *top).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
