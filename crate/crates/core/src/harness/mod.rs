//! Experiment plumbing: run configs, data preparation, grids and the files
//! they leave behind.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active_loop::{aggregate_curves, run_aada, CurveRow, LoopData, Oracle, RunLog, ScoreRow};
use crate::dann::{save_checkpoint, TrainScheme};
use crate::data::{gen_shifted_pair, load_idx, standardize, Domain, DomainDataset, Standardizer};
use crate::error::{Error, Result};
use crate::sampling::Strategy;

pub use config::{
    ActiveConfig, DatasetConfig, GridConfig, IdxSource, OutputConfig, Preset, RunConfig,
    TrainingConfig,
};

/// Environment variable that overrides the configured output root.
pub const OUT_DIR_ENV: &str = "AADA_OUT_DIR";

pub const RUN_LOG_FILE: &str = "run_log.json";
pub const CURVES_FILE: &str = "curves.csv";

/// Source set, target pool and target test set ready for a run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub source: DomainDataset,
    pub pool: DomainDataset,
    pub test: DomainDataset,
    pub normalization: Option<Standardizer>,
}

impl PreparedData {
    pub fn loop_data(&self) -> LoopData<'_> {
        LoopData {
            source: &self.source,
            target_pool: &self.pool,
            target_test: &self.test,
        }
    }

    pub fn oracle(&self) -> Result<Oracle> {
        Oracle::new(self.pool.labels.clone(), self.pool.num_classes)
    }
}

pub fn prepare_data(config: &DatasetConfig) -> Result<PreparedData> {
    let (source, target, split_seed) = match (&config.synthetic, &config.idx) {
        (Some(spec), None) => {
            let (s, t) = gen_shifted_pair(spec)?;
            (s, t, spec.seed)
        }
        (None, Some(idx)) => {
            let mut s = load_idx(&idx.source_images, &idx.source_labels, Domain::Source)?;
            let mut t = load_idx(&idx.target_images, &idx.target_labels, Domain::Target)?;
            if let Some(n) = idx.source_subsample {
                s = s.subsample(n, idx.seed);
            }
            if let Some(n) = idx.target_subsample {
                t = t.subsample(n, idx.seed.wrapping_add(1));
            }
            let classes = s.num_classes.max(t.num_classes);
            s.num_classes = classes;
            t.num_classes = classes;
            (s, t, idx.seed)
        }
        _ => {
            return Err(Error::config(
                "dataset",
                "exactly one of [dataset.synthetic] and [dataset.idx] must be given",
            ))
        }
    };
    if source.features.cols() != target.features.cols() {
        return Err(Error::dims("target feature width", source.features.cols(), target.features.cols()));
    }
    let (pool, test) = target.split(config.pool_fraction, split_seed)?;
    if pool.is_empty() || test.is_empty() {
        return Err(Error::config("dataset.pool_fraction", "leaves the pool or the test set empty"));
    }
    if !config.standardize {
        return Ok(PreparedData {
            source,
            pool,
            test,
            normalization: None,
        });
    }
    let (source, mut others, stats) = standardize(&source, &[&pool, &test])?;
    let test = others.pop().expect("two datasets in");
    let pool = others.pop().expect("two datasets in");
    Ok(PreparedData {
        source,
        pool,
        test,
        normalization: Some(stats),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
}

impl EnvironmentStamp {
    pub fn current() -> Self {
        EnvironmentStamp {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

/// The file written for every run: the config that reproduces it, where it
/// ran, the normalization it used and the log itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub environment: EnvironmentStamp,
    pub normalization: Option<Standardizer>,
    pub log: RunLog,
}

const DOCUMENT_FORMAT: &str = "aada-run-log";

impl RunDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RunDocument = serde_json::from_str(text)?;
        if doc.format != DOCUMENT_FORMAT || doc.version != 1 {
            return Err(Error::Format(format!(
                "not a version-1 run log (format `{}`, version {})",
                doc.format, doc.version
            )));
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Outcome of one (scheme, strategy, seed) cell.
#[derive(Debug)]
pub struct CellReport {
    pub scheme: TrainScheme,
    pub strategy: Strategy,
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<RunDocument>,
}

#[derive(Debug)]
pub struct GridReport {
    pub cells: Vec<CellReport>,
    /// Aggregated curves of the successful cells, absent when none succeeded.
    pub curves: Option<Vec<CurveRow>>,
    pub curves_path: Option<PathBuf>,
}

impl GridReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.result.is_err())
    }
}

/// Directory of a cell below the output root.
pub fn cell_dir(root: &Path, scheme: TrainScheme, strategy: Strategy, seed: u64) -> PathBuf {
    root.join(format!("{}__{}", scheme.name(), strategy.name()))
        .join(format!("seed_{seed}"))
}

/// Output root: explicit argument, then the environment override, then the
/// config.
pub fn output_root(config: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => config.output.dir.clone(),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, &bytes)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Score rows sorted by descending score, ties by ascending pool index.
pub fn sorted_scores(mut rows: Vec<ScoreRow>) -> Vec<ScoreRow> {
    rows.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    rows
}

/// Writes the curve table of `logs` to `path`.
pub fn emit_curves(logs: &[RunLog], path: &Path) -> Result<Vec<CurveRow>> {
    let rows = aggregate_curves(logs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, &bytes)?;
    Ok(rows)
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Every run-log file below `path` (or `path` itself), in sorted order.
pub fn find_run_logs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == RUN_LOG_FILE) {
                found.push(p);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Runs one cell and writes its files into `dir`.
pub fn run_cell(
    config: &RunConfig,
    data: &PreparedData,
    scheme: TrainScheme,
    strategy: Strategy,
    seed: u64,
    dir: &Path,
) -> Result<RunDocument> {
    let loop_config = config.loop_config(scheme, strategy, seed)?;
    let oracle = data.oracle()?;
    let outcome = run_aada(&loop_config, data.loop_data(), &oracle)?;
    let doc = RunDocument {
        format: DOCUMENT_FORMAT.to_string(),
        version: 1,
        config: config.cell(scheme, strategy, seed),
        environment: EnvironmentStamp::current(),
        normalization: data.normalization.clone(),
        log: outcome.log,
    };
    write_file(&dir.join(RUN_LOG_FILE), doc.to_json()?.as_bytes())?;
    for record in doc.log.rounds.iter().filter(|r| !r.scores.is_empty()) {
        write_scores(&dir.join("scores").join(format!("round_{:03}.csv", record.round)), &record.scores)?;
    }
    let timing = serde_json::json!({
        "round_seconds": outcome.round_seconds,
        "total_seconds": outcome.round_seconds.iter().sum::<f64>(),
    });
    write_file(&dir.join("timing.json"), serde_json::to_string_pretty(&timing)?.as_bytes())?;
    if config.output.checkpoints {
        if let Some(model) = &outcome.final_model {
            save_checkpoint(model, &dir.join("checkpoint.json"))?;
        }
    }
    Ok(doc)
}

/// Crosses schemes × strategies × seeds of `config` on a bounded worker
/// pool. A failing cell is reported without stopping the others. Writes the
/// aggregated curve table to `<root>/curves.csv`.
pub fn run_grid(config: &RunConfig, root: &Path, workers: Option<usize>) -> Result<GridReport> {
    config.validate()?;
    let data = prepare_data(&config.dataset)?;
    let mut cells = Vec::new();
    for scheme in config.schemes() {
        for strategy in config.strategies() {
            for &seed in &config.seeds {
                cells.push((scheme, strategy, seed));
            }
        }
    }
    let workers = workers
        .or(config.output.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let cells: Vec<CellReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(scheme, strategy, seed)| {
                let dir = cell_dir(root, scheme, strategy, seed);
                let result = run_cell(config, &data, scheme, strategy, seed, &dir);
                CellReport {
                    scheme,
                    strategy,
                    seed,
                    dir,
                    result,
                }
            })
            .collect()
    });
    let logs: Vec<RunLog> = cells
        .iter()
        .filter_map(|c| c.result.as_ref().ok().map(|d| d.log.clone()))
        .collect();
    let (curves, curves_path) = if logs.is_empty() {
        (None, None)
    } else {
        let path = root.join(CURVES_FILE);
        (Some(emit_curves(&logs, &path)?), Some(path))
    };
    Ok(GridReport {
        cells,
        curves,
        curves_path,
    })
}
