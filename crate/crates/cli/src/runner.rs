//! End-to-end experiment execution: load or generate a matrix, reorder it,
//! distribute it, simulate it over several trials, and write the report
//! files.
//!
//! A run is deterministic end to end: trial `i` derives its seed as
//! `base_seed + i`, and seeds influence only matrix generation and random
//! reorderings — the simulator itself is exactly reproducible. The input
//! vector is synthesized as `x[i] = 0.5 + (i % 10) / 10`, so results depend
//! only on the run's settings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use migsim_core::matrix::{CsrMatrix, MatrixError};
use migsim_core::metrics::{bandwidth_estimate, MetricsError};
use migsim_core::partition::{
    build_distributed_plan, distribute_by_nnz, distribute_rows_even, PartitionError, VectorLayout,
    WorkAssignment,
};
use migsim_core::reorder::{apply_permutation, bfs_order, random_order, Permutation, ReorderError};
use migsim_core::rmat::{generate_rmat, RmatError, RmatParams};
use migsim_core::sim::{simulate, MetricsReport, SimConfig, SimError};
use thiserror::Error;

use crate::mmio::{read_matrix_market_csr, MmioError};
use crate::permfile::{read_permutation_file, PermFileError};
use crate::report::{
    write_aggregate_csv, write_occupancy_csv, write_record_json, AggregateRow, ExperimentRecord,
    ReportError, Timestamp, SCHEMA_VERSION,
};

/// Why a run or sweep failed.
#[derive(Debug, Error)]
pub enum RunnerError {
    /// A run needs at least one trial.
    #[error("trials must be at least 1")]
    ZeroTrials,
    /// Matrix file ingestion failed.
    #[error(transparent)]
    Mmio(#[from] MmioError),
    /// Permutation file ingestion failed.
    #[error(transparent)]
    PermFile(#[from] PermFileError),
    /// Matrix construction failed.
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    /// Matrix generation failed.
    #[error(transparent)]
    Rmat(#[from] RmatError),
    /// Reordering failed.
    #[error(transparent)]
    Reorder(#[from] ReorderError),
    /// Work distribution failed.
    #[error(transparent)]
    Partition(#[from] PartitionError),
    /// Simulation failed.
    #[error(transparent)]
    Sim(#[from] SimError),
    /// Metric derivation failed.
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    /// Report writing failed.
    #[error(transparent)]
    Report(#[from] ReportError),
    /// Filesystem failure outside report writing.
    #[error("{path}")]
    Io {
        /// Path as given.
        path: String,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
    /// A sweep stopped at its first failing run.
    #[error("sweep aborted at {run}")]
    SweepAborted {
        /// Output stem of the failing run.
        run: String,
        /// Its failure.
        #[source]
        source: Box<RunnerError>,
    },
}

/// Where the matrix comes from.
#[derive(Debug, Clone)]
pub enum MatrixSource {
    /// A Matrix Market file.
    File(PathBuf),
    /// Generated fresh each trial with that trial's seed.
    Rmat(RmatParams),
}

impl MatrixSource {
    /// Short name used in output files and the record.
    pub fn name(&self) -> String {
        match self {
            MatrixSource::File(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "matrix".to_string()),
            MatrixSource::Rmat(params) => format!("rmat{}", params.scale),
        }
    }
}

/// Which reordering to apply before distribution.
#[derive(Debug, Clone)]
pub enum ReorderSpec {
    /// Keep the matrix as ingested.
    None,
    /// Breadth-first ordering from a start vertex.
    Bfs {
        /// Vertex the traversal starts at.
        start: usize,
    },
    /// Seeded uniform shuffle; without an explicit seed, the run's base
    /// seed. Either way trial `i` adds `i`, so trials differ.
    Random {
        /// Explicit shuffle seed.
        seed: Option<u64>,
    },
    /// A permutation file produced by an external tool.
    File(PathBuf),
}

impl ReorderSpec {
    /// Label recorded in reports, keeping parameters and file provenance.
    pub fn label(&self, base_seed: u64) -> String {
        match self {
            ReorderSpec::None => "none".to_string(),
            ReorderSpec::Bfs { start } => format!("bfs:{start}"),
            ReorderSpec::Random { seed } => format!("random:{}", seed.unwrap_or(base_seed)),
            ReorderSpec::File(path) => format!("file:{}", path.display()),
        }
    }
}

/// How rows are handed to threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Equal row counts per thread.
    Row,
    /// Greedy equal non-zero counts per thread, rows atomic.
    Nnz,
}

impl Distribution {
    /// Name used in reports and file stems.
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Row => "row",
            Distribution::Nnz => "nnz",
        }
    }

    fn assign(
        self,
        a: &CsrMatrix,
        nodelets: usize,
        threads: usize,
    ) -> Result<WorkAssignment, PartitionError> {
        match self {
            Distribution::Row => distribute_rows_even(a.num_rows(), nodelets, threads),
            Distribution::Nnz => distribute_by_nnz(a, nodelets, threads),
        }
    }
}

fn layout_name(layout: VectorLayout) -> &'static str {
    match layout {
        VectorLayout::Cyclic => "cyclic",
        VectorLayout::Block => "block",
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Matrix source.
    pub source: MatrixSource,
    /// Reordering applied before distribution.
    pub reorder: ReorderSpec,
    /// Input vector layout.
    pub x_layout: VectorLayout,
    /// Result vector layout.
    pub b_layout: VectorLayout,
    /// Row-to-thread distribution.
    pub distribution: Distribution,
    /// Trials to average (seeds `base_seed..base_seed + trials`).
    pub trials: usize,
    /// Seed the per-trial seeds derive from.
    pub base_seed: u64,
    /// Clock rate for bandwidth estimates, Hz.
    pub clock_hz: f64,
    /// Directory the three report files land in.
    pub out_dir: PathBuf,
    /// Machine configuration.
    pub sim: SimConfig,
}

impl RunSpec {
    /// Stem of the output files:
    /// `{matrix}_{reorder}_{x}_{b}_{dist}_n{nodelets}_t{threads}`.
    pub fn stem(&self) -> String {
        let reorder = self
            .reorder
            .label(self.base_seed)
            .replace([':', '/', '\\', '.'], "-");
        format!(
            "{}_{}_{}_{}_{}_n{}_t{}",
            self.source.name(),
            reorder,
            layout_name(self.x_layout),
            layout_name(self.b_layout),
            self.distribution.name(),
            self.sim.nodelets,
            self.sim.threads_per_nodelet,
        )
    }
}

/// A finished run: its record and where the three files went.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    /// The record also written to `record_path`.
    pub record: ExperimentRecord,
    /// JSON record path.
    pub record_path: PathBuf,
    /// One-row aggregate CSV path.
    pub summary_path: PathBuf,
    /// Occupancy time-series CSV path.
    pub occupancy_path: PathBuf,
}

/// A finished sweep: each run's outputs plus the combined CSV.
#[derive(Debug, Clone)]
pub struct SweepOutputs {
    /// Outputs per run, in executed (lexicographic) order.
    pub runs: Vec<RunOutputs>,
    /// Combined aggregate CSV path, one row per run.
    pub sweep_path: PathBuf,
}

/// The synthesized input vector: `x[i] = 0.5 + (i % 10) / 10`.
pub fn input_vector(len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 + (i % 10) as f64 * 0.1).collect()
}

fn load_trial_matrix(
    source: &MatrixSource,
    file_matrix: &Option<CsrMatrix>,
    seed: u64,
) -> Result<CsrMatrix, RunnerError> {
    match source {
        MatrixSource::File(_) => {
            Ok(file_matrix.as_ref().expect("file matrix preloaded").clone())
        }
        MatrixSource::Rmat(params) => {
            let coo = generate_rmat(params, seed)?;
            Ok(migsim_core::matrix::coo_to_csr(&coo))
        }
    }
}

fn reorder_matrix(
    a: &CsrMatrix,
    reorder: &ReorderSpec,
    base_seed: u64,
    trial: u64,
) -> Result<CsrMatrix, RunnerError> {
    let permutation: Option<Permutation> = match reorder {
        ReorderSpec::None => None,
        ReorderSpec::Bfs { start } => Some(bfs_order(a, *start)?),
        ReorderSpec::Random { seed } => {
            Some(random_order(a.num_rows(), seed.unwrap_or(base_seed) + trial))
        }
        ReorderSpec::File(path) => Some(read_permutation_file(path, a.num_rows())?),
    };
    match permutation {
        Some(p) => Ok(apply_permutation(a, &p)?),
        None => Ok(a.clone()),
    }
}

/// Removes files written so far when a run fails partway.
struct PartialOutputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl PartialOutputs {
    fn new() -> Self {
        PartialOutputs { written: Vec::new(), committed: false }
    }

    fn track(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    fn commit(&mut self) {
        self.committed = true;
    }
}

impl Drop for PartialOutputs {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}

/// Executes one experiment: ingest, reorder, distribute, simulate `trials`
/// times, aggregate, and write the record JSON, one-row summary CSV, and
/// occupancy CSV into the output directory.
///
/// # Errors
///
/// Any stage's error, after removing partially written outputs.
pub fn run(spec: &RunSpec) -> Result<RunOutputs, RunnerError> {
    if spec.trials == 0 {
        return Err(RunnerError::ZeroTrials);
    }
    fs::create_dir_all(&spec.out_dir)
        .map_err(|source| RunnerError::Io { path: spec.out_dir.display().to_string(), source })?;

    let file_matrix = match &spec.source {
        MatrixSource::File(path) => Some(read_matrix_market_csr(path)?),
        MatrixSource::Rmat(params) => {
            params.validate()?;
            None
        }
    };

    let nodelets = spec.sim.nodelets;
    let mut cycles_sum = 0.0;
    let mut migrations_sum = 0.0;
    let mut migs_per_nodelet = vec![0.0f64; nodelets];
    let mut mems_per_nodelet = vec![0.0f64; nodelets];
    let mut cv_sum = 0.0;
    let mut cv_count = 0usize;
    let mut bandwidth_sum = 0.0;
    let mut wall_ms = 0.0;
    let mut first_trial: Option<MetricsReport> = None;
    let mut first_shape = (0usize, 0usize, 0usize);

    for trial in 0..spec.trials as u64 {
        let seed = spec.base_seed + trial;
        let ingested = load_trial_matrix(&spec.source, &file_matrix, seed)?;
        let a = reorder_matrix(&ingested, &spec.reorder, spec.base_seed, trial)?;
        let assignment =
            spec.distribution.assign(&a, nodelets, spec.sim.threads_per_nodelet)?;
        let plan = build_distributed_plan(&a, assignment, spec.x_layout, spec.b_layout)?;
        let x = input_vector(a.num_cols());

        let started = Instant::now();
        let report = simulate(&plan, &x, &spec.sim)?;
        wall_ms += started.elapsed().as_secs_f64() * 1.0e3;

        cycles_sum += report.cycles as f64;
        migrations_sum += report.total_migrations as f64;
        for (acc, counters) in migs_per_nodelet.iter_mut().zip(&report.nodelets) {
            *acc += counters.migrations_in as f64;
        }
        for (acc, counters) in mems_per_nodelet.iter_mut().zip(&report.nodelets) {
            *acc += counters.mem_instrs as f64;
        }
        if let Some(cv) = report.mem_instr_cv {
            cv_sum += cv;
            cv_count += 1;
        }
        bandwidth_sum +=
            bandwidth_estimate(a.num_rows(), a.nnz(), report.cycles, spec.clock_hz)?;
        if first_trial.is_none() {
            first_shape = (a.num_rows(), a.num_cols(), a.nnz());
            first_trial = Some(report);
        }
    }

    let trials = spec.trials as f64;
    let (num_rows, num_cols, nnz) = first_shape;
    let record = ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        matrix: spec.source.name(),
        reorder: spec.reorder.label(spec.base_seed),
        layout_x: layout_name(spec.x_layout).to_string(),
        layout_b: layout_name(spec.b_layout).to_string(),
        distribution: spec.distribution.name().to_string(),
        num_rows,
        num_cols,
        nnz,
        trials: spec.trials,
        base_seed: spec.base_seed,
        clock_hz: spec.clock_hz,
        sim_config: spec.sim.clone(),
        timestamp: Timestamp::now(wall_ms),
        mean_cycles: cycles_sum / trials,
        mean_total_migrations: migrations_sum / trials,
        mean_migrations_per_nodelet: migs_per_nodelet.iter().map(|s| s / trials).collect(),
        mean_mem_instrs_per_nodelet: mems_per_nodelet.iter().map(|s| s / trials).collect(),
        mean_mem_instr_cv: if cv_count > 0 { Some(cv_sum / cv_count as f64) } else { None },
        mean_bandwidth_mbs: bandwidth_sum / trials,
        first_trial: first_trial.expect("trials >= 1"),
    };

    let stem = spec.stem();
    let record_path = spec.out_dir.join(format!("{stem}.record.json"));
    let summary_path = spec.out_dir.join(format!("{stem}.summary.csv"));
    let occupancy_path = spec.out_dir.join(format!("{stem}.occupancy.csv"));

    let mut partial = PartialOutputs::new();
    partial.track(&record_path);
    write_record_json(&record_path, &record)?;
    partial.track(&summary_path);
    write_aggregate_csv(&summary_path, std::slice::from_ref(&record.aggregate_row()))?;
    partial.track(&occupancy_path);
    write_occupancy_csv(&occupancy_path, &record.first_trial)?;
    partial.commit();

    Ok(RunOutputs { record, record_path, summary_path, occupancy_path })
}

/// Executes several runs in deterministic lexicographic stem order and
/// writes `sweep.csv` — one aggregate row per run — into `out_dir`.
///
/// # Errors
///
/// [`RunnerError::SweepAborted`] naming the first failing run.
pub fn sweep(out_dir: &Path, mut specs: Vec<RunSpec>) -> Result<SweepOutputs, RunnerError> {
    specs.sort_by_key(RunSpec::stem);
    let mut runs = Vec::with_capacity(specs.len());
    let mut rows: Vec<AggregateRow> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let outputs = run(spec).map_err(|source| RunnerError::SweepAborted {
            run: spec.stem(),
            source: Box::new(source),
        })?;
        rows.push(outputs.record.aggregate_row());
        runs.push(outputs);
    }
    fs::create_dir_all(out_dir)
        .map_err(|source| RunnerError::Io { path: out_dir.display().to_string(), source })?;
    let sweep_path = out_dir.join("sweep.csv");
    write_aggregate_csv(&sweep_path, &rows)?;
    Ok(SweepOutputs { runs, sweep_path })
}
