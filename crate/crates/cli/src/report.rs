//! Experiment records and report files.
//!
//! One run produces three artifacts: a JSON record embedding the full
//! per-trial report, a one-row aggregate CSV, and an occupancy time-series
//! CSV. All three are byte-identical across repeat runs of the same
//! settings; the JSON's `timestamp` object (wall-clock seconds and
//! simulation wall time) is the single field allowed to differ.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use migsim_core::metrics::{compare_reports, ComparisonSummary};
use migsim_core::sim::{MetricsReport, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema version stamped into every record and CSV row.
pub const SCHEMA_VERSION: u32 = 1;

/// Why a report could not be written, read, or compared.
#[derive(Debug, Error)]
pub enum ReportError {
    /// Two records describe different-shaped problems.
    #[error("matrix shapes differ: baseline {baseline_rows}x{baseline_cols}, \
             candidate {candidate_rows}x{candidate_cols}")]
    ShapeMismatch {
        /// Baseline row count.
        baseline_rows: usize,
        /// Baseline column count.
        baseline_cols: usize,
        /// Candidate row count.
        candidate_rows: usize,
        /// Candidate column count.
        candidate_cols: usize,
    },
    /// JSON serialization or deserialization failed.
    #[error("record serialization: {0}")]
    Json(#[from] serde_json::Error),
    /// CSV writing failed.
    #[error("csv writing: {0}")]
    Csv(#[from] csv::Error),
    /// Filesystem failure.
    #[error("{path}")]
    Io {
        /// Path as given.
        path: String,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// When a run happened and how long the simulation itself took. This is the
/// one record field excluded from byte-identity comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timestamp {
    /// Seconds since the Unix epoch at record creation.
    pub unix_s: u64,
    /// Wall-clock milliseconds spent inside the simulation calls, summed
    /// over trials.
    pub wall_ms: f64,
}

impl Timestamp {
    /// Captures the current time alongside a measured simulation duration.
    pub fn now(wall_ms: f64) -> Timestamp {
        let unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Timestamp { unix_s, wall_ms }
    }
}

/// Everything one experiment produced: the naming axes, the machine
/// configuration, per-trial aggregates, and the first trial's full report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    /// Report format version.
    pub schema_version: u32,
    /// Matrix name (file stem or generator tag).
    pub matrix: String,
    /// Reordering name, including its parameter (`none`, `bfs:0`,
    /// `random:7`, `file:orders/x.perm`). File-sourced orderings keep their
    /// path so external provenance stays on the record.
    pub reorder: String,
    /// Layout of the input vector: `cyclic` or `block`.
    pub layout_x: String,
    /// Layout of the result vector: `cyclic` or `block`.
    pub layout_b: String,
    /// Work distribution: `row` or `nnz`.
    pub distribution: String,
    /// Rows of the (reordered) matrix.
    pub num_rows: usize,
    /// Columns of the (reordered) matrix.
    pub num_cols: usize,
    /// Stored non-zeros of the first trial's matrix.
    pub nnz: usize,
    /// Number of trials averaged.
    pub trials: usize,
    /// Seed the per-trial seeds were derived from.
    pub base_seed: u64,
    /// Clock rate used for the bandwidth estimate, in Hz.
    pub clock_hz: f64,
    /// Full machine configuration of the runs.
    pub sim_config: SimConfig,
    /// Creation time and simulation wall time; excluded from byte-identity.
    pub timestamp: Timestamp,
    /// Mean simulated cycles over trials.
    pub mean_cycles: f64,
    /// Mean total migrations over trials.
    pub mean_total_migrations: f64,
    /// Per-nodelet migrations-in, averaged over trials.
    pub mean_migrations_per_nodelet: Vec<f64>,
    /// Per-nodelet memory instructions, averaged over trials.
    pub mean_mem_instrs_per_nodelet: Vec<f64>,
    /// Coefficient of variation of per-nodelet memory instructions,
    /// averaged over the trials where it was defined.
    pub mean_mem_instr_cv: Option<f64>,
    /// Mean bandwidth estimate over trials, in MB/s.
    pub mean_bandwidth_mbs: f64,
    /// The first trial's complete report, embedded intact.
    pub first_trial: MetricsReport,
}

impl ExperimentRecord {
    /// One aggregate CSV row for this record.
    pub fn aggregate_row(&self) -> AggregateRow {
        AggregateRow {
            schema_version: self.schema_version,
            matrix: self.matrix.clone(),
            reorder: self.reorder.clone(),
            layout_x: self.layout_x.clone(),
            layout_b: self.layout_b.clone(),
            distribution: self.distribution.clone(),
            nodelets: self.sim_config.nodelets,
            threads: self.sim_config.threads_per_nodelet,
            cycles: self.mean_cycles,
            migrations_total: self.mean_total_migrations,
            migrations_per_nodelet: join_values(&self.mean_migrations_per_nodelet),
            mem_instrs_per_nodelet: join_values(&self.mean_mem_instrs_per_nodelet),
            mem_instr_cv: self.mean_mem_instr_cv,
            bandwidth_mbs: self.mean_bandwidth_mbs,
        }
    }
}

/// One row of the aggregate CSV. Per-nodelet columns hold `;`-joined values
/// so the schema does not depend on the nodelet count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Report format version.
    pub schema_version: u32,
    /// Matrix name.
    pub matrix: String,
    /// Reordering name.
    pub reorder: String,
    /// Input vector layout.
    pub layout_x: String,
    /// Result vector layout.
    pub layout_b: String,
    /// Work distribution.
    pub distribution: String,
    /// Nodelet count.
    pub nodelets: usize,
    /// Threads per nodelet.
    pub threads: usize,
    /// Mean simulated cycles.
    pub cycles: f64,
    /// Mean total migrations.
    pub migrations_total: f64,
    /// `;`-joined per-nodelet mean migrations-in.
    pub migrations_per_nodelet: String,
    /// `;`-joined per-nodelet mean memory instructions.
    pub mem_instrs_per_nodelet: String,
    /// Memory-instruction load-imbalance CV (empty when undefined).
    pub mem_instr_cv: Option<f64>,
    /// Mean bandwidth estimate, MB/s.
    pub bandwidth_mbs: f64,
}

fn join_values(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        out.push_str(&format!("{v}"));
    }
    out
}

/// Writes a record as pretty-printed JSON ending in a newline.
///
/// # Errors
///
/// Serialization or filesystem errors, carrying the path.
pub fn write_record_json(path: &Path, record: &ExperimentRecord) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a record back from JSON.
///
/// # Errors
///
/// Deserialization or filesystem errors, carrying the path.
pub fn read_record_json(path: &Path) -> Result<ExperimentRecord, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the aggregate CSV: a header row plus one row per record.
///
/// # Errors
///
/// CSV or filesystem errors, carrying the path.
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().expect("vec writer cannot fail");
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes the occupancy time series: one row per (sample cycle, nodelet).
///
/// # Errors
///
/// CSV or filesystem errors, carrying the path.
pub fn write_occupancy_csv(path: &Path, report: &MetricsReport) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["cycle", "nodelet", "resident_threads", "migration_queue", "active_cap"])?;
    for sample in &report.occupancy {
        writer.write_record([
            sample.cycle.to_string(),
            sample.nodelet.to_string(),
            sample.resident.to_string(),
            sample.migration_queue.to_string(),
            sample.active_cap.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().expect("vec writer cannot fail");
    fs::write(path, bytes).map_err(io_err(path))
}

/// Compares a candidate record against a baseline on the same problem shape:
/// ratios above 1 mean the candidate ran faster / migrated less.
///
/// # Errors
///
/// [`ReportError::ShapeMismatch`] when the records describe different
/// matrix shapes.
pub fn compare_records(
    baseline: &ExperimentRecord,
    candidate: &ExperimentRecord,
) -> Result<ComparisonSummary, ReportError> {
    if baseline.num_rows != candidate.num_rows || baseline.num_cols != candidate.num_cols {
        return Err(ReportError::ShapeMismatch {
            baseline_rows: baseline.num_rows,
            baseline_cols: baseline.num_cols,
            candidate_rows: candidate.num_rows,
            candidate_cols: candidate.num_cols,
        });
    }
    Ok(compare_reports(&baseline.first_trial, &candidate.first_trial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use migsim_core::sim::{NodeletCounters, OccupancySample};

    fn sample_report() -> MetricsReport {
        MetricsReport {
            cycles: 120,
            nodelets: vec![
                NodeletCounters { mem_instrs: 30, migrations_in: 2, ..Default::default() },
                NodeletCounters { mem_instrs: 34, migrations_out: 2, ..Default::default() },
            ],
            occupancy: vec![
                OccupancySample {
                    cycle: 0,
                    nodelet: 0,
                    resident: 1,
                    migration_queue: 0,
                    active_cap: 4,
                },
                OccupancySample {
                    cycle: 0,
                    nodelet: 1,
                    resident: 0,
                    migration_queue: 2,
                    active_cap: 4,
                },
            ],
            total_migrations: 2,
            mem_instr_cv: Some(0.0625),
            b: vec![1.0, -2.5, 0.0],
        }
    }

    fn sample_record(name: &str) -> ExperimentRecord {
        ExperimentRecord {
            schema_version: SCHEMA_VERSION,
            matrix: name.to_string(),
            reorder: "none".to_string(),
            layout_x: "cyclic".to_string(),
            layout_b: "block".to_string(),
            distribution: "row".to_string(),
            num_rows: 3,
            num_cols: 3,
            nnz: 4,
            trials: 2,
            base_seed: 7,
            clock_hz: 150.0e6,
            sim_config: SimConfig { nodelets: 2, threads_per_nodelet: 2, ..SimConfig::default() },
            timestamp: Timestamp { unix_s: 1_700_000_000, wall_ms: 12.5 },
            mean_cycles: 120.0,
            mean_total_migrations: 2.0,
            mean_migrations_per_nodelet: vec![2.0, 0.0],
            mean_mem_instrs_per_nodelet: vec![30.0, 34.0],
            mean_mem_instr_cv: Some(0.0625),
            mean_bandwidth_mbs: 4.2,
            first_trial: sample_report(),
        }
    }

    #[test]
    fn record_round_trips_field_for_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.record.json");
        let record = sample_record("tri");
        write_record_json(&path, &record).unwrap();
        let back = read_record_json(&path).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn aggregate_csv_has_versioned_schema_and_joined_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_aggregate_csv(&path, &[sample_record("tri").aggregate_row()]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "schema_version,matrix,reorder,layout_x,layout_b,distribution,nodelets,threads,\
             cycles,migrations_total,migrations_per_nodelet,mem_instrs_per_nodelet,\
             mem_instr_cv,bandwidth_mbs"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,tri,none,cyclic,block,row,2,2,"));
        assert!(row.contains("2;0"));
        assert!(row.contains("30;34"));
    }

    #[test]
    fn occupancy_csv_lists_samples_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occupancy.csv");
        write_occupancy_csv(&path, &sample_report()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "cycle,nodelet,resident_threads,migration_queue,active_cap");
        assert_eq!(lines[1], "0,0,1,0,4");
        assert_eq!(lines[2], "0,1,0,2,4");
    }

    #[test]
    fn comparisons_need_matching_shapes() {
        let a = sample_record("a");
        let mut b = sample_record("b");
        let summary = compare_records(&a, &b).unwrap();
        assert_eq!(summary.cycle_ratio, 1.0);
        b.num_rows = 5;
        assert!(matches!(compare_records(&a, &b), Err(ReportError::ShapeMismatch { .. })));
    }

    #[test]
    fn identical_records_compare_neutral_and_halved_cycles_double() {
        let a = sample_record("a");
        let mut faster = sample_record("a");
        faster.first_trial.cycles = 60;
        let summary = compare_records(&a, &faster).unwrap();
        assert_eq!(summary.cycle_ratio, 2.0);
    }
}
