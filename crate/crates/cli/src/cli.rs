//! Command-line front end: argument parsing, config-file merging, and
//! dispatch to the runner.
//!
//! Every setting can come from four places; later sources win:
//! built-in defaults < config file (`--config`) < environment (`MIGSIM_*`)
//! < flags. The environment/flag layering is handled by the argument
//! parser itself; the config file supplies values only for settings the
//! flags and environment left unset. A `[sim]` table in the config file
//! seeds the full machine configuration before the mirrored settings
//! (nodelets, threads, occupancy interval) are layered on top.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use migsim_core::partition::VectorLayout;
use migsim_core::reorder::{bfs_order, random_order};
use migsim_core::rmat::RmatParams;
use migsim_core::sim::SimConfig;
use serde::Deserialize;

use crate::mmio::read_matrix_market_csr;
use crate::permfile::write_permutation_file;
use crate::runner::{self, Distribution, MatrixSource, ReorderSpec, RunSpec};

/// Cycle-level experiments on a migratory-thread machine running sparse
/// matrix–vector multiplication.
#[derive(Debug, Parser)]
#[command(name = "migsim", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one experiment and write its three report files.
    Run(RunArgs),
    /// Execute a cross-product of experiments and write a combined CSV.
    Sweep(SweepArgs),
    /// Generate a permutation file usable as --reorder file:PATH.
    Perm(PermArgs),
}

/// Settings for one experiment. Each is optional here so the config file
/// can fill in whatever the command line left unset.
#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Matrix Market coordinate file to multiply.
    #[arg(long, env = "MIGSIM_MATRIX", value_name = "PATH", conflicts_with = "rmat")]
    matrix: Option<PathBuf>,
    /// Generate a power-law matrix instead: scale,nnz,a,b,c.
    #[arg(long, env = "MIGSIM_RMAT", value_name = "SCALE,NNZ,A,B,C", value_parser = parse_rmat)]
    rmat: Option<RmatParams>,
    /// Row ordering: none, bfs[:start], random[:seed], or file:PATH.
    #[arg(long, env = "MIGSIM_REORDER", value_parser = parse_reorder)]
    reorder: Option<ReorderSpec>,
    /// Input-vector placement: cyclic or block.
    #[arg(long, env = "MIGSIM_X_LAYOUT", value_parser = parse_layout)]
    x_layout: Option<VectorLayout>,
    /// Result-vector placement: cyclic or block.
    #[arg(long, env = "MIGSIM_B_LAYOUT", value_parser = parse_layout)]
    b_layout: Option<VectorLayout>,
    /// Row-to-thread distribution: row or nnz.
    #[arg(long, env = "MIGSIM_DIST", value_parser = parse_dist)]
    dist: Option<Distribution>,
    /// Nodelet count (default 8).
    #[arg(long, env = "MIGSIM_NODELETS")]
    nodelets: Option<usize>,
    /// Thread contexts per nodelet (default 64).
    #[arg(long, env = "MIGSIM_THREADS")]
    threads: Option<usize>,
    /// Trials to average (default 10); trial i uses seed base_seed + i.
    #[arg(long, env = "MIGSIM_TRIALS")]
    trials: Option<usize>,
    /// Base seed for matrix generation and random reordering (default 0).
    #[arg(long, env = "MIGSIM_SEED")]
    seed: Option<u64>,
    /// Cycles between occupancy samples.
    #[arg(long, env = "MIGSIM_OCCUPANCY_INTERVAL", value_name = "CYCLES")]
    occupancy_interval: Option<u64>,
    /// Clock rate for bandwidth estimates, Hz (default 150 MHz).
    #[arg(long, env = "MIGSIM_CLOCK_HZ")]
    clock_hz: Option<f64>,
    /// Directory the report files land in (default "results").
    #[arg(long, env = "MIGSIM_OUT", value_name = "DIR")]
    out: Option<PathBuf>,
    /// TOML config supplying any of these settings; flags win on conflict.
    #[arg(long, env = "MIGSIM_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,
}

/// A sweep starts from the same settings as `run` and crosses the listed
/// axes; unset axes stay at the single base value.
#[derive(Debug, Clone, Args)]
struct SweepArgs {
    #[command(flatten)]
    base: RunArgs,
    /// Comma-separated reorderings to cross (e.g. none,bfs:0,random:1).
    #[arg(long, env = "MIGSIM_REORDERS", value_delimiter = ',', value_parser = parse_reorder)]
    reorders: Option<Vec<ReorderSpec>>,
    /// Comma-separated input-vector placements to cross.
    #[arg(long, env = "MIGSIM_X_LAYOUTS", value_delimiter = ',', value_parser = parse_layout)]
    x_layouts: Option<Vec<VectorLayout>>,
    /// Comma-separated result-vector placements to cross.
    #[arg(long, env = "MIGSIM_B_LAYOUTS", value_delimiter = ',', value_parser = parse_layout)]
    b_layouts: Option<Vec<VectorLayout>>,
    /// Comma-separated distributions to cross.
    #[arg(long, env = "MIGSIM_DISTS", value_delimiter = ',', value_parser = parse_dist)]
    dists: Option<Vec<Distribution>>,
}

#[derive(Debug, Clone, Args)]
struct PermArgs {
    /// Ordering to generate: bfs[:start] or random[:seed].
    #[arg(long, value_parser = parse_reorder)]
    kind: ReorderSpec,
    /// Permutation length; needed for random without --matrix.
    #[arg(long, conflicts_with = "matrix")]
    size: Option<usize>,
    /// Matrix supplying the size, and the adjacency for bfs.
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
    /// Where to write the permutation file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

/// Config-file image of the `run` settings, all optional. `rmat`,
/// `reorder`, and the layout/distribution names use the same syntax as
/// the corresponding flags.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    matrix: Option<PathBuf>,
    rmat: Option<String>,
    reorder: Option<String>,
    x_layout: Option<String>,
    b_layout: Option<String>,
    dist: Option<String>,
    nodelets: Option<usize>,
    threads: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    occupancy_interval: Option<u64>,
    clock_hz: Option<f64>,
    out: Option<PathBuf>,
    sim: Option<SimConfig>,
}

fn parse_layout(raw: &str) -> Result<VectorLayout, String> {
    match raw.to_ascii_lowercase().as_str() {
        "cyclic" => Ok(VectorLayout::Cyclic),
        "block" => Ok(VectorLayout::Block),
        _ => Err(format!("unknown layout '{raw}' (expected cyclic or block)")),
    }
}

fn parse_dist(raw: &str) -> Result<Distribution, String> {
    match raw.to_ascii_lowercase().as_str() {
        "row" => Ok(Distribution::Row),
        "nnz" => Ok(Distribution::Nnz),
        _ => Err(format!("unknown distribution '{raw}' (expected row or nnz)")),
    }
}

fn parse_reorder(raw: &str) -> Result<ReorderSpec, String> {
    if let Some(path) = raw.strip_prefix("file:") {
        if path.is_empty() {
            return Err("file: needs a path".to_string());
        }
        return Ok(ReorderSpec::File(PathBuf::from(path)));
    }
    let (head, param) = match raw.split_once(':') {
        Some((head, param)) => (head, Some(param)),
        None => (raw, None),
    };
    match (head, param) {
        ("none", None) => Ok(ReorderSpec::None),
        ("none", Some(_)) => Err("none takes no parameter".to_string()),
        ("bfs", None) => Ok(ReorderSpec::Bfs { start: 0 }),
        ("bfs", Some(p)) => p
            .parse()
            .map(|start| ReorderSpec::Bfs { start })
            .map_err(|e| format!("bfs start vertex: {e}")),
        ("random", None) => Ok(ReorderSpec::Random { seed: None }),
        ("random", Some(p)) => p
            .parse()
            .map(|seed| ReorderSpec::Random { seed: Some(seed) })
            .map_err(|e| format!("random seed: {e}")),
        _ => Err(format!(
            "unknown reorder '{raw}' (expected none, bfs[:start], random[:seed], or file:PATH)"
        )),
    }
}

fn parse_rmat(raw: &str) -> Result<RmatParams, String> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(format!("expected scale,nnz,a,b,c; got {} fields", parts.len()));
    }
    let params = RmatParams {
        scale: parts[0].parse().map_err(|e| format!("scale: {e}"))?,
        target_nnz: parts[1].parse().map_err(|e| format!("nnz: {e}"))?,
        a: parts[2].parse().map_err(|e| format!("a: {e}"))?,
        b: parts[3].parse().map_err(|e| format!("b: {e}"))?,
        c: parts[4].parse().map_err(|e| format!("c: {e}"))?,
    };
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

fn load_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn resolve_source(args: &RunArgs, cfg: &FileConfig) -> anyhow::Result<MatrixSource> {
    if let Some(path) = &args.matrix {
        return Ok(MatrixSource::File(path.clone()));
    }
    if let Some(params) = &args.rmat {
        return Ok(MatrixSource::Rmat(*params));
    }
    match (&cfg.matrix, &cfg.rmat) {
        (Some(_), Some(_)) => bail!("config sets both matrix and rmat; keep exactly one"),
        (Some(path), None) => Ok(MatrixSource::File(path.clone())),
        (None, Some(raw)) => {
            let params = parse_rmat(raw).map_err(|e| anyhow::anyhow!("config rmat: {e}"))?;
            Ok(MatrixSource::Rmat(params))
        }
        (None, None) => bail!("no matrix source; pass --matrix PATH or --rmat scale,nnz,a,b,c"),
    }
}

/// Merges flags, environment, and config file into a concrete spec.
fn build_run_spec(args: &RunArgs) -> anyhow::Result<RunSpec> {
    let cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };

    let mut sim = cfg.sim.clone().unwrap_or_default();
    if let Some(n) = args.nodelets.or(cfg.nodelets) {
        sim.nodelets = n;
    }
    if let Some(t) = args.threads.or(cfg.threads) {
        sim.threads_per_nodelet = t;
    }
    if let Some(interval) = args.occupancy_interval.or(cfg.occupancy_interval) {
        sim.occupancy_sample_interval = interval;
    }

    let reorder = match (&args.reorder, &cfg.reorder) {
        (Some(spec), _) => spec.clone(),
        (None, Some(raw)) => {
            parse_reorder(raw).map_err(|e| anyhow::anyhow!("config reorder: {e}"))?
        }
        (None, None) => ReorderSpec::None,
    };
    let config_layout = |raw: &Option<String>, which: &str| -> anyhow::Result<Option<VectorLayout>> {
        raw.as_deref()
            .map(|r| parse_layout(r).map_err(|e| anyhow::anyhow!("config {which}: {e}")))
            .transpose()
    };
    let x_layout = match args.x_layout {
        Some(layout) => layout,
        None => config_layout(&cfg.x_layout, "x_layout")?.unwrap_or(VectorLayout::Block),
    };
    let b_layout = match args.b_layout {
        Some(layout) => layout,
        None => config_layout(&cfg.b_layout, "b_layout")?.unwrap_or(VectorLayout::Block),
    };
    let distribution = match args.dist {
        Some(dist) => dist,
        None => cfg
            .dist
            .as_deref()
            .map(|r| parse_dist(r).map_err(|e| anyhow::anyhow!("config dist: {e}")))
            .transpose()?
            .unwrap_or(Distribution::Row),
    };

    let base_seed = args.seed.or(cfg.seed).unwrap_or(0);
    sim.seed = base_seed;

    Ok(RunSpec {
        source: resolve_source(args, &cfg)?,
        reorder,
        x_layout,
        b_layout,
        distribution,
        trials: args.trials.or(cfg.trials).unwrap_or(10),
        base_seed,
        clock_hz: args.clock_hz.or(cfg.clock_hz).unwrap_or(150.0e6),
        out_dir: args
            .out
            .clone()
            .or(cfg.out)
            .unwrap_or_else(|| PathBuf::from("results")),
        sim,
    })
}

fn build_sweep_specs(args: &SweepArgs) -> anyhow::Result<Vec<RunSpec>> {
    let base = build_run_spec(&args.base)?;
    let reorders = args
        .reorders
        .clone()
        .unwrap_or_else(|| vec![base.reorder.clone()]);
    let x_layouts = args.x_layouts.clone().unwrap_or_else(|| vec![base.x_layout]);
    let b_layouts = args.b_layouts.clone().unwrap_or_else(|| vec![base.b_layout]);
    let dists = args.dists.clone().unwrap_or_else(|| vec![base.distribution]);

    let mut specs = Vec::new();
    for reorder in &reorders {
        for &x_layout in &x_layouts {
            for &b_layout in &b_layouts {
                for &distribution in &dists {
                    let mut spec = base.clone();
                    spec.reorder = reorder.clone();
                    spec.x_layout = x_layout;
                    spec.b_layout = b_layout;
                    spec.distribution = distribution;
                    specs.push(spec);
                }
            }
        }
    }
    Ok(specs)
}

fn run_command(args: &RunArgs) -> anyhow::Result<()> {
    let spec = build_run_spec(args)?;
    let outputs = runner::run(&spec)?;
    println!("wrote {}", outputs.record_path.display());
    println!("wrote {}", outputs.summary_path.display());
    println!("wrote {}", outputs.occupancy_path.display());
    let record = &outputs.record;
    println!(
        "{} rows, {} nnz | mean over {} trial(s): {:.1} cycles, {:.1} migrations, {:.2} MB/s",
        record.num_rows,
        record.nnz,
        record.trials,
        record.mean_cycles,
        record.mean_total_migrations,
        record.mean_bandwidth_mbs,
    );
    Ok(())
}

fn sweep_command(args: &SweepArgs) -> anyhow::Result<()> {
    let specs = build_sweep_specs(args)?;
    let out_dir = specs
        .first()
        .map(|s| s.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let outputs = runner::sweep(&out_dir, specs)?;
    for run in &outputs.runs {
        println!(
            "{}_{}_{}_{}: {:.1} cycles, {:.1} migrations",
            run.record.reorder,
            run.record.layout_x,
            run.record.layout_b,
            run.record.distribution,
            run.record.mean_cycles,
            run.record.mean_total_migrations,
        );
    }
    println!("wrote {} ({} rows)", outputs.sweep_path.display(), outputs.runs.len());
    Ok(())
}

fn perm_command(args: &PermArgs) -> anyhow::Result<()> {
    let matrix = args
        .matrix
        .as_deref()
        .map(read_matrix_market_csr)
        .transpose()?;
    let size = match (&matrix, args.size) {
        (Some(m), _) => m.num_rows(),
        (None, Some(size)) => size,
        (None, None) => bail!("pass --size N or --matrix PATH to fix the permutation length"),
    };
    let permutation = match &args.kind {
        ReorderSpec::Bfs { start } => {
            let Some(m) = &matrix else {
                bail!("bfs needs --matrix PATH for the adjacency structure");
            };
            bfs_order(m, *start)?
        }
        ReorderSpec::Random { seed } => random_order(size, seed.unwrap_or(0)),
        ReorderSpec::None | ReorderSpec::File(_) => {
            bail!("--kind must be bfs[:start] or random[:seed]")
        }
    };
    write_permutation_file(&args.out, &permutation)?;
    println!("wrote {} ({} rows)", args.out.display(), permutation.len());
    Ok(())
}

/// Parses the process arguments, executes the chosen command, and reports
/// any failure as a one-line diagnostic with a nonzero exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run_command(args),
        Command::Sweep(args) => sweep_command(args),
        Command::Perm(args) => perm_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(argv: &[&str]) -> RunArgs {
        let mut full = vec!["migsim", "run"];
        full.extend_from_slice(argv);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Run(args) => args,
            other => panic!("expected run, got {other:?}"),
        }
    }

    #[test]
    fn reorder_forms_parse() {
        assert!(matches!(parse_reorder("none"), Ok(ReorderSpec::None)));
        assert!(matches!(parse_reorder("bfs"), Ok(ReorderSpec::Bfs { start: 0 })));
        assert!(matches!(parse_reorder("bfs:17"), Ok(ReorderSpec::Bfs { start: 17 })));
        assert!(matches!(parse_reorder("random"), Ok(ReorderSpec::Random { seed: None })));
        assert!(matches!(
            parse_reorder("random:9"),
            Ok(ReorderSpec::Random { seed: Some(9) })
        ));
        assert!(
            matches!(parse_reorder("file:p/q.perm"), Ok(ReorderSpec::File(p)) if p.as_path() == Path::new("p/q.perm"))
        );
        assert!(parse_reorder("rcm").is_err());
        assert!(parse_reorder("bfs:x").is_err());
        assert!(parse_reorder("none:1").is_err());
        assert!(parse_reorder("file:").is_err());
    }

    #[test]
    fn layout_and_distribution_names_parse_case_insensitively() {
        assert_eq!(parse_layout("Block").unwrap(), VectorLayout::Block);
        assert_eq!(parse_layout("CYCLIC").unwrap(), VectorLayout::Cyclic);
        assert!(parse_layout("diagonal").unwrap_err().contains("cyclic or block"));
        assert_eq!(parse_dist("Row").unwrap(), Distribution::Row);
        assert_eq!(parse_dist("NNZ").unwrap(), Distribution::Nnz);
        assert!(parse_dist("col").unwrap_err().contains("row or nnz"));
    }

    #[test]
    fn rmat_argument_parses_and_validates() {
        let params = parse_rmat("10, 40000, 0.45, 0.22, 0.22").unwrap();
        assert_eq!(params.scale, 10);
        assert_eq!(params.target_nnz, 40000);
        assert!(parse_rmat("10,40000,0.45,0.22").is_err(), "four fields");
        assert!(parse_rmat("10,40000,0.9,0.9,0.9").is_err(), "weights exceed 1");
    }

    #[test]
    fn defaults_apply_when_nothing_is_set() {
        let args = run_args(&["--matrix", "m.mtx"]);
        let spec = build_run_spec(&args).unwrap();
        assert!(matches!(spec.source, MatrixSource::File(ref p) if p == &PathBuf::from("m.mtx")));
        assert!(matches!(spec.reorder, ReorderSpec::None));
        assert_eq!(spec.x_layout, VectorLayout::Block);
        assert_eq!(spec.b_layout, VectorLayout::Block);
        assert_eq!(spec.distribution, Distribution::Row);
        assert_eq!(spec.trials, 10);
        assert_eq!(spec.base_seed, 0);
        assert_eq!(spec.clock_hz, 150.0e6);
        assert_eq!(spec.out_dir, PathBuf::from("results"));
        assert_eq!(spec.sim.nodelets, 8);
        assert_eq!(spec.sim.threads_per_nodelet, 64);
    }

    #[test]
    fn config_file_fills_gaps_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("exp.toml");
        fs::write(
            &config,
            "matrix = \"cfg.mtx\"\nreorder = \"random:5\"\nnodelets = 4\ntrials = 3\n\
             x_layout = \"cyclic\"\n\n[sim]\nme_delivery_latency = 31\nthreads_per_nodelet = 16\n",
        )
        .unwrap();
        let config_flag = config.to_str().unwrap();

        let args = run_args(&["--config", config_flag]);
        let spec = build_run_spec(&args).unwrap();
        assert!(matches!(spec.source, MatrixSource::File(ref p) if p == &PathBuf::from("cfg.mtx")));
        assert!(matches!(spec.reorder, ReorderSpec::Random { seed: Some(5) }));
        assert_eq!(spec.sim.nodelets, 4, "top-level config beats default");
        assert_eq!(spec.trials, 3);
        assert_eq!(spec.x_layout, VectorLayout::Cyclic);
        assert_eq!(spec.sim.me_delivery_latency, 31, "sim table reaches deep fields");
        assert_eq!(spec.sim.threads_per_nodelet, 16, "sim table sets unmirrored value");

        let args = run_args(&[
            "--config",
            config_flag,
            "--matrix",
            "flag.mtx",
            "--nodelets",
            "2",
            "--threads",
            "8",
            "--reorder",
            "bfs:1",
        ]);
        let spec = build_run_spec(&args).unwrap();
        assert!(matches!(spec.source, MatrixSource::File(ref p) if p == &PathBuf::from("flag.mtx")));
        assert!(matches!(spec.reorder, ReorderSpec::Bfs { start: 1 }));
        assert_eq!(spec.sim.nodelets, 2, "flag beats config");
        assert_eq!(
            spec.sim.threads_per_nodelet, 8,
            "mirrored flag beats the sim table"
        );
        assert_eq!(spec.sim.me_delivery_latency, 31, "unrelated sim fields survive");
    }

    #[test]
    fn missing_source_and_double_source_are_rejected() {
        let args = run_args(&[]);
        let err = build_run_spec(&args).unwrap_err();
        assert!(err.to_string().contains("no matrix source"));

        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("both.toml");
        fs::write(&config, "matrix = \"a.mtx\"\nrmat = \"4,40,0.45,0.22,0.22\"\n").unwrap();
        let args = run_args(&["--config", config.to_str().unwrap()]);
        let err = build_run_spec(&args).unwrap_err();
        assert!(err.to_string().contains("both matrix and rmat"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("typo.toml");
        fs::write(&config, "matirx = \"a.mtx\"\n").unwrap();
        let args = run_args(&["--config", config.to_str().unwrap()]);
        assert!(build_run_spec(&args).is_err());
    }

    #[test]
    fn sweep_crosses_all_axes() {
        let full = vec![
            "migsim",
            "sweep",
            "--matrix",
            "m.mtx",
            "--reorders",
            "none,random:1",
            "--x-layouts",
            "cyclic,block",
            "--dists",
            "row,nnz",
        ];
        let args = match Cli::try_parse_from(full).unwrap().command {
            Command::Sweep(args) => args,
            other => panic!("expected sweep, got {other:?}"),
        };
        let specs = build_sweep_specs(&args).unwrap();
        assert_eq!(specs.len(), 8, "2 reorders x 2 x-layouts x 1 b-layout x 2 dists");
        assert!(specs.iter().all(|s| s.b_layout == VectorLayout::Block));
    }

    #[test]
    fn rmat_flag_conflicts_with_matrix_flag() {
        let result = Cli::try_parse_from([
            "migsim",
            "run",
            "--matrix",
            "m.mtx",
            "--rmat",
            "4,40,0.45,0.22,0.22",
        ]);
        assert!(result.is_err());
    }
}
