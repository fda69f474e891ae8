//! Batch runners behind the command-line verbs.
//!
//! Every runner computes first and writes afterwards from a single thread, so
//! data files depend only on the config and the seeds. Wall-clock details go
//! to the manifest and nowhere else.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{hex_sha256, ConfigError, Experiment, ExperimentConfig};
use crate::drive::{winding_diagnostics, DisorderRealization, WindingRow, WindingStatus};
use crate::evolution::{propagate, StateVector, Trajectory};
use crate::invariants::{fhs_chern, min_gap, BlochModel, ChernError};
use crate::SpatialPeriod;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{failed} of {total} seeds failed")]
    SeedsFailed { failed: usize, total: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl RunError {
    /// Process exit status: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::SeedsFailed { .. } => 3,
            RunError::Io { .. } | RunError::Pool(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn seed_tag(d: &DisorderRealization) -> String {
    match d.seed {
        Some(s) => format!("seed{s}"),
        None => "custom".to_string(),
    }
}

fn seed_field(seed: Option<u64>) -> String {
    seed.map(|s| s.to_string()).unwrap_or_default()
}

/// Map `f` over the realizations on a pool of `threads` workers (0 means one
/// per core), keeping input order.
fn parallel_map<T, F>(
    threads: usize,
    items: &[DisorderRealization],
    f: F,
) -> Result<Vec<T>, RunError>
where
    T: Send,
    F: Fn(&DisorderRealization) -> T + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Run one trajectory of the experiment for one disorder realization.
pub fn run_trajectory(
    exp: &Experiment,
    disorder: &DisorderRealization,
) -> Result<Trajectory, RunError> {
    let psi0 = StateVector::basis(exp.topology.n_sites(), exp.initial_site);
    propagate(
        &exp.topology,
        &exp.drive,
        disorder,
        &psi0,
        exp.t0(),
        exp.t1(),
        &exp.config.integrator,
        &exp.regions,
    )
    .map_err(|e| RunError::Numerical(format!("{}: {e}", seed_tag(disorder))))
}

/// Column names of a trajectory file.
pub fn trajectory_header(exp: &Experiment) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((0..exp.topology.n_sites()).map(|i| format!("site_{i}")));
    header.extend(exp.regions.iter().map(|r| format!("region_{}", r.name)));
    header.extend(
        exp.topology
            .chains()
            .iter()
            .map(|c| format!("com_chain_{}", c.id)),
    );
    header
}

/// One row per recorded time. Absent centres of mass are empty fields.
pub fn write_trajectory<W: Write>(exp: &Experiment, traj: &Trajectory, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(exp))?;
    for k in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.times[k])];
        row.extend(traj.site_populations[k].iter().map(|&p| fmt_f64(p)));
        row.extend(traj.region_populations[k].iter().map(|&p| fmt_f64(p)));
        row.extend(
            traj.center_of_mass[k]
                .iter()
                .map(|c| c.map(fmt_f64).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to rerun a command, plus bookkeeping that is allowed to
/// change between reruns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<Option<u64>>,
    pub outputs: Vec<String>,
    pub code_version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub timestamp_unix: u64,
}

impl Manifest {
    pub fn file_name(command: &str, short_hash: &str) -> String {
        format!("manifest_{command}_{short_hash}.json")
    }
}

fn write_manifest(
    exp: &Experiment,
    command: &str,
    realizations: &[DisorderRealization],
    outputs: &[PathBuf],
    out_dir: &Path,
    threads: usize,
    started: Instant,
) -> Result<PathBuf, RunError> {
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        command: command.to_string(),
        config: exp.config.clone(),
        config_hash: exp.hash.clone(),
        seeds: realizations.iter().map(|d| d.seed).collect(),
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: effective_threads(threads),
        wall_time_s: started.elapsed().as_secs_f64(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = out_dir.join(Manifest::file_name(command, exp.short_hash()));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

fn effective_threads(threads: usize) -> usize {
    if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    }
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

#[derive(Clone, Debug)]
pub struct SimulateOutput {
    pub trajectories: Vec<(DisorderRealization, Trajectory)>,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Propagate every realization and write one trajectory file per run.
pub fn simulate(
    exp: &Experiment,
    out_dir: &Path,
    threads: usize,
) -> Result<SimulateOutput, RunError> {
    let started = Instant::now();
    let realizations = exp.realizations().map_err(|e| RunError::Config(e.into()))?;
    let results = parallel_map(threads, &realizations, |d| run_trajectory(exp, d))?;
    let trajectories = realizations
        .iter()
        .cloned()
        .zip(results)
        .map(|(d, r)| r.map(|t| (d, t)))
        .collect::<Result<Vec<_>, _>>()?;

    create_dir(out_dir)?;
    let mut files = Vec::with_capacity(trajectories.len());
    for (d, traj) in &trajectories {
        let path = out_dir.join(format!(
            "trajectory_{}_{}.csv",
            seed_tag(d),
            exp.short_hash()
        ));
        write_trajectory(exp, traj, create_file(&path)?).map_err(csv_err(&path))?;
        files.push(path);
    }
    let manifest = write_manifest(
        exp,
        "simulate",
        &realizations,
        &files,
        out_dir,
        threads,
        started,
    )?;
    Ok(SimulateOutput {
        trajectories,
        files,
        manifest,
    })
}

/// Winding and certificate rows for every trimer and realization.
pub fn winding_rows(exp: &Experiment) -> Result<Vec<WindingRow>, RunError> {
    let realizations = exp.realizations().map_err(|e| RunError::Config(e.into()))?;
    let mut rows = Vec::new();
    for d in &realizations {
        rows.extend(
            winding_diagnostics(&exp.drive, &exp.topology, d, exp.config.winding_samples)
                .map_err(|e| RunError::Config(e.into()))?,
        );
    }
    Ok(rows)
}

pub fn write_winding<W: Write>(rows: &[WindingRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "chain",
        "trimer",
        "seed",
        "strength",
        "winding",
        "certificate",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.chain.to_string(),
            r.trimer.to_string(),
            seed_field(r.seed),
            fmt_f64(r.strength),
            r.winding.map(|v| v.to_string()).unwrap_or_default(),
            r.certificate.to_string(),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct WindingOutput {
    pub rows: Vec<WindingRow>,
    pub file: PathBuf,
    pub manifest: PathBuf,
}

/// Write the winding table. Curves that touch the origin are reported as
/// flagged rows rather than errors.
pub fn winding(exp: &Experiment, out_dir: &Path) -> Result<WindingOutput, RunError> {
    let started = Instant::now();
    let rows = winding_rows(exp)?;
    let realizations = exp.realizations().map_err(|e| RunError::Config(e.into()))?;
    create_dir(out_dir)?;
    let file = out_dir.join(format!("winding_{}.csv", exp.short_hash()));
    write_winding(&rows, create_file(&file)?).map_err(csv_err(&file))?;
    let manifest = write_manifest(
        exp,
        "winding",
        &realizations,
        std::slice::from_ref(&file),
        out_dir,
        1,
        started,
    )?;
    Ok(WindingOutput {
        rows,
        file,
        manifest,
    })
}

/// Outcome of one seed of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub seed: Option<u64>,
    pub error: Option<String>,
    /// Region populations at the final time, in config order.
    pub final_regions: Vec<f64>,
    /// Smallest `|winding|` over all trimers; `None` if any curve failed.
    pub min_abs_winding: Option<u32>,
    /// Trimers whose winding could not be computed.
    pub winding_failures: usize,
    /// Whether every trimer holds the protection certificate.
    pub certificate: bool,
    pub max_norm_drift: f64,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Mean, min and max of one numeric sweep column over successful seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSummary {
    pub column: String,
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn summarize(column: String, values: impl IntoIterator<Item = f64>) -> ColumnSummary {
    let values: Vec<f64> = values.into_iter().collect();
    let count = values.len();
    if count == 0 {
        return ColumnSummary {
            column,
            count,
            mean: None,
            min: None,
            max: None,
        };
    }
    ColumnSummary {
        column,
        count,
        mean: Some(values.iter().sum::<f64>() / count as f64),
        min: Some(values.iter().copied().fold(f64::INFINITY, f64::min)),
        max: Some(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    }
}

fn sweep_one(exp: &Experiment, d: &DisorderRealization) -> SweepRow {
    let windings = winding_diagnostics(&exp.drive, &exp.topology, d, exp.config.winding_samples);
    let (min_abs_winding, winding_failures, certificate) = match &windings {
        Ok(rows) => {
            let failures = rows
                .iter()
                .filter(|r| r.status != WindingStatus::Ok)
                .count();
            let min = if failures == 0 {
                rows.iter()
                    .filter_map(|r| r.winding)
                    .map(i32::unsigned_abs)
                    .min()
            } else {
                None
            };
            (min, failures, rows.iter().all(|r| r.certificate))
        }
        Err(_) => (None, 0, false),
    };
    let mut row = SweepRow {
        seed: d.seed,
        error: None,
        final_regions: Vec::new(),
        min_abs_winding,
        winding_failures,
        certificate,
        max_norm_drift: f64::NAN,
    };
    if let Err(e) = windings {
        row.error = Some(e.to_string());
        return row;
    }
    match run_trajectory(exp, d) {
        Ok(traj) => {
            row.final_regions = traj.region_populations.last().cloned().unwrap_or_default();
            row.max_norm_drift = traj.max_norm_drift;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Per-column statistics over the successful rows.
pub fn sweep_summary(exp: &Experiment, rows: &[SweepRow]) -> Vec<ColumnSummary> {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.ok()).collect();
    let mut out = Vec::new();
    for (k, region) in exp.regions.iter().enumerate() {
        out.push(summarize(
            format!("final_{}", region.name),
            ok.iter().map(|r| r.final_regions[k]),
        ));
    }
    out.push(summarize(
        "min_abs_winding".into(),
        ok.iter().filter_map(|r| r.min_abs_winding).map(f64::from),
    ));
    out.push(summarize(
        "certificate".into(),
        ok.iter().map(|r| if r.certificate { 1.0 } else { 0.0 }),
    ));
    out.push(summarize(
        "max_norm_drift".into(),
        ok.iter().map(|r| r.max_norm_drift),
    ));
    out
}

pub fn write_sweep<W: Write>(exp: &Experiment, rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["seed".to_string(), "status".to_string()];
    header.extend(exp.regions.iter().map(|r| format!("final_{}", r.name)));
    header.extend(
        [
            "min_abs_winding",
            "winding_failures",
            "certificate",
            "max_norm_drift",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            seed_field(r.seed),
            if r.ok() { "ok" } else { "failed" }.to_string(),
        ];
        if r.ok() {
            rec.extend(r.final_regions.iter().map(|&p| fmt_f64(p)));
        } else {
            rec.extend(exp.regions.iter().map(|_| String::new()));
        }
        rec.push(r.min_abs_winding.map(|v| v.to_string()).unwrap_or_default());
        rec.push(r.winding_failures.to_string());
        rec.push(r.certificate.to_string());
        rec.push(if r.ok() {
            fmt_f64(r.max_norm_drift)
        } else {
            String::new()
        });
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(summary: &[ColumnSummary], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["column", "count", "mean", "min", "max"])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for s in summary {
        w.write_record([
            s.column.clone(),
            s.count.to_string(),
            opt(s.mean),
            opt(s.min),
            opt(s.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<ColumnSummary>,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Trajectory and winding diagnostics for every seed, on `threads` workers.
///
/// Failed seeds are recorded in their rows; files are written regardless and
/// the caller sees [`RunError::SeedsFailed`] afterwards.
pub fn sweep(exp: &Experiment, out_dir: &Path, threads: usize) -> Result<SweepOutput, RunError> {
    let started = Instant::now();
    let realizations = exp.realizations().map_err(|e| RunError::Config(e.into()))?;
    let rows = parallel_map(threads, &realizations, |d| sweep_one(exp, d))?;
    let summary = sweep_summary(exp, &rows);

    create_dir(out_dir)?;
    let table = out_dir.join(format!("sweep_{}.csv", exp.short_hash()));
    write_sweep(exp, &rows, create_file(&table)?).map_err(csv_err(&table))?;
    let stats = out_dir.join(format!("sweep_summary_{}.csv", exp.short_hash()));
    write_summary(&summary, create_file(&stats)?).map_err(csv_err(&stats))?;
    let files = vec![table, stats];
    let manifest = write_manifest(
        exp,
        "sweep",
        &realizations,
        &files,
        out_dir,
        threads,
        started,
    )?;

    let failed = rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        return Err(RunError::SeedsFailed {
            failed,
            total: rows.len(),
        });
    }
    Ok(SweepOutput {
        rows,
        summary,
        files,
        manifest,
    })
}

/// Parameters of a clean-chain Chern computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernParams {
    pub p: u32,
    pub q: u32,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(rename = "J")]
    pub hopping: f64,
    pub grid: [usize; 2],
}

impl Default for ChernParams {
    fn default() -> Self {
        ChernParams {
            p: 1,
            q: 3,
            delta: 45.0,
            hopping: 1.0,
            grid: [60, 60],
        }
    }
}

impl ChernParams {
    pub fn hash(&self) -> String {
        hex_sha256(
            serde_json::to_string(self)
                .expect("params serialize")
                .as_bytes(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChernReport {
    #[serde(flatten)]
    pub params: ChernParams,
    #[serde(rename = "C")]
    pub chern: Vec<i32>,
    pub residual: f64,
    pub min_gap: f64,
    pub params_hash: String,
}

pub fn chern(params: &ChernParams) -> Result<ChernReport, RunError> {
    let bad = |msg: String| RunError::Config(ConfigError::Schema(msg));
    if !(params.delta.is_finite() && params.hopping.is_finite()) {
        return Err(bad("Delta and J must be finite".into()));
    }
    if params.p == 0 {
        return Err(bad("p must be positive".into()));
    }
    let model = BlochModel::new(
        SpatialPeriod {
            p: params.p,
            q: params.q,
        },
        params.delta,
        params.hopping,
    );
    let grid = (params.grid[0], params.grid[1]);
    let result = fhs_chern(&model, grid).map_err(|e| match e {
        ChernError::GridTooSmall(..) | ChernError::BadPeriod(_) => bad(e.to_string()),
        other => RunError::Numerical(other.to_string()),
    })?;
    Ok(ChernReport {
        params: params.clone(),
        chern: result.chern,
        residual: result.residual,
        min_gap: min_gap(&model, grid),
        params_hash: params.hash(),
    })
}

/// Compute and write `chern_<hash>.json`.
pub fn chern_to_dir(
    params: &ChernParams,
    out_dir: &Path,
) -> Result<(ChernReport, PathBuf), RunError> {
    let report = chern(params)?;
    create_dir(out_dir)?;
    let path = out_dir.join(format!("chern_{}.json", &report.params_hash[..12]));
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok((report, path))
}
