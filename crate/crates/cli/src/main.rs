use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinpump::config::{ConfigError, Experiment, ExperimentConfig};
use spinpump::experiment::{self, fmt_f64, ChernParams, RunError};

/// Thouless pumping of a single spin excitation through arrays of trimerized
/// chains.
///
/// Exit status: 0 on success, 2 for invalid input, 3 for numerical failures.
#[derive(Parser, Debug)]
#[command(name = "spinpump", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate the initial excitation and write trajectory CSVs.
    Simulate(RunArgs),
    /// Trajectories and winding diagnostics for many disorder seeds.
    Sweep(RunArgs),
    /// Per-trimer winding numbers and protection certificates.
    Winding(RunArgs),
    /// Chern numbers of the clean periodic chain.
    Chern(ChernArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON), or a manifest written by an earlier run.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: fig2, single-chain or bethe.
    #[arg(long)]
    preset: Option<String>,
    /// Disorder seed; may be repeated.
    #[arg(long)]
    seed: Vec<u64>,
    /// Seed list such as `1-20` or `1,4,9-12`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Override the disorder strength W.
    #[arg(long)]
    strength: Option<f64>,
    /// Override the run length in drive periods.
    #[arg(long)]
    periods: Option<f64>,
    /// Override the integrator time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory (default: the config's, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Debug)]
struct ChernArgs {
    #[arg(long, default_value_t = 1)]
    p: u32,
    #[arg(long, default_value_t = 3)]
    q: u32,
    /// Modulation amplitude Δ.
    #[arg(long, default_value_t = 45.0, allow_negative_numbers = true)]
    delta: f64,
    /// Intra-chain hopping J.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hopping: f64,
    /// Grid points along k and φ, e.g. `60x60`.
    #[arg(long, default_value = "60x60", value_parser = parse_grid)]
    grid: [usize; 2],
    /// Also write `chern_<hash>.json` into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(text: &str) -> Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| format!("bad seed {s:?}: {e}"))
        };
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            seeds.extend(a..b);
        } else if let Some((a, b)) = part.split_once('-') {
            let (a, b) = (num(a)?, num(b)?);
            if b < a {
                return Err(format!("empty seed range {part:?}"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(num(part)?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(seeds))
}

fn parse_grid(text: &str) -> Result<[usize; 2], String> {
    let (a, b) = text.split_once(['x', 'X']).unwrap_or((text, text));
    let n = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad grid {text:?}: {e}"))
    };
    Ok([n(a)?, n(b)?])
}

fn load(args: &RunArgs) -> Result<(Experiment, PathBuf), RunError> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                RunError::Config(ConfigError::Schema(format!("{}: {e}", path.display())))
            })?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => {
            return Err(RunError::Config(ConfigError::Schema(
                "one of --config or --preset is required".into(),
            )))
        }
    };
    let mut seeds = args.seed.clone();
    if let Some(SeedList(list)) = &args.seeds {
        seeds.extend(list);
    }
    if !seeds.is_empty() {
        config.disorder.seeds = seeds;
    }
    if let Some(w) = args.strength {
        config.disorder.strength = w;
    }
    if let Some(p) = args.periods {
        config.duration_periods = p;
    }
    if let Some(dt) = args.dt {
        config.integrator.dt = dt;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((config.resolve()?, out))
}

fn print_paths(files: &[PathBuf], manifest: &Path) {
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("wrote {}", manifest.display());
}

fn simulate(args: &RunArgs) -> Result<(), RunError> {
    let (exp, out) = load(args)?;
    let result = experiment::simulate(&exp, &out, args.threads)?;
    for (d, traj) in &result.trajectories {
        let seed = d.seed.map_or("custom".to_string(), |s| s.to_string());
        let finals: Vec<String> = exp
            .regions
            .iter()
            .zip(traj.region_populations.last().into_iter().flatten())
            .map(|(r, p)| format!("{}={:.4}", r.name, p))
            .collect();
        println!(
            "seed {seed}: {} samples, norm drift {:.1e} {}",
            traj.len(),
            traj.max_norm_drift,
            finals.join(" ")
        );
    }
    print_paths(&result.files, &result.manifest);
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), RunError> {
    let (exp, out) = load(args)?;
    let result = experiment::sweep(&exp, &out, args.threads);
    let report = match &result {
        Ok(r) => Some((r.summary.clone(), r.rows.len())),
        Err(_) => None,
    };
    if let Some((summary, n)) = report {
        println!("{n} seeds");
        for s in summary {
            let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "-".into());
            println!(
                "{:<20} mean {:<24} min {:<24} max {}",
                s.column,
                f(s.mean),
                f(s.min),
                f(s.max)
            );
        }
    }
    let r = result?;
    print_paths(&r.files, &r.manifest);
    Ok(())
}

fn winding(args: &RunArgs) -> Result<(), RunError> {
    let (exp, out) = load(args)?;
    let r = experiment::winding(&exp, &out)?;
    let flagged = r.rows.iter().filter(|w| w.winding.is_none()).count();
    let unprotected = r.rows.iter().filter(|w| w.winding == Some(0)).count();
    println!(
        "{} trimer curves: {} flagged, {} with winding 0, {} without certificate",
        r.rows.len(),
        flagged,
        unprotected,
        r.rows.iter().filter(|w| !w.certificate).count()
    );
    print_paths(std::slice::from_ref(&r.file), &r.manifest);
    Ok(())
}

fn chern(args: &ChernArgs) -> Result<(), RunError> {
    let params = ChernParams {
        p: args.p,
        q: args.q,
        delta: args.delta,
        hopping: args.hopping,
        grid: args.grid,
    };
    let report = match &args.out {
        Some(dir) => {
            let (report, path) = experiment::chern_to_dir(&params, dir)?;
            eprintln!("wrote {}", path.display());
            report
        }
        None => experiment::chern(&params)?,
    };
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Winding(a) => winding(a),
        Command::Chern(a) => chern(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
