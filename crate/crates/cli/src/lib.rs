//! Command-line front end for the `infdelay` simulator.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use infdelay_core::harness::{convergence_experiment, spectral_report, stability_experiment};
use infdelay_core::scheme::simulate_path;
use infdelay_core::{Error, ExperimentConfig, RngStream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "infdelay", version, about = "Truncated Euler-Maruyama experiments for regime-switching SFDEs with infinite delay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path and write it as CSV.
    Simulate(Common),
    /// Coupled strong-convergence study.
    Converge(Common),
    /// Mean-square stability study.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Decay-rate fit window as `LO,HI` (default `T/4,T`).
        #[arg(long, value_parser = parse_window)]
        fit_window: Option<(f64, f64)>,
    },
    /// Print the spectral stability certificate as JSON.
    Spectrum(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, env = "INFDELAY_THREADS")]
    threads: Option<usize>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(format!("empty window [{lo}, {hi}]"));
    }
    Ok((lo, hi))
}

enum Failure {
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result types serialize") + "\n"
}

fn load(common: &Common) -> Result<(ExperimentConfig, u64), Failure> {
    let cfg = ExperimentConfig::load(&common.config)?;
    cfg.validate()?;
    let seed = common.seed.unwrap_or(cfg.experiment.seed);
    Ok((cfg, seed))
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let (cfg, seed) = load(common)?;
    let model = cfg.build_model()?;
    let chain = cfg.build_chain()?;
    let path_id = cfg.experiment.path_id;
    let (bm, ch) = RngStream::pair(seed, path_id);
    let record_every = cfg.scheme.record_every.unwrap_or(1);
    let traj = simulate_path(&cfg.scheme, &model, &cfg.initial_data, &chain, cfg.start_regime()?, (&bm, &ch), record_every)?;
    let csv = write(&common.out, "trajectory.csv", &traj.to_csv())?;
    let summary = serde_json::json!({
        "seed": seed,
        "path_id": path_id,
        "steps": cfg.scheme.steps(),
        "radius": traj.radius,
        "truncation_events": traj.truncation_events,
        "max_state_norm": traj.max_state_norm,
        "terminal": traj.terminal,
    });
    write(&common.out, "simulate.json", &to_json(&summary))?;
    println!("wrote {}", csv.display());
    Ok(())
}

fn converge(common: &Common) -> Result<(), Failure> {
    let (cfg, seed) = load(common)?;
    let setup = cfg.convergence_setup(seed, common.threads)?;
    let res = convergence_experiment(&cfg.build_model()?, &cfg.initial_data, &cfg.build_chain()?, &setup)?;
    write(&common.out, "convergence.csv", &res.to_csv())?;
    write(&common.out, "convergence.json", &to_json(&res))?;
    println!("{}", res.summary_line());
    Ok(())
}

fn stability(common: &Common, fit_window: Option<(f64, f64)>) -> Result<(), Failure> {
    let (cfg, seed) = load(common)?;
    let mut setup = cfg.stability_setup(seed, common.threads)?;
    if fit_window.is_some() {
        setup.fit_window = fit_window;
    }
    let res = stability_experiment(&cfg.build_model()?, &cfg.initial_data, &cfg.build_chain()?, &setup)?;
    write(&common.out, "stability.csv", &res.to_csv())?;
    write(&common.out, "exponents.csv", &res.exponents_csv())?;
    write(&common.out, "stability.json", &to_json(&res))?;
    match res.decay_rate {
        Some(rate) => println!(
            "decay_rate={rate:.6} window=[{}, {}] paths={}",
            res.fit_window.0, res.fit_window.1, res.n_paths
        ),
        None => println!("decay_rate=undefined paths={}", res.n_paths),
    }
    Ok(())
}

fn spectrum(common: &Common) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let params = cfg
        .model
        .stability
        .as_ref()
        .ok_or_else(|| Error::Config("spectrum needs model.stability in the config".into()))?;
    let report = spectral_report(&cfg.build_chain()?, params, cfg.initial_data.r)?;
    print!("{}", to_json(&report));
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Converge(c) => converge(c),
        Command::Stability { common, fit_window } => stability(common, *fit_window),
        Command::Spectrum(c) => spectrum(c),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Core(Error::Numerical(msg))) => {
            eprintln!("error: numerical failure: {msg}");
            EXIT_NUMERICAL
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_parsing() {
        assert_eq!(parse_window("5, 20"), Ok((5.0, 20.0)));
        assert!(parse_window("20,5").is_err());
        assert!(parse_window("5").is_err());
        assert!(parse_window("a,b").is_err());
    }
}
