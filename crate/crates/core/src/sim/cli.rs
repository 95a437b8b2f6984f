//! Command-line front end.

use crate::estimation::{compare_rate_estimators, HighGainGains};
use crate::forces::VehicleParams;
use crate::sim::config::ScenarioConfig;
use crate::sim::log::TrajectoryLog;
use crate::sim::pendulum::pendulum_validate;
use crate::sim::summary::Summary;
use crate::sim::{run, SimError, SimOutput};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "freewing", version, about = "Two-body freewing VTOL hover simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trajectory.csv, sensors.csv and summary.txt.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run N consecutive seeds in parallel, one subdirectory each.
        #[arg(long)]
        sweep: Option<u64>,
    },
    /// Compare finite-difference and high-gain pivot rates on a sensor log.
    ReplayEstimation {
        sensor_log: PathBuf,
        /// Seconds skipped before scoring.
        #[arg(long, default_value_t = 1.0)]
        settle: f64,
    },
    /// Compare the passive pendulum against the single-coordinate model.
    PendulumValidate {
        #[arg(long, default_value_t = 0.0)]
        theta0_deg: f64,
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Print the summary block of a trajectory log.
    Summary { log: PathBuf },
}

fn write_outputs(out: &SimOutput, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    out.trajectory.write_csv(&dir.join("trajectory.csv"))?;
    out.sensors.write_csv(&dir.join("sensors.csv"))?;
    std::fs::write(dir.join("summary.txt"), out.summary.to_key_values())?;
    Ok(())
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, sweep: Option<u64>) -> Result<String, SimError> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    match sweep {
        None | Some(0) => {
            let res = run(cfg)?;
            write_outputs(&res, out)?;
            Ok(res.summary.to_key_values())
        }
        Some(n) => {
            let base = cfg.scenario.seed;
            let results: Vec<Result<String, SimError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..n)
                    .map(|i| {
                        let mut c = cfg.clone();
                        c.scenario.seed = base + i;
                        let dir = out.join(format!("seed_{}", base + i));
                        scope.spawn(move || -> Result<String, SimError> {
                            let res = run(c)?;
                            write_outputs(&res, &dir)?;
                            Ok(format!(
                                "seed={} overshoot_pct={:.3} max_abs_phi={:.3e}",
                                base + i,
                                res.summary.overshoot_pct,
                                res.summary.max_abs_phi
                            ))
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            let mut lines = Vec::new();
            for r in results {
                lines.push(r?);
            }
            Ok(lines.join("\n") + "\n")
        }
    }
}

fn replay(path: &Path, settle: f64) -> Result<String, SimError> {
    let log = TrajectoryLog::read_csv(path)?;
    let get = |name: &str| log.column(name).ok_or_else(|| SimError::Log(format!("missing column `{name}`")));
    let t = get("t")?;
    let enc = get("encoder")?;
    if t.len() < 2 {
        return Err(SimError::Log("sensor log needs at least two rows".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let mut out = format!("samples  {}\ndt       {dt:.6}\n", t.len());
    match log.column("kappa_rate_true") {
        Some(truth) => {
            let c = compare_rate_estimators(dt, &enc, &truth, &HighGainGains::default(), settle);
            out += &format!(
                "{:<22}{:>14}\n{:<22}{:>14.6}\n{:<22}{:>14.6}\n{:<22}{:>14.6}\n{:<22}{:>14.6}\n{:<22}{:>14.6}\n",
                "estimator",
                "rms_error",
                "finite_difference",
                c.rms_finite_difference,
                "high_gain",
                c.rms_high_gain,
                "high_gain_aligned",
                c.rms_high_gain_aligned,
                "ratio",
                c.ratio,
                "high_gain_lag_s",
                c.lag,
            );
        }
        None => out += "no kappa_rate_true column; truth comparison skipped\n",
    }
    Ok(out)
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out, seed, sweep } => simulate(&config, &out, seed, sweep),
        Command::ReplayEstimation { sensor_log, settle } => replay(&sensor_log, settle),
        Command::PendulumValidate { theta0_deg, duration, dt } => {
            pendulum_validate(&VehicleParams::default(), theta0_deg.to_radians(), duration, dt).map(|r| {
                format!(
                    "theta0_deg={theta0_deg}\nduration={}\nmax_deviation_rad={:.3e}\nfinal_multibody_rad={:.9}\nfinal_oracle_rad={:.9}\n",
                    r.duration, r.max_deviation, r.final_multibody, r.final_oracle
                )
            })
        }
        Command::Summary { log } => TrajectoryLog::read_csv(&log).and_then(|l| Summary::from_log(&l, &[])).map(|s| s.to_table()),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
