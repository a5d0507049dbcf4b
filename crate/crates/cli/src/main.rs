use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use uwb_slam::driver::{Driver, Mode};
use uwb_slam::eval::{build_report, residual_csv, MetricsReport};
use uwb_slam::harness::{run_scenario, world_from_log, RunOptions};
use uwb_slam::log::{Record, RunLog};
use uwb_slam::scenario::{parse_value, Scenario};

#[derive(Parser)]
#[command(name = "uwb-slam", version, about = "UWB radar + AOA SLAM: simulate, replay, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-loop simulation and write log, report and residuals.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: Mode,
    },
    /// Feed a recorded log through the pipeline again.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: Mode,
    },
    /// Run several sensor subsets on one seed and tabulate their errors.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "full,radar_only,aoa_only,odom_only")]
        modes: Vec<Mode>,
    },
    /// Vary one driver parameter over values and seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted path into the driver config, e.g. alpha_r or min_disp.trans.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seed: Vec<u64>,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: Mode,
    },
    /// Score a recorded log against the ground truth it carries.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: Mode,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn prepare(common: &Common) -> Result<Scenario> {
    let scenario = Scenario::load(&common.scenario)?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(scenario)
}

fn read_log(path: &Path) -> Result<RunLog> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RunLog::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn simulate(common: &Common, seed: u64, mode: Mode) -> Result<()> {
    let scenario = prepare(common)?;
    let opts = RunOptions {
        mode,
        seed,
        record_log: true,
        audit: true,
    };
    let run = run_scenario(&scenario, &opts)?;
    let log = run.log.as_ref().expect("log requested");
    let file = fs::File::create(common.out.join("run.jsonl"))?;
    log.write_jsonl(std::io::BufWriter::new(file))?;
    let report = run.report()?;
    write_json(&common.out.join("report.json"), &report)?;
    write_json(
        &common.out.join("audit.json"),
        &serde_json::json!({ "audit": &run.audit, "associations": &run.stats }),
    )?;
    write(&common.out.join("trajectory.csv"), &residual_csv(&run.trajectory, &report.alignment))?;
    println!("{mode} seed {seed}: rms_ate {:.4} m over {} steps", report.rms_ate, report.slam_steps);
    let a = &run.audit;
    if a.max_asymmetry > uwb_slam::driver::SYMMETRY_TOLERANCE
        || a.psd_violations + a.trace_violations + a.order_violations + a.gate_violations + a.halt_violations > 0
    {
        bail!("invariant violation, see {}", common.out.join("audit.json").display());
    }
    Ok(())
}

fn replay_log(scenario: &Scenario, log: &RunLog, mode: Mode) -> Result<(Driver, Vec<Record>)> {
    Ok(Driver::replay(log, scenario.driver.clone(), mode)?)
}

fn replay(common: &Common, log_path: &Path, mode: Mode) -> Result<()> {
    let scenario = prepare(common)?;
    let log = read_log(log_path)?;
    let (driver, records) = replay_log(&scenario, &log, mode)?;
    let outputs: RunLog = records.into_iter().collect();
    let file = fs::File::create(common.out.join("replay.jsonl"))?;
    outputs.write_jsonl(std::io::BufWriter::new(file))?;
    if let Some(snapshot) = outputs.last_snapshot() {
        write_json(&common.out.join("final_state.json"), snapshot)?;
    }
    println!("replayed {} records, {} SLAM steps", log.len(), driver.slam_steps());
    Ok(())
}

fn evaluate(common: &Common, log_path: &Path, mode: Mode) -> Result<()> {
    let scenario = prepare(common)?;
    let log = read_log(log_path)?;
    let (driver, records) = replay_log(&scenario, &log, mode)?;
    let world = world_from_log(&scenario.world, &log)?;
    let landmarks = records
        .iter()
        .rev()
        .find_map(|r| match r {
            Record::Snapshot(s) => Some(s.landmarks.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let ghosts: u64 = log
        .records()
        .iter()
        .filter(|r| matches!(r, Record::Aoa(a) if a.is_ghost()))
        .count() as u64;
    let report = build_report(
        mode,
        0,
        scenario.driver.hash(),
        driver.trajectory(),
        &landmarks,
        &world,
        driver.deployments().len(),
        (ghosts, 0),
    )?;
    write_json(&common.out.join("report.json"), &report)?;
    write(&common.out.join("trajectory.csv"), &residual_csv(driver.trajectory(), &report.alignment))?;
    println!("rms_ate {:.4} m", report.rms_ate);
    Ok(())
}

fn ablate(common: &Common, seed: u64, modes: &[Mode]) -> Result<()> {
    let scenario = prepare(common)?;
    let mut summary = String::from("mode,rms_ate,final_pose_error\n");
    for &mode in modes {
        let report: MetricsReport = run_scenario(&scenario, &RunOptions::new(mode, seed))?.report()?;
        write_json(&common.out.join(format!("report_{mode}.json")), &report)?;
        summary.push_str(&format!("{mode},{},{}\n", report.rms_ate, report.final_pose_error));
    }
    write(&common.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn sweep(common: &Common, param: &str, values: &[String], seeds: &[u64], mode: Mode) -> Result<()> {
    if values.iter().all(|v| v.trim().is_empty()) {
        bail!("--values must list at least one value");
    }
    let scenario = prepare(common)?;
    let variants = values
        .iter()
        .map(|v| Ok((v.clone(), scenario.with_parameter(param, parse_value(v))?)))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("param,value,seed,rms_ate,deployments\n");
    for (value, variant) in &variants {
        for &seed in seeds {
            let report = run_scenario(variant, &RunOptions::new(mode, seed))?.report()?;
            csv.push_str(&format!("{param},{value},{seed},{},{}\n", report.rms_ate, report.deployments));
        }
    }
    write(&common.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, seed, mode } => simulate(common, *seed, *mode),
        Command::Replay { common, log, mode } => replay(common, log, *mode),
        Command::Ablate { common, seed, modes } => ablate(common, *seed, modes),
        Command::Sweep {
            common,
            param,
            values,
            seed,
            mode,
        } => sweep(common, param, values, seed, *mode),
        Command::Evaluate { common, log, mode } => evaluate(common, log, *mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
