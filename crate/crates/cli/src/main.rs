//! `oatauv`: run scenarios, compare controllers, analyse thruster envelopes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oatauv_core::allocation::{
    envelope_circularity, sample_envelope, standard_planes, EnvelopePlane, ThrusterGeometry,
};
use oatauv_core::controllers::ControllerKind;
use oatauv_core::harness::{
    compare, compute_metrics, run_scenario, tune_pid, write_comparison, PidGrid, RunLog, Scenario,
};
use oatauv_core::{Error, ModelParams, Result};

#[derive(Parser)]
#[command(name = "oatauv", version, about = "Vectored-thruster AUV simulation and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its run log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a wrench envelope plane and write its hull points.
    Envelope {
        /// Plane such as fx-fy or my-mz.
        #[arg(long, default_value = "fx-fy")]
        plane: String,
        #[arg(long, default_value_t = 33)]
        resolution: usize,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Circularity of all six standard planes as JSON.
    Circularity {
        #[arg(long, default_value_t = 33)]
        resolution: usize,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario with several controllers.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "ffampc,mpc,pid", value_delimiter = ',')]
        controllers: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        band: f64,
    },
    /// Tracking metrics of a run log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        band: f64,
    },
    /// Grid-search PID gains on the undisturbed scenario and print them.
    TunePid {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_params(model: &Option<PathBuf>) -> Result<ModelParams> {
    match model {
        Some(p) => ModelParams::load(p).map_err(|e| Error::Config(e.to_string())),
        None => Ok(ModelParams::canonical()),
    }
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let log = run_scenario(&sc)?;
            log.write_csv(&out)?;
            eprintln!("wrote {} rows to {}", log.rows.len(), out.display());
        }
        Command::Envelope { plane, resolution, model, out } => {
            let geo = ThrusterGeometry::from_params(&load_params(&model)?);
            let plane = EnvelopePlane::parse(&plane, resolution)?;
            let pts = sample_envelope(&geo, &plane)?;
            let mut text = String::from("axis1,axis2\n");
            for p in &pts {
                text.push_str(&format!("{},{}\n", p[0], p[1]));
            }
            std::fs::write(&out, text)?;
            eprintln!("{}: {} hull points", plane, pts.len());
        }
        Command::Circularity { resolution, model, out } => {
            let geo = ThrusterGeometry::from_params(&load_params(&model)?);
            let mut report = BTreeMap::new();
            for plane in standard_planes(resolution)? {
                report.insert(plane.name(), envelope_circularity(&geo, &plane)?);
            }
            write_or_print(&out, &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Compare { scenario, controllers, out, band } => {
            let sc = Scenario::load(&scenario)?;
            let kinds = controllers.iter().map(|c| c.parse()).collect::<Result<Vec<ControllerKind>>>()?;
            let (report, runs) = compare(&sc, &kinds, band)?;
            write_comparison(&out, &report, &runs)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some((_, Err(e))) = runs.iter().find(|(_, r)| r.is_err()) {
                return Err(e.clone());
            }
        }
        Command::Metrics { log, band } => {
            let log = RunLog::read_csv(&log)?;
            let report = compute_metrics(&log, band).map_err(|e| Error::Config(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::TunePid { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let (gains, score) = tune_pid(&sc, &PidGrid::default())?;
            eprintln!("summed undisturbed RMSE {score}");
            write_or_print(&out, &serde_json::to_string_pretty(&gains)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
