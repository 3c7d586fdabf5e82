//! Run orchestration shared by the binary and the tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thermoctl_core::convergence::{heat_mms_study, MmsLevel, MmsSetup};
use thermoctl_core::experiments::probe_direction;
use thermoctl_core::stability::{probe_control_stability, probe_data_stability, StabilityReport};
use thermoctl_core::{run, ExperimentConfig, RunOptions, RunOutput};

use crate::config::config_echo;
use crate::error::{CliError, Result};
use crate::output::{write_convergence_report, write_series_csv, write_snapshot_image, write_stability_report};
use crate::output::{IMAGE_MAX, IMAGE_MIN};

pub const SERIES_FILE: &str = "series.csv";
pub const CONFIG_ECHO_FILE: &str = "config_echo.toml";
pub const REPORT_FILE: &str = "report.csv";

/// Smallest observed order the convergence check accepts.
pub const MIN_MMS_ORDER: f64 = 1.8;

pub fn snapshot_file(step: usize) -> String {
    format!("snap_{step}.pgm")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub out: Option<PathBuf>,
    pub snap_every: Option<usize>,
    pub image_min: f64,
    pub image_max: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { out: None, snap_every: None, image_min: IMAGE_MIN, image_max: IMAGE_MAX }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output: RunOutput,
    pub config_echo: String,
    pub written: Vec<PathBuf>,
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_echo(config: &ExperimentConfig, dir: &Path, written: &mut Vec<PathBuf>) -> Result<String> {
    let echo = config_echo(config)?;
    let path = dir.join(CONFIG_ECHO_FILE);
    fs::write(&path, &echo).map_err(CliError::io(&path))?;
    written.push(path);
    Ok(echo)
}

/// Runs `config`; with an output directory, writes the series, snapshots and
/// configuration echo.
pub fn run_experiment(config: &ExperimentConfig, settings: &RunSettings) -> Result<RunArtifacts> {
    if settings.image_min >= settings.image_max {
        return Err(CliError::ImageRange { min: settings.image_min, max: settings.image_max });
    }
    let t0 = Instant::now();
    let inst = config.instantiate()?;
    let assembly = t0.elapsed();
    let snapshot_every = settings.snap_every.filter(|_| settings.out.is_some());
    let options = RunOptions { snapshot_every, keep_trajectory: false };
    let mut output = run(inst.initial, &inst.problem, &inst.scheme, &options, &mut [])?;
    output.timings.assembly = assembly;

    let mut written = Vec::new();
    let config_echo = match &settings.out {
        None => config_echo(config)?,
        Some(dir) => {
            prepare_dir(dir)?;
            let echo = write_echo(config, dir, &mut written)?;
            let path = dir.join(SERIES_FILE);
            write_series_csv(&output.series, &path)?;
            written.push(path);
            for (step, field) in &output.snapshots {
                let path = dir.join(snapshot_file(*step));
                write_snapshot_image(field, inst.problem.mesh(), settings.image_min, settings.image_max, &path)?;
                written.push(path);
            }
            echo
        }
    };
    Ok(RunArtifacts { output, config_echo, written })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// Perturb the initial state along a fixed blob direction.
    Data,
    /// Scale the control gain by `1 + delta`.
    Control,
}

pub fn verify_stability(
    config: &ExperimentConfig,
    kind: ProbeKind,
    deltas: &[f64],
    out: Option<&Path>,
) -> Result<StabilityReport> {
    let report = match kind {
        ProbeKind::Data => probe_data_stability(config, &probe_direction(), deltas)?,
        ProbeKind::Control => probe_control_stability(config, deltas)?,
    };
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write_echo(config, dir, &mut Vec::new())?;
        write_stability_report(&report, &dir.join(REPORT_FILE))?;
    }
    Ok(report)
}

pub fn verify_convergence(setup: &MmsSetup, out: Option<&Path>) -> Result<Vec<MmsLevel>> {
    let levels = heat_mms_study(setup)?;
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write_convergence_report(&levels, &dir.join(REPORT_FILE))?;
    }
    Ok(levels)
}

pub fn convergence_passes(levels: &[MmsLevel]) -> bool {
    levels.iter().skip(1).all(|l| l.order.is_some_and(|o| o >= MIN_MMS_ORDER))
}
