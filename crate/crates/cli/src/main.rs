use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use thermoctl_cli::commands::{
    convergence_passes, run_experiment, verify_convergence, verify_stability, ProbeKind, RunSettings, MIN_MMS_ORDER,
};
use thermoctl_cli::config::{config_echo, load_config};
use thermoctl_cli::output::{IMAGE_MAX, IMAGE_MIN};
use thermoctl_core::convergence::MmsSetup;
use thermoctl_core::experiments::PRESET_NAMES;
use thermoctl_core::stability::SPREAD_THRESHOLD;
use thermoctl_core::stepper::MeasurementTiming;
use thermoctl_core::{preset, ExperimentConfig};

#[derive(Parser)]
#[command(name = "thermoctl", version, about = "Reaction-diffusion simulations under thermostat feedback control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a configuration file.
    Run(RunArgs),
    /// Numerical verification studies.
    #[command(subcommand)]
    Verify(Verify),
    /// Print the built-in preset names.
    ListPresets,
    /// Print a preset as a configuration file.
    DumpPreset {
        name: String,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Verify {
    /// Response of trajectories to perturbations of the data or the control.
    Stability {
        /// Preset name or configuration file.
        source: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [1e-1, 1e-2, 1e-3])]
        deltas: Vec<f64>,
        /// Perturb the control gain instead of the initial state.
        #[arg(long)]
        control: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Manufactured-solution convergence study of the heat equation.
    Convergence {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or configuration file.
    source: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot cadence in steps (needs --out).
    #[arg(long)]
    snap_every: Option<usize>,
    #[arg(long, default_value_t = IMAGE_MIN, allow_negative_numbers = true)]
    image_min: f64,
    #[arg(long, default_value_t = IMAGE_MAX, allow_negative_numbers = true)]
    image_max: f64,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// Relative CG residual tolerance.
    #[arg(long)]
    cg_tol: Option<f64>,
    /// Measure the state at the old time level.
    #[arg(long)]
    explicit_measure: bool,
    /// Cells per side of the mesh.
    #[arg(long)]
    n_div: Option<usize>,
    /// Number of time steps over the unchanged horizon.
    #[arg(long)]
    steps: Option<usize>,
}

impl Overrides {
    fn apply(&self, mut c: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(t) = self.cg_tol {
            c.scheme.cg_tol = t;
        }
        if self.explicit_measure {
            c.scheme.measurement = MeasurementTiming::Explicit;
        }
        if let Some(n) = self.n_div {
            c.scheme.n_div = n;
        }
        if let Some(m) = self.steps {
            c.scheme.steps = m;
        }
        c.validate()?;
        Ok(c)
    }
}

fn load(source: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let c = load_config(source).with_context(|| format!("loading `{source}`"))?;
    overrides.apply(c).with_context(|| format!("applying overrides to `{source}`"))
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let config = load(&args.source, &args.overrides)?;
    let settings = RunSettings {
        out: args.out,
        snap_every: args.snap_every,
        image_min: args.image_min,
        image_max: args.image_max,
    };
    let a = run_experiment(&config, &settings).with_context(|| format!("running `{}`", config.name))?;
    let s = &a.output.series;
    let t = &a.output.timings;
    println!("{}: {} steps, {} devices", config.name, config.scheme.steps, config.n_devices());
    println!("final E_y = {:.6e}, E_grad = {:.6e}", s.final_e_y().unwrap(), s.final_e_grad().unwrap());
    println!(
        "assembly {:.3}s, stepping {:.3}s, recording {:.3}s",
        t.assembly.as_secs_f64(),
        t.stepping.as_secs_f64(),
        t.recording.as_secs_f64()
    );
    for p in &a.written {
        println!("wrote {}", p.display());
    }
    Ok(true)
}

fn cmd_verify(v: Verify) -> Result<bool> {
    match v {
        Verify::Stability { source, deltas, control, out, overrides } => {
            let config = load(&source, &overrides)?;
            let kind = if control { ProbeKind::Control } else { ProbeKind::Data };
            let r = verify_stability(&config, kind, &deltas, out.as_deref())
                .with_context(|| format!("stability probe on `{}`", config.name))?;
            println!("{:>12} {:>14} {:>14}", "delta", "response", "ratio");
            for i in 0..r.perturbation_sizes.len() {
                println!("{:>12.3e} {:>14.6e} {:>14.6e}", r.perturbation_sizes[i], r.response_norms[i], r.ratios[i]);
            }
            let ok = r.is_lipschitz_consistent();
            let verdict = if ok { "consistent" } else { "NOT consistent" };
            println!("ratio spread {:.4} (threshold {SPREAD_THRESHOLD}): {verdict} with Lipschitz dependence", r.spread);
            Ok(ok)
        }
        Verify::Convergence { levels, out } => {
            let setup = MmsSetup { levels, ..MmsSetup::default() };
            let ls = verify_convergence(&setup, out.as_deref())?;
            println!("{:>6} {:>10} {:>6} {:>12} {:>14} {:>8}", "n_div", "h", "steps", "tau", "L2 error", "order");
            for l in &ls {
                let order = l.order.map_or("-".to_string(), |o| format!("{o:.3}"));
                println!("{:>6} {:>10.4e} {:>6} {:>12.4e} {:>14.6e} {:>8}", l.n_div, l.h, l.steps, l.tau, l.error, order);
            }
            let ok = convergence_passes(&ls);
            println!("observed order {} {MIN_MMS_ORDER} on every refinement", if ok { ">=" } else { "NOT >=" });
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(v) => cmd_verify(v),
        Command::ListPresets => {
            PRESET_NAMES.iter().for_each(|n| println!("{n}"));
            Ok(true)
        }
        Command::DumpPreset { name, out } => (|| {
            let text = config_echo(&preset(&name)?)?;
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
