//! Device layouts, analytic field generators and the preset experiment
//! configurations.
//!
//! The presets use disc devices of a common radius, one measurement disc per
//! control disc with the same support, identity weights, a single clamped
//! switch `(L_w, H_w)` and the measurement height calibrated from `C_switch`.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{interpolate, NodalField};
use crate::mesh::{build_mesh, Mesh, Point};
use crate::model::{calibrate_ch, DeviceSet, ReactionTerm, SwitchingFunction, ThermostatBank};
use crate::sparse::CgOptions;
use crate::stepper::{
    run, AssembledProblem, FeedbackMode, MeasurementTiming, Observer, Problem, RunOptions, RunOutput, SchemeParams,
    SimState,
};

/// Preset names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 7] = ["exp1-16", "exp1-36", "exp1-64", "exp2-ic1", "exp2-ic2", "exp3-64", "exp3-20"];

/// Thermostat time constant used by every preset.
pub const DEFAULT_BETA: f64 = 0.1;

/// Row-major indices (`j * 8 + i`) of the 8x8 grid devices kept in the
/// 20-device layout: the three devices of each corner block, the central
/// 2x2 block and one device near the middle of each edge.
pub const SUBSET_20_OF_64: [usize; 20] = [0, 1, 3, 6, 7, 8, 15, 27, 28, 31, 32, 35, 36, 48, 55, 56, 57, 60, 62, 63];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutSpec {
    /// No devices: the uncontrolled equation.
    None,
    /// `n x n` discs centred at `(-1 + (2i - 1)/n, -1 + (2j - 1)/n)`.
    Grid { n_per_side: usize, radius: f64 },
    GridSubset { n_per_side: usize, radius: f64, kept: Vec<usize> },
    Explicit { devices: Vec<Disc> },
}

/// `n x n` tight-cover grid; `radius = 1/n` gives tangent discs.
pub fn grid_layout(n_per_side: usize, radius: f64) -> Result<LayoutSpec> {
    let layout = LayoutSpec::Grid { n_per_side, radius };
    layout.discs()?;
    Ok(layout)
}

fn grid_discs(n: usize, radius: f64) -> Result<Vec<Disc>> {
    if n == 0 {
        return Err(Error::param("layout.n_per_side", "must be at least 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("layout.radius", "must be positive"));
    }
    // Neighbouring centres are 2/n apart.
    if radius > 1.0 / n as f64 * (1.0 + 1e-12) {
        return Err(Error::param(
            "layout.radius",
            format!("grid discs overlap: radius {radius} exceeds 1/n_per_side = {}", 1.0 / n as f64),
        ));
    }
    let c = |i: usize| -1.0 + (2 * i + 1) as f64 / n as f64;
    Ok((0..n * n).map(|k| Disc { center: [c(k % n), c(k / n)], radius }).collect())
}

impl LayoutSpec {
    pub fn discs(&self) -> Result<Vec<Disc>> {
        match self {
            LayoutSpec::None => Ok(Vec::new()),
            LayoutSpec::Grid { n_per_side, radius } => grid_discs(*n_per_side, *radius),
            LayoutSpec::GridSubset { n_per_side, radius, kept } => {
                let all = grid_discs(*n_per_side, *radius)?;
                if kept.is_empty() {
                    return Err(Error::param("layout.kept", "must keep at least one device"));
                }
                if kept.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::param("layout.kept", "indices must be strictly increasing"));
                }
                kept.iter()
                    .map(|&k| all.get(k).copied().ok_or(Error::IndexOutOfRange { index: k, len: all.len() }))
                    .collect()
            }
            LayoutSpec::Explicit { devices } => {
                for (j, d) in devices.iter().enumerate() {
                    if !(d.radius > 0.0 && d.radius.is_finite()) {
                        return Err(Error::param(format!("layout.devices[{j}].radius"), "must be positive"));
                    }
                    if !(d.center[0].abs() < 1.0 && d.center[1].abs() < 1.0) {
                        return Err(Error::param(format!("layout.devices[{j}].center"), "must lie inside the domain"));
                    }
                }
                Ok(devices.clone())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LayoutSpec::None => 0,
            LayoutSpec::Grid { n_per_side, .. } => n_per_side * n_per_side,
            LayoutSpec::GridSubset { kept, .. } => kept.len(),
            LayoutSpec::Explicit { devices } => devices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Common device radius, when the layout has one.
    pub fn radius(&self) -> Option<f64> {
        match self {
            LayoutSpec::None => None,
            LayoutSpec::Grid { radius, .. } | LayoutSpec::GridSubset { radius, .. } => Some(*radius),
            LayoutSpec::Explicit { devices } => {
                let r = devices.first()?.radius;
                devices.iter().all(|d| d.radius == r).then_some(r)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub center: Point,
    pub width: f64,
    pub amplitude: f64,
}

/// Analytic scalar fields on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    /// `sum_b amplitude_b * exp(-|x - center_b|^2 / width_b^2)`
    GaussianBlobs { blobs: Vec<Blob> },
    /// `amplitude * tanh((x_axis - position) / width)`
    TanhStripe { axis: usize, position: f64, width: f64, amplitude: f64 },
    Sum { terms: Vec<FieldSpec> },
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::param("field", what.to_string()));
        match self {
            FieldSpec::Constant { value } if !value.is_finite() => bad("constant must be finite"),
            FieldSpec::GaussianBlobs { blobs } => {
                for b in blobs {
                    if !(b.width > 0.0 && b.width.is_finite()) {
                        return bad("blob width must be positive");
                    }
                    if !(b.amplitude.is_finite() && b.center.iter().all(|c| c.is_finite())) {
                        return bad("blob parameters must be finite");
                    }
                }
                Ok(())
            }
            FieldSpec::TanhStripe { axis, position, width, amplitude } => {
                if *axis > 1 {
                    bad("stripe axis must be 0 or 1")
                } else if !(*width > 0.0 && width.is_finite()) {
                    bad("stripe width must be positive")
                } else if !(position.is_finite() && amplitude.is_finite()) {
                    bad("stripe parameters must be finite")
                } else {
                    Ok(())
                }
            }
            FieldSpec::Sum { terms } => terms.iter().try_for_each(FieldSpec::validate),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::GaussianBlobs { blobs } => blobs
                .iter()
                .map(|b| {
                    let (dx, dy) = (p[0] - b.center[0], p[1] - b.center[1]);
                    b.amplitude * (-(dx * dx + dy * dy) / (b.width * b.width)).exp()
                })
                .sum(),
            FieldSpec::TanhStripe { axis, position, width, amplitude } => {
                amplitude * ((p[*axis] - position) / width).tanh()
            }
            FieldSpec::Sum { terms } => terms.iter().map(|t| t.eval(p)).sum(),
        }
    }
}

/// Nodal interpolant of `spec` on `mesh`.
pub fn realize_fields(spec: &FieldSpec, mesh: &Mesh) -> Result<NodalField> {
    spec.validate()?;
    interpolate(mesh, |p| spec.eval(p))
}

fn blob(x: f64, y: f64, width: f64, amplitude: f64) -> Blob {
    Blob { center: [x, y], width, amplitude }
}

/// Initial condition, first variant: a mixture of positive and negative bumps.
pub fn initial_field_variant1() -> FieldSpec {
    FieldSpec::GaussianBlobs {
        blobs: vec![
            blob(-0.45, 0.40, 0.35, 0.9),
            blob(0.45, -0.35, 0.30, -0.8),
            blob(0.35, 0.55, 0.25, 0.6),
            blob(-0.50, -0.55, 0.30, -0.7),
        ],
    }
}

/// Initial condition, second variant: different bumps of comparable size.
pub fn initial_field_variant2() -> FieldSpec {
    FieldSpec::GaussianBlobs {
        blobs: vec![
            blob(0.0, 0.0, 0.40, -0.8),
            blob(0.60, 0.60, 0.30, 0.9),
            blob(-0.60, 0.50, 0.30, -0.6),
            blob(0.55, -0.60, 0.25, 0.7),
        ],
    }
}

/// Reference state for the tracking presets.
pub fn reference_field() -> FieldSpec {
    FieldSpec::Sum {
        terms: vec![
            FieldSpec::TanhStripe { axis: 0, position: 0.0, width: 0.15, amplitude: 0.6 },
            FieldSpec::GaussianBlobs { blobs: vec![blob(0.3, 0.3, 0.25, 0.4)] },
        ],
    }
}

/// Fixed perturbation direction for initial-data stability probes.
pub fn probe_direction() -> FieldSpec {
    FieldSpec::GaussianBlobs { blobs: vec![blob(0.2, -0.1, 0.3, 1.0)] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Cells per side; the mesh has `(n_div + 1)^2` vertices.
    pub n_div: usize,
    /// Number of time steps `M`; `tau = t_final / steps`.
    pub steps: usize,
    pub n_picard: usize,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_max_iters: Option<usize>,
    #[serde(default)]
    pub precondition: bool,
    #[serde(default)]
    pub measurement: MeasurementTiming,
    #[serde(default)]
    pub feedback: FeedbackMode,
}

fn default_cg_tol() -> f64 {
    1e-10
}

impl SchemeConfig {
    pub fn new(n_div: usize, steps: usize, n_picard: usize) -> Self {
        SchemeConfig {
            n_div,
            steps,
            n_picard,
            cg_tol: default_cg_tol(),
            cg_max_iters: None,
            precondition: false,
            measurement: MeasurementTiming::Implicit,
            feedback: FeedbackMode::Active,
        }
    }
}

/// A complete simulation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub t_final: f64,
    pub diffusion: f64,
    pub c_g: f64,
    pub c_switch: f64,
    pub l_w: f64,
    pub h_w: f64,
    /// One time constant per device.
    pub beta: Vec<f64>,
    pub kappa0: Vec<f64>,
    pub reaction: ReactionTerm,
    pub layout: LayoutSpec,
    pub y0: FieldSpec,
    pub ystar: FieldSpec,
    pub scheme: SchemeConfig,
}

/// Discretized instance ready to run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: AssembledProblem,
    pub initial: SimState,
    pub scheme: SchemeParams,
}

impl ExperimentConfig {
    pub fn n_devices(&self) -> usize {
        self.layout.len()
    }

    pub fn r_sigma(&self) -> Option<f64> {
        self.layout.radius()
    }

    /// Resets `beta` and `kappa0` to preset values sized to the layout.
    pub fn with_uniform_thermostats(mut self, beta: f64, kappa0: f64) -> Self {
        let j = self.n_devices();
        self.beta = vec![beta; j];
        self.kappa0 = vec![kappa0; j];
        self
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        need(self.t_final > 0.0 && self.t_final.is_finite(), format!("t_final must be positive, got {}", self.t_final));
        need(
            self.diffusion > 0.0 && self.diffusion.is_finite(),
            format!("diffusion must satisfy D > 0, got {}", self.diffusion),
        );
        need(self.c_g >= 0.0 && self.c_g.is_finite(), format!("c_g must be nonnegative, got {}", self.c_g));
        need(self.c_switch > 0.0 && self.c_switch.is_finite(), format!("c_switch must be positive, got {}", self.c_switch));
        need(self.l_w != 0.0 && self.l_w.is_finite(), format!("l_w must be finite and nonzero, got {}", self.l_w));
        need(self.h_w > 0.0 && self.h_w.is_finite(), format!("h_w must be positive, got {}", self.h_w));
        let j = self.n_devices();
        need(self.beta.len() == j, format!("beta has {} entries but the layout has {j} devices", self.beta.len()));
        need(self.kappa0.len() == j, format!("kappa0 has {} entries but the layout has {j} devices", self.kappa0.len()));
        for (i, b) in self.beta.iter().enumerate() {
            need(*b > 0.0 && b.is_finite(), format!("beta[{i}] = {b} violates the requirement beta_j > 0"));
        }
        for (i, k) in self.kappa0.iter().enumerate() {
            need(k.is_finite(), format!("kappa0[{i}] must be finite"));
        }
        if let Err(e) = self.reaction.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.layout.discs() {
            problems.push(e.to_string());
        }
        for (name, f) in [("y0", &self.y0), ("ystar", &self.ystar)] {
            if let Err(e) = f.validate() {
                problems.push(format!("{name}: {e}"));
            }
        }
        let s = &self.scheme;
        if s.n_div == 0 {
            problems.push("scheme.n_div must be at least 1".into());
        }
        if s.steps == 0 {
            problems.push("scheme.steps must be at least 1".into());
        }
        if s.n_picard == 0 {
            problems.push("scheme.n_picard must be at least 1".into());
        }
        if !(s.cg_tol > 0.0 && s.cg_tol < 1.0) {
            problems.push(format!("scheme.cg_tol must lie in (0, 1), got {}", s.cg_tol));
        }
        if s.cg_max_iters == Some(0) {
            problems.push("scheme.cg_max_iters must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { problems })
        }
    }

    pub fn scheme_params(&self) -> Result<SchemeParams> {
        let mut p = SchemeParams::new(self.t_final, self.scheme.steps, self.scheme.n_picard)?;
        p.cg = CgOptions {
            rel_tol: self.scheme.cg_tol,
            max_iters: self.scheme.cg_max_iters,
            precondition: self.scheme.precondition,
        };
        p.measurement = self.scheme.measurement;
        p.feedback = self.scheme.feedback;
        Ok(p)
    }

    pub fn device_set(&self) -> Result<DeviceSet> {
        let discs: Vec<(Point, f64)> = self.layout.discs()?.iter().map(|d| (d.center, d.radius)).collect();
        if discs.is_empty() {
            return Ok(DeviceSet::none());
        }
        DeviceSet::paired(&discs, self.c_g, |r| calibrate_ch(self.l_w, self.c_switch, r))
    }

    pub fn instantiate(&self) -> Result<Instance> {
        let mesh = build_mesh(self.scheme.n_div)?;
        self.instantiate_on(&mesh)
    }

    pub fn instantiate_on(&self, mesh: &Mesh) -> Result<Instance> {
        self.validate()?;
        if mesh.n_div() != self.scheme.n_div {
            return Err(Error::param("mesh", "mesh resolution differs from scheme.n_div"));
        }
        let scheme = self.scheme_params()?;
        let devices = self.device_set()?;
        let switch = SwitchingFunction::new(self.l_w, self.h_w)?;
        let problem = Problem {
            diffusion: self.diffusion,
            reaction: self.reaction.clone(),
            switches: vec![switch; devices.n_measurements()],
            devices,
            thermostats: ThermostatBank::new(self.beta.clone(), self.kappa0.clone())?,
            ystar: realize_fields(&self.ystar, mesh)?,
        };
        let assembled = AssembledProblem::assemble(mesh, &problem, scheme.tau)?;
        let initial = SimState::initial(realize_fields(&self.y0, mesh)?, self.kappa0.clone());
        Ok(Instance { problem: assembled, initial, scheme })
    }
}

/// Builds and runs `config`; assembly time is included in the timings.
pub fn simulate(config: &ExperimentConfig, options: &RunOptions, observers: &mut [&mut dyn Observer]) -> Result<RunOutput> {
    let t0 = Instant::now();
    let inst = config.instantiate()?;
    let assembly = t0.elapsed();
    let mut out = run(inst.initial, &inst.problem, &inst.scheme, options, observers)?;
    out.timings.assembly = assembly;
    Ok(out)
}

fn base_config(name: &str, layout: LayoutSpec, t_final: f64, diffusion: f64, steps: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        t_final,
        diffusion,
        c_g: 16.0 / PI,
        c_switch: 0.2,
        l_w: -10.0,
        h_w: 10.0,
        beta: Vec::new(),
        kappa0: Vec::new(),
        reaction: ReactionTerm::CubicBistable,
        layout,
        y0: initial_field_variant1(),
        ystar: FieldSpec::Constant { value: 0.0 },
        scheme: SchemeConfig::new(100, steps, 3),
    }
    .with_uniform_thermostats(DEFAULT_BETA, 0.0)
}

/// Preset experiment `id` (1, 2 or 3).
///
/// * 1: unstable equilibrium `y* = 0`; `variant` is the device count 16, 36 or 64.
/// * 2: two initial conditions; `variant` is 1 or 2.
/// * 3: device count comparison; `variant` is 64 or 20.
pub fn make_experiment(id: u32, variant: u32) -> Result<ExperimentConfig> {
    let unknown = || Error::param("variant", format!("experiment {id} has no variant {variant}"));
    match id {
        1 => {
            let n = match variant {
                16 => 4,
                36 => 6,
                64 => 8,
                _ => return Err(unknown()),
            };
            let layout = grid_layout(n, 1.0 / n as f64)?;
            Ok(base_config(&format!("exp1-{variant}"), layout, 24.0, 0.01, 2400))
        }
        2 => {
            let y0 = match variant {
                1 => initial_field_variant1(),
                2 => initial_field_variant2(),
                _ => return Err(unknown()),
            };
            let mut c = base_config(&format!("exp2-ic{variant}"), grid_layout(8, 0.125)?, 4.0, 0.02, 400);
            c.y0 = y0;
            c.ystar = reference_field();
            Ok(c)
        }
        3 => {
            let layout = match variant {
                64 => grid_layout(8, 0.125)?,
                20 => LayoutSpec::GridSubset { n_per_side: 8, radius: 0.125, kept: SUBSET_20_OF_64.to_vec() },
                _ => return Err(unknown()),
            };
            let mut c = base_config(&format!("exp3-{variant}"), layout, 4.0, 0.02, 400);
            c.ystar = reference_field();
            Ok(c)
        }
        _ => Err(Error::param("experiment", format!("unknown experiment id {id}"))),
    }
}

/// Looks up a preset by its name in [`PRESET_NAMES`].
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (id, variant) = match name {
        "exp1-16" => (1, 16),
        "exp1-36" => (1, 36),
        "exp1-64" => (1, 64),
        "exp2-ic1" => (2, 1),
        "exp2-ic2" => (2, 2),
        "exp3-64" => (3, 64),
        "exp3-20" => (3, 20),
        _ => return Err(Error::param("preset", format!("unknown preset `{name}`"))),
    };
    make_experiment(id, variant)
}
