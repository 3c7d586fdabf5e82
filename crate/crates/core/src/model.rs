//! Terms of the controlled reaction-diffusion system: the reaction
//! nonlinearity, the switching functions, the disc-shaped control and
//! measurement devices, and the thermostat signal equations
//! `beta_j * kappa_j' + kappa_j = W_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{integral_product, NodalField};
use crate::mesh::Point;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionTerm {
    Zero,
    Linear { slope: f64 },
    /// `s -> -s^3 + s`
    CubicBistable,
    /// Coefficients in ascending powers: `c0 + c1 s + c2 s^2 + ...`.
    Polynomial { coefficients: Vec<f64> },
}

impl ReactionTerm {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ReactionTerm::Zero => 0.0,
            ReactionTerm::Linear { slope } => slope * s,
            ReactionTerm::CubicBistable => -s * s * s + s,
            ReactionTerm::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ReactionTerm::Zero => true,
            ReactionTerm::Linear { slope } => *slope == 0.0,
            ReactionTerm::CubicBistable => false,
            ReactionTerm::Polynomial { coefficients } => coefficients.iter().all(|&c| c == 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            ReactionTerm::Linear { slope } => slope.is_finite(),
            ReactionTerm::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            _ => true,
        };
        if finite {
            Ok(())
        } else {
            Err(Error::param("reaction", "coefficients must be finite"))
        }
    }
}

pub fn eval_reaction(f: &ReactionTerm, s: f64) -> f64 {
    f.eval(s)
}

/// Clamped linear switch `s -> h_w * clamp(l_w * s, -1, 1)`.
///
/// The sign of `l_w` sets the feedback direction; negative values give
/// negative feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingFunction {
    pub l_w: f64,
    pub h_w: f64,
}

impl SwitchingFunction {
    pub fn new(l_w: f64, h_w: f64) -> Result<Self> {
        if !l_w.is_finite() {
            return Err(Error::param("l_w", "must be finite"));
        }
        if !(h_w.is_finite() && h_w > 0.0) {
            return Err(Error::param("h_w", format!("must be positive, got {h_w}")));
        }
        Ok(SwitchingFunction { l_w, h_w })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.h_w * (self.l_w * s).clamp(-1.0, 1.0)
    }

    pub fn lipschitz(&self) -> f64 {
        self.l_w.abs() * self.h_w
    }
}

pub fn eval_switch(w: &SwitchingFunction, s: f64) -> f64 {
    w.eval(s)
}

/// Measurement height making the switch saturate once the local deviation
/// reaches `c_switch`: `(pi |l_w| c_switch r^2)^-1`.
pub fn calibrate_ch(l_w: f64, c_switch: f64, r_sigma: f64) -> Result<f64> {
    if l_w == 0.0 || !l_w.is_finite() {
        return Err(Error::param("l_w", "must be finite and nonzero for C_h calibration"));
    }
    if !(c_switch > 0.0 && c_switch.is_finite()) {
        return Err(Error::param("c_switch", "must be positive"));
    }
    if !(r_sigma > 0.0 && r_sigma.is_finite()) {
        return Err(Error::param("r_sigma", "must be positive"));
    }
    Ok(1.0 / (std::f64::consts::PI * l_w.abs() * c_switch * r_sigma * r_sigma))
}

/// `height * 1_{B(center, radius)}`, closed ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub center: Point,
    pub radius: f64,
    pub height: f64,
}

impl Device {
    /// A zero height is accepted and represents a switched-off device.
    pub fn new(center: Point, radius: f64, height: f64) -> Result<Self> {
        if !(center[0].is_finite() && center[1].is_finite()) {
            return Err(Error::param("center", "must be finite"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", format!("must be positive, got {radius}")));
        }
        if !(height >= 0.0 && height.is_finite()) {
            return Err(Error::param("height", format!("must be nonnegative, got {height}")));
        }
        Ok(Device { center, radius, height })
    }

    pub fn contains(&self, p: Point) -> bool {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        dx * dx + dy * dy <= self.radius * self.radius
    }

    pub fn profile(&self, p: Point) -> f64 {
        if self.contains(p) {
            self.height
        } else {
            0.0
        }
    }
}

/// Control devices `g_j`, measurement devices `h_k` and the weights `alpha_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSet {
    controls: Vec<Device>,
    measurements: Vec<Device>,
    alpha: Vec<Vec<f64>>,
}

impl DeviceSet {
    pub fn new(controls: Vec<Device>, measurements: Vec<Device>, alpha: Vec<Vec<f64>>) -> Result<Self> {
        if alpha.len() != controls.len() {
            return Err(Error::DimensionMismatch { context: "alpha rows", expected: controls.len(), actual: alpha.len() });
        }
        for row in &alpha {
            if row.len() != measurements.len() {
                return Err(Error::DimensionMismatch {
                    context: "alpha columns",
                    expected: measurements.len(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|a| !a.is_finite()) {
                return Err(Error::param("alpha", "weights must be finite"));
            }
        }
        if controls.is_empty() != measurements.is_empty() {
            return Err(Error::param("devices", "controls and measurements must both be present or both absent"));
        }
        Ok(DeviceSet { controls, measurements, alpha })
    }

    /// Each control disc covered by one measurement disc of the same support,
    /// with `alpha` the identity.
    pub fn paired(discs: &[(Point, f64)], c_g: f64, c_h: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let mut controls = Vec::with_capacity(discs.len());
        let mut measurements = Vec::with_capacity(discs.len());
        for &(center, radius) in discs {
            controls.push(Device::new(center, radius, c_g)?);
            measurements.push(Device::new(center, radius, c_h(radius)?)?);
        }
        let n = discs.len();
        let alpha = (0..n).map(|j| (0..n).map(|k| if j == k { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(controls, measurements, alpha)
    }

    /// No devices at all: the uncontrolled system.
    pub fn none() -> Self {
        DeviceSet { controls: Vec::new(), measurements: Vec::new(), alpha: Vec::new() }
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.measurements.len()
    }

    pub fn controls(&self) -> &[Device] {
        &self.controls
    }

    pub fn measurements(&self) -> &[Device] {
        &self.measurements
    }

    pub fn alpha(&self) -> &[Vec<f64>] {
        &self.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermostatBank {
    beta: Vec<f64>,
    kappa0: Vec<f64>,
}

impl ThermostatBank {
    pub fn new(beta: Vec<f64>, kappa0: Vec<f64>) -> Result<Self> {
        if beta.len() != kappa0.len() {
            return Err(Error::DimensionMismatch { context: "kappa0", expected: beta.len(), actual: kappa0.len() });
        }
        if let Some(j) = beta.iter().position(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::param(format!("beta[{j}]"), format!("time constants must satisfy beta_j > 0, got {}", beta[j])));
        }
        if let Some(j) = kappa0.iter().position(|k| !k.is_finite()) {
            return Err(Error::param(format!("kappa0[{j}]"), "must be finite"));
        }
        Ok(ThermostatBank { beta, kappa0 })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn kappa0(&self) -> &[f64] {
        &self.kappa0
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// `h^T M (y - y*)`, the discrete `\int h (y - y*)`.
pub fn measurement(mass: &CsrMatrix, h: &NodalField, y: &NodalField, ystar: &NodalField) -> Result<f64> {
    integral_product(mass, h, &y.sub(ystar)?)
}

/// `W_j = sum_k alpha_jk w_k(m_k)`.
pub fn feedback(alpha_row: &[f64], switches: &[SwitchingFunction], measurements: &[f64]) -> Result<f64> {
    if switches.len() != alpha_row.len() {
        return Err(Error::DimensionMismatch { context: "switches", expected: alpha_row.len(), actual: switches.len() });
    }
    if measurements.len() != alpha_row.len() {
        return Err(Error::DimensionMismatch {
            context: "measurements",
            expected: alpha_row.len(),
            actual: measurements.len(),
        });
    }
    Ok(alpha_row
        .iter()
        .zip(switches)
        .zip(measurements)
        .map(|((a, w), &m)| a * w.eval(m))
        .sum())
}

/// Implicit Euler step of `beta kappa' + kappa = w`.
///
/// The update is a convex combination of `kappa_prev` and `w`; the result is
/// clamped to their hull so the bound `|kappa_new| <= max(|kappa_prev|, |w|)`
/// also holds after rounding.
pub fn thermostat_step(beta: f64, kappa_prev: f64, w: f64, tau: f64) -> f64 {
    let k = (beta * kappa_prev + tau * w) / (beta + tau);
    k.clamp(kappa_prev.min(w), kappa_prev.max(w))
}
