//! Far-field line-of-sight channel, radiation patterns and the SNR/SLNR objectives.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Gains further than this below the pattern peak are clamped in dB output.
pub const PATTERN_FLOOR_DB: f64 = -100.0;

/// Transmitter, surface and receiver directions for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayScenario {
    pub elements: usize,
    /// Element spacing in wavelengths.
    pub spacing_wl: f64,
    pub symbol_power: f64,
    pub noise_power: f64,
    /// Beam directions in radians.
    pub desired: Vec<f64>,
    /// Null (eavesdropper) directions in radians.
    pub undesired: Vec<f64>,
    /// Incident-field coefficients `g(m)`; all ones for normal incidence.
    pub incidence: Vec<Complex64>,
}

impl ArrayScenario {
    pub fn new(elements: usize, spacing_wl: f64) -> Self {
        Self {
            elements,
            spacing_wl,
            symbol_power: 1.0,
            noise_power: 1.0,
            desired: Vec::new(),
            undesired: Vec::new(),
            incidence: vec![Complex64::new(1.0, 0.0); elements],
        }
    }

    pub fn with_directions(mut self, desired: Vec<f64>, undesired: Vec<f64>) -> Self {
        self.desired = desired;
        self.undesired = undesired;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements == 0 {
            return Err(Error::Invalid("scenario needs at least one element".into()));
        }
        if !(self.spacing_wl > 0.0) || !(self.symbol_power > 0.0) || !(self.noise_power >= 0.0) {
            return Err(Error::Invalid(
                "spacing and symbol power must be positive, noise non-negative".into(),
            ));
        }
        if self.incidence.len() != self.elements {
            return Err(Error::Invalid(format!(
                "incidence has {} entries for {} elements",
                self.incidence.len(),
                self.elements
            )));
        }
        for &th in self.desired.iter().chain(&self.undesired) {
            if !(th.abs() < FRAC_PI_2) {
                return Err(Error::Invalid(format!(
                    "direction {th} rad outside (-pi/2, pi/2)"
                )));
            }
        }
        Ok(())
    }

    /// Phase progression per element, `κ(θ) = 2π Δ sin θ`.
    pub fn kappa(&self, theta: f64) -> f64 {
        TAU * self.spacing_wl * theta.sin()
    }
}

/// Per-element complex reflection coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionState {
    pub phi: Vec<Complex64>,
}

impl ReflectionState {
    pub fn new(phi: Vec<Complex64>) -> Self {
        Self { phi }
    }

    pub fn uniform(elements: usize) -> Self {
        Self {
            phi: vec![Complex64::new(1.0, 0.0); elements],
        }
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        Self {
            phi: phases
                .iter()
                .map(|&p| Complex64::from_polar(1.0, p))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn is_passive(&self) -> bool {
        self.phi.iter().all(|p| p.norm() <= 1.0 + 1e-12)
    }
}

/// Channel to a far-field receiver at `theta`: entry `m` is `e^{-j m κ(θ)}`.
pub fn steering_channel(scn: &ArrayScenario, theta: f64) -> Vec<Complex64> {
    let k = scn.kappa(theta);
    (0..scn.elements)
        .map(|m| Complex64::from_polar(1.0, -(m as f64) * k))
        .collect()
}

/// `Σ_m φ(m) g(m) e^{-j m κ(θ)}`.
fn array_factor(scn: &ArrayScenario, phi: &[Complex64], theta: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -scn.kappa(theta));
    let mut rot = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, (p, g)) in phi.iter().zip(&scn.incidence).enumerate() {
        if m > 0 && m % 64 == 0 {
            rot = Complex64::from_polar(1.0, -(m as f64) * scn.kappa(theta));
        }
        acc += p * g * rot;
        rot *= step;
    }
    acc
}

/// Received power `ρ_s |hᵀ Φ g|²` at `theta`.
pub fn directed_power(scn: &ArrayScenario, state: &ReflectionState, theta: f64) -> f64 {
    assert_eq!(
        state.phi.len(),
        scn.elements,
        "state length differs from element count"
    );
    scn.symbol_power * array_factor(scn, &state.phi, theta).norm_sqr()
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Uniform grid from -90° to 90° in `step_deg` steps, in radians.
pub fn default_theta_grid(step_deg: f64) -> Vec<f64> {
    let n = (180.0 / step_deg).round() as usize;
    (0..=n)
        .map(|i| (-90.0 + i as f64 * step_deg).to_radians())
        .collect()
}

/// Gain in dB over `thetas`, with values below `peak + PATTERN_FLOOR_DB` clamped.
pub fn radiation_pattern(
    scn: &ArrayScenario,
    state: &ReflectionState,
    thetas: &[f64],
) -> Vec<(f64, f64)> {
    let powers: Vec<f64> = thetas
        .par_iter()
        .map(|&t| directed_power(scn, state, t))
        .collect();
    let peak = powers.iter().cloned().fold(0.0, f64::max);
    let floor = if peak > 0.0 {
        to_db(peak) + PATTERN_FLOOR_DB
    } else {
        f64::NEG_INFINITY
    };
    thetas
        .iter()
        .zip(powers)
        .map(|(&t, p)| (t, to_db(p).max(floor)))
        .collect()
}

pub fn snr(scn: &ArrayScenario, state: &ReflectionState, theta: f64) -> f64 {
    directed_power(scn, state, theta) / scn.noise_power
}

/// Weakest desired-beam power over the strongest leakage plus noise.
pub fn slnr(scn: &ArrayScenario, state: &ReflectionState) -> f64 {
    assert!(
        !scn.desired.is_empty(),
        "slnr needs at least one desired direction"
    );
    let signal = scn
        .desired
        .iter()
        .map(|&t| directed_power(scn, state, t))
        .fold(f64::INFINITY, f64::min);
    let leakage = scn
        .undesired
        .iter()
        .map(|&t| directed_power(scn, state, t))
        .fold(0.0, f64::max);
    signal / (leakage + scn.noise_power)
}

pub fn slnr_db(scn: &ArrayScenario, state: &ReflectionState) -> f64 {
    to_db(slnr(scn, state))
}
