use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamform::{steering_channel, ArrayScenario, ReflectionState};
use crate::biasline::BiasVoltages;
use crate::error::{Error, Result};
use crate::metasurface::PhaseVoltageMap;

/// Co-phases every path towards `theta`: `φ(m) = e^{-j ∠(h(m) g(m))}`.
pub fn ideal_phases(scn: &ArrayScenario, theta: f64) -> ReflectionState {
    let h = steering_channel(scn, theta);
    let phi = h
        .iter()
        .zip(&scn.incidence)
        .map(|(h, g)| Complex64::from_polar(1.0, -(h * g).arg()))
        .collect();
    ReflectionState::new(phi)
}

/// Averages the single-beam states and keeps only the phase.
pub fn multi_beam_phases(scn: &ArrayScenario, dirs: &[f64]) -> Result<ReflectionState> {
    if dirs.is_empty() {
        return Err(Error::Invalid(
            "multi-beam synthesis needs at least one direction".into(),
        ));
    }
    let mut avg = vec![Complex64::new(0.0, 0.0); scn.elements];
    for &t in dirs {
        for (a, p) in avg.iter_mut().zip(ideal_phases(scn, t).phi) {
            *a += p;
        }
    }
    let phi = avg
        .into_iter()
        .map(|a| {
            let a = a / dirs.len() as f64;
            if a.norm() < 1e-12 {
                Complex64::new(1.0, 0.0)
            } else {
                a / a.norm()
            }
        })
        .collect();
    Ok(ReflectionState::new(phi))
}

/// Exact reflection coefficients produced by `voltages`.
pub fn realize(map: &PhaseVoltageMap, voltages: &BiasVoltages) -> Result<ReflectionState> {
    let phi = voltages
        .values()
        .iter()
        .map(|&v| map.reflection(v))
        .collect::<Result<_>>()?;
    Ok(ReflectionState::new(phi))
}

/// Per element: clamp the target phase, invert it to a bias, and evaluate the
/// lossy coefficient that bias actually produces.
pub fn arbitrary_voltage_state(
    map: &PhaseVoltageMap,
    target: &ReflectionState,
) -> Result<(BiasVoltages, ReflectionState)> {
    let voltages = BiasVoltages(
        target
            .phi
            .iter()
            .map(|p| map.voltage_of_phase(p.arg()))
            .collect(),
    );
    let state = realize(map, &voltages)?;
    Ok((voltages, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NullSteerConfig {
    pub threshold: f64,
    pub max_iters: usize,
}

impl Default for NullSteerConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-4,
            max_iters: 10_000,
        }
    }
}

impl NullSteerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || self.max_iters == 0 {
            return Err(Error::Invalid(
                "null-steer threshold and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NullSteerOutcome {
    pub state: ReflectionState,
    /// Bias voltages, present for the voltage-constrained variant.
    pub voltages: Option<BiasVoltages>,
    pub converged: bool,
    pub passes: usize,
    /// Largest `|mean_m φ(m) g(m) h_j(m)|` over null directions at exit.
    pub residual: f64,
}

/// `φ g h` products for each null direction.
struct NullChannels {
    gh: Vec<Vec<Complex64>>,
}

impl NullChannels {
    fn new(scn: &ArrayScenario) -> Self {
        let gh = scn
            .undesired
            .iter()
            .map(|&t| {
                steering_channel(scn, t)
                    .into_iter()
                    .zip(&scn.incidence)
                    .map(|(h, g)| h * g)
                    .collect()
            })
            .collect();
        Self { gh }
    }

    fn residual(&self, phi: &[Complex64]) -> f64 {
        self.gh
            .iter()
            .map(|gh| {
                let s: Complex64 = phi.iter().zip(gh).map(|(p, c)| p * c).sum();
                s.norm() / phi.len() as f64
            })
            .fold(0.0, f64::max)
    }

    /// Removes the mean of `φ g h_j` for one direction, in place.
    fn remove_mean(&self, j: usize, phi: &mut [Complex64]) {
        let gh = &self.gh[j];
        let mean = phi.iter().zip(gh).map(|(p, c)| p * c).sum::<Complex64>() / phi.len() as f64;
        for (p, c) in phi.iter_mut().zip(gh) {
            if c.norm() > 0.0 {
                *p = (*p * c - mean) / c;
            }
        }
    }
}

fn unit(p: Complex64) -> Complex64 {
    let n = p.norm();
    if n < 1e-12 {
        Complex64::new(1.0, 0.0)
    } else {
        p / n
    }
}

/// Places nulls at `scn.undesired` starting from the multi-beam state for
/// `scn.desired`, alternating mean removal and unit-modulus projection.
pub fn null_steer(scn: &ArrayScenario, cfg: &NullSteerConfig) -> Result<NullSteerOutcome> {
    cfg.validate()?;
    let mut phi = multi_beam_phases(scn, &scn.desired)?.phi;
    if scn.undesired.is_empty() {
        return Ok(NullSteerOutcome {
            state: ReflectionState::new(phi),
            voltages: None,
            converged: true,
            passes: 0,
            residual: 0.0,
        });
    }
    let ch = NullChannels::new(scn);
    let mut best = (f64::INFINITY, phi.clone());
    let mut passes = 0;
    let mut converged = false;
    loop {
        let residual = ch.residual(&phi);
        if residual < best.0 {
            best = (residual, phi.clone());
        }
        if residual <= cfg.threshold {
            converged = true;
            break;
        }
        if passes == cfg.max_iters {
            break;
        }
        for j in 0..scn.undesired.len() {
            ch.remove_mean(j, &mut phi);
            phi.iter_mut().for_each(|p| *p = unit(*p));
        }
        passes += 1;
    }
    Ok(NullSteerOutcome {
        state: ReflectionState::new(best.1),
        voltages: None,
        converged,
        passes,
        residual: best.0,
    })
}

/// Null steering where each projection goes through the bias map, so every
/// iterate is a state the hardware can produce with arbitrary voltages.
pub fn null_steer_realized(
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    cfg: &NullSteerConfig,
) -> Result<NullSteerOutcome> {
    cfg.validate()?;
    let start = multi_beam_phases(scn, &scn.desired)?;
    let (mut volts, state) = arbitrary_voltage_state(map, &start)?;
    let mut phi = state.phi;
    if scn.undesired.is_empty() {
        return Ok(NullSteerOutcome {
            state: ReflectionState::new(phi),
            voltages: Some(volts),
            converged: true,
            passes: 0,
            residual: 0.0,
        });
    }
    let ch = NullChannels::new(scn);
    let mut best = (f64::INFINITY, phi.clone(), volts.clone());
    let mut passes = 0;
    let mut converged = false;
    loop {
        let residual = ch.residual(&phi);
        if residual < best.0 {
            best = (residual, phi.clone(), volts.clone());
        }
        if residual <= cfg.threshold {
            converged = true;
            break;
        }
        if passes == cfg.max_iters {
            break;
        }
        for j in 0..scn.undesired.len() {
            ch.remove_mean(j, &mut phi);
            let (v, s) = arbitrary_voltage_state(map, &ReflectionState::new(phi))?;
            volts = v;
            phi = s.phi;
        }
        passes += 1;
    }
    Ok(NullSteerOutcome {
        state: ReflectionState::new(best.1),
        voltages: Some(best.2),
        converged,
        passes,
        residual: best.0,
    })
}
