use serde::{Deserialize, Serialize};

use crate::beamform::{directed_power, ArrayScenario, ReflectionState};
use crate::biasline::{BiasSynthesizer, BiasVoltages, ModeWeights, SamplerKind, V_MAX, V_MIN};
use crate::error::{Error, Result};
use crate::metasurface::PhaseVoltageMap;

use super::phases::realize;

/// Line-search resolution of the weight ranking, volts.
pub const RANKING_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BruteForceConfig {
    pub initial_step: f64,
    pub step_floor: f64,
    /// Cap on full sweeps over the modes at one step size.
    pub max_passes: usize,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            step_floor: 0.001,
            max_passes: 1000,
        }
    }
}

impl BruteForceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_floor > 0.0 && self.step_floor < self.initial_step) || self.max_passes == 0 {
            return Err(Error::Invalid(
                "brute force needs 0 < step_floor < initial_step and a positive pass cap".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedMode {
    /// Position in the geometry's mode list.
    pub slot: usize,
    /// Harmonic number.
    pub mode: u32,
    /// Best single-mode power at the target direction (linear).
    pub power: f64,
    /// Amplitude reaching that power.
    pub amplitude: f64,
}

fn require_envelope(synth: &BiasSynthesizer) -> Result<()> {
    match synth.sampler() {
        SamplerKind::EnvelopeDetector => Ok(()),
        SamplerKind::SampleAndHold { .. } => Err(Error::Invalid(
            "this search requires the envelope-detector sampler".into(),
        )),
    }
}

/// Excites each mode alone on top of `dc` and line-searches its amplitude for
/// the most power at `theta`; returns the modes strongest first.
///
/// A lone mode of amplitude `A` samples to `dc - |A s_m|` at element `m`, so
/// the search covers `A ≥ 0` up to the amplitude that would push an element
/// below the window.
pub fn weight_ranking(
    synth: &BiasSynthesizer,
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    theta: f64,
    dc: f64,
) -> Result<Vec<RankedMode>> {
    require_envelope(synth)?;
    let g = synth.geometry();
    if !(V_MIN..=V_MAX).contains(&dc) {
        return Err(Error::Invalid(format!(
            "DC level {dc} V outside the bias window"
        )));
    }
    let mut ranked = Vec::with_capacity(g.n_modes());
    let mut volts = BiasVoltages(vec![dc; g.elements]);
    for (slot, &mode) in g.modes.iter().enumerate() {
        let s: Vec<f64> = (0..g.elements)
            .map(|m| synth.basis_row(m)[slot].abs())
            .collect();
        let peak = s.iter().cloned().fold(0.0, f64::max);
        let cap = if peak > 0.0 { (dc - V_MIN) / peak } else { 0.0 };
        let steps = (cap / RANKING_STEP + 1e-9).floor() as usize;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=steps {
            let a = k as f64 * RANKING_STEP;
            for (v, sm) in volts.0.iter_mut().zip(&s) {
                *v = (dc - a * sm).max(V_MIN);
            }
            let p = directed_power(scn, &realize(map, &volts)?, theta);
            if p > best.0 {
                best = (p, a);
            }
        }
        ranked.push(RankedMode {
            slot,
            mode,
            power: best.0,
            amplitude: best.1,
        });
    }
    ranked.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.slot.cmp(&b.slot)));
    Ok(ranked)
}

#[derive(Debug, Clone)]
pub struct HillClimbResult {
    pub weights: ModeWeights,
    pub voltages: BiasVoltages,
    pub state: ReflectionState,
    /// Power at the target after each accepted step, starting from the initial state.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

impl HillClimbResult {
    pub fn power(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial power")
    }
}

/// Coordinate ascent over the mode amplitudes in `order` (mode slots), starting
/// from all-zero amplitudes on top of `dc`. At each step size every mode tries
/// `+μ` then `-μ`; a step is kept only if all elements stay in the bias window
/// and the power at `theta` rises. Sweeps repeat until none is kept, then `μ` halves.
pub fn brute_force(
    synth: &BiasSynthesizer,
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    theta: f64,
    dc: f64,
    order: &[usize],
    cfg: &BruteForceConfig,
) -> Result<HillClimbResult> {
    require_envelope(synth)?;
    cfg.validate()?;
    let n = synth.geometry().n_modes();
    if order.iter().any(|&k| k >= n) {
        return Err(Error::Invalid(
            "mode order refers to a slot outside the geometry".into(),
        ));
    }
    let mut w = ModeWeights::zeros(dc, n);
    let mut volts = synth.sample(&w);
    if !volts.is_valid() {
        return Err(Error::Invalid(format!(
            "DC level {dc} V outside the bias window"
        )));
    }
    let mut state = realize(map, &volts)?;
    let mut power = directed_power(scn, &state, theta);
    let mut trace = vec![power];
    let mut evaluations = 0;
    let mut mu = cfg.initial_step;
    while mu >= cfg.step_floor {
        for _ in 0..cfg.max_passes {
            let mut improved = false;
            for &k in order {
                for sign in [1.0, -1.0] {
                    let mut trial = w.clone();
                    trial.amplitudes[k] += sign * mu;
                    let tv = synth.sample(&trial);
                    evaluations += 1;
                    if !tv.is_valid() {
                        continue;
                    }
                    let ts = realize(map, &tv)?;
                    let tp = directed_power(scn, &ts, theta);
                    if tp > power {
                        (w, volts, state, power) = (trial, tv, ts, tp);
                        trace.push(power);
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        mu /= 2.0;
    }
    Ok(HillClimbResult {
        weights: w,
        voltages: volts,
        state,
        trace,
        evaluations,
    })
}
