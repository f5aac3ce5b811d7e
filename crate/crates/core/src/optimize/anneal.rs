use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beamform::{slnr_db, ArrayScenario, ReflectionState};
use crate::biasline::{
    mode_index_pd, mode_index_sh, mode_index_sh_exact, BiasSynthesizer, BiasVoltages, ModeWeights,
    SamplerKind,
};
use crate::error::{Error, Result};
use crate::metasurface::PhaseVoltageMap;

use super::phases::realize;

/// DC level used with the sample-and-hold sampler, the middle of the bias window.
pub const SH_DC: f64 = -9.5;
/// DC level used with the envelope detector, the top of the bias window.
pub const ENVELOPE_DC: f64 = -4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SAConfig {
    /// Standard deviation of the per-mode perturbation, volts.
    pub lambda: f64,
    pub cooling: f64,
    pub max_iters: usize,
    /// Return to the best state after this many iterations without a new best.
    pub revert_patience: usize,
    pub seed: u64,
}

impl Default for SAConfig {
    fn default() -> Self {
        Self {
            lambda: 0.03,
            cooling: 0.002,
            max_iters: 2000,
            revert_patience: 100,
            seed: 0,
        }
    }
}

impl SAConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0)
            || !(self.cooling > 0.0)
            || self.max_iters == 0
            || self.revert_patience == 0
        {
            return Err(Error::Invalid(
                "annealing needs lambda >= 0, cooling > 0 and positive iteration counts".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AnnealResult {
    pub weights: ModeWeights,
    pub voltages: BiasVoltages,
    pub state: ReflectionState,
    pub slnr_db: f64,
    pub initial_slnr_db: f64,
    /// SLNR of the current state after each iteration.
    pub trace: Vec<f64>,
    /// Best SLNR seen up to each iteration.
    pub best_trace: Vec<f64>,
}

fn evaluate(
    synth: &BiasSynthesizer,
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    w: &ModeWeights,
) -> Result<Option<(BiasVoltages, ReflectionState, f64)>> {
    let v = synth.sample(w);
    if !v.is_valid() {
        return Ok(None);
    }
    let st = realize(map, &v)?;
    let s = slnr_db(scn, &st);
    Ok(Some((v, st, s)))
}

/// Simulated annealing on the mode amplitudes (the DC level stays fixed).
///
/// Proposals add `λ·ε`, `ε ~ N(0, 1)` per mode; proposals leaving the bias
/// window are skipped. A new best is always taken; otherwise a move is kept
/// with probability `exp(-(s - s_new) / (k_c T))`, `T = 100 (1 - i / i_max)`,
/// taken as zero once `T` reaches zero.
pub fn simulated_annealing(
    synth: &BiasSynthesizer,
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    init: &ModeWeights,
    cfg: &SAConfig,
) -> Result<AnnealResult> {
    cfg.validate()?;
    if scn.desired.is_empty() {
        return Err(Error::Invalid(
            "annealing needs at least one desired direction".into(),
        ));
    }
    if init.amplitudes.len() != synth.geometry().n_modes() {
        return Err(Error::Invalid(
            "initial weights do not match the mode count".into(),
        ));
    }
    let Some((v0, st0, s0)) = evaluate(synth, scn, map, init)? else {
        return Err(Error::Invalid(
            "initial weights leave the bias window".into(),
        ));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cur = (init.clone(), s0);
    let mut best = (init.clone(), v0, st0, s0);
    let mut i_best = 0;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut best_trace = Vec::with_capacity(cfg.max_iters);
    for i in 1..=cfg.max_iters {
        if i - i_best >= cfg.revert_patience {
            cur = (best.0.clone(), best.3);
            i_best = i;
        }
        let temp = 100.0 * (1.0 - i as f64 / cfg.max_iters as f64);
        let mut prop = cur.0.clone();
        for a in prop.amplitudes.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *a += cfg.lambda * e;
        }
        if let Some((v, st, s)) = evaluate(synth, scn, map, &prop)? {
            if s > best.3 {
                best = (prop.clone(), v, st, s);
                i_best = i;
                cur = (prop, s);
            } else {
                let p = if temp > 0.0 {
                    (-(cur.1 - s) / (cfg.cooling * temp)).exp()
                } else {
                    0.0
                };
                if p >= rng.random::<f64>() {
                    cur = (prop, s);
                }
            }
        }
        trace.push(cur.1);
        best_trace.push(best.3);
    }
    let (weights, voltages, state, slnr_db) = best;
    Ok(AnnealResult {
        weights,
        voltages,
        state,
        slnr_db,
        initial_slnr_db: s0,
        trace,
        best_trace,
    })
}

/// Starting weights: amplitude `3/K` at the predicted mode of each desired
/// direction (summed on collisions), DC at the sampler's customary level.
pub fn sa_init(synth: &BiasSynthesizer, scn: &ArrayScenario) -> Result<ModeWeights> {
    sa_init_indexed(synth, scn, false)
}

/// As [`sa_init`]; `exact` selects [`mode_index_sh_exact`] for the sample-and-hold sampler.
pub fn sa_init_indexed(
    synth: &BiasSynthesizer,
    scn: &ArrayScenario,
    exact: bool,
) -> Result<ModeWeights> {
    if scn.desired.is_empty() {
        return Err(Error::Invalid(
            "annealing needs at least one desired direction".into(),
        ));
    }
    let g = synth.geometry();
    let k = scn.desired.len() as f64;
    let (dc, index): (f64, fn(usize, f64, f64) -> u32) = match synth.sampler() {
        SamplerKind::SampleAndHold { .. } if exact => (SH_DC, mode_index_sh_exact),
        SamplerKind::SampleAndHold { .. } => (SH_DC, mode_index_sh),
        SamplerKind::EnvelopeDetector => (ENVELOPE_DC, mode_index_pd),
    };
    let mut w = ModeWeights::zeros(dc, g.n_modes());
    for &t in &scn.desired {
        let n = index(scn.elements, scn.spacing_wl, t);
        if n == 0 {
            continue;
        }
        w.amplitudes[g.nearest_mode_slot(n)] += 3.0 / k;
    }
    Ok(w)
}
