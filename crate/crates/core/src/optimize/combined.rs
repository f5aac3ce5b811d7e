use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{slnr_db, ArrayScenario, ReflectionState};
use crate::biasline::{BiasLineGeometry, BiasSynthesizer, BiasVoltages, ModeWeights, SamplerKind};
use crate::error::{Error, Result};
use crate::metasurface::PhaseVoltageMap;

use super::anneal::{simulated_annealing, AnnealResult, SAConfig};
use super::lsq::{wls_fit, RepairConfig, WlsSolution};
use super::phases::{null_steer, null_steer_realized, realize, NullSteerConfig, NullSteerOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombinedConfig {
    pub anneal: SAConfig,
    pub null: NullSteerConfig,
    pub repair: RepairConfig,
}

/// Unconstrained and voltage-constrained phase solutions for one scenario.
#[derive(Debug, Clone)]
pub struct PhaseReference {
    /// Multi-beam plus null steering with unit-modulus phases.
    pub ideal: NullSteerOutcome,
    pub ideal_slnr_db: f64,
    /// The same search with every iterate realized through per-element voltages.
    pub arbitrary: NullSteerOutcome,
    pub arbitrary_slnr_db: f64,
    /// Biases reproducing the ideal phases, the least-squares target.
    pub target: BiasVoltages,
}

pub fn phase_reference(
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    cfg: &NullSteerConfig,
) -> Result<PhaseReference> {
    scn.validate()?;
    let ideal = null_steer(scn, cfg)?;
    let arbitrary = null_steer_realized(scn, map, cfg)?;
    let target = BiasVoltages(
        ideal
            .state
            .phi
            .iter()
            .map(|p| map.voltage_of_phase(p.arg()))
            .collect(),
    );
    Ok(PhaseReference {
        ideal_slnr_db: slnr_db(scn, &ideal.state),
        arbitrary_slnr_db: slnr_db(scn, &arbitrary.state),
        ideal,
        arbitrary,
        target,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSlnr {
    pub stage: &'static str,
    pub slnr_db: f64,
}

#[derive(Debug, Clone)]
pub struct CombinedResult {
    pub reference: PhaseReference,
    pub wls: WlsSolution,
    pub wls_slnr_db: f64,
    pub anneal: AnnealResult,
}

impl CombinedResult {
    pub fn weights(&self) -> &ModeWeights {
        &self.anneal.weights
    }

    pub fn voltages(&self) -> &BiasVoltages {
        &self.anneal.voltages
    }

    pub fn state(&self) -> &ReflectionState {
        &self.anneal.state
    }

    pub fn slnr_db(&self) -> f64 {
        self.anneal.slnr_db
    }

    pub fn stages(&self) -> Vec<StageSlnr> {
        vec![
            StageSlnr {
                stage: "ideal",
                slnr_db: self.reference.ideal_slnr_db,
            },
            StageSlnr {
                stage: "arbitrary",
                slnr_db: self.reference.arbitrary_slnr_db,
            },
            StageSlnr {
                stage: "wls",
                slnr_db: self.wls_slnr_db,
            },
            StageSlnr {
                stage: "anneal",
                slnr_db: self.anneal.slnr_db,
            },
        ]
    }
}

/// Null-steered phases, converted once to biases, fitted with weighted least
/// squares under sample-and-hold at `t0`, then refined by annealing.
pub fn combined(
    g: &BiasLineGeometry,
    t0: f64,
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    cfg: &CombinedConfig,
) -> Result<CombinedResult> {
    let reference = phase_reference(scn, map, &cfg.null)?;
    combined_with_reference(g, t0, scn, map, cfg, reference)
}

pub fn combined_with_reference(
    g: &BiasLineGeometry,
    t0: f64,
    scn: &ArrayScenario,
    map: &PhaseVoltageMap,
    cfg: &CombinedConfig,
    reference: PhaseReference,
) -> Result<CombinedResult> {
    if g.elements != scn.elements {
        return Err(Error::Invalid(
            "geometry and scenario disagree on the element count".into(),
        ));
    }
    let wls = wls_fit(g, map, &reference.target, t0, &cfg.repair)?;
    let wls_slnr_db = slnr_db(scn, &realize(map, &wls.voltages)?);
    let synth = BiasSynthesizer::new(g.clone(), SamplerKind::SampleAndHold { t0 })?;
    let anneal = simulated_annealing(&synth, scn, map, &wls.weights, &cfg.anneal)?;
    Ok(CombinedResult {
        reference,
        wls,
        wls_slnr_db,
        anneal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelection {
    /// Harmonics `1..=N`.
    FirstN,
    /// The `N` modes with the largest sampled amplitude in a full-rank fit.
    StrongestN,
}

impl ModeSelection {
    pub fn label(&self) -> &'static str {
        match self {
            ModeSelection::FirstN => "first",
            ModeSelection::StrongestN => "strongest",
        }
    }
}

/// Harmonics of the `n` strongest modes of the weighted fit that uses every
/// mode the rank condition allows. Strength is `|W_k sin(k ω_b t0)|`.
pub fn strongest_modes(
    elements: usize,
    template: &BiasLineGeometry,
    t0: f64,
    map: &PhaseVoltageMap,
    reference: &PhaseReference,
    repair: &RepairConfig,
    n: usize,
) -> Result<Vec<u32>> {
    let mut full = template.clone();
    full.elements = elements;
    let limit = full.rank_limit();
    full.modes = (1..=limit as u32).collect();
    if n > limit {
        return Err(Error::RankCondition { modes: n, limit });
    }
    let fit = wls_fit(&full, map, &reference.target, t0, repair)?;
    let wb = full.omega_b();
    let mut order: Vec<(f64, u32)> = full
        .modes
        .iter()
        .zip(&fit.weights.amplitudes)
        .map(|(&k, &a)| ((a * (k as f64 * wb * t0).sin()).abs(), k))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut modes: Vec<u32> = order.into_iter().take(n).map(|(_, k)| k).collect();
    modes.sort_unstable();
    Ok(modes)
}

/// Seed for one sweep cell, mixed with splitmix64 steps.
pub fn cell_seed(seed: u64, elements: usize, modes: usize, trial: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    [elements as u64, modes as u64, trial as u64]
        .iter()
        .fold(mix(seed), |h, &x| mix(h ^ x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub elements: usize,
    pub modes: usize,
    pub selection: String,
    pub mean_slnr_db: f64,
    pub std_db: f64,
    pub trials: usize,
}

/// Everything a sweep needs besides the grid itself.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Directions, spacing and powers; the element count is overridden per cell.
    pub scenario: ArrayScenario,
    /// Extensions, spacing and fundamental; elements and modes are overridden per cell.
    pub geometry: BiasLineGeometry,
    pub t0: f64,
    pub config: CombinedConfig,
    pub seed: u64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Combined-algorithm SLNR over an `(M, N)` grid, averaged over `trials`
/// annealing seeds, plus `ideal` and `arbitrary` reference rows (N = 0) per M.
/// Cells run on the current rayon pool.
pub fn slnr_sweep(
    spec: &SweepSpec,
    map: &PhaseVoltageMap,
    m_list: &[usize],
    n_list: &[usize],
    selections: &[ModeSelection],
    trials: usize,
) -> Result<Vec<SweepRow>> {
    if m_list.is_empty() || n_list.is_empty() || selections.is_empty() || trials == 0 {
        return Err(Error::Invalid(
            "sweep needs nonempty M and N lists, a selection and at least one trial".into(),
        ));
    }
    let scenario_for = |m: usize| {
        let mut s = spec.scenario.clone();
        s.elements = m;
        s.incidence = vec![num_complex::Complex64::new(1.0, 0.0); m];
        s
    };
    let refs: Vec<(usize, PhaseReference)> = m_list
        .par_iter()
        .map(|&m| phase_reference(&scenario_for(m), map, &spec.config.null).map(|r| (m, r)))
        .collect::<Result<_>>()?;
    let refs: BTreeMap<usize, PhaseReference> = refs.into_iter().collect();

    let mut mode_sets: Vec<(usize, usize, ModeSelection)> = Vec::new();
    for &m in m_list {
        for &n in n_list {
            for &sel in selections {
                mode_sets.push((m, n, sel));
            }
        }
    }
    let modes: Vec<((usize, usize, ModeSelection), Vec<u32>)> = mode_sets
        .par_iter()
        .map(|&(m, n, sel)| {
            let modes = match sel {
                ModeSelection::FirstN => (1..=n as u32).collect(),
                ModeSelection::StrongestN => strongest_modes(
                    m,
                    &spec.geometry,
                    spec.t0,
                    map,
                    &refs[&m],
                    &spec.config.repair,
                    n,
                )?,
            };
            Ok(((m, n, sel), modes))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..modes.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(c, trial)| {
            let ((m, n, _), ref mode_list) = modes[c];
            let mut g = spec.geometry.clone();
            g.elements = m;
            g.modes = mode_list.clone();
            let mut cfg = spec.config;
            cfg.anneal.seed = cell_seed(spec.seed, m, n, trial);
            let scn = scenario_for(m);
            combined_with_reference(&g, spec.t0, &scn, map, &cfg, refs[&m].clone())
                .map(|r| r.slnr_db())
        })
        .collect();

    let mut rows = Vec::new();
    for (&m, r) in &refs {
        for (label, v) in [
            ("ideal", r.ideal_slnr_db),
            ("arbitrary", r.arbitrary_slnr_db),
        ] {
            rows.push(SweepRow {
                elements: m,
                modes: 0,
                selection: label.into(),
                mean_slnr_db: v,
                std_db: 0.0,
                trials: 1,
            });
        }
    }
    let results = results.into_iter().collect::<Result<Vec<f64>>>()?;
    for (c, ((m, n, sel), _)) in modes.iter().enumerate() {
        let vals = &results[c * trials..(c + 1) * trials];
        let (mean, std) = mean_std(vals);
        rows.push(SweepRow {
            elements: *m,
            modes: *n,
            selection: sel.label().into(),
            mean_slnr_db: mean,
            std_db: std,
            trials,
        });
    }
    Ok(rows)
}
