use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::biasline::{
    BiasLineGeometry, BiasSynthesizer, BiasVoltages, ModeWeights, SamplerKind, V_MAX, V_MIN,
};
use crate::error::{Error, Result};
use crate::metasurface::PhaseVoltageMap;

/// Voltage step of the slope curve.
pub const SLOPE_STEP: f64 = 0.001;
/// Added to every normalized slope so no element is ignored.
pub const SLOPE_FLOOR: f64 = 0.001;

/// Sample-and-hold design matrix: row `m` holds `sin(nπ(m+M_l)/L) sin(n ω_b t0)` per mode.
pub fn design_matrix(g: &BiasLineGeometry, t0: f64) -> Result<DMatrix<f64>> {
    let synth = BiasSynthesizer::new(g.clone(), SamplerKind::SampleAndHold { t0 })?;
    let n = g.n_modes();
    Ok(DMatrix::from_fn(g.elements, n, |m, k| {
        synth.basis_row(m)[k]
    }))
}

/// `Σ_m α(m) s_m s_mᵀ`.
pub fn gram_matrix(design: &DMatrix<f64>, alpha: &[f64]) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(design.nrows(), design.ncols(), |m, k| {
        design[(m, k)] * alpha[m]
    });
    design.transpose() * scaled
}

fn check_fit(g: &BiasLineGeometry, target: &BiasVoltages) -> Result<()> {
    g.validate()?;
    if target.len() != g.elements {
        return Err(Error::Invalid(format!(
            "{} targets for {} elements",
            target.len(),
            g.elements
        )));
    }
    if g.n_modes() > g.rank_limit() {
        return Err(Error::RankCondition {
            modes: g.n_modes(),
            limit: g.rank_limit(),
        });
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Solves `(Σ α s sᵀ) W = Σ α s (v - W_0)` with `W_0` the plain mean of `target`.
pub fn weighted_solve(design: &DMatrix<f64>, target: &[f64], alpha: &[f64]) -> Result<ModeWeights> {
    let dc = mean(target);
    let gram = gram_matrix(design, alpha);
    let rhs = DVector::from_fn(design.ncols(), |k, _| {
        (0..design.nrows())
            .map(|m| design[(m, k)] * alpha[m] * (target[m] - dc))
            .sum()
    });
    let chol = gram.cholesky().ok_or(Error::SingularGram)?;
    Ok(ModeWeights {
        dc,
        amplitudes: chol.solve(&rhs).iter().copied().collect(),
    })
}

/// Least-squares mode weights reproducing `target` under sample-and-hold at `t0`.
pub fn ls_fit(g: &BiasLineGeometry, target: &BiasVoltages, t0: f64) -> Result<ModeWeights> {
    check_fit(g, target)?;
    let design = design_matrix(g, t0)?;
    weighted_solve(&design, target.values(), &vec![1.0; g.elements])
}

/// Normalized phase-slope curve `|dφ/dV|` on a 1 mV grid.
#[derive(Debug, Clone)]
pub struct SlopeWeights {
    start: f64,
    values: Vec<f64>,
}

impl SlopeWeights {
    pub fn new(map: &PhaseVoltageMap) -> Result<Self> {
        let (lo, hi) = map.voltage_range();
        let n = ((hi - lo) / SLOPE_STEP).round() as usize;
        let volts: Vec<f64> = (0..=n)
            .map(|i| {
                if i == n {
                    hi
                } else {
                    lo + i as f64 * SLOPE_STEP
                }
            })
            .collect();
        let phases = volts
            .iter()
            .map(|&v| map.phase_of(v))
            .collect::<Result<Vec<_>>>()?;
        let mut slope: Vec<f64> = phases
            .windows(2)
            .zip(volts.windows(2))
            .map(|(p, v)| ((p[1] - p[0]) / (v[1] - v[0])).abs())
            .collect();
        slope.push(*slope.last().expect("grid has at least two points"));
        let peak = slope.iter().cloned().fold(0.0, f64::max);
        let values = slope.iter().map(|s| s / peak + SLOPE_FLOOR).collect();
        Ok(Self { start: lo, values })
    }

    /// Weight at `voltage`, linearly interpolated and clamped to the grid.
    pub fn at(&self, voltage: f64) -> f64 {
        let x = ((voltage - self.start) / SLOPE_STEP).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn wls_weights(map: &PhaseVoltageMap, target: &BiasVoltages) -> Result<Vec<f64>> {
    let curve = SlopeWeights::new(map)?;
    Ok(target.values().iter().map(|&v| curve.at(v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairConfig {
    pub max_iters: usize,
    /// Inward nudge of the offending target, volts.
    pub nudge: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            nudge: 0.005,
        }
    }
}

/// One boundary-repair pass: which element was tightened and how far it overshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepairStep {
    pub index: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WlsSolution {
    pub weights: ModeWeights,
    pub voltages: BiasVoltages,
    pub alpha: Vec<f64>,
    /// Targets after any inward nudges.
    pub target: Vec<f64>,
    pub repairs: Vec<RepairStep>,
}

/// Weighted least squares with boundary repair: while the sampled wave leaves
/// the bias window, double the weight of the worst element and pull its target
/// 5 mV inward.
pub fn wls_fit(
    g: &BiasLineGeometry,
    map: &PhaseVoltageMap,
    target: &BiasVoltages,
    t0: f64,
    cfg: &RepairConfig,
) -> Result<WlsSolution> {
    let alpha = wls_weights(map, target)?;
    wls_fit_with_weights(g, target, alpha, t0, cfg)
}

pub fn wls_fit_with_weights(
    g: &BiasLineGeometry,
    target: &BiasVoltages,
    mut alpha: Vec<f64>,
    t0: f64,
    cfg: &RepairConfig,
) -> Result<WlsSolution> {
    check_fit(g, target)?;
    if alpha.len() != g.elements || alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Invalid(
            "weights must be positive, one per element".into(),
        ));
    }
    let design = design_matrix(g, t0)?;
    let mut tgt = target.values().to_vec();
    let mut repairs = Vec::new();
    let mut best: Option<(f64, WlsSolution)> = None;
    for _ in 0..=cfg.max_iters {
        let weights = weighted_solve(&design, &tgt, &alpha)?;
        let sampled = &design * DVector::from_column_slice(&weights.amplitudes);
        let voltages = BiasVoltages(sampled.iter().map(|s| weights.dc + s).collect());
        let v = voltages.values();
        let (imin, vmin) =
            v.iter().enumerate().fold(
                (0, f64::INFINITY),
                |a, (i, &x)| if x < a.1 { (i, x) } else { a },
            );
        let (imax, vmax) =
            v.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |a, (i, &x)| if x > a.1 { (i, x) } else { a },
            );
        if vmin >= V_MIN && vmax <= V_MAX {
            return Ok(WlsSolution {
                weights,
                voltages,
                alpha,
                target: tgt,
                repairs,
            });
        }
        let worst = (V_MIN - vmin).max(vmax - V_MAX);
        if best.as_ref().is_none_or(|b| worst < b.0) {
            let sol = WlsSolution {
                weights,
                voltages,
                alpha: alpha.clone(),
                target: tgt.clone(),
                repairs: repairs.clone(),
            };
            best = Some((worst, sol));
        }
        let (i, excess, dir) = if vmin < V_MIN {
            (imin, vmin - V_MIN, 1.0)
        } else {
            (imax, vmax - V_MAX, -1.0)
        };
        alpha[i] *= 2.0;
        tgt[i] += dir * cfg.nudge;
        repairs.push(RepairStep { index: i, excess });
    }
    let best = best.expect("at least one pass ran").1;
    Err(Error::RepairFailed {
        iterations: cfg.max_iters,
        best: Box::new(best),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metasurface::UnitCellCircuit;
    use crate::varactor::VaractorBiasTable;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map3() -> PhaseVoltageMap {
        PhaseVoltageMap::new(
            &UnitCellCircuit::default(),
            &VaractorBiasTable::smv1231(),
            3e9,
        )
        .unwrap()
    }

    /// Pseudo-inverse of the centred design matrix through an SVD.
    fn pinv_oracle(g: &BiasLineGeometry, target: &[f64], t0: f64) -> Vec<f64> {
        let wb = g.omega_b();
        let l = g.line_length();
        let s = DMatrix::from_fn(g.elements, g.n_modes(), |m, k| {
            let n = g.modes[k] as f64;
            (n * std::f64::consts::PI * (m as f64 + g.left_ext) / l).sin() * (n * wb * t0).sin()
        });
        let mu = target.iter().sum::<f64>() / target.len() as f64;
        let y = DVector::from_iterator(target.len(), target.iter().map(|v| v - mu));
        let pinv = s.pseudo_inverse(1e-13).unwrap();
        (pinv * y).iter().copied().collect()
    }

    /// Weights whose sampled wave has element mean `dc`, so a fit with `W_0 = mean` can reproduce it.
    fn in_span(g: &BiasLineGeometry, t0: f64, dc: f64, mut amps: Vec<f64>) -> ModeWeights {
        let d = design_matrix(g, t0).unwrap();
        let u: Vec<f64> = (0..g.n_modes()).map(|k| d.column(k).sum()).collect();
        let c = crate::biasline::dot(&u, &amps) / crate::biasline::dot(&u, &u);
        amps.iter_mut().zip(&u).for_each(|(a, u)| *a -= c * u);
        ModeWeights {
            dc,
            amplitudes: amps,
        }
    }

    #[test]
    fn target_in_span_is_recovered() {
        let g = BiasLineGeometry::new(30, 10, 2.0, 2.0).unwrap();
        let t0 = g.default_sample_time();
        let truth = in_span(
            &g,
            t0,
            -9.0,
            (1..=10).map(|k| 0.3 * (k as f64).cos()).collect(),
        );
        let v = crate::biasline::sample_hold(&g, &truth, t0).unwrap();
        let fit = ls_fit(&g, &v, t0).unwrap();
        assert!((fit.dc - truth.dc).abs() < 1e-9);
        for (a, b) in fit.amplitudes.iter().zip(&truth.amplitudes) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_target_gives_zero_modes() {
        let g = BiasLineGeometry::new(12, 5, 1.0, 1.0).unwrap();
        let fit = ls_fit(&g, &BiasVoltages(vec![-7.25; 12]), g.default_sample_time()).unwrap();
        assert_eq!(fit.dc, -7.25);
        assert!(fit.amplitudes.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn small_instance_matches_pseudo_inverse() {
        let g = BiasLineGeometry::new(6, 3, 1.0, 1.0).unwrap();
        let t0 = g.default_sample_time();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let target: Vec<f64> = (0..6).map(|_| rng.random_range(-15.0..-4.0)).collect();
            let fit = ls_fit(&g, &BiasVoltages(target.clone()), t0).unwrap();
            let oracle = pinv_oracle(&g, &target, t0);
            for (a, b) in fit.amplitudes.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rank_condition_enforced() {
        let g = BiasLineGeometry::new(10, 9, 0.0, 0.0).unwrap();
        match ls_fit(&g, &BiasVoltages(vec![-9.0; 10]), g.default_sample_time()) {
            Err(Error::RankCondition { modes: 9, limit: 8 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let g = BiasLineGeometry::new(10, 10, 1.0, 1.0).unwrap();
        assert!(ls_fit(&g, &BiasVoltages(vec![-9.0; 10]), g.default_sample_time()).is_ok());
    }

    #[test]
    fn slope_weights_range() {
        let map = map3();
        let curve = SlopeWeights::new(&map).unwrap();
        assert_eq!(curve.values().len(), 11_001);
        let (imax, &vmax) = curve
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((vmax - 1.0 - SLOPE_FLOOR).abs() < 1e-12);
        let v_at_max = -15.0 + imax as f64 * SLOPE_STEP;
        assert!((curve.at(v_at_max) - 1.001).abs() < 1e-9);
        assert!(curve
            .values()
            .iter()
            .all(|&a| (SLOPE_FLOOR..=1.0 + SLOPE_FLOOR + 1e-12).contains(&a)));
        let alpha = wls_weights(&map, &BiasVoltages(vec![-15.0, -9.5, -4.0])).unwrap();
        assert!(alpha.iter().all(|&a| (0.001..=1.001).contains(&a)));
    }

    #[test]
    fn flat_slope_reads_floor() {
        let curve = SlopeWeights {
            start: -15.0,
            values: vec![0.001, 0.001, 1.001],
        };
        assert_eq!(curve.at(-14.9995), 0.001);
        assert!((curve.at(-14.998) - 1.001).abs() < 1e-12);
    }

    #[test]
    fn feasible_target_needs_no_repair() {
        let g = BiasLineGeometry::new(40, 12, 2.0, 2.0).unwrap();
        let t0 = g.default_sample_time();
        let truth = in_span(&g, t0, -9.5, (1..=12).map(|k| 0.2 / k as f64).collect());
        let v = crate::biasline::sample_hold(&g, &truth, t0).unwrap();
        let map = map3();
        let sol = wls_fit(&g, &map, &v, t0, &RepairConfig::default()).unwrap();
        assert!(sol.repairs.is_empty());
        let ls = ls_fit(&g, &v, t0).unwrap();
        for (a, b) in sol.weights.amplitudes.iter().zip(&ls.amplitudes) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn repair_brings_wave_into_range() {
        // a square target the few modes overshoot at the edges
        let g = BiasLineGeometry::new(50, 8, 2.0, 2.0).unwrap();
        let target: Vec<f64> = (0..50)
            .map(|m| if (m / 6) % 2 == 0 { -15.0 } else { -4.0 })
            .collect();
        let sol = wls_fit(
            &g,
            &map3(),
            &BiasVoltages(target),
            g.default_sample_time(),
            &RepairConfig::default(),
        )
        .unwrap();
        assert!(!sol.repairs.is_empty());
        assert!(crate::biasline::validate_range(&sol.voltages).is_empty());
    }

    #[test]
    fn repair_cap_reports_best_iterate() {
        let g = BiasLineGeometry::new(50, 8, 2.0, 2.0).unwrap();
        let target: Vec<f64> = (0..50)
            .map(|m| if (m / 6) % 2 == 0 { -15.0 } else { -4.0 })
            .collect();
        let cfg = RepairConfig {
            max_iters: 1,
            nudge: 0.005,
        };
        match wls_fit(
            &g,
            &map3(),
            &BiasVoltages(target),
            g.default_sample_time(),
            &cfg,
        ) {
            Err(Error::RepairFailed {
                iterations: 1,
                best,
            }) => assert_eq!(best.voltages.len(), 50),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn gram_is_positive_definite(m in 3usize..40, l in 0u32..3, r in 0u32..3, frac in 0.0f64..1.0, seed in 0u64..1000) {
            let limit = m - 2 + (l.min(1) + r.min(1)) as usize;
            let n = 1 + ((limit - 1) as f64 * frac) as usize;
            let g = BiasLineGeometry::new(m, n, l as f64, r as f64).unwrap();
            let d = design_matrix(&g, g.default_sample_time()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha: Vec<f64> = (0..m).map(|_| rng.random_range(0.001..2.0)).collect();
            for w in [vec![1.0; m], alpha] {
                let eig = gram_matrix(&d, &w).symmetric_eigenvalues();
                prop_assert!(eig.min() > 0.0);
            }
        }

        #[test]
        fn ls_solution_is_a_strict_minimum(seed in 0u64..500) {
            let g = BiasLineGeometry::new(20, 8, 1.0, 2.0).unwrap();
            let t0 = g.default_sample_time();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target: Vec<f64> = (0..20).map(|_| rng.random_range(-15.0..-4.0)).collect();
            let fit = ls_fit(&g, &BiasVoltages(target.clone()), t0).unwrap();
            let cost = |w: &ModeWeights| {
                let v = crate::biasline::sample_hold(&g, w, t0).unwrap();
                v.values().iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            };
            let dir: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut pert = fit.clone();
            for (a, d) in pert.amplitudes.iter_mut().zip(&dir) {
                *a += 1e-3 * d / norm;
            }
            prop_assert!(cost(&pert) > cost(&fit));
        }
    }
}
