//! Standing waves on the biasing transmission line and their conversion to
//! per-element DC bias, either through an envelope (peak) detector or a
//! sample-and-hold stage.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Admissible reverse-bias window of the varactor.
pub const V_MIN: f64 = -15.0;
pub const V_MAX: f64 = -4.0;

/// Default element pitch in metres.
pub const DEFAULT_SPACING: f64 = 0.019;
/// Default fundamental standing-wave frequency in hertz.
pub const DEFAULT_FUNDAMENTAL: f64 = 12.9e6;

/// Layout of the biasing line under one row of elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasLineGeometry {
    /// Number of varactor-loaded elements `M`.
    pub elements: usize,
    /// Line extension before the first element, in element pitches.
    pub left_ext: f64,
    /// Line extension after the last element, in element pitches.
    pub right_ext: f64,
    /// Distance between element centres in metres.
    pub spacing: f64,
    /// Fundamental standing-wave frequency `f_b` in hertz.
    pub fundamental: f64,
    /// Harmonic numbers of the active modes, strictly increasing.
    pub modes: Vec<u32>,
}

impl BiasLineGeometry {
    /// Geometry driving the first `n_modes` harmonics.
    pub fn new(elements: usize, n_modes: usize, left_ext: f64, right_ext: f64) -> Result<Self> {
        Self::with_modes(
            elements,
            (1..=n_modes as u32).collect(),
            left_ext,
            right_ext,
        )
    }

    pub fn with_modes(
        elements: usize,
        modes: Vec<u32>,
        left_ext: f64,
        right_ext: f64,
    ) -> Result<Self> {
        let g = Self {
            elements,
            left_ext,
            right_ext,
            spacing: DEFAULT_SPACING,
            fundamental: DEFAULT_FUNDAMENTAL,
            modes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 elements, got {}",
                self.elements
            )));
        }
        if self.modes.is_empty() {
            return Err(Error::Invalid("at least one mode is required".into()));
        }
        if self.modes[0] == 0 || self.modes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "mode harmonics must be positive and strictly increasing".into(),
            ));
        }
        if !(self.left_ext >= 0.0) || !(self.right_ext >= 0.0) {
            return Err(Error::Invalid(
                "line extensions must be non-negative".into(),
            ));
        }
        if !(self.spacing > 0.0) || !(self.fundamental > 0.0) {
            return Err(Error::Invalid(
                "spacing and fundamental frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn max_harmonic(&self) -> u32 {
        *self.modes.last().expect("validated geometry has modes")
    }

    /// `M - 1 + M_l + M_r`, the line length in element pitches.
    pub fn line_length(&self) -> f64 {
        (self.elements - 1) as f64 + self.left_ext + self.right_ext
    }

    pub fn omega_b(&self) -> f64 {
        TAU * self.fundamental
    }

    /// `sin(n π (m + M_l) / (M - 1 + M_l + M_r))`.
    pub fn spatial_factor(&self, m: usize, harmonic: u32) -> f64 {
        (harmonic as f64 * PI * (m as f64 + self.left_ext) / self.line_length()).sin()
    }

    /// Largest mode count for which the least-squares Gram matrix is definite.
    pub fn rank_limit(&self) -> usize {
        self.elements - 2 + usize::from(self.left_ext > 0.0) + usize::from(self.right_ext > 0.0)
    }

    /// Index of `harmonic` in the active mode list, or the nearest active harmonic.
    pub fn nearest_mode_slot(&self, harmonic: u32) -> usize {
        match self.modes.binary_search(&harmonic) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.modes.len() => i - 1,
            Err(i) => {
                if harmonic - self.modes[i - 1] <= self.modes[i] - harmonic {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// `ω_b = π v_ph / L_tot` for a line with slowness `n_slow`.
    pub fn fundamental_from_slowness(n_slow: f64, line_length_m: f64) -> f64 {
        let v_ph = crate::beamform::SPEED_OF_LIGHT / n_slow;
        PI * v_ph / line_length_m / TAU
    }

    /// Sample instant `t_0 = 8 / ω_b`.
    pub fn default_sample_time(&self) -> f64 {
        8.0 / self.omega_b()
    }
}

/// DC level and mode amplitudes in volts, aligned with `BiasLineGeometry::modes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeWeights {
    pub dc: f64,
    pub amplitudes: Vec<f64>,
}

impl ModeWeights {
    pub fn zeros(dc: f64, n_modes: usize) -> Self {
        Self {
            dc,
            amplitudes: vec![0.0; n_modes],
        }
    }

    fn check(&self, g: &BiasLineGeometry) -> Result<()> {
        if self.amplitudes.len() != g.n_modes() {
            return Err(Error::Invalid(format!(
                "{} amplitudes for {} modes",
                self.amplitudes.len(),
                g.n_modes()
            )));
        }
        Ok(())
    }
}

/// Per-element DC bias in volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVoltages(pub Vec<f64>);

impl BiasVoltages {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| (V_MIN..=V_MAX).contains(v))
    }
}

/// An element outside the bias window; `excess` is negative below `V_MIN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeViolation {
    pub index: usize,
    pub excess: f64,
}

pub fn validate_range(v: &BiasVoltages) -> Vec<RangeViolation> {
    v.0.iter()
        .enumerate()
        .filter_map(|(index, &x)| {
            if x < V_MIN {
                Some(RangeViolation {
                    index,
                    excess: x - V_MIN,
                })
            } else if x > V_MAX || x.is_nan() {
                Some(RangeViolation {
                    index,
                    excess: x - V_MAX,
                })
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplerKind {
    EnvelopeDetector,
    SampleAndHold { t0: f64 },
}

impl SamplerKind {
    pub fn check(&self, g: &BiasLineGeometry) -> Result<()> {
        if let SamplerKind::SampleAndHold { t0 } = *self {
            check_sample_time(g, t0)?;
        }
        Ok(())
    }
}

fn check_sample_time(g: &BiasLineGeometry, t0: f64) -> Result<()> {
    for &n in &g.modes {
        if (n as f64 * g.omega_b() * t0).sin().abs() < 1e-9 {
            return Err(Error::VanishingTimeFactor { mode: n });
        }
    }
    Ok(())
}

/// Line voltage at element `m` and time `t`.
pub fn standing_wave_value(g: &BiasLineGeometry, w: &ModeWeights, m: usize, t: f64) -> f64 {
    assert!(m < g.elements, "element index {m} out of range");
    let wt = g.omega_b() * t;
    w.dc + g
        .modes
        .iter()
        .zip(&w.amplitudes)
        .map(|(&n, &a)| a * g.spatial_factor(m, n) * (n as f64 * wt).sin())
        .sum::<f64>()
}

/// Bias produced by sample-and-hold stages all triggered at `t0`.
pub fn sample_hold(g: &BiasLineGeometry, w: &ModeWeights, t0: f64) -> Result<BiasVoltages> {
    w.check(g)?;
    check_sample_time(g, t0)?;
    Ok(BiasVoltages(
        (0..g.elements)
            .map(|m| standing_wave_value(g, w, m, t0))
            .collect(),
    ))
}

/// Bias produced by negative-peak detectors: `W_0 + min_t` of the AC part.
pub fn sample_envelope(g: &BiasLineGeometry, w: &ModeWeights) -> Result<BiasVoltages> {
    w.check(g)?;
    let synth = BiasSynthesizer::new(g.clone(), SamplerKind::EnvelopeDetector)?;
    Ok(synth.sample(w))
}

/// Evaluates `Σ c_n sin(n τ)` for a dense coefficient array indexed by harmonic.
fn harmonic_sum(coeffs: &[f64], tau: f64) -> f64 {
    let step = Complex64::from_polar(1.0, tau);
    let mut rot = Complex64::new(1.0, 0.0);
    let mut acc = 0.0;
    for (n, &c) in coeffs.iter().enumerate().skip(1) {
        rot *= step;
        // re-anchor periodically against drift
        if n % 64 == 0 {
            rot = Complex64::from_polar(1.0, n as f64 * tau);
        }
        acc += c * rot.im;
    }
    acc
}

fn golden_min(coeffs: &[f64], mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = harmonic_sum(coeffs, c);
    let mut fd = harmonic_sum(coeffs, d);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = harmonic_sum(coeffs, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = harmonic_sum(coeffs, d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimum over one period of a sine series, via an oversampled grid plus
/// golden-section refinement of every grid minimum that could hold the
/// global one.
struct EnvelopeSearch {
    fft: Arc<dyn Fft<f64>>,
    size: usize,
}

impl EnvelopeSearch {
    fn new(max_harmonic: u32) -> Self {
        let size = (32 * max_harmonic as usize).next_power_of_two().max(64);
        let fft = FftPlanner::new().plan_fft_inverse(size);
        Self { fft, size }
    }

    fn minimum(&self, coeffs: &[f64], buf: &mut [Complex64], scratch: &mut [Complex64]) -> f64 {
        let k = self.size;
        buf.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        let mut curvature = 0.0;
        for (n, &c) in coeffs.iter().enumerate().skip(1) {
            buf[n] = Complex64::new(c, 0.0);
            curvature += (n * n) as f64 * c.abs();
        }
        if curvature == 0.0 {
            return 0.0;
        }
        self.fft.process_with_scratch(buf, scratch);
        let grid_min = buf.iter().map(|x| x.im).fold(f64::INFINITY, f64::min);
        let h = TAU / k as f64;
        let slack = 0.5 * h * h * curvature;
        let mut best = grid_min;
        for j in 0..k {
            let here = buf[j].im;
            if here > grid_min + slack {
                continue;
            }
            let prev = buf[(j + k - 1) % k].im;
            let next = buf[(j + 1) % k].im;
            if here <= prev && here <= next {
                let tau = j as f64 * h;
                let (_, value) = golden_min(coeffs, tau - h, tau + h);
                best = best.min(value);
            }
        }
        best
    }
}

/// Precomputed sampling of a fixed geometry; reused inside optimizers.
pub struct BiasSynthesizer {
    geometry: BiasLineGeometry,
    sampler: SamplerKind,
    /// Row-major `M x N` spatial factors, times the time factor for sample-and-hold.
    basis: Vec<f64>,
    envelope: Option<EnvelopeSearch>,
}

impl BiasSynthesizer {
    pub fn new(geometry: BiasLineGeometry, sampler: SamplerKind) -> Result<Self> {
        geometry.validate()?;
        sampler.check(&geometry)?;
        let n = geometry.n_modes();
        let mut basis = Vec::with_capacity(geometry.elements * n);
        for m in 0..geometry.elements {
            for &h in &geometry.modes {
                let time = match sampler {
                    SamplerKind::SampleAndHold { t0 } => (h as f64 * geometry.omega_b() * t0).sin(),
                    SamplerKind::EnvelopeDetector => 1.0,
                };
                basis.push(geometry.spatial_factor(m, h) * time);
            }
        }
        let envelope = match sampler {
            SamplerKind::EnvelopeDetector => Some(EnvelopeSearch::new(geometry.max_harmonic())),
            SamplerKind::SampleAndHold { .. } => None,
        };
        Ok(Self {
            geometry,
            sampler,
            basis,
            envelope,
        })
    }

    pub fn geometry(&self) -> &BiasLineGeometry {
        &self.geometry
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    /// Row `m` of the basis: spatial factor (times time factor for sample-and-hold) per mode.
    pub fn basis_row(&self, m: usize) -> &[f64] {
        let n = self.geometry.n_modes();
        &self.basis[m * n..(m + 1) * n]
    }

    pub fn sample(&self, w: &ModeWeights) -> BiasVoltages {
        assert_eq!(
            w.amplitudes.len(),
            self.geometry.n_modes(),
            "mode count mismatch"
        );
        let m_count = self.geometry.elements;
        match &self.envelope {
            None => BiasVoltages(
                (0..m_count)
                    .map(|m| w.dc + dot(self.basis_row(m), &w.amplitudes))
                    .collect(),
            ),
            Some(search) => {
                let mut coeffs = vec![0.0; self.geometry.max_harmonic() as usize + 1];
                let mut buf = vec![Complex64::new(0.0, 0.0); search.size];
                let mut scratch =
                    vec![Complex64::new(0.0, 0.0); search.fft.get_inplace_scratch_len()];
                let values = (0..m_count)
                    .map(|m| {
                        for ((&h, &s), &a) in self
                            .geometry
                            .modes
                            .iter()
                            .zip(self.basis_row(m))
                            .zip(&w.amplitudes)
                        {
                            coeffs[h as usize] = a * s;
                        }
                        w.dc + search.minimum(&coeffs, &mut buf, &mut scratch)
                    })
                    .collect();
                BiasVoltages(values)
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mode that places a sample-and-hold beam at `theta` (radians):
/// `round(|2 (M + 1) Δ sin θ|)`.
pub fn mode_index_sh(elements: usize, spacing_wl: f64, theta: f64) -> u32 {
    (2.0 * (elements as f64 + 1.0) * spacing_wl * theta.sin())
        .abs()
        .round() as u32
}

/// Single-mode derivation variant, `round(|2 (M - 1) Δ sin θ|)`.
pub fn mode_index_sh_exact(elements: usize, spacing_wl: f64, theta: f64) -> u32 {
    (2.0 * (elements as f64 - 1.0) * spacing_wl * theta.sin())
        .abs()
        .round() as u32
}

/// Envelope-detector counterpart: half the sample-and-hold index, at least 1.
/// Broadside (index 0) stays 0.
pub fn mode_index_pd(elements: usize, spacing_wl: f64, theta: f64) -> u32 {
    let sh = mode_index_sh(elements, spacing_wl, theta);
    if sh == 0 {
        0
    } else {
        ((sh as f64 / 2.0).round() as u32).max(1)
    }
}
