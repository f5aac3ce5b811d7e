//! Unit-cell equivalent circuit, reflection coefficient, and the
//! one-to-one phase/voltage map used to turn target phases into biases.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::varactor::VaractorBiasTable;

/// Free-space wave impedance in ohms.
pub const FREE_SPACE_IMPEDANCE: f64 = 376.730313668;

/// Vacuum permeability in H/m.
pub const MU_0: f64 = 1.25663706212e-6;

/// Voltage step of the phase/voltage lookup grid.
pub const MAP_STEP: f64 = 0.005;

/// Lumped model of one patch cell on a grounded substrate.
///
/// All values in SI units. `l_v` is the inductance of the varactor branch
/// (package plus mounting parasitic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCellCircuit {
    pub r_d: f64,
    pub l_d: f64,
    pub c_d: f64,
    pub l_s: f64,
    pub l_v: f64,
    pub z0: f64,
}

impl Default for UnitCellCircuit {
    /// The 19 mm square-patch cell on 1.27 mm RT5880LZ with an SMV1231 varactor.
    fn default() -> Self {
        Self {
            r_d: 0.08,
            l_d: 0.39e-9,
            c_d: 0.53e-12,
            l_s: 1.6e-9,
            l_v: 2.34e-9,
            z0: FREE_SPACE_IMPEDANCE,
        }
    }
}

impl UnitCellCircuit {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.l_d, self.c_d, self.l_s, self.l_v, self.z0];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.r_d >= 0.0) {
            return Err(Error::Domain(
                "inductances, capacitances and Z0 must be positive; R_d non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Zero of the cell impedance, `1 / sqrt(C_d L_d)` (rad/s).
    pub fn omega_e(&self) -> f64 {
        1.0 / (self.c_d * self.l_d).sqrt()
    }

    /// Pole of the cell impedance, `1 / sqrt(C_d (L_d + L_s))` (rad/s).
    pub fn omega_m(&self) -> f64 {
        1.0 / (self.c_d * (self.l_d + self.l_s)).sqrt()
    }

    /// Same circuit with every resistance set to zero.
    pub fn lossless(mut self) -> Self {
        self.r_d = 0.0;
        self
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "angular frequency must be positive, got {omega}"
        )))
    }
}

fn parallel(a: Complex64, b: Complex64) -> Complex64 {
    a * b / (a + b)
}

/// Cell impedance without the varactor: `(R_d + jωL_d + 1/(jωC_d)) || jωL_s`.
pub fn equivalent_impedance(circuit: &UnitCellCircuit, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    let j = Complex64::i();
    let series = circuit.r_d + j * omega * circuit.l_d + 1.0 / (j * omega * circuit.c_d);
    Ok(parallel(series, j * omega * circuit.l_s))
}

/// The same impedance written through its two resonances.
pub fn equivalent_impedance_resonant(circuit: &UnitCellCircuit, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    let j = Complex64::i();
    let loss = j * omega * circuit.r_d * circuit.c_d;
    let num = 1.0 + loss - (omega / circuit.omega_e()).powi(2);
    let den = 1.0 + loss - (omega / circuit.omega_m()).powi(2);
    Ok(j * omega * circuit.l_s * num / den)
}

/// Recovers the cell constants from its resonances, the substrate height and
/// the real part of the cell impedance at the pole.
pub fn circuit_from_resonances(
    omega_e: f64,
    omega_m: f64,
    height: f64,
    re_z_at_omega_m: f64,
) -> Result<UnitCellCircuit> {
    if !(omega_m > 0.0) || !(omega_e > omega_m) {
        return Err(Error::Domain(format!(
            "need omega_e > omega_m > 0 (got omega_e = {omega_e}, omega_m = {omega_m})"
        )));
    }
    if !(height > 0.0) || !(re_z_at_omega_m > 0.0) {
        return Err(Error::Domain("height and Re(Z_eq) must be positive".into()));
    }
    let l_s = MU_0 * height;
    let l_d = l_s / ((omega_e / omega_m).powi(2) - 1.0);
    let c_d = 1.0 / (l_d * omega_e * omega_e);
    let r_d = l_s / (c_d * (1.0 + l_d / l_s) * re_z_at_omega_m);
    Ok(UnitCellCircuit {
        r_d,
        l_d,
        c_d,
        l_s,
        ..UnitCellCircuit::default()
    })
}

/// Total cell impedance with the varactor branch across `C_d`.
///
/// `cv_pf == 0` is treated as an open varactor branch.
pub fn ris_impedance(
    circuit: &UnitCellCircuit,
    cv_pf: f64,
    rv: f64,
    omega: f64,
) -> Result<Complex64> {
    check_omega(omega)?;
    if !(cv_pf >= 0.0) || !(rv >= 0.0) {
        return Err(Error::Domain(format!(
            "invalid varactor values C_v = {cv_pf} pF, R_v = {rv}"
        )));
    }
    let j = Complex64::i();
    let gap = 1.0 / (j * omega * circuit.c_d);
    let loaded_gap = if cv_pf == 0.0 {
        gap
    } else {
        let varactor = rv + j * omega * circuit.l_v + 1.0 / (j * omega * cv_pf * 1e-12);
        parallel(varactor, gap)
    };
    let patch = circuit.r_d + j * omega * circuit.l_d + loaded_gap;
    Ok(parallel(patch, j * omega * circuit.l_s))
}

pub fn reflection_from_impedance(z: Complex64, z0: f64) -> Complex64 {
    (z - z0) / (z + z0)
}

/// Reflection coefficient of a cell biased at `voltage` and illuminated at `frequency` Hz.
pub fn reflection_coefficient(
    circuit: &UnitCellCircuit,
    table: &VaractorBiasTable,
    voltage: f64,
    frequency: f64,
) -> Result<Complex64> {
    let (cv, rv) = table.params(voltage)?;
    let z = ris_impedance(circuit, cv, rv, TAU * frequency)?;
    Ok(reflection_from_impedance(z, circuit.z0))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Unwraps a sequence of principal phases in place.
pub fn unwrap_phases(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let step = wrap_phase(phases[i] - phases[i - 1]);
        phases[i] = phases[i - 1] + step;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub voltage: f64,
    /// Unwrapped phase in radians.
    pub phase: f64,
    pub magnitude: f64,
}

/// Reflection phase sampled on a 5 mV bias grid at one frequency, verified
/// to be strictly monotone so it can be inverted.
#[derive(Debug, Clone)]
pub struct PhaseVoltageMap {
    circuit: UnitCellCircuit,
    table: VaractorBiasTable,
    frequency: f64,
    grid: Vec<MapPoint>,
    increasing: bool,
}

/// Builds the lookup map for `frequency`, failing if the phase is not one-to-one.
pub fn build_phase_voltage_map(
    circuit: &UnitCellCircuit,
    table: &VaractorBiasTable,
    frequency: f64,
) -> Result<PhaseVoltageMap> {
    PhaseVoltageMap::new(circuit, table, frequency)
}

impl PhaseVoltageMap {
    pub fn new(
        circuit: &UnitCellCircuit,
        table: &VaractorBiasTable,
        frequency: f64,
    ) -> Result<Self> {
        circuit.validate()?;
        let (lo, hi) = (table.min_voltage(), table.max_voltage());
        let steps = ((hi - lo) / MAP_STEP).round() as usize;
        let mut grid = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let voltage = if i == steps {
                hi
            } else {
                lo + i as f64 * MAP_STEP
            };
            let phi = reflection_coefficient(circuit, table, voltage, frequency)?;
            grid.push(MapPoint {
                voltage,
                phase: phi.arg(),
                magnitude: phi.norm(),
            });
        }
        let mut phases: Vec<f64> = grid.iter().map(|p| p.phase).collect();
        unwrap_phases(&mut phases);
        for (p, ph) in grid.iter_mut().zip(phases) {
            p.phase = ph;
        }
        let increasing = grid[1].phase > grid[0].phase;
        let monotone = grid.windows(2).all(|w| {
            if increasing {
                w[1].phase > w[0].phase
            } else {
                w[1].phase < w[0].phase
            }
        });
        if !monotone {
            return Err(Error::UnsupportedFrequency {
                frequency_hz: frequency,
            });
        }
        Ok(Self {
            circuit: *circuit,
            table: table.clone(),
            frequency,
            grid,
            increasing,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn grid(&self) -> &[MapPoint] {
        &self.grid
    }

    pub fn circuit(&self) -> &UnitCellCircuit {
        &self.circuit
    }

    pub fn table(&self) -> &VaractorBiasTable {
        &self.table
    }

    /// True when phase grows with bias voltage.
    pub fn is_increasing(&self) -> bool {
        self.increasing
    }

    pub fn phase_min(&self) -> f64 {
        if self.increasing {
            self.grid[0].phase
        } else {
            self.grid[self.grid.len() - 1].phase
        }
    }

    pub fn phase_max(&self) -> f64 {
        if self.increasing {
            self.grid[self.grid.len() - 1].phase
        } else {
            self.grid[0].phase
        }
    }

    pub fn phase_span(&self) -> f64 {
        self.phase_max() - self.phase_min()
    }

    pub fn voltage_range(&self) -> (f64, f64) {
        (self.table.min_voltage(), self.table.max_voltage())
    }

    /// Exact reflection coefficient at `voltage`.
    pub fn reflection(&self, voltage: f64) -> Result<Complex64> {
        reflection_coefficient(&self.circuit, &self.table, voltage, self.frequency)
    }

    fn interpolated_phase(&self, voltage: f64) -> f64 {
        let i = self
            .grid
            .partition_point(|p| p.voltage < voltage)
            .clamp(1, self.grid.len() - 1);
        let (a, b) = (self.grid[i - 1], self.grid[i]);
        let t = (voltage - a.voltage) / (b.voltage - a.voltage);
        a.phase + t * (b.phase - a.phase)
    }

    /// Exact phase at `voltage`, placed on the same branch as the grid.
    pub fn phase_of(&self, voltage: f64) -> Result<f64> {
        let principal = self.reflection(voltage)?.arg();
        let guide = self.interpolated_phase(voltage);
        Ok(principal + TAU * ((guide - principal) / TAU).round())
    }

    /// Brings `target` onto the map's branch and clamps it to the attainable range.
    pub fn clamp_phase(&self, target: f64) -> f64 {
        let (lo, hi) = (self.phase_min(), self.phase_max());
        let principal = wrap_phase(target);
        for candidate in [principal, principal - TAU, principal + TAU] {
            if (lo..=hi).contains(&candidate) {
                return candidate;
            }
        }
        principal.clamp(lo, hi)
    }

    /// Bias voltage producing `target` phase (clamped), by linear interpolation on the grid.
    pub fn voltage_of_phase(&self, target: f64) -> f64 {
        let phase = self.clamp_phase(target);
        let n = self.grid.len();
        // index of first grid point at or past the target along the phase direction
        let i = if self.increasing {
            self.grid.partition_point(|p| p.phase < phase)
        } else {
            self.grid.partition_point(|p| p.phase > phase)
        }
        .clamp(1, n - 1);
        let (a, b) = (self.grid[i - 1], self.grid[i]);
        let t = ((phase - a.phase) / (b.phase - a.phase)).clamp(0.0, 1.0);
        a.voltage + t * (b.voltage - a.voltage)
    }
}

/// Standalone form of [`PhaseVoltageMap::voltage_of_phase`].
pub fn voltage_of_phase(map: &PhaseVoltageMap, target: f64) -> f64 {
    map.voltage_of_phase(target)
}
