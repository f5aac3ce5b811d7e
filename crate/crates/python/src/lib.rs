//! Python bindings for the `wcris` simulator.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wcris::beamform::{self, ArrayScenario, ReflectionState};
use wcris::biasline::{
    self, BiasLineGeometry, BiasSynthesizer, BiasVoltages, ModeWeights, SamplerKind,
};
use wcris::metasurface::{PhaseVoltageMap, UnitCellCircuit};
use wcris::optimize::{self, CombinedConfig, NullSteerConfig, RepairConfig, SAConfig};
use wcris::varactor::VaractorBiasTable;

fn py_err(e: wcris::Error) -> PyErr {
    match e {
        wcris::Error::RepairFailed { .. } | wcris::Error::SingularGram => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn state(phi: Vec<Complex64>) -> ReflectionState {
    ReflectionState::new(phi)
}

/// Phase-voltage map of the default unit cell with the SMV1231 varactor.
#[pyclass(name = "PhaseMap", frozen)]
struct PyPhaseMap(PhaseVoltageMap);

#[pymethods]
impl PyPhaseMap {
    #[new]
    #[pyo3(signature = (frequency_hz = 3e9))]
    fn new(frequency_hz: f64) -> PyResult<Self> {
        PhaseVoltageMap::new(
            &UnitCellCircuit::default(),
            &VaractorBiasTable::smv1231(),
            frequency_hz,
        )
        .map(Self)
        .map_err(py_err)
    }

    #[getter]
    fn frequency(&self) -> f64 {
        self.0.frequency()
    }

    /// Unwrapped phase span in degrees.
    #[getter]
    fn phase_span_deg(&self) -> f64 {
        self.0.phase_span().to_degrees()
    }

    #[getter]
    fn voltage_range(&self) -> (f64, f64) {
        self.0.voltage_range()
    }

    fn reflection(&self, voltage: f64) -> PyResult<Complex64> {
        self.0.reflection(voltage).map_err(py_err)
    }

    fn phase_of(&self, voltage: f64) -> PyResult<f64> {
        self.0.phase_of(voltage).map_err(py_err)
    }

    fn voltage_of_phase(&self, phase: f64) -> f64 {
        self.0.voltage_of_phase(phase)
    }

    /// `(voltage, |Γ|, unwrapped phase)` for every grid point.
    fn grid(&self) -> Vec<(f64, f64, f64)> {
        self.0
            .grid()
            .iter()
            .map(|p| (p.voltage, p.magnitude, p.phase))
            .collect()
    }
}

/// Bias line: element count, modes `1..=N` and line extensions in element spacings.
#[pyclass(name = "Geometry", frozen)]
struct PyGeometry(BiasLineGeometry);

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (elements, modes, left_ext = 2.0, right_ext = 2.0))]
    fn new(elements: usize, modes: usize, left_ext: f64, right_ext: f64) -> PyResult<Self> {
        BiasLineGeometry::new(elements, modes, left_ext, right_ext)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn elements(&self) -> usize {
        self.0.elements
    }

    #[getter]
    fn modes(&self) -> Vec<u32> {
        self.0.modes.clone()
    }

    #[getter]
    fn rank_limit(&self) -> usize {
        self.0.rank_limit()
    }

    #[getter]
    fn default_sample_time(&self) -> f64 {
        self.0.default_sample_time()
    }

    #[pyo3(signature = (dc, amplitudes, t0 = None))]
    fn sample_hold(&self, dc: f64, amplitudes: Vec<f64>, t0: Option<f64>) -> PyResult<Vec<f64>> {
        let t0 = t0.unwrap_or_else(|| self.0.default_sample_time());
        biasline::sample_hold(&self.0, &ModeWeights { dc, amplitudes }, t0)
            .map(|v| v.0)
            .map_err(py_err)
    }

    fn sample_envelope(&self, dc: f64, amplitudes: Vec<f64>) -> PyResult<Vec<f64>> {
        biasline::sample_envelope(&self.0, &ModeWeights { dc, amplitudes })
            .map(|v| v.0)
            .map_err(py_err)
    }
}

/// Array, powers and steering directions (degrees).
#[pyclass(name = "Scenario", frozen)]
struct PyScenario(ArrayScenario);

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (elements, spacing_wl, desired_deg, undesired_deg = vec![], symbol_power = 1.0, noise_power = 1.0))]
    fn new(
        elements: usize,
        spacing_wl: f64,
        desired_deg: Vec<f64>,
        undesired_deg: Vec<f64>,
        symbol_power: f64,
        noise_power: f64,
    ) -> PyResult<Self> {
        let rad = |v: Vec<f64>| v.into_iter().map(f64::to_radians).collect();
        let mut scn = ArrayScenario::new(elements, spacing_wl)
            .with_directions(rad(desired_deg), rad(undesired_deg));
        scn.symbol_power = symbol_power;
        scn.noise_power = noise_power;
        scn.validate().map_err(py_err)?;
        Ok(Self(scn))
    }

    #[getter]
    fn elements(&self) -> usize {
        self.0.elements
    }

    fn directed_power_db(&self, phi: Vec<Complex64>, theta_deg: f64) -> f64 {
        beamform::to_db(beamform::directed_power(
            &self.0,
            &state(phi),
            theta_deg.to_radians(),
        ))
    }

    fn slnr_db(&self, phi: Vec<Complex64>) -> f64 {
        beamform::slnr_db(&self.0, &state(phi))
    }

    /// `(theta_deg, gain_dB)` on a uniform grid over [-90, 90].
    #[pyo3(signature = (phi, step_deg = 0.25))]
    fn pattern(&self, phi: Vec<Complex64>, step_deg: f64) -> Vec<(f64, f64)> {
        beamform::radiation_pattern(
            &self.0,
            &state(phi),
            &beamform::default_theta_grid(step_deg),
        )
    }
}

#[pyfunction]
fn ideal_phases(scn: &PyScenario, theta_deg: f64) -> Vec<Complex64> {
    optimize::ideal_phases(&scn.0, theta_deg.to_radians()).phi
}

/// Multi-beam and null-steering phases, unconstrained.
#[pyfunction]
fn null_steer(scn: &PyScenario) -> PyResult<Vec<Complex64>> {
    optimize::null_steer(&scn.0, &NullSteerConfig::default())
        .map(|o| o.state.phi)
        .map_err(py_err)
}

#[pyfunction]
fn mode_index_sh(elements: usize, spacing_wl: f64, theta_deg: f64) -> u32 {
    biasline::mode_index_sh(elements, spacing_wl, theta_deg.to_radians())
}

fn wave_dict<'py>(
    py: Python<'py>,
    w: &ModeWeights,
    v: &BiasVoltages,
    map: &PhaseVoltageMap,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("dc", w.dc)?;
    d.set_item("amplitudes", w.amplitudes.clone())?;
    d.set_item("voltages", v.0.clone())?;
    d.set_item("phi", optimize::realize(map, v).map_err(py_err)?.phi)?;
    Ok(d)
}

/// Weighted least-squares fit of target biases with boundary repair.
#[pyfunction]
#[pyo3(signature = (geometry, phase_map, target, t0 = None))]
fn wls_fit<'py>(
    py: Python<'py>,
    geometry: &PyGeometry,
    phase_map: &PyPhaseMap,
    target: Vec<f64>,
    t0: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let t0 = t0.unwrap_or_else(|| geometry.0.default_sample_time());
    let sol = optimize::wls_fit(
        &geometry.0,
        &phase_map.0,
        &BiasVoltages(target),
        t0,
        &RepairConfig::default(),
    )
    .map_err(py_err)?;
    let d = wave_dict(py, &sol.weights, &sol.voltages, &phase_map.0)?;
    d.set_item("repairs", sol.repairs.len())?;
    Ok(d)
}

/// Biases reproducing `phi` as closely as the varactor allows.
#[pyfunction]
fn voltages_for_phases(phase_map: &PyPhaseMap, phi: Vec<Complex64>) -> PyResult<Vec<f64>> {
    optimize::arbitrary_voltage_state(&phase_map.0, &state(phi))
        .map(|(v, _)| v.0)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (geometry, scenario, phase_map, envelope = false, seed = 0, max_iters = 2000))]
fn simulated_annealing<'py>(
    py: Python<'py>,
    geometry: &PyGeometry,
    scenario: &PyScenario,
    phase_map: &PyPhaseMap,
    envelope: bool,
    seed: u64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let sampler = if envelope {
        SamplerKind::EnvelopeDetector
    } else {
        SamplerKind::SampleAndHold {
            t0: geometry.0.default_sample_time(),
        }
    };
    let synth = BiasSynthesizer::new(geometry.0.clone(), sampler).map_err(py_err)?;
    let init = optimize::sa_init(&synth, &scenario.0).map_err(py_err)?;
    let cfg = SAConfig {
        seed,
        max_iters,
        ..SAConfig::default()
    };
    let r = optimize::simulated_annealing(&synth, &scenario.0, &phase_map.0, &init, &cfg)
        .map_err(py_err)?;
    let d = wave_dict(py, &r.weights, &r.voltages, &phase_map.0)?;
    d.set_item("slnr_db", r.slnr_db)?;
    d.set_item("initial_slnr_db", r.initial_slnr_db)?;
    Ok(d)
}

/// Null steering, voltage mapping, WLS and annealing in sequence.
#[pyfunction]
#[pyo3(signature = (geometry, scenario, phase_map, seed = 0, max_iters = 2000))]
fn combined<'py>(
    py: Python<'py>,
    geometry: &PyGeometry,
    scenario: &PyScenario,
    phase_map: &PyPhaseMap,
    seed: u64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = CombinedConfig::default();
    cfg.anneal.seed = seed;
    cfg.anneal.max_iters = max_iters;
    let t0 = geometry.0.default_sample_time();
    let r = optimize::combined(&geometry.0, t0, &scenario.0, &phase_map.0, &cfg).map_err(py_err)?;
    let d = wave_dict(py, r.weights(), r.voltages(), &phase_map.0)?;
    d.set_item("slnr_db", r.slnr_db())?;
    d.set_item("arbitrary_slnr_db", r.reference.arbitrary_slnr_db)?;
    d.set_item(
        "stages",
        r.stages()
            .iter()
            .map(|s| (s.stage, s.slnr_db))
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Runs the command-line interface with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("wcris".to_string()).chain(args).collect();
    py.detach(|| wcris::cli::main_with_args(argv))
}

#[pymodule]
fn wcris_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhaseMap>()?;
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(ideal_phases, m)?)?;
    m.add_function(wrap_pyfunction!(null_steer, m)?)?;
    m.add_function(wrap_pyfunction!(mode_index_sh, m)?)?;
    m.add_function(wrap_pyfunction!(wls_fit, m)?)?;
    m.add_function(wrap_pyfunction!(voltages_for_phases, m)?)?;
    m.add_function(wrap_pyfunction!(simulated_annealing, m)?)?;
    m.add_function(wrap_pyfunction!(combined, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("V_MIN", biasline::V_MIN)?;
    m.add("V_MAX", biasline::V_MAX)?;
    Ok(())
}
