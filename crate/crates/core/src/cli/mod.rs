//! Command-line front end: `model`, `optimize` and `sweep`.

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::beamform::{
    default_theta_grid, directed_power, radiation_pattern, slnr_db, snr, to_db, ReflectionState,
};
use crate::biasline::{
    sample_hold, validate_range, BiasSynthesizer, BiasVoltages, ModeWeights, RangeViolation, V_MAX,
    V_MIN,
};
use crate::error::Error;
use crate::metasurface::{reflection_coefficient, unwrap_phases, PhaseVoltageMap, UnitCellCircuit};
use crate::optimize::{
    brute_force, ls_fit, phase_reference, realize, sa_init_indexed, simulated_annealing,
    slnr_sweep, weight_ranking, wls_fit, RepairStep, StageSlnr, SweepSpec, ENVELOPE_DC,
};
use crate::varactor::VaractorBiasTable;

use config::{Algorithm, ScenarioConfig};

/// Pattern grid resolution in degrees.
pub const PATTERN_STEP_DEG: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(
    name = "wcris",
    version,
    about = "Wave-controlled RIS simulator and optimizer"
)]
pub struct Cli {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the scenario's.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reflection magnitude and phase over the frequency and bias grids.
    Model,
    /// Runs the configured algorithm and writes pattern, weights, voltages and report.
    Optimize,
    /// Combined-algorithm SLNR over element and mode counts.
    Sweep {
        /// Element counts, overriding `sweep.elements`.
        #[arg(long, value_delimiter = ',')]
        elements: Option<Vec<usize>>,
        /// Mode counts, overriding `sweep.modes`.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 1.
    Validation(String),
    /// Numerical or I/O failure while running: exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::RepairFailed { .. } | Error::SingularGram => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Model => {
            let s = cmd_model(&cfg)?;
            println!(
                "max phase span {:.2} deg at {} GHz",
                s.max_phase_span_deg, s.max_span_f_ghz
            );
            Ok(())
        }
        Command::Optimize => {
            let r = cmd_optimize(&cfg)?;
            println!(
                "{}: SLNR {:.4} dB, SNR {:.4} dB",
                r.algorithm, r.slnr_db, r.snr_db
            );
            Ok(())
        }
        Command::Sweep {
            elements,
            modes,
            trials,
        } => {
            if let Some(e) = elements {
                cfg.sweep.elements = e.clone();
            }
            if let Some(n) = modes {
                cfg.sweep.modes = n.clone();
            }
            if let Some(t) = trials {
                cfg.sweep.trials = *t;
            }
            let rows = cmd_sweep(&cfg)?;
            println!("{} sweep rows written", rows.len());
            Ok(())
        }
    })
}

fn phase_map(cfg: &ScenarioConfig) -> CliResult<PhaseVoltageMap> {
    Ok(PhaseVoltageMap::new(
        &UnitCellCircuit::default(),
        &VaractorBiasTable::smv1231(),
        cfg.carrier.0,
    )?)
}

#[derive(Debug, Serialize)]
pub struct FrequencySummary {
    pub f_ghz: f64,
    pub phase_span_deg: f64,
    pub monotone: bool,
}

#[derive(Debug, Serialize)]
pub struct ModelSummary {
    pub rows_per_frequency: usize,
    pub frequencies: Vec<FrequencySummary>,
    pub max_phase_span_deg: f64,
    pub max_span_f_ghz: f64,
}

/// Writes `reflection.csv` and `model_summary.json`.
pub fn cmd_model(cfg: &ScenarioConfig) -> CliResult<ModelSummary> {
    let freqs = &cfg.model.frequencies;
    if freqs.is_empty() {
        return Err(CliError::Validation(
            "model.frequencies: at least one frequency is required".into(),
        ));
    }
    let step = cfg.model.voltage_step;
    let n = ((V_MAX - V_MIN) / step).round() as usize;
    let volts: Vec<f64> = (0..=n)
        .map(|i| {
            if i == n {
                V_MAX
            } else {
                V_MIN + i as f64 * step
            }
        })
        .collect();
    let circuit = UnitCellCircuit::default();
    let table = VaractorBiasTable::smv1231();
    let mut rows = Vec::with_capacity(freqs.len() * volts.len());
    let mut summaries = Vec::new();
    for f in freqs {
        let phi = volts
            .iter()
            .map(|&v| reflection_coefficient(&circuit, &table, v, f.0))
            .collect::<crate::Result<Vec<_>>>()?;
        let mut phase: Vec<f64> = phi.iter().map(|p| p.arg()).collect();
        unwrap_phases(&mut phase);
        let inc = phase.windows(2).all(|w| w[1] > w[0]);
        let dec = phase.windows(2).all(|w| w[1] < w[0]);
        let (lo, hi) = phase
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &p| {
                (a.0.min(p), a.1.max(p))
            });
        summaries.push(FrequencySummary {
            f_ghz: f.0 / 1e9,
            phase_span_deg: (hi - lo).to_degrees(),
            monotone: inc || dec,
        });
        for ((v, p), ph) in volts.iter().zip(&phi).zip(&phase) {
            rows.push((f.0 / 1e9, *v, p.norm(), ph.to_degrees()));
        }
    }
    let best = summaries
        .iter()
        .max_by(|a, b| a.phase_span_deg.total_cmp(&b.phase_span_deg))
        .expect("nonempty");
    let summary = ModelSummary {
        rows_per_frequency: volts.len(),
        max_phase_span_deg: best.phase_span_deg,
        max_span_f_ghz: best.f_ghz,
        frequencies: summaries,
    };
    io::write_atomic(&cfg.output.join("reflection.csv"), &io::model_csv(&rows))?;
    write_json(&cfg.output.join("model_summary.json"), &summary)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    Ok(io::write_atomic(path, text.as_bytes())?)
}

#[derive(Debug, Serialize)]
pub struct DirectionGain {
    pub theta_deg: f64,
    pub gain_db: f64,
}

#[derive(Debug, Serialize)]
pub struct ScenarioSummary {
    pub elements: usize,
    pub modes: usize,
    pub spacing_wl: f64,
    pub carrier_hz: f64,
    pub sampler: String,
    pub t0_s: Option<f64>,
    pub left_ext: f64,
    pub right_ext: f64,
}

#[derive(Debug, Serialize)]
pub struct WeightsReport {
    pub dc: f64,
    pub modes: Vec<u32>,
    pub amplitudes: Vec<f64>,
}

/// Everything `optimize` records; contains no timings so reruns are byte-identical.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub algorithm: &'static str,
    pub seed: u64,
    pub scenario: ScenarioSummary,
    pub stages: Vec<StageSlnr>,
    pub beams: Vec<DirectionGain>,
    pub nulls: Vec<DirectionGain>,
    pub snr_db: f64,
    pub slnr_db: f64,
    pub weights: Option<WeightsReport>,
    pub voltages: Option<Vec<f64>>,
    pub violations: Vec<RangeViolation>,
    pub repairs: Vec<RepairStep>,
    pub null_converged: Option<bool>,
    pub ranked_modes: Option<Vec<u32>>,
}

#[derive(Debug, Serialize)]
struct PatternMeta<'a> {
    algorithm: &'a str,
    step_deg: f64,
    floor_db_below_peak: f64,
    desired_deg: &'a [f64],
    undesired_deg: &'a [f64],
}

struct Outcome {
    state: ReflectionState,
    weights: Option<(ModeWeights, Vec<u32>)>,
    voltages: Option<BiasVoltages>,
    stages: Vec<StageSlnr>,
    violations: Vec<RangeViolation>,
    repairs: Vec<RepairStep>,
    null_converged: Option<bool>,
    ranked: Option<Vec<u32>>,
}

impl Outcome {
    fn phases(state: ReflectionState, voltages: Option<BiasVoltages>, converged: bool) -> Self {
        Self {
            state,
            weights: None,
            voltages,
            stages: Vec::new(),
            violations: Vec::new(),
            repairs: Vec::new(),
            null_converged: Some(converged),
            ranked: None,
        }
    }

    fn wave(
        state: ReflectionState,
        weights: ModeWeights,
        modes: Vec<u32>,
        voltages: BiasVoltages,
    ) -> Self {
        Self {
            state,
            weights: Some((weights, modes)),
            voltages: Some(voltages),
            stages: Vec::new(),
            violations: Vec::new(),
            repairs: Vec::new(),
            null_converged: None,
            ranked: None,
        }
    }
}

fn run_algorithm(cfg: &ScenarioConfig, map: &PhaseVoltageMap) -> CliResult<Outcome> {
    let scn = cfg.scenario();
    let g = cfg.geometry()?;
    let t0 = cfg.sample_time();
    let modes = g.modes.clone();
    Ok(match cfg.algorithm {
        Algorithm::Ideal => {
            let r = crate::optimize::null_steer(&scn, &cfg.null)?;
            Outcome::phases(r.state, None, r.converged)
        }
        Algorithm::Arbitrary => {
            let r = crate::optimize::null_steer_realized(&scn, map, &cfg.null)?;
            Outcome::phases(r.state, r.voltages, r.converged)
        }
        Algorithm::EnvelopeWrBf => {
            if scn.desired.len() != 1 {
                return Err(CliError::Validation(
                    "envelope-wr-bf steers exactly one desired direction".into(),
                ));
            }
            let theta = scn.desired[0];
            let synth = BiasSynthesizer::new(g, cfg.sampler_kind())?;
            let ranked = weight_ranking(&synth, &scn, map, theta, ENVELOPE_DC)?;
            let order: Vec<usize> = ranked.iter().map(|r| r.slot).collect();
            let res = brute_force(
                &synth,
                &scn,
                map,
                theta,
                ENVELOPE_DC,
                &order,
                &cfg.brute_force,
            )?;
            let mut out = Outcome::wave(res.state, res.weights, modes, res.voltages);
            out.ranked = Some(ranked.iter().map(|r| r.mode).collect());
            out
        }
        Algorithm::ShLs => {
            let reference = phase_reference(&scn, map, &cfg.null)?;
            let w = ls_fit(&g, &reference.target, t0)?;
            let raw = sample_hold(&g, &w, t0)?;
            let violations = validate_range(&raw);
            // out-of-window samples are evaluated at the nearest admissible bias
            let clamped =
                BiasVoltages(raw.values().iter().map(|v| v.clamp(V_MIN, V_MAX)).collect());
            let mut out = Outcome::wave(realize(map, &clamped)?, w, modes, raw);
            out.violations = violations;
            out.null_converged = Some(reference.ideal.converged);
            out
        }
        Algorithm::ShWls => {
            let reference = phase_reference(&scn, map, &cfg.null)?;
            let sol = wls_fit(&g, map, &reference.target, t0, &cfg.repair)?;
            let mut out = Outcome::wave(
                realize(map, &sol.voltages)?,
                sol.weights,
                modes,
                sol.voltages,
            );
            out.repairs = sol.repairs;
            out.null_converged = Some(reference.ideal.converged);
            out
        }
        Algorithm::Sa => {
            let synth = BiasSynthesizer::new(g, cfg.sampler_kind())?;
            let init = sa_init_indexed(&synth, &scn, cfg.exact_mode_index)?;
            let res = simulated_annealing(&synth, &scn, map, &init, &cfg.anneal_config())?;
            let mut out = Outcome::wave(res.state, res.weights, modes, res.voltages);
            out.stages = vec![
                StageSlnr {
                    stage: "init",
                    slnr_db: res.initial_slnr_db,
                },
                StageSlnr {
                    stage: "anneal",
                    slnr_db: res.slnr_db,
                },
            ];
            out
        }
        Algorithm::Combined => {
            let res = crate::optimize::combined(&g, t0, &scn, map, &cfg.combined_config())?;
            let stages = res.stages();
            let converged = res.reference.ideal.converged;
            let repairs = res.wls.repairs.clone();
            let mut out = Outcome::wave(
                res.anneal.state,
                res.anneal.weights,
                modes,
                res.anneal.voltages,
            );
            out.stages = stages;
            out.repairs = repairs;
            out.null_converged = Some(converged);
            out
        }
    })
}

/// Writes `pattern.csv`, `pattern_meta.json`, `report.json`, and for
/// voltage-based algorithms `voltages.csv` and `weights.txt`.
pub fn cmd_optimize(cfg: &ScenarioConfig) -> CliResult<RunReport> {
    cfg.validate()?;
    let map = phase_map(cfg)?;
    let out = run_algorithm(cfg, &map)?;
    let scn = cfg.scenario();
    let gains = |dirs: &[f64]| {
        dirs.iter()
            .map(|&d| DirectionGain {
                theta_deg: d,
                gain_db: to_db(directed_power(&scn, &out.state, d.to_radians())),
            })
            .collect::<Vec<_>>()
    };
    let uses_t0 = matches!(
        cfg.sampler_kind(),
        crate::biasline::SamplerKind::SampleAndHold { .. }
    );
    let report = RunReport {
        algorithm: cfg.algorithm.name(),
        seed: cfg.seed,
        scenario: ScenarioSummary {
            elements: cfg.elements,
            modes: cfg.modes,
            spacing_wl: cfg.spacing_wl(),
            carrier_hz: cfg.carrier.0,
            sampler: format!("{:?}", cfg.sampler),
            t0_s: uses_t0.then(|| cfg.sample_time()),
            left_ext: cfg.left_ext,
            right_ext: cfg.right_ext,
        },
        stages: out.stages,
        beams: gains(&cfg.desired_deg),
        nulls: gains(&cfg.undesired_deg),
        snr_db: to_db(snr(&scn, &out.state, scn.desired[0])),
        slnr_db: slnr_db(&scn, &out.state),
        weights: out.weights.as_ref().map(|(w, m)| WeightsReport {
            dc: w.dc,
            modes: m.clone(),
            amplitudes: w.amplitudes.clone(),
        }),
        voltages: out.voltages.as_ref().map(|v| v.values().to_vec()),
        violations: out.violations,
        repairs: out.repairs,
        null_converged: out.null_converged,
        ranked_modes: out.ranked,
    };

    let dir = &cfg.output;
    let grid = default_theta_grid(PATTERN_STEP_DEG);
    let pattern: Vec<(f64, f64)> = radiation_pattern(&scn, &out.state, &grid)
        .into_iter()
        .enumerate()
        .map(|(i, (_, g))| (-90.0 + i as f64 * PATTERN_STEP_DEG, g))
        .collect();
    io::write_atomic(&dir.join("pattern.csv"), &io::pattern_csv(&pattern))?;
    write_json(
        &dir.join("pattern_meta.json"),
        &PatternMeta {
            algorithm: cfg.algorithm.name(),
            step_deg: PATTERN_STEP_DEG,
            floor_db_below_peak: -crate::beamform::PATTERN_FLOOR_DB,
            desired_deg: &cfg.desired_deg,
            undesired_deg: &cfg.undesired_deg,
        },
    )?;
    if let Some(v) = &out.voltages {
        io::write_atomic(&dir.join("voltages.csv"), &io::voltages_csv(v))?;
    }
    if let Some((w, m)) = &out.weights {
        io::write_atomic(&dir.join("weights.txt"), io::weights_text(w, m).as_bytes())?;
    }
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// Writes `sweep.csv`.
pub fn cmd_sweep(cfg: &ScenarioConfig) -> CliResult<Vec<io::SweepCsvRow>> {
    cfg.validate_sweep()?;
    let map = phase_map(cfg)?;
    let spec = SweepSpec {
        scenario: cfg.scenario(),
        geometry: cfg.geometry_for(cfg.elements, vec![1])?,
        t0: cfg.sample_time(),
        config: cfg.combined_config(),
        seed: cfg.seed,
    };
    let s = &cfg.sweep;
    let rows = slnr_sweep(&spec, &map, &s.elements, &s.modes, &s.selection, s.trials)?;
    let rows: Vec<io::SweepCsvRow> = rows
        .into_iter()
        .map(|r| {
            (
                r.elements,
                r.modes,
                r.selection,
                r.mean_slnr_db,
                r.std_db,
                r.trials,
            )
        })
        .collect();
    io::write_atomic(&cfg.output.join("sweep.csv"), &io::sweep_csv(&rows))?;
    Ok(rows)
}
