use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use crate::beamform::{ArrayScenario, SPEED_OF_LIGHT};
use crate::biasline::{BiasLineGeometry, SamplerKind, DEFAULT_FUNDAMENTAL, DEFAULT_SPACING};
use crate::error::{Error, Result};
use crate::optimize::{
    BruteForceConfig, CombinedConfig, ModeSelection, NullSteerConfig, RepairConfig, SAConfig,
};

/// A physical quantity in SI units, written either as a bare number or as
/// a number with a unit suffix (`"3 GHz"`, `"19 mm"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity(pub f64);

const UNITS: &[(&str, f64)] = &[
    ("THz", 1e12),
    ("GHz", 1e9),
    ("MHz", 1e6),
    ("kHz", 1e3),
    ("Hz", 1.0),
    ("mm", 1e-3),
    ("cm", 1e-2),
    ("um", 1e-6),
    ("m", 1.0),
    ("ns", 1e-9),
    ("us", 1e-6),
    ("ms", 1e-3),
    ("s", 1.0),
];

impl std::str::FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (num, scale) = UNITS
            .iter()
            .find_map(|(u, k)| s.strip_suffix(u).map(|n| (n, *k)))
            .unwrap_or((s, 1.0));
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("cannot read quantity {s:?}"))?;
        Ok(Quantity(v * scale))
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Quantity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"3 GHz\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Quantity, E> {
                Ok(Quantity(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Quantity, E> {
                Ok(Quantity(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Quantity, E> {
                Ok(Quantity(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Quantity, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    SampleHold,
    Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ideal,
    Arbitrary,
    EnvelopeWrBf,
    ShLs,
    ShWls,
    Sa,
    Combined,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ideal => "ideal",
            Algorithm::Arbitrary => "arbitrary",
            Algorithm::EnvelopeWrBf => "envelope-wr-bf",
            Algorithm::ShLs => "sh-ls",
            Algorithm::ShWls => "sh-wls",
            Algorithm::Sa => "sa",
            Algorithm::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub frequencies: Vec<Quantity>,
    pub voltage_step: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            frequencies: [2.6e9, 2.7e9, 2.8e9, 2.9e9, 3.0e9]
                .into_iter()
                .map(Quantity)
                .collect(),
            voltage_step: 0.005,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub elements: Vec<usize>,
    pub modes: Vec<usize>,
    pub selection: Vec<ModeSelection>,
    pub trials: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            elements: vec![50, 100, 150, 200, 256],
            modes: vec![10, 20, 30, 40, 50],
            selection: vec![ModeSelection::FirstN, ModeSelection::StrongestN],
            trials: 10,
        }
    }
}

/// Annealing settings as written in the file; the seed comes from the top level.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealBlock {
    pub lambda: f64,
    pub cooling: f64,
    pub max_iters: usize,
    pub revert_patience: usize,
}

impl Default for AnnealBlock {
    fn default() -> Self {
        let d = SAConfig::default();
        Self {
            lambda: d.lambda,
            cooling: d.cooling,
            max_iters: d.max_iters,
            revert_patience: d.revert_patience,
        }
    }
}

/// Contents of a scenario file. Angles in degrees, voltages in volts.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub carrier: Quantity,
    pub spacing: Quantity,
    pub elements: usize,
    pub modes: usize,
    pub left_ext: f64,
    pub right_ext: f64,
    pub fundamental: Quantity,
    pub sampler: SamplerChoice,
    /// Sample instant; `8 / ω_b` when absent.
    pub t0: Option<Quantity>,
    /// Use `2(M-1)Δ sin θ` for the sample-and-hold mode index when seeding annealing.
    pub exact_mode_index: bool,
    pub symbol_power: f64,
    pub noise_power: f64,
    pub desired_deg: Vec<f64>,
    pub undesired_deg: Vec<f64>,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub output: PathBuf,
    pub anneal: AnnealBlock,
    pub null: NullSteerConfig,
    pub repair: RepairConfig,
    pub brute_force: BruteForceConfig,
    pub model: ModelBlock,
    pub sweep: SweepBlock,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            carrier: Quantity(3e9),
            spacing: Quantity(DEFAULT_SPACING),
            elements: 100,
            modes: 50,
            left_ext: 2.0,
            right_ext: 2.0,
            fundamental: Quantity(DEFAULT_FUNDAMENTAL),
            sampler: SamplerChoice::SampleHold,
            t0: None,
            exact_mode_index: false,
            symbol_power: 1.0,
            noise_power: 1.0,
            desired_deg: vec![-30.0],
            undesired_deg: Vec::new(),
            algorithm: Algorithm::ShWls,
            seed: 0,
            output: PathBuf::from("out"),
            anneal: AnnealBlock::default(),
            null: NullSteerConfig::default(),
            repair: RepairConfig::default(),
            brute_force: BruteForceConfig::default(),
            model: ModelBlock::default(),
            sweep: SweepBlock::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Element spacing in carrier wavelengths.
    pub fn spacing_wl(&self) -> f64 {
        self.spacing.0 * self.carrier.0 / SPEED_OF_LIGHT
    }

    pub fn geometry(&self) -> Result<BiasLineGeometry> {
        self.geometry_for(self.elements, (1..=self.modes as u32).collect())
    }

    pub fn geometry_for(&self, elements: usize, modes: Vec<u32>) -> Result<BiasLineGeometry> {
        let g = BiasLineGeometry {
            elements,
            left_ext: self.left_ext,
            right_ext: self.right_ext,
            spacing: self.spacing.0,
            fundamental: self.fundamental.0,
            modes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn sample_time(&self) -> f64 {
        self.t0
            .map(|q| q.0)
            .unwrap_or(8.0 / (std::f64::consts::TAU * self.fundamental.0))
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        match self.sampler {
            SamplerChoice::SampleHold => SamplerKind::SampleAndHold {
                t0: self.sample_time(),
            },
            SamplerChoice::Envelope => SamplerKind::EnvelopeDetector,
        }
    }

    pub fn scenario(&self) -> ArrayScenario {
        self.scenario_for(self.elements)
    }

    pub fn scenario_for(&self, elements: usize) -> ArrayScenario {
        let mut s = ArrayScenario::new(elements, self.spacing_wl()).with_directions(
            self.desired_deg.iter().map(|d| d.to_radians()).collect(),
            self.undesired_deg.iter().map(|d| d.to_radians()).collect(),
        );
        s.symbol_power = self.symbol_power;
        s.noise_power = self.noise_power;
        s
    }

    pub fn anneal_config(&self) -> SAConfig {
        let a = self.anneal;
        SAConfig {
            lambda: a.lambda,
            cooling: a.cooling,
            max_iters: a.max_iters,
            revert_patience: a.revert_patience,
            seed: self.seed,
        }
    }

    pub fn combined_config(&self) -> CombinedConfig {
        CombinedConfig {
            anneal: self.anneal_config(),
            null: self.null,
            repair: self.repair,
        }
    }

    /// Re-checks every module invariant reachable from the file.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Invalid(format!("{field}: {why}")));
        if !(self.carrier.0 > 0.0) {
            return bad("carrier", "must be positive");
        }
        if !(self.spacing.0 > 0.0) {
            return bad("spacing", "must be positive");
        }
        if self.elements < 2 {
            return bad("elements", "must be at least 2");
        }
        if self.modes == 0 {
            return bad("modes", "must be at least 1");
        }
        if !(self.left_ext >= 0.0) || !(self.right_ext >= 0.0) {
            return bad("left_ext/right_ext", "must be non-negative");
        }
        if !(self.fundamental.0 > 0.0) {
            return bad("fundamental", "must be positive");
        }
        if !(self.symbol_power > 0.0) {
            return bad("symbol_power", "must be positive");
        }
        if !(self.noise_power > 0.0) {
            return bad("noise_power", "must be positive");
        }
        if self.desired_deg.is_empty() {
            return bad("desired_deg", "needs at least one direction");
        }
        for d in self.desired_deg.iter().chain(&self.undesired_deg) {
            if !(d.abs() < 90.0) {
                return bad(
                    "desired_deg/undesired_deg",
                    "angles must lie strictly between -90 and 90",
                );
            }
        }
        if let Some(t0) = self.t0 {
            if !(t0.0 > 0.0) {
                return bad("t0", "must be positive");
            }
        }
        let g = self
            .geometry()
            .map_err(|e| Error::Invalid(format!("geometry: {e}")))?;
        self.sampler_kind()
            .check(&g)
            .map_err(|e| Error::Invalid(format!("t0: {e}")))?;
        self.anneal_config()
            .validate()
            .map_err(|e| Error::Invalid(format!("anneal: {e}")))?;
        self.null
            .validate()
            .map_err(|e| Error::Invalid(format!("null: {e}")))?;
        self.brute_force
            .validate()
            .map_err(|e| Error::Invalid(format!("brute_force: {e}")))?;
        if self.repair.max_iters == 0 || !(self.repair.nudge > 0.0) {
            return bad("repair", "needs a positive iteration cap and nudge");
        }
        if !(self.model.voltage_step > 0.0) {
            return bad("model.voltage_step", "must be positive");
        }
        for f in &self.model.frequencies {
            if !(f.0 > 0.0) {
                return bad("model.frequencies", "must be positive");
            }
        }
        let needs_sh = matches!(
            self.algorithm,
            Algorithm::ShLs | Algorithm::ShWls | Algorithm::Combined
        );
        if needs_sh && self.sampler != SamplerChoice::SampleHold {
            return bad(
                "algorithm",
                &format!(
                    "{} requires sampler = \"sample-hold\"",
                    self.algorithm.name()
                ),
            );
        }
        if self.algorithm == Algorithm::EnvelopeWrBf && self.sampler != SamplerChoice::Envelope {
            return bad(
                "algorithm",
                "envelope-wr-bf requires sampler = \"envelope\"",
            );
        }
        if matches!(
            self.algorithm,
            Algorithm::ShLs | Algorithm::ShWls | Algorithm::Combined
        ) && self.modes > g.rank_limit()
        {
            return bad(
                "modes",
                &format!(
                    "{} modes exceed the least-squares limit of {}",
                    self.modes,
                    g.rank_limit()
                ),
            );
        }
        Ok(())
    }

    /// Checks the sweep grid; separate because only the sweep command uses it.
    pub fn validate_sweep(&self) -> Result<()> {
        let s = &self.sweep;
        if s.elements.is_empty() || s.modes.is_empty() {
            return Err(Error::Invalid(
                "sweep: element and mode lists must be nonempty".into(),
            ));
        }
        if s.selection.is_empty() || s.trials == 0 {
            return Err(Error::Invalid(
                "sweep: needs a selection and at least one trial".into(),
            ));
        }
        if self.sampler != SamplerChoice::SampleHold {
            return Err(Error::Invalid(
                "sweep: the combined algorithm requires sampler = \"sample-hold\"".into(),
            ));
        }
        for &m in &s.elements {
            let g = self
                .geometry_for(m.max(2), vec![1])
                .map_err(|e| Error::Invalid(format!("sweep: {e}")))?;
            if m < 2 {
                return Err(Error::Invalid(
                    "sweep.elements: each entry must be at least 2".into(),
                ));
            }
            for &n in &s.modes {
                if n == 0 || n > g.rank_limit() {
                    return Err(Error::Invalid(format!(
                        "sweep.modes: {n} modes is outside 1..={} for {m} elements",
                        g.rank_limit()
                    )));
                }
            }
        }
        let g = self.geometry_for(2, (1..=*s.modes.iter().max().unwrap() as u32).collect())?;
        SamplerKind::SampleAndHold {
            t0: self.sample_time(),
        }
        .check(&g)
        .map_err(|e| Error::Invalid(format!("t0: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities() {
        assert_eq!("3 GHz".parse::<Quantity>().unwrap(), Quantity(3e9));
        assert_eq!("12.9MHz".parse::<Quantity>().unwrap().0, 12.9e6);
        assert!(("19 mm".parse::<Quantity>().unwrap().0 - 0.019).abs() < 1e-15);
        assert_eq!("2.5".parse::<Quantity>().unwrap(), Quantity(2.5));
        assert!("fast".parse::<Quantity>().is_err());
    }

    #[test]
    fn defaults_mirror_baseline() {
        let c = ScenarioConfig::from_toml("").unwrap();
        assert!((c.spacing_wl() - 0.19013).abs() < 1e-4);
        assert_eq!((c.elements, c.modes), (100, 50));
        assert!((c.sample_time() * std::f64::consts::TAU * 12.9e6 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ScenarioConfig::from_toml("elemnts = 3")
            .unwrap_err()
            .to_string();
        assert!(e.contains("elemnts"), "{e}");
        assert!(ScenarioConfig::from_toml("[anneal]\nseed = 4").is_err());
    }

    #[test]
    fn full_file_parses() {
        let text = r#"
carrier = "3 GHz"
spacing = "19 mm"
elements = 64
modes = 20
fundamental = "12.9 MHz"
sampler = "envelope"
algorithm = "sa"
desired_deg = [-30, -15]
undesired_deg = [20]
seed = 7
[anneal]
max_iters = 10
[model]
frequencies = ["2.8 GHz", 3e9]
"#;
        let c = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(c.sampler_kind(), SamplerKind::EnvelopeDetector);
        assert_eq!(c.anneal_config().seed, 7);
        assert_eq!(c.model.frequencies, vec![Quantity(2.8e9), Quantity(3e9)]);
    }

    #[test]
    fn mismatches_rejected() {
        assert!(ScenarioConfig::from_toml("algorithm = \"envelope-wr-bf\"").is_err());
        assert!(
            ScenarioConfig::from_toml("algorithm = \"sh-wls\"\nsampler = \"envelope\"").is_err()
        );
        assert!(ScenarioConfig::from_toml("desired_deg = [95]").is_err());
        assert!(ScenarioConfig::from_toml("desired_deg = []").is_err());
        assert!(ScenarioConfig::from_toml("modes = 200").is_err());
        assert!(ScenarioConfig::from_toml(
            "algorithm = \"sa\"\nsampler = \"envelope\"\nmodes = 200"
        )
        .is_ok());
    }

    #[test]
    fn sweep_grid_checked() {
        let mut c = ScenarioConfig::default();
        c.sweep.modes = vec![120];
        c.sweep.elements = vec![100];
        assert!(c.validate_sweep().is_err());
        c.sweep.elements = vec![];
        assert!(c.validate_sweep().is_err());
        c.sweep.elements = vec![100];
        c.sweep.modes = vec![10];
        assert!(c.validate_sweep().is_ok());
    }
}
