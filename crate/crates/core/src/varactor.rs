//! Small-signal varactor data: bias voltage to equivalent capacitance and
//! series resistance, with piecewise-linear interpolation between rows.

use std::str::FromStr;

use crate::error::{Error, Result};

/// Bundled SMV1231 table, 1 V steps over the reverse-bias range.
pub const SMV1231_CSV: &str = include_str!("../data/smv1231.csv");

/// Package series inductance of the SMV1231, in henries.
pub const SMV1231_SERIES_INDUCTANCE: f64 = 0.45e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow {
    pub voltage: f64,
    /// Capacitance in picofarads.
    pub capacitance_pf: f64,
    /// Resistance in ohms.
    pub resistance: f64,
}

/// Measured varactor characteristics indexed by bias voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct VaractorBiasTable {
    rows: Vec<BiasRow>,
    /// Package inductance in henries.
    pub series_inductance: f64,
}

impl VaractorBiasTable {
    pub fn new(rows: Vec<BiasRow>, series_inductance: f64) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Table("at least two rows are required".into()));
        }
        for pair in rows.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.voltage <= a.voltage {
                return Err(Error::Table(format!(
                    "bias voltages must be strictly increasing ({} then {})",
                    a.voltage, b.voltage
                )));
            }
            if b.capacitance_pf <= a.capacitance_pf || b.resistance <= a.resistance {
                return Err(Error::Table(format!(
                    "capacitance and resistance must increase with bias (rows at {} and {})",
                    a.voltage, b.voltage
                )));
            }
        }
        if rows
            .iter()
            .any(|r| r.capacitance_pf <= 0.0 || r.resistance < 0.0)
        {
            return Err(Error::Table(
                "capacitance must be positive and resistance non-negative".into(),
            ));
        }
        if !(series_inductance > 0.0) {
            return Err(Error::Table("series inductance must be positive".into()));
        }
        Ok(Self {
            rows,
            series_inductance,
        })
    }

    /// The SMV1231-040LF data shipped with the crate.
    pub fn smv1231() -> Self {
        Self::from_csv(SMV1231_CSV, SMV1231_SERIES_INDUCTANCE)
            .expect("bundled varactor table is valid")
    }

    /// Parses `V_volts, Cv_pF, Rv_ohm` text with a header row.
    pub fn from_csv(text: &str, series_inductance: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Table(e.to_string()))?
            .clone();
        if headers.len() != 3 {
            return Err(Error::Table(format!(
                "expected 3 columns, found {}",
                headers.len()
            )));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Table(e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                f64::from_str(&record[i]).map_err(|_| {
                    Error::Table(format!("row {}: bad number {:?}", line + 1, &record[i]))
                })
            };
            rows.push(BiasRow {
                voltage: field(0)?,
                capacitance_pf: field(1)?,
                resistance: field(2)?,
            });
        }
        Self::new(rows, series_inductance)
    }

    pub fn rows(&self) -> &[BiasRow] {
        &self.rows
    }

    pub fn min_voltage(&self) -> f64 {
        self.rows[0].voltage
    }

    pub fn max_voltage(&self) -> f64 {
        self.rows[self.rows.len() - 1].voltage
    }

    pub fn contains(&self, voltage: f64) -> bool {
        voltage >= self.min_voltage() && voltage <= self.max_voltage()
    }

    /// Returns `(C_v in pF, R_v in ohms)` at `voltage`.
    pub fn params(&self, voltage: f64) -> Result<(f64, f64)> {
        if !self.contains(voltage) {
            return Err(Error::VoltageOutOfRange {
                voltage,
                min: self.min_voltage(),
                max: self.max_voltage(),
            });
        }
        // first row with voltage >= v
        let hi = self.rows.partition_point(|r| r.voltage < voltage);
        let upper = self.rows[hi];
        if upper.voltage == voltage || hi == 0 {
            return Ok((upper.capacitance_pf, upper.resistance));
        }
        let lower = self.rows[hi - 1];
        let t = (voltage - lower.voltage) / (upper.voltage - lower.voltage);
        let lerp = |a: f64, b: f64| a + t * (b - a);
        Ok((
            lerp(lower.capacitance_pf, upper.capacitance_pf),
            lerp(lower.resistance, upper.resistance),
        ))
    }
}

/// Standalone form of [`VaractorBiasTable::params`].
pub fn varactor_params(table: &VaractorBiasTable, voltage: f64) -> Result<(f64, f64)> {
    table.params(voltage)
}
