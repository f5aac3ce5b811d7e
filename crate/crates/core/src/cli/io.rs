use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::biasline::{BiasVoltages, ModeWeights};
use crate::error::{Error, Result};

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn parse_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("{what}: {e}"))
}

fn read_rows<T: serde::de::DeserializeOwned>(
    what: &str,
    text: &str,
    header: &[&str],
) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found: Vec<String> = r
        .headers()
        .map_err(|e| parse_err(what, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(parse_err(
            what,
            format!("expected columns {header:?}, found {found:?}"),
        ));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| parse_err(what, e)))
        .collect()
}

pub const PATTERN_HEADER: [&str; 2] = ["theta_deg", "gain_dB"];
pub const VOLTAGES_HEADER: [&str; 2] = ["m", "V_volts"];
pub const MODEL_HEADER: [&str; 4] = ["f_GHz", "V_volts", "mag", "phase_deg"];
pub const SWEEP_HEADER: [&str; 6] = ["M", "N", "selection", "mean_slnr_dB", "std_dB", "trials"];

pub fn pattern_csv(rows: &[(f64, f64)]) -> Vec<u8> {
    csv_bytes(&PATTERN_HEADER, rows.iter().copied())
}

pub fn read_pattern_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    read_rows("pattern csv", text, &PATTERN_HEADER)
}

pub fn voltages_csv(v: &BiasVoltages) -> Vec<u8> {
    csv_bytes(&VOLTAGES_HEADER, v.values().iter().enumerate())
}

pub fn read_voltages_csv(text: &str) -> Result<BiasVoltages> {
    let rows: Vec<(usize, f64)> = read_rows("voltages csv", text, &VOLTAGES_HEADER)?;
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(parse_err(
            "voltages csv",
            "element indices must run 0, 1, 2, ...",
        ));
    }
    Ok(BiasVoltages(rows.into_iter().map(|r| r.1).collect()))
}

pub type ModelRow = (f64, f64, f64, f64);

pub fn model_csv(rows: &[ModelRow]) -> Vec<u8> {
    csv_bytes(&MODEL_HEADER, rows.iter().copied())
}

pub fn read_model_csv(text: &str) -> Result<Vec<ModelRow>> {
    read_rows("model csv", text, &MODEL_HEADER)
}

pub type SweepCsvRow = (usize, usize, String, f64, f64, usize);

pub fn sweep_csv(rows: &[SweepCsvRow]) -> Vec<u8> {
    csv_bytes(&SWEEP_HEADER, rows.iter().cloned())
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepCsvRow>> {
    read_rows("sweep csv", text, &SWEEP_HEADER)
}

/// `W0 = ...` followed by `W<n> = ...` per harmonic, one per line.
pub fn weights_text(w: &ModeWeights, modes: &[u32]) -> String {
    let mut s = format!("W0 = {}\n", w.dc);
    for (n, a) in modes.iter().zip(&w.amplitudes) {
        s.push_str(&format!("W{n} = {a}\n"));
    }
    s
}

/// Parses a weights file back into the DC level and `(harmonic, amplitude)` pairs.
pub fn read_weights_text(text: &str) -> Result<(f64, Vec<(u32, f64)>)> {
    let mut dc = None;
    let mut modes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = || parse_err("weights file", format!("line {}: {line:?}", i + 1));
        let (key, val) = line.split_once('=').ok_or_else(err)?;
        let idx: u32 = key
            .trim()
            .strip_prefix('W')
            .ok_or_else(err)?
            .parse()
            .map_err(|_| err())?;
        let val: f64 = val.trim().parse().map_err(|_| err())?;
        if idx == 0 {
            dc = Some(val);
        } else {
            modes.push((idx, val));
        }
    }
    Ok((
        dc.ok_or_else(|| parse_err("weights file", "missing W0"))?,
        modes,
    ))
}
