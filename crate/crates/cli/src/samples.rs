//! Sample matrices on disk.
//!
//! Binary layout, all little-endian: the 8 bytes `WBSAMPLE`, then `u64`
//! version (1), `u64` rows `n`, `u64` columns `d`, then `n * d` `f64` values
//! in row-major order. CSV files hold one sample per row, with an optional
//! header row.

use std::fs;
use std::path::Path;

use wassbound::wasserstein::EmpiricalMeasure;

use crate::error::{data_err, CliError, Result};

pub const MAGIC: &[u8; 8] = b"WBSAMPLE";
pub const VERSION: u64 = 1;
const HEADER_LEN: usize = 32;

pub fn encode_binary(m: &EmpiricalMeasure) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n() as u64).to_le_bytes());
    out.extend_from_slice(&(m.d() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmpiricalMeasure> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(CliError::Data("not a sample file (bad magic bytes)".into()));
    }
    let version = read_u64(bytes, 8);
    if version != VERSION {
        return Err(CliError::Data(format!("unsupported sample file version {version}")));
    }
    let n = read_u64(bytes, 16) as usize;
    let d = read_u64(bytes, 24) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(HEADER_LEN))
        .ok_or_else(|| CliError::Data("sample file dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(CliError::Data(format!(
            "sample file holds {} bytes, expected {expected} for {n} x {d}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmpiricalMeasure::new(n, d, values).map_err(data_err)
}

pub fn parse_csv(text: &str) -> Result<EmpiricalMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("CSV row {}: {e}", k + 1)))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(CliError::Data(format!("CSV row {}: {e}", k + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data("CSV file holds no samples".into()));
    }
    EmpiricalMeasure::from_rows(&rows).map_err(data_err)
}

pub fn format_csv(m: &EmpiricalMeasure) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..m.d()).map(|k| format!("x{k}")).collect();
    writer.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
    for i in 0..m.n() {
        writer
            .write_record(m.point(i).iter().map(|v| v.to_string()))
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Reads a binary sample file, or a CSV file when the magic bytes are absent.
pub fn read_samples(path: &Path) -> Result<EmpiricalMeasure> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{} is neither a sample file nor UTF-8 CSV", path.display())))?;
        parse_csv(&text)
    }
}

pub fn parse_csv_file(path: &Path) -> Result<EmpiricalMeasure> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text)
}

pub fn write_binary(path: &Path, m: &EmpiricalMeasure) -> Result<()> {
    fs::write(path, encode_binary(m)).map_err(|e| CliError::io(path, e))
}

pub fn write_csv(path: &Path, m: &EmpiricalMeasure) -> Result<()> {
    fs::write(path, format_csv(m)?).map_err(|e| CliError::io(path, e))
}
