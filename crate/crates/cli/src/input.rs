//! CSV ingestion: comma-delimited, period decimals, numeric columns only.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qdrisk::Dataset;
use sha2::{Digest, Sha256};

/// Parsed observations plus the SHA-256 of the raw file bytes.
pub struct Input {
    pub data: Dataset,
    pub sha256: String,
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_csv(path: &Path, header: bool) -> Result<Input> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .read_to_end(&mut bytes)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let data = parse_csv(&bytes, header)?;
    Ok(Input { data, sha256: hex_digest(&bytes) })
}

/// Row and column numbers in errors are 1-based and count the header line.
pub fn parse_csv(bytes: &[u8], header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut dim = None;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1 + usize::from(header);
        let record = record.with_context(|| format!("malformed CSV at row {line}"))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                bail!("row {line}: expected {d} columns, found {}", record.len())
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                anyhow::anyhow!("row {line}, column {}: `{field}` is not a number", j + 1)
            })?;
            if !v.is_finite() {
                bail!("row {line}, column {}: value `{field}` is not finite", j + 1);
            }
            values.push(v);
        }
    }
    let Some(dim) = dim else {
        bail!("no observations in input");
    };
    Ok(Dataset::new(dim, values)?)
}
