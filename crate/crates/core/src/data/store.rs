//! Cycle store: `"TCNVCYC1" | count u64 | dims u64 | count·dims f64 | JSON`,
//! little-endian, where the JSON trailer lists each cycle's metadata.

use std::path::Path;

use crate::{Error, Result};

use super::CycleRecord;

const MAGIC: &[u8; 8] = b"TCNVCYC1";

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "cycle store",
        reason: reason.into(),
    }
}

pub fn write_cycle_store(path: &Path, cycles: &[CycleRecord]) -> Result<()> {
    let dims = cycles.first().map_or(0, |c| c.samples.len());
    if cycles.iter().any(|c| c.samples.len() != dims) {
        return Err(Error::arg("cycles", "cycles have different lengths"));
    }
    let mut out = Vec::with_capacity(24 + cycles.len() * dims * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(cycles.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dims as u64).to_le_bytes());
    for c in cycles {
        for v in &c.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(serde_json::to_string(cycles)?.as_bytes());
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cycle_store(path: &Path) -> Result<Vec<CycleRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let (count, dims) = (word(8) as usize, word(16) as usize);
    let body = count
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n <= bytes.len() - 24)
        .ok_or_else(|| bad("truncated sample block"))?;
    let mut cycles: Vec<CycleRecord> = serde_json::from_slice(&bytes[24 + body..])?;
    if cycles.len() != count {
        return Err(bad(format!("header says {count} cycles, trailer lists {}", cycles.len())));
    }
    let mut values = bytes[24..24 + body].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for c in &mut cycles {
        c.samples = values.by_ref().take(dims).collect();
        if c.valid_len > dims || c.samples[c.valid_len..].iter().any(|&v| v != 0.0) {
            return Err(bad(format!("cycle of {} has samples past valid_len", c.recording_id)));
        }
    }
    Ok(cycles)
}
