//! Chain checkpoints: a one-line UTF-8 JSON header, a newline, then the
//! field as little-endian `f64` values with real and imaginary parts
//! interleaved.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ComplexField;
use crate::sampler::{Chain, ChainConfig, ChainState, RngPosition};

pub const CHECKPOINT_VERSION: &str = "phi4lab-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: String,
    pub config: ChainConfig,
    pub config_hash: String,
    pub step: u64,
    pub seed_lineage: RngPosition,
    pub accepted: u64,
    pub accepted_after_burn_in: u64,
    pub step_size: f64,
    /// Number of `f64` values in the payload.
    pub payload_len: usize,
}

pub fn encode(chain: &Chain) -> Result<Vec<u8>> {
    let cfg = chain.config();
    let st = chain.state();
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION.to_string(),
        config: cfg.clone(),
        config_hash: super::hash_json(cfg)?,
        step: st.step_index,
        seed_lineage: st.rng_position(cfg.seed),
        accepted: st.accepted,
        accepted_after_burn_in: st.accepted_after_burn_in,
        step_size: st.step_size,
        payload_len: 2 * st.field.values().len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for z in st.field.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn write(chain: &Chain, path: &Path) -> Result<()> {
    let bytes = encode(chain)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Parse a checkpoint. Version is checked before anything else.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, ComplexField)> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::TruncatedPayload("no header terminator".into()))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::TruncatedPayload(format!("unreadable header: {e}")))?;
    let found = raw.get("format_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if found != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: found.to_string(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let header: CheckpointHeader =
        serde_json::from_value(raw).map_err(|e| Error::Schema(format!("checkpoint header: {e}")))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != 8 * header.payload_len {
        return Err(Error::TruncatedPayload(format!(
            "payload has {} bytes, header announces {} values ({} bytes)",
            payload.len(),
            header.payload_len,
            8 * header.payload_len
        )));
    }
    if header.payload_len != 2 * header.config.grid.n() {
        return Err(Error::TruncatedPayload(format!(
            "payload length {} does not match the grid ({} points)",
            header.payload_len,
            header.config.grid.n()
        )));
    }
    if super::hash_json(&header.config)? != header.config_hash {
        return Err(Error::TruncatedPayload("config hash does not match the embedded config".into()));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect();
    let v: Vec<Complex64> = vals.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    let field = ComplexField::new(header.config.grid, v)
        .map_err(|e| Error::TruncatedPayload(format!("payload values: {e}")))?;
    Ok((header, field))
}

pub fn read(path: &Path) -> Result<(CheckpointHeader, ComplexField)> {
    decode(&std::fs::read(path)?)
}

/// Rebuild the chain exactly as it was when the checkpoint was written.
pub fn restore(header: &CheckpointHeader, field: ComplexField) -> Result<Chain> {
    let state = ChainState::restore(
        field,
        header.step,
        header.accepted,
        header.accepted_after_burn_in,
        header.step_size,
        header.seed_lineage,
    );
    Chain::from_state(header.config.clone(), state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Chain {
        let mut cfg = ChainConfig::hmc(32, 2.0, 1.0, 5).unwrap();
        cfg.n_steps = 200;
        cfg.burn_in = 50;
        Chain::new(cfg).unwrap()
    }

    #[test]
    fn resume_is_bit_identical() {
        let mut a = chain();
        a.run_until(200, |_| {}).unwrap();
        let mut b = chain();
        b.run_until(90, |_| {}).unwrap();
        let (h, f) = decode(&encode(&b).unwrap()).unwrap();
        let mut c = restore(&h, f).unwrap();
        c.run_until(200, |_| {}).unwrap();
        assert_eq!(a.state().field.values(), c.state().field.values());
        assert_eq!(a.state().step_size.to_bits(), c.state().step_size.to_bits());
    }

    #[test]
    fn truncated_and_wrong_version() {
        let bytes = encode(&chain()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode(cut), Err(Error::TruncatedPayload(_))));
        let s = String::from_utf8_lossy(&bytes[..bytes.iter().position(|b| *b == b'\n').unwrap()]).to_string();
        let mut bad = s.replace(CHECKPOINT_VERSION, "phi4lab-checkpoint/0").into_bytes();
        bad.extend_from_slice(&bytes[s.len()..]);
        assert!(matches!(decode(&bad), Err(Error::VersionMismatch { .. })));
    }
}
