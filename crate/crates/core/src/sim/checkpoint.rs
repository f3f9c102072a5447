//! Versioned binary checkpoints with a JSON sidecar manifest.
//!
//! Layout: 8-byte magic, u32 version, u64 JSON length, JSON metadata
//! (including the diagnostics history), then one raw little-endian f64 block
//! per field in the order listed by `meta.fields`. The sidecar `<path>.json`
//! repeats the metadata plus per-field byte offsets so the container can be
//! inspected without parsing the binary.

use crate::error::{Error, Result};
use crate::sim::diagnostics::Diagnostics;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"PCRYSCK\0";
pub const VERSION: u32 = 1;

/// Field block order of version 1.
pub const FIELD_NAMES: [&str; 15] = [
    "eps",
    "eps_at_last_solve",
    "c_co3",
    "c_ca",
    "c_precip",
    "c_crystal",
    "u_x",
    "u_y",
    "u_z",
    "omega_x",
    "omega_y",
    "omega_z",
    "psi_x",
    "psi_y",
    "psi_z",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub config_hash: u64,
    pub time: f64,
    pub step: usize,
    pub dims: [usize; 3],
    pub h: f64,
    pub eps0: f64,
    pub a_s: f64,
    pub u_bar: [f64; 3],
    /// Reference permeabilities at t = 0 (full, upstream); NaN when the mean
    /// flow is zero.
    pub kappa0: f64,
    pub kappa0_upstream: f64,
    pub flow_iterations: usize,
    pub flow_residual: f64,
    /// Budget accumulators carried across a resume so interrupted and
    /// uninterrupted runs emit identical diagnostics.
    pub acc_inflow: f64,
    pub acc_clipped: f64,
    pub acc_refunded: f64,
    pub acc_clog_cells: usize,
    pub chain_at_last_sample: f64,
    pub fields: Vec<String>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// One block per `meta.fields` entry, each dims[0]*dims[1]*dims[2] long.
    pub blocks: Vec<Vec<f64>>,
}

pub fn save(path: &Path, meta: &CheckpointMeta, blocks: &[&[f64]]) -> Result<()> {
    if meta.fields.len() != blocks.len() {
        return Err(Error::Parameter(format!(
            "checkpoint lists {} fields but {} blocks were supplied",
            meta.fields.len(),
            blocks.len()
        )));
    }
    let json = serde_json::to_vec(meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for block in blocks {
        for v in *block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;

    // sidecar manifest
    let header = MAGIC.len() + 4 + 8 + json.len();
    let n = meta.dims[0] * meta.dims[1] * meta.dims[2];
    let offsets: Vec<serde_json::Value> = meta
        .fields
        .iter()
        .enumerate()
        .map(|(i, name)| {
            serde_json::json!({
                "name": name,
                "offset": header + i * n * 8,
                "bytes": n * 8,
            })
        })
        .collect();
    let mut manifest = serde_json::to_value(meta).map_err(|e| Error::Format(e.to_string()))?;
    manifest["field_blocks"] = serde_json::Value::Array(offsets);
    let sidecar = path.with_extension("json");
    let mut sw = BufWriter::new(File::create(sidecar)?);
    serde_json::to_writer_pretty(&mut sw, &manifest).map_err(|e| Error::Format(e.to_string()))?;
    sw.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version} unsupported (expected {VERSION})"
        )));
    }
    let mut l8 = [0u8; 8];
    r.read_exact(&mut l8)?;
    let json_len = u64::from_le_bytes(l8) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    let n = meta.dims[0] * meta.dims[1] * meta.dims[2];
    let mut blocks = Vec::with_capacity(meta.fields.len());
    let mut buf = vec![0u8; n * 8];
    for name in &meta.fields {
        r.read_exact(&mut buf).map_err(|_| {
            Error::Format(format!("checkpoint truncated in field block {name:?}"))
        })?;
        let block: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blocks.push(block);
    }
    Ok(Checkpoint { meta, blocks })
}

/// Read only the metadata (works on the sidecar too, for history-only use).
pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()));
    }
    Ok(load(path)?.meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(fields: Vec<String>) -> CheckpointMeta {
        CheckpointMeta {
            version: VERSION,
            config_hash: 42,
            time: 1.5,
            step: 3,
            dims: [4, 4, 4],
            h: 0.5,
            eps0: 0.05,
            a_s: 8300.0,
            u_bar: [1e-3, 0.0, 0.0],
            kappa0: 2e-11,
            kappa0_upstream: 2e-11,
            flow_iterations: 10,
            flow_residual: 1e-7,
            acc_inflow: 0.0,
            acc_clipped: 0.0,
            acc_refunded: 0.0,
            acc_clog_cells: 0,
            chain_at_last_sample: 0.0,
            fields,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        let a: Vec<f64> = (0..64).map(|i| (i as f64).sin() * 1e-17).collect();
        let b: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let m = meta(vec!["a".into(), "b".into()]);
        save(&path, &m, &[&a, &b]).unwrap();
        let ck = load(&path).unwrap();
        assert_eq!(ck.blocks[0], a);
        assert_eq!(ck.blocks[1], b);
        assert_eq!(ck.meta.config_hash, 42);
        assert_eq!(ck.meta.time, 1.5);
        // sidecar parses as metadata too
        let side = load_meta(&path.with_extension("json")).unwrap();
        assert_eq!(side.step, 3);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_block_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        let a: Vec<f64> = vec![1.0; 64];
        let m = meta(vec!["a".into(), "missing".into()]);
        // claim two blocks, write one
        save(&path, &m, &[&a, &a]).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..(len as usize - 64 * 8)]).unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
    }
}
