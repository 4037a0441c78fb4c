//! Binary checkpoints and the on-disk trajectory of a run.
//!
//! Layout: 8-byte magic `ALTCKPT1`, little-endian `u32` metadata length, UTF-8
//! JSON metadata, then the parameters as little-endian `f64`.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::ParameterVector;
use crate::scheduler::Phase;

pub const MAGIC: &[u8; 8] = b"ALTCKPT1";
const HEADER: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub global_step: u64,
    pub cycle: u32,
    pub phase: Phase,
    pub dev_bleu: f64,
    pub config_hash: String,
    pub param_count: usize,
    pub created_unix: u64,
}

impl CheckpointMeta {
    pub fn new(global_step: u64, cycle: u32, phase: Phase, dev_bleu: f64, config_hash: &str, param_count: usize) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            global_step,
            cycle,
            phase,
            dev_bleu,
            config_hash: config_hash.to_string(),
            param_count,
            created_unix,
        }
    }

    /// Canonical trajectory file name.
    pub fn file_name(&self) -> String {
        format!("ckpt_{}_{}.bin", self.global_step, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterVector,
    pub meta: CheckpointMeta,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if ckpt.meta.param_count != ckpt.params.len() {
        return Err(Error::LengthMismatch {
            expected: ckpt.meta.param_count,
            got: ckpt.params.len(),
        });
    }
    let meta = serde_json::to_vec(&ckpt.meta)?;
    let mut buf = Vec::with_capacity(HEADER + meta.len() + 8 * ckpt.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    for x in ckpt.params.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    Ok(buf)
}

fn parse_header(bytes: &[u8]) -> Result<(CheckpointMeta, usize)> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) && !bytes.is_empty() {
            corrupt("truncated header")
        } else {
            Error::NotACheckpoint
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::NotACheckpoint);
    }
    if bytes.len() < HEADER {
        return Err(corrupt("truncated header"));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let meta_end = HEADER
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated metadata"))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes[HEADER..meta_end]).map_err(|e| corrupt(format!("bad metadata: {e}")))?;
    if !(0.0..=100.0).contains(&meta.dev_bleu) {
        return Err(corrupt("dev BLEU outside [0, 100]"));
    }
    Ok((meta, meta_end))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let (meta, start) = parse_header(bytes)?;
    let body = &bytes[start..];
    if body.len() != 8 * meta.param_count {
        return Err(corrupt(format!(
            "expected {} parameters, found {} bytes",
            meta.param_count,
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteParameters);
    }
    Ok(Checkpoint {
        params: ParameterVector::from_vec(params),
        meta,
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode(ckpt)?;
    let tmp = path.with_extension("bin.tmp");
    {
        let mut f = File::create(&tmp).with_path(&tmp)?;
        f.write_all(&bytes).with_path(&tmp)?;
        f.sync_all().with_path(&tmp)?;
    }
    fs::rename(&tmp, path).with_path(path)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_path(path)?;
    decode(&bytes)
}

/// Reads only the header and metadata of a checkpoint file.
pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    let mut f = File::open(path).with_path(path)?;
    let mut head = [0u8; HEADER];
    let got = read_up_to(&mut f, &mut head).with_path(path)?;
    if got < HEADER {
        return parse_header(&head[..got]).map(|(m, _)| m);
    }
    let meta_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut buf = head.to_vec();
    buf.resize(HEADER + meta_len, 0);
    let got = read_up_to(&mut f, &mut buf[HEADER..]).with_path(path)?;
    buf.truncate(HEADER + got);
    parse_header(&buf).map(|(m, _)| m)
}

fn read_up_to(f: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match f.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub path: PathBuf,
    pub meta: CheckpointMeta,
}

impl TrajectoryEntry {
    pub fn load(&self) -> Result<Checkpoint> {
        load(&self.path)
    }
}

/// All `ckpt_*.bin` files of a run directory, ordered by global step.
pub fn list_trajectory(run_dir: &Path) -> Result<Vec<TrajectoryEntry>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(run_dir).with_path(run_dir)? {
        let path = entry.with_path(run_dir)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("ckpt_") && name.ends_with(".bin") {
            let meta = load_meta(&path)?;
            out.push(TrajectoryEntry { path, meta });
        }
    }
    out.sort_by_key(|e| e.meta.global_step);
    Ok(out)
}

/// Fails unless every checkpoint shares one model layout.
pub fn ensure_same_layout<'a>(metas: impl IntoIterator<Item = &'a CheckpointMeta>) -> Result<()> {
    let mut first: Option<&CheckpointMeta> = None;
    for m in metas {
        match first {
            None => first = Some(m),
            Some(f) if f.config_hash != m.config_hash || f.param_count != m.param_count => {
                return Err(Error::ConfigMismatch(f.config_hash.clone(), m.config_hash.clone()));
            }
            _ => {}
        }
    }
    Ok(())
}
