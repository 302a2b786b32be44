//! Binary checkpoints: magic, version, config as JSON, seed, epoch, then
//! every named tensor as little-endian `f64`.

use super::config::NetworkConfig;
use super::params::{Layout, NetworkParams};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f64>,
    pub epoch: u32,
}

fn read_u16(r: &mut impl Read) -> io::Result<u16> {
    let mut b = [0; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let p = &ck.params;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&p.config)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    w.write_all(&p.seed.to_le_bytes())?;
    w.write_all(&ck.epoch.to_le_bytes())?;
    let slots = p.layout.named_slots();
    w.write_all(&(slots.len() as u32).to_le_bytes())?;
    for (name, s) in slots {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(s.rows as u32).to_le_bytes())?;
        w.write_all(&(s.cols as u32).to_le_bytes())?;
        for v in &p.values[s.weight..s.end()] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut cfg = vec![0; read_u32(r)? as usize];
    r.read_exact(&mut cfg)?;
    let config: NetworkConfig = serde_json::from_slice(&cfg)?;
    let seed = read_u64(r)?;
    let epoch = read_u32(r)?;
    let layout = Layout::new(&config);
    let expected = layout.named_slots();
    let count = read_u32(r)? as usize;
    if count != expected.len() {
        return Err(CheckpointError::Tensor {
            name: "*".into(),
            reason: format!("{count} tensors, config needs {}", expected.len()),
        });
    }
    let mut values = vec![0.0; layout.total];
    for (name, s) in expected {
        let mut got = vec![0; read_u16(r)? as usize];
        r.read_exact(&mut got)?;
        let got = String::from_utf8_lossy(&got).into_owned();
        let (rows, cols) = (read_u32(r)? as usize, read_u32(r)? as usize);
        if got != name || rows != s.rows || cols != s.cols {
            return Err(CheckpointError::Tensor {
                name,
                reason: format!("found {got} {rows}x{cols}, expected {}x{}", s.rows, s.cols),
            });
        }
        for v in &mut values[s.weight..s.end()] {
            *v = f64::from_bits(read_u64(r)?);
        }
    }
    Ok(Checkpoint { params: NetworkParams { config, seed, layout, values }, epoch })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, ck)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    read_checkpoint(&mut io::BufReader::new(std::fs::File::open(path)?))
}
