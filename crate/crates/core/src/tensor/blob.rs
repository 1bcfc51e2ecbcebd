//! `TGQT` tensor blob format and checkpoint manifests.
//!
//! Blob layout: magic `TGQT`, u8 version (1), u32 rank, u32 dims[rank], then
//! the row-major payload as little-endian f32. Checkpoints are a text
//! manifest mapping parameter names to blob files in a `params/` directory.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::params::ParamSet;
use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TGQT";
const VERSION: u8 = 1;

pub fn write_blob(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * t.numel());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_blob(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_blob(&bytes).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_blob(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 9 || &bytes[0..4] != MAGIC {
        return Err(Error::Parse("missing TGQT magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Parse(format!("unsupported blob version {}", bytes[4])));
    }
    let rank = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let header = 9 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Parse("truncated blob header".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 9 + 4 * i;
        shape.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
    }
    let numel: usize = shape.iter().product();
    if bytes.len() != header + 4 * numel {
        return Err(Error::Parse(format!(
            "payload size mismatch: shape {shape:?} wants {} bytes, file has {}",
            4 * numel,
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(shape, data)
}

/// Checkpoint = `checkpoint.txt` manifest + one blob per parameter.
pub struct Checkpoint;

impl Checkpoint {
    /// Write all parameters of `set` under `dir` (created if absent).
    pub fn save(dir: &Path, set: &ParamSet) -> Result<()> {
        let params_dir = dir.join("params");
        fs::create_dir_all(&params_dir).map_err(|e| Error::io(params_dir.display().to_string(), e))?;
        let mut manifest = String::new();
        for name in set.names() {
            let id = set.lookup(&name).expect("listed name");
            let file = format!("params/{name}.tgqt");
            write_blob(&dir.join(&file), set.value(id))?;
            manifest.push_str(&format!("{name}\t{file}\n"));
        }
        let path = dir.join("checkpoint.txt");
        fs::write(&path, manifest).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Load blob values into an already-constructed `set`. Every manifest
    /// entry must name a known parameter and every parameter must appear.
    pub fn load(dir: &Path, set: &mut ParamSet) -> Result<()> {
        let path = dir.join("checkpoint.txt");
        let manifest =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut seen = 0usize;
        for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
            let (name, file) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("bad manifest line: {line}")))?;
            let tensor = read_blob(&dir.join(file))?;
            // blobs may round-trip 2-D shapes as written
            set.set_value(name, tensor)?;
            seen += 1;
        }
        if seen != set.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {seen} parameters, model expects {}",
                set.len()
            )));
        }
        Ok(())
    }

    /// Blob paths referenced by a checkpoint directory.
    pub fn blob_paths(dir: &Path) -> Result<Vec<PathBuf>> {
        let path = dir.join("checkpoint.txt");
        let manifest =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(manifest
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .map(|(_, file)| dir.join(file))
            .collect())
    }
}
