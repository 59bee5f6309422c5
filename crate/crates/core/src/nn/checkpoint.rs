//! Checkpoint files: one JSON header line, then every parameter as a
//! little-endian f64, module by module in declaration order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpConfig, Parameterized};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleArch {
    pub name: String,
    pub config: MlpConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub architecture: Vec<ModuleArch>,
    pub seed: u64,
    pub config_hash: String,
    /// Caller-defined metadata (training config, iteration, ...).
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// Flattened parameters per module.
    pub values: Vec<Vec<f64>>,
}

pub fn write_checkpoint<M: Parameterized + ?Sized>(
    path: impl AsRef<Path>,
    model: &M,
    seed: u64,
    config_hash: &str,
    extra: serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        format_version: 1,
        architecture: model
            .modules()
            .iter()
            .map(|m| ModuleArch {
                name: m.name().to_string(),
                config: m.config().clone(),
            })
            .collect(),
        seed,
        config_hash: config_hash.to_string(),
        extra,
    };
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(io)?;
    for m in model.modules() {
        for p in m.params() {
            for x in &p.data {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse {
        line: 1,
        message: format!("checkpoint header: {e}"),
    })?;
    let mut values = Vec::with_capacity(header.architecture.len());
    let mut buf = [0u8; 8];
    for arch in &header.architecture {
        let n: usize = arch.config.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|_| {
                Error::Integrity(format!("checkpoint truncated inside module `{}`", arch.name))
            })?;
            v.push(f64::from_le_bytes(buf));
        }
        values.push(v);
    }
    if r.read(&mut buf).map_err(io)? != 0 {
        return Err(Error::Integrity("trailing bytes after the last parameter block".into()));
    }
    Ok(Checkpoint { header, values })
}

impl Checkpoint {
    /// Typed field of the caller-defined header metadata.
    pub fn extra<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .header
            .extra
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Integrity(format!("checkpoint header lacks `{key}`")))?;
        serde_json::from_value(v).map_err(|e| Error::Integrity(format!("checkpoint header field `{key}`: {e}")))
    }

    /// Copies stored parameters into a model of identical architecture.
    pub fn load_into<M: Parameterized + ?Sized>(&self, model: &mut M) -> Result<()> {
        let mut modules = model.modules_mut();
        if modules.len() != self.values.len() {
            return Err(Error::Integrity(format!(
                "checkpoint holds {} modules, model has {}",
                self.values.len(),
                modules.len()
            )));
        }
        for (m, (arch, vals)) in modules.iter_mut().zip(self.header.architecture.iter().zip(&self.values)) {
            if m.config() != &arch.config {
                return Err(Error::Integrity(format!(
                    "architecture of `{}` differs from the checkpoint",
                    arch.name
                )));
            }
            let mut off = 0;
            for p in m.params_mut() {
                let n = p.len();
                p.data.copy_from_slice(&vals[off..off + n]);
                off += n;
            }
        }
        Ok(())
    }
}
