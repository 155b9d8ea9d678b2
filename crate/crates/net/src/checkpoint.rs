//! Checkpoint files: magic `BSTC`, a format version, a text manifest
//! (config, training step, parameter names and shapes), then the parameter
//! tensors as concatenated STNS records in manifest order, followed by the
//! loss history as one f64 record.

use std::fs;
use std::path::Path;

use vsci_tensor::stns::{self, Payload, Record};
use vsci_tensor::{Dtype, Scalar, Tensor};

use crate::config::{BranchSet, NetworkConfig};
use crate::error::{NetError, Result};
use crate::network::BstNet;
use crate::params::{param_layout, NetParams};

pub const MAGIC: &[u8; 4] = b"BSTC";
pub const VERSION: u32 = 1;

/// A trained (or training) network with its step counter and loss trace.
#[derive(Debug, Clone)]
pub struct Checkpoint<F: Scalar> {
    pub net: BstNet<F>,
    pub step: u64,
    pub loss_history: Vec<f64>,
}

pub fn save<F: Scalar>(ck: &Checkpoint<F>, path: &Path) -> Result<()> {
    let cfg = &ck.net.config;
    let mut manifest = String::new();
    manifest.push_str(&format!("dtype={}\n", F::DTYPE.name()));
    manifest.push_str(&format!("step={}\n", ck.step));
    manifest.push_str(&format!("config.t={}\n", cfg.t));
    manifest.push_str(&format!("config.h={}\n", cfg.h));
    manifest.push_str(&format!("config.w={}\n", cfg.w));
    manifest.push_str(&format!("config.channels={}\n", cfg.channels));
    manifest.push_str(&format!("config.blocks={}\n", cfg.blocks));
    manifest.push_str(&format!("config.window={}\n", cfg.window));
    manifest.push_str(&format!("config.grid={}\n", cfg.grid));
    manifest.push_str(&format!("config.heads={}\n", cfg.heads));
    manifest.push_str(&format!("config.leaky_slope={}\n", cfg.leaky_slope));
    manifest.push_str(&format!("config.ffn_expansion={}\n", cfg.ffn_expansion));
    manifest.push_str(&format!("config.branches={}\n", cfg.branches));
    for (name, t) in ck.net.params.named() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("tensor {} {}\n", name, dims.join(",")));
    }
    manifest.push_str(&format!("loss_history {}\n", ck.loss_history.len()));

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    bytes.extend_from_slice(manifest.as_bytes());
    for (_, t) in ck.net.params.named() {
        let payload = match F::DTYPE {
            Dtype::F32 => Payload::F32(t.data().iter().map(|v| v.as_f64() as f32).collect()),
            _ => Payload::F64(t.data().iter().map(|v| v.as_f64()).collect()),
        };
        stns::write_record(
            &mut bytes,
            &Record {
                shape: t.shape().to_vec(),
                payload,
            },
        )?;
    }
    stns::write_record(
        &mut bytes,
        &Record {
            shape: vec![ck.loss_history.len().max(1)],
            payload: Payload::F64(if ck.loss_history.is_empty() {
                vec![0.0]
            } else {
                ck.loss_history.clone()
            }),
        },
    )?;
    stns::atomic_write(path, &bytes)?;
    Ok(())
}

pub fn load<F: Scalar>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = fs::read(path)?;
    let fail = |msg: String| NetError::Checkpoint(msg);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported checkpoint version {version}")));
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + manifest_len {
        return Err(fail("manifest overruns file".into()));
    }
    let manifest = std::str::from_utf8(&bytes[12..12 + manifest_len])
        .map_err(|_| fail("manifest is not UTF-8".into()))?;

    let mut fields = std::collections::HashMap::new();
    let mut tensor_names: Vec<(String, Vec<usize>)> = Vec::new();
    let mut loss_len = 0usize;
    for line in manifest.lines() {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let (name, dims) = rest
                .split_once(' ')
                .ok_or_else(|| fail(format!("bad tensor line '{line}'")))?;
            let shape: std::result::Result<Vec<usize>, _> =
                dims.split(',').map(|d| d.parse()).collect();
            tensor_names.push((
                name.to_string(),
                shape.map_err(|_| fail(format!("bad shape in '{line}'")))?,
            ));
        } else if let Some(rest) = line.strip_prefix("loss_history ") {
            loss_len = rest
                .parse()
                .map_err(|_| fail(format!("bad loss_history length '{rest}'")))?;
        } else if let Some((k, v)) = line.split_once('=') {
            fields.insert(k.to_string(), v.to_string());
        } else if !line.trim().is_empty() {
            return Err(fail(format!("unrecognized manifest line '{line}'")));
        }
    }

    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| NetError::Checkpoint(format!("manifest missing '{key}'")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| NetError::Checkpoint(format!("bad integer for '{key}'")))
    };
    let dtype = get("dtype")?;
    if Dtype::parse(dtype) != Some(F::DTYPE) {
        return Err(fail(format!(
            "checkpoint holds {dtype} parameters, loader expects {}",
            F::DTYPE.name()
        )));
    }
    let config = NetworkConfig {
        t: parse_usize("config.t")?,
        h: parse_usize("config.h")?,
        w: parse_usize("config.w")?,
        channels: parse_usize("config.channels")?,
        blocks: parse_usize("config.blocks")?,
        window: parse_usize("config.window")?,
        grid: parse_usize("config.grid")?,
        heads: parse_usize("config.heads")?,
        leaky_slope: get("config.leaky_slope")?
            .parse()
            .map_err(|_| fail("bad leaky_slope".into()))?,
        ffn_expansion: parse_usize("config.ffn_expansion")?,
        branches: BranchSet::parse(get("config.branches")?)?,
    };
    let step: u64 = get("step")?
        .parse()
        .map_err(|_| fail("bad step".into()))?;

    let defs = param_layout(&config);
    if defs.len() != tensor_names.len() {
        return Err(fail(format!(
            "manifest lists {} tensors, config implies {}",
            tensor_names.len(),
            defs.len()
        )));
    }
    for (def, (name, shape)) in defs.iter().zip(&tensor_names) {
        if &def.name != name || &def.shape != shape {
            return Err(fail(format!(
                "manifest tensor {name} {shape:?} does not match layout {} {:?}",
                def.name, def.shape
            )));
        }
    }

    let mut offset = 12 + manifest_len;
    let mut tensors = Vec::with_capacity(defs.len());
    for def in &defs {
        let (rec, used) = stns::decode_record_prefix(&bytes[offset..])?;
        offset += used;
        if rec.shape != def.shape {
            return Err(fail(format!(
                "record shape {:?} for {} does not match manifest {:?}",
                rec.shape, def.name, def.shape
            )));
        }
        let data: Vec<F> = match rec.payload {
            Payload::F32(v) => v.into_iter().map(|x| F::from_f64(x as f64)).collect(),
            Payload::F64(v) => v.into_iter().map(F::from_f64).collect(),
            Payload::U8(_) => return Err(fail(format!("u8 payload for {}", def.name))),
        };
        tensors.push(Tensor::new(rec.shape, data).expect("record is self-consistent"));
    }
    let (loss_rec, used) = stns::decode_record_prefix(&bytes[offset..])?;
    offset += used;
    if offset != bytes.len() {
        return Err(fail(format!(
            "{} trailing bytes after loss history",
            bytes.len() - offset
        )));
    }
    let loss_history = match loss_rec.payload {
        Payload::F64(v) => {
            if loss_len == 0 {
                Vec::new()
            } else {
                v
            }
        }
        _ => return Err(fail("loss history must be f64".into())),
    };

    let params = NetParams::from_tensors(defs, tensors)?;
    let net = BstNet::from_parts(config, params)?;
    Ok(Checkpoint {
        net,
        step,
        loss_history,
    })
}
