//! Binary checkpoint: the magic `RDAB1`, a little-endian `u64` manifest
//! length, a UTF-8 manifest, then little-endian `f64` blocks.
//!
//! Manifest lines are either `meta <key> <value>` or
//! `tensor <name> <offset> <dim>...` where `offset` counts `f64`s from the
//! start of the data section.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"RDAB1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::new();
        for (k, v) in &self.meta {
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("tensor {name} {offset} {}\n", dims.join(" ")));
            offset += t.len();
        }
        let mut out = Vec::with_capacity(13 + manifest.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| AutodiffError::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < 13 || &bytes[..5] != MAGIC {
            return Err(bad("missing RDAB1 magic".into()));
        }
        let mlen = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let data_start = 13usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad(format!("manifest length {mlen} exceeds file")))?;
        let manifest = std::str::from_utf8(&bytes[13..data_start]).map_err(|e| bad(e.to_string()))?;
        let data = &bytes[data_start..];
        let mut ck = Checkpoint::default();
        for (i, line) in manifest.lines().enumerate() {
            let mut parts = line.split(' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad(format!("manifest line {}: no key", i + 1)))?;
                    let value: Vec<&str> = parts.collect();
                    ck.meta.insert(key.to_string(), value.join(" "));
                }
                Some("tensor") => {
                    let nums = |s: Option<&str>| -> Result<usize> {
                        s.and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad(format!("manifest line {}: bad number", i + 1)))
                    };
                    let name = parts
                        .next()
                        .ok_or_else(|| bad(format!("manifest line {}: no name", i + 1)))?
                        .to_string();
                    let offset = nums(parts.next())?;
                    let shape = parts.map(|p| nums(Some(p))).collect::<Result<Vec<_>>>()?;
                    let n: usize = shape.iter().product();
                    let end = (offset + n) * 8;
                    if end > data.len() {
                        return Err(bad(format!("tensor {name} runs past end of data")));
                    }
                    let values = data[offset * 8..end]
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    let t = Tensor::new(shape, values).map_err(|e| bad(e.to_string()))?;
                    ck.tensors.push((name, t));
                }
                _ => return Err(bad(format!("manifest line {}: unknown entry", i + 1))),
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| AutodiffError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(path, self.to_bytes()).map_err(|source| AutodiffError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| AutodiffError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }
}
