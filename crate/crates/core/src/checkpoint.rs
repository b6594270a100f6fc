//! Binary parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"NPPV"  u32 version (1)
//! u32 config length, then that many bytes of UTF-8 `key=value` lines
//! u32 tensor count, then per tensor:
//!     u16 name length, UTF-8 name
//!     u8 rank, rank × u32 dims
//!     u8 dtype (0 = f32, 1 = f64), raw payload
//! ```

use std::path::Path;

use crate::config::ConfigMap;
use crate::error::{Error, Result};
use crate::offgrid::{ModelKind, OffGridConfig, OffGridModel};
use crate::ongrid::{OnGridConfig, OnGridModel};
use crate::train::TrainConfig;
use crate::{ParamStore, Tensor};

pub const MAGIC: [u8; 4] = *b"NPPV";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ConfigMap,
    pub params: ParamStore,
}

/// Config key naming the model family stored in a checkpoint.
pub const ARCHITECTURE_KEY: &str = "architecture";

impl Checkpoint {
    pub fn architecture(&self) -> Result<String> {
        self.config.get(ARCHITECTURE_KEY)
    }

    /// The training configuration, if one was recorded.
    pub fn train_config(&self) -> Result<Option<TrainConfig>> {
        if self.config.raw("epochs").is_none() {
            return Ok(None);
        }
        TrainConfig::from_entries(&self.config).map(Some)
    }
}

fn expect_architecture(ckpt: &Checkpoint, expected: &str) -> Result<()> {
    let arch = ckpt.architecture()?;
    if arch != expected {
        return Err(Error::Config(format!(
            "checkpoint holds a {arch} model, expected {expected}"
        )));
    }
    Ok(())
}

impl OffGridModel {
    pub const ARCHITECTURE: &'static str = "offgrid";

    pub fn to_checkpoint(&self, train: Option<&TrainConfig>) -> Checkpoint {
        let mut config = ConfigMap::new();
        if let Some(t) = train {
            t.write_entries(&mut config);
        }
        config.set(ARCHITECTURE_KEY, Self::ARCHITECTURE);
        config.set("model", self.kind);
        self.config.write_entries(&mut config);
        Checkpoint {
            config,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_architecture(ckpt, Self::ARCHITECTURE)?;
        let kind: ModelKind = ckpt.config.get("model")?;
        let config = OffGridConfig::from_entries(&ckpt.config)?;
        OffGridModel::from_parts(kind, config, ckpt.params.clone())
    }
}

impl OnGridModel {
    pub const ARCHITECTURE: &'static str = "ongrid";

    pub fn to_checkpoint(&self, train: Option<&TrainConfig>) -> Checkpoint {
        let mut config = ConfigMap::new();
        if let Some(t) = train {
            t.write_entries(&mut config);
        }
        config.set(ARCHITECTURE_KEY, Self::ARCHITECTURE);
        self.config.write_entries(&mut config);
        Checkpoint {
            config,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_architecture(ckpt, Self::ARCHITECTURE)?;
        let config = OnGridConfig::from_entries(&ckpt.config)?;
        OnGridModel::from_parts(config, ckpt.params.clone())
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = ckpt.config.to_text();
    out.extend_from_slice(&len_u32(config.len(), "config")?.to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&len_u32(ckpt.params.len(), "tensor count")?.to_le_bytes());
    for (name, t) in ckpt.params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::contract(format!("tensor name {name:?} is too long")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::contract(format!("tensor {name:?} rank too high")))?;
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&len_u32(d, "dimension")?.to_le_bytes());
        }
        out.push(DTYPE_F64);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::contract(format!("{what} {n} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str> {
        let at = self.pos;
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Format {
            offset: at + e.valid_up_to(),
            msg: "invalid UTF-8".into(),
        })
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.array()?;
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnknownVersion(version));
    }
    let config_len = r.u32()? as usize;
    let config_at = r.pos;
    let config = ConfigMap::parse(r.utf8(config_len)?).map_err(|e| Error::Format {
        offset: config_at,
        msg: format!("config section: {e}"),
    })?;
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name_at = r.pos;
        let name = r.utf8(name_len)?.to_string();
        if params.get(&name).is_some() {
            return Err(Error::Format {
                offset: name_at,
                msg: format!("duplicate tensor {name:?}"),
            });
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let dtype_at = r.pos;
        let width = match r.u8()? {
            DTYPE_F32 => 4,
            DTYPE_F64 => 8,
            other => {
                return Err(Error::Format {
                    offset: dtype_at,
                    msg: format!("unknown dtype {other}"),
                })
            }
        };
        let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let payload_len = numel.and_then(|n| n.checked_mul(width)).ok_or_else(|| Error::Format {
            offset: dtype_at,
            msg: format!("tensor {name:?} shape {shape:?} overflows"),
        })?;
        let payload = r.take(payload_len)?;
        let data: Vec<f64> = if width == 8 {
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        } else {
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect()
        };
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Format {
            offset: dtype_at,
            msg: format!("tensor {name:?}: {e}"),
        })?;
        params.insert(name, tensor);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
