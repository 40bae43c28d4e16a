//! Binary model checkpoints.
//!
//! ```text
//! "SPDM" | version u32 | echo_len u32 | echo (UTF-8) | tensor_count u32 |
//!   per tensor: name_len u16 | name | ndim u8 | dims u32 * ndim | f64 payload
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::nn::{DenoiserNet, NamedTensor};
use crate::tensor::Tensor;

use super::config::TrainConfig;

pub const MAGIC: &[u8; 4] = b"SPDM";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated checkpoint: {what} needs {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint {0} is not valid UTF-8")]
    Utf8(&'static str),
    #[error("invalid checkpoint contents: {0}")]
    Invalid(String),
}

/// Trained parameters plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_net(config: &TrainConfig, net: &DenoiserNet) -> Self {
        Checkpoint {
            config_echo: config.echo(),
            params: net.params().to_vec(),
        }
    }

    pub fn config(&self) -> Result<TrainConfig, CheckpointError> {
        TrainConfig::parse(&self.config_echo).map_err(|e| CheckpointError::Invalid(e.to_string()))
    }

    /// Rebuilds the configuration and network.
    pub fn restore(&self) -> Result<(TrainConfig, DenoiserNet), CheckpointError> {
        let cfg = self.config()?;
        let shape = cfg
            .signal_shape
            .clone()
            .ok_or_else(|| CheckpointError::Invalid("config echo lacks signal_shape".into()))?;
        let invalid = |e: crate::error::Error| CheckpointError::Invalid(e.to_string());
        let dcfg = cfg.denoiser_config(&shape).map_err(invalid)?;
        let params = self
            .params
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                tensor: Tensor::new(p.tensor.shape().to_vec(), p.tensor.data().to_vec()).expect("valid tensor"),
            })
            .collect();
        let net = DenoiserNet::from_params(dcfg, params).map_err(invalid)?;
        Ok((cfg, net))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let echo = self.config_echo.as_bytes();
        let len32 = |n: usize, what: &str| {
            u32::try_from(n).map_err(|_| CheckpointError::Invalid(format!("{what} too large")))
        };
        out.extend_from_slice(&len32(echo.len(), "config echo")?.to_le_bytes());
        out.extend_from_slice(echo);
        out.extend_from_slice(&len32(self.params.len(), "tensor count")?.to_le_bytes());
        for p in &self.params {
            let name = p.name.as_bytes();
            let nlen = u16::try_from(name.len()).map_err(|_| CheckpointError::Invalid(format!("name `{}` too long", p.name)))?;
            out.extend_from_slice(&nlen.to_le_bytes());
            out.extend_from_slice(name);
            let dims = p.tensor.shape();
            let ndim = u8::try_from(dims.len()).map_err(|_| CheckpointError::Invalid("too many dimensions".into()))?;
            out.push(ndim);
            for &d in dims {
                out.extend_from_slice(&len32(d, "dimension")?.to_le_bytes());
            }
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version });
        }
        let echo_len = r.u32("config echo length")? as usize;
        let echo = std::str::from_utf8(r.take(echo_len, "config echo")?)
            .map_err(|_| CheckpointError::Utf8("config echo"))?
            .to_string();
        let count = r.u32("tensor count")? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let nlen = u16::from_le_bytes(r.take(2, "tensor name length")?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(r.take(nlen, "tensor name")?)
                .map_err(|_| CheckpointError::Utf8("tensor name"))?
                .to_string();
            let ndim = r.take(1, "tensor rank")?[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32("tensor dimension")? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| CheckpointError::Invalid(format!("tensor `{name}` is too large")))?;
            let payload = r.take(n, "tensor payload")?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let tensor = Tensor::new(dims, data).map_err(|e| CheckpointError::Invalid(format!("tensor `{name}`: {e}")))?;
            params.push(NamedTensor { name, tensor });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint {
            config_echo: echo,
            params,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                what,
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}
