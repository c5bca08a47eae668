//! Binary checkpoint container shared by the coarse regressor and the
//! diffusion refiner.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "DLABCKPT"
//! version  u32      currently 1
//! config   u64 length + UTF-8 key=value text (architecture, run config,
//!                      training metadata)
//! n_blobs  u32
//! blob     u32 name length + name bytes
//!          u8  dtype tag (2 = f64)
//!          u64 element count + raw f64 little-endian data
//! ```
//!
//! Parameters are stored and reloaded losslessly (f64 bit patterns), so a
//! reloaded model reproduces its predictions bit for bit. Blob order follows
//! the network's fixed parameter visiting order, making serialization
//! deterministic.

use std::fs;
use std::path::Path;

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::nn::UNet;

const MAGIC: &[u8; 8] = b"DLABCKPT";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 2;

/// Parsed checkpoint: a config block plus named parameter blobs.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: KvMap,
    pub blobs: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn blob(&self, name: &str) -> Result<&[f64]> {
        self.blobs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
            .ok_or_else(|| Error::Format(format!("checkpoint blob {name:?} missing")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = self.config.to_text();
        out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (name, data) in &self.blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F64);
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for &v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::Format(format!("{}: truncated checkpoint", path.display())));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };

        if take(&mut pos, 8)? != MAGIC {
            return Err(Error::Format(format!("{}: bad checkpoint magic", path.display())));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let cfg_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let cfg_text = String::from_utf8(take(&mut pos, cfg_len)?.to_vec())
            .map_err(|e| Error::Format(format!("{}: config not UTF-8: {e}", path.display())))?;
        let config = KvMap::parse(&cfg_text)?;

        let n_blobs = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut blobs = Vec::with_capacity(n_blobs);
        for _ in 0..n_blobs {
            let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|e| Error::Format(format!("{}: blob name not UTF-8: {e}", path.display())))?;
            let dtype = take(&mut pos, 1)?[0];
            if dtype != DTYPE_F64 {
                return Err(Error::Format(format!(
                    "{}: blob {name:?} has unsupported dtype {dtype}",
                    path.display()
                )));
            }
            let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
            let raw = take(&mut pos, count * 8)?;
            let mut data = Vec::with_capacity(count);
            for chunk in raw.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            blobs.push((name, data));
        }
        Ok(Checkpoint { config, blobs })
    }
}

/// Collects a network's parameters as named blobs (visiting order).
pub fn blobs_from_net(net: &UNet) -> Vec<(String, Vec<f64>)> {
    let mut blobs = Vec::new();
    net.visit_params(&mut |name, slice| blobs.push((name.to_string(), slice.to_vec())));
    blobs
}

/// Writes named blobs back into a freshly constructed network.
pub fn load_net_from_blobs(net: &mut UNet, ckpt: &Checkpoint) -> Result<()> {
    let mut err: Option<Error> = None;
    net.visit_params_mut(&mut |name, slice| {
        if err.is_some() {
            return;
        }
        match ckpt.blobs.iter().find(|(n, _)| n == name) {
            Some((_, data)) if data.len() == slice.len() => slice.copy_from_slice(data),
            Some((_, data)) => {
                err = Some(Error::Format(format!(
                    "blob {name:?} has {} values, layer expects {}",
                    data.len(),
                    slice.len()
                )))
            }
            None => err = Some(Error::Format(format!("checkpoint blob {name:?} missing"))),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
