//! Checkpoint layout:
//!
//! ```text
//! 8 bytes   magic "DMTSRCK\0"
//! u32 LE    format version
//! u32 LE    header length in bytes
//! header    UTF-8 `key=value` lines: arch, channels, hidden, scale, nets, params, seeds
//! payload   nets x params little-endian f32
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{param_count, SRNet, HIDDEN};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DMTSRCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const ARCH: &str = "residual-conv3x3-relu";

/// SHA-256 over the little-endian parameter bytes.
pub fn param_checksum(net: &SRNet<f32>) -> String {
    let mut h = Sha256::new();
    for p in net.params() {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Write one or more nets sharing an architecture.
pub fn save_checkpoint(path: &Path, nets: &[&SRNet<f32>]) -> Result<()> {
    let first = nets.first().ok_or_else(|| Error::invalid("no networks to save"))?;
    if nets.iter().any(|n| n.channels != first.channels || n.scale != first.scale) {
        return Err(Error::invalid("checkpoint nets must share architecture"));
    }
    let seeds: Vec<String> = nets.iter().map(|n| n.init_seed.to_string()).collect();
    let header = format!(
        "arch={ARCH}\nchannels={}\nhidden={HIDDEN}\nscale={}\nnets={}\nparams={}\nseeds={}\n",
        first.channels,
        first.scale,
        nets.len(),
        first.param_count(),
        seeds.join(",")
    );
    let mut out = Vec::with_capacity(16 + header.len() + 4 * nets.len() * first.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for n in nets {
        for p in n.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::invalid(format!("corrupt checkpoint: {}", msg.into()))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<SRNet<f32>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header = bytes
        .get(16..16 + hlen)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| bad("header"))?;
    let field = |key: &str| -> Result<&str> {
        header
            .lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| bad(format!("missing `{key}`")))
    };
    let num = |key: &str| -> Result<usize> { field(key)?.parse().map_err(|_| bad(format!("bad `{key}`"))) };
    if field("arch")? != ARCH || num("hidden")? != HIDDEN {
        return Err(bad("unknown architecture"));
    }
    let (channels, scale, nets, params) = (num("channels")?, num("scale")?, num("nets")?, num("params")?);
    if params != param_count(channels) {
        return Err(bad("parameter count does not match architecture"));
    }
    let seeds: Vec<u64> = field("seeds")?
        .split(',')
        .map(|s| s.parse().map_err(|_| bad("bad seed")))
        .collect::<Result<_>>()?;
    if seeds.len() != nets {
        return Err(bad("seed list length"));
    }
    let payload = &bytes[16 + hlen..];
    if payload.len() != nets * params * 4 {
        return Err(bad(format!("payload is {} bytes, expected {}", payload.len(), nets * params * 4)));
    }
    payload
        .chunks_exact(params * 4)
        .zip(seeds)
        .map(|(chunk, seed)| {
            let p = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            SRNet::from_params(channels, scale, seed, p)
        })
        .collect()
}
