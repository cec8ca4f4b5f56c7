//! Model files.
//!
//! ```text
//! "PCFM" | version: u32 | cfg_len: u32 | config text | sha256(config): 32 bytes
//! n_params: u32 | n_params × tensor | n_norms: u32 | n_norms × (mean tensor, var tensor)
//! ```
//!
//! Tensors use the [`crate::tensor::io`] layout. Bytes after the last norm are
//! ignored, which lets checkpoints append optimizer state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::network::Network;
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::io::{read_exact, read_tensor, write_tensor};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PCFM";
pub const VERSION: u32 = 1;

const MAX_CONFIG_LEN: u32 = 1 << 16;

pub fn write_model<W: Write>(w: &mut W, net: &Network) -> std::io::Result<()> {
    let text = net.config().to_text();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.write_all(&Sha256::digest(text.as_bytes()))?;
    let params = net.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        write_tensor(w, p.tensor())?;
    }
    let norms = net.norms();
    w.write_all(&(norms.len() as u32).to_le_bytes())?;
    for bn in norms {
        let (mean, var) = bn.running_stats();
        let n = mean.len();
        write_tensor(w, &Tensor::new(&[n], mean).expect("nonempty"))?;
        write_tensor(w, &Tensor::new(&[n], var).expect("nonempty"))?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r, "model file")?))
}

/// Reads a model; the network is only returned if every tensor checks out.
pub fn read_model<R: Read>(r: &mut R) -> Result<Network> {
    let magic: [u8; 4] = read_exact(r, "model file")?;
    if &magic != MAGIC {
        return Err(Error::format("model file", format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::format("model file", format!("unsupported version {version}")));
    }
    let len = read_u32(r)?;
    if len > MAX_CONFIG_LEN {
        return Err(Error::format("model file", format!("config length {len} too large")));
    }
    let mut text = vec![0u8; len as usize];
    r.read_exact(&mut text)
        .map_err(|e| Error::format("model file", format!("truncated config ({e})")))?;
    let hash: [u8; 32] = read_exact(r, "model file")?;
    if Sha256::digest(&text).as_slice() != hash {
        return Err(Error::format("model file", "config hash mismatch"));
    }
    let text = String::from_utf8(text).map_err(|_| Error::format("model file", "config is not UTF-8"))?;
    let config = ModelConfig::from_text(&text)?;
    let mut net = Network::new(&config)?;

    let n = read_u32(r)? as usize;
    if n != net.params().len() {
        return Err(Error::format(
            "model file",
            format!("{n} parameter tensors, the config implies {}", net.params().len()),
        ));
    }
    for p in net.params_mut() {
        let t = read_tensor(r)?;
        if t.shape() != p.shape() {
            return Err(Error::format(
                "model file",
                format!("{}: stored shape {:?}, expected {:?}", p.name(), t.shape(), p.shape()),
            ));
        }
        p.set(t.to_vec());
    }
    let n = read_u32(r)? as usize;
    if n != net.norms().len() {
        return Err(Error::format(
            "model file",
            format!("{n} norm layers, the config implies {}", net.norms().len()),
        ));
    }
    for bn in net.norms() {
        let mean = read_tensor(r)?;
        let var = read_tensor(r)?;
        if mean.shape() != [bn.channels()] || var.shape() != [bn.channels()] {
            return Err(Error::format("model file", format!("{}: running stats shape mismatch", bn.name())));
        }
        bn.set_running_stats(mean.to_vec(), var.to_vec());
    }
    Ok(net)
}

pub fn save_model(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(&mut w, net)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(&mut BufReader::new(file))
}
