//! Checkpoints: a model file followed by the classifier and optimizer state.
//!
//! ```text
//! <model file> | "CKPT" | classes: u32 | has_bias: u8 | classifier tensors
//! | "OPTS" | step: u64 | n: u32 | n × (m tensor, v tensor)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::model::{read_model, write_model, Classifier, Network};
use crate::nn::Module;
use crate::tensor::io::{read_exact, read_tensor, write_tensor};
use crate::tensor::Tensor;

const CKPT: &[u8; 4] = b"CKPT";
const OPTS: &[u8; 4] = b"OPTS";

pub fn write_checkpoint<W: Write>(w: &mut W, net: &Network, clf: &Classifier, adam: &AdamState) -> std::io::Result<()> {
    write_model(w, net)?;
    w.write_all(CKPT)?;
    w.write_all(&(clf.classes() as u32).to_le_bytes())?;
    w.write_all(&[u8::from(!clf.is_cosine())])?;
    for p in clf.params() {
        write_tensor(w, p.tensor())?;
    }
    w.write_all(OPTS)?;
    w.write_all(&adam.step.to_le_bytes())?;
    w.write_all(&(adam.m.len() as u32).to_le_bytes())?;
    for (m, v) in adam.m.iter().zip(&adam.v) {
        write_tensor(w, &Tensor::new(&[m.len()], m.clone()).expect("nonempty"))?;
        write_tensor(w, &Tensor::new(&[v.len()], v.clone()).expect("nonempty"))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Network, Classifier, AdamState)> {
    let net = read_model(r)?;
    let tag: [u8; 4] = read_exact(r, "checkpoint")?;
    if &tag != CKPT {
        return Err(Error::format("checkpoint", "missing classifier section"));
    }
    let classes = u32::from_le_bytes(read_exact(r, "checkpoint")?) as usize;
    let [bias] = read_exact::<_, 1>(r, "checkpoint")?;
    let embed = net.config().embed_dim;
    let mut clf = if bias == 1 {
        Classifier::linear(embed, classes, 0)?
    } else {
        Classifier::cosine(embed, classes, 0)?
    };
    for p in clf.params_mut() {
        let t = read_tensor(r)?;
        if t.shape() != p.shape() {
            return Err(Error::format("checkpoint", format!("{}: shape {:?}", p.name(), t.shape())));
        }
        p.set(t.to_vec());
    }
    let tag: [u8; 4] = read_exact(r, "checkpoint")?;
    if &tag != OPTS {
        return Err(Error::format("checkpoint", "missing optimizer section"));
    }
    let step = u64::from_le_bytes(read_exact(r, "checkpoint")?);
    let n = u32::from_le_bytes(read_exact(r, "checkpoint")?) as usize;
    let sizes: Vec<usize> = net.params().iter().chain(clf.params().iter()).map(|p| p.numel()).collect();
    if n != sizes.len() {
        return Err(Error::format("checkpoint", format!("{n} optimizer slots for {} parameters", sizes.len())));
    }
    let mut adam = AdamState::new(&sizes);
    adam.step = step;
    for (i, &size) in sizes.iter().enumerate() {
        let m = read_tensor(r)?;
        let v = read_tensor(r)?;
        if m.numel() != size || v.numel() != size {
            return Err(Error::format("checkpoint", format!("optimizer slot {i} has the wrong size")));
        }
        adam.m[i] = m.to_vec();
        adam.v[i] = v.to_vec();
    }
    Ok((net, clf, adam))
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &Network, clf: &Classifier, adam: &AdamState) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_checkpoint(&mut w, net, clf, adam)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Network, Classifier, AdamState)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}
