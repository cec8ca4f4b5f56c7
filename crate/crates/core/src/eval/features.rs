//! Feature files and the manifest that names them.
//!
//! ```text
//! "FEAT" | F: u32 | T: u32 | payload: F·T × f64, row-major by bin
//! ```
//!
//! A manifest is a text file of `<id> <path>` lines; relative paths resolve
//! against the manifest's directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::io::read_exact;

pub const MAGIC: &[u8; 4] = b"FEAT";
const MAX_CELLS: u64 = 1 << 31;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub id: String,
    pub freq_bins: usize,
    pub frames: usize,
    /// `freq_bins × frames`, row-major by bin.
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(id: impl Into<String>, freq_bins: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if freq_bins == 0 || frames == 0 || data.len() != freq_bins * frames {
            return Err(Error::shape("feature matrix", &[freq_bins, frames], &[data.len()]));
        }
        Ok(FeatureMatrix {
            id: id.into(),
            freq_bins,
            frames,
            data,
        })
    }

    /// Columns `start..start + len`, as a `freq_bins × len` block.
    pub fn window(&self, start: usize, len: usize) -> Vec<f64> {
        (0..self.freq_bins)
            .flat_map(|f| self.data[f * self.frames + start..f * self.frames + start + len].iter().copied())
            .collect()
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.freq_bins as u32).to_le_bytes())?;
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read<R: Read>(r: &mut R, id: impl Into<String>) -> Result<Self> {
        let magic: [u8; 4] = read_exact(r, "feature file")?;
        if &magic != MAGIC {
            return Err(Error::format("feature file", format!("bad magic {magic:?}")));
        }
        let f = u32::from_le_bytes(read_exact(r, "feature file")?) as usize;
        let t = u32::from_le_bytes(read_exact(r, "feature file")?) as usize;
        if f == 0 || t == 0 || (f as u64) * (t as u64) > MAX_CELLS {
            return Err(Error::format("feature file", format!("implausible shape {f}×{t}")));
        }
        let mut buf = vec![0u8; f * t * 8];
        r.read_exact(&mut buf)
            .map_err(|e| Error::format("feature file", format!("truncated payload ({e})")))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        FeatureMatrix::new(id, f, t, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut BufReader::new(file), id).map_err(|e| match e {
            Error::Format { what, detail } => Error::Format {
                what,
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })
    }
}

/// Features by utterance id.
#[derive(Clone, Debug, Default)]
pub struct FeatureStore {
    pub features: BTreeMap<String, FeatureMatrix>,
}

impl FeatureStore {
    pub fn insert(&mut self, m: FeatureMatrix) {
        self.features.insert(m.id.clone(), m);
    }

    pub fn get(&self, id: &str) -> Option<&FeatureMatrix> {
        self.features.get(id)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Reads every file named in a manifest.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut store = FeatureStore::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, rel) = line.split_once(char::is_whitespace).ok_or_else(|| {
                Error::format("feature manifest", format!("line {}: expected `<id> <path>`", n + 1))
            })?;
            let file = base.join(rel.trim());
            store.insert(FeatureMatrix::load(&file, id)?);
        }
        Ok(store)
    }

    /// Writes `<dir>/<id>.feat` for every entry plus `<dir>/<manifest_name>`.
    pub fn save_with_manifest(&self, dir: impl AsRef<Path>, manifest_name: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for (id, m) in &self.features {
            let name = format!("{id}.feat");
            m.save(dir.join(&name))?;
            manifest.push_str(&format!("{id} {name}\n"));
        }
        let path = dir.join(manifest_name);
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
