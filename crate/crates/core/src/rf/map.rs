use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Reachable input positions of one output unit, over frequency bins × frames.
///
/// The window is centred on the anchor frame. Cells are stored row-major by
/// frequency bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RFMap {
    pub model: String,
    pub block: usize,
    pub channel: usize,
    /// Column of the anchor frame within the window.
    pub frame: usize,
    freq_bins: usize,
    window: usize,
    cells: Vec<bool>,
}

impl RFMap {
    pub fn new(model: impl Into<String>, block: usize, channel: usize, frame: usize, freq_bins: usize, window: usize) -> Self {
        RFMap {
            model: model.into(),
            block,
            channel,
            frame,
            freq_bins,
            window,
            cells: vec![false; freq_bins * window],
        }
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn get(&self, f: usize, t: usize) -> bool {
        self.cells[f * self.window + t]
    }

    pub fn set(&mut self, f: usize, t: usize, v: bool) {
        self.cells[f * self.window + t] = v;
    }

    pub fn reachable(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Frequency bins with at least one reachable frame.
    pub fn freq_bins_reached(&self) -> Vec<usize> {
        (0..self.freq_bins)
            .filter(|&f| self.cells[f * self.window..(f + 1) * self.window].iter().any(|c| *c))
            .collect()
    }

    pub fn freq_coverage(&self) -> usize {
        self.freq_bins_reached().len()
    }

    /// Frames with at least one reachable bin.
    pub fn frames_reached(&self) -> Vec<usize> {
        (0..self.window)
            .filter(|&t| (0..self.freq_bins).any(|f| self.get(f, t)))
            .collect()
    }

    /// Distance between the first and last reachable frame, plus one.
    pub fn time_extent(&self) -> usize {
        match self.frames_reached().as_slice() {
            [] => 0,
            [first, .., last] => last - first + 1,
            [_] => 1,
        }
    }

    /// Bitwise OR with a map of the same geometry.
    pub fn merge(&mut self, other: &RFMap) -> Result<()> {
        if (self.freq_bins, self.window) != (other.freq_bins, other.window) {
            return Err(Error::shape(
                "rf merge",
                &[self.freq_bins, self.window],
                &[other.freq_bins, other.window],
            ));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &RFMap) -> bool {
        (self.freq_bins, self.window, &self.cells) == (other.freq_bins, other.window, &other.cells)
    }

    /// `rf_<model>_<block>_<channel>`
    pub fn stem_name(&self) -> String {
        format!("rf_{}_{}_{}", self.model, self.block, self.channel)
    }

    /// CSV with a `#` metadata line, a `f,t,reachable` header and one row per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(
            w,
            "# model={} block={} channel={} frame={} freq_bins={} window={}",
            self.model, self.block, self.channel, self.frame, self.freq_bins, self.window
        )
        .map_err(|e| Error::format("rf csv", e.to_string()))?;
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::format("rf csv", e.to_string());
        out.write_record(["f", "t", "reachable"]).map_err(csv_err)?;
        for f in 0..self.freq_bins {
            for t in 0..self.window {
                out.serialize((f, t, u8::from(self.get(f, t)))).map_err(csv_err)?;
            }
        }
        out.flush().map_err(|e| Error::format("rf csv", e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<RFMap> {
        let mut r = BufReader::new(r);
        let mut meta = String::new();
        r.read_line(&mut meta).map_err(|e| Error::format("rf csv", e.to_string()))?;
        let meta = meta
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::format("rf csv", "missing metadata line"))?;
        let mut fields = std::collections::HashMap::new();
        for kv in meta.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::format("rf csv", format!("bad metadata field `{kv}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| -> Result<&str> {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::format("rf csv", format!("metadata lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::format("rf csv", format!("metadata `{k}` is not a number")))
        };
        let mut map = RFMap::new(get("model")?, num("block")?, num("channel")?, num("frame")?, num("freq_bins")?, num("window")?);
        let mut rows = 0;
        for rec in csv::Reader::from_reader(r).deserialize::<(usize, usize, u8)>() {
            let (f, t, v) = rec.map_err(|e| Error::format("rf csv", e.to_string()))?;
            if f >= map.freq_bins || t >= map.window || v > 1 {
                return Err(Error::format("rf csv", format!("row ({f},{t},{v}) out of range")));
            }
            map.set(f, t, v == 1);
            rows += 1;
        }
        if rows != map.cells.len() {
            return Err(Error::format(
                "rf csv",
                format!("{rows} rows, expected {}", map.cells.len()),
            ));
        }
        Ok(map)
    }

    /// Binary 8-bit PGM, `window` wide and `freq_bins` tall, lowest bin at
    /// the bottom. Reachable cells are white.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.window, self.freq_bins)?;
        let mut buf = Vec::with_capacity(self.cells.len());
        for f in (0..self.freq_bins).rev() {
            buf.extend((0..self.window).map(|t| if self.get(f, t) { 255u8 } else { 0 }));
        }
        w.write_all(&buf)
    }
}

/// Writes `rf_<model>_<block>_<channel>.csv` and `.pgm` for every map into
/// `dir` and returns the paths written.
pub fn emit_rf_panel(maps: &[RFMap], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if maps.is_empty() {
        return Err(Error::Contract("rf panel needs at least one map".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(2 * maps.len());
    for m in maps {
        let csv_path = dir.join(format!("{}.csv", m.stem_name()));
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        m.write_csv(file)?;
        let pgm_path = dir.join(format!("{}.pgm", m.stem_name()));
        let file = File::create(&pgm_path).map_err(|e| Error::io(&pgm_path, e))?;
        let mut w = BufWriter::new(file);
        m.write_pgm(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&pgm_path, e))?;
        written.push(csv_path);
        written.push(pgm_path);
    }
    Ok(written)
}

pub fn read_rf_csv(path: impl AsRef<Path>) -> Result<RFMap> {
    let path = path.as_ref();
    RFMap::read_csv(File::open(path).map_err(|e| Error::io(path, e))?)
}
