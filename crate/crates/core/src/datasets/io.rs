//! Binary event files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "JPEV" | version u16 | n_features u32 | n_events u64
//! space u8 | layout u8 | has_stats u8
//! [mean f64 × w | std f64 × w | scale f64]      if has_stats
//! values f32 × n_events × n_features, row-major
//! ```
//!
//! For paired files the first half of each row is truth and the second half
//! the detector-level copy; `w` is then half the stored width.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use super::{FeatureMatrix, PreprocessStats, Space};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &[u8; 4] = b"JPEV";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Plain,
    /// Truth columns followed by the same number of detector columns.
    Paired,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventFile {
    pub data: FeatureMatrix,
    pub layout: Layout,
    pub stats: Option<PreprocessStats>,
}

impl EventFile {
    pub fn plain(data: FeatureMatrix) -> Self {
        Self { data, layout: Layout::Plain, stats: None }
    }

    /// Joins truth and detector blocks of equal shape and space.
    pub fn paired(truth: &FeatureMatrix, detector: &FeatureMatrix) -> Result<Self> {
        if truth.n_events() != detector.n_events() || truth.n_features() != detector.n_features() {
            return Err(Error::Shape(format!(
                "truth is {}x{}, detector is {}x{}",
                truth.n_events(),
                truth.n_features(),
                detector.n_events(),
                detector.n_features()
            )));
        }
        if truth.space() != detector.space() {
            return Err(Error::State("truth and detector blocks are in different spaces".into()));
        }
        let joined = Matrix::hconcat(&[truth.matrix(), detector.matrix()])?;
        Ok(Self {
            data: FeatureMatrix::new(joined, truth.space())?,
            layout: Layout::Paired,
            stats: None,
        })
    }

    pub fn with_stats(mut self, stats: PreprocessStats) -> Self {
        self.stats = Some(stats);
        self
    }

    /// Feature width of one logical block.
    pub fn logical_width(&self) -> usize {
        match self.layout {
            Layout::Plain => self.data.n_features(),
            Layout::Paired => self.data.n_features() / 2,
        }
    }

    /// `(truth, detector)` halves of a paired file.
    pub fn split_pair(&self) -> Result<(FeatureMatrix, FeatureMatrix)> {
        if self.layout != Layout::Paired {
            return Err(Error::State("file does not hold paired events".into()));
        }
        let w = self.logical_width();
        let m = self.data.matrix();
        Ok((
            FeatureMatrix::new(m.columns(0, w), self.data.space())?,
            FeatureMatrix::new(m.columns(w, w), self.data.space())?,
        ))
    }

    fn check(&self) -> Result<()> {
        if self.layout == Layout::Paired && !self.data.n_features().is_multiple_of(2) {
            return Err(Error::Shape("paired data needs an even column count".into()));
        }
        if let Some(s) = &self.stats {
            s.validate()?;
            if s.n_features() != self.logical_width() {
                return Err(Error::Shape(format!(
                    "statistics cover {} features, data has {}",
                    s.n_features(),
                    self.logical_width()
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let m = self.data.matrix();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.values().len());
        out.extend_from_slice(MAGIC);
        out.write_u16::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(m.cols() as u32).unwrap();
        out.write_u64::<LittleEndian>(m.rows() as u64).unwrap();
        out.push(match self.data.space() {
            Space::Physical => 0,
            Space::Standardized => 1,
        });
        out.push(match self.layout {
            Layout::Plain => 0,
            Layout::Paired => 1,
        });
        out.push(self.stats.is_some() as u8);
        if let Some(s) = &self.stats {
            for &v in s.mean.iter().chain(&s.std).chain([&s.scale]) {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
        for &v in m.values() {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.error_at(0, "bad magic, not an event file"));
        }
        let version = LittleEndian::read_u16(r.take(2, "version")?);
        if version != VERSION {
            return Err(r.error_at(4, &format!("unsupported version {version}")));
        }
        let n_features = LittleEndian::read_u32(r.take(4, "feature count")?) as usize;
        let n_events = LittleEndian::read_u64(r.take(8, "event count")?);
        let space = match r.take(1, "space tag")?[0] {
            0 => Space::Physical,
            1 => Space::Standardized,
            v => return Err(r.error_at(r.pos as u64 - 1, &format!("unknown space tag {v}"))),
        };
        let layout = match r.take(1, "layout")?[0] {
            0 => Layout::Plain,
            1 => Layout::Paired,
            v => return Err(r.error_at(r.pos as u64 - 1, &format!("unknown layout {v}"))),
        };
        if n_features == 0 || (layout == Layout::Paired && !n_features.is_multiple_of(2)) {
            return Err(r.error_at(6, &format!("invalid feature count {n_features}")));
        }
        let stats = match r.take(1, "stats flag")?[0] {
            0 => None,
            1 => {
                let w = if layout == Layout::Paired { n_features / 2 } else { n_features };
                let mut read = |count: usize, what: &str| -> Result<Vec<f64>> {
                    let raw = r.take(8 * count, what)?;
                    Ok(raw.chunks_exact(8).map(LittleEndian::read_f64).collect())
                };
                let mean = read(w, "stats means")?;
                let std = read(w, "stats deviations")?;
                let scale = read(1, "stats scale")?[0];
                Some(PreprocessStats { mean, std, scale })
            }
            v => return Err(r.error_at(r.pos as u64 - 1, &format!("bad stats flag {v}"))),
        };
        let payload_start = r.pos;
        let expected = (n_events as u128) * (n_features as u128) * 4;
        let available = (bytes.len() - payload_start) as u128;
        if available != expected {
            return Err(r.error_at(
                payload_start as u64,
                &format!(
                    "payload holds {available} bytes, header declares {n_events} events x {n_features} features ({expected} bytes)"
                ),
            ));
        }
        let values: Vec<f32> = bytes[payload_start..]
            .chunks_exact(4)
            .map(LittleEndian::read_f32)
            .collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(r.error_at((payload_start + 4 * pos) as u64, "non-finite value"));
        }
        let matrix = Matrix::from_vec(n_events as usize, n_features, values)?;
        let file = EventFile {
            data: FeatureMatrix::new(matrix, space)?,
            layout,
            stats,
        };
        file.check()
            .map_err(|e| Error::Parse { offset: 21, reason: e.to_string() })?;
        Ok(file)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error_at(self.pos as u64, &format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn error_at(&self, offset: u64, reason: &str) -> Error {
        Error::Parse { offset, reason: reason.to_string() }
    }
}

pub fn save_events(path: impl AsRef<Path>, file: &EventFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, file.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_events(path: impl AsRef<Path>) -> Result<EventFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EventFile::from_bytes(&bytes)
}
