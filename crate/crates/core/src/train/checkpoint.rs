use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adamw::OptimizerState;
use super::config::TrainConfig;
use super::scheduler::PlateauScheduler;
use crate::datasets::PreprocessStats;
use crate::error::{Error, Result};
use crate::numerics::derive_seed;
use crate::velocity::{tensor_names, NetConfig, NetMode, ParamSet, VelocityNet};

const MAGIC: &[u8; 4] = b"KFCK";
const VERSION: u16 = 1;

/// Everything needed to sample from a trained model or resume its training.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub net: NetConfig,
    pub params: ParamSet<f32>,
    pub stats: PreprocessStats,
    pub train: TrainConfig,
    /// Epochs completed when the record was taken.
    pub epoch: usize,
    /// Monitored value at `epoch`; `None` before any validation pass.
    pub monitored: Option<f64>,
    /// Lowest monitored value seen so far in the run.
    pub best_monitored: Option<f64>,
    /// Digest of the random stream the next epoch will consume.
    pub rng_digest: String,
    pub optimizer: Option<OptimizerState>,
    pub scheduler: Option<PlateauScheduler>,
}

/// SHA-256 of the seed the epoch after `epoch` draws its shuffles and noise from.
pub fn rng_digest(seed: u64, epoch: usize) -> String {
    let next = derive_seed(seed, epoch as u64 + 1);
    hex::encode(Sha256::digest(next.to_le_bytes()))
}

impl CheckpointRecord {
    pub fn network(&self) -> Result<VelocityNet<f32>> {
        VelocityNet::from_params(self.net.clone(), self.params.clone())
    }

    pub fn mode(&self) -> NetMode {
        self.net.mode
    }

    /// Fails with a mode error unless the record holds a `mode` model.
    pub fn require_mode(&self, mode: NetMode) -> Result<()> {
        if self.net.mode != mode {
            return Err(Error::Mode(format!(
                "checkpoint model is {}, {} was requested",
                self.net.mode.as_str(),
                mode.as_str()
            )));
        }
        Ok(())
    }

    /// Drops optimizer and scheduler state, keeping only what sampling needs.
    pub fn weights_only(mut self) -> Self {
        self.optimizer = None;
        self.scheduler = None;
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let names = tensor_names(&self.net);
        let tensors = self.params.tensors();
        if names.len() != tensors.len() {
            return Err(Error::State("parameter set does not match its network config".into()));
        }
        let header = Header {
            net: self.net.clone(),
            stats: self.stats.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            monitored: self.monitored,
            best_monitored: self.best_monitored,
            rng_digest: self.rng_digest.clone(),
            tensors: names
                .into_iter()
                .zip(&tensors)
                .map(|(name, t)| TensorEntry { name, len: t.len() })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            scheduler: self.scheduler.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::State(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u16::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(json.len() as u32).unwrap();
        out.extend_from_slice(&json);
        for t in &tensors {
            for &v in t.iter() {
                out.write_f32::<LittleEndian>(v).unwrap();
            }
        }
        if let Some(opt) = &self.optimizer {
            for moments in opt.m.iter().chain(&opt.v) {
                for &v in moments {
                    out.write_f64::<LittleEndian>(v).unwrap();
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(field_err("magic", "not a checkpoint file"));
        }
        let version = LittleEndian::read_u16(r.take(2, "version")?);
        if version != VERSION {
            return Err(field_err("version", &format!("unsupported version {version}, expected {VERSION}")));
        }
        let len = LittleEndian::read_u32(r.take(4, "header_length")?) as usize;
        let header: Header =
            serde_json::from_slice(r.take(len, "header")?).map_err(|e| field_err("header", &e.to_string()))?;
        header.net.validate().map_err(|e| field_err("net", &e.to_string()))?;
        header.stats.validate().map_err(|e| field_err("stats", &e.to_string()))?;
        if header.stats.n_features() != header.net.dim {
            return Err(field_err("stats", "feature count differs from the network dimension"));
        }
        let mut params = ParamSet::<f32>::zeros(&header.net);
        let names = tensor_names(&header.net);
        if header.tensors.len() != names.len() {
            return Err(field_err(
                "tensors",
                &format!("{} tensors listed, architecture has {}", header.tensors.len(), names.len()),
            ));
        }
        for ((entry, name), dst) in header.tensors.iter().zip(&names).zip(params.tensors_mut()) {
            if &entry.name != name || entry.len != dst.len() {
                return Err(field_err(
                    &format!("tensors.{name}"),
                    &format!("expected {} values, found entry {} with {}", dst.len(), entry.name, entry.len),
                ));
            }
            let raw = r.take(4 * dst.len(), name)?;
            for (d, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
                *d = LittleEndian::read_f32(c);
            }
        }
        if !params.all_finite() {
            return Err(field_err("tensors", "non-finite parameter"));
        }
        let optimizer = match header.optimizer_step {
            None => None,
            Some(step) => {
                let lens: Vec<usize> = header.tensors.iter().map(|t| t.len).collect();
                let mut opt = OptimizerState::for_shapes(lens);
                opt.step = step;
                for (k, moments) in opt.m.iter_mut().chain(opt.v.iter_mut()).enumerate() {
                    let which = if k < names.len() { "m" } else { "v" };
                    let what = format!("optimizer.{which}.{}", names[k % names.len()]);
                    let raw = r.take(8 * moments.len(), &what)?;
                    for (d, c) in moments.iter_mut().zip(raw.chunks_exact(8)) {
                        *d = LittleEndian::read_f64(c);
                    }
                }
                Some(opt)
            }
        };
        if r.pos != bytes.len() {
            return Err(field_err("payload", &format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            net: header.net,
            params,
            stats: header.stats,
            train: header.train,
            epoch: header.epoch,
            monitored: header.monitored,
            best_monitored: header.best_monitored,
            rng_digest: header.rng_digest,
            optimizer,
            scheduler: header.scheduler,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    net: NetConfig,
    stats: PreprocessStats,
    train: TrainConfig,
    epoch: usize,
    monitored: Option<f64>,
    best_monitored: Option<f64>,
    rng_digest: String,
    tensors: Vec<TensorEntry>,
    optimizer_step: Option<u64>,
    scheduler: Option<PlateauScheduler>,
}

fn field_err(field: &str, reason: &str) -> Error {
    Error::Checkpoint { field: field.to_string(), reason: reason.to_string() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(field_err(
                field,
                &format!("truncated at byte {}: need {n} bytes, {} left", self.pos, self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// Writes via a temporary sibling and a rename, so an interrupted save never
/// leaves a half-written checkpoint behind.
pub fn save_checkpoint(path: impl AsRef<Path>, record: &CheckpointRecord) -> Result<()> {
    let path = path.as_ref();
    let bytes = record.to_bytes()?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointRecord> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CheckpointRecord::from_bytes(&bytes)
}
