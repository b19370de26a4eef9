//! Binary checkpoint: magic `CTLC`, format version, config block, vocabulary
//! digest, trained stage names, sampler RNG state, then named tensors as
//! row-major little-endian `f32` with explicit shapes. All integers are
//! little-endian.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Preset};
use super::model::Model;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CTLC";
pub const FORMAT_VERSION: u32 = 1;

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        Self::capture(&ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab_digest: [u8; 32],
    pub trained_stages: Vec<String>,
    pub rng_state: RngState,
}

impl Checkpoint {
    /// A freshly initialized model bound to a vocabulary.
    pub fn init(config: ModelConfig, seed: u64, vocab_digest: [u8; 32]) -> Result<Self> {
        Ok(Self {
            model: Model::init(config, seed)?,
            vocab_digest,
            trained_stages: Vec::new(),
            rng_state: RngState::from_seed(seed),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.model.config();
        let mut out = Vec::with_capacity(64 + self.model.params().len() * 4);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        for v in [c.layers, c.heads, c.model_dim, c.ff_dim, c.context_len, c.vocab_size] {
            put_u32(&mut out, v as u32);
        }
        out.push(Preset::code(c.preset));
        out.extend_from_slice(&self.vocab_digest);
        put_u32(&mut out, self.trained_stages.len() as u32);
        for s in &self.trained_stages {
            put_str(&mut out, s);
        }
        out.extend_from_slice(&self.rng_state.seed);
        out.extend_from_slice(&self.rng_state.word_pos.to_le_bytes());
        let layout = self.model.layout();
        put_u32(&mut out, layout.tensors.len() as u32);
        for t in &layout.tensors {
            put_str(&mut out, &t.name);
            put_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                put_u32(&mut out, d as u32);
            }
            for p in &self.model.params()[t.range()] {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let preset = Preset::from_code(r.take(1)?[0]).ok_or("unknown preset code")?;
        let config = ModelConfig {
            layers: dims[0],
            heads: dims[1],
            model_dim: dims[2],
            ff_dim: dims[3],
            context_len: dims[4],
            vocab_size: dims[5],
            preset,
        };
        config.validate().map_err(|e| e.to_string())?;
        let vocab_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let n_stages = r.u32()?;
        let trained_stages = (0..n_stages)
            .map(|_| r.string())
            .collect::<std::result::Result<_, _>>()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));

        let layout = super::config::Layout::new(&config);
        let n_tensors = r.u32()? as usize;
        if n_tensors != layout.tensors.len() {
            return Err(format!("expected {} tensors, found {n_tensors}", layout.tensors.len()));
        }
        let mut params = vec![0f32; layout.total];
        for t in &layout.tensors {
            let name = r.string()?;
            if name != t.name {
                return Err(format!("expected tensor {}, found {name}", t.name));
            }
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if shape != t.shape {
                return Err(format!(
                    "tensor {name} has shape {shape:?}, config implies {:?}",
                    t.shape
                ));
            }
            let data = r.take(t.len() * 4)?;
            for (p, chunk) in params[t.range()].iter_mut().zip(data.chunks_exact(4)) {
                *p = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Self {
            model: Model::from_params(config, params).map_err(|e| e.to_string())?,
            vocab_digest,
            trained_stages,
            rng_state: RngState { seed, word_pos },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid utf-8 in checkpoint".into())
    }
}
