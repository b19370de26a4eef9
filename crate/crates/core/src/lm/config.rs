use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONTEXT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Medium,
    Large,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Small, Preset::Medium, Preset::Large];

    /// `(layers, heads, model_dim)`.
    pub fn shape(self) -> (usize, usize, usize) {
        match self {
            Preset::Small => (2, 4, 128),
            Preset::Medium => (4, 4, 256),
            Preset::Large => (6, 8, 384),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Small => "small",
            Preset::Medium => "medium",
            Preset::Large => "large",
        }
    }

    pub(crate) fn code(preset: Option<Preset>) -> u8 {
        match preset {
            None => 0,
            Some(Preset::Small) => 1,
            Some(Preset::Medium) => 2,
            Some(Preset::Large) => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Option<Preset>> {
        match code {
            0 => Some(None),
            1 => Some(Some(Preset::Small)),
            2 => Some(Some(Preset::Medium)),
            3 => Some(Some(Preset::Large)),
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown model preset {s:?} (small, medium, large)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub context_len: usize,
    pub vocab_size: usize,
    /// `None` for hand-sized configurations such as test micro models.
    #[serde(default)]
    pub preset: Option<Preset>,
}

impl ModelConfig {
    pub fn from_preset(preset: Preset, vocab_size: usize, context_len: usize) -> Self {
        let (layers, heads, model_dim) = preset.shape();
        Self {
            layers,
            heads,
            model_dim,
            ff_dim: 4 * model_dim,
            context_len,
            vocab_size,
            preset: Some(preset),
        }
    }

    pub fn custom(
        layers: usize,
        heads: usize,
        model_dim: usize,
        ff_dim: usize,
        context_len: usize,
        vocab_size: usize,
    ) -> Self {
        Self {
            layers,
            heads,
            model_dim,
            ff_dim,
            context_len,
            vocab_size,
            preset: None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("model_dim", self.model_dim),
            ("ff_dim", self.ff_dim),
            ("context_len", self.context_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::validation(format!("model {name} must be positive")));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::validation(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.context_len < 2 {
            return Err(Error::validation("context_len must be at least 2"));
        }
        if let Some(p) = self.preset {
            let (l, h, d) = p.shape();
            if (l, h, d, 4 * d) != (self.layers, self.heads, self.model_dim, self.ff_dim) {
                return Err(Error::validation(format!("config does not match the {p} preset")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Indices into [`Layout::tensors`] for one transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockTensors {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_1: usize,
    pub b_1: usize,
    pub w_2: usize,
    pub b_2: usize,
}

/// Placement of every named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    pub(crate) wte: usize,
    pub(crate) wpe: usize,
    pub(crate) blocks: Vec<BlockTensors>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    pub(crate) head_w: usize,
    pub(crate) head_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut tensors: Vec<TensorInfo> = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let info = TensorInfo {
                name,
                shape,
                offset: total,
            };
            total += info.len();
            tensors.push(info);
            tensors.len() - 1
        };
        let (d, f, v) = (c.model_dim, c.ff_dim, c.vocab_size);
        let wte = add("wte".into(), vec![v, d]);
        let wpe = add("wpe".into(), vec![c.context_len, d]);
        let blocks = (0..c.layers)
            .map(|l| {
                let mut t = |s: &str, shape: Vec<usize>| add(format!("h{l}.{s}"), shape);
                BlockTensors {
                    ln1_g: t("ln1.g", vec![d]),
                    ln1_b: t("ln1.b", vec![d]),
                    w_qkv: t("attn.w_qkv", vec![d, 3 * d]),
                    b_qkv: t("attn.b_qkv", vec![3 * d]),
                    w_o: t("attn.w_o", vec![d, d]),
                    b_o: t("attn.b_o", vec![d]),
                    ln2_g: t("ln2.g", vec![d]),
                    ln2_b: t("ln2.b", vec![d]),
                    w_1: t("mlp.w_1", vec![d, f]),
                    b_1: t("mlp.b_1", vec![f]),
                    w_2: t("mlp.w_2", vec![f, d]),
                    b_2: t("mlp.b_2", vec![d]),
                }
            })
            .collect();
        let lnf_g = add("lnf.g".into(), vec![d]);
        let lnf_b = add("lnf.b".into(), vec![d]);
        let head_w = add("head.w".into(), vec![d, v]);
        let head_b = add("head.b".into(), vec![v]);
        Self {
            tensors,
            wte,
            wpe,
            blocks,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            total,
        }
    }

    pub(crate) fn get<'a, R>(&self, params: &'a [R], idx: usize) -> &'a [R] {
        &params[self.tensors[idx].range()]
    }

    pub(crate) fn get_mut<'a, R>(&self, params: &'a mut [R], idx: usize) -> &'a mut [R] {
        &mut params[self.tensors[idx].range()]
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
