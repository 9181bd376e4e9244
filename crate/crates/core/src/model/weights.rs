//! Named parameter tensors and their on-disk container.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes   "UVITWTS1"
//! length    u64       byte length of the manifest
//! manifest  JSON      {"tensors": [{"name": str, "dims": [int]}, ...]}
//! payload   f64 LE    every tensor's data, in manifest order
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"UVITWTS1";

/// Parameters of one pre-norm encoder block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub qkv_weight: Tensor,
    pub qkv_bias: Tensor,
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub ffn1_weight: Tensor,
    pub ffn1_bias: Tensor,
    pub ffn2_weight: Tensor,
    pub ffn2_bias: Tensor,
}

impl BlockWeights {
    pub const FIELDS: [&'static str; 12] = [
        "ln1.gamma",
        "ln1.beta",
        "qkv.weight",
        "qkv.bias",
        "proj.weight",
        "proj.bias",
        "ln2.gamma",
        "ln2.beta",
        "ffn1.weight",
        "ffn1.bias",
        "ffn2.weight",
        "ffn2.bias",
    ];

    /// Expected dims of each field for hidden size `d`, in [`Self::FIELDS`] order.
    pub fn shapes(d: usize) -> [Vec<usize>; 12] {
        [
            vec![d],
            vec![d],
            vec![d, 3 * d],
            vec![3 * d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, 4 * d],
            vec![4 * d],
            vec![4 * d, d],
            vec![d],
        ]
    }

    /// All-zero projections with unit gammas.
    pub fn identity_init(d: usize) -> Self {
        let [a, b, c, e, f, g, h, i, j, k, l, m] = Self::shapes(d);
        Self {
            ln1_gamma: Tensor::full(&a, 1.0),
            ln1_beta: Tensor::zeros(&b),
            qkv_weight: Tensor::zeros(&c),
            qkv_bias: Tensor::zeros(&e),
            proj_weight: Tensor::zeros(&f),
            proj_bias: Tensor::zeros(&g),
            ln2_gamma: Tensor::full(&h, 1.0),
            ln2_beta: Tensor::zeros(&i),
            ffn1_weight: Tensor::zeros(&j),
            ffn1_bias: Tensor::zeros(&k),
            ffn2_weight: Tensor::zeros(&l),
            ffn2_bias: Tensor::zeros(&m),
        }
    }

    pub fn hidden(&self) -> usize {
        self.ln1_gamma.len()
    }

    pub fn tensors(&self) -> [&Tensor; 12] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.qkv_weight,
            &self.qkv_bias,
            &self.proj_weight,
            &self.proj_bias,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.ffn1_weight,
            &self.ffn1_bias,
            &self.ffn2_weight,
            &self.ffn2_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.qkv_weight,
            &mut self.qkv_bias,
            &mut self.proj_weight,
            &mut self.proj_bias,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.ffn1_weight,
            &mut self.ffn1_bias,
            &mut self.ffn2_weight,
            &mut self.ffn2_bias,
        ]
    }

    /// Checks every field against the shapes for its hidden size.
    pub fn validate(&self) -> Result<()> {
        let d = self.hidden();
        for ((name, t), want) in Self::FIELDS.iter().zip(self.tensors()).zip(Self::shapes(d)) {
            if t.dims() != want.as_slice() {
                return Err(dim_err(format!(
                    "block {name} has dims {:?}, want {want:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn from_set(set: &WeightSet, prefix: &str) -> Result<Self> {
        let get = |field: &str| set.require(&format!("{prefix}.{field}")).cloned();
        let w = Self {
            ln1_gamma: get("ln1.gamma")?,
            ln1_beta: get("ln1.beta")?,
            qkv_weight: get("qkv.weight")?,
            qkv_bias: get("qkv.bias")?,
            proj_weight: get("proj.weight")?,
            proj_bias: get("proj.bias")?,
            ln2_gamma: get("ln2.gamma")?,
            ln2_beta: get("ln2.beta")?,
            ffn1_weight: get("ffn1.weight")?,
            ffn1_bias: get("ffn1.bias")?,
            ffn2_weight: get("ffn2.weight")?,
            ffn2_bias: get("ffn2.bias")?,
        };
        w.validate()?;
        Ok(w)
    }
}

/// Patch projection and position table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedWeights {
    /// `p×p×3×d`.
    pub kernel: Tensor,
    pub bias: Tensor,
    /// `g_h×g_w×d`.
    pub pos: Tensor,
    /// Class token and its position embedding, classification mode only.
    pub class_token: Option<(Tensor, Tensor)>,
}

impl EmbedWeights {
    pub fn hidden(&self) -> usize {
        self.bias.len()
    }

    pub fn patch(&self) -> usize {
        self.kernel.dims()[0]
    }
}

/// Model parameters keyed by dotted name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightSet {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dims: Vec<usize>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing weight '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> u64 {
        self.tensors.values().map(|t| t.len() as u64).sum()
    }

    pub fn insert_block(&mut self, prefix: &str, block: BlockWeights) {
        let BlockWeights {
            ln1_gamma,
            ln1_beta,
            qkv_weight,
            qkv_bias,
            proj_weight,
            proj_bias,
            ln2_gamma,
            ln2_beta,
            ffn1_weight,
            ffn1_bias,
            ffn2_weight,
            ffn2_bias,
        } = block;
        let values = [
            ln1_gamma,
            ln1_beta,
            qkv_weight,
            qkv_bias,
            proj_weight,
            proj_bias,
            ln2_gamma,
            ln2_beta,
            ffn1_weight,
            ffn1_bias,
            ffn2_weight,
            ffn2_bias,
        ];
        for (field, t) in BlockWeights::FIELDS.iter().zip(values) {
            self.insert(format!("{prefix}.{field}"), t);
        }
    }

    pub fn block(&self, prefix: &str) -> Result<BlockWeights> {
        BlockWeights::from_set(self, prefix)
    }

    pub fn embed(&self) -> Result<EmbedWeights> {
        let class_token = match (self.get("embed.cls"), self.get("embed.cls_pos")) {
            (Some(c), Some(p)) => Some((c.clone(), p.clone())),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "class token and its position must come together".into(),
                ))
            }
        };
        Ok(EmbedWeights {
            kernel: self.require("embed.kernel")?.clone(),
            bias: self.require("embed.bias")?.clone(),
            pos: self.require("embed.pos")?.clone(),
            class_token,
        })
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let manifest = Manifest {
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| ManifestEntry {
                    name: name.clone(),
                    dims: t.dims().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        out.write_all(MAGIC)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for t in self.tensors.values() {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a weight container (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len))
            .map_err(|_| Error::Config("manifest too large".into()))?;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let manifest: Manifest = serde_json::from_slice(&json)?;

        let mut set = WeightSet::new();
        let mut buf = [0u8; 8];
        for entry in manifest.tensors {
            let n: usize = entry.dims.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                input.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            set.insert(entry.name, Tensor::new(entry.dims, data)?);
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
