//! Named parameter tensors with gradient accumulators and JSON checkpoints.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

const CHECKPOINT_FORMAT: &str = "circopt-params";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        self.grads.push(Tensor::zeros(&value.shape));
        self.values.push(value);
        self.names.push(name.to_string());
        ParamId(self.values.len() - 1)
    }

    /// A `[fan_in, fan_out]` (or `[fan_out]` bias) tensor drawn uniformly from
    /// `±1/sqrt(fan_in)`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::new(shape, data).expect("size from shape"))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Overwrite values from another store with the identical manifest.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_manifest(other.names.iter().zip(other.values.iter().map(|t| &t.shape)))?;
        self.values.clone_from(&other.values);
        Ok(())
    }

    fn check_manifest<'a>(&self, items: impl ExactSizeIterator<Item = (&'a String, &'a Vec<usize>)>) -> Result<()> {
        if items.len() != self.values.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", self.values.len(), items.len())));
        }
        for (i, (name, shape)) in items.enumerate() {
            if *name != self.names[i] || *shape != self.values[i].shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: expected `{}` {:?}, found `{name}` {shape:?}",
                    self.names[i], self.values[i].shape
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            tensors: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(n, t)| NamedTensor { name: n.clone(), shape: t.shape.clone(), values: t.data.clone() })
                .collect(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    /// Load values into this store; names and shapes must match exactly.
    pub fn load_json(&mut self, text: &str) -> Result<()> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        self.check_manifest(ck.tensors.iter().map(|t| (&t.name, &t.shape)).collect::<Vec<_>>().into_iter())?;
        for (slot, t) in self.values.iter_mut().zip(ck.tensors) {
            *slot = Tensor::new(&t.shape, t.values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        self.load_json(&std::fs::read_to_string(path)?)
    }
}

/// Deterministic generator for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
