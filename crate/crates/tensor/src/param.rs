use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A named tensor owned by a model. Non-trainable entries hold buffers such
/// as batch-norm running statistics; they are checkpointed but never stepped.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
    /// Multiplier applied to the optimizer learning rate.
    pub lr_scale: f32,
}

/// Ordered collection of parameters with unique names.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Batch moments recorded by a training-mode batch norm, to be folded into
/// the running statistics once the step completes.
#[derive(Clone, Debug)]
pub struct RunningUpdate {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub batch_mean: Vec<f32>,
    pub batch_var: Vec<f32>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(TensorError::Usage(format!("duplicate parameter name `{name}`")));
        }
        tensor.set_requires_grad(trainable);
        if trainable {
            tensor.zero_grad();
        }
        self.params.push(Parameter { name, tensor, trainable, lr_scale: 1.0 });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            p.tensor.zero_grad();
        }
    }

    pub fn set_lr_scale_by_prefix(&mut self, prefix: &str, scale: f32) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.lr_scale = scale;
        }
    }

    /// Exponential moving average update: `running = (1 - momentum) * running + momentum * batch`.
    pub fn apply_running_updates(&mut self, updates: &[RunningUpdate], momentum: f32) {
        for u in updates {
            for (id, batch) in [(u.mean_id, &u.batch_mean), (u.var_id, &u.batch_var)] {
                for (r, b) in self.params[id.0].tensor.data_mut().iter_mut().zip(batch) {
                    *r = (1.0 - momentum) * *r + momentum * b;
                }
            }
        }
    }

    /// Replaces values from `(name, tensor)` pairs. Every stored parameter must
    /// be present with a matching shape.
    pub fn load_named(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        if entries.len() != self.params.len() {
            return Err(TensorError::Format(format!(
                "checkpoint has {} entries, model expects {}",
                entries.len(),
                self.params.len()
            )));
        }
        for (name, tensor) in entries {
            let id = self
                .find(&name)
                .ok_or_else(|| TensorError::Format(format!("unknown parameter `{name}` in checkpoint")))?;
            let p = &mut self.params[id.0];
            if p.tensor.shape() != tensor.shape() {
                return Err(TensorError::Format(format!(
                    "parameter `{name}` has shape {:?}, checkpoint holds {:?}",
                    p.tensor.shape(),
                    tensor.shape()
                )));
            }
            p.tensor.data_mut().copy_from_slice(tensor.data());
        }
        Ok(())
    }
}

/// Fills a parameter with zero-mean Gaussian values of standard deviation
/// `sqrt(2 / fan_in)`. Deterministic in `seed`.
pub fn msra_init(param: &mut Parameter, fan_in: usize, seed: u64) -> Result<()> {
    if fan_in == 0 {
        return Err(TensorError::Usage(format!("fan_in of `{}` must be positive", param.name)));
    }
    let std = msra_std(fan_in);
    let normal = Normal::new(0.0f32, std).expect("finite positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in param.tensor.data_mut() {
        *v = normal.sample(&mut rng);
    }
    Ok(())
}

pub fn msra_std(fan_in: usize) -> f32 {
    (2.0 / fan_in as f64).sqrt() as f32
}

/// Stable 64-bit FNV-1a hash, used to derive per-parameter seeds from names.
pub fn name_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(len: usize) -> Parameter {
        Parameter { name: "w".into(), tensor: Tensor::zeros(&[len]), trainable: true, lr_scale: 1.0 }
    }

    #[test]
    fn std_closed_form() {
        assert_eq!(msra_std(2), 1.0);
    }

    #[test]
    fn empirical_std_matches() {
        let mut p = param(100_000);
        msra_init(&mut p, 50, 11).unwrap();
        let n = p.tensor.numel() as f64;
        let mean = p.tensor.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = p.tensor.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let target = (2.0f64 / 50.0).sqrt();
        assert!((var.sqrt() - target).abs() / target < 0.05);
    }

    #[test]
    fn same_seed_same_buffer() {
        let (mut a, mut b) = (param(64), param(64));
        msra_init(&mut a, 9, 3).unwrap();
        msra_init(&mut b, 9, 3).unwrap();
        let bits = |p: &Parameter| p.tensor.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(msra_init(&mut param(4), 0, 1).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::zeros(&[1]), true).unwrap();
        assert!(s.add("a", Tensor::zeros(&[1]), true).is_err());
    }
}
