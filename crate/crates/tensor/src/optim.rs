use crate::error::{Result, TensorError};
use crate::param::ParamStore;

/// Parameter update rule. Implementations keep whatever per-parameter state
/// they need between steps; `lr` is scaled per parameter by `lr_scale`.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;
    fn step(&mut self, store: &mut ParamStore, lr: f32) -> Result<()>;
}

fn missing(name: &str) -> TensorError {
    TensorError::Usage(format!("parameter `{name}` has no gradient buffer"))
}

/// Stochastic gradient descent, optionally with heavy-ball momentum.
#[derive(Clone, Debug, Default)]
pub struct Sgd {
    pub momentum: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(momentum: f32) -> Self {
        Self { momentum, velocity: Vec::new() }
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, store: &mut ParamStore, lr: f32) -> Result<()> {
        if self.velocity.len() != store.len() {
            self.velocity = store.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        }
        for (p, vel) in store.iter_mut().zip(&mut self.velocity) {
            if !p.trainable {
                continue;
            }
            let step = lr * p.lr_scale;
            let (w, g) = p.tensor.value_and_grad_mut();
            let g = g.ok_or_else(|| missing(&p.name))?;
            if self.momentum == 0.0 {
                w.iter_mut().zip(g).for_each(|(w, g)| *w -= step * g);
            } else {
                for ((w, g), v) in w.iter_mut().zip(g).zip(vel.iter_mut()) {
                    *v = self.momentum * *v + g;
                    *w -= step * *v;
                }
            }
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl Adam {
    pub fn steps_taken(&self) -> i32 {
        self.t
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, store: &mut ParamStore, lr: f32) -> Result<()> {
        if self.m.len() != store.len() {
            self.m = store.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - (self.beta1 as f64).powi(self.t);
        let c2 = 1.0 - (self.beta2 as f64).powi(self.t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let step = (lr * p.lr_scale) as f64;
            let (w, g) = p.tensor.value_and_grad_mut();
            let g = g.ok_or_else(|| missing(&p.name))?;
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] as f64 / c1;
                let v_hat = v[i] as f64 / c2;
                w[i] -= (step * m_hat / (v_hat.sqrt() + self.eps as f64)) as f32;
            }
        }
        Ok(())
    }
}
