//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Per input: `|analytic - numeric|_2 / max(|analytic|_2 + |numeric|_2, 1e-8)`.
    pub relative_errors: Vec<f64>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares tape gradients of a scalar function against central differences
/// with step `h`. `build` receives one leaf per input tensor and must return
/// a scalar node.
pub fn check_gradients<F>(inputs: &[Tensor], h: f32, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = values.iter().map(|t| g.input(t.clone())).collect::<Result<Vec<_>>>()?;
        let out = build(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut relative_errors = Vec::with_capacity(inputs.len());
    for (slot, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(*var) {
            Some(gr) => gr.iter().map(|&v| v as f64).collect(),
            None => vec![0.0; inputs[slot].numel()],
        };
        let mut probe = inputs.to_vec();
        let mut num = 0.0f64;
        let mut den_a = 0.0f64;
        let mut den_n = 0.0f64;
        for i in 0..inputs[slot].numel() {
            let orig = inputs[slot].data()[i];
            probe[slot].data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe[slot].data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe[slot].data_mut()[i] = orig;
            // Use the step actually representable in f32.
            let step = (orig + h) as f64 - (orig - h) as f64;
            let numeric = (plus - minus) / step;
            num += (analytic[i] - numeric).powi(2);
            den_a += analytic[i].powi(2);
            den_n += numeric.powi(2);
        }
        relative_errors.push(num.sqrt() / (den_a.sqrt() + den_n.sqrt()).max(1e-8));
    }
    Ok(GradCheck { relative_errors })
}
