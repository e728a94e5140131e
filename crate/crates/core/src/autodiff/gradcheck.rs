use super::{Graph, Tensor, Var};
use crate::Result;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// `|a - b| / max(1e-8, |a| + |b|)`
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Maximum relative error between reverse-mode and central-difference
/// gradients of the scalar `f` over every element of every input.
pub fn grad_check<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_sampled(inputs, usize::MAX, f)
}

/// Like [`grad_check`] but probes at most `max_per_input` evenly strided
/// elements of each input.
pub fn grad_check_sampled<F>(inputs: &[Tensor], max_per_input: usize, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = xs.iter().map(|t| g.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let n = inputs[i].numel();
        let stride = n.div_ceil(max_per_input.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let x0 = inputs[i].data()[j];
            probe[i].data_mut()[j] = x0 + GRAD_CHECK_STEP;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = x0 - GRAD_CHECK_STEP;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = x0;
            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}
