use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// One LSTM layer's parameter nodes. Gate columns are ordered
/// input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmLayer {
    /// `C_in x 4H`
    pub w_ih: Var,
    /// `H x 4H`
    pub w_hh: Var,
    /// `4H`
    pub bias: Var,
}

/// Unrolled multi-layer LSTM with zero initial state. Returns the top
/// layer's full hidden sequence, `T x H`.
pub fn lstm_forward(g: &mut Graph, x: Var, layers: &[LstmLayer]) -> Result<Var> {
    let mut input = x;
    for layer in layers {
        let four_h = g.value(layer.w_hh).cols();
        let hidden = g.value(layer.w_hh).rows();
        if four_h != 4 * hidden || g.value(layer.w_ih).cols() != four_h {
            return Err(Error::ShapeMismatch {
                op: "lstm",
                lhs: g.value(layer.w_ih).shape().to_vec(),
                rhs: g.value(layer.w_hh).shape().to_vec(),
            });
        }
        let steps = g.value(input).rows();
        let projected = g.matmul(input, layer.w_ih)?;
        let projected = g.add_row_bias(projected, layer.bias)?;
        let mut h = g.constant(Tensor::zeros(&[1, hidden]))?;
        let mut c = g.constant(Tensor::zeros(&[1, hidden]))?;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.rows(projected, t, 1)?;
            let rec = g.matmul(h, layer.w_hh)?;
            let gates = g.add(xt, rec)?;
            let i = g.cols(gates, 0, hidden)?;
            let i = g.sigmoid(i)?;
            let f = g.cols(gates, hidden, hidden)?;
            let f = g.sigmoid(f)?;
            let cand = g.cols(gates, 2 * hidden, hidden)?;
            let cand = g.tanh(cand)?;
            let o = g.cols(gates, 3 * hidden, hidden)?;
            let o = g.sigmoid(o)?;
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            c = g.add(keep, write)?;
            let squashed = g.tanh(c)?;
            h = g.mul(o, squashed)?;
            outputs.push(h);
        }
        input = g.stack_rows(&outputs)?;
    }
    Ok(input)
}
