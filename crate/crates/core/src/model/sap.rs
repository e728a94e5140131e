use crate::autodiff::{Graph, Var};
use crate::{Error, Result};

/// Attention pooling: `alpha = softmax(keys * w)` over time and
/// `z = alpha^T * features`.
///
/// `features` is `T x H`, `keys` is `T x D`, `w` is `D x 1`. Returns the
/// pooled `1 x H` vector and the `T x 1` attention weights. With the
/// prosodic track as keys, the weights depend only on the track and `w`.
pub fn sap_forward(g: &mut Graph, features: Var, keys: Var, w: Var) -> Result<(Var, Var)> {
    let (tf, tk) = (g.value(features).rows(), g.value(keys).rows());
    if tf != tk {
        return Err(Error::Alignment { from: tk, to: tf });
    }
    let scores = g.matmul(keys, w)?;
    let alpha = g.softmax(scores)?;
    let row = g.reshape(alpha, &[1, tf])?;
    let pooled = g.matmul(row, features)?;
    Ok((pooled, alpha))
}
