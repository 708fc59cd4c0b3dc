use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Dot-product self-attention over one direction's hidden states.
///
/// `states` is `L×d`; position `k < valid` attends to every `p < valid`
/// (itself included) with weights `softmax_p(h_k·h_p)`. Returns the
/// attended contexts (`L×d`) and the `L×L` weight matrix, whose masked
/// columns and padding rows are exactly zero.
pub fn directional_self_attention<T: Scalar>(
    g: &mut Graph<'_, T>,
    states: Var,
    valid: usize,
) -> Result<(Var, Var)> {
    let keys = g.transpose(states)?;
    let scores = g.matmul(states, keys)?;
    let weights = g.masked_softmax(scores, valid)?;
    let context = g.matmul(weights, states)?;
    Ok((context, weights))
}
