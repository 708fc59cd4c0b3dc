use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Floor applied to probabilities inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// `−(1/N) Σ_j ω(c_j) · log₂ ŷ_j[c_j]` over the `N` rows of `probs`.
///
/// Unlabeled rows (`None`) count towards `N` but add nothing, the same as
/// a label whose class weight is zero.
pub fn weighted_ce<T: Scalar>(
    g: &mut Graph<'_, T>,
    probs: Var,
    labels: &[Option<usize>],
    weights: &[f64],
) -> Result<Var> {
    let rows = g.shape(probs)[0];
    if labels.len() != rows {
        return Err(Error::Contract(format!(
            "{} labels for {rows} prediction rows",
            labels.len()
        )));
    }
    let mut targets = Vec::with_capacity(rows);
    for (j, label) in labels.iter().enumerate() {
        if let Some(c) = *label {
            let w = *weights
                .get(c)
                .ok_or_else(|| Error::Contract(format!("label {c} has no class weight")))?;
            targets.push((j, c, T::lit(w)));
        }
    }
    g.weighted_nll_log2(probs, &targets, T::lit(rows as f64), T::lit(LOG_FLOOR))
}
