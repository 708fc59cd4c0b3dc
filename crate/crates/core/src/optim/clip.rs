use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ParamSet;

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied (1 when nothing was clipped).
pub fn clip_gradients<T: Scalar>(params: &mut ParamSet<T>, max_norm: T) -> Result<T> {
    let norm = params.grad_norm();
    if !norm.is_finite() {
        let bad = params
            .iter()
            .find(|(_, _, t)| t.grad().is_some_and(|g| g.iter().any(|x| !x.is_finite())))
            .map_or("?", |(_, name, _)| name);
        return Err(Error::Training(format!(
            "non-finite gradient in parameter {bad}"
        )));
    }
    if norm <= max_norm {
        return Ok(T::one());
    }
    let factor = max_norm / norm;
    for id in params.ids().collect::<Vec<_>>() {
        let t = params.get_mut(id);
        if t.grad().is_some() {
            t.grad_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }
    Ok(factor)
}
