use rand::Rng;

use super::Variant;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamSet, Tensor, Var};

/// `tanh(W·[features] + b)` with `W` of shape `d_out×d_cat`.
///
/// `d_cat` is fixed by the variant: `2·d_hid`, `d_ind + 2·d_hid` or
/// `d_ind + 4·d_hid`.
#[derive(Debug, Clone)]
pub struct FusionLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub variant: Variant,
    pub d_ind: usize,
    pub d_hid: usize,
    pub d_out: usize,
}

impl FusionLayer {
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        variant: Variant,
        d_ind: usize,
        d_hid: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_width(
            params,
            prefix,
            variant,
            d_ind,
            d_hid,
            d_out,
            variant.fusion_width(d_ind, d_hid),
            rng,
        )
    }

    /// Like [`FusionLayer::new`] with an explicit concatenation width,
    /// which must equal the one the variant implies.
    #[allow(clippy::too_many_arguments)]
    pub fn with_width<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        variant: Variant,
        d_ind: usize,
        d_hid: usize,
        d_out: usize,
        d_cat: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let expected = variant.fusion_width(d_ind, d_hid);
        if d_cat != expected {
            return Err(Error::dim(
                "fusion",
                format!("{variant} needs concatenation width {expected}, got {d_cat}"),
            ));
        }
        if d_out == 0 {
            return Err(Error::Config(format!(
                "{prefix}: output width must be positive"
            )));
        }
        let bound = 1.0 / (d_out as f64).sqrt();
        let w = params.add(
            format!("{prefix}.W"),
            Tensor::uniform(&[d_out, d_cat], bound, rng),
        )?;
        let b = params.add(format!("{prefix}.b"), Tensor::zeros(&[d_out]))?;
        Ok(FusionLayer {
            w,
            b,
            variant,
            d_ind,
            d_hid,
            d_out,
        })
    }

    pub fn d_cat(&self) -> usize {
        self.variant.fusion_width(self.d_ind, self.d_hid)
    }

    /// Fuses per-position features, all `L×·` matrices, in the order
    /// `[left; fwd; individual; bwd; right]` (unused parts dropped by variant).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        fwd: Var,
        individual: Var,
        bwd: Var,
        attn: Option<(Var, Var)>,
    ) -> Result<Var> {
        let parts = match (self.variant, attn) {
            (Variant::Plain, _) => vec![fwd, bwd],
            (Variant::Fused, _) => vec![fwd, individual, bwd],
            (Variant::SelfAttnFused, Some((left, right))) => {
                vec![left, fwd, individual, bwd, right]
            }
            (Variant::SelfAttnFused, None) => {
                return Err(Error::Contract(
                    "higru-sf fusion needs attention contexts".into(),
                ))
            }
        };
        let hs = g.concat(&parts, 1)?;
        let width = g.shape(hs)[1];
        if width != self.d_cat() {
            return Err(Error::dim(
                "fusion",
                format!(
                    "{} expects concatenation width {}, got {width}",
                    self.variant,
                    self.d_cat()
                ),
            ));
        }
        let (w, b) = (g.param(self.w), g.param(self.b));
        let wt = g.transpose(w)?;
        let lin = g.matmul(hs, wt)?;
        let lin = g.add(lin, b)?;
        Ok(g.tanh(lin))
    }
}
