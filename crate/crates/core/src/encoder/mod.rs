//! Bidirectional GRU encoders for words and utterances, with the three
//! fusion schemes and directional dot-product self-attention.

mod attention;
mod fusion;
mod gru;

pub use attention::directional_self_attention;
pub use fusion::FusionLayer;
pub use gru::{BiGru, GruCell};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Mode, ParamSet, Var};

/// Which features the fusion layers see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `[fwd; bwd]`
    #[serde(rename = "higru")]
    Plain,
    /// `[fwd; individual; bwd]`
    #[serde(rename = "higru-f")]
    Fused,
    /// `[left-attn; fwd; individual; bwd; right-attn]`
    #[serde(rename = "higru-sf")]
    SelfAttnFused,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Plain, Variant::Fused, Variant::SelfAttnFused];

    /// Width of the concatenation fed to a fusion layer whose individual
    /// input has width `d_ind` and whose GRU hidden size is `d_hid`.
    pub fn fusion_width(self, d_ind: usize, d_hid: usize) -> usize {
        match self {
            Variant::Plain => 2 * d_hid,
            Variant::Fused => d_ind + 2 * d_hid,
            Variant::SelfAttnFused => d_ind + 4 * d_hid,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "higru",
            Variant::Fused => "higru-f",
            Variant::SelfAttnFused => "higru-sf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?} (expected higru, higru-f or higru-sf)"
                ))
            })
    }
}

/// One level of the hierarchy: a BiGRU followed by a fusion layer.
#[derive(Debug, Clone)]
pub struct LevelEncoder {
    pub bigru: BiGru,
    pub fusion: FusionLayer,
    pub variant: Variant,
}

impl LevelEncoder {
    /// `d_in` is both the GRU input width and the individual-feature width.
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        variant: Variant,
        d_in: usize,
        d_hid: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bigru = BiGru::new(params, &format!("{prefix}.gru"), d_in, d_hid, rng)?;
        let fusion = FusionLayer::new(
            params,
            &format!("{prefix}.fusion"),
            variant,
            d_in,
            d_hid,
            d_out,
            rng,
        )?;
        Ok(LevelEncoder {
            bigru,
            fusion,
            variant,
        })
    }

    /// Contextual embeddings for every position of `inputs` (`L×d_in`).
    ///
    /// Only the first `valid` rows are real; the recurrence stops there and
    /// attention masks the rest. Rows past `valid` in the result are
    /// meaningless and must be ignored by the caller.
    pub fn contextual<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        inputs: Var,
        valid: usize,
        dropout: f64,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let (fwd, bwd) = self.bigru.run(g, inputs, valid)?;
        let attn = match self.variant {
            Variant::SelfAttnFused => {
                let (left, _) = directional_self_attention(g, fwd, valid)?;
                let (right, _) = directional_self_attention(g, bwd, valid)?;
                Some((left, right))
            }
            _ => None,
        };
        let fused = self.fusion.forward(g, fwd, inputs, bwd, attn)?;
        g.dropout(fused, dropout, mode)
    }
}

/// Individual utterance embedding `e(u)`: contextual word embeddings
/// max-pooled over the `valid` real words. Returns a `d_out` vector.
pub fn encode_utterance<T: Scalar>(
    g: &mut Graph<'_, T>,
    level: &LevelEncoder,
    word_embeddings: Var,
    valid: usize,
    dropout: f64,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    if valid == 0 {
        return Err(Error::EmptySequence("encode_utterance"));
    }
    let ctx = level.contextual(g, word_embeddings, valid, dropout, mode)?;
    g.max_over_time(ctx, valid)
}

/// Contextual utterance embeddings for the first `valid` utterances
/// (`valid×d_out`), one per utterance.
pub fn encode_dialogue<T: Scalar>(
    g: &mut Graph<'_, T>,
    level: &LevelEncoder,
    utterance_embeddings: Var,
    valid: usize,
    dropout: f64,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    if valid == 0 {
        return Err(Error::EmptySequence("encode_dialogue"));
    }
    let ctx = level.contextual(g, utterance_embeddings, valid, dropout, mode)?;
    if g.shape(ctx)[0] == valid {
        Ok(ctx)
    } else {
        g.slice_rows(ctx, 0, valid)
    }
}
