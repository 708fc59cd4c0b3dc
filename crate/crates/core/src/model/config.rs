use serde::{Deserialize, Serialize};

use crate::encoder::Variant;
use crate::error::{Error, Result};

/// Architecture of a HiGRU model. Every parameter shape derives from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Word embedding width.
    pub d0: usize,
    /// Lower-level hidden width, also the utterance embedding width.
    pub d1: usize,
    /// Upper-level hidden width.
    pub d2: usize,
    /// Hidden layer widths of the classifier head.
    pub fc_hidden: Vec<usize>,
    pub dropout: f64,
    pub num_classes: usize,
    pub vocab_size: usize,
    pub trainable_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::SelfAttnFused,
            d0: 300,
            d1: 300,
            d2: 300,
            fc_hidden: vec![100, 100],
            dropout: 0.5,
            num_classes: 4,
            vocab_size: 2,
            trainable_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d0", self.d0),
            ("d1", self.d1),
            ("d2", self.d2),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.fc_hidden.contains(&0) {
            return Err(Error::Config(
                "classifier hidden widths must be positive".into(),
            ));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config(
                "vocabulary must hold at least the PAD and UNK entries".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn word_fusion_width(&self) -> usize {
        self.variant.fusion_width(self.d0, self.d1)
    }

    pub fn utterance_fusion_width(&self) -> usize {
        self.variant.fusion_width(self.d1, self.d2)
    }

    /// Total learnable scalars, embeddings included.
    pub fn num_parameters(&self) -> usize {
        let gru = |d_in: usize, d_hid: usize| 3 * (d_in * d_hid + d_hid * d_hid + d_hid);
        let mut total = self.vocab_size * self.d0;
        total += 2 * gru(self.d0, self.d1) + self.d1 * self.word_fusion_width() + self.d1;
        total += 2 * gru(self.d1, self.d2) + self.d2 * self.utterance_fusion_width() + self.d2;
        let mut width = self.d2;
        for &h in &self.fc_hidden {
            total += width * h + h;
            width = h;
        }
        total + width * self.num_classes + self.num_classes
    }
}
