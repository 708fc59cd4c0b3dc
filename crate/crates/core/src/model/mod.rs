//! The assembled HiGRU network: embedding lookup, word-level encoder,
//! utterance-level encoder and a feed-forward classifier head.

mod checkpoint;
mod config;

pub use crate::encoder::Variant;
pub use checkpoint::{Checkpoint, CheckpointMeta, NamedArray};
pub use config::ModelConfig;

use rand::Rng;

use crate::data::{Dialogue, EmbeddingMatrix, PAD};
use crate::encoder::{encode_dialogue, encode_utterance, LevelEncoder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Mode, ParamId, ParamSet, Tensor, Var};

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (d_out as f64).sqrt();
        let w = params.add(
            format!("{prefix}.W"),
            Tensor::uniform(&[d_out, d_in], bound, rng),
        )?;
        let b = params.add(format!("{prefix}.b"), Tensor::zeros(&[d_out]))?;
        Ok(Dense { w, b })
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        let wt = g.transpose(w)?;
        let y = g.matmul(x, wt)?;
        g.add(y, b)
    }
}

/// Output nodes of one forward pass, both `N×|C|`.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub logits: Var,
    pub probs: Var,
}

/// A dialogue padded to a rectangular block: every utterance has
/// `max_len` token slots and there are `max_utts` utterance slots, of
/// which the first `valid` are real.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedDialogue {
    pub tokens: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub valid: usize,
}

impl PaddedDialogue {
    pub fn new(dialogue: &Dialogue, max_len: usize, max_utts: usize) -> Result<Self> {
        if dialogue.is_empty() {
            return Err(Error::Contract(format!(
                "dialogue {:?} is empty",
                dialogue.id
            )));
        }
        if max_utts < dialogue.len() {
            return Err(Error::Contract(format!(
                "{} utterances do not fit {max_utts} slots",
                dialogue.len()
            )));
        }
        let mut tokens = Vec::with_capacity(max_utts);
        let mut lengths = Vec::with_capacity(max_utts);
        for u in &dialogue.utterances {
            if u.tokens.len() > max_len {
                return Err(Error::Contract(format!(
                    "{} tokens do not fit {max_len} slots",
                    u.tokens.len()
                )));
            }
            let mut row = u.tokens.clone();
            row.resize(max_len, PAD);
            tokens.push(row);
            lengths.push(u.tokens.len());
        }
        tokens.resize(max_utts, vec![PAD; max_len]);
        lengths.resize(max_utts, 0);
        Ok(PaddedDialogue {
            tokens,
            lengths,
            valid: dialogue.len(),
        })
    }
}

/// HiGRU model generic over its scalar type.
#[derive(Debug, Clone)]
pub struct HiGru<T> {
    config: ModelConfig,
    params: ParamSet<T>,
    embedding: ParamId,
    word: LevelEncoder,
    utterance: LevelEncoder,
    hidden: Vec<Dense>,
    output: Dense,
}

impl<T: Scalar> HiGru<T> {
    /// Builds a model, taking embedding rows from `embeddings` when given
    /// and drawing them uniformly otherwise (PAD stays zero).
    pub fn new<R: Rng>(
        config: ModelConfig,
        embeddings: Option<&EmbeddingMatrix>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let table = match embeddings {
            Some(e) => {
                if e.rows != config.vocab_size || e.dim != config.d0 {
                    return Err(Error::Config(format!(
                        "embedding matrix is {}×{}, model expects {}×{}",
                        e.rows, e.dim, config.vocab_size, config.d0
                    )));
                }
                Tensor::new(
                    vec![e.rows, e.dim],
                    e.data.iter().map(|&x| T::lit(x)).collect(),
                )?
            }
            None => {
                let mut t =
                    Tensor::uniform(&[config.vocab_size, config.d0], crate::data::OOV_RANGE, rng);
                t.data_mut()[PAD * config.d0..(PAD + 1) * config.d0].fill(T::zero());
                t
            }
        };
        let embedding = params.add("embedding", table)?;
        params
            .get_mut(embedding)
            .set_requires_grad(config.trainable_embeddings);

        let word = LevelEncoder::new(
            &mut params,
            "word",
            config.variant,
            config.d0,
            config.d1,
            config.d1,
            rng,
        )?;
        let utterance = LevelEncoder::new(
            &mut params,
            "utterance",
            config.variant,
            config.d1,
            config.d2,
            config.d2,
            rng,
        )?;
        let mut hidden = Vec::with_capacity(config.fc_hidden.len());
        let mut width = config.d2;
        for (i, &h) in config.fc_hidden.iter().enumerate() {
            hidden.push(Dense::new(&mut params, &format!("fc.{i}"), width, h, rng)?);
            width = h;
        }
        let output = Dense::new(&mut params, "fc.out", width, config.num_classes, rng)?;
        Ok(HiGru {
            config,
            params,
            embedding,
            word,
            utterance,
            hidden,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn word_encoder(&self) -> &LevelEncoder {
        &self.word
    }

    pub fn utterance_encoder(&self) -> &LevelEncoder {
        &self.utterance
    }

    pub fn embedding_param(&self) -> ParamId {
        self.embedding
    }

    /// Id of the classifier's final bias (`b_fc`).
    pub fn output_bias(&self) -> ParamId {
        self.output.b
    }

    /// Id of the classifier's final weight matrix (`W_fc`, `|C|×width`).
    pub fn output_weight(&self) -> ParamId {
        self.output.w
    }

    /// Fresh graph over this model's parameters.
    pub fn graph(&self) -> Graph<'_, T> {
        Graph::new(&self.params)
    }

    /// Class distributions for every utterance of `dialogue`.
    pub fn forward(
        &self,
        g: &mut Graph<'_, T>,
        dialogue: &Dialogue,
        mode: &mut Mode<'_>,
    ) -> Result<Forward> {
        if dialogue.is_empty() {
            return Err(Error::Contract(format!(
                "dialogue {:?} is empty",
                dialogue.id
            )));
        }
        let slots: Vec<(&[usize], usize)> = dialogue
            .utterances
            .iter()
            .map(|u| (u.tokens.as_slice(), u.tokens.len()))
            .collect();
        self.forward_slots(g, &slots, dialogue.len(), mode)
    }

    /// Same as [`HiGru::forward`] on a padded block; returns rows for the
    /// `valid` real utterances only.
    pub fn forward_padded(
        &self,
        g: &mut Graph<'_, T>,
        block: &PaddedDialogue,
        mode: &mut Mode<'_>,
    ) -> Result<Forward> {
        let slots: Vec<(&[usize], usize)> = block
            .tokens
            .iter()
            .zip(&block.lengths)
            .map(|(t, &n)| (t.as_slice(), n))
            .collect();
        self.forward_slots(g, &slots, block.valid, mode)
    }

    fn forward_slots(
        &self,
        g: &mut Graph<'_, T>,
        slots: &[(&[usize], usize)],
        valid: usize,
        mode: &mut Mode<'_>,
    ) -> Result<Forward> {
        if valid == 0 || valid > slots.len() {
            return Err(Error::Contract(format!(
                "{valid} valid utterances among {} slots",
                slots.len()
            )));
        }
        let rate = self.config.dropout;
        let table = g.param(self.embedding);
        let mut pooled = Vec::with_capacity(slots.len());
        for (j, &(tokens, len)) in slots.iter().enumerate() {
            if j >= valid {
                let zeros = g.constant(&[self.config.d1], vec![T::zero(); self.config.d1])?;
                pooled.push(zeros);
                continue;
            }
            if len == 0 || len > tokens.len() {
                return Err(Error::Contract(format!(
                    "utterance {j} has {len} valid tokens of {}",
                    tokens.len()
                )));
            }
            let words = g.gather_rows(table, tokens)?;
            pooled.push(encode_utterance(g, &self.word, words, len, rate, mode)?);
        }
        let utts = g.stack(&pooled)?;
        let mut x = encode_dialogue(g, &self.utterance, utts, valid, rate, mode)?;
        let last = self.hidden.len();
        for (i, layer) in self.hidden.iter().enumerate() {
            let h = layer.forward(g, x)?;
            x = g.tanh(h);
            if i + 1 < last {
                x = g.dropout(x, rate, mode)?;
            }
        }
        let logits = self.output.forward(g, x)?;
        let probs = g.softmax(logits)?;
        Ok(Forward { logits, probs })
    }

    /// Eval-mode class distributions, `N×|C|`.
    pub fn predict_proba(&self, dialogue: &Dialogue) -> Result<Tensor<T>> {
        let mut g = self.graph();
        let out = self.forward(&mut g, dialogue, &mut Mode::Eval)?;
        Ok(g.tensor(out.probs).with_requires_grad(false))
    }

    /// Most probable evaluated class per utterance.
    pub fn predict(&self, dialogue: &Dialogue, evaluated: &[bool]) -> Result<Vec<usize>> {
        let probs = self.predict_proba(dialogue)?;
        argmax_evaluated(probs.data(), self.config.num_classes, evaluated)
    }

    /// Rebuilds a model of architecture `config` from checkpoint arrays.
    /// Any missing array or shape disagreement is a checkpoint error.
    pub fn from_arrays(config: ModelConfig, arrays: &[NamedArray]) -> Result<Self> {
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Init);
        let mut model = Self::new(config, None, &mut rng)?;
        if arrays.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} arrays, {} architecture needs {}",
                arrays.len(),
                model.config.variant,
                model.params.len()
            )));
        }
        for a in arrays {
            let id = model
                .params
                .id_of(&a.name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected array {:?}", a.name)))?;
            let t = model.params.get_mut(id);
            if t.shape() != a.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "array {:?} has shape {:?}, {} architecture needs {:?}",
                    a.name,
                    a.shape,
                    model.config.variant,
                    t.shape()
                )));
            }
            for (dst, &src) in t.data_mut().iter_mut().zip(&a.data) {
                *dst = T::lit(src);
            }
        }
        Ok(model)
    }
}

/// Row-wise argmax over `evaluated` classes; ties go to the lowest id.
pub fn argmax_evaluated<T: Scalar>(
    probs: &[T],
    num_classes: usize,
    evaluated: &[bool],
) -> Result<Vec<usize>> {
    if evaluated.len() != num_classes || !evaluated.iter().any(|&e| e) {
        return Err(Error::Contract(format!(
            "evaluated mask of length {} for {num_classes} classes",
            evaluated.len()
        )));
    }
    Ok(probs
        .chunks(num_classes)
        .map(|row| {
            let mut best: Option<usize> = None;
            for c in (0..num_classes).filter(|&c| evaluated[c]) {
                if best.is_none_or(|b| row[c] > row[b]) {
                    best = Some(c);
                }
            }
            best.expect("mask has an evaluated class")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Utterance;
    use crate::rng::{stream, Stream};

    fn toy_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            d0: 4,
            d1: 3,
            d2: 3,
            fc_hidden: vec![5],
            dropout: 0.5,
            num_classes: 4,
            vocab_size: 12,
            trainable_embeddings: true,
        }
    }

    fn dialogue(utts: &[&[usize]]) -> Dialogue {
        Dialogue {
            id: "d".into(),
            utterances: utts
                .iter()
                .map(|t| Utterance {
                    speaker: "s".into(),
                    text: String::new(),
                    tokens: t.to_vec(),
                    label: Some(0),
                })
                .collect(),
        }
    }

    #[test]
    fn rows_are_distributions() {
        for v in Variant::ALL {
            let m = HiGru::<f64>::new(toy_config(v), None, &mut stream(1, Stream::Init)).unwrap();
            let p = m
                .predict_proba(&dialogue(&[&[2, 3], &[4], &[5, 6, 7]]))
                .unwrap();
            assert_eq!(p.shape(), &[3, 4]);
            for row in p.data().chunks(4) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn zero_output_layer_gives_uniform() {
        let mut m = HiGru::<f64>::new(
            toy_config(Variant::Fused),
            None,
            &mut stream(1, Stream::Init),
        )
        .unwrap();
        let w = m.output_weight();
        m.params_mut().get_mut(w).data_mut().fill(0.0);
        let p = m.predict_proba(&dialogue(&[&[2], &[3]])).unwrap();
        assert!(p.data().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let m = HiGru::<f64>::new(
            toy_config(Variant::SelfAttnFused),
            None,
            &mut stream(1, Stream::Init),
        )
        .unwrap();
        let d = dialogue(&[&[2, 3, 4], &[5]]);
        let a = m.predict_proba(&d).unwrap();
        let b = m.predict_proba(&d).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn empty_dialogue_is_rejected() {
        let m = HiGru::<f64>::new(
            toy_config(Variant::Plain),
            None,
            &mut stream(1, Stream::Init),
        )
        .unwrap();
        let d = Dialogue {
            id: "e".into(),
            utterances: vec![],
        };
        assert!(matches!(m.predict_proba(&d), Err(Error::Contract(_))));
    }

    #[test]
    fn argmax_rules() {
        let mask = [true; 4];
        assert_eq!(
            argmax_evaluated(&[0.1, 0.7, 0.1, 0.1], 4, &mask).unwrap(),
            vec![1]
        );
        assert_eq!(
            argmax_evaluated(&[0.4, 0.4, 0.1, 0.1], 4, &mask).unwrap(),
            vec![0]
        );
        let mask = [true, true, true, true, false];
        assert_eq!(
            argmax_evaluated(&[0.01, 0.02, 0.05, 0.02, 0.9], 5, &mask).unwrap(),
            vec![2]
        );
    }

    #[test]
    fn excluded_class_never_predicted_even_when_dominant() {
        let mut cfg = toy_config(Variant::Plain);
        cfg.num_classes = 5;
        let mut m = HiGru::<f64>::new(cfg, None, &mut stream(2, Stream::Init)).unwrap();
        let b = m.output_bias();
        m.params_mut()
            .get_mut(b)
            .data_mut()
            .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 50.0]);
        let d = dialogue(&[&[2, 3], &[4]]);
        let p = m.predict_proba(&d).unwrap();
        assert!(p.data().chunks(5).all(|r| r[4] > 0.99));
        let pred = m.predict(&d, &[true, true, true, true, false]).unwrap();
        assert!(pred.iter().all(|&c| c < 4));
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for v in Variant::ALL {
            let cfg = toy_config(v);
            let m = HiGru::<f64>::new(cfg.clone(), None, &mut stream(1, Stream::Init)).unwrap();
            assert_eq!(m.params().num_elements(), cfg.num_parameters());
        }
    }

    #[test]
    fn default_parameter_count_by_hand() {
        // d0 = d1 = d2 = 300, fc [100, 100], 4 classes, 10k vocabulary
        let cfg = ModelConfig {
            vocab_size: 10_000,
            ..ModelConfig::default()
        };
        let gru = 3 * (300 * 300 + 300 * 300 + 300);
        let emb = 10_000 * 300;
        let word = 2 * gru + 300 * (300 + 4 * 300) + 300;
        let utt = 2 * gru + 300 * (300 + 4 * 300) + 300;
        let head = (300 * 100 + 100) + (100 * 100 + 100) + (100 * 4 + 4);
        assert_eq!(cfg.num_parameters(), emb + word + utt + head);
        assert_eq!(cfg.num_parameters(), 6_104_804);
    }

    #[test]
    fn frozen_embeddings_get_no_gradient() {
        let mut cfg = toy_config(Variant::Plain);
        cfg.trainable_embeddings = false;
        let m = HiGru::<f64>::new(cfg, None, &mut stream(1, Stream::Init)).unwrap();
        let mut g = m.graph();
        let out = m
            .forward(&mut g, &dialogue(&[&[2, 3]]), &mut Mode::Eval)
            .unwrap();
        let l = g.sum(out.logits);
        g.backward(l).unwrap();
        let grads = g.into_param_grads();
        assert!(grads.iter().all(|(id, _)| *id != m.embedding_param()));
        assert!(!grads.is_empty());
    }

    #[test]
    fn f32_model_runs() {
        let m = HiGru::<f32>::new(
            toy_config(Variant::SelfAttnFused),
            None,
            &mut stream(1, Stream::Init),
        )
        .unwrap();
        let p = m.predict_proba(&dialogue(&[&[2, 3], &[4]])).unwrap();
        for row in p.data().chunks(4) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }
}
