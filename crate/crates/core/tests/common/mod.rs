#![allow(dead_code)]

use higru::model::HiGru;
use higru::optim::weighted_ce;
use higru::rng::{stream, Stream};
use higru::{Dialogue, Mode, ModelConfig, Utterance, Variant};

pub const H: f64 = 1e-5;

/// Central difference `(f(x+h) − f(x−h)) / 2h` for every coordinate of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + H;
            let up = f(&probe);
            probe[i] = x[i] - H;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn assert_grads_close(what: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: length");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let tol = (1e-4 * a.abs()).max(1e-8);
        assert!(
            (a - n).abs() <= tol,
            "{what}[{i}]: autodiff {a:e} vs numeric {n:e} (tol {tol:e})"
        );
    }
}

pub fn toy_config(variant: Variant, vocab: usize) -> ModelConfig {
    ModelConfig {
        variant,
        d0: 4,
        d1: 3,
        d2: 3,
        fc_hidden: vec![5],
        dropout: 0.0,
        num_classes: 3,
        vocab_size: vocab,
        trainable_embeddings: true,
    }
}

pub fn toy_model(variant: Variant, vocab: usize, seed: u64) -> HiGru<f64> {
    HiGru::new(
        toy_config(variant, vocab),
        None,
        &mut stream(seed, Stream::Init),
    )
    .unwrap()
}

pub fn dialogue(utts: &[(&[usize], Option<usize>)]) -> Dialogue {
    Dialogue {
        id: "toy".into(),
        utterances: utts
            .iter()
            .enumerate()
            .map(|(i, (tokens, label))| Utterance {
                speaker: format!("s{}", i % 2),
                text: String::new(),
                tokens: tokens.to_vec(),
                label: *label,
            })
            .collect(),
    }
}

/// Three utterances of at most four tokens over a vocabulary of 8.
pub fn toy_dialogue() -> Dialogue {
    dialogue(&[
        (&[2, 3, 4, 5], Some(0)),
        (&[6, 2], Some(1)),
        (&[7, 3, 3], Some(2)),
    ])
}

pub fn eval_loss(model: &HiGru<f64>, d: &Dialogue, weights: &[f64]) -> f64 {
    let mut g = model.graph();
    let out = model.forward(&mut g, d, &mut Mode::Eval).unwrap();
    let labels: Vec<_> = d.utterances.iter().map(|u| u.label).collect();
    let loss = weighted_ce(&mut g, out.probs, &labels, weights).unwrap();
    g.value(loss)[0]
}

/// Autodiff gradients of the eval-mode loss, one vector per parameter in
/// parameter order (zeros for parameters the loss does not touch).
pub fn analytic_grads(model: &HiGru<f64>, d: &Dialogue, weights: &[f64]) -> Vec<Vec<f64>> {
    let mut g = model.graph();
    let out = model.forward(&mut g, d, &mut Mode::Eval).unwrap();
    let labels: Vec<_> = d.utterances.iter().map(|u| u.label).collect();
    let loss = weighted_ce(&mut g, out.probs, &labels, weights).unwrap();
    g.backward(loss).unwrap();
    let grads = g.into_param_grads();
    model
        .params()
        .iter()
        .map(|(id, _, t)| {
            grads
                .iter()
                .find(|(gid, _)| *gid == id)
                .map_or_else(|| vec![0.0; t.numel()], |(_, v)| v.clone())
        })
        .collect()
}
