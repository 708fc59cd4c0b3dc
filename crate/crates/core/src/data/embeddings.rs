use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// Half-width of the uniform range used for tokens without a pretrained vector.
pub const OOV_RANGE: f64 = 0.25;

/// One row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    /// Number of vocabulary entries found in the vector file.
    pub found: usize,
}

impl EmbeddingMatrix {
    /// Random rows for every id except PAD, which is zero.
    pub fn random<R: Rng>(vocab: &Vocabulary, dim: usize, rng: &mut R) -> Self {
        let rows = vocab.len();
        let mut data = vec![0.0; rows * dim];
        for r in 0..rows {
            if r == PAD {
                continue;
            }
            for x in &mut data[r * dim..(r + 1) * dim] {
                *x = rng.gen_range(-OOV_RANGE..=OOV_RANGE);
            }
        }
        EmbeddingMatrix {
            rows,
            dim,
            data,
            found: 0,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Loads vectors in the word2vec text layout (`token v1 … vd` per line,
/// optional `count dim` header) for the tokens of `vocab`.
pub fn load_embeddings<R: Rng>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path, vocab, dim, rng)
}

pub fn read_embeddings<R: Rng>(
    reader: impl BufRead,
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingMatrix> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut m = EmbeddingMatrix::random(vocab, dim, rng);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 {
            if let (Ok(_), Ok(d)) = (fields[0].parse::<u64>(), fields[1].parse::<usize>()) {
                if d != dim {
                    return Err(Error::ingest(
                        path,
                        lineno,
                        format!("header declares dimension {d}, expected {dim}"),
                    ));
                }
                continue;
            }
        }
        if fields.len() != dim + 1 {
            return Err(Error::ingest(
                path,
                lineno,
                format!(
                    "expected a token and {dim} values, found {} values",
                    fields.len() - 1
                ),
            ));
        }
        let Some(id) = vocab.get(fields[0]) else {
            continue;
        };
        if id == PAD || seen[id] {
            continue;
        }
        let row = &mut m.data[id * dim..(id + 1) * dim];
        for (slot, f) in row.iter_mut().zip(&fields[1..]) {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::ingest(path, lineno, format!("malformed value {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::ingest(
                    path,
                    lineno,
                    format!("non-finite value {f:?}"),
                ));
            }
            *slot = v;
        }
        seen[id] = true;
        m.found += 1;
    }
    Ok(m)
}
