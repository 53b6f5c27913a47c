//! Word embeddings: the table type, its export formats, similarity, skip-gram
//! training and the 2-D PCA projection used to inspect embedding geometry.

mod pca;
mod skipgram;

use std::fs;
use std::path::Path;

pub use pca::{jacobi_eigen, pca_project_2d, Projection};
pub use skipgram::{train_skipgram, SkipGram, SkipGramConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vocab::{Vocabulary, PAD_ID};

/// `V x d` matrix; row `i` is the vector of token id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable(Tensor);

impl EmbeddingTable {
    pub fn new(table: Tensor) -> Result<Self> {
        if table.cols() == 0 {
            return Err(Error::shape("embedding dimension must be positive"));
        }
        if !table.is_finite() {
            return Err(Error::invalid("embedding table holds non-finite values"));
        }
        Ok(EmbeddingTable(table))
    }

    pub fn vocab_size(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, id: u32) -> &[f32] {
        self.0.row(id as usize)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn pad_is_zero(&self) -> bool {
        self.row(PAD_ID).iter().all(|&v| v == 0.0)
    }

    pub fn save_bin(&self, path: &Path) -> Result<()> {
        self.0.save(path)
    }

    pub fn load_bin(path: &Path) -> Result<Self> {
        EmbeddingTable::new(Tensor::load(path)?)
    }

    /// First line `V d`, then `token v1 .. vd` per row in id order.
    pub fn to_text(&self, vocab: &Vocabulary) -> Result<String> {
        if vocab.len() != self.vocab_size() {
            return Err(Error::shape(format!(
                "vocabulary has {} entries, table has {} rows",
                vocab.len(),
                self.vocab_size()
            )));
        }
        let mut out = format!("{} {}\n", self.vocab_size(), self.dim());
        for (id, token) in vocab.tokens().iter().enumerate() {
            out.push_str(token);
            for v in self.row(id as u32) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save_text(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        fs::write(path, self.to_text(vocab)?).map_err(|e| Error::io(path, e))
    }
}

/// Cosine similarity with 64-bit accumulation.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    let (mut dot, mut nu, mut nv) = (0f64, 0f64, 0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("zero vector"));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}
