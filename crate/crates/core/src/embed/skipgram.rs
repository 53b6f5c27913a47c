//! Skip-gram with negative sampling.
//!
//! Tables are stored as relaxed atomics so several workers can update them
//! without locks when parallel mode is requested. With one worker the run is
//! fully deterministic for a given seed.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vocab::{Vocabulary, FIRST_WORD_ID, PAD_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub window: usize,
    pub dim: usize,
    pub negatives: usize,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub subsample_t: f64,
    pub epochs: usize,
    pub lr0: f32,
    pub seed: u64,
    /// More than one enables lock-free parallel updates (not deterministic).
    pub threads: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            window: 5,
            dim: 52,
            negatives: 5,
            subsample_t: 1e-5,
            epochs: 3,
            lr0: 0.025,
            seed: 1,
            threads: 1,
        }
    }
}

impl SkipGramConfig {
    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.dim == 0 || self.negatives == 0 {
            return Err(Error::invalid("window, dim and negatives must be at least 1"));
        }
        if self.subsample_t.is_nan() || self.subsample_t < 0.0 || self.lr0.is_nan() || self.lr0 <= 0.0 {
            return Err(Error::invalid("subsample_t must be >= 0 and lr0 > 0"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads must be at least 1"));
        }
        Ok(())
    }
}

struct SharedTable {
    dim: usize,
    cells: Vec<AtomicU32>,
}

impl SharedTable {
    fn from_values(dim: usize, values: impl IntoIterator<Item = f32>) -> Self {
        SharedTable {
            dim,
            cells: values.into_iter().map(|v| AtomicU32::new(v.to_bits())).collect(),
        }
    }

    #[inline]
    fn get(&self, row: u32, k: usize) -> f32 {
        f32::from_bits(self.cells[row as usize * self.dim + k].load(Ordering::Relaxed))
    }

    #[inline]
    fn add(&self, row: u32, k: usize, delta: f32) {
        let cell = &self.cells[row as usize * self.dim + k];
        let v = f32::from_bits(cell.load(Ordering::Relaxed)) + delta;
        cell.store(v.to_bits(), Ordering::Relaxed);
    }

    fn dot(&self, a: u32, other: &SharedTable, b: u32) -> f64 {
        (0..self.dim)
            .map(|k| self.get(a, k) as f64 * other.get(b, k) as f64)
            .sum()
    }

    fn snapshot(&self, rows: usize) -> Tensor {
        let data = self
            .cells
            .iter()
            .map(|c| f32::from_bits(c.load(Ordering::Relaxed)))
            .collect();
        Tensor::from_vec(rows, self.dim, data).expect("table shape")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trainer state: input (word) and output (context) tables plus the noise
/// distribution.
pub struct SkipGram {
    cfg: SkipGramConfig,
    vocab_size: usize,
    input: SharedTable,
    output: SharedTable,
    noise: WeightedIndex<f64>,
    keep_prob: Vec<f64>,
    planned_words: u64,
    words_seen: AtomicU64,
    epochs_done: usize,
}

impl SkipGram {
    /// Initializes tables for `vocab`. Input rows are uniform in
    /// `[-0.5/d, 0.5/d]` (the `<pad>` row zero), output rows zero.
    pub fn new(vocab: &Vocabulary, cfg: SkipGramConfig) -> Result<Self> {
        cfg.validate()?;
        let v = vocab.len();
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = 0.5 / d as f32;
        let init: Vec<f32> = (0..v * d)
            .map(|i| {
                let x = rng.gen_range(-bound..=bound);
                if i / d == PAD_ID as usize {
                    0.0
                } else {
                    x
                }
            })
            .collect();

        let weights: Vec<f64> = vocab
            .counts()
            .iter()
            .enumerate()
            .map(|(id, &c)| {
                if id < FIRST_WORD_ID as usize {
                    0.0
                } else {
                    (c as f64).powf(0.75)
                }
            })
            .collect();
        let noise = WeightedIndex::new(&weights).map_err(|_| Error::invalid("no training pairs"))?;

        let total: u64 = vocab.counts()[FIRST_WORD_ID as usize..].iter().sum();
        let keep_prob = vocab
            .counts()
            .iter()
            .map(|&c| {
                if cfg.subsample_t == 0.0 || c == 0 {
                    1.0
                } else {
                    let scaled = cfg.subsample_t * total as f64;
                    (((c as f64 / scaled).sqrt() + 1.0) * scaled / c as f64).min(1.0)
                }
            })
            .collect();

        Ok(SkipGram {
            vocab_size: v,
            input: SharedTable::from_values(d, init),
            output: SharedTable::from_values(d, std::iter::repeat_n(0.0, v * d)),
            noise,
            keep_prob,
            planned_words: 0,
            words_seen: AtomicU64::new(0),
            epochs_done: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SkipGramConfig {
        &self.cfg
    }

    /// Runs every configured epoch.
    pub fn train(&mut self, corpus: &[Vec<u32>]) -> Result<()> {
        self.prepare(corpus)?;
        while self.epochs_done < self.cfg.epochs {
            self.train_epoch(corpus)?;
        }
        Ok(())
    }

    /// Checks the corpus and fixes the learning-rate schedule length.
    pub fn prepare(&mut self, corpus: &[Vec<u32>]) -> Result<()> {
        let mut words = 0u64;
        let mut has_pair = false;
        for s in corpus {
            let mut n = 0;
            for &id in s {
                if id as usize >= self.vocab_size {
                    return Err(Error::invalid(format!("token id {id} outside the vocabulary")));
                }
                if id >= FIRST_WORD_ID {
                    n += 1;
                }
            }
            words += n;
            has_pair |= n >= 2;
        }
        if !has_pair {
            return Err(Error::invalid("no training pairs"));
        }
        self.planned_words = words * self.cfg.epochs as u64;
        Ok(())
    }

    /// One pass over `corpus`. `prepare` must have been called.
    pub fn train_epoch(&mut self, corpus: &[Vec<u32>]) -> Result<()> {
        if self.planned_words == 0 {
            self.prepare(corpus)?;
        }
        let epoch = self.epochs_done as u64;
        let workers = self.cfg.threads.min(corpus.len().max(1));
        if workers <= 1 {
            let mut rng = self.worker_rng(epoch, 0);
            for s in corpus {
                self.train_sentence(s, &mut rng);
            }
        } else {
            let chunk = corpus.len().div_ceil(workers);
            let this = &*self;
            std::thread::scope(|scope| {
                for (w, shard) in corpus.chunks(chunk).enumerate() {
                    scope.spawn(move || {
                        let mut rng = this.worker_rng(epoch, w as u64);
                        for s in shard {
                            this.train_sentence(s, &mut rng);
                        }
                    });
                }
            });
        }
        self.epochs_done += 1;
        Ok(())
    }

    fn worker_rng(&self, epoch: u64, worker: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(1 + epoch * self.cfg.threads as u64 + worker);
        rng
    }

    fn learning_rate(&self) -> f32 {
        let seen = self.words_seen.load(Ordering::Relaxed) as f64;
        let frac = 1.0 - seen / self.planned_words.max(1) as f64;
        (self.cfg.lr0 as f64 * frac.max(1e-4)) as f32
    }

    fn train_sentence(&self, sentence: &[u32], rng: &mut ChaCha8Rng) {
        let mut words = Vec::with_capacity(sentence.len());
        let mut counted = 0u64;
        for &id in sentence {
            if id < FIRST_WORD_ID {
                continue;
            }
            counted += 1;
            let p = self.keep_prob[id as usize];
            if p >= 1.0 || rng.gen::<f64>() < p {
                words.push(id);
            }
        }
        let lr = self.learning_rate();
        self.words_seen.fetch_add(counted, Ordering::Relaxed);

        let d = self.cfg.dim;
        let mut grad = vec![0f32; d];
        for (pos, &center) in words.iter().enumerate() {
            let lo = pos.saturating_sub(self.cfg.window);
            let hi = (pos + self.cfg.window + 1).min(words.len());
            for (cpos, &context) in words.iter().enumerate().take(hi).skip(lo) {
                if cpos == pos {
                    continue;
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                self.update_pair(center, context, 1.0, lr, &mut grad);
                for _ in 0..self.cfg.negatives {
                    let neg = self.sample_negative(rng);
                    if neg == context {
                        continue;
                    }
                    self.update_pair(center, neg, 0.0, lr, &mut grad);
                }
                for (k, &g) in grad.iter().enumerate() {
                    self.input.add(center, k, g);
                }
            }
        }
    }

    #[inline]
    fn update_pair(&self, center: u32, target: u32, label: f64, lr: f32, grad: &mut [f32]) {
        let f = self.input.dot(center, &self.output, target);
        let g = ((label - sigmoid(f)) * lr as f64) as f32;
        for (k, acc) in grad.iter_mut().enumerate() {
            *acc += g * self.output.get(target, k);
            self.output.add(target, k, g * self.input.get(center, k));
        }
    }

    /// Draws a noise token from the unigram^0.75 distribution.
    pub fn sample_negative<R: Rng>(&self, rng: &mut R) -> u32 {
        self.noise.sample(rng) as u32
    }

    /// Mean negative-sampling loss of `pairs`, each contrasted with its own
    /// fixed list of negatives.
    pub fn loss(&self, pairs: &[(u32, u32)], negatives: &[Vec<u32>]) -> f64 {
        let total: f64 = pairs
            .iter()
            .zip(negatives)
            .map(|(&(center, context), negs)| {
                let pos = self.input.dot(center, &self.output, context);
                let mut l = -sigmoid(pos).max(1e-300).ln();
                for &n in negs {
                    let s = self.input.dot(center, &self.output, n);
                    l -= sigmoid(-s).max(1e-300).ln();
                }
                l
            })
            .sum();
        total / pairs.len().max(1) as f64
    }

    pub fn input_table(&self) -> EmbeddingTable {
        EmbeddingTable(self.input.snapshot(self.vocab_size))
    }

    pub fn output_table(&self) -> EmbeddingTable {
        EmbeddingTable(self.output.snapshot(self.vocab_size))
    }
}

/// Trains skip-gram embeddings and returns the input-side table.
pub fn train_skipgram(corpus: &[Vec<u32>], vocab: &Vocabulary, cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    let mut sg = SkipGram::new(vocab, cfg.clone())?;
    sg.train(corpus)?;
    let table = sg.input_table();
    if !table.tensor().is_finite() {
        return Err(Error::Diverged);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine;
    use crate::textprep::TokenSequence;

    fn clique_corpus() -> (Vocabulary, Vec<Vec<u32>>) {
        let mut seqs = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for group in [["a", "b", "c"], ["x", "y", "z"]] {
            for _ in 0..500 {
                let line: Vec<&str> = (0..4).map(|_| group[rng.gen_range(0..3)]).collect();
                seqs.push(TokenSequence::from_joined(&line.join(" ")));
            }
        }
        let vocab = Vocabulary::build(&seqs, 1).unwrap();
        let ids = seqs.iter().map(|s| vocab.ids(s)).collect();
        (vocab, ids)
    }

    fn small_cfg() -> SkipGramConfig {
        SkipGramConfig {
            dim: 16,
            subsample_t: 0.0,
            ..SkipGramConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (vocab, corpus) = clique_corpus();
        let cfg = SkipGramConfig { epochs: 0, ..small_cfg() };
        let trained = train_skipgram(&corpus, &vocab, &cfg).unwrap();
        let init = SkipGram::new(&vocab, cfg).unwrap().input_table();
        assert_eq!(trained, init);
        assert!(init.pad_is_zero());
        let bound = 0.5 / 16.0;
        assert!(init.tensor().as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn runs_are_bit_identical() {
        let (vocab, corpus) = clique_corpus();
        let a = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap();
        let b = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap();
        assert_eq!(a.tensor().to_bytes(), b.tensor().to_bytes());
    }

    #[test]
    fn cliques_separate() {
        let (vocab, corpus) = clique_corpus();
        let t = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap();
        let id = |s: &str| vocab.id(s).unwrap();
        let groups = [["a", "b", "c"], ["x", "y", "z"]];
        let mut within = Vec::new();
        let mut across = Vec::new();
        for g in &groups {
            for i in 0..3 {
                for j in i + 1..3 {
                    within.push(cosine(t.row(id(g[i])), t.row(id(g[j]))).unwrap());
                }
            }
        }
        for a in groups[0] {
            for b in groups[1] {
                across.push(cosine(t.row(id(a)), t.row(id(b))).unwrap());
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&across) + 0.3, "{} vs {}", mean(&within), mean(&across));
    }

    #[test]
    fn no_pairs_is_an_error() {
        let seqs = vec![TokenSequence::from_joined("a"), TokenSequence::from_joined("b")];
        let vocab = Vocabulary::build(&seqs, 1).unwrap();
        let corpus: Vec<Vec<u32>> = seqs.iter().map(|s| vocab.ids(s)).collect();
        let err = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap_err();
        assert_eq!(err.to_string(), "no training pairs");
        // unknown tokens never form pairs either
        let err = train_skipgram(&[vec![1, 1, 1, 2]], &vocab, &small_cfg()).unwrap_err();
        assert_eq!(err.to_string(), "no training pairs");
    }

    #[test]
    fn parallel_mode_trains() {
        let (vocab, corpus) = clique_corpus();
        let cfg = SkipGramConfig { threads: 3, ..small_cfg() };
        let t = train_skipgram(&corpus, &vocab, &cfg).unwrap();
        assert!(t.tensor().is_finite());
        assert!(t.pad_is_zero());
    }

    #[test]
    fn bad_config_rejected() {
        let (vocab, _) = clique_corpus();
        for cfg in [
            SkipGramConfig { window: 0, ..small_cfg() },
            SkipGramConfig { dim: 0, ..small_cfg() },
            SkipGramConfig { negatives: 0, ..small_cfg() },
            SkipGramConfig { threads: 0, ..small_cfg() },
        ] {
            assert!(SkipGram::new(&vocab, cfg).is_err());
        }
    }
}
