//! The L1/L2/L3 convolutional sentence classifiers.
//!
//! Pipeline per example: embedding lookup (a `d x n_max` sentence matrix),
//! then per conv layer `conv -> relu -> pool`, where every layer but the
//! last uses its configured pool and the last one pools over all remaining
//! positions. A relu hidden layer of width `m` and a softmax over `K = 3`
//! classes follow.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nncore::{
    conv1d, conv1d_backward, conv_output_len, dense, dense_backward, maxpool, maxpool_backward, pool_output_len,
    relu, relu_backward, relu_backward_slice, relu_slice, softmax, softmax_xent, FeatureMap, FilterView, PoolCache,
};
use crate::tensor::Tensor;
use crate::vocab::PAD_ID;

pub const NUM_CLASSES: usize = 3;
pub const DEFAULT_N_MAX: usize = 60;
/// Default half-width of the uniform weight initialization.
pub const INIT_RANGE: f32 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchName {
    L1,
    L2,
    L3,
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchName::L1 => "L1",
            ArchName::L2 => "L2",
            ArchName::L3 => "L3",
        })
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L1" | "l1" => Ok(ArchName::L1),
            "L2" | "l2" => Ok(ArchName::L2),
            "L3" | "l3" => Ok(ArchName::L3),
            other => Err(Error::invalid(format!("unknown architecture {other:?} (expected L1, L2 or L3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub width: usize,
    /// Pool applied after this layer; `None` on the last layer, which is
    /// followed by max-over-time pooling.
    pub pool: Option<Pool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub name: ArchName,
    pub filters: usize,
    pub layers: Vec<ConvLayerSpec>,
    pub n_max: usize,
}

impl ArchitectureSpec {
    pub fn l1() -> Self {
        ArchitectureSpec {
            name: ArchName::L1,
            filters: 300,
            layers: vec![ConvLayerSpec { width: 5, pool: None }],
            n_max: DEFAULT_N_MAX,
        }
    }

    pub fn l2() -> Self {
        ArchitectureSpec {
            name: ArchName::L2,
            filters: 200,
            layers: vec![
                ConvLayerSpec {
                    width: 4,
                    pool: Some(Pool { window: 4, stride: 2 }),
                },
                ConvLayerSpec { width: 3, pool: None },
            ],
            n_max: DEFAULT_N_MAX,
        }
    }

    pub fn l3() -> Self {
        ArchitectureSpec {
            name: ArchName::L3,
            filters: 200,
            layers: vec![
                ConvLayerSpec {
                    width: 4,
                    pool: Some(Pool { window: 4, stride: 2 }),
                },
                ConvLayerSpec {
                    width: 3,
                    pool: Some(Pool { window: 3, stride: 1 }),
                },
                ConvLayerSpec { width: 2, pool: None },
            ],
            n_max: DEFAULT_N_MAX,
        }
    }

    pub fn from_name(name: ArchName) -> Self {
        match name {
            ArchName::L1 => Self::l1(),
            ArchName::L2 => Self::l2(),
            ArchName::L3 => Self::l3(),
        }
    }

    /// Same layer layout with a different filter count (and hidden width).
    pub fn with_filters(mut self, filters: usize) -> Self {
        self.filters = filters;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn hidden(&self) -> usize {
        self.filters
    }

    /// Sequence length after each conv and each pool, starting from `n_max`
    /// and ending with the max-over-time output (always 1).
    pub fn shape_walk(&self) -> Result<Vec<usize>> {
        if self.filters == 0 || self.layers.is_empty() {
            return Err(Error::invalid("architecture needs filters and at least one layer"));
        }
        let mut walk = vec![self.n_max];
        let mut len = self.n_max;
        for (i, layer) in self.layers.iter().enumerate() {
            len = conv_output_len(len, layer.width).ok_or_else(|| {
                Error::invalid(format!(
                    "n_max={} too short: layer {} sees length {len} < window {}",
                    self.n_max,
                    i + 1,
                    layer.width
                ))
            })?;
            walk.push(len);
            let pool = layer.pool.unwrap_or(Pool { window: len, stride: 1 });
            len = pool_output_len(len, pool.window, pool.stride).ok_or_else(|| {
                Error::invalid(format!("n_max={} too short for pool after layer {}", self.n_max, i + 1))
            })?;
            walk.push(len);
        }
        Ok(walk)
    }
}

/// Embedding initialization for [`NetworkParams::build`].
#[derive(Debug, Clone, Copy)]
pub enum EmbeddingInit<'a> {
    Random,
    Pretrained(&'a EmbeddingTable),
}

/// Every learned tensor, in a fixed order: embedding, per conv layer
/// weights and bias, hidden weights and bias, softmax weights and bias.
/// Conv weights are `m x (c_in * h)`, biases `1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: ArchitectureSpec,
    tensors: Vec<Tensor>,
}

impl NetworkParams {
    /// Weights uniform in `[-INIT_RANGE, INIT_RANGE]`, biases zero.
    pub fn build(arch: &ArchitectureSpec, vocab_size: usize, dim: usize, init: EmbeddingInit<'_>, seed: u64) -> Result<Self> {
        Self::build_with_range(arch, vocab_size, dim, init, seed, INIT_RANGE)
    }

    /// Like [`NetworkParams::build`] with weights uniform in `[-range, range]`.
    pub fn build_with_range(
        arch: &ArchitectureSpec,
        vocab_size: usize,
        dim: usize,
        init: EmbeddingInit<'_>,
        seed: u64,
        range: f32,
    ) -> Result<Self> {
        arch.shape_walk()?;
        if vocab_size <= PAD_ID as usize || dim == 0 {
            return Err(Error::invalid("vocabulary and embedding dimension must be non-empty"));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::invalid("init range must be positive"));
        }
        let shapes = Self::shapes(arch, vocab_size, dim);
        let mut tensors = Vec::with_capacity(shapes.len());
        for (index, &(name, rows, cols)) in shapes.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let is_bias = name.ends_with("_b");
            let data = (0..rows * cols)
                .map(|_| {
                    if is_bias {
                        0.0
                    } else {
                        rng.gen_range(-range..=range)
                    }
                })
                .collect();
            tensors.push(Tensor::from_vec(rows, cols, data)?);
        }
        if let EmbeddingInit::Pretrained(table) = init {
            if table.vocab_size() != vocab_size || table.dim() != dim {
                return Err(Error::shape(format!(
                    "pretrained table is {}x{}, network expects {vocab_size}x{dim}",
                    table.vocab_size(),
                    table.dim()
                )));
            }
            tensors[0] = table.tensor().clone();
        }
        tensors[0].row_mut(PAD_ID as usize).fill(0.0);
        Ok(NetworkParams {
            arch: arch.clone(),
            tensors,
        })
    }

    fn shapes(arch: &ArchitectureSpec, vocab_size: usize, dim: usize) -> Vec<(&'static str, usize, usize)> {
        let m = arch.filters;
        let mut shapes = vec![("embedding", vocab_size, dim)];
        let mut c_in = dim;
        for layer in &arch.layers {
            shapes.push(("conv_w", m, c_in * layer.width));
            shapes.push(("conv_b", 1, m));
            c_in = m;
        }
        shapes.push(("hidden_w", m, m));
        shapes.push(("hidden_b", 1, m));
        shapes.push(("softmax_w", NUM_CLASSES, m));
        shapes.push(("softmax_b", 1, NUM_CLASSES));
        shapes
    }

    /// File stem of every tensor, matching [`NetworkParams::tensors`].
    pub fn tensor_names(arch: &ArchitectureSpec) -> Vec<String> {
        let mut names = vec!["embedding".to_owned()];
        for i in 1..=arch.layers.len() {
            names.push(format!("conv{i}_w"));
            names.push(format!("conv{i}_b"));
        }
        names.extend(["hidden_w", "hidden_b", "softmax_w", "softmax_b"].map(String::from));
        names
    }

    /// Reassembles parameters from tensors in canonical order.
    pub fn from_tensors(arch: &ArchitectureSpec, tensors: Vec<Tensor>) -> Result<Self> {
        arch.shape_walk()?;
        let Some(first) = tensors.first() else {
            return Err(Error::shape("no tensors"));
        };
        let expected = Self::shapes(arch, first.rows(), first.cols());
        if expected.len() != tensors.len() {
            return Err(Error::shape(format!("expected {} tensors, got {}", expected.len(), tensors.len())));
        }
        for ((name, rows, cols), t) in expected.iter().zip(&tensors) {
            if t.shape() != (*rows, *cols) {
                return Err(Error::shape(format!("{name} is {:?}, expected {rows}x{cols}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::invalid(format!("{name} holds non-finite values")));
            }
        }
        Ok(NetworkParams {
            arch: arch.clone(),
            tensors,
        })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn vocab_size(&self) -> usize {
        self.tensors[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.tensors[0].cols()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn embedding(&self) -> &Tensor {
        &self.tensors[0]
    }

    pub fn embedding_table(&self) -> EmbeddingTable {
        EmbeddingTable::new(self.tensors[0].clone()).expect("finite embedding")
    }

    fn conv_view(&self, layer: usize) -> FilterView<'_> {
        let c_in = if layer == 0 { self.dim() } else { self.arch.filters };
        FilterView {
            filters: self.arch.filters,
            channels_in: c_in,
            width: self.arch.layers[layer].width,
            weights: self.tensors[1 + 2 * layer].as_slice(),
            bias: self.tensors[2 + 2 * layer].as_slice(),
        }
    }

    fn head_index(&self) -> usize {
        1 + 2 * self.arch.layers.len()
    }

    /// Parameter count excluding the embedding table.
    pub fn num_weights_excluding_embedding(&self) -> usize {
        self.tensors[1..].iter().map(Tensor::len).sum()
    }

    fn sentence_matrix(&self, ids: &[u32]) -> Result<FeatureMap> {
        if ids.len() != self.arch.n_max {
            return Err(Error::shape(format!("expected {} ids, got {}", self.arch.n_max, ids.len())));
        }
        let (v, d) = (self.vocab_size(), self.dim());
        let n = ids.len();
        let mut x = FeatureMap::zeros(d, n);
        for (t, &id) in ids.iter().enumerate() {
            if id as usize >= v {
                return Err(Error::invalid(format!("token id {id} out of range for vocabulary of {v}")));
            }
            let row = self.tensors[0].row(id as usize);
            for (k, &val) in row.iter().enumerate() {
                x.as_mut_slice()[k * n + t] = val;
            }
        }
        Ok(x)
    }

    fn forward_cached(&self, ids: &[u32]) -> Result<ForwardCache> {
        let mut x = self.sentence_matrix(ids)?;
        let mut layers = Vec::with_capacity(self.arch.layers.len());
        for (i, spec) in self.arch.layers.iter().enumerate() {
            let pre = conv1d(&x, self.conv_view(i))?;
            let act = relu(&pre);
            let pool = spec.pool.unwrap_or(Pool {
                window: act.len(),
                stride: 1,
            });
            let (pooled, cache) = maxpool(&act, pool.window, pool.stride)?;
            layers.push(LayerCache {
                input: x,
                pre,
                pool: cache,
            });
            x = pooled;
        }
        let h = self.head_index();
        let features = x.into_vec();
        let hidden_pre = dense(self.tensors[h].as_slice(), self.tensors[h + 1].as_slice(), &features)?;
        let hidden = relu_slice(&hidden_pre);
        let logits = dense(self.tensors[h + 2].as_slice(), self.tensors[h + 3].as_slice(), &hidden)?;
        Ok(ForwardCache {
            layers,
            features,
            hidden_pre,
            hidden,
            logits,
        })
    }

    /// Class probabilities for one encoded sequence.
    pub fn forward(&self, ids: &[u32]) -> Result<Vec<f32>> {
        let cache = self.forward_cached(ids)?;
        Ok(softmax(&cache.logits).into_iter().map(|p| p as f32).collect())
    }

    pub fn predict(&self, ids: &[u32]) -> Result<usize> {
        Ok(argmax(&self.forward(ids)?))
    }

    /// Mean cross-entropy over `batch` and its gradient for every tensor.
    pub fn loss_and_grads(&self, batch: &[(&[u32], usize)], freeze_embeddings: bool) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut dense_acc: Vec<Vec<f64>> = self.tensors[1..].iter().map(|t| vec![0f64; t.len()]).collect();
        let mut rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut loss_sum = 0f64;
        let h = self.head_index();
        let d = self.dim();

        for &(ids, label) in batch {
            if label >= NUM_CLASSES {
                return Err(Error::invalid(format!("label {label} out of range")));
            }
            let cache = self.forward_cached(ids)?;
            let sx = softmax_xent(&cache.logits, label)?;
            loss_sum += sx.loss;

            let out = dense_backward(self.tensors[h + 2].as_slice(), &cache.hidden, &sx.dlogits)?;
            add_into(&mut dense_acc[h + 1], &out.weights);
            add_into(&mut dense_acc[h + 2], &out.bias);
            let dhidden = relu_backward_slice(&cache.hidden_pre, &out.input)?;
            let hid = dense_backward(self.tensors[h].as_slice(), &cache.features, &dhidden)?;
            add_into(&mut dense_acc[h - 1], &hid.weights);
            add_into(&mut dense_acc[h], &hid.bias);

            let mut upstream = FeatureMap::from_vec(self.arch.filters, 1, hid.input)?;
            for (i, layer) in cache.layers.iter().enumerate().rev() {
                let dact = maxpool_backward(&layer.pool, &upstream)?;
                let dpre = relu_backward(&layer.pre, &dact)?;
                let g = conv1d_backward(&layer.input, self.conv_view(i), &dpre)?;
                add_into(&mut dense_acc[2 * i], &g.weights);
                add_into(&mut dense_acc[2 * i + 1], &g.bias);
                upstream = g.input;
            }

            if !freeze_embeddings {
                let n = ids.len();
                for (t, &id) in ids.iter().enumerate() {
                    if id == PAD_ID {
                        continue;
                    }
                    let row = rows.entry(id).or_insert_with(|| vec![0f64; d]);
                    for (k, r) in row.iter_mut().enumerate() {
                        *r += upstream.as_slice()[k * n + t] as f64;
                    }
                }
            }
        }

        let b = batch.len() as f64;
        let dense = dense_acc
            .into_iter()
            .zip(&self.tensors[1..])
            .map(|(acc, t)| Tensor::from_vec(t.rows(), t.cols(), acc.into_iter().map(|g| (g / b) as f32).collect()))
            .collect::<Result<Vec<_>>>()?;
        let embedding_rows = rows
            .into_iter()
            .map(|(id, g)| (id, g.into_iter().map(|x| (x / b) as f32).collect()))
            .collect();
        Ok((
            loss_sum / b,
            Gradients {
                embedding_rows,
                dense,
            },
        ))
    }
}

struct LayerCache {
    input: FeatureMap,
    pre: FeatureMap,
    pool: PoolCache,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    features: Vec<f32>,
    hidden_pre: Vec<f32>,
    hidden: Vec<f32>,
    logits: Vec<f32>,
}

fn add_into(acc: &mut [f64], g: &[f32]) {
    for (a, &x) in acc.iter_mut().zip(g) {
        *a += x as f64;
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient of the mean loss. Embedding gradients are sparse: only rows of
/// ids present in the batch appear, `<pad>` never does.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding_rows: BTreeMap<u32, Vec<f32>>,
    /// Gradients of every tensor after the embedding, in parameter order.
    pub dense: Vec<Tensor>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.dense.iter().all(Tensor::is_finite)
            && self.embedding_rows.values().all(|r| r.iter().all(|g| g.is_finite()))
    }
}
