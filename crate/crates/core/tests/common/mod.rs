//! Shared test helpers: a naive f64 reference network and finite
//! differences. Written independently of the library's kernels.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tweetcnn::network::{ArchitectureSpec, Pool};
use tweetcnn::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, range: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-range..range)).collect()
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Matrix stored as `rows[channel][position]`.
pub type Seq = Vec<Vec<f64>>;

/// Valid cross-correlation; `w[f][k * h + j]`.
pub fn conv(x: &Seq, w: &[Vec<f64>], b: &[f64], h: usize) -> Seq {
    let n = x[0].len();
    let out = n + 1 - h;
    w.iter()
        .zip(b)
        .map(|(wf, bf)| {
            (0..out)
                .map(|i| {
                    let mut s = *bf;
                    for (k, row) in x.iter().enumerate() {
                        for j in 0..h {
                            s += wf[k * h + j] * row[i + j];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn pool(x: &Seq, window: usize, stride: usize) -> Seq {
    x.iter()
        .map(|row| {
            let out = (row.len() - window) / stride + 1;
            (0..out)
                .map(|i| {
                    row[i * stride..i * stride + window]
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect()
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + (0..x.len()).map(|i| w[o * x.len() + i] * x[i]).sum::<f64>())
        .collect()
}

pub fn xent(logits: &[f64], gold: usize) -> f64 {
    let lse = logits.iter().map(|z| z.exp()).sum::<f64>().ln();
    lse - logits[gold]
}

/// Parameters of the reference network, in the library's tensor order.
#[derive(Debug, Clone)]
pub struct RefNet {
    pub arch: ArchitectureSpec,
    pub shapes: Vec<(usize, usize)>,
    pub tensors: Vec<Vec<f64>>,
}

impl RefNet {
    pub fn from_tensors(arch: &ArchitectureSpec, tensors: &[Tensor]) -> Self {
        RefNet {
            arch: arch.clone(),
            shapes: tensors.iter().map(Tensor::shape).collect(),
            tensors: tensors.iter().map(|t| to_f64(t.as_slice())).collect(),
        }
    }

    pub fn logits(&self, ids: &[u32]) -> Vec<f64> {
        let (_, d) = self.shapes[0];
        let emb = &self.tensors[0];
        let mut x: Seq = (0..d)
            .map(|k| ids.iter().map(|&id| emb[id as usize * d + k]).collect())
            .collect();
        let m = self.arch.filters;
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let wt = &self.tensors[1 + 2 * i];
            let cols = wt.len() / m;
            let w: Vec<Vec<f64>> = (0..m).map(|f| wt[f * cols..(f + 1) * cols].to_vec()).collect();
            let act: Seq = conv(&x, &w, &self.tensors[2 + 2 * i], layer.width)
                .into_iter()
                .map(|row| row.into_iter().map(relu).collect())
                .collect();
            let len = act[0].len();
            let p = layer.pool.unwrap_or(Pool { window: len, stride: 1 });
            x = pool(&act, p.window, p.stride);
        }
        let features: Vec<f64> = x.iter().map(|row| row[0]).collect();
        let h = 1 + 2 * self.arch.layers.len();
        let hidden: Vec<f64> = affine(&self.tensors[h], &self.tensors[h + 1], &features)
            .into_iter()
            .map(relu)
            .collect();
        affine(&self.tensors[h + 2], &self.tensors[h + 3], &hidden)
    }

    pub fn probs(&self, ids: &[u32]) -> Vec<f64> {
        let z = self.logits(ids);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn mean_loss(&self, batch: &[(Vec<u32>, usize)]) -> f64 {
        batch.iter().map(|(ids, y)| xent(&self.logits(ids), *y)).sum::<f64>() / batch.len() as f64
    }
}

/// Central difference of `f` with respect to every coordinate of `x`.
pub fn numeric_grad(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over the two gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
