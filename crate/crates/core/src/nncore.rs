//! Forward and backward kernels: valid 1-D convolution (cross-correlation),
//! strided max-pooling, relu, dense layers and softmax cross-entropy.
//!
//! Values are f32; every dot product accumulates in f64.

use crate::error::{Error, Result};

/// `channels x len` activations, row-major by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    len: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, len: usize) -> Self {
        FeatureMap {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_vec(channels: usize, len: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{len} feature map",
                data.len()
            )));
        }
        Ok(FeatureMap { channels, len, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.len)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize) -> f32 {
        self.data[c * self.len + i]
    }
}

/// `m` filters of `channels_in x width` weights plus one bias each.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: usize,
    channels_in: usize,
    width: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl FilterBank {
    pub fn new(filters: usize, channels_in: usize, width: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if filters == 0 || width == 0 || channels_in == 0 {
            return Err(Error::invalid("filter bank dimensions must be positive"));
        }
        if weights.len() != filters * channels_in * width || bias.len() != filters {
            return Err(Error::shape(format!(
                "filter bank {filters}x{channels_in}x{width} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(FilterBank {
            filters,
            channels_in,
            width,
            weights,
            bias,
        })
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn channels_in(&self) -> usize {
        self.channels_in
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

/// Borrowed view of filter weights, so callers that keep parameters in flat
/// tensors can run convolutions without copying them into a [`FilterBank`].
#[derive(Debug, Clone, Copy)]
pub struct FilterView<'a> {
    pub filters: usize,
    pub channels_in: usize,
    pub width: usize,
    pub weights: &'a [f32],
    pub bias: &'a [f32],
}

impl<'a> From<&'a FilterBank> for FilterView<'a> {
    fn from(fb: &'a FilterBank) -> Self {
        FilterView {
            filters: fb.filters,
            channels_in: fb.channels_in,
            width: fb.width,
            weights: &fb.weights,
            bias: &fb.bias,
        }
    }
}

impl FilterView<'_> {
    fn check(&self) -> Result<()> {
        if self.filters == 0 || self.width == 0 || self.channels_in == 0 {
            return Err(Error::invalid("filter bank dimensions must be positive"));
        }
        if self.weights.len() != self.filters * self.channels_in * self.width || self.bias.len() != self.filters {
            return Err(Error::shape("filter weights do not match their declared shape"));
        }
        Ok(())
    }
}

pub fn conv_output_len(n: usize, h: usize) -> Option<usize> {
    (n >= h && h >= 1).then(|| n - h + 1)
}

pub fn pool_output_len(len: usize, window: usize, stride: usize) -> Option<usize> {
    (len >= window && window >= 1 && stride >= 1).then(|| (len - window) / stride + 1)
}

/// `out[f][i] = bias[f] + sum_{k,j} input[k][i+j] * w[f][k][j]`.
pub fn conv1d<'a>(input: &FeatureMap, filters: impl Into<FilterView<'a>>) -> Result<FeatureMap> {
    let fv = filters.into();
    fv.check()?;
    if input.channels != fv.channels_in {
        return Err(Error::shape(format!(
            "input has {} channels, filters expect {}",
            input.channels, fv.channels_in
        )));
    }
    let out_len =
        conv_output_len(input.len, fv.width).ok_or_else(|| Error::invalid("input shorter than filter window"))?;
    let h = fv.width;
    let mut out = FeatureMap::zeros(fv.filters, out_len);
    for f in 0..fv.filters {
        let wf = &fv.weights[f * fv.channels_in * h..(f + 1) * fv.channels_in * h];
        for i in 0..out_len {
            let mut acc = fv.bias[f] as f64;
            for k in 0..fv.channels_in {
                let x = &input.row(k)[i..i + h];
                let w = &wf[k * h..(k + 1) * h];
                for j in 0..h {
                    acc += x[j] as f64 * w[j] as f64;
                }
            }
            out.data[f * out_len + i] = acc as f32;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: FeatureMap,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Exact gradients of `conv1d` given the upstream gradient `dout`.
pub fn conv1d_backward<'a>(input: &FeatureMap, filters: impl Into<FilterView<'a>>, dout: &FeatureMap) -> Result<ConvGrads> {
    let fv = filters.into();
    fv.check()?;
    let h = fv.width;
    let expected = conv_output_len(input.len, h).map(|l| (fv.filters, l));
    if input.channels != fv.channels_in || expected != Some(dout.shape()) {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match conv output {:?}",
            dout.shape(),
            expected
        )));
    }
    let out_len = dout.len;
    let (m, c_in, n) = (fv.filters, fv.channels_in, input.len);

    let mut dbias = vec![0f32; m];
    let mut dweights = vec![0f32; m * c_in * h];
    for f in 0..m {
        let g = dout.row(f);
        dbias[f] = g.iter().map(|&x| x as f64).sum::<f64>() as f32;
        for k in 0..c_in {
            let x = input.row(k);
            for j in 0..h {
                let acc: f64 = (0..out_len).map(|i| g[i] as f64 * x[i + j] as f64).sum();
                dweights[(f * c_in + k) * h + j] = acc as f32;
            }
        }
    }

    let mut dinput = FeatureMap::zeros(c_in, n);
    for k in 0..c_in {
        for t in 0..n {
            let j_lo = (t + 1).saturating_sub(out_len);
            let j_hi = h.min(t + 1);
            let mut acc = 0f64;
            for f in 0..m {
                let g = dout.row(f);
                let base = (f * c_in + k) * h;
                for j in j_lo..j_hi {
                    acc += g[t - j] as f64 * fv.weights[base + j] as f64;
                }
            }
            dinput.data[k * n + t] = acc as f32;
        }
    }
    Ok(ConvGrads {
        input: dinput,
        weights: dweights,
        bias: dbias,
    })
}

/// Argmax positions recorded by [`maxpool`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    input_shape: (usize, usize),
    argmax: Vec<usize>,
}

/// Max over windows `[i*stride, i*stride + window)`; trailing partial
/// windows are dropped. Ties resolve to the lowest index.
pub fn maxpool(input: &FeatureMap, window: usize, stride: usize) -> Result<(FeatureMap, PoolCache)> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid("pool window and stride must be positive"));
    }
    let out_len =
        pool_output_len(input.len, window, stride).ok_or_else(|| Error::invalid("pool window exceeds length"))?;
    let mut out = FeatureMap::zeros(input.channels, out_len);
    let mut argmax = Vec::with_capacity(input.channels * out_len);
    for c in 0..input.channels {
        let row = input.row(c);
        for i in 0..out_len {
            let start = i * stride;
            let mut best = start;
            for t in start + 1..start + window {
                if row[t] > row[best] {
                    best = t;
                }
            }
            out.data[c * out_len + i] = row[best];
            argmax.push(best);
        }
    }
    Ok((
        out,
        PoolCache {
            input_shape: input.shape(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to its window's argmax.
pub fn maxpool_backward(cache: &PoolCache, dout: &FeatureMap) -> Result<FeatureMap> {
    let (channels, len) = cache.input_shape;
    if dout.channels != channels || dout.data.len() != cache.argmax.len() {
        return Err(Error::shape("upstream gradient does not match pooled output"));
    }
    let out_len = dout.len;
    let mut dinput = FeatureMap::zeros(channels, len);
    for c in 0..channels {
        for i in 0..out_len {
            let idx = c * out_len + i;
            dinput.data[c * len + cache.argmax[idx]] += dout.data[idx];
        }
    }
    Ok(dinput)
}

pub fn relu(input: &FeatureMap) -> FeatureMap {
    FeatureMap {
        channels: input.channels,
        len: input.len,
        data: input.data.iter().map(|&x| x.max(0.0)).collect(),
    }
}

pub fn relu_slice(input: &[f32]) -> Vec<f32> {
    input.iter().map(|&x| x.max(0.0)).collect()
}

/// Masks `dout` by `input > 0`, where `input` is the pre-activation.
pub fn relu_backward(input: &FeatureMap, dout: &FeatureMap) -> Result<FeatureMap> {
    if input.shape() != dout.shape() {
        return Err(Error::shape("relu gradient shape differs from its input"));
    }
    Ok(FeatureMap {
        channels: input.channels,
        len: input.len,
        data: relu_backward_slice(&input.data, &dout.data)?,
    })
}

pub fn relu_backward_slice(input: &[f32], dout: &[f32]) -> Result<Vec<f32>> {
    if input.len() != dout.len() {
        return Err(Error::shape("relu gradient length differs from its input"));
    }
    Ok(input
        .iter()
        .zip(dout)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect())
}

/// `y = W x + b` with `W` stored `outputs x inputs`, row-major.
pub fn dense(weights: &[f32], bias: &[f32], x: &[f32]) -> Result<Vec<f32>> {
    let outputs = bias.len();
    if weights.len() != outputs * x.len() {
        return Err(Error::shape(format!(
            "dense layer {}x{} applied to length {}",
            outputs,
            weights.len() / outputs.max(1),
            x.len()
        )));
    }
    Ok((0..outputs)
        .map(|o| {
            let w = &weights[o * x.len()..(o + 1) * x.len()];
            let acc: f64 = w.iter().zip(x).map(|(&a, &b)| a as f64 * b as f64).sum();
            (acc + bias[o] as f64) as f32
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Vec<f32>,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

pub fn dense_backward(weights: &[f32], x: &[f32], dout: &[f32]) -> Result<DenseGrads> {
    let (outputs, inputs) = (dout.len(), x.len());
    if weights.len() != outputs * inputs {
        return Err(Error::shape("dense gradient does not match the layer"));
    }
    let mut dw = vec![0f32; outputs * inputs];
    for o in 0..outputs {
        for i in 0..inputs {
            dw[o * inputs + i] = (dout[o] as f64 * x[i] as f64) as f32;
        }
    }
    let dx = (0..inputs)
        .map(|i| {
            (0..outputs)
                .map(|o| weights[o * inputs + i] as f64 * dout[o] as f64)
                .sum::<f64>() as f32
        })
        .collect();
    Ok(DenseGrads {
        input: dx,
        weights: dw,
        bias: dout.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxXent {
    pub probs: Vec<f32>,
    pub loss: f64,
    pub dlogits: Vec<f32>,
}

pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&z| (z as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Max-shifted softmax, `-ln p[gold]` and `p - onehot(gold)`.
pub fn softmax_xent(logits: &[f32], gold: usize) -> Result<SoftmaxXent> {
    if gold >= logits.len() {
        return Err(Error::invalid(format!("class {gold} out of range for {} logits", logits.len())));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Diverged);
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let shifted: Vec<f64> = logits.iter().map(|&z| z as f64 - max).collect();
    let log_sum = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    let probs: Vec<f64> = shifted.iter().map(|s| (s - log_sum).exp()).collect();
    let loss = (log_sum - shifted[gold]).max(0.0);
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(j, &p)| (p - if j == gold { 1.0 } else { 0.0 }) as f32)
        .collect();
    Ok(SoftmaxXent {
        probs: probs.into_iter().map(|p| p as f32).collect(),
        loss,
        dlogits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(channels: usize, len: usize, data: &[f32]) -> FeatureMap {
        FeatureMap::from_vec(channels, len, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_all_ones() {
        let input = fm(2, 3, &[1.0; 6]);
        let bank = FilterBank::new(1, 2, 2, vec![1.0; 4], vec![0.0]).unwrap();
        assert_eq!(conv1d(&input, &bank).unwrap().as_slice(), &[4.0, 4.0]);
    }

    #[test]
    fn conv_selector_filter() {
        let input = fm(2, 4, &[1.0, 2.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0]);
        let bank = FilterBank::new(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![0.0]).unwrap();
        assert_eq!(conv1d(&input, &bank).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_too_short() {
        let input = fm(1, 2, &[1.0, 1.0]);
        let bank = FilterBank::new(1, 1, 3, vec![1.0; 3], vec![0.0]).unwrap();
        assert_eq!(conv1d(&input, &bank).unwrap_err().to_string(), "input shorter than filter window");
        let wrong_channels = fm(2, 4, &[0.0; 8]);
        assert!(conv1d(&wrong_channels, &bank).is_err());
    }

    #[test]
    fn conv_backward_hand_sum() {
        let input = fm(1, 3, &[1.0, 1.0, 1.0]);
        let bank = FilterBank::new(1, 1, 2, vec![0.5, -0.5], vec![0.0]).unwrap();
        let g = conv1d_backward(&input, &bank, &fm(1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(g.weights, vec![2.0, 2.0]);
        assert_eq!(g.bias, vec![2.0]);
        assert_eq!(g.input.as_slice(), &[0.5, 0.0, -0.5]);
        assert!(conv1d_backward(&input, &bank, &fm(1, 3, &[1.0; 3])).is_err());
    }

    #[test]
    fn pool_examples() {
        let (out, _) = maxpool(&fm(1, 5, &[1.0, 3.0, 2.0, 5.0, 4.0]), 2, 2).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 5.0]);
        let (out, _) = maxpool(&FeatureMap::zeros(1, 10), 4, 2).unwrap();
        assert_eq!(out.len(), 4);
        let (out, _) = maxpool(&fm(1, 4, &[2.0, 7.0, -1.0, 3.0]), 4, 1).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
        assert_eq!(
            maxpool(&fm(1, 2, &[0.0, 0.0]), 3, 1).unwrap_err().to_string(),
            "pool window exceeds length"
        );
        assert!(maxpool(&fm(1, 2, &[0.0, 0.0]), 0, 1).is_err());
        assert!(maxpool(&fm(1, 2, &[0.0, 0.0]), 1, 0).is_err());
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let (_, cache) = maxpool(&fm(1, 2, &[1.0, 3.0]), 2, 2).unwrap();
        let d = maxpool_backward(&cache, &fm(1, 1, &[0.7])).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.7]);
        assert!(maxpool_backward(&cache, &fm(1, 2, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn pool_ties_go_to_lowest_index() {
        let (_, cache) = maxpool(&fm(1, 4, &[5.0, 5.0, 5.0, 1.0]), 3, 1).unwrap();
        let d = maxpool_backward(&cache, &fm(1, 2, &[1.0, 10.0])).unwrap();
        assert_eq!(d.as_slice(), &[1.0, 10.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&fm(1, 3, &[-1.0, 0.0, 2.0])).as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&fm(1, 2, &[-1.0, -3.0])).as_slice(), &[0.0, 0.0]);
        assert_eq!(relu(&fm(1, 2, &[1.0, 3.0])).as_slice(), &[1.0, 3.0]);
        let d = relu_backward(&fm(1, 3, &[-1.0, 0.0, 2.0]), &fm(1, 3, &[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.0, 5.0]);
        assert!(relu_backward(&fm(1, 1, &[1.0]), &fm(1, 2, &[1.0, 1.0])).is_err());
    }

    #[test]
    fn softmax_uniform() {
        let s = softmax_xent(&[0.0, 0.0, 0.0], 1).unwrap();
        for p in &s.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-7);
        }
        assert!((s.loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_stable() {
        let s = softmax_xent(&[1000.0, 0.0, -1000.0], 0).unwrap();
        assert_eq!(s.probs, vec![1.0, 0.0, 0.0]);
        assert!(s.loss.abs() < 1e-12);
        assert!(s.dlogits.iter().all(|g| g.is_finite()));
        assert!(softmax_xent(&[0.0, 1.0], 2).is_err());
        assert!(softmax_xent(&[f32::NAN, 1.0], 0).is_err());
    }

    #[test]
    fn dense_shapes() {
        let y = dense(&[1.0, 2.0, 3.0, 4.0], &[0.5, -0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![3.5, 6.5]);
        assert!(dense(&[1.0, 2.0, 3.0], &[0.0, 0.0], &[1.0, 1.0]).is_err());
        let g = dense_backward(&[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0], &[1.0, 0.5]).unwrap();
        assert_eq!(g.weights, vec![1.0, -1.0, 0.5, -0.5]);
        assert_eq!(g.input, vec![2.5, 4.0]);
        assert_eq!(g.bias, vec![1.0, 0.5]);
    }
}
