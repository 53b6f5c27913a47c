//! AdaDelta with per-tensor accumulators.
//!
//! Per element: `Eg2 <- rho*Eg2 + (1-rho)*g^2`,
//! `dx = -sqrt(Edx2 + eps) / sqrt(Eg2 + eps) * g`,
//! `Edx2 <- rho*Edx2 + (1-rho)*dx^2`, `p <- p + dx`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Gradients, NetworkParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient; zero disables it.
    pub weight_decay: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        AdaDeltaConfig {
            rho: 0.95,
            eps: 1e-6,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    config: AdaDeltaConfig,
    eg2: Vec<Tensor>,
    edx2: Vec<Tensor>,
}

/// One element's update. Returns the applied delta.
#[inline]
fn update(cfg: &AdaDeltaConfig, p: &mut f32, g: f32, eg2: &mut f32, edx2: &mut f32) -> f64 {
    let g = g as f64 + cfg.weight_decay * *p as f64;
    let e_g = cfg.rho * *eg2 as f64 + (1.0 - cfg.rho) * g * g;
    let dx = -((*edx2 as f64 + cfg.eps).sqrt() / (e_g + cfg.eps).sqrt()) * g;
    let e_dx = cfg.rho * *edx2 as f64 + (1.0 - cfg.rho) * dx * dx;
    *eg2 = e_g as f32;
    *edx2 = e_dx as f32;
    *p = (*p as f64 + dx) as f32;
    dx
}

impl AdaDeltaState {
    pub fn new(config: AdaDeltaConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let ok = (0.0..1.0).contains(&config.rho) && config.rho > 0.0 && config.eps > 0.0 && config.weight_decay >= 0.0;
        if !ok {
            return Err(Error::invalid("AdaDelta needs 0 < rho < 1, eps > 0, weight_decay >= 0"));
        }
        let eg2: Vec<Tensor> = shapes.into_iter().map(|(r, c)| Tensor::zeros(r, c)).collect();
        Ok(AdaDeltaState {
            config,
            edx2: eg2.clone(),
            eg2,
        })
    }

    pub fn for_params(config: AdaDeltaConfig, params: &NetworkParams) -> Result<Self> {
        Self::new(config, params.tensors().iter().map(Tensor::shape))
    }

    pub fn config(&self) -> &AdaDeltaConfig {
        &self.config
    }

    pub fn accumulators(&self) -> (&[Tensor], &[Tensor]) {
        (&self.eg2, &self.edx2)
    }

    /// Dense update of every tensor. Shapes must match the state.
    pub fn step_tensors(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.eg2.len() || grads.len() != params.len() {
            return Err(Error::shape("parameter, gradient and state counts differ"));
        }
        for ((p, g), s) in params.iter().zip(grads).zip(&self.eg2) {
            if p.shape() != g.shape() || p.shape() != s.shape() {
                return Err(Error::shape(format!("tensor {:?} with gradient {:?}", p.shape(), g.shape())));
            }
        }
        if !grads.iter().all(Tensor::is_finite) {
            return Err(Error::Diverged);
        }
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.apply_dense(i, p, g.as_slice());
        }
        Ok(())
    }

    fn apply_dense(&mut self, index: usize, p: &mut Tensor, g: &[f32]) {
        let cfg = self.config;
        let eg2 = self.eg2[index].as_mut_slice();
        let edx2 = self.edx2[index].as_mut_slice();
        for (((p, &g), a), b) in p.as_mut_slice().iter_mut().zip(g).zip(eg2).zip(edx2) {
            update(&cfg, p, g, a, b);
        }
    }

    /// Applies network gradients. Only embedding rows present in the sparse
    /// gradient (and their accumulators) change.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) -> Result<()> {
        let tensors = params.tensors_mut();
        if tensors.len() != self.eg2.len() || grads.dense.len() + 1 != tensors.len() {
            return Err(Error::shape("gradient set does not match the parameters"));
        }
        for ((p, g), s) in tensors[1..].iter().zip(&grads.dense).zip(&self.eg2[1..]) {
            if p.shape() != g.shape() || p.shape() != s.shape() {
                return Err(Error::shape(format!("tensor {:?} with gradient {:?}", p.shape(), g.shape())));
            }
        }
        let (v, d) = tensors[0].shape();
        for (&id, row) in &grads.embedding_rows {
            if id as usize >= v || row.len() != d {
                return Err(Error::shape(format!("embedding gradient row {id} of length {}", row.len())));
            }
        }
        if !grads.is_finite() {
            return Err(Error::Diverged);
        }

        let cfg = self.config;
        for (&id, row) in &grads.embedding_rows {
            let r = id as usize;
            let p = tensors[0].row_mut(r);
            let eg2 = self.eg2[0].row_mut(r);
            let edx2 = self.edx2[0].row_mut(r);
            for (((p, &g), a), b) in p.iter_mut().zip(row).zip(eg2).zip(edx2) {
                update(&cfg, p, g, a, b);
            }
        }
        for (i, g) in grads.dense.iter().enumerate() {
            self.apply_dense(i + 1, &mut tensors[i + 1], g.as_slice());
        }
        Ok(())
    }

    /// Writes `<name>.eg2.bin`, `<name>.edx2.bin` per tensor plus
    /// `optimizer.txt` with the hyperparameters.
    pub fn save(&self, dir: &Path, names: &[String]) -> Result<()> {
        if names.len() != self.eg2.len() {
            return Err(Error::shape("one name per tensor required"));
        }
        for ((name, a), b) in names.iter().zip(&self.eg2).zip(&self.edx2) {
            a.save(&dir.join(format!("{name}.eg2.bin")))?;
            b.save(&dir.join(format!("{name}.edx2.bin")))?;
        }
        let meta = format!(
            "rho={}\neps={}\nweight_decay={}\n",
            self.config.rho, self.config.eps, self.config.weight_decay
        );
        let path = dir.join("optimizer.txt");
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, names: &[String]) -> Result<Self> {
        let path = dir.join("optimizer.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut config = AdaDeltaConfig::default();
        for (n, line) in text.lines().enumerate() {
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(&path, n + 1, "expected key=value"));
            };
            let v: f64 = v.parse().map_err(|_| Error::parse(&path, n + 1, "bad number"))?;
            match k {
                "rho" => config.rho = v,
                "eps" => config.eps = v,
                "weight_decay" => config.weight_decay = v,
                _ => return Err(Error::parse(&path, n + 1, format!("unknown key {k}"))),
            }
        }
        let mut eg2 = Vec::with_capacity(names.len());
        let mut edx2 = Vec::with_capacity(names.len());
        for name in names {
            eg2.push(Tensor::load(&dir.join(format!("{name}.eg2.bin")))?);
            edx2.push(Tensor::load(&dir.join(format!("{name}.edx2.bin")))?);
        }
        let state = AdaDeltaState::new(config, eg2.iter().map(Tensor::shape))?;
        Ok(AdaDeltaState { eg2, edx2, ..state })
    }
}
