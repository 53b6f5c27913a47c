//! Training phases, model selection and the three-phase procedure.

mod corpus;
mod three_phase;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use corpus::{
    embedding_corpus, read_distant, read_supervised, CorpusMix, LanguageCorpora, Variant,
};
pub use three_phase::{run_prepared, run_three_phase, InitMode, PhaseTimings, PreparedData, ThreePhaseReport, TrainConfig};

use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::network::NetworkParams;
use crate::optim::{AdaDeltaConfig, AdaDeltaState};
use crate::textprep::WeakLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl From<WeakLabel> for Sentiment {
    fn from(w: WeakLabel) -> Self {
        match w {
            WeakLabel::Negative => Sentiment::Negative,
            WeakLabel::Positive => Sentiment::Positive,
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Positive => "positive",
        })
    }
}

impl FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            "positive" => Ok(Sentiment::Positive),
            other => Err(Error::invalid(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub ids: Vec<u32>,
    pub label: Sentiment,
    pub weak: bool,
    pub language: String,
}

impl LabeledExample {
    pub fn gold(ids: Vec<u32>, label: Sentiment, language: impl Into<String>) -> Self {
        LabeledExample {
            ids,
            label,
            weak: false,
            language: language.into(),
        }
    }

    /// Weak examples only ever carry a polarity.
    pub fn weak(ids: Vec<u32>, label: WeakLabel, language: impl Into<String>) -> Self {
        LabeledExample {
            ids,
            label: label.into(),
            weak: true,
            language: language.into(),
        }
    }
}

/// Uniform split without replacement; `round(fraction * n)` examples go to
/// validation. Both sides keep input order.
pub fn split_validation<T: Clone>(data: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("validation fraction must lie in (0, 1)"));
    }
    let n_val = (fraction * data.len() as f64).round() as usize;
    if n_val == 0 || n_val >= data.len() {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {} examples leaves one side empty",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; data.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (item, v) in data.iter().zip(is_val) {
        if v {
            val.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Distant,
    Supervised,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Distant => "distant",
            Phase::Supervised => "supervised",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub epochs: usize,
    pub batch_size: usize,
    /// Evaluate every this many batches; epoch ends are always evaluated.
    pub eval_every: Option<usize>,
    pub freeze_embeddings: bool,
    /// Down-sample the larger weak class to the size of the smaller.
    pub balance: bool,
    pub seed: u64,
}

impl PhaseConfig {
    pub fn distant() -> Self {
        PhaseConfig {
            phase: Phase::Distant,
            epochs: 1,
            batch_size: 128,
            eval_every: Some(1000),
            freeze_embeddings: false,
            balance: false,
            seed: 1,
        }
    }

    pub fn supervised() -> Self {
        PhaseConfig {
            phase: Phase::Supervised,
            epochs: 20,
            batch_size: 32,
            eval_every: None,
            freeze_embeddings: false,
            balance: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    /// Batches processed in this phase when the score was taken.
    pub step: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub best: NetworkParams,
    pub best_score: Option<f64>,
    /// Optimizer state matching `best`, for resuming from it.
    pub best_optimizer: Option<AdaDeltaState>,
    pub history: Vec<HistoryPoint>,
}

/// Confusion matrix of `params` over `examples`.
pub fn evaluate(params: &NetworkParams, examples: &[LabeledExample]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for ex in examples {
        cm.add(ex.label.index(), params.predict(&ex.ids)?)?;
    }
    Ok(cm)
}

fn balance_weak(data: &[LabeledExample], seed: u64) -> Vec<LabeledExample> {
    let (mut pos, mut neg): (Vec<&LabeledExample>, Vec<&LabeledExample>) =
        data.iter().partition(|e| e.label == Sentiment::Positive);
    let keep = pos.len().min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    for side in [&mut pos, &mut neg] {
        if side.len() > keep {
            let mut idx: Vec<usize> = (0..side.len()).collect();
            idx.shuffle(&mut rng);
            let mut chosen = idx[..keep].to_vec();
            chosen.sort_unstable();
            *side = chosen.into_iter().map(|i| side[i]).collect();
        }
    }
    // restore corpus order
    let mut kept: Vec<LabeledExample> = Vec::with_capacity(2 * keep);
    let (mut i, mut j) = (0, 0);
    for e in data {
        if i < pos.len() && std::ptr::eq(e, pos[i]) {
            kept.push(e.clone());
            i += 1;
        } else if j < neg.len() && std::ptr::eq(e, neg[j]) {
            kept.push(e.clone());
            j += 1;
        }
    }
    kept
}

/// Visiting order of `n` examples in `epoch`: a permutation derived from
/// `(seed, epoch)` alone.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Trains over shuffled mini-batches for `cfg.epochs`, scoring F1(pos,neg)
/// on `validation` periodically, and returns the best snapshot (earliest
/// on ties) with the full score history.
pub fn run_phase(
    params: &NetworkParams,
    data: &[LabeledExample],
    cfg: &PhaseConfig,
    validation: &[LabeledExample],
    optimizer: AdaDeltaConfig,
) -> Result<PhaseOutcome> {
    if cfg.epochs == 0 {
        return Ok(PhaseOutcome {
            best: params.clone(),
            best_score: None,
            best_optimizer: None,
            history: Vec::new(),
        });
    }
    if data.is_empty() {
        return Err(Error::invalid(format!("no training data for the {} phase", cfg.phase)));
    }
    if validation.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    if cfg.batch_size == 0 || cfg.eval_every == Some(0) {
        return Err(Error::invalid("batch_size and eval_every must be positive"));
    }
    if cfg.phase == Phase::Distant && data.iter().any(|e| e.label == Sentiment::Neutral) {
        return Err(Error::invalid("distant data may not contain neutral labels"));
    }

    let balanced;
    let data = if cfg.balance {
        balanced = balance_weak(data, cfg.seed);
        if balanced.is_empty() {
            return Err(Error::invalid("balancing left no training data"));
        }
        &balanced[..]
    } else {
        data
    };

    let mut current = params.clone();
    let mut state = AdaDeltaState::for_params(optimizer, &current)?;
    let mut best: Option<(f64, NetworkParams, AdaDeltaState)> = None;
    let mut history = Vec::new();
    let mut step = 0usize;
    let mut last_eval = None;

    let mut score_now = |step: usize,
                         current: &NetworkParams,
                         state: &AdaDeltaState,
                         best: &mut Option<(f64, NetworkParams, AdaDeltaState)>|
     -> Result<()> {
        let score = evaluate(current, validation)?.f1_pn();
        history.push(HistoryPoint { step, score });
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            *best = Some((score, current.clone(), state.clone()));
        }
        Ok(())
    };

    for epoch in 0..cfg.epochs {
        for chunk in epoch_order(data.len(), cfg.seed, epoch).chunks(cfg.batch_size) {
            let batch: Vec<(&[u32], usize)> = chunk
                .iter()
                .map(|&i| (data[i].ids.as_slice(), data[i].label.index()))
                .collect();
            let (loss, grads) = current.loss_and_grads(&batch, cfg.freeze_embeddings)?;
            if !loss.is_finite() {
                return Err(Error::Diverged);
            }
            state.step(&mut current, &grads)?;
            step += 1;
            if cfg.eval_every.is_some_and(|k| step.is_multiple_of(k)) {
                score_now(step, &current, &state, &mut best)?;
                last_eval = Some(step);
            }
        }
        if last_eval != Some(step) {
            score_now(step, &current, &state, &mut best)?;
            last_eval = Some(step);
        }
    }

    let (score, best, opt) = best.expect("at least one evaluation");
    Ok(PhaseOutcome {
        best,
        best_score: Some(score),
        best_optimizer: Some(opt),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ArchitectureSpec, EmbeddingInit};

    #[test]
    fn split_counts_and_partition() {
        let data: Vec<usize> = (0..100).collect();
        let (train, val) = split_validation(&data, 0.1, 4).unwrap();
        assert_eq!((train.len(), val.len()), (90, 10));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, data);
        assert_eq!(split_validation(&data, 0.1, 4).unwrap(), (train, val.clone()));
        assert_ne!(split_validation(&data, 0.1, 5).unwrap().1, val);
    }

    #[test]
    fn split_rejects_empty_sides() {
        let data = [1, 2, 3];
        assert!(split_validation(&data, 0.1, 1).is_err());
        assert!(split_validation(&data, 0.9, 1).is_err());
        assert!(split_validation(&data, 0.0, 1).is_err());
        assert!(split_validation(&data, 1.0, 1).is_err());
        assert!(split_validation(&data[..1], 0.5, 1).is_err());
    }

    #[test]
    fn sentiment_labels() {
        assert_eq!("neutral".parse::<Sentiment>().unwrap(), Sentiment::Neutral);
        assert!("Neutral".parse::<Sentiment>().is_err());
        assert_eq!(Sentiment::from_index(2), Some(Sentiment::Positive));
        assert_eq!(Sentiment::from(WeakLabel::Negative).index(), 0);
    }

    fn toy() -> (NetworkParams, Vec<LabeledExample>) {
        let arch = ArchitectureSpec::l1().with_filters(4).with_n_max(8);
        let p = NetworkParams::build(&arch, 10, 4, EmbeddingInit::Random, 1).unwrap();
        let data = (0..12)
            .map(|i| {
                let label = Sentiment::ALL[i % 3];
                LabeledExample::gold(vec![2 + label.index() as u32, 5, 0, 0, 0, 0, 0, 0], label, "en")
            })
            .collect();
        (p, data)
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (p, data) = toy();
        let cfg = PhaseConfig {
            epochs: 0,
            ..PhaseConfig::supervised()
        };
        let out = run_phase(&p, &data, &cfg, &data, AdaDeltaConfig::default()).unwrap();
        assert_eq!(out.best, p);
        assert!(out.history.is_empty());
        assert!(out.best_score.is_none());
    }

    #[test]
    fn best_score_is_history_max() {
        let (p, data) = toy();
        let cfg = PhaseConfig {
            epochs: 3,
            batch_size: 5,
            eval_every: Some(2),
            ..PhaseConfig::supervised()
        };
        let out = run_phase(&p, &data, &cfg, &data, AdaDeltaConfig::default()).unwrap();
        // 3 batches per epoch, evaluations at steps 2,3,4,6,8,9
        let steps: Vec<usize> = out.history.iter().map(|h| h.step).collect();
        assert_eq!(steps, vec![2, 3, 4, 6, 8, 9]);
        let max = out.history.iter().map(|h| h.score).fold(f64::MIN, f64::max);
        assert_eq!(out.best_score, Some(max));
        let first_best = out.history.iter().find(|h| h.score == max).unwrap();
        assert!(first_best.step <= 9);
    }

    #[test]
    fn distant_phase_rejects_neutral() {
        let (p, data) = toy();
        let cfg = PhaseConfig::distant();
        assert!(run_phase(&p, &data, &cfg, &data, AdaDeltaConfig::default()).is_err());
        assert!(run_phase(&p, &[], &PhaseConfig::supervised(), &data, AdaDeltaConfig::default()).is_err());
        assert!(run_phase(&p, &data, &PhaseConfig::supervised(), &[], AdaDeltaConfig::default()).is_err());
    }

    #[test]
    fn balancing_equalizes_classes() {
        let mk = |label| LabeledExample::weak(vec![2], label, "en");
        let mut data = vec![mk(WeakLabel::Positive); 7];
        data.extend(vec![mk(WeakLabel::Negative); 3]);
        let b = balance_weak(&data, 1);
        assert_eq!(b.iter().filter(|e| e.label == Sentiment::Positive).count(), 3);
        assert_eq!(b.iter().filter(|e| e.label == Sentiment::Negative).count(), 3);
    }
}
