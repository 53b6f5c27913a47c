//! Embeddings, then distant supervision, then supervised training.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::embed::{train_skipgram, EmbeddingTable, SkipGramConfig};
use crate::error::{Error, Result};
use crate::model_io::Model;
use crate::network::{ArchitectureSpec, EmbeddingInit, NetworkParams, INIT_RANGE};
use crate::optim::{AdaDeltaConfig, AdaDeltaState};
use crate::textprep::TokenSequence;
use crate::vocab::Vocabulary;

use super::corpus::{embedding_corpus, read_distant, read_supervised, CorpusMix};
use super::{evaluate, run_phase, split_validation, HistoryPoint, LabeledExample, Phase, PhaseConfig};

/// Where the network's embedding table starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    Random,
    /// Skip-gram embeddings trained on the embedding corpus.
    Pretrained,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Random => "random",
            InitMode::Pretrained => "pretrained",
        })
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "pretrained" => Ok(InitMode::Pretrained),
            other => Err(Error::invalid(format!("unknown init mode {other:?} (expected random or pretrained)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mix: CorpusMix,
    pub arch: ArchitectureSpec,
    pub min_count: u64,
    /// Also fixes the embedding dimension of the network.
    pub skipgram: SkipGramConfig,
    pub init: InitMode,
    /// Half-width of the uniform initialization of network weights (and of
    /// embeddings under random init).
    pub init_range: f32,
    /// `epochs = 0` skips the distant phase.
    pub distant: PhaseConfig,
    pub supervised: PhaseConfig,
    /// Used when a language has no separate validation file.
    pub validation_fraction: f64,
    pub optimizer: AdaDeltaConfig,
    /// Seeds network initialization and the validation split.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(mix: CorpusMix) -> Self {
        TrainConfig {
            mix,
            arch: ArchitectureSpec::l2(),
            min_count: 15,
            skipgram: SkipGramConfig::default(),
            init: InitMode::Pretrained,
            init_range: INIT_RANGE,
            distant: PhaseConfig::distant(),
            supervised: PhaseConfig::supervised(),
            validation_fraction: 0.1,
            optimizer: AdaDeltaConfig::default(),
            seed: 1,
        }
    }

    /// Derives every stage's seed from one run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.skipgram.seed = seed;
        self.distant.seed = seed.wrapping_add(1);
        self.supervised.seed = seed.wrapping_add(2);
        self
    }

    pub fn dim(&self) -> usize {
        self.skipgram.dim
    }
}

/// Corpora after preprocessing, labeling and encoding.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    /// Unpadded id sequences for skip-gram.
    pub embedding_corpus: Vec<Vec<u32>>,
    pub distant: Vec<LabeledExample>,
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
}

impl PreparedData {
    pub fn load(cfg: &TrainConfig) -> Result<Self> {
        cfg.mix.validate()?;
        let n_max = cfg.arch.n_max;
        let supervised = cfg.mix.supervised_corpora()?;

        let mut gold_train: Vec<(String, Vec<(super::Sentiment, TokenSequence)>)> = Vec::new();
        let mut gold_val: Vec<(String, Vec<(super::Sentiment, TokenSequence)>)> = Vec::new();
        for (i, c) in supervised.iter().enumerate() {
            let rows: Vec<_> = read_supervised(&c.supervised)?
                .into_iter()
                .map(|(_, label, tokens)| (label, tokens))
                .collect();
            if rows.is_empty() {
                return Err(Error::invalid(format!("{}: no supervised examples", c.supervised.display())));
            }
            let (train, val) = match &c.validation {
                Some(path) => {
                    let val: Vec<_> = read_supervised(path)?.into_iter().map(|(_, l, t)| (l, t)).collect();
                    (rows, val)
                }
                None => split_validation(&rows, cfg.validation_fraction, cfg.seed.wrapping_add(3 + i as u64))?,
            };
            gold_train.push((c.language.clone(), train));
            gold_val.push((c.language.clone(), val));
        }

        let mut sequences: Vec<TokenSequence> = Vec::new();
        for c in cfg.mix.distant_corpora() {
            let gold_text: Vec<TokenSequence> = gold_train
                .iter()
                .filter(|(lang, _)| *lang == c.language)
                .flat_map(|(_, rows)| rows.iter().map(|(_, t)| t.clone()))
                .collect();
            sequences.extend(embedding_corpus(c, &gold_text)?);
        }
        let vocab = Vocabulary::build(sequences.iter(), cfg.min_count)?;
        let embedding_corpus = sequences.iter().map(|s| vocab.ids(s)).collect();

        let mut distant = Vec::new();
        if cfg.distant.epochs > 0 {
            for c in cfg.mix.distant_corpora() {
                if let Some(path) = &c.distant {
                    for (label, tokens) in read_distant(path, c.weight)? {
                        distant.push(LabeledExample::weak(vocab.encode(&tokens, n_max), label, &c.language));
                    }
                }
            }
            if distant.is_empty() {
                return Err(Error::invalid("distant phase enabled but the distant corpus is empty"));
            }
        }

        let encode = |sets: Vec<(String, Vec<(super::Sentiment, TokenSequence)>)>| -> Vec<LabeledExample> {
            sets.into_iter()
                .flat_map(|(lang, rows)| {
                    let vocab = &vocab;
                    rows.into_iter()
                        .map(move |(label, t)| LabeledExample::gold(vocab.encode(&t, n_max), label, lang.clone()))
                })
                .collect()
        };
        let train = encode(gold_train);
        let validation = encode(gold_val);
        if validation.is_empty() {
            return Err(Error::invalid("empty validation set"));
        }
        Ok(PreparedData {
            vocab,
            embedding_corpus,
            distant,
            train,
            validation,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub skipgram: Duration,
    pub distant: Duration,
    pub supervised: Duration,
}

#[derive(Debug, Clone)]
pub struct ThreePhaseReport {
    pub vocab: Vocabulary,
    /// Skip-gram output; `None` under random init.
    pub embeddings: Option<EmbeddingTable>,
    /// Best distant-phase snapshot; `None` when the phase was skipped.
    pub distant: Option<(NetworkParams, AdaDeltaState)>,
    pub model: Model,
    pub final_optimizer: Option<AdaDeltaState>,
    pub history: Vec<(Phase, HistoryPoint)>,
    pub distant_best: Option<f64>,
    pub supervised_best: Option<f64>,
    /// F1(pos,neg) of the final model on the validation set.
    pub validation_f1: f64,
    pub timings: PhaseTimings,
}

impl ThreePhaseReport {
    /// Network parameters entering the supervised phase.
    pub fn after_distant(&self) -> Option<&NetworkParams> {
        self.distant.as_ref().map(|(p, _)| p)
    }

    /// `step<TAB>phase<TAB>val_f1` rows.
    pub fn history_tsv(&self) -> String {
        let mut out = String::from("step\tphase\tval_f1\n");
        for (phase, h) in &self.history {
            out.push_str(&format!("{}\t{phase}\t{:.6}\n", h.step, h.score));
        }
        out
    }

    /// Writes `embeddings/`, `distant/` (each when present), `model/` and
    /// `history.tsv` under `dir`. Nothing time-dependent is written.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(table) = &self.embeddings {
            let edir = dir.join("embeddings");
            fs::create_dir_all(&edir).map_err(|e| Error::io(&edir, e))?;
            self.vocab.save(&edir.join("vocab.tsv"))?;
            table.save_bin(&edir.join("embeddings.bin"))?;
            table.save_text(&self.vocab, &edir.join("embeddings.txt"))?;
        }
        if let Some((params, state)) = &self.distant {
            Model::new(self.vocab.clone(), params.clone())?.save_with_optimizer(&dir.join("distant"), state)?;
        }
        let mdir = dir.join("model");
        match &self.final_optimizer {
            Some(state) => self.model.save_with_optimizer(&mdir, state)?,
            None => self.model.save(&mdir)?,
        }
        let hist = dir.join("history.tsv");
        fs::write(&hist, self.history_tsv()).map_err(|e| Error::io(&hist, e))
    }
}

/// Reads the corpora and runs all three phases.
pub fn run_three_phase(cfg: &TrainConfig) -> Result<ThreePhaseReport> {
    let data = PreparedData::load(cfg)?;
    run_prepared(cfg, &data)
}

/// Runs the three phases on already prepared data.
pub fn run_prepared(cfg: &TrainConfig, data: &PreparedData) -> Result<ThreePhaseReport> {
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let embeddings = match cfg.init {
        InitMode::Pretrained => Some(train_skipgram(&data.embedding_corpus, &data.vocab, &cfg.skipgram)?),
        InitMode::Random => None,
    };
    timings.skipgram = clock.elapsed();

    let init = match &embeddings {
        Some(t) => EmbeddingInit::Pretrained(t),
        None => EmbeddingInit::Random,
    };
    let params = NetworkParams::build_with_range(&cfg.arch, data.vocab.len(), cfg.dim(), init, cfg.seed, cfg.init_range)?;

    let mut history = Vec::new();
    let clock = Instant::now();
    let (start, distant, distant_best) = if cfg.distant.epochs > 0 {
        let out = run_phase(&params, &data.distant, &cfg.distant, &data.validation, cfg.optimizer)?;
        history.extend(out.history.iter().map(|h| (Phase::Distant, *h)));
        let state = out.best_optimizer.expect("phase ran");
        (out.best.clone(), Some((out.best, state)), out.best_score)
    } else {
        (params, None, None)
    };
    timings.distant = clock.elapsed();

    let clock = Instant::now();
    let out = run_phase(&start, &data.train, &cfg.supervised, &data.validation, cfg.optimizer)?;
    history.extend(out.history.iter().map(|h| (Phase::Supervised, *h)));
    timings.supervised = clock.elapsed();

    let validation_f1 = evaluate(&out.best, &data.validation)?.f1_pn();
    Ok(ThreePhaseReport {
        vocab: data.vocab.clone(),
        embeddings,
        distant,
        model: Model::new(data.vocab.clone(), out.best)?,
        final_optimizer: out.best_optimizer,
        history,
        distant_best,
        supervised_best: out.best_score,
        validation_f1,
        timings,
    })
}
