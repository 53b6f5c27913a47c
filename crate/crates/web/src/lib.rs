//! Browser demo: preprocessing and weak labeling, a small model trained
//! in the page on synthetic tweets, and a PCA view of its embeddings before
//! and after the distant phase.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tweetcnn::embed::{cosine, pca_project_2d, train_skipgram, EmbeddingTable, SkipGramConfig};
use tweetcnn::network::{ArchitectureSpec, EmbeddingInit};
use tweetcnn::optim::AdaDeltaConfig;
use tweetcnn::pipeline::{evaluate, run_phase, LabeledExample, PhaseConfig};
use tweetcnn::synth::{gold_rows, SynthConfig, SynthLanguage};
use tweetcnn::textprep::{preprocess, weak_label};
use tweetcnn::{Model, NetworkParams, Vocabulary};
use wasm_bindgen::prelude::*;

const N_MAX: usize = 16;
const DIM: usize = 16;

/// Preprocessed tokens on the first line, the weak label (or `none`) on the
/// second.
#[wasm_bindgen]
pub fn analyze(text: &str) -> String {
    let tokens = preprocess(text);
    let label = match weak_label(&tokens) {
        Some((l, _)) => l.to_string(),
        None => "none".to_owned(),
    };
    format!("{}\n{label}", tokens.joined())
}

#[wasm_bindgen]
pub struct Demo {
    model: Model,
    skipgram: EmbeddingTable,
    distant: EmbeddingTable,
    markers: (String, String),
    validation_f1: f64,
}

impl Demo {
    pub fn train(seed: u64) -> Result<Demo, String> {
        let synth = SynthConfig {
            markers: 3,
            fillers: 40,
            min_len: 4,
            max_len: 10,
            ..SynthConfig::default()
        };
        let lang = SynthLanguage::new("", &synth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let distant: Vec<_> = (0..4000)
            .filter_map(|_| weak_label(&preprocess(&lang.distant_tweet(&synth, &mut rng))))
            .filter(|(_, t)| !t.is_empty())
            .collect();
        let train = gold_rows(&lang, 150, &mut rng);
        let validation = gold_rows(&lang, 90, &mut rng);

        let corpus: Vec<_> = distant
            .iter()
            .map(|(_, t)| t.clone())
            .chain(train.iter().map(|(_, t)| preprocess(t)))
            .collect();
        let vocab = Vocabulary::build(corpus.iter(), 2).map_err(|e| e.to_string())?;
        let ids: Vec<Vec<u32>> = corpus.iter().map(|t| vocab.ids(t)).collect();
        let sg = SkipGramConfig {
            dim: DIM,
            subsample_t: 1e-3,
            seed,
            ..SkipGramConfig::default()
        };
        let skipgram = train_skipgram(&ids, &vocab, &sg).map_err(|e| e.to_string())?;

        let gold = |rows: &[(tweetcnn::Sentiment, String)]| -> Vec<LabeledExample> {
            rows.iter()
                .map(|(l, t)| LabeledExample::gold(vocab.encode(&preprocess(t), N_MAX), *l, "en"))
                .collect()
        };
        let weak: Vec<LabeledExample> = distant
            .iter()
            .map(|(l, t)| LabeledExample::weak(vocab.encode(t, N_MAX), *l, "en"))
            .collect();
        let (train, validation) = (gold(&train), gold(&validation));

        let arch = ArchitectureSpec::l1().with_filters(16).with_n_max(N_MAX);
        let init = EmbeddingInit::Pretrained(&skipgram);
        let params = NetworkParams::build_with_range(&arch, vocab.len(), DIM, init, seed, 0.2).map_err(|e| e.to_string())?;
        let opt = AdaDeltaConfig::default();
        let phase = |mut cfg: PhaseConfig, batch: usize, epochs: usize| {
            cfg.batch_size = batch;
            cfg.epochs = epochs;
            cfg.eval_every = None;
            cfg.seed = seed;
            cfg
        };
        let after_distant = run_phase(&params, &weak, &phase(PhaseConfig::distant(), 32, 8), &validation, opt)
            .map_err(|e| e.to_string())?
            .best;
        let best = run_phase(&after_distant, &train, &phase(PhaseConfig::supervised(), 16, 20), &validation, opt)
            .map_err(|e| e.to_string())?
            .best;
        let validation_f1 = evaluate(&best, &validation).map_err(|e| e.to_string())?.f1_pn();
        let (pos, neg) = lang.marker_pair();
        Ok(Demo {
            markers: (pos.to_owned(), neg.to_owned()),
            distant: after_distant.embedding_table(),
            model: Model::new(vocab, best).map_err(|e| e.to_string())?,
            skipgram,
            validation_f1,
        })
    }

    fn table(&self, stage: &str) -> Result<&EmbeddingTable, String> {
        match stage {
            "skipgram" => Ok(&self.skipgram),
            "distant" => Ok(&self.distant),
            other => Err(format!("unknown stage {other:?} (skipgram or distant)")),
        }
    }

    fn ids(&self, tokens: &str) -> Result<Vec<u32>, String> {
        tokens
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                self.model
                    .vocab
                    .id(&t.to_lowercase())
                    .ok_or_else(|| format!("unknown token {t:?}"))
            })
            .collect()
    }

    pub fn try_classify(&self, text: &str) -> Result<String, String> {
        self.model.predict_text(text).map(|p| p.to_tsv()).map_err(|e| e.to_string())
    }

    /// Flattened `x0, y0, x1, y1, ...` for the given tokens.
    pub fn try_project(&self, tokens: &str, stage: &str) -> Result<Vec<f64>, String> {
        let ids = self.ids(tokens)?;
        let p = pca_project_2d(self.table(stage)?, &ids).map_err(|e| e.to_string())?;
        Ok(p.points.iter().flat_map(|&(x, y)| [x, y]).collect())
    }

    pub fn try_similarity(&self, a: &str, b: &str, stage: &str) -> Result<f64, String> {
        let ids = self.ids(&format!("{a} {b}"))?;
        let t = self.table(stage)?;
        cosine(t.row(ids[0]), t.row(ids[1])).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen]
impl Demo {
    /// Trains the demo model; takes a few seconds.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, JsError> {
        Demo::train(seed).map_err(|e| JsError::new(&e))
    }

    /// `label<TAB>p_neg<TAB>p_neu<TAB>p_pos`.
    pub fn classify(&self, text: &str) -> Result<String, JsError> {
        self.try_classify(text).map_err(|e| JsError::new(&e))
    }

    pub fn project(&self, tokens: &str, stage: &str) -> Result<Vec<f64>, JsError> {
        self.try_project(tokens, stage).map_err(|e| JsError::new(&e))
    }

    pub fn similarity(&self, a: &str, b: &str, stage: &str) -> Result<f64, JsError> {
        self.try_similarity(a, b, stage).map_err(|e| JsError::new(&e))
    }

    /// Space-separated vocabulary, most frequent first.
    pub fn vocabulary(&self) -> String {
        self.model.vocab.tokens()[2..].join(" ")
    }

    #[wasm_bindgen(getter)]
    pub fn positive_marker(&self) -> String {
        self.markers.0.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn negative_marker(&self) -> String {
        self.markers.1.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn validation_f1(&self) -> f64 {
        self.validation_f1
    }
}
