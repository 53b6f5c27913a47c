//! Synthetic tweet corpora with a known sentiment signal.
//!
//! Each language has positive and negative marker words and a pool of
//! filler words. Markers of both polarities occur in the same filler
//! contexts, so distributional embeddings place them close together; only
//! labels tell them apart. Distant lines carry an emoticon that agrees
//! with the marker polarity with probability `agreement`. Gold examples
//! are sparse over markers, so most markers are seen only a few times in
//! supervised data. Neutral gold tweets contain filler only.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pipeline::Sentiment;

const POS_EMOTICONS: [&str; 5] = [":)", ":-)", ":D", "=)", ";)"];
const NEG_EMOTICONS: [&str; 4] = [":(", ":-(", ":'(", "D:"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub languages: Vec<String>,
    pub distant_lines: usize,
    pub gold_train: usize,
    pub gold_validation: usize,
    /// Marker words per polarity.
    pub markers: usize,
    pub fillers: usize,
    /// Probability that a distant line's emoticon matches its marker.
    pub agreement: f64,
    /// Fraction of distant lines without any marker.
    pub marker_free: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            languages: vec!["en".to_owned()],
            distant_lines: 50_000,
            gold_train: 300,
            gold_validation: 500,
            markers: 60,
            fillers: 300,
            agreement: 0.85,
            marker_free: 0.1,
            min_len: 6,
            max_len: 14,
            seed: 7,
        }
    }
}

/// Word pools of one synthetic language.
#[derive(Debug, Clone)]
pub struct SynthLanguage {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub fillers: Vec<String>,
    min_len: usize,
    max_len: usize,
}

impl SynthLanguage {
    /// The first language gets bare words, later ones a `<lang>_` prefix.
    pub fn new(prefix: &str, cfg: &SynthConfig) -> Self {
        let word = |stem: &str, i: usize| {
            if i == 0 {
                format!("{prefix}{stem}")
            } else {
                format!("{prefix}{stem}{i}")
            }
        };
        SynthLanguage {
            positive: (0..cfg.markers).map(|i| word("good", i)).collect(),
            negative: (0..cfg.markers).map(|i| word("bad", i)).collect(),
            fillers: (0..cfg.fillers).map(|i| format!("{prefix}w{i}")).collect(),
            min_len: cfg.min_len,
            max_len: cfg.max_len,
        }
    }

    /// The most frequent positive and negative marker.
    pub fn marker_pair(&self) -> (&str, &str) {
        (&self.positive[0], &self.negative[0])
    }

    fn markers(&self, polarity: Sentiment) -> &[String] {
        match polarity {
            Sentiment::Positive => &self.positive,
            Sentiment::Negative => &self.negative,
            Sentiment::Neutral => &[],
        }
    }

    /// A fifth of marker draws hit the first marker, the rest are uniform.
    fn pick_marker<'a, R: Rng>(&'a self, polarity: Sentiment, rng: &mut R) -> &'a str {
        let pool = self.markers(polarity);
        if rng.gen_bool(0.2) {
            &pool[0]
        } else {
            &pool[rng.gen_range(0..pool.len())]
        }
    }

    /// Space-separated words: fillers plus one marker unless neutral.
    pub fn sentence<R: Rng>(&self, polarity: Sentiment, rng: &mut R) -> Vec<String> {
        let len = rng.gen_range(self.min_len..=self.max_len);
        let mut words: Vec<String> = (0..len)
            .map(|_| self.fillers.choose(rng).expect("fillers").clone())
            .collect();
        if polarity != Sentiment::Neutral {
            let at = rng.gen_range(0..=words.len());
            let marker = self.pick_marker(polarity, rng);
            let marker = if rng.gen_bool(0.1) {
                marker.to_uppercase()
            } else {
                marker.to_owned()
            };
            words.insert(at, marker);
        }
        words
    }

    /// Raw tweet with some mentions and URLs sprinkled in.
    fn decorate<R: Rng>(&self, mut words: Vec<String>, rng: &mut R) -> String {
        if rng.gen_bool(0.1) {
            words.insert(0, format!("@user{}", rng.gen_range(0..500)));
        }
        if rng.gen_bool(0.1) {
            words.push(format!("http://t.co/{:x}", rng.gen::<u32>()));
        }
        words.join(" ")
    }

    pub fn gold_tweet<R: Rng>(&self, label: Sentiment, rng: &mut R) -> String {
        let words = self.sentence(label, rng);
        self.decorate(words, rng)
    }

    /// A raw distant tweet. Most lines carry exactly one emoticon; a few
    /// carry none or both polarities so weak labeling has to drop them.
    pub fn distant_tweet<R: Rng>(&self, cfg: &SynthConfig, rng: &mut R) -> String {
        let positive = rng.gen_bool(0.5);
        let (polarity, other) = if positive {
            (Sentiment::Positive, Sentiment::Negative)
        } else {
            (Sentiment::Negative, Sentiment::Positive)
        };
        let marker_free = rng.gen_bool(cfg.marker_free);
        let mut words = self.sentence(if marker_free { Sentiment::Neutral } else { polarity }, rng);
        let shown = if rng.gen_bool(cfg.agreement) { polarity } else { other };
        let emoticon = |p: Sentiment, rng: &mut R| -> String {
            let pool: &[&str] = if p == Sentiment::Positive { &POS_EMOTICONS } else { &NEG_EMOTICONS };
            pool.choose(rng).expect("emoticons").to_string()
        };
        let roll: f64 = rng.gen();
        if roll < 0.03 {
            // no emoticon
        } else if roll < 0.05 {
            words.push(emoticon(Sentiment::Positive, rng));
            words.push(emoticon(Sentiment::Negative, rng));
        } else {
            let e = emoticon(shown, rng);
            let at = if rng.gen_bool(0.7) {
                words.len()
            } else {
                rng.gen_range(0..=words.len())
            };
            words.insert(at, e);
        }
        self.decorate(words, rng)
    }
}

/// Generates `n` gold rows cycling through negative, neutral, positive.
pub fn gold_rows<R: Rng>(lang: &SynthLanguage, n: usize, rng: &mut R) -> Vec<(Sentiment, String)> {
    (0..n)
        .map(|i| {
            let label = Sentiment::ALL[i % 3];
            (label, lang.gold_tweet(label, rng))
        })
        .collect()
}

/// Files written for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleFiles {
    pub language: String,
    pub distant: PathBuf,
    pub train: PathBuf,
    pub validation: PathBuf,
    pub positive_marker: String,
    pub negative_marker: String,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gold_tsv(rows: &[(Sentiment, String)], id_prefix: &str) -> String {
    rows.iter()
        .enumerate()
        .map(|(i, (label, text))| format!("{id_prefix}{i}\t{label}\t{text}\n"))
        .collect()
}

/// Writes `<lang>.distant.txt`, `<lang>.train.tsv`, `<lang>.val.tsv` per
/// language and a `bundle.conf` training config sized for a desktop.
pub fn write_bundle(dir: &Path, cfg: &SynthConfig) -> Result<Vec<BundleFiles>> {
    if cfg.languages.is_empty() || cfg.markers == 0 || cfg.fillers == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::invalid("synthetic bundle needs languages, markers, fillers and min_len <= max_len"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut conf = String::from(BUNDLE_CONF_HEADER);
    if cfg.languages.len() > 1 {
        conf.push_str(&format!("variant=ML\ntarget={}\n", cfg.languages[0]));
    }
    for (li, language) in cfg.languages.iter().enumerate() {
        let prefix = if li == 0 { String::new() } else { format!("{language}_") };
        let lang = SynthLanguage::new(&prefix, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(li as u64);

        let distant: String = (0..cfg.distant_lines)
            .map(|_| lang.distant_tweet(cfg, &mut rng) + "\n")
            .collect();
        let train = gold_rows(&lang, cfg.gold_train, &mut rng);
        let val = gold_rows(&lang, cfg.gold_validation, &mut rng);

        let f = BundleFiles {
            language: language.clone(),
            distant: dir.join(format!("{language}.distant.txt")),
            train: dir.join(format!("{language}.train.tsv")),
            validation: dir.join(format!("{language}.val.tsv")),
            positive_marker: lang.positive[0].clone(),
            negative_marker: lang.negative[0].clone(),
        };
        write(&f.distant, &distant)?;
        write(&f.train, &gold_tsv(&train, "t"))?;
        write(&f.validation, &gold_tsv(&val, "v"))?;
        conf.push_str(&format!(
            "corpus.{language}.distant={language}.distant.txt\ncorpus.{language}.supervised={language}.train.tsv\ncorpus.{language}.validation={language}.val.tsv\n"
        ));
        files.push(f);
    }
    write(&dir.join("bundle.conf"), &conf)?;
    Ok(files)
}

const BUNDLE_CONF_HEADER: &str = "\
# Desk-scale settings for the synthetic bundle.
arch=L2
filters=32
n_max=20
dim=16
min_count=2
init_range=0.2
skipgram.subsample=0.001
distant.batch_size=64
distant.eval_every=200
supervised.batch_size=32
supervised.epochs=20
";
