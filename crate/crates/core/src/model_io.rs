//! Model directories: `manifest.txt`, `vocab.tsv` and one `.bin` per
//! tensor (see [`NetworkParams::tensor_names`]). Optimizer state, when
//! present, sits next to the tensors as `<name>.eg2.bin` / `<name>.edx2.bin`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{ArchName, ArchitectureSpec, ConvLayerSpec, NetworkParams, Pool, NUM_CLASSES};
use crate::optim::AdaDeltaState;
use crate::pipeline::Sentiment;
use crate::tensor::Tensor;
use crate::textprep::{preprocess, TokenSequence};
use crate::vocab::Vocabulary;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.txt";
pub const VOCAB: &str = "vocab.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: Vocabulary,
    pub params: NetworkParams,
}

/// Prediction for one input: label and class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Sentiment,
    pub probs: [f32; NUM_CLASSES],
}

impl Prediction {
    /// `label<TAB>p_neg<TAB>p_neu<TAB>p_pos`, probabilities to 4 decimals.
    pub fn to_tsv(&self) -> String {
        let [n, u, p] = self.probs;
        format!("{}\t{n:.4}\t{u:.4}\t{p:.4}", self.label)
    }
}

pub fn manifest_text(params: &NetworkParams) -> String {
    let arch = params.arch();
    let mut out = String::new();
    writeln!(out, "format_version={FORMAT_VERSION}").unwrap();
    writeln!(out, "arch={}", arch.name).unwrap();
    writeln!(out, "V={}", params.vocab_size()).unwrap();
    writeln!(out, "d={}", params.dim()).unwrap();
    writeln!(out, "n_max={}", arch.n_max).unwrap();
    writeln!(out, "K={NUM_CLASSES}").unwrap();
    writeln!(out, "filters={}", arch.filters).unwrap();
    writeln!(out, "layers={}", arch.layers.len()).unwrap();
    for (i, layer) in arch.layers.iter().enumerate() {
        let i = i + 1;
        writeln!(out, "conv{i}_width={}", layer.width).unwrap();
        if let Some(pool) = layer.pool {
            writeln!(out, "pool{i}_window={}", pool.window).unwrap();
            writeln!(out, "pool{i}_stride={}", pool.stride).unwrap();
        }
    }
    out
}

/// Architecture plus `(V, d)` recorded in a manifest.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<(ArchitectureSpec, usize, usize)> {
    let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(origin, n + 1, "expected key=value"));
        };
        kv.insert(k, (n + 1, v));
    }
    let raw = |k: &str| kv.get(k).copied();
    let get = |k: &str| -> Result<usize> {
        let (line, v) = raw(k).ok_or_else(|| Error::invalid(format!("{}: missing key {k}", origin.display())))?;
        v.parse()
            .map_err(|_| Error::parse(origin, line, format!("{k}: not a number: {v:?}")))
    };
    let version = get("format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::invalid(format!("unsupported model format_version {version}")));
    }
    if get("K")? != NUM_CLASSES {
        return Err(Error::invalid(format!("model has {} classes, expected {NUM_CLASSES}", get("K")?)));
    }
    let name: ArchName = raw("arch")
        .ok_or_else(|| Error::invalid(format!("{}: missing key arch", origin.display())))?
        .1
        .parse()?;
    let n_layers = get("layers")?;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 1..=n_layers {
        let width = get(&format!("conv{i}_width"))?;
        let (wk, sk) = (format!("pool{i}_window"), format!("pool{i}_stride"));
        let pool = match (raw(&wk), raw(&sk)) {
            (Some(_), Some(_)) => Some(Pool {
                window: get(&wk)?,
                stride: get(&sk)?,
            }),
            (None, None) => None,
            _ => return Err(Error::invalid(format!("{}: pool{i} needs window and stride", origin.display()))),
        };
        layers.push(ConvLayerSpec { width, pool });
    }
    let arch = ArchitectureSpec {
        name,
        filters: get("filters")?,
        layers,
        n_max: get("n_max")?,
    };
    arch.shape_walk()?;
    Ok((arch, get("V")?, get("d")?))
}

impl Model {
    pub fn new(vocab: Vocabulary, params: NetworkParams) -> Result<Self> {
        if vocab.len() != params.vocab_size() {
            return Err(Error::shape(format!(
                "vocabulary has {} entries, embedding has {} rows",
                vocab.len(),
                params.vocab_size()
            )));
        }
        Ok(Model { vocab, params })
    }

    /// Writes the model into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join(MANIFEST);
        fs::write(&manifest, manifest_text(&self.params)).map_err(|e| Error::io(&manifest, e))?;
        self.vocab.save(&dir.join(VOCAB))?;
        let names = NetworkParams::tensor_names(self.params.arch());
        for (name, t) in names.iter().zip(self.params.tensors()) {
            t.save(&dir.join(format!("{name}.bin")))?;
        }
        Ok(())
    }

    pub fn save_with_optimizer(&self, dir: &Path, state: &AdaDeltaState) -> Result<()> {
        self.save(dir)?;
        state.save(dir, &NetworkParams::tensor_names(self.params.arch()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let (arch, v, d) = parse_manifest(&text, &manifest)?;
        let vocab = Vocabulary::load(&dir.join(VOCAB))?;
        let tensors = NetworkParams::tensor_names(&arch)
            .iter()
            .map(|name| Tensor::load(&dir.join(format!("{name}.bin"))))
            .collect::<Result<Vec<_>>>()?;
        if tensors[0].shape() != (v, d) {
            return Err(Error::shape(format!(
                "embedding.bin is {:?} but manifest says {v}x{d}",
                tensors[0].shape()
            )));
        }
        Model::new(vocab, NetworkParams::from_tensors(&arch, tensors)?)
    }

    pub fn load_optimizer(&self, dir: &Path) -> Result<AdaDeltaState> {
        AdaDeltaState::load(dir, &NetworkParams::tensor_names(self.params.arch()))
    }

    pub fn encode(&self, tokens: &TokenSequence) -> Vec<u32> {
        self.vocab.encode(tokens, self.params.arch().n_max)
    }

    pub fn predict_tokens(&self, tokens: &TokenSequence) -> Result<Prediction> {
        let p = self.params.forward(&self.encode(tokens))?;
        let probs = [p[0], p[1], p[2]];
        let label = Sentiment::from_index(crate::network::argmax(&probs)).expect("three classes");
        Ok(Prediction { label, probs })
    }

    /// Preprocesses raw text and classifies it.
    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        self.predict_tokens(&preprocess(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::EmbeddingInit;
    use crate::optim::AdaDeltaConfig;

    fn model(arch: ArchitectureSpec) -> Model {
        let corpus = [TokenSequence::from_joined("good day bad day"), TokenSequence::from_joined("ok")];
        let vocab = Vocabulary::build(corpus.iter(), 1).unwrap();
        let params = NetworkParams::build(&arch, vocab.len(), 5, EmbeddingInit::Random, 3).unwrap();
        Model::new(vocab, params).unwrap()
    }

    #[test]
    fn manifest_lists_layers() {
        let m = model(ArchitectureSpec::l2().with_filters(4).with_n_max(12));
        let text = manifest_text(&m.params);
        assert!(text.starts_with("format_version=1\narch=L2\nV=6\nd=5\nn_max=12\nK=3\n"), "{text}");
        assert!(text.contains("conv1_width=4\npool1_window=4\npool1_stride=2\nconv2_width=3\n"));
        let (arch, v, d) = parse_manifest(&text, Path::new("m")).unwrap();
        assert_eq!(&arch, m.params.arch());
        assert_eq!((v, d), (6, 5));
    }

    #[test]
    fn round_trip_every_arch() {
        for arch in [
            ArchitectureSpec::l1().with_filters(3).with_n_max(8),
            ArchitectureSpec::l2().with_filters(3).with_n_max(12),
            ArchitectureSpec::l3().with_filters(3).with_n_max(20),
        ] {
            let m = model(arch);
            let dir = tempfile::tempdir().unwrap();
            m.save(dir.path()).unwrap();
            let back = Model::load(dir.path()).unwrap();
            assert_eq!(back, m);
            let a = m.predict_text("good day :)").unwrap();
            assert_eq!(back.predict_text("good day :)").unwrap(), a);
            assert!((a.probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn optimizer_checkpoint() {
        let m = model(ArchitectureSpec::l1().with_filters(3).with_n_max(8));
        let state = AdaDeltaState::for_params(AdaDeltaConfig::default(), &m.params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save_with_optimizer(dir.path(), &state).unwrap();
        assert!(dir.path().join("conv1_w.eg2.bin").exists());
        let loaded = Model::load(dir.path()).unwrap();
        assert_eq!(loaded.load_optimizer(dir.path()).unwrap(), state);
    }

    #[test]
    fn corrupt_directories_fail() {
        let m = model(ArchitectureSpec::l1().with_filters(3).with_n_max(8));
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let manifest = dir.path().join(MANIFEST);
        let good = fs::read_to_string(&manifest).unwrap();

        fs::write(&manifest, good.replace("format_version=1", "format_version=2")).unwrap();
        assert!(Model::load(dir.path()).is_err());
        fs::write(&manifest, good.replace("d=5", "d=4")).unwrap();
        assert!(Model::load(dir.path()).is_err());
        fs::write(&manifest, good.replace("arch=L1", "arch=L9")).unwrap();
        assert!(Model::load(dir.path()).is_err());
        fs::write(&manifest, &good).unwrap();
        fs::remove_file(dir.path().join("hidden_b.bin")).unwrap();
        assert!(Model::load(dir.path()).is_err());
    }

    #[test]
    fn prediction_line() {
        let p = Prediction {
            label: Sentiment::Neutral,
            probs: [0.1, 0.7, 0.2],
        };
        assert_eq!(p.to_tsv(), "neutral\t0.1000\t0.7000\t0.2000");
    }
}
