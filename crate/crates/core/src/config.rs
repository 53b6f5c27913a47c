//! Flat `key=value` run configuration and the run manifest.
//!
//! Precedence is defaults < config file < explicit overrides. Relative
//! paths in a file resolve against the file's directory. Keys starting
//! with `run.` are ignored on input, so a run manifest can be fed back in
//! as a config to replay the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{ArchName, ArchitectureSpec};
use crate::pipeline::{run_three_phase, CorpusMix, LanguageCorpora, ThreePhaseReport, TrainConfig, Variant};

pub const RUN_MANIFEST: &str = "run_manifest.txt";

const CORPUS_FIELDS: [&str; 5] = ["unlabeled", "distant", "supervised", "validation", "weight"];

const KEYS: [&str; 31] = [
    "seed",
    "threads",
    "output",
    "arch",
    "filters",
    "n_max",
    "dim",
    "min_count",
    "variant",
    "target",
    "init",
    "init_range",
    "validation_fraction",
    "skipgram.window",
    "skipgram.negatives",
    "skipgram.subsample",
    "skipgram.epochs",
    "skipgram.lr0",
    "distant.epochs",
    "distant.batch_size",
    "distant.eval_every",
    "distant.freeze_embeddings",
    "distant.balance",
    "supervised.epochs",
    "supervised.batch_size",
    "supervised.eval_every",
    "supervised.freeze_embeddings",
    "supervised.balance",
    "adadelta.rho",
    "adadelta.eps",
    "adadelta.weight_decay",
];

fn is_path_key(key: &str) -> bool {
    key == "output"
        || key
            .strip_prefix("corpus.")
            .and_then(|rest| rest.rsplit_once('.'))
            .is_some_and(|(_, field)| field != "weight")
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        return Ok(());
    }
    if let Some((lang, field)) = key.strip_prefix("corpus.").and_then(|r| r.rsplit_once('.')) {
        if !lang.is_empty() && !lang.contains('.') && CORPUS_FIELDS.contains(&field) {
            return Ok(());
        }
    }
    Err(Error::invalid(format!("unknown config key {key:?}")))
}

/// Raw key/value settings before interpretation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses `key=value` text; `base` resolves relative paths.
    pub fn merge_text(&mut self, text: &str, origin: &Path, base: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(origin, n + 1, "expected key=value"));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.starts_with("run.") {
                continue;
            }
            check_key(k).map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
            let v = if is_path_key(k) && Path::new(v).is_relative() {
                base.join(v).to_string_lossy().into_owned()
            } else {
                v.to_owned()
            };
            self.values.insert(k.to_owned(), v);
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.merge_text(&text, path, base)
    }

    /// Applies one `key=value` override.
    pub fn merge_override(&mut self, assignment: &str) -> Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(Error::invalid(format!("override {assignment:?} is not key=value")));
        };
        self.set(k.trim(), v.trim())
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn languages(&self) -> Vec<&str> {
        let mut langs: Vec<&str> = self
            .values
            .keys()
            .filter_map(|k| k.strip_prefix("corpus.")?.rsplit_once('.').map(|(l, _)| l))
            .collect();
        langs.dedup();
        langs
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub threads: usize,
    pub output: Option<PathBuf>,
}

fn eval_every(v: usize) -> Option<usize> {
    (v > 0).then_some(v)
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let arch_name: ArchName = s.parse_or("arch", ArchName::L2)?;
        let mut arch = ArchitectureSpec::from_name(arch_name);
        arch.filters = s.parse_or("filters", arch.filters)?;
        arch.n_max = s.parse_or("n_max", arch.n_max)?;
        arch.shape_walk()?;

        let mut corpora = Vec::new();
        for lang in s.languages() {
            let key = |f: &str| format!("corpus.{lang}.{f}");
            let supervised: PathBuf = s
                .get(&key("supervised"))
                .ok_or_else(|| Error::invalid(format!("corpus.{lang} needs a supervised file")))?
                .into();
            let mut c = LanguageCorpora::new(lang, supervised);
            c.unlabeled = s.get(&key("unlabeled")).map(PathBuf::from);
            c.distant = s.get(&key("distant")).map(PathBuf::from);
            c.validation = s.get(&key("validation")).map(PathBuf::from);
            c.weight = s.parse_or(&key("weight"), 1.0)?;
            corpora.push(c);
        }
        let mix = CorpusMix {
            variant: s.parse_or("variant", Variant::SL)?,
            target: s.get("target").map(str::to_owned),
            corpora,
        };
        mix.validate()?;

        let mut t = TrainConfig::new(mix);
        t.arch = arch;
        t.min_count = s.parse_or("min_count", t.min_count)?;
        t.init = s.parse_or("init", t.init)?;
        t.init_range = s.parse_or("init_range", t.init_range)?;
        t.validation_fraction = s.parse_or("validation_fraction", t.validation_fraction)?;

        let sg = &mut t.skipgram;
        sg.dim = s.parse_or("dim", sg.dim)?;
        sg.window = s.parse_or("skipgram.window", sg.window)?;
        sg.negatives = s.parse_or("skipgram.negatives", sg.negatives)?;
        sg.subsample_t = s.parse_or("skipgram.subsample", sg.subsample_t)?;
        sg.epochs = s.parse_or("skipgram.epochs", sg.epochs)?;
        sg.lr0 = s.parse_or("skipgram.lr0", sg.lr0)?;

        for (prefix, phase) in [("distant", &mut t.distant), ("supervised", &mut t.supervised)] {
            let key = |f: &str| format!("{prefix}.{f}");
            phase.epochs = s.parse_or(&key("epochs"), phase.epochs)?;
            phase.batch_size = s.parse_or(&key("batch_size"), phase.batch_size)?;
            phase.eval_every = eval_every(s.parse_or(&key("eval_every"), phase.eval_every.unwrap_or(0))?);
            phase.freeze_embeddings = s.parse_or(&key("freeze_embeddings"), phase.freeze_embeddings)?;
            phase.balance = s.parse_or(&key("balance"), phase.balance)?;
            if phase.batch_size == 0 {
                return Err(Error::invalid(format!("{prefix}.batch_size must be positive")));
            }
        }

        t.optimizer.rho = s.parse_or("adadelta.rho", t.optimizer.rho)?;
        t.optimizer.eps = s.parse_or("adadelta.eps", t.optimizer.eps)?;
        t.optimizer.weight_decay = s.parse_or("adadelta.weight_decay", t.optimizer.weight_decay)?;

        let threads: usize = s.parse_or("threads", 1)?;
        if threads == 0 {
            return Err(Error::invalid("threads must be at least 1"));
        }
        t.skipgram.threads = threads;
        let t = t.with_seed(s.parse_or("seed", 1)?);
        Ok(RunConfig {
            train: t,
            threads,
            output: s.get("output").map(PathBuf::from),
        })
    }

    /// Every key with its resolved value, one `key=value` per line.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "{k}={v}").unwrap();
        kv("seed", &t.seed);
        kv("threads", &self.threads);
        if let Some(o) = &self.output {
            kv("output", &o.display());
        }
        kv("arch", &t.arch.name);
        kv("filters", &t.arch.filters);
        kv("n_max", &t.arch.n_max);
        kv("dim", &t.skipgram.dim);
        kv("min_count", &t.min_count);
        kv("variant", &t.mix.variant);
        if let Some(target) = &t.mix.target {
            kv("target", target);
        }
        kv("init", &t.init);
        kv("init_range", &t.init_range);
        kv("validation_fraction", &t.validation_fraction);
        kv("skipgram.window", &t.skipgram.window);
        kv("skipgram.negatives", &t.skipgram.negatives);
        kv("skipgram.subsample", &t.skipgram.subsample_t);
        kv("skipgram.epochs", &t.skipgram.epochs);
        kv("skipgram.lr0", &t.skipgram.lr0);
        for (prefix, p) in [("distant", &t.distant), ("supervised", &t.supervised)] {
            kv(&format!("{prefix}.epochs"), &p.epochs);
            kv(&format!("{prefix}.batch_size"), &p.batch_size);
            kv(&format!("{prefix}.eval_every"), &p.eval_every.unwrap_or(0));
            kv(&format!("{prefix}.freeze_embeddings"), &p.freeze_embeddings);
            kv(&format!("{prefix}.balance"), &p.balance);
        }
        kv("adadelta.rho", &t.optimizer.rho);
        kv("adadelta.eps", &t.optimizer.eps);
        kv("adadelta.weight_decay", &t.optimizer.weight_decay);
        for c in &t.mix.corpora {
            let l = &c.language;
            for (field, path) in [("unlabeled", &c.unlabeled), ("distant", &c.distant)] {
                if let Some(p) = path {
                    kv(&format!("corpus.{l}.{field}"), &absolute(p).display());
                }
            }
            kv(&format!("corpus.{l}.supervised"), &absolute(&c.supervised).display());
            if let Some(p) = &c.validation {
                kv(&format!("corpus.{l}.validation"), &absolute(p).display());
            }
            kv(&format!("corpus.{l}.weight"), &c.weight);
        }
        out
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_owned())
}

fn manifest_header(cfg: &RunConfig, status: &str) -> String {
    let t = &cfg.train;
    format!(
        "# tweetcnn run manifest\nrun.status={status}\nrun.version={}\nrun.seeds=network:{} skipgram:{} distant:{} supervised:{}\n",
        env!("CARGO_PKG_VERSION"),
        t.seed,
        t.skipgram.seed,
        t.distant.seed,
        t.supervised.seed
    )
}

/// Trains per `cfg` into `cfg.output`, writing the run manifest before
/// training starts and completing it afterwards.
pub fn run_to_dir(cfg: &RunConfig) -> Result<ThreePhaseReport> {
    let dir = cfg
        .output
        .as_deref()
        .ok_or_else(|| Error::invalid("no output directory configured"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(RUN_MANIFEST);
    let body = cfg.to_text();
    fs::write(&path, manifest_header(cfg, "started") + &body).map_err(|e| Error::io(&path, e))?;

    let report = run_three_phase(&cfg.train)?;
    report.save(dir)?;

    let tm = &report.timings;
    let mut tail = String::new();
    writeln!(tail, "run.time.skipgram_s={:.3}", tm.skipgram.as_secs_f64()).unwrap();
    writeln!(tail, "run.time.distant_s={:.3}", tm.distant.as_secs_f64()).unwrap();
    writeln!(tail, "run.time.supervised_s={:.3}", tm.supervised.as_secs_f64()).unwrap();
    writeln!(tail, "run.validation_f1={:.4}", report.validation_f1).unwrap();
    fs::write(&path, manifest_header(cfg, "finished") + &body + &tail).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Result<Settings> {
        let mut s = Settings::new();
        s.merge_text(text, Path::new("test.conf"), Path::new("/data"))?;
        Ok(s)
    }

    #[test]
    fn defaults_and_paths() {
        let s = settings("# comment\ncorpus.en.supervised = en/train.tsv\ncorpus.en.weight=0.5\n").unwrap();
        let cfg = RunConfig::from_settings(&s).unwrap();
        let t = &cfg.train;
        assert_eq!(t.arch, ArchitectureSpec::l2());
        assert_eq!(t.skipgram.dim, 52);
        assert_eq!(t.min_count, 15);
        assert_eq!(t.distant.batch_size, 128);
        assert_eq!(t.distant.eval_every, Some(1000));
        assert_eq!(t.supervised.eval_every, None);
        assert_eq!(t.mix.corpora[0].supervised, Path::new("/data/en/train.tsv"));
        assert_eq!(t.mix.corpora[0].weight, 0.5);
        assert_eq!((t.seed, t.distant.seed, t.supervised.seed), (1, 2, 3));
    }

    #[test]
    fn overrides_win() {
        let mut s = settings("corpus.en.supervised=a.tsv\narch=L1\nseed=4\n").unwrap();
        s.merge_override("arch=L3").unwrap();
        s.merge_override("filters=8").unwrap();
        let cfg = RunConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.train.arch.name, ArchName::L3);
        assert_eq!(cfg.train.arch.filters, 8);
        assert_eq!(cfg.train.seed, 4);
        assert!(s.merge_override("nonsense").is_err());
        assert!(s.merge_override("bogus.key=1").is_err());
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(settings("arch L2\n").is_err());
        let err = settings("corpus.en.supervised=a\nunknown=3\n").unwrap_err();
        assert!(err.to_string().contains("test.conf:2"), "{err}");
        let s = settings("corpus.en.supervised=a\narch=L7\n").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
        let s = settings("corpus.en.supervised=a\nn_max=5\n").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
        let s = settings("corpus.en.distant=a\n").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
        assert!(RunConfig::from_settings(&Settings::new()).is_err());
    }

    #[test]
    fn rendered_config_replays() {
        let s = settings(
            "corpus.en.supervised=en.tsv\ncorpus.de.supervised=de.tsv\ncorpus.de.distant=de.txt\nvariant=ML\ntarget=de\ninit=random\ndistant.freeze_embeddings=true\nsupervised.eval_every=7\n",
        )
        .unwrap();
        let cfg = RunConfig::from_settings(&s).unwrap();
        let text = format!("run.status=finished\n{}", cfg.to_text());
        let mut again = Settings::new();
        again.merge_text(&text, Path::new("m"), Path::new("/elsewhere")).unwrap();
        assert_eq!(RunConfig::from_settings(&again).unwrap(), cfg);
        assert_eq!(cfg.train.supervised.eval_every, Some(7));
        assert!(cfg.train.distant.freeze_embeddings);
    }
}
