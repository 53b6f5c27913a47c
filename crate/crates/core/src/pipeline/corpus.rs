//! Corpus files and the SL / ML / FML mixing rules.
//!
//! * supervised: TSV `id<TAB>label<TAB>text`, label one of
//!   `negative`, `neutral`, `positive`;
//! * distant: one raw tweet per line, labeled here by its emoticons;
//! * unlabeled: one raw tweet per line, only used for embeddings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::textprep::{default_lexicon, preprocess, weak_label, TokenSequence, WeakLabel};

use super::Sentiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One language in every phase.
    SL,
    /// Distant phase over all languages, supervised phase on the target only.
    ML,
    /// All languages pooled in every phase.
    FML,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::SL => "SL",
            Variant::ML => "ML",
            Variant::FML => "FML",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SL" | "sl" => Ok(Variant::SL),
            "ML" | "ml" => Ok(Variant::ML),
            "FML" | "fml" => Ok(Variant::FML),
            other => Err(Error::invalid(format!("unknown variant {other:?} (expected SL, ML or FML)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageCorpora {
    pub language: String,
    pub unlabeled: Option<PathBuf>,
    pub distant: Option<PathBuf>,
    pub supervised: PathBuf,
    pub validation: Option<PathBuf>,
    /// Fraction of the distant corpus used, in (0, 1].
    pub weight: f64,
}

impl LanguageCorpora {
    pub fn new(language: impl Into<String>, supervised: impl Into<PathBuf>) -> Self {
        LanguageCorpora {
            language: language.into(),
            unlabeled: None,
            distant: None,
            supervised: supervised.into(),
            validation: None,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMix {
    pub variant: Variant,
    /// Language whose gold data drives the supervised phase (SL / ML).
    pub target: Option<String>,
    pub corpora: Vec<LanguageCorpora>,
}

impl CorpusMix {
    pub fn single(corpora: LanguageCorpora) -> Self {
        CorpusMix {
            variant: Variant::SL,
            target: Some(corpora.language.clone()),
            corpora: vec![corpora],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpora.is_empty() {
            return Err(Error::invalid("no corpora configured"));
        }
        for (i, c) in self.corpora.iter().enumerate() {
            if self.corpora[..i].iter().any(|o| o.language == c.language) {
                return Err(Error::invalid(format!("language {:?} configured twice", c.language)));
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::invalid(format!("weight of {:?} must lie in (0, 1]", c.language)));
            }
        }
        match self.variant {
            Variant::SL if self.corpora.len() != 1 => {
                Err(Error::invalid("SL variant takes exactly one language"))
            }
            Variant::SL | Variant::ML => {
                let target = self.target_language()?;
                if self.corpora.iter().any(|c| c.language == target) {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("target language {target:?} has no corpora")))
                }
            }
            Variant::FML => Ok(()),
        }
    }

    fn target_language(&self) -> Result<&str> {
        match (&self.target, self.corpora.as_slice()) {
            (Some(t), _) => Ok(t),
            (None, [only]) => Ok(&only.language),
            (None, _) => Err(Error::invalid(format!("{} variant needs a target language", self.variant))),
        }
    }

    /// Corpora feeding the distant phase and the embeddings.
    pub fn distant_corpora(&self) -> &[LanguageCorpora] {
        &self.corpora
    }

    /// Corpora whose gold data feeds the supervised phase and validation.
    pub fn supervised_corpora(&self) -> Result<Vec<&LanguageCorpora>> {
        self.validate()?;
        Ok(match self.variant {
            Variant::FML => self.corpora.iter().collect(),
            Variant::SL | Variant::ML => {
                let target = self.target_language()?;
                self.corpora.iter().filter(|c| c.language == target).collect()
            }
        })
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_owned()).collect())
}

/// Parses a gold TSV into `(id, label, tokens)` rows. Blank lines are skipped.
pub fn read_supervised(path: &Path) -> Result<Vec<(String, Sentiment, TokenSequence)>> {
    let mut rows = Vec::new();
    for (n, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(text)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, n + 1, "expected id<TAB>label<TAB>text"));
        };
        let label: Sentiment = label
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("malformed label {label:?}")))?;
        rows.push((id.to_owned(), label, preprocess(text)));
    }
    Ok(rows)
}

/// Weak-labels a raw distant corpus, keeping the first `weight` fraction of
/// its lines. Lines without a usable label, or empty once emoticons are
/// stripped, are dropped.
pub fn read_distant(path: &Path, weight: f64) -> Result<Vec<(WeakLabel, TokenSequence)>> {
    let lines = read_lines(path)?;
    let take = (weight * lines.len() as f64).round() as usize;
    Ok(lines[..take.min(lines.len())]
        .iter()
        .filter_map(|l| weak_label(&preprocess(l)))
        .filter(|(_, t)| !t.is_empty())
        .collect())
}

/// Token sequences used to train embeddings and build the vocabulary: the
/// unlabeled corpus when configured, otherwise the distant corpus (with
/// emoticons stripped) plus the supervised training text.
pub fn embedding_corpus(c: &LanguageCorpora, supervised_text: &[TokenSequence]) -> Result<Vec<TokenSequence>> {
    if let Some(path) = &c.unlabeled {
        return Ok(read_lines(path)?
            .iter()
            .map(|l| preprocess(l))
            .filter(|t| !t.is_empty())
            .collect());
    }
    let lex = default_lexicon();
    let mut out: Vec<TokenSequence> = Vec::new();
    if let Some(path) = &c.distant {
        for l in read_lines(path)? {
            let kept: Vec<String> = preprocess(&l)
                .into_inner()
                .into_iter()
                .filter(|t| !lex.is_emoticon(t))
                .collect();
            if !kept.is_empty() {
                out.push(TokenSequence::new(kept)?);
            }
        }
    }
    out.extend(supervised_text.iter().cloned());
    Ok(out)
}
