//! Tweet normalization, tokenization and emoticon weak labeling.
//!
//! The tokenizer is a small fixed rule set rather than a general-purpose
//! word splitter, so the same input bytes always produce the same tokens:
//!
//! * whitespace separates tokens;
//! * `<url>` and `<user>` are kept intact;
//! * emoticons from the lexicon are single tokens (matched case-insensitively
//!   and emitted in lowercase canonical form, so `: )` becomes `:)`);
//! * runs of one repeated punctuation mark stay together (`!!!`, `...`);
//! * any other punctuation is split from adjoining word characters.

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};

pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";

/// Shipped emoticon lexicon (`[positive]` / `[negative]` sections).
pub const LEXICON_SOURCE: &str = include_str!("../resources/emoticons.txt");

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").expect("url pattern"));
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").expect("mention pattern"));
static DEFAULT_LEXICON: LazyLock<Lexicon> =
    LazyLock::new(|| Lexicon::parse(LEXICON_SOURCE).expect("bundled lexicon parses"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeakLabel {
    Negative,
    Positive,
}

impl fmt::Display for WeakLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeakLabel::Negative => "negative",
            WeakLabel::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTweet {
    pub id: String,
    pub language: String,
    pub text: String,
}

impl RawTweet {
    pub fn new(id: impl Into<String>, language: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let language = language.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("tweet text is empty"));
        }
        if !language.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::invalid(format!("bad language code {language:?}")));
        }
        Ok(RawTweet {
            id: id.into(),
            language,
            text,
        })
    }
}

/// Ordered tokens; no token is empty or contains whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::invalid(format!("invalid token {bad:?}")));
        }
        Ok(TokenSequence(tokens))
    }

    /// Splits on whitespace without any further rules. Used for text that
    /// is already tokenized and space-joined.
    pub fn from_joined(line: &str) -> Self {
        TokenSequence(line.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Positive and negative emoticon sets.
#[derive(Debug, Clone)]
pub struct Lexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
    // Surface forms (lowercased) with their canonical token, longest first.
    surfaces: Vec<(String, String)>,
}

fn canonical(entry: &str) -> String {
    entry
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_ascii_lowercase()
}

impl Lexicon {
    pub fn parse(source: &str) -> Result<Self> {
        enum Section {
            None,
            Positive,
            Negative,
        }
        let mut section = Section::None;
        let mut positive = HashSet::new();
        let mut negative = HashSet::new();
        let mut surfaces = Vec::new();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.trim() {
                "[positive]" => section = Section::Positive,
                "[negative]" => section = Section::Negative,
                _ => {
                    let entry = line.trim();
                    if !entry.is_ascii() {
                        return Err(Error::parse("<lexicon>", n + 1, "emoticons must be ASCII"));
                    }
                    let canon = canonical(entry);
                    let set = match section {
                        Section::Positive => &mut positive,
                        Section::Negative => &mut negative,
                        Section::None => {
                            return Err(Error::parse("<lexicon>", n + 1, "entry outside a section"))
                        }
                    };
                    set.insert(canon.clone());
                    let surface = entry.to_ascii_lowercase();
                    if !surfaces.iter().any(|(s, _)| *s == surface) {
                        surfaces.push((surface, canon));
                    }
                }
            }
        }
        if let Some(both) = positive.intersection(&negative).next() {
            return Err(Error::invalid(format!("emoticon {both:?} listed with both polarities")));
        }
        surfaces.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Lexicon {
            positive,
            negative,
            surfaces,
        })
    }

    pub fn polarity(&self, token: &str) -> Option<WeakLabel> {
        if self.positive.contains(token) {
            Some(WeakLabel::Positive)
        } else if self.negative.contains(token) {
            Some(WeakLabel::Negative)
        } else {
            None
        }
    }

    pub fn is_emoticon(&self, token: &str) -> bool {
        self.polarity(token).is_some()
    }

    /// Emoticon starting at byte offset `at`, as (canonical token, byte length).
    fn match_at(&self, text: &str, at: usize) -> Option<(&str, usize)> {
        let rest = &text.as_bytes()[at..];
        let prev_is_word = text[..at].chars().next_back().is_some_and(is_word_char);
        for (surface, canon) in &self.surfaces {
            let s = surface.as_bytes();
            if rest.len() < s.len() || !rest[..s.len()].eq_ignore_ascii_case(s) {
                continue;
            }
            let first = s[0] as char;
            let last = s[s.len() - 1] as char;
            if first.is_ascii_alphanumeric() && prev_is_word {
                continue;
            }
            let next_is_word = text[at + s.len()..].chars().next().is_some_and(is_word_char);
            if last.is_ascii_alphanumeric() && next_is_word {
                continue;
            }
            return Some((canon.as_str(), s.len()));
        }
        None
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        DEFAULT_LEXICON.clone()
    }
}

pub fn default_lexicon() -> &'static Lexicon {
    &DEFAULT_LEXICON
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Replaces URLs with `<url>`, mentions with `<user>`, then lowercases.
pub fn normalize(text: &str) -> String {
    let replaced = URL_RE.replace_all(text, URL_TOKEN);
    let replaced = MENTION_RE.replace_all(&replaced, USER_TOKEN);
    replaced.to_lowercase()
}

pub fn tokenize(text: &str) -> TokenSequence {
    tokenize_with(default_lexicon(), text)
}

pub fn tokenize_with(lexicon: &Lexicon, text: &str) -> TokenSequence {
    let special_at = |at: usize| -> Option<(String, usize)> {
        let rest = &text[at..];
        for t in [URL_TOKEN, USER_TOKEN] {
            if rest.starts_with(t) {
                return Some((t.to_owned(), t.len()));
            }
        }
        lexicon.match_at(text, at).map(|(t, len)| (t.to_owned(), len))
    };

    let mut tokens = Vec::new();
    let mut at = 0;
    while let Some(c) = text[at..].chars().next() {
        if c.is_whitespace() {
            at += c.len_utf8();
            continue;
        }
        if let Some((token, len)) = special_at(at) {
            tokens.push(token);
            at += len;
            continue;
        }
        let start = at;
        if is_word_char(c) {
            at += text[at..]
                .char_indices()
                .find(|&(_, ch)| !is_word_char(ch))
                .map_or(text.len() - at, |(i, _)| i);
        } else {
            at += c.len_utf8();
            while text[at..].starts_with(c) && special_at(at).is_none() {
                at += c.len_utf8();
            }
        }
        tokens.push(text[start..at].to_owned());
    }
    TokenSequence(tokens)
}

/// Normalizes then tokenizes one raw line.
pub fn preprocess(text: &str) -> TokenSequence {
    tokenize(&normalize(text))
}

/// Infers a polarity from emoticons and strips every emoticon.
///
/// Returns `None` when no emoticon is present or both polarities occur.
/// The stripped sequence may be empty; callers discard those.
pub fn weak_label(tokens: &TokenSequence) -> Option<(WeakLabel, TokenSequence)> {
    weak_label_with(default_lexicon(), tokens)
}

pub fn weak_label_with(lexicon: &Lexicon, tokens: &TokenSequence) -> Option<(WeakLabel, TokenSequence)> {
    let mut pos = 0usize;
    let mut neg = 0usize;
    let mut kept = Vec::with_capacity(tokens.len());
    for t in tokens {
        match lexicon.polarity(t) {
            Some(WeakLabel::Positive) => pos += 1,
            Some(WeakLabel::Negative) => neg += 1,
            None => kept.push(t.clone()),
        }
    }
    let label = match (pos > 0, neg > 0) {
        (true, false) => WeakLabel::Positive,
        (false, true) => WeakLabel::Negative,
        _ => return None,
    };
    Some((label, TokenSequence(kept)))
}
