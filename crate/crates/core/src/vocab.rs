//! Frequency-filtered vocabulary and fixed-length sequence encoding.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textprep::TokenSequence;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
/// First id handed to a corpus token.
pub const FIRST_WORD_ID: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times. Ids after the reserved
    /// pair follow descending frequency, ties broken lexicographically.
    pub fn build<'a, I>(corpus: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TokenSequence>,
    {
        if min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut total = 0u64;
        for seq in corpus {
            for t in seq.iter() {
                *freq.entry(t).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::invalid("empty corpus"));
        }
        let mut kept: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD && t != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Vocabulary::reserved_only();
        for (t, c) in kept {
            vocab.push(t.to_owned(), c);
        }
        Ok(vocab)
    }

    fn reserved_only() -> Self {
        let mut vocab = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        vocab.push(PAD.to_owned(), 0);
        vocab.push(UNK.to_owned(), 0);
        vocab
    }

    fn push(&mut self, token: String, count: u64) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Never true: the reserved entries are always present.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, unknown tokens to `<unk>`, with no padding.
    pub fn ids(&self, tokens: &TokenSequence) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t).unwrap_or(UNK_ID)).collect()
    }

    /// Exactly `n_max` ids: truncated or right-padded with `<pad>`.
    pub fn encode(&self, tokens: &TokenSequence, n_max: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = tokens
            .iter()
            .take(n_max)
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect();
        ids.resize(n_max, PAD_ID);
        ids
    }

    /// Inverse of `encode` over the non-pad positions.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD_ID)
            .map(|&id| self.token(id).unwrap_or(UNK).to_owned())
            .collect()
    }

    /// `token<TAB>id<TAB>count` rows sorted by id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            out.push_str(&format!("{t}\t{id}\t{c}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut vocab = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(origin, line_no, "expected token<TAB>id<TAB>count"));
            }
            let id: usize = fields[1]
                .parse()
                .map_err(|_| Error::parse(origin, line_no, "bad id"))?;
            let count: u64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(origin, line_no, "bad count"))?;
            if id != vocab.len() {
                return Err(Error::parse(origin, line_no, "ids must be dense and sorted"));
            }
            if vocab.index.contains_key(fields[0]) {
                return Err(Error::parse(origin, line_no, "duplicate token"));
            }
            vocab.push(fields[0].to_owned(), count);
        }
        if vocab.token(PAD_ID) != Some(PAD) || vocab.token(UNK_ID) != Some(UNK) {
            return Err(Error::parse(origin, 1, "ids 0 and 1 must be <pad> and <unk>"));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_tsv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tsv(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(spec: &[(&str, usize)]) -> Vec<TokenSequence> {
        spec.iter()
            .flat_map(|&(t, n)| std::iter::repeat_n(TokenSequence::from_joined(t), n))
            .collect()
    }

    #[test]
    fn threshold_filters() {
        let v = Vocabulary::build(&corpus(&[("a", 20), ("b", 14)]), 15).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
        assert_eq!(v.count(2), 20);
    }

    #[test]
    fn threshold_is_inclusive() {
        let v = Vocabulary::build(&corpus(&[("a", 15)]), 15).unwrap();
        assert_eq!(v.id("a"), Some(2));
    }

    #[test]
    fn frequency_then_lexicographic() {
        let v = Vocabulary::build(&corpus(&[("a", 5), ("b", 5), ("c", 6)]), 5).unwrap();
        assert_eq!(v.id("c"), Some(2));
        assert_eq!(v.id("a"), Some(3));
        assert_eq!(v.id("b"), Some(4));
    }

    #[test]
    fn empty_corpus_rejected() {
        let err = Vocabulary::build(&[], 1).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        let err = Vocabulary::build(&[TokenSequence::default()], 1).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        assert!(Vocabulary::build(&corpus(&[("a", 1)]), 0).is_err());
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::build(&corpus(&[("a", 3), ("b", 2), ("c", 1), ("d", 1)]), 1).unwrap();
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.encode(&TokenSequence::from_joined("a"), 3), vec![2, 0, 0]);
        assert_eq!(v.encode(&TokenSequence::from_joined("zzz"), 2), vec![1, 0]);
        let abcd = TokenSequence::from_joined("a b c d");
        assert_eq!(v.encode(&abcd, 2), vec![v.id("a").unwrap(), v.id("b").unwrap()]);
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::build(&corpus(&[("x y", 3), ("z", 1)]), 1).unwrap();
        let text = v.to_tsv();
        assert!(text.starts_with("<pad>\t0\t0\n<unk>\t1\t0\n"));
        let back = Vocabulary::from_tsv(&text, Path::new("v.tsv")).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_tsv("a\t0\t1\n", Path::new("v.tsv")).is_err());
        assert!(Vocabulary::from_tsv("<pad>\t0\t0\n<unk>\t2\t0\n", Path::new("v.tsv")).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in prop::collection::vec("[a-e]{1,2}", 0..20), n_max in 1usize..25) {
            let seq = TokenSequence::new(words.clone()).unwrap();
            let train = TokenSequence::new(words.iter().filter(|w| w.len() == 1).cloned().collect()).unwrap();
            let v = Vocabulary::build(&[train, TokenSequence::from_joined("a")], 1).unwrap();
            let ids = v.encode(&seq, n_max);
            prop_assert_eq!(ids.len(), n_max);
            let expected: Vec<String> = words
                .iter()
                .take(n_max)
                .map(|w| if v.id(w).is_some() { w.clone() } else { UNK.to_owned() })
                .collect();
            prop_assert_eq!(v.decode(&ids), expected);
        }

        #[test]
        fn build_is_deterministic(words in prop::collection::vec("[a-f]", 1..60)) {
            let seq = TokenSequence::new(words).unwrap();
            let a = Vocabulary::build(std::slice::from_ref(&seq), 2);
            let b = Vocabulary::build(std::slice::from_ref(&seq), 2);
            prop_assert_eq!(a.unwrap(), b.unwrap());
        }
    }
}
