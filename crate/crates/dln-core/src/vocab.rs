//! Token/id mapping and tokenization rules.
//!
//! Ids are dense and stable: the four specials occupy 0..=3 and content
//! tokens follow in frequency order (ties broken lexicographically), so a
//! given corpus always produces the same vocabulary.

use std::collections::HashMap;

use crate::error::{DlnError, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Vocabulary containing only the specials.
    pub fn empty() -> Self {
        let tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Specials plus the provided content tokens in the given order.
    pub fn from_content_tokens<I: IntoIterator<Item = String>>(content: I) -> Result<Self> {
        let mut vocab = Vocabulary::empty();
        for token in content {
            vocab.push(token)?;
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String) -> Result<TokenId> {
        if self.index.contains_key(&token) {
            return Err(DlnError::Vocab(format!("duplicate token `{token}`")));
        }
        let id = self.tokens.len();
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        Ok(id)
    }

    /// Top `max_size - 4` tokens by frequency (ties broken lexicographically)
    /// from an already-tokenized corpus; everything else maps to UNK.
    pub fn build(corpus: &[Vec<String>], max_size: usize) -> Result<Self> {
        if max_size <= NUM_SPECIALS {
            return Err(DlnError::Argument(format!(
                "max_size must exceed {NUM_SPECIALS}, got {max_size}"
            )));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for line in corpus {
            for tok in line {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return Err(DlnError::Argument("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);
        Vocabulary::from_content_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to UNK.
    pub fn encode_token(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.encode_token(t)).collect()
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id)
            .map(|s| s.as_str())
            .ok_or(DlnError::Index {
                index: id,
                len: self.tokens.len(),
            })
    }

    /// Token strings for `ids`, skipping PAD and BOS.
    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            if id == PAD || id == BOS {
                continue;
            }
            out.push(self.token(id)?.to_string());
        }
        Ok(out)
    }

    /// Content tokens (everything past the specials) in id order.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS..]
    }

    pub fn all_tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Lowercases, splits on whitespace and isolates every ASCII punctuation
/// character (including `;`) as its own token.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in line.to_lowercase().chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else if ch.is_ascii_punctuation() && ch != '<' && ch != '>' {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_occupy_fixed_ids() {
        let v = Vocabulary::empty();
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<bos>"), Some(BOS));
        assert_eq!(v.id("<eos>"), Some(EOS));
        assert_eq!(v.id("<unk>"), Some(UNK));
    }

    #[test]
    fn build_keeps_most_frequent_and_maps_rest_to_unk() {
        let corpus = vec![tokenize("a a b")];
        let v = Vocabulary::build(&corpus, 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.encode_token("a"), 4);
        assert_eq!(v.encode_token("b"), UNK);
    }

    #[test]
    fn frequency_tie_breaks_lexicographically() {
        let corpus = vec![tokenize("y x")];
        let v = Vocabulary::build(&corpus, 5).unwrap();
        assert!(v.contains("x"));
        assert!(!v.contains("y"));
    }

    #[test]
    fn build_matches_counting_oracle() {
        // independent frequency count over a generated corpus
        let mut corpus = Vec::new();
        for i in 0..1000u32 {
            let a = format!("w{}", i % 13);
            let b = format!("w{}", i % 7);
            corpus.push(vec![a, b]);
        }
        let cap = 10usize;
        let v = Vocabulary::build(&corpus, cap).unwrap();

        let mut counts: HashMap<String, u64> = HashMap::new();
        for line in &corpus {
            for t in line {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap - NUM_SPECIALS);
        let expect: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
        assert_eq!(v.content_tokens(), expect.as_slice());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(Vocabulary::build(&[], 10).is_err());
        assert!(Vocabulary::build(&[vec![]], 10).is_err());
    }

    #[test]
    fn tokenize_hand_cases() {
        assert_eq!(tokenize("A red Dog."), vec!["a", "red", "dog", "."]);
        assert_eq!(tokenize("love ; forever"), vec!["love", ";", "forever"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("it's"), vec!["it", "'", "s"]);
    }

    #[test]
    fn tokenize_is_idempotent_on_joined_output() {
        let first = tokenize("Dogs, CATS; and a bird!");
        let rejoined = first.join(" ");
        assert_eq!(tokenize(&rejoined), first);
    }

    #[test]
    fn decode_skips_pad_and_bos() {
        let v = Vocabulary::from_content_tokens(vec!["dog".into()]).unwrap();
        let decoded = v.decode(&[PAD, BOS, 4, EOS]).unwrap();
        assert_eq!(decoded, vec!["dog", "<eos>"]);
    }

    proptest::proptest! {
        #[test]
        fn encode_decode_is_identity_in_vocab(
            words in proptest::collection::vec("[a-z]{1,6}", 1..12),
        ) {
            let mut uniq: Vec<String> = words.clone();
            uniq.sort();
            uniq.dedup();
            let v = Vocabulary::from_content_tokens(uniq).unwrap();
            let ids = v.encode(&words);
            let back = v.decode(&ids).unwrap();
            proptest::prop_assert_eq!(back, words);
        }
    }
}
