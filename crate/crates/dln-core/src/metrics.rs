//! Quantitative evaluation: noun-overlap content similarity with synonym
//! expansion, transfer accuracy, BLEU and the random-noun baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::Rng;

use crate::classifier::StyleClassifier;
use crate::error::{DlnError, Result};
use crate::tensor::Scalar;

/// Set of tokens designated as nouns.
#[derive(Debug, Clone, Default)]
pub struct NounLexicon {
    pub tokens: BTreeSet<String>,
}

impl NounLexicon {
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        NounLexicon {
            tokens: tokens.into_iter().collect(),
        }
    }

    /// One token per line; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text))
    }

    pub fn parse(text: &str) -> Self {
        let tokens = text
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_string())
            .collect();
        NounLexicon { tokens }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Noun → synonym set, closed under symmetry at load time.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymLexicon {
    pub fn empty() -> Self {
        SynonymLexicon::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        let mut lex = SynonymLexicon::default();
        for (a, b) in pairs {
            lex.insert(&a, &b);
        }
        lex
    }

    fn insert(&mut self, a: &str, b: &str) {
        if a == b {
            return;
        }
        self.map
            .entry(a.to_string())
            .or_default()
            .insert(b.to_string());
        self.map
            .entry(b.to_string())
            .or_default()
            .insert(a.to_string());
    }

    /// Lines of `head: syn1, syn2, ...`; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lex = SynonymLexicon::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once(':').ok_or_else(|| DlnError::Format {
                path: origin.to_string(),
                line: lineno + 1,
                msg: "expected `head: syn1, syn2`".to_string(),
            })?;
            for syn in rest.split(',') {
                let syn = syn.trim();
                if !syn.is_empty() {
                    lex.insert(head.trim(), syn);
                }
            }
        }
        Ok(lex)
    }

    pub fn synonyms(&self, token: &str) -> Option<&BTreeSet<String>> {
        self.map.get(token)
    }

    /// The set plus every synonym of its members.
    pub fn expand(&self, set: &BTreeSet<String>) -> BTreeSet<String> {
        let mut out = set.clone();
        for token in set {
            if let Some(syns) = self.map.get(token) {
                out.extend(syns.iter().cloned());
            }
        }
        out
    }
}

/// Distinct tokens of `tokens` present in the noun lexicon.
pub fn extract_nouns(tokens: &[String], nouns: &NounLexicon) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| nouns.contains(t))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentSimilarity {
    pub f: f64,
    pub p: f64,
    pub r: f64,
    pub n_p: usize,
    pub n_r: usize,
}

/// Precision = |C_T ∩ C'_S|/|C_T|, recall = |C_S ∩ C'_T|/|C_S| where the
/// primed sets add synonyms; f is their harmonic mean. Degenerate
/// denominators yield 0.
pub fn content_similarity(
    c_s: &BTreeSet<String>,
    c_t: &BTreeSet<String>,
    syn: &SynonymLexicon,
) -> ContentSimilarity {
    let c_s_expanded = syn.expand(c_s);
    let c_t_expanded = syn.expand(c_t);
    let n_p = c_t.intersection(&c_s_expanded).count();
    let n_r = c_s.intersection(&c_t_expanded).count();
    let p = if c_t.is_empty() {
        0.0
    } else {
        n_p as f64 / c_t.len() as f64
    };
    let r = if c_s.is_empty() {
        0.0
    } else {
        n_r as f64 / c_s.len() as f64
    };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    ContentSimilarity { f, p, r, n_p, n_r }
}

/// Arithmetic mean of per-item f-scores.
pub fn corpus_content_similarity(
    items: &[(BTreeSet<String>, BTreeSet<String>)],
    syn: &SynonymLexicon,
) -> Result<f64> {
    if items.is_empty() {
        return Err(DlnError::Argument("content similarity over an empty list".into()));
    }
    let sum: f64 = items
        .iter()
        .map(|(c_s, c_t)| content_similarity(c_s, c_t, syn).f)
        .sum();
    Ok(sum / items.len() as f64)
}

/// Fraction of sentences the classifier scores strictly above 0.5
/// (`s = 0.5` counts as not transferred).
pub fn transfer_accuracy<T: Scalar>(
    sentences: &[Vec<String>],
    clf: &StyleClassifier<T>,
) -> Result<f64> {
    if sentences.is_empty() {
        return Err(DlnError::Argument("transfer accuracy over an empty list".into()));
    }
    let mut transferred = 0usize;
    for sentence in sentences {
        if clf.score(sentence)?.as_f64() > 0.5 {
            transferred += 1;
        }
    }
    Ok(transferred as f64 / sentences.len() as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with modified n-gram precision, uniform weights over
/// the orders that have any candidate n-grams, a brevity penalty and a
/// single reference per candidate. No smoothing: a zero precision at any
/// populated order gives 0.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<String>)], max_n: usize) -> Result<f64> {
    if max_n < 1 {
        return Err(DlnError::Argument(format!("max_n must be >= 1, got {max_n}")));
    }
    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for (candidate, reference) in pairs {
        cand_len += candidate.len() as u64;
        ref_len += reference.len() as u64;
        for n in 1..=max_n {
            let cand_counts = ngram_counts(candidate, n);
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in &cand_counts {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += (*count).min(clip);
                total[n - 1] += count;
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    let mut orders = 0usize;
    for n in 0..max_n {
        if total[n] == 0 {
            continue;
        }
        orders += 1;
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    if orders == 0 {
        return Ok(0.0);
    }
    let precision = (log_sum / orders as f64).exp();
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * precision)
}

/// Single-pair BLEU; equivalent to a one-item corpus.
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> Result<f64> {
    corpus_bleu(&[(candidate.to_vec(), reference.to_vec())], max_n)
}

/// Uniform sample of `count` distinct nouns (capped at the lexicon size).
pub fn random_baseline<R: Rng>(
    count: usize,
    nouns: &NounLexicon,
    rng: &mut R,
) -> Vec<String> {
    let pool: Vec<&String> = nouns.tokens.iter().collect();
    if pool.is_empty() || count == 0 {
        return Vec::new();
    }
    let k = count.min(pool.len());
    index_sample(rng, pool.len(), k)
        .iter()
        .map(|i| pool[i].clone())
        .collect()
}
