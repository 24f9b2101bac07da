//! Binary style classifier: token embeddings, convolution banks of widths
//! 3/4/5 with max-over-time pooling, and a linear head with a sigmoid
//! output. Trained with the crate's Adam on binary cross-entropy; training
//! stops early once the target train accuracy is reached.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DlnError, Result};
use crate::optim::{adam_step, AdamState, OptimConfig};
use crate::store::ParamStore;
use crate::tensor::{uniform_init_with, Scalar};
use crate::vocab::{TokenId, Vocabulary, PAD};

pub const FILTER_WIDTHS: [usize; 3] = [3, 4, 5];

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    pub filters_per_width: usize,
    pub vocab_cap: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Training stops once full-train accuracy reaches this value.
    pub target_accuracy: f64,
    pub init_range: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embed_dim: 64,
            filters_per_width: 32,
            vocab_cap: 4000,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            target_accuracy: 0.995,
            init_range: 0.08,
            seed: 7,
        }
    }
}

pub struct StyleClassifier<T: Scalar> {
    vocab: Vocabulary,
    params: ParamStore<T>,
    embed_dim: usize,
    filters: usize,
}

struct ForwardCache<T: Scalar> {
    ids: Vec<TokenId>,
    /// Per width: (max position, pre-activation at max) for each filter.
    pool_argmax: Vec<Vec<(usize, T)>>,
    pooled: Vec<T>,
    logit: T,
}

impl<T: Scalar> StyleClassifier<T> {
    fn conv_names(width: usize) -> (String, String) {
        (format!("conv{width}.w"), format!("conv{width}.b"))
    }

    fn pad_ids(&self, tokens: &[String]) -> Vec<TokenId> {
        let mut ids = self.vocab.encode(tokens);
        let min_len = *FILTER_WIDTHS.iter().max().unwrap();
        while ids.len() < min_len {
            ids.push(PAD);
        }
        ids
    }

    fn forward(&self, tokens: &[String]) -> Result<ForwardCache<T>> {
        let ids = self.pad_ids(tokens);
        let d = self.embed_dim;
        let f = self.filters;
        let embed = self.params.values("embed")?;
        let mut pooled = Vec::with_capacity(FILTER_WIDTHS.len() * f);
        let mut pool_argmax = Vec::with_capacity(FILTER_WIDTHS.len());
        for &width in FILTER_WIDTHS.iter() {
            let (w_name, b_name) = Self::conv_names(width);
            let w = self.params.values(&w_name)?;
            let b = self.params.values(&b_name)?;
            let window_len = width * d;
            let positions = ids.len() - width + 1;
            let mut best: Vec<(usize, T)> = vec![(0, T::neg_infinity()); f];
            for pos in 0..positions {
                for filt in 0..f {
                    let row = &w[filt * window_len..(filt + 1) * window_len];
                    let mut acc = b[filt];
                    for (offset, &id) in ids[pos..pos + width].iter().enumerate() {
                        let emb = &embed[id * d..(id + 1) * d];
                        let seg = &row[offset * d..(offset + 1) * d];
                        for (rv, ev) in seg.iter().zip(emb.iter()) {
                            acc = acc + *rv * *ev;
                        }
                    }
                    if acc > best[filt].1 {
                        best[filt] = (pos, acc);
                    }
                }
            }
            for &(_, pre) in &best {
                // relu after max-over-time
                pooled.push(if pre > T::zero() { pre } else { T::zero() });
            }
            pool_argmax.push(best);
        }
        let head_w = self.params.values("head.w")?;
        let head_b = self.params.values("head.b")?;
        let mut logit = head_b[0];
        for (hw, pv) in head_w.iter().zip(pooled.iter()) {
            logit = logit + *hw * *pv;
        }
        Ok(ForwardCache {
            ids,
            pool_argmax,
            pooled,
            logit,
        })
    }

    /// Probability that the sentence belongs to the target style; always a
    /// deterministic pure function of the tokens.
    pub fn score(&self, tokens: &[String]) -> Result<T> {
        let cache = self.forward(tokens)?;
        Ok(T::one() / (T::one() + (-cache.logit).exp()))
    }

    /// Accumulates BCE gradients for one example; returns (loss, correct).
    fn backward(&mut self, tokens: &[String], label: f64, weight: T) -> Result<(T, bool)> {
        let cache = self.forward(tokens)?;
        let one = T::one();
        let s = one / (one + (-cache.logit).exp());
        let y = T::from_f64(label);
        // stable BCE: softplus(logit) - y*logit
        let logit = cache.logit;
        let loss = if logit > T::zero() {
            logit - y * logit + (one + (-logit).exp()).ln()
        } else {
            -y * logit + (one + logit.exp()).ln()
        };
        let correct = (s.as_f64() > 0.5) == (label > 0.5);
        let dlogit = (s - y) * weight;

        let d = self.embed_dim;
        let f = self.filters;
        let head_w = self.params.values("head.w")?.to_vec();
        let mut d_head_w = vec![T::zero(); head_w.len()];
        for (dhw, pv) in d_head_w.iter_mut().zip(cache.pooled.iter()) {
            *dhw = *pv * dlogit;
        }
        self.params.accumulate_grad("head.w", &d_head_w, one)?;
        self.params.accumulate_grad("head.b", &[dlogit], one)?;

        let embed_len = self.params.values("embed")?.len();
        let mut d_embed = vec![T::zero(); embed_len];
        for (wi, &width) in FILTER_WIDTHS.iter().enumerate() {
            let (w_name, b_name) = Self::conv_names(width);
            let w = self.params.values(&w_name)?.to_vec();
            let window_len = width * d;
            let mut d_w = vec![T::zero(); w.len()];
            let mut d_b = vec![T::zero(); f];
            for filt in 0..f {
                let (pos, pre) = cache.pool_argmax[wi][filt];
                if pre <= T::zero() {
                    continue;
                }
                let d_act = head_w[wi * f + filt] * dlogit;
                d_b[filt] = d_act;
                let row = &w[filt * window_len..(filt + 1) * window_len];
                let d_row = &mut d_w[filt * window_len..(filt + 1) * window_len];
                for (offset, &id) in cache.ids[pos..pos + width].iter().enumerate() {
                    let emb_src = id * d;
                    let seg = offset * d;
                    for k in 0..d {
                        d_row[seg + k] = d_row[seg + k]
                            + d_act
                                * self.params.values("embed")?[emb_src + k];
                        d_embed[emb_src + k] = d_embed[emb_src + k] + d_act * row[seg + k];
                    }
                }
            }
            self.params.accumulate_grad(&w_name, &d_w, one)?;
            self.params.accumulate_grad(&b_name, &d_b, one)?;
        }
        self.params.accumulate_grad("embed", &d_embed, one)?;
        Ok((loss, correct))
    }

    fn accuracy(&self, examples: &[(Vec<String>, f64)]) -> Result<f64> {
        let mut correct = 0usize;
        for (tokens, label) in examples {
            let s = self.score(tokens)?.as_f64();
            if (s > 0.5) == (*label > 0.5) {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }
}

pub struct TrainedClassifier<T: Scalar> {
    pub classifier: StyleClassifier<T>,
    pub train_accuracy: f64,
    pub epochs_run: usize,
}

/// Trains a source-vs-target classifier (label 1 = target style).
pub fn train_style_classifier<T: Scalar>(
    source_corpus: &[Vec<String>],
    target_corpus: &[Vec<String>],
    cfg: &ClassifierConfig,
) -> Result<TrainedClassifier<T>> {
    if source_corpus.is_empty() || target_corpus.is_empty() {
        return Err(DlnError::Argument(
            "classifier training needs non-empty corpora for both classes".into(),
        ));
    }
    let mut all: Vec<Vec<String>> = Vec::new();
    all.extend_from_slice(source_corpus);
    all.extend_from_slice(target_corpus);
    let vocab = Vocabulary::build(&all, cfg.vocab_cap)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.embed_dim;
    let f = cfg.filters_per_width;
    let mut params: ParamStore<T> = ParamStore::new();
    params.register(
        "embed",
        uniform_init_with(vec![vocab.len(), d], cfg.init_range, &mut rng)?,
        true,
    )?;
    for width in FILTER_WIDTHS {
        params.register(
            &format!("conv{width}.w"),
            uniform_init_with(vec![f, width * d], cfg.init_range, &mut rng)?,
            true,
        )?;
        params.register(
            &format!("conv{width}.b"),
            uniform_init_with(vec![f], cfg.init_range, &mut rng)?,
            true,
        )?;
    }
    params.register(
        "head.w",
        uniform_init_with(vec![FILTER_WIDTHS.len() * f], cfg.init_range, &mut rng)?,
        true,
    )?;
    params.register(
        "head.b",
        uniform_init_with(vec![1], cfg.init_range, &mut rng)?,
        true,
    )?;

    let mut clf = StyleClassifier {
        vocab,
        params,
        embed_dim: d,
        filters: f,
    };

    let mut examples: Vec<(Vec<String>, f64)> = source_corpus
        .iter()
        .map(|s| (s.clone(), 0.0))
        .chain(target_corpus.iter().map(|s| (s.clone(), 1.0)))
        .collect();

    let opt_cfg = OptimConfig {
        learning_rate: cfg.learning_rate,
        clip_norm: 5.0,
        ..OptimConfig::default()
    };
    let mut state = AdamState::new();
    clf.params.ensure_grads();

    let mut train_accuracy = clf.accuracy(&examples)?;
    let mut epochs_run = 0usize;
    if train_accuracy < cfg.target_accuracy {
        for epoch in 0..cfg.max_epochs {
            examples.shuffle(&mut rng);
            for batch in examples.chunks(cfg.batch_size.max(1)) {
                let weight = T::from_f64(1.0 / batch.len() as f64);
                for (tokens, label) in batch {
                    clf.backward(tokens, *label, weight)?;
                }
                crate::optim::clip_gradients(&mut clf.params, opt_cfg.clip_norm)?;
                adam_step(&mut clf.params, &mut state, &opt_cfg, epoch)?;
            }
            epochs_run = epoch + 1;
            train_accuracy = clf.accuracy(&examples)?;
            if train_accuracy >= cfg.target_accuracy {
                break;
            }
        }
    }
    Ok(TrainedClassifier {
        classifier: clf,
        train_accuracy,
        epochs_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::tokenize;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    fn quick_cfg() -> ClassifierConfig {
        ClassifierConfig {
            embed_dim: 16,
            filters_per_width: 8,
            max_epochs: 40,
            seed: 3,
            ..ClassifierConfig::default()
        }
    }

    fn marker_corpora(n: usize) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
        let nouns = ["river", "dog", "tree", "house", "bird", "stone"];
        let source: Vec<Vec<String>> = (0..n)
            .map(|i| tokenize(&format!("there is a {} near the {} .", nouns[i % 6], nouns[(i + 1) % 6])))
            .collect();
        let target: Vec<Vec<String>> = (0..n)
            .map(|i| tokenize(&format!("oh the {} ; my {} sings babe ;", nouns[i % 6], nouns[(i + 2) % 6])))
            .collect();
        (source, target)
    }

    #[test]
    fn separable_corpora_reach_target_accuracy() {
        let (source, target) = marker_corpora(60);
        let trained = train_style_classifier::<f32>(&source, &target, &quick_cfg()).unwrap();
        assert!(
            trained.train_accuracy >= 0.99,
            "accuracy {}",
            trained.train_accuracy
        );
        // scores are calibrated toward the right class
        let s_target = trained.classifier.score(&target[0]).unwrap();
        let s_source = trained.classifier.score(&source[0]).unwrap();
        assert!(s_target > 0.5 && s_source < 0.5);
    }

    #[test]
    fn score_is_deterministic_and_bounded() {
        let (source, target) = marker_corpora(30);
        let trained = train_style_classifier::<f32>(&source, &target, &quick_cfg()).unwrap();
        let sent = tokenize("oh the river ; my dog sings babe ;");
        let a = trained.classifier.score(&sent).unwrap();
        let b = trained.classifier.score(&sent).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn single_class_input_is_rejected() {
        let (source, _) = marker_corpora(5);
        assert!(matches!(
            train_style_classifier::<f32>(&source, &[], &quick_cfg()),
            Err(DlnError::Argument(_))
        ));
        assert!(matches!(
            train_style_classifier::<f32>(&[], &source, &quick_cfg()),
            Err(DlnError::Argument(_))
        ));
    }

    #[test]
    fn label_swap_flips_scores_on_average() {
        let (source, target) = marker_corpora(40);
        let fwd = train_style_classifier::<f32>(&source, &target, &quick_cfg()).unwrap();
        let rev = train_style_classifier::<f32>(&target, &source, &quick_cfg()).unwrap();
        let probe: Vec<Vec<String>> = source.iter().take(10).chain(target.iter().take(10)).cloned().collect();
        let mean_fwd: f64 = probe
            .iter()
            .map(|s| fwd.classifier.score(s).unwrap() as f64)
            .sum::<f64>()
            / probe.len() as f64;
        let mean_rev: f64 = probe
            .iter()
            .map(|s| rev.classifier.score(s).unwrap() as f64)
            .sum::<f64>()
            / probe.len() as f64;
        assert!(
            (mean_fwd - (1.0 - mean_rev)).abs() < 0.2,
            "fwd {mean_fwd} rev {mean_rev}"
        );
    }

    #[test]
    fn duplicated_sentence_caps_at_half_accuracy() {
        let (mut source, mut target) = marker_corpora(30);
        let dup = tokenize("the same words in both places .");
        source.push(dup.clone());
        target.push(dup.clone());
        let trained = train_style_classifier::<f32>(&source, &target, &quick_cfg()).unwrap();
        // identical inputs get identical scores, so at most one of the two
        // duplicate labels can be right
        let s = trained.classifier.score(&dup).unwrap();
        let correct_as_source = s <= 0.5;
        let correct_as_target = s > 0.5;
        let dup_accuracy =
            (correct_as_source as u32 + correct_as_target as u32) as f64 / 2.0;
        assert!(dup_accuracy <= 0.5);
    }
}
