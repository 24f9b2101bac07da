//! Training loops: joint source/target optimization and the new-style
//! extension procedure.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DlnError, Result};
use crate::model::{DLNModel, ExtensionAnchors, PreparedSource, PreparedTarget};
use crate::optim::{adam_step, clip_gradients, AdamState, OptimConfig};
use crate::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Mixing weight of the supervised source loss.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            epochs: 100,
            batch_size: 64,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DlnError::Config(format!(
                "lambda must be in [0,1], got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(DlnError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_source: f64,
    pub loss_target: f64,
    pub loss_total: f64,
}

/// Encodes raw data into teacher-forcing form once, so epochs only touch
/// numeric buffers.
pub fn prepare_data<T: Scalar>(
    model: &DLNModel<T>,
    source_pairs: &[(Vec<f64>, Vec<String>)],
    target_corpus: &[Vec<String>],
    style: &str,
) -> Result<(Vec<PreparedSource<T>>, Vec<PreparedTarget<T>>)> {
    let source = source_pairs
        .iter()
        .map(|(feats, tokens)| model.prepare_source(feats, tokens))
        .collect::<Result<Vec<_>>>()?;
    let target = target_corpus
        .iter()
        .map(|tokens| model.prepare_target(style, tokens))
        .collect::<Result<Vec<_>>>()?;
    Ok((source, target))
}

/// Joint training: per epoch, shuffled source and target batches are paired
/// up and each pair takes one clipped Adam step on
/// λ·mean(L_S) + (1−λ)·mean(L_T).
pub fn train_joint<T: Scalar, F: FnMut(EpochStats)>(
    model: &mut DLNModel<T>,
    source: &[PreparedSource<T>],
    target: &[PreparedTarget<T>],
    style: &str,
    cfg: &TrainConfig,
    optim: &OptimConfig,
    mut on_epoch: F,
) -> Result<()> {
    cfg.validate()?;
    optim.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(DlnError::Argument("training needs non-empty source and target data".into()));
    }
    let mut state = AdamState::new();
    for epoch in 0..cfg.epochs {
        let stats = run_epoch(
            model,
            source,
            target,
            style,
            cfg,
            optim,
            &mut state,
            epoch,
            None,
            0.0,
        )?;
        on_epoch(stats);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_epoch<T: Scalar>(
    model: &mut DLNModel<T>,
    source: &[PreparedSource<T>],
    target: &[PreparedTarget<T>],
    style: &str,
    cfg: &TrainConfig,
    optim: &OptimConfig,
    state: &mut AdamState<T>,
    epoch: usize,
    anchors: Option<&ExtensionAnchors<T>>,
    lambda2: f64,
) -> Result<EpochStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((epoch as u64) << 20) ^ 0x5eed);
    let mut src_idx: Vec<usize> = (0..source.len()).collect();
    let mut tgt_idx: Vec<usize> = (0..target.len()).collect();
    src_idx.shuffle(&mut rng);
    tgt_idx.shuffle(&mut rng);
    let src_batches: Vec<&[usize]> = src_idx.chunks(cfg.batch_size).collect();
    let tgt_batches: Vec<&[usize]> = tgt_idx.chunks(cfg.batch_size).collect();
    let steps = src_batches.len().max(tgt_batches.len());

    let mut sum_s = 0.0f64;
    let mut sum_t = 0.0f64;
    let mut sum_total = 0.0f64;
    for step in 0..steps {
        let batch_s: Vec<PreparedSource<T>> = src_batches[step % src_batches.len()]
            .iter()
            .map(|&i| source[i].clone())
            .collect();
        let batch_t: Vec<PreparedTarget<T>> = tgt_batches[step % tgt_batches.len()]
            .iter()
            .map(|&i| target[i].clone())
            .collect();
        let losses = model.joint_backward(&batch_s, &batch_t, style, cfg.lambda)?;
        let mut total = losses.total.as_f64();
        if let Some(anchor_set) = anchors {
            let r = if lambda2 != 0.0 {
                model.regularizer_backward(anchor_set, lambda2)?
            } else {
                model.regularizer(anchor_set)?
            };
            total += lambda2 * r.as_f64();
        }
        clip_gradients(model.params_mut(), optim.clip_norm)?;
        adam_step(model.params_mut(), state, optim, epoch)?;
        sum_s += losses.source.as_f64();
        sum_t += losses.target.as_f64();
        sum_total += total;
    }
    Ok(EpochStats {
        epoch,
        loss_source: sum_s / steps as f64,
        loss_target: sum_t / steps as f64,
        loss_total: sum_total / steps as f64,
    })
}

#[derive(Debug, Clone)]
pub struct ExtensionConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Cap on vocabulary rows added for the new style.
    pub max_new_vocab: usize,
    pub init_range: f64,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            lambda1: 0.2,
            lambda2: 0.1,
            epochs: 20,
            batch_size: 64,
            seed: 42,
            max_new_vocab: 2000,
            init_range: 0.08,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtensionReport {
    pub style: String,
    pub new_tokens: usize,
    pub regularizer_initial: f64,
    pub regularizer_final: f64,
}

/// Tokens of `corpus` absent from the model's base vocabulary, most
/// frequent first (ties lexicographic), capped at `max_new`.
pub fn new_style_tokens<T: Scalar>(
    model: &DLNModel<T>,
    corpus: &[Vec<String>],
    max_new: usize,
) -> Vec<String> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for line in corpus {
        for tok in line {
            if !model.arch().base_vocab.contains(tok) {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_new);
    ranked.into_iter().map(|(t, _)| t.to_string()).collect()
}

/// Plugs a new style into a pretrained model: registers its LN set, text
/// projection and vocabulary extension rows, freezes the source LN set and
/// every previous style's private parameters, then minimizes
/// λ1·L_S + (1−λ1)·L_T + λ2·R with R anchoring the shared embedding,
/// output and image-projection weights to their pretrained values.
pub fn extend_with_style<T: Scalar, F: FnMut(EpochStats)>(
    model: &mut DLNModel<T>,
    new_style: &str,
    corpus: &[Vec<String>],
    source: &[PreparedSource<T>],
    cfg: &ExtensionConfig,
    optim: &OptimConfig,
    mut on_epoch: F,
) -> Result<ExtensionReport> {
    if !(0.0..=1.0).contains(&cfg.lambda1) {
        return Err(DlnError::Config(format!(
            "lambda1 must be in [0,1], got {}",
            cfg.lambda1
        )));
    }
    if cfg.lambda2 < 0.0 {
        return Err(DlnError::Config("lambda2 must be non-negative".into()));
    }
    if corpus.is_empty() {
        return Err(DlnError::Argument("new-style corpus is empty".into()));
    }
    let ext_tokens = new_style_tokens(model, corpus, cfg.max_new_vocab);
    let new_count = ext_tokens.len();
    model.register_style_extension(new_style, ext_tokens, cfg.init_range, cfg.seed ^ 0xe27)?;
    let target = corpus
        .iter()
        .map(|tokens| model.prepare_target(new_style, tokens))
        .collect::<Result<Vec<_>>>()?;

    let anchors = model.capture_anchors()?;
    let regularizer_initial = model.regularizer(&anchors)?.as_f64();
    model.freeze_for_extension(new_style)?;

    let train_cfg = TrainConfig {
        lambda: cfg.lambda1,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let mut state = AdamState::new();
    for epoch in 0..cfg.epochs {
        let stats = run_epoch(
            model,
            source,
            &target,
            new_style,
            &train_cfg,
            optim,
            &mut state,
            epoch,
            Some(&anchors),
            cfg.lambda2,
        )?;
        on_epoch(stats);
    }
    let regularizer_final = model.regularizer(&anchors)?.as_f64();
    Ok(ExtensionReport {
        style: new_style.to_string(),
        new_tokens: new_count,
        regularizer_initial,
        regularizer_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::vocab::{tokenize, Vocabulary};

    fn small_model(seed: u64) -> DLNModel<f32> {
        let corpus: Vec<Vec<String>> = [
            "a quiet river near the stone",
            "oh the river sings babe",
            "the dog and the tree stand close",
            "oh my dog ; the tree calls me",
        ]
        .iter()
        .map(|l| tokenize(l))
        .collect();
        let vocab = Vocabulary::build(&corpus, 64).unwrap();
        let cfg = ModelConfig {
            hidden: 16,
            embed: 8,
            feature_dim: 10,
            text_feature_dim: 12,
            seed,
            ..ModelConfig::default()
        };
        DLNModel::new(&cfg, vocab, "lyric").unwrap()
    }

    fn dummy_source(model: &DLNModel<f32>) -> PreparedSource<f32> {
        let feats = vec![0.1f64; model.arch().feature_dim];
        model
            .prepare_source(&feats, &tokenize("a quiet river near the stone"))
            .unwrap()
    }

    #[test]
    fn single_sentence_overfits_under_two_hundred_steps() {
        let mut model = small_model(9);
        let sentence = tokenize("oh the river sings babe");
        let target = vec![model.prepare_target("lyric", &sentence).unwrap()];
        let source = vec![dummy_source(&model)];
        let optim = OptimConfig {
            learning_rate: 0.01,
            ..OptimConfig::default()
        };
        let mut state = AdamState::new();
        for _ in 0..200 {
            model.joint_backward(&source, &target, "lyric", 0.0).unwrap();
            clip_gradients(model.params_mut(), optim.clip_norm).unwrap();
            adam_step(model.params_mut(), &mut state, &optim, 0).unwrap();
        }
        let loss = model
            .forward_target_reconstruction("lyric", &sentence)
            .unwrap();
        let per_token = loss / target[0].targets.len() as f32;
        assert!(per_token < 0.1, "per-token loss {per_token}");
    }

    #[test]
    fn losses_fall_over_short_training() {
        let mut model = small_model(4);
        let sources: Vec<PreparedSource<f32>> = (0..8)
            .map(|i| {
                let feats = vec![0.05 * (i as f64 + 1.0); model.arch().feature_dim];
                model
                    .prepare_source(&feats, &tokenize("the dog and the tree stand close"))
                    .unwrap()
            })
            .collect();
        let targets: Vec<PreparedTarget<f32>> = (0..8)
            .map(|_| {
                model
                    .prepare_target("lyric", &tokenize("oh my dog ; the tree calls me"))
                    .unwrap()
            })
            .collect();
        let mut history = Vec::new();
        train_joint(
            &mut model,
            &sources,
            &targets,
            "lyric",
            &TrainConfig {
                epochs: 12,
                batch_size: 4,
                ..TrainConfig::default()
            },
            &OptimConfig::default(),
            |stats| history.push(stats),
        )
        .unwrap();
        assert!(history.last().unwrap().loss_source < history[0].loss_source);
        assert!(history.last().unwrap().loss_target < history[0].loss_target);
    }

    #[test]
    fn extension_starts_with_zero_regularizer_and_leaves_old_styles_untouched() {
        let mut model = small_model(11);
        let corpus: Vec<Vec<String>> = vec![
            tokenize("alas the sorrow of the river fades"),
            tokenize("alas my shadow mourns the stone"),
        ];
        let before = model.params().flat_values();
        let feats = vec![0.2f64; model.arch().feature_dim];
        let decode = crate::decoding::DecodeConfig {
            beam_width: 1,
            max_len: 10,
        };
        let gen_before = model.generate(&feats, "lyric", &decode).unwrap();

        let ext_tokens = new_style_tokens(&model, &corpus, 100);
        model
            .register_style_extension("gloom", ext_tokens, 0.08, 5)
            .unwrap();
        let anchors = model.capture_anchors().unwrap();
        assert_eq!(model.regularizer(&anchors).unwrap(), 0.0);

        // registration alone must not change existing parameters or
        // generations for previously trained styles
        let after = model.params().flat_values();
        assert_eq!(&before[..], &after[..before.len()]);
        let gen_after = model.generate(&feats, "lyric", &decode).unwrap();
        assert_eq!(gen_before, gen_after);
    }

    #[test]
    fn perturbing_one_anchored_entry_gives_that_delta() {
        let mut model = small_model(12);
        model
            .register_style_extension("gloom", vec!["alas".into()], 0.08, 5)
            .unwrap();
        let anchors = model.capture_anchors().unwrap();
        let delta = 0.37f32;
        model.params_mut().tensor_mut("embedding").unwrap().values_mut()[3] += delta;
        let r = model.regularizer(&anchors).unwrap();
        assert!((r - delta).abs() < 1e-6, "r {r}");
        // extension rows do not contribute
        model
            .params_mut()
            .tensor_mut("embedding.ext.gloom")
            .unwrap()
            .values_mut()[0] += 5.0;
        let r2 = model.regularizer(&anchors).unwrap();
        assert!((r2 - r).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda2_pins_overlapping_weights() {
        let mut model = small_model(13);
        let corpus: Vec<Vec<String>> = (0..6)
            .map(|i| tokenize(&format!("alas the sorrow of item{i} fades")))
            .collect();
        let source = vec![dummy_source(&model)];
        let cfg = ExtensionConfig {
            lambda2: 1e6,
            epochs: 50,
            batch_size: 4,
            ..ExtensionConfig::default()
        };
        // a small learning rate keeps the Adam equilibrium oscillation
        // around the anchor well below the bound being probed
        let optim = OptimConfig {
            learning_rate: 2e-4,
            ..OptimConfig::default()
        };
        let report = extend_with_style(
            &mut model,
            "gloom",
            &corpus,
            &source,
            &cfg,
            &optim,
            |_| {},
        )
        .unwrap();
        assert_eq!(report.regularizer_initial, 0.0);
        assert!(
            report.regularizer_final < 1e-3,
            "R stayed at {}",
            report.regularizer_final
        );
    }

    #[test]
    fn source_ln_is_frozen_during_extension() {
        let mut model = small_model(14);
        let corpus = vec![tokenize("alas the sorrow fades")];
        let source = vec![dummy_source(&model)];
        let ln_before: Vec<f32> = model
            .params()
            .values(&crate::model::ln_param_name("source", "i", "g"))
            .unwrap()
            .to_vec();
        extend_with_style(
            &mut model,
            "gloom",
            &corpus,
            &source,
            &ExtensionConfig {
                epochs: 5,
                batch_size: 2,
                ..ExtensionConfig::default()
            },
            &OptimConfig::default(),
            |_| {},
        )
        .unwrap();
        let ln_after = model
            .params()
            .values(&crate::model::ln_param_name("source", "i", "g"))
            .unwrap();
        assert_eq!(ln_before.as_slice(), ln_after);
        // while the new style's LN did move
        let new_ln = model
            .params()
            .values(&crate::model::ln_param_name("gloom", "i", "g"))
            .unwrap();
        assert!(new_ln.iter().any(|&v| v != 1.0));
    }
}
