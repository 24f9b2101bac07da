//! Greedy and beam-search inference over a generator view.
//!
//! Scores are raw sums of per-step log-softmax probabilities (no length
//! normalization). PAD, BOS and UNK are masked to −∞ before normalization
//! so they can never be emitted. Ties break toward the lexicographically
//! smaller token sequence, which for single-step decisions means the lowest
//! token id.

use crate::error::{DlnError, Result};
use crate::lnlstm::{lnlstm_step, CellState};
use crate::model::{ln_view, logits_for, lstm_view, DLNModel, DlnArch};
use crate::store::ParamStore;
use crate::tensor::{log_softmax, Scalar};
use crate::vocab::{TokenId, BOS, EOS, PAD, UNK};

#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 5,
            max_len: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSequence<T: Scalar> {
    /// Content tokens (EOS excluded).
    pub tokens: Vec<TokenId>,
    /// Sum of per-step log probabilities, including the EOS step when the
    /// sequence finished.
    pub log_prob: T,
    pub finished: bool,
}

/// Read-only decoder view: shared weights plus one style's LN set and
/// vocabulary. Decoding never mutates the model.
pub struct GeneratorView<'a, T: Scalar> {
    arch: &'a DlnArch,
    params: &'a ParamStore<T>,
    style: usize,
}

impl<T: Scalar> DLNModel<T> {
    pub fn decode_view(&self, style: &str) -> Result<GeneratorView<'_, T>> {
        let idx = self.arch().style_index(style)?;
        Ok(GeneratorView {
            arch: self.arch(),
            params: self.params(),
            style: idx,
        })
    }

    /// Encode image features and decode with the requested style.
    pub fn generate(
        &self,
        features: &[f64],
        style: &str,
        cfg: &DecodeConfig,
    ) -> Result<Vec<String>> {
        let feats: Vec<T> = features.iter().map(|&v| T::from_f64(v)).collect();
        let z = self.encode_image(&feats)?;
        let view = self.decode_view(style)?;
        let decoded = if cfg.beam_width == 1 {
            greedy_decode(&view, &z, cfg.max_len)?
        } else {
            beam_search(&view, &z, cfg.beam_width, cfg.max_len)?
        };
        decoded
            .tokens
            .iter()
            .map(|&id| Ok(self.arch().token(view.style, id)?.to_string()))
            .collect()
    }
}

impl<'a, T: Scalar> GeneratorView<'a, T> {
    pub fn vocab_size(&self) -> usize {
        self.arch.vocab_size(self.style)
    }

    pub fn style_index(&self) -> usize {
        self.style
    }

    /// State after consuming the latent code from a zero state.
    fn latent_state(&self, z: &[T]) -> Result<CellState<T>> {
        let weights = lstm_view(self.arch, self.params)?;
        let ln = ln_view(self.params, &self.arch.styles[self.style].name)?;
        lnlstm_step(
            z,
            &CellState::zeros(self.arch.hidden),
            &weights,
            &ln,
            self.arch.ln_eps,
        )
    }

    /// Feeds one token and returns the next state plus masked log-probs for
    /// the following position.
    fn advance(&self, state: &CellState<T>, token: TokenId) -> Result<(CellState<T>, Vec<T>)> {
        let style_name = &self.arch.styles[self.style].name;
        let embedding = self.params.values(crate::model::EMBEDDING)?;
        let base_len = self.arch.base_vocab.len();
        let e = self.arch.embed;
        let input: Vec<T> = if token < base_len {
            embedding[token * e..(token + 1) * e].to_vec()
        } else {
            let ext = self.params.values(&format!("embedding.ext.{style_name}"))?;
            let row = token - base_len;
            ext[row * e..(row + 1) * e].to_vec()
        };
        let weights = lstm_view(self.arch, self.params)?;
        let ln = ln_view(self.params, style_name)?;
        let next = lnlstm_step(&input, state, &weights, &ln, self.arch.ln_eps)?;
        let output = self.params.values(crate::model::OUTPUT)?;
        let ext_output = if self.arch.styles[self.style].ext_tokens.is_empty() {
            None
        } else {
            Some(self.params.values(&format!("output.ext.{style_name}"))?)
        };
        let mut logits = logits_for(self.arch, output, ext_output, &next.h);
        for banned in [PAD, BOS, UNK] {
            logits[banned] = T::neg_infinity();
        }
        let log_probs = log_softmax(&logits);
        Ok((next, log_probs))
    }
}

/// Argmax decoding; ties break toward the lowest token id. Stops at EOS or
/// after `max_len` content tokens.
pub fn greedy_decode<T: Scalar>(
    view: &GeneratorView<'_, T>,
    z: &[T],
    max_len: usize,
) -> Result<DecodedSequence<T>> {
    if max_len < 1 {
        return Err(DlnError::Argument("max_len must be at least 1".into()));
    }
    let mut state = view.latent_state(z)?;
    let mut last_token = BOS;
    let mut tokens = Vec::new();
    let mut log_prob = T::zero();
    loop {
        let (next, log_probs) = view.advance(&state, last_token)?;
        let mut best = 0usize;
        let mut best_lp = T::neg_infinity();
        for (i, &lp) in log_probs.iter().enumerate() {
            if lp > best_lp {
                best_lp = lp;
                best = i;
            }
        }
        log_prob = log_prob + best_lp;
        if best == EOS {
            return Ok(DecodedSequence {
                tokens,
                log_prob,
                finished: true,
            });
        }
        tokens.push(best);
        if tokens.len() >= max_len {
            return Ok(DecodedSequence {
                tokens,
                log_prob,
                finished: false,
            });
        }
        state = next;
        last_token = best;
    }
}

struct Hypothesis<T: Scalar> {
    tokens: Vec<TokenId>,
    score: T,
    state: CellState<T>,
    last_token: TokenId,
}

/// Standard beam search over summed log-probabilities. At every step the
/// top `width` candidates are kept; those ending in EOS retire to a pool of
/// finished hypotheses. The best finished hypothesis wins; only if nothing
/// finished does the best unfinished hypothesis at `max_len` get returned.
pub fn beam_search<T: Scalar>(
    view: &GeneratorView<'_, T>,
    z: &[T],
    width: usize,
    max_len: usize,
) -> Result<DecodedSequence<T>> {
    if width < 1 {
        return Err(DlnError::Argument(format!(
            "beam width must be >= 1, got {width}"
        )));
    }
    if max_len < 1 {
        return Err(DlnError::Argument("max_len must be at least 1".into()));
    }
    let root = view.latent_state(z)?;
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        score: T::zero(),
        state: root,
        last_token: BOS,
    }];
    let mut finished: Vec<DecodedSequence<T>> = Vec::new();

    for _step in 0..max_len {
        if beam.is_empty() {
            break;
        }
        let mut candidates: Vec<(T, TokenId, usize, CellState<T>)> = Vec::new();
        for (parent, hyp) in beam.iter().enumerate() {
            let (next, log_probs) = view.advance(&hyp.state, hyp.last_token)?;
            for (tok, &lp) in log_probs.iter().enumerate() {
                if lp == T::neg_infinity() {
                    continue;
                }
                candidates.push((hyp.score + lp, tok, parent, next.clone()));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let seq_a = (&beam[a.2].tokens, a.1);
                    let seq_b = (&beam[b.2].tokens, b.1);
                    seq_a.cmp(&seq_b)
                })
        });
        let mut next_beam = Vec::with_capacity(width);
        for (score, tok, parent, state) in candidates.into_iter().take(width) {
            if tok == EOS {
                finished.push(DecodedSequence {
                    tokens: beam[parent].tokens.clone(),
                    log_prob: score,
                    finished: true,
                });
            } else {
                let mut tokens = beam[parent].tokens.clone();
                tokens.push(tok);
                next_beam.push(Hypothesis {
                    tokens,
                    score,
                    state,
                    last_token: tok,
                });
            }
        }
        beam = next_beam;
    }

    let pick_best = |mut seqs: Vec<DecodedSequence<T>>| -> Option<DecodedSequence<T>> {
        seqs.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        seqs.into_iter().next()
    };

    if !finished.is_empty() {
        return Ok(pick_best(finished).unwrap());
    }
    let unfinished: Vec<DecodedSequence<T>> = beam
        .into_iter()
        .map(|h| DecodedSequence {
            tokens: h.tokens,
            log_prob: h.score,
            finished: false,
        })
        .collect();
    pick_best(unfinished)
        .ok_or_else(|| DlnError::State("beam search produced no hypotheses".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DLNModel, ModelConfig};
    use crate::vocab::Vocabulary;

    fn tiny_model(seed: u64) -> DLNModel<f64> {
        let vocab = Vocabulary::from_content_tokens(
            ["aa", "bb", "cc", "dd"].iter().map(|s| s.to_string()),
        )
        .unwrap();
        let cfg = ModelConfig {
            hidden: 6,
            embed: 4,
            feature_dim: 5,
            text_feature_dim: 8,
            max_len: 8,
            init_range: 0.6,
            seed,
            ..ModelConfig::default()
        };
        DLNModel::new(&cfg, vocab, "styleA").unwrap()
    }

    fn latent(model: &DLNModel<f64>, seed: u64) -> Vec<f64> {
        let feats: Vec<f64> = crate::tensor::uniform_init::<f64>(vec![5], 1.0, seed)
            .unwrap()
            .values()
            .to_vec();
        model.encode_image(&feats).unwrap()
    }

    /// Exhaustive search over all token sequences up to `max_len`.
    fn brute_force_best(
        view: &GeneratorView<'_, f64>,
        z: &[f64],
        max_len: usize,
    ) -> DecodedSequence<f64> {
        fn recurse(
            view: &GeneratorView<'_, f64>,
            state: &CellState<f64>,
            last: TokenId,
            prefix: &mut Vec<TokenId>,
            score: f64,
            max_len: usize,
            best: &mut Option<DecodedSequence<f64>>,
        ) {
            let (next, log_probs) = view.advance(state, last).unwrap();
            for (tok, &lp) in log_probs.iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let total = score + lp;
                if tok == EOS {
                    let cand = DecodedSequence {
                        tokens: prefix.clone(),
                        log_prob: total,
                        finished: true,
                    };
                    let better = match best {
                        None => true,
                        Some(b) => {
                            total > b.log_prob || (total == b.log_prob && cand.tokens < b.tokens)
                        }
                    };
                    if better {
                        *best = Some(cand);
                    }
                } else if prefix.len() < max_len {
                    prefix.push(tok);
                    recurse(view, &next, tok, prefix, total, max_len, best);
                    prefix.pop();
                }
            }
        }
        let root = view.latent_state(z).unwrap();
        let mut best = None;
        let mut prefix = Vec::new();
        recurse(view, &root, BOS, &mut prefix, 0.0, max_len, &mut best);
        best.expect("exhaustive search found a finished sequence")
    }

    #[test]
    fn greedy_is_deterministic() {
        let model = tiny_model(3);
        let z = latent(&model, 50);
        let view = model.decode_view("styleA").unwrap();
        let a = greedy_decode(&view, &z, 8).unwrap();
        let b = greedy_decode(&view, &z, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_never_emits_banned_tokens() {
        for seed in 0..10 {
            let model = tiny_model(seed);
            let z = latent(&model, seed + 100);
            let view = model.decode_view("styleA").unwrap();
            let out = greedy_decode(&view, &z, 8).unwrap();
            for &tok in &out.tokens {
                assert!(tok != PAD && tok != BOS && tok != UNK && tok != EOS);
                assert!(tok < view.vocab_size());
            }
        }
    }

    #[test]
    fn forced_eos_yields_empty_sequence() {
        let mut model = tiny_model(4);
        let z = latent(&model, 7);
        // align the EOS output column with the sign of the first hidden
        // state so its logit towers over everything else
        {
            let view = model.decode_view("styleA").unwrap();
            let state = view.latent_state(&z).unwrap();
            let (after_bos, _) = view.advance(&state, BOS).unwrap();
            let h1 = after_bos.h.clone();
            drop(view);
            let base_len = model.arch().base_vocab.len();
            let hidden = model.arch().hidden;
            let output = model.params_mut().tensor_mut("output").unwrap();
            let values = output.values_mut();
            for (h, hv) in h1.iter().enumerate().take(hidden) {
                values[h * base_len + EOS] = 50.0 * hv.signum();
            }
        }
        let view = model.decode_view("styleA").unwrap();
        let out = greedy_decode(&view, &z, 8).unwrap();
        assert!(out.tokens.is_empty());
        assert!(out.finished);
        let beam = beam_search(&view, &z, 5, 8).unwrap();
        assert!(beam.tokens.is_empty());
    }

    #[test]
    fn beam_width_one_equals_greedy() {
        for seed in 0..20 {
            let model = tiny_model(seed);
            let z = latent(&model, seed + 1000);
            let view = model.decode_view("styleA").unwrap();
            let greedy = greedy_decode(&view, &z, 8).unwrap();
            let beam = beam_search(&view, &z, 1, 8).unwrap();
            assert_eq!(greedy.tokens, beam.tokens, "seed {seed}");
        }
    }

    #[test]
    fn beam_five_dominates_greedy() {
        for seed in 0..20 {
            let model = tiny_model(seed);
            let z = latent(&model, seed + 2000);
            let view = model.decode_view("styleA").unwrap();
            let greedy = greedy_decode(&view, &z, 8).unwrap();
            let beam = beam_search(&view, &z, 5, 8).unwrap();
            assert!(
                beam.log_prob >= greedy.log_prob,
                "seed {seed}: beam {} < greedy {}",
                beam.log_prob,
                greedy.log_prob
            );
        }
    }

    #[test]
    fn beam_matches_exhaustive_on_small_model() {
        for seed in [11u64, 12, 13] {
            let model = tiny_model(seed);
            let z = latent(&model, seed + 3000);
            let view = model.decode_view("styleA").unwrap();
            let brute = brute_force_best(&view, &z, 4);
            let beam = beam_search(&view, &z, 6, 4).unwrap();
            assert!(
                (beam.log_prob - brute.log_prob).abs() < 1e-9,
                "seed {seed}: beam {} vs brute {}",
                beam.log_prob,
                brute.log_prob
            );
            assert_eq!(beam.tokens, brute.tokens);
        }
    }

    #[test]
    fn width_zero_is_rejected() {
        let model = tiny_model(5);
        let z = latent(&model, 9);
        let view = model.decode_view("styleA").unwrap();
        assert!(matches!(
            beam_search(&view, &z, 0, 8),
            Err(DlnError::Argument(_))
        ));
    }

    #[test]
    fn unknown_style_lists_registered_styles() {
        let model = tiny_model(6);
        match model.decode_view("nope").map(|_| ()) {
            Err(DlnError::UnknownStyle { known, .. }) => {
                assert!(known.contains(&"source".to_string()));
                assert!(known.contains(&"styleA".to_string()));
            }
            other => panic!("expected UnknownStyle, got {other:?}"),
        }
    }
}
