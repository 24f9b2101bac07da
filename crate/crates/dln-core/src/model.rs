//! The full dual-generator model.
//!
//! One parameter store holds a single shared decoder (embedding matrix,
//! output matrix, LN-LSTM weights) plus one layer-norm parameter set per
//! registered style. The source generator and every target generator are
//! views over that store differing only in which LN set (and, for extension
//! styles, which vocabulary extension rows) they resolve. Styles added
//! after pretraining get their own embedding/output extension rows, text
//! projection and LN set while the anchored base weights are pulled back by
//! an L2 regularizer.

use std::collections::HashMap;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::corpus::KeyValueFile;
use crate::error::{DlnError, Result};
use crate::features::FrozenFeatureExtractor;
use crate::lnlstm::{
    lnlstm_backward, run_sequence, CellState, LnParamsView, LstmWeightsView, Trajectory,
    GATE_KEYS,
};
use crate::store::ParamStore;
use crate::tensor::{
    matvec, matvec_t_acc, outer_acc, softmax_cross_entropy, uniform_init_with, Scalar, Tensor,
};
use crate::vocab::{TokenId, Vocabulary, BOS, EOS};

pub const SOURCE_STYLE: &str = "source";

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed: usize,
    /// Image feature dimension.
    pub feature_dim: usize,
    /// Hashed text feature dimension.
    pub text_feature_dim: usize,
    pub max_len: usize,
    pub ln_eps: f64,
    pub init_range: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            embed: 32,
            feature_dim: 64,
            text_feature_dim: 48,
            max_len: 100,
            ln_eps: 1e-5,
            init_range: 0.08,
            seed: 42,
        }
    }
}

/// A registered generation domain.
#[derive(Debug, Clone)]
pub struct StyleEntry {
    pub name: String,
    /// Vocabulary rows appended on top of the base vocabulary.
    pub ext_tokens: Vec<String>,
    ext_index: HashMap<String, usize>,
    /// Target styles encode sentences through a text projection; the source
    /// style does not.
    pub has_text_proj: bool,
}

impl StyleEntry {
    fn new(name: &str, ext_tokens: Vec<String>, has_text_proj: bool) -> Self {
        let ext_index = ext_tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        StyleEntry {
            name: name.to_string(),
            ext_tokens,
            ext_index,
            has_text_proj,
        }
    }
}

/// Immutable architecture: dimensions, vocabulary, style registry and the
/// frozen text featurizer. Splitting this from the parameter store lets the
/// finite-difference harness perturb parameters while the loss closure
/// borrows the architecture.
#[derive(Debug, Clone)]
pub struct DlnArch {
    pub hidden: usize,
    pub embed: usize,
    pub feature_dim: usize,
    pub text_feature_dim: usize,
    pub max_len: usize,
    pub ln_eps: f64,
    pub base_vocab: Vocabulary,
    pub styles: Vec<StyleEntry>,
    pub text_extractor: FrozenFeatureExtractor,
}

impl DlnArch {
    pub fn style_index(&self, name: &str) -> Result<usize> {
        self.styles
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| DlnError::UnknownStyle {
                style: name.to_string(),
                known: self.styles.iter().map(|s| s.name.clone()).collect(),
            })
    }

    pub fn style_names(&self) -> Vec<String> {
        self.styles.iter().map(|s| s.name.clone()).collect()
    }

    /// Vocabulary size seen by a style: base plus its extension rows.
    pub fn vocab_size(&self, style: usize) -> usize {
        self.base_vocab.len() + self.styles[style].ext_tokens.len()
    }

    pub fn encode_token(&self, style: usize, token: &str) -> TokenId {
        if let Some(id) = self.base_vocab.id(token) {
            return id;
        }
        if let Some(&i) = self.styles[style].ext_index.get(token) {
            return self.base_vocab.len() + i;
        }
        crate::vocab::UNK
    }

    pub fn token(&self, style: usize, id: TokenId) -> Result<&str> {
        let base_len = self.base_vocab.len();
        if id < base_len {
            self.base_vocab.token(id)
        } else {
            self.styles[style]
                .ext_tokens
                .get(id - base_len)
                .map(|s| s.as_str())
                .ok_or(DlnError::Index {
                    index: id,
                    len: self.vocab_size(style),
                })
        }
    }

    /// Teacher-forcing targets: encoded tokens with EOS appended.
    pub fn targets(&self, style: usize, tokens: &[String]) -> Result<Vec<TokenId>> {
        if tokens.len() > self.max_len {
            return Err(DlnError::Argument(format!(
                "sequence of {} tokens exceeds max_len {}",
                tokens.len(),
                self.max_len
            )));
        }
        let mut out: Vec<TokenId> = tokens
            .iter()
            .map(|t| self.encode_token(style, t))
            .collect();
        out.push(EOS);
        Ok(out)
    }
}

// ── parameter names ─────────────────────────────────────────────────

pub fn ln_param_name(style: &str, gate: &str, which: &str) -> String {
    format!("ln.{style}.{gate}.{which}")
}

fn text_proj_name(style: &str) -> String {
    format!("proj.text.{style}")
}

fn ext_embed_name(style: &str) -> String {
    format!("embedding.ext.{style}")
}

fn ext_output_name(style: &str) -> String {
    format!("output.ext.{style}")
}

pub const EMBEDDING: &str = "embedding";
pub const OUTPUT: &str = "output";
pub const IMAGE_PROJ: &str = "proj.image";

pub fn lstm_weight_names() -> Vec<String> {
    let mut out = Vec::new();
    for gate in GATE_KEYS {
        out.push(format!("lstm.{gate}.ie"));
        out.push(format!("lstm.{gate}.ih"));
    }
    out
}

pub fn ln_param_names(style: &str) -> Vec<String> {
    let mut out = Vec::new();
    for gate in GATE_KEYS {
        out.push(ln_param_name(style, gate, "g"));
        out.push(ln_param_name(style, gate, "b"));
    }
    out
}

// ── prepared training examples ──────────────────────────────────────

/// Paired example: image features plus teacher-forcing targets.
#[derive(Debug, Clone)]
pub struct PreparedSource<T: Scalar> {
    pub features: Vec<T>,
    pub targets: Vec<TokenId>,
}

/// Unpaired stylish sentence: cached frozen text features plus targets.
#[derive(Debug, Clone)]
pub struct PreparedTarget<T: Scalar> {
    pub text_features: Vec<T>,
    pub targets: Vec<TokenId>,
}

pub struct DLNModel<T: Scalar> {
    arch: DlnArch,
    params: ParamStore<T>,
}

impl<T: Scalar> DLNModel<T> {
    /// Fresh model over a merged base vocabulary with the source domain and
    /// one target style registered.
    pub fn new(cfg: &ModelConfig, base_vocab: Vocabulary, target_style: &str) -> Result<Self> {
        if target_style == SOURCE_STYLE {
            return Err(DlnError::Argument("target style cannot be named `source`".into()));
        }
        let arch = DlnArch {
            hidden: cfg.hidden,
            embed: cfg.embed,
            feature_dim: cfg.feature_dim,
            text_feature_dim: cfg.text_feature_dim,
            max_len: cfg.max_len,
            ln_eps: cfg.ln_eps,
            base_vocab,
            styles: vec![
                StyleEntry::new(SOURCE_STYLE, Vec::new(), false),
                StyleEntry::new(target_style, Vec::new(), true),
            ],
            text_extractor: FrozenFeatureExtractor::text(cfg.text_feature_dim, cfg.seed ^ 0x7e47),
        };
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let v = arch.base_vocab.len();
        let (h, e) = (arch.hidden, arch.embed);
        let r = cfg.init_range;
        params.register(EMBEDDING, uniform_init_with(vec![v, e], r, &mut rng)?, true)?;
        params.register(OUTPUT, uniform_init_with(vec![h, v], r, &mut rng)?, true)?;
        for gate in GATE_KEYS {
            params.register(
                &format!("lstm.{gate}.ie"),
                uniform_init_with(vec![h, e], r, &mut rng)?,
                true,
            )?;
            params.register(
                &format!("lstm.{gate}.ih"),
                uniform_init_with(vec![h, h], r, &mut rng)?,
                true,
            )?;
        }
        for style in [SOURCE_STYLE, target_style] {
            register_ln_params(&mut params, style, h)?;
        }
        params.register(
            IMAGE_PROJ,
            uniform_init_with(vec![e, cfg.feature_dim], r, &mut rng)?,
            true,
        )?;
        params.register(
            &text_proj_name(target_style),
            uniform_init_with(vec![e, cfg.text_feature_dim], r, &mut rng)?,
            true,
        )?;
        Ok(DLNModel { arch, params })
    }

    pub fn from_parts(arch: DlnArch, params: ParamStore<T>) -> Result<Self> {
        let model = DLNModel { arch, params };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let arch = &self.arch;
        let mut expect = vec![
            (EMBEDDING.to_string(), vec![arch.base_vocab.len(), arch.embed]),
            (OUTPUT.to_string(), vec![arch.hidden, arch.base_vocab.len()]),
            (IMAGE_PROJ.to_string(), vec![arch.embed, arch.feature_dim]),
        ];
        for gate in GATE_KEYS {
            expect.push((format!("lstm.{gate}.ie"), vec![arch.hidden, arch.embed]));
            expect.push((format!("lstm.{gate}.ih"), vec![arch.hidden, arch.hidden]));
        }
        for style in &arch.styles {
            for name in ln_param_names(&style.name) {
                expect.push((name, vec![arch.hidden]));
            }
            if style.has_text_proj {
                expect.push((
                    text_proj_name(&style.name),
                    vec![arch.embed, arch.text_feature_dim],
                ));
            }
            if !style.ext_tokens.is_empty() {
                expect.push((
                    ext_embed_name(&style.name),
                    vec![style.ext_tokens.len(), arch.embed],
                ));
                expect.push((
                    ext_output_name(&style.name),
                    vec![arch.hidden, style.ext_tokens.len()],
                ));
            }
        }
        for (name, shape) in expect {
            let tensor = self.params.tensor(&name).map_err(|_| {
                DlnError::State(format!("checkpoint is missing parameter `{name}`"))
            })?;
            if tensor.shape() != shape.as_slice() {
                return Err(DlnError::Shape {
                    op: "model load",
                    lhs: shape,
                    rhs: tensor.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn arch(&self) -> &DlnArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Architecture reference plus mutable parameter store, for the
    /// finite-difference harness.
    pub fn split_mut(&mut self) -> (&DlnArch, &mut ParamStore<T>) {
        (&self.arch, &mut self.params)
    }

    pub fn style_index(&self, name: &str) -> Result<usize> {
        self.arch.style_index(name)
    }

    // ── encoders ────────────────────────────────────────────────────

    /// z = P_image · features. Only the projection is trainable.
    pub fn encode_image(&self, features: &[T]) -> Result<Vec<T>> {
        encode_image(&self.arch, &self.params, features)
    }

    /// z = P_text[style] · frozen_text_features(tokens).
    pub fn encode_target(&self, style: &str, tokens: &[String]) -> Result<Vec<T>> {
        let idx = self.arch.style_index(style)?;
        let feats: Vec<T> = self.arch.text_extractor.text_features(tokens)?;
        encode_text(&self.arch, &self.params, idx, &feats)
    }

    pub fn prepare_source(&self, features: &[f64], tokens: &[String]) -> Result<PreparedSource<T>> {
        if features.len() != self.arch.feature_dim {
            return Err(DlnError::Shape {
                op: "prepare_source",
                lhs: vec![self.arch.feature_dim],
                rhs: vec![features.len()],
            });
        }
        let source = self.arch.style_index(SOURCE_STYLE)?;
        Ok(PreparedSource {
            features: features.iter().map(|&v| T::from_f64(v)).collect(),
            targets: self.arch.targets(source, tokens)?,
        })
    }

    pub fn prepare_target(&self, style: &str, tokens: &[String]) -> Result<PreparedTarget<T>> {
        let idx = self.arch.style_index(style)?;
        if !self.arch.styles[idx].has_text_proj {
            return Err(DlnError::Argument(format!(
                "style `{style}` has no text encoder"
            )));
        }
        Ok(PreparedTarget {
            text_features: self.arch.text_extractor.text_features(tokens)?,
            targets: self.arch.targets(idx, tokens)?,
        })
    }

    // ── losses ──────────────────────────────────────────────────────

    /// Teacher-forced source loss over one paired example.
    pub fn forward_source(&self, features: &[T], targets: &[TokenId]) -> Result<T> {
        let source = self.arch.style_index(SOURCE_STYLE)?;
        let z = encode_image(&self.arch, &self.params, features)?;
        Ok(decoder_forward(&self.arch, &self.params, source, &z, targets)?.loss)
    }

    /// Teacher-forced reconstruction loss of one stylish sentence.
    pub fn forward_target_reconstruction(&self, style: &str, tokens: &[String]) -> Result<T> {
        let idx = self.arch.style_index(style)?;
        let prepared = self.prepare_target(style, tokens)?;
        let z = encode_text(&self.arch, &self.params, idx, &prepared.text_features)?;
        Ok(decoder_forward(&self.arch, &self.params, idx, &z, &prepared.targets)?.loss)
    }

    /// λ·mean(L_S) + (1−λ)·mean(L_T) without touching gradients.
    pub fn joint_loss(
        &self,
        batch_s: &[PreparedSource<T>],
        batch_t: &[PreparedTarget<T>],
        target_style: &str,
        lambda: f64,
    ) -> Result<JointLoss<T>> {
        let style = self.arch.style_index(target_style)?;
        joint_loss(&self.arch, &self.params, batch_s, batch_t, style, lambda)
    }

    /// Zeroes gradients, then accumulates the exact gradient of
    /// λ·mean(L_S) + (1−λ)·mean(L_T). A coefficient of exactly zero skips
    /// that branch entirely, so the untouched domain's gradients stay zero.
    pub fn joint_backward(
        &mut self,
        batch_s: &[PreparedSource<T>],
        batch_t: &[PreparedTarget<T>],
        target_style: &str,
        lambda: f64,
    ) -> Result<JointLoss<T>> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(DlnError::Config(format!("lambda must be in [0,1], got {lambda}")));
        }
        if batch_s.is_empty() || batch_t.is_empty() {
            return Err(DlnError::Argument("both batches must be non-empty".into()));
        }
        let style = self.arch.style_index(target_style)?;
        let source = self.arch.style_index(SOURCE_STYLE)?;
        self.params.ensure_grads();
        self.params.zero_grads();

        let mut loss_s = T::zero();
        let weight_s = lambda / batch_s.len() as f64;
        for example in batch_s {
            let z = encode_image(&self.arch, &self.params, &example.features)?;
            let run = decoder_forward(&self.arch, &self.params, source, &z, &example.targets)?;
            loss_s = loss_s + run.loss;
            if lambda > 0.0 {
                decoder_backward(
                    &self.arch,
                    &mut self.params,
                    source,
                    &run,
                    LatentSource::Image(&example.features),
                    T::from_f64(weight_s),
                )?;
            }
        }
        let mut loss_t = T::zero();
        let weight_t = (1.0 - lambda) / batch_t.len() as f64;
        for example in batch_t {
            let z = encode_text(&self.arch, &self.params, style, &example.text_features)?;
            let run = decoder_forward(&self.arch, &self.params, style, &z, &example.targets)?;
            loss_t = loss_t + run.loss;
            if lambda < 1.0 {
                decoder_backward(
                    &self.arch,
                    &mut self.params,
                    style,
                    &run,
                    LatentSource::Text(style, &example.text_features),
                    T::from_f64(weight_t),
                )?;
            }
        }
        let mean_s = loss_s / T::from_f64(batch_s.len() as f64);
        let mean_t = loss_t / T::from_f64(batch_t.len() as f64);
        Ok(JointLoss {
            source: mean_s,
            target: mean_t,
            total: T::from_f64(lambda) * mean_s + T::from_f64(1.0 - lambda) * mean_t,
        })
    }

    // ── extension ───────────────────────────────────────────────────

    /// Registers a new style: fresh LN set (g=1, b=0), fresh text
    /// projection, and embedding/output extension rows for `ext_tokens`.
    /// Existing parameters are untouched.
    pub fn register_style_extension(
        &mut self,
        name: &str,
        ext_tokens: Vec<String>,
        init_range: f64,
        seed: u64,
    ) -> Result<()> {
        if self.arch.styles.iter().any(|s| s.name == name) {
            return Err(DlnError::Argument(format!("style `{name}` already registered")));
        }
        for token in &ext_tokens {
            if self.arch.base_vocab.contains(token) {
                return Err(DlnError::Vocab(format!(
                    "extension token `{token}` already in the base vocabulary"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        register_ln_params(&mut self.params, name, self.arch.hidden)?;
        self.params.register(
            &text_proj_name(name),
            uniform_init_with(
                vec![self.arch.embed, self.arch.text_feature_dim],
                init_range,
                &mut rng,
            )?,
            true,
        )?;
        if !ext_tokens.is_empty() {
            self.params.register(
                &ext_embed_name(name),
                uniform_init_with(vec![ext_tokens.len(), self.arch.embed], init_range, &mut rng)?,
                true,
            )?;
            self.params.register(
                &ext_output_name(name),
                uniform_init_with(vec![self.arch.hidden, ext_tokens.len()], init_range, &mut rng)?,
                true,
            )?;
        }
        self.arch.styles.push(StyleEntry::new(name, ext_tokens, true));
        Ok(())
    }

    /// Snapshot of the anchored weights taken when an extension starts.
    pub fn capture_anchors(&self) -> Result<ExtensionAnchors<T>> {
        Ok(ExtensionAnchors {
            embedding: self.params.values(EMBEDDING)?.to_vec(),
            output: self.params.values(OUTPUT)?.to_vec(),
            image_proj: self.params.values(IMAGE_PROJ)?.to_vec(),
        })
    }

    /// R = ‖P_image − anchor‖₂ + ‖W_embed − anchor‖₂ + ‖W_out − anchor‖₂.
    /// Extension rows live in separate tensors, so only the pretrained
    /// (overlapping) block enters each difference.
    pub fn regularizer(&self, anchors: &ExtensionAnchors<T>) -> Result<T> {
        Ok(regularizer_terms(&self.params, anchors)?
            .iter()
            .fold(T::zero(), |acc, (_, norm)| acc + *norm))
    }

    /// Accumulates `weight · dR/dθ` into the anchored parameters' gradients
    /// and returns R.
    pub fn regularizer_backward(
        &mut self,
        anchors: &ExtensionAnchors<T>,
        weight: f64,
    ) -> Result<T> {
        let terms = regularizer_terms(&self.params, anchors)?;
        let mut total = T::zero();
        let w = T::from_f64(weight);
        let tiny = T::from_f64(1e-12);
        for (name, norm) in &terms {
            total = total + *norm;
            if *norm <= tiny {
                continue;
            }
            let anchor = match *name {
                EMBEDDING => &anchors.embedding,
                OUTPUT => &anchors.output,
                _ => &anchors.image_proj,
            };
            let current = self.params.values(name)?.to_vec();
            let scale = w / *norm;
            let delta: Vec<T> = current
                .iter()
                .zip(anchor.iter())
                .map(|(c, a)| (*c - *a) * scale)
                .collect();
            self.params.accumulate_grad(name, &delta, T::one())?;
        }
        Ok(total)
    }

    /// Freezes everything a new-style extension must not touch: the source
    /// LN set and all previously registered target styles' private
    /// parameters.
    pub fn freeze_for_extension(&mut self, new_style: &str) -> Result<()> {
        let styles: Vec<(String, bool, bool)> = self
            .arch
            .styles
            .iter()
            .map(|s| (s.name.clone(), s.has_text_proj, s.ext_tokens.is_empty()))
            .collect();
        for (name, has_text_proj, ext_empty) in styles {
            if name == new_style {
                continue;
            }
            for ln_name in ln_param_names(&name) {
                self.params.set_trainable(&ln_name, false)?;
            }
            if has_text_proj {
                self.params.set_trainable(&text_proj_name(&name), false)?;
                if !ext_empty {
                    self.params.set_trainable(&ext_embed_name(&name), false)?;
                    self.params.set_trainable(&ext_output_name(&name), false)?;
                }
            }
        }
        Ok(())
    }

    // ── persistence ─────────────────────────────────────────────────

    /// Writes `model.ckpt`, `model.manifest` and the vocabulary files under
    /// `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        checkpoint::save_store(&self.params, &dir.join("model.ckpt"))?;
        let mut base_vocab_text = String::new();
        for token in self.arch.base_vocab.content_tokens() {
            base_vocab_text.push_str(token);
            base_vocab_text.push('\n');
        }
        std::fs::write(dir.join("vocab.base.txt"), base_vocab_text)?;

        let mut kv = KeyValueFile::new();
        kv.push("format", "dln-model-v1");
        kv.push("hidden", self.arch.hidden);
        kv.push("embed", self.arch.embed);
        kv.push("feature_dim", self.arch.feature_dim);
        kv.push("text_feature_dim", self.arch.text_feature_dim);
        kv.push("max_len", self.arch.max_len);
        kv.push("ln_eps", self.arch.ln_eps);
        kv.push("text_extractor_seed", self.arch.text_extractor.seed);
        kv.push("base_vocab", "vocab.base.txt");
        for style in &self.arch.styles {
            kv.push("style", &style.name);
            kv.push(
                &format!("style.{}.ln_prefix", style.name),
                format!("ln.{}", style.name),
            );
            kv.push(
                &format!("style.{}.text_proj", style.name),
                if style.has_text_proj { "1" } else { "0" },
            );
            if !style.ext_tokens.is_empty() {
                let file = format!("vocab.ext.{}.txt", style.name);
                let mut text = String::new();
                for token in &style.ext_tokens {
                    text.push_str(token);
                    text.push('\n');
                }
                std::fs::write(dir.join(&file), text)?;
                kv.push(&format!("style.{}.vocab", style.name), file);
            }
        }
        kv.save(&dir.join("model.manifest"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("model.manifest");
        let kv = KeyValueFile::load(&manifest_path)?;
        let origin = manifest_path.display().to_string();
        let parse_usize = |key: &str| -> Result<usize> {
            kv.require(key, &origin)?
                .parse()
                .map_err(|e| DlnError::Format {
                    path: origin.clone(),
                    line: 0,
                    msg: format!("{key}: {e}"),
                })
        };
        let hidden = parse_usize("hidden")?;
        let embed = parse_usize("embed")?;
        let feature_dim = parse_usize("feature_dim")?;
        let text_feature_dim = parse_usize("text_feature_dim")?;
        let max_len = parse_usize("max_len")?;
        let ln_eps: f64 =
            kv.require("ln_eps", &origin)?
                .parse()
                .map_err(|e| DlnError::Format {
                    path: origin.clone(),
                    line: 0,
                    msg: format!("ln_eps: {e}"),
                })?;
        let extractor_seed: u64 = kv
            .require("text_extractor_seed", &origin)?
            .parse()
            .unwrap_or(0);
        let vocab_file = kv.require("base_vocab", &origin)?;
        let vocab_text = std::fs::read_to_string(dir.join(vocab_file))?;
        let base_vocab = Vocabulary::from_content_tokens(
            vocab_text
                .lines()
                .filter(|l| !l.is_empty())
                .map(|l| l.to_string()),
        )?;
        let mut styles = Vec::new();
        for name in kv.get_all("style") {
            let has_text_proj = kv.get(&format!("style.{name}.text_proj")).unwrap_or("0") == "1";
            let ext_tokens = match kv.get(&format!("style.{name}.vocab")) {
                Some(file) => std::fs::read_to_string(dir.join(file))?
                    .lines()
                    .filter(|l| !l.is_empty())
                    .map(|l| l.to_string())
                    .collect(),
                None => Vec::new(),
            };
            styles.push(StyleEntry::new(name, ext_tokens, has_text_proj));
        }
        let arch = DlnArch {
            hidden,
            embed,
            feature_dim,
            text_feature_dim,
            max_len,
            ln_eps,
            base_vocab,
            styles,
            text_extractor: FrozenFeatureExtractor::text(text_feature_dim, extractor_seed),
        };
        let params = checkpoint::load_store(&dir.join("model.ckpt"))?;
        DLNModel::from_parts(arch, params)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JointLoss<T: Scalar> {
    pub source: T,
    pub target: T,
    pub total: T,
}

#[derive(Debug, Clone)]
pub struct ExtensionAnchors<T: Scalar> {
    pub embedding: Vec<T>,
    pub output: Vec<T>,
    pub image_proj: Vec<T>,
}

fn regularizer_terms<T: Scalar>(
    params: &ParamStore<T>,
    anchors: &ExtensionAnchors<T>,
) -> Result<Vec<(&'static str, T)>> {
    let mut out = Vec::with_capacity(3);
    for (name, anchor) in [
        (IMAGE_PROJ, &anchors.image_proj),
        (EMBEDDING, &anchors.embedding),
        (OUTPUT, &anchors.output),
    ] {
        let current = params.values(name)?;
        if current.len() != anchor.len() {
            return Err(DlnError::State(format!(
                "anchor for `{name}` has {} values but the parameter has {}",
                anchor.len(),
                current.len()
            )));
        }
        let sq = current
            .iter()
            .zip(anchor.iter())
            .fold(T::zero(), |acc, (c, a)| acc + (*c - *a) * (*c - *a));
        out.push((name, sq.sqrt()));
    }
    Ok(out)
}

fn register_ln_params<T: Scalar>(
    params: &mut ParamStore<T>,
    style: &str,
    hidden: usize,
) -> Result<()> {
    for gate in GATE_KEYS {
        params.register(
            &ln_param_name(style, gate, "g"),
            Tensor::filled(vec![hidden], T::one()),
            true,
        )?;
        params.register(
            &ln_param_name(style, gate, "b"),
            Tensor::zeros(vec![hidden]),
            true,
        )?;
    }
    Ok(())
}

// ── shared-weight views ─────────────────────────────────────────────

pub fn lstm_view<'a, T: Scalar>(
    arch: &DlnArch,
    params: &'a ParamStore<T>,
) -> Result<LstmWeightsView<'a, T>> {
    Ok(LstmWeightsView {
        ie: [
            params.values("lstm.i.ie")?,
            params.values("lstm.f.ie")?,
            params.values("lstm.o.ie")?,
            params.values("lstm.u.ie")?,
        ],
        ih: [
            params.values("lstm.i.ih")?,
            params.values("lstm.f.ih")?,
            params.values("lstm.o.ih")?,
            params.values("lstm.u.ih")?,
        ],
        input_dim: arch.embed,
        hidden: arch.hidden,
    })
}

pub fn ln_view<'a, T: Scalar>(
    params: &'a ParamStore<T>,
    style: &str,
) -> Result<LnParamsView<'a, T>> {
    Ok(LnParamsView {
        gain: [
            params.values(&ln_param_name(style, "i", "g"))?,
            params.values(&ln_param_name(style, "f", "g"))?,
            params.values(&ln_param_name(style, "o", "g"))?,
            params.values(&ln_param_name(style, "u", "g"))?,
        ],
        shift: [
            params.values(&ln_param_name(style, "i", "b"))?,
            params.values(&ln_param_name(style, "f", "b"))?,
            params.values(&ln_param_name(style, "o", "b"))?,
            params.values(&ln_param_name(style, "u", "b"))?,
        ],
    })
}

// ── encoders ────────────────────────────────────────────────────────

pub fn encode_image<T: Scalar>(
    arch: &DlnArch,
    params: &ParamStore<T>,
    features: &[T],
) -> Result<Vec<T>> {
    if features.len() != arch.feature_dim {
        return Err(DlnError::Shape {
            op: "encode_image",
            lhs: vec![arch.feature_dim],
            rhs: vec![features.len()],
        });
    }
    let proj = params.values(IMAGE_PROJ)?;
    let mut z = vec![T::zero(); arch.embed];
    matvec(proj, arch.embed, arch.feature_dim, features, &mut z);
    Ok(z)
}

pub fn encode_text<T: Scalar>(
    arch: &DlnArch,
    params: &ParamStore<T>,
    style: usize,
    text_features: &[T],
) -> Result<Vec<T>> {
    if text_features.len() != arch.text_feature_dim {
        return Err(DlnError::Shape {
            op: "encode_text",
            lhs: vec![arch.text_feature_dim],
            rhs: vec![text_features.len()],
        });
    }
    let proj = params.values(&text_proj_name(&arch.styles[style].name))?;
    let mut z = vec![T::zero(); arch.embed];
    matvec(proj, arch.embed, arch.text_feature_dim, text_features, &mut z);
    Ok(z)
}

// ── decoder forward/backward ────────────────────────────────────────

/// Everything the backward pass needs from one teacher-forced run.
pub struct DecoderRun<T: Scalar> {
    pub loss: T,
    traj: Trajectory<T>,
    /// Cross-entropy logit gradients per scored step.
    dlogits: Vec<Vec<T>>,
    /// Token fed at input position k ≥ 1 (position 0 is the latent code).
    fed_tokens: Vec<TokenId>,
}

fn embed_lookup<'a, T: Scalar>(
    arch: &DlnArch,
    embedding: &'a [T],
    ext: Option<&'a [T]>,
    id: TokenId,
) -> Result<&'a [T]> {
    let e = arch.embed;
    let base_len = arch.base_vocab.len();
    if id < base_len {
        Ok(&embedding[id * e..(id + 1) * e])
    } else {
        let ext = ext.ok_or(DlnError::Index {
            index: id,
            len: base_len,
        })?;
        let row = id - base_len;
        if (row + 1) * e > ext.len() {
            return Err(DlnError::Index {
                index: id,
                len: base_len + ext.len() / e,
            });
        }
        Ok(&ext[row * e..(row + 1) * e])
    }
}

/// Logits for one hidden state: base output columns plus the style's
/// extension columns.
pub fn logits_for<T: Scalar>(
    arch: &DlnArch,
    output: &[T],
    ext_output: Option<&[T]>,
    h: &[T],
) -> Vec<T> {
    let base_len = arch.base_vocab.len();
    let ext_len = ext_output.map_or(0, |e| e.len() / arch.hidden);
    let mut logits = vec![T::zero(); base_len + ext_len];
    matvec_t_acc(output, arch.hidden, base_len, h, &mut logits[..base_len]);
    if let Some(ext) = ext_output {
        matvec_t_acc(ext, arch.hidden, ext_len, h, &mut logits[base_len..]);
    }
    logits
}

/// Teacher-forced decode: position 0 consumes the latent code, position 1
/// consumes BOS, later positions consume the previous target token; the
/// hidden state produced at position k ≥ 1 scores target k−1.
pub fn decoder_forward<T: Scalar>(
    arch: &DlnArch,
    params: &ParamStore<T>,
    style: usize,
    z: &[T],
    targets: &[TokenId],
) -> Result<DecoderRun<T>> {
    if targets.is_empty() {
        return Err(DlnError::Argument("decoder needs at least one target".into()));
    }
    if z.len() != arch.embed {
        return Err(DlnError::Shape {
            op: "decoder_forward latent",
            lhs: vec![arch.embed],
            rhs: vec![z.len()],
        });
    }
    let vocab_size = arch.vocab_size(style);
    for &t in targets {
        if t >= vocab_size {
            return Err(DlnError::Vocab(format!(
                "target id {t} outside style vocabulary of {vocab_size}"
            )));
        }
    }
    let style_name = &arch.styles[style].name;
    let has_ext = !arch.styles[style].ext_tokens.is_empty();
    let embedding = params.values(EMBEDDING)?;
    let ext_embed = if has_ext {
        Some(params.values(&ext_embed_name(style_name))?)
    } else {
        None
    };
    let output = params.values(OUTPUT)?;
    let ext_output = if has_ext {
        Some(params.values(&ext_output_name(style_name))?)
    } else {
        None
    };

    let mut fed_tokens = Vec::with_capacity(targets.len());
    fed_tokens.push(BOS);
    fed_tokens.extend_from_slice(&targets[..targets.len() - 1]);

    let mut inputs: Vec<Vec<T>> = Vec::with_capacity(targets.len() + 1);
    inputs.push(z.to_vec());
    for &tok in &fed_tokens {
        inputs.push(embed_lookup(arch, embedding, ext_embed, tok)?.to_vec());
    }

    let weights = lstm_view(arch, params)?;
    let ln = ln_view(params, style_name)?;
    let traj = run_sequence(
        &inputs,
        &CellState::zeros(arch.hidden),
        &weights,
        &ln,
        arch.ln_eps,
    )?;

    let mut loss = T::zero();
    let mut dlogits = Vec::with_capacity(targets.len());
    for (k, &target) in targets.iter().enumerate() {
        let h = traj.hidden(k + 1);
        let logits = logits_for(arch, output, ext_output, h);
        let (step_loss, grad) = softmax_cross_entropy(&logits, target)?;
        loss = loss + step_loss;
        dlogits.push(grad);
    }
    Ok(DecoderRun {
        loss,
        traj,
        dlogits,
        fed_tokens,
    })
}

/// Where the latent code came from, for routing its gradient.
pub enum LatentSource<'a, T: Scalar> {
    Image(&'a [T]),
    Text(usize, &'a [T]),
}

/// Accumulates `weight · d(run.loss)/dθ` into the store's gradients.
pub fn decoder_backward<T: Scalar>(
    arch: &DlnArch,
    params: &mut ParamStore<T>,
    style: usize,
    run: &DecoderRun<T>,
    latent: LatentSource<'_, T>,
    weight: T,
) -> Result<()> {
    let hidden = arch.hidden;
    let base_len = arch.base_vocab.len();
    let ext_len = arch.styles[style].ext_tokens.len();
    let style_name = arch.styles[style].name.clone();

    let mut d_output = vec![T::zero(); hidden * base_len];
    let mut d_ext_output = vec![T::zero(); hidden * ext_len];
    let mut grad_h: Vec<Vec<T>> = vec![vec![T::zero(); hidden]; run.traj.len()];

    let lstm_grads = {
        let output = params.values(OUTPUT)?;
        let ext_output = if ext_len == 0 {
            None
        } else {
            Some(params.values(&ext_output_name(&style_name))?)
        };
        for (k, dl) in run.dlogits.iter().enumerate() {
            let h = run.traj.hidden(k + 1);
            let (dl_base, dl_ext) = dl.split_at(base_len);
            outer_acc(h, dl_base, &mut d_output);
            matvec(output, hidden, base_len, dl_base, &mut grad_h[k + 1]);
            if let Some(ext) = ext_output {
                outer_acc(h, dl_ext, &mut d_ext_output);
                let mut extra = vec![T::zero(); hidden];
                matvec(ext, hidden, ext_len, dl_ext, &mut extra);
                for (g, x) in grad_h[k + 1].iter_mut().zip(extra.iter()) {
                    *g = *g + *x;
                }
            }
        }
        let weights = lstm_view(arch, params)?;
        let ln = ln_view(params, &style_name)?;
        lnlstm_backward(&run.traj, &weights, &ln, &grad_h, &vec![T::zero(); hidden])?
    };

    params.accumulate_grad(OUTPUT, &d_output, weight)?;
    if ext_len > 0 {
        params.accumulate_grad(&ext_output_name(&style_name), &d_ext_output, weight)?;
    }
    for (g, gate) in GATE_KEYS.iter().enumerate() {
        params.accumulate_grad(&format!("lstm.{gate}.ie"), &lstm_grads.d_ie[g], weight)?;
        params.accumulate_grad(&format!("lstm.{gate}.ih"), &lstm_grads.d_ih[g], weight)?;
        params.accumulate_grad(
            &ln_param_name(&style_name, gate, "g"),
            &lstm_grads.d_gain[g],
            weight,
        )?;
        params.accumulate_grad(
            &ln_param_name(&style_name, gate, "b"),
            &lstm_grads.d_shift[g],
            weight,
        )?;
    }

    // token embeddings: input position k ≥ 1 fed token fed_tokens[k−1]
    let embed = arch.embed;
    let mut d_embedding = vec![T::zero(); base_len * embed];
    let mut d_ext_embedding = vec![T::zero(); ext_len * embed];
    for (k, &tok) in run.fed_tokens.iter().enumerate() {
        let d_in = &lstm_grads.d_inputs[k + 1];
        let buf = if tok < base_len {
            &mut d_embedding[tok * embed..(tok + 1) * embed]
        } else {
            let row = tok - base_len;
            &mut d_ext_embedding[row * embed..(row + 1) * embed]
        };
        for (b, d) in buf.iter_mut().zip(d_in.iter()) {
            *b = *b + *d;
        }
    }
    params.accumulate_grad(EMBEDDING, &d_embedding, weight)?;
    if ext_len > 0 {
        params.accumulate_grad(&ext_embed_name(&style_name), &d_ext_embedding, weight)?;
    }

    // latent code: position 0
    let dz = &lstm_grads.d_inputs[0];
    match latent {
        LatentSource::Image(features) => {
            let mut d_proj = vec![T::zero(); embed * arch.feature_dim];
            outer_acc(dz, features, &mut d_proj);
            params.accumulate_grad(IMAGE_PROJ, &d_proj, weight)?;
        }
        LatentSource::Text(text_style, features) => {
            let name = text_proj_name(&arch.styles[text_style].name);
            let mut d_proj = vec![T::zero(); embed * arch.text_feature_dim];
            outer_acc(dz, features, &mut d_proj);
            params.accumulate_grad(&name, &d_proj, weight)?;
        }
    }
    Ok(())
}

/// Loss-only evaluation of the joint objective, shared by training and the
/// gradient checker.
pub fn joint_loss<T: Scalar>(
    arch: &DlnArch,
    params: &ParamStore<T>,
    batch_s: &[PreparedSource<T>],
    batch_t: &[PreparedTarget<T>],
    target_style: usize,
    lambda: f64,
) -> Result<JointLoss<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DlnError::Config(format!("lambda must be in [0,1], got {lambda}")));
    }
    if batch_s.is_empty() || batch_t.is_empty() {
        return Err(DlnError::Argument("both batches must be non-empty".into()));
    }
    let source = arch.style_index(SOURCE_STYLE)?;
    let mut loss_s = T::zero();
    for example in batch_s {
        let z = encode_image(arch, params, &example.features)?;
        loss_s = loss_s + decoder_forward(arch, params, source, &z, &example.targets)?.loss;
    }
    let mut loss_t = T::zero();
    for example in batch_t {
        let z = encode_text(arch, params, target_style, &example.text_features)?;
        loss_t = loss_t + decoder_forward(arch, params, target_style, &z, &example.targets)?.loss;
    }
    let mean_s = loss_s / T::from_f64(batch_s.len() as f64);
    let mean_t = loss_t / T::from_f64(batch_t.len() as f64);
    Ok(JointLoss {
        source: mean_s,
        target: mean_t,
        total: T::from_f64(lambda) * mean_s + T::from_f64(1.0 - lambda) * mean_t,
    })
}
