//! Deterministic synthetic scene/style data generator.
//!
//! Scenes are small sets of nouns plus sampled adjectives. The source
//! corpus renders scenes through neutral templates and pairs each
//! description with a feature vector built from fixed per-token embeddings
//! plus Gaussian noise. Each style corpus renders different scenes through
//! its own templates, which carry style-marker tokens. Synonym variants
//! share the canonical noun's feature embedding, so the same "image" can be
//! described with either word.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{save_corpus, save_features, DatasetManifest, KeyValueFile};
use crate::error::{DlnError, Result};

pub const MAX_SCENE_NOUNS: usize = 4;
pub const MAX_DESC_LEN: usize = 100;

#[derive(Debug, Clone)]
pub struct StyleSpec {
    pub name: String,
    pub markers: Vec<String>,
    pub templates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub feature_dim: usize,
    pub noise_scale: f64,
    pub train_pairs: usize,
    pub style_sentences: usize,
    pub test_items: usize,
    /// Probability of swapping a scene noun for its synonym variant.
    pub synonym_swap: f64,
    pub nouns: Vec<String>,
    pub synonyms: Vec<(String, String)>,
    pub adjectives: Vec<String>,
    pub neutral_templates: Vec<String>,
    pub styles: Vec<StyleSpec>,
}

impl SyntheticSceneSpec {
    pub fn default_spec() -> Self {
        let nouns = [
            "river", "mountain", "dog", "cat", "tree", "house", "bird", "road", "field",
            "cloud", "boat", "garden", "horse", "lamp", "bridge", "stone", "flower", "window",
            "meadow", "star", "moon", "valley", "forest", "lake",
        ];
        let adjectives = [
            "red", "small", "bright", "quiet", "golden", "green", "tall", "cold", "lonely",
            "wild", "soft", "pale",
        ];
        let neutral_templates = [
            "there is a {adj} {noun} .",
            "a {adj} {noun} stands in the scene .",
            "a {adj} {noun} is near a {noun} .",
            "the {noun} and the {adj} {noun} are close together .",
            "a {noun} , a {noun} and a {adj} {noun} are visible .",
            "the {adj} {noun} sits between the {noun} and the {noun} .",
            "a {noun} , a {noun} , a {noun} and a {adj} {noun} fill the scene .",
            "the {noun} and the {noun} stand near the {adj} {noun} and the {noun} .",
        ];
        let lyric = StyleSpec {
            name: "lyric".into(),
            markers: vec!["oh".into(), "babe".into(), "yeah".into()],
            templates: vec![
                "oh the {adj} {noun} shines on me ;".into(),
                "yeah my {noun} keeps me singing babe ;".into(),
                "oh the {noun} and the {noun} ; singing all night babe ;".into(),
                "yeah the {adj} {noun} meets the {noun} ; oh my love ;".into(),
                "oh my {noun} ; the {noun} and the {adj} {noun} call me home ;".into(),
                "oh {noun} and {noun} ; babe the {noun} knows the {noun} tonight ;".into(),
            ],
        };
        let tale = StyleSpec {
            name: "tale".into(),
            markers: vec!["once".into(), "kingdom".into(), "enchanted".into(), "magic".into()],
            templates: vec![
                "once upon a time an enchanted {noun} guarded the kingdom .".into(),
                "once a {adj} {noun} held the magic of the kingdom .".into(),
                "once a {adj} {noun} met a magic {noun} in the far kingdom .".into(),
                "once the enchanted {noun} watched over the {noun} .".into(),
                "once the {noun} , the {noun} and the enchanted {noun} kept the magic .".into(),
                "once upon a time the {noun} , the {noun} , the {noun} and the magic {noun} blessed the kingdom .".into(),
            ],
        };
        SyntheticSceneSpec {
            seed: 42,
            feature_dim: 64,
            noise_scale: 0.05,
            train_pairs: 2000,
            style_sentences: 2000,
            test_items: 200,
            synonym_swap: 0.15,
            nouns: nouns.iter().map(|s| s.to_string()).collect(),
            synonyms: vec![
                ("dog".into(), "hound".into()),
                ("house".into(), "cabin".into()),
                ("road".into(), "path".into()),
            ],
            adjectives: adjectives.iter().map(|s| s.to_string()).collect(),
            neutral_templates: neutral_templates.iter().map(|s| s.to_string()).collect(),
            styles: vec![lyric, tale],
        }
    }

    /// Adds a third default style; used when exercising multi-style
    /// extension.
    pub fn with_gloom_style(mut self) -> Self {
        self.styles.push(StyleSpec {
            name: "gloom".into(),
            markers: vec!["alas".into(), "sorrow".into(), "shadow".into()],
            templates: vec![
                "alas the {adj} {noun} turns to shadow .".into(),
                "alas the {noun} waits alone in sorrow .".into(),
                "alas the {noun} mourns the {noun} in sorrow .".into(),
                "the {adj} {noun} and the {noun} sink into shadow alas .".into(),
                "the {noun} , the {noun} and the {adj} {noun} drown in sorrow alas .".into(),
                "alas the {noun} and the {noun} fade as the {noun} and the {noun} turn to shadow .".into(),
            ],
        });
        self
    }

    /// Parses the line-oriented spec format; see the repository README for
    /// the key list. Unknown keys are rejected.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let kv = KeyValueFile::parse_text(text, origin)?;
        let mut spec = SyntheticSceneSpec {
            seed: 42,
            feature_dim: 64,
            noise_scale: 0.05,
            train_pairs: 2000,
            style_sentences: 2000,
            test_items: 200,
            synonym_swap: 0.15,
            nouns: Vec::new(),
            synonyms: Vec::new(),
            adjectives: Vec::new(),
            neutral_templates: Vec::new(),
            styles: Vec::new(),
        };
        let mut style_order: Vec<String> = Vec::new();
        let mut style_markers: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut style_templates: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let bad = |msg: String| DlnError::Spec(format!("{origin}: {msg}"));
        for (key, value) in &kv.pairs {
            match key.as_str() {
                "seed" => spec.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "feature_dim" => {
                    spec.feature_dim = value.parse().map_err(|e| bad(format!("feature_dim: {e}")))?
                }
                "noise_scale" => {
                    spec.noise_scale = value.parse().map_err(|e| bad(format!("noise_scale: {e}")))?
                }
                "train_pairs" => {
                    spec.train_pairs = value.parse().map_err(|e| bad(format!("train_pairs: {e}")))?
                }
                "style_sentences" => {
                    spec.style_sentences =
                        value.parse().map_err(|e| bad(format!("style_sentences: {e}")))?
                }
                "test_items" => {
                    spec.test_items = value.parse().map_err(|e| bad(format!("test_items: {e}")))?
                }
                "synonym_swap" => {
                    spec.synonym_swap =
                        value.parse().map_err(|e| bad(format!("synonym_swap: {e}")))?
                }
                "noun" => spec.nouns.push(value.clone()),
                "adj" => spec.adjectives.push(value.clone()),
                "synonym" => {
                    let (head, variant) = value
                        .split_once(':')
                        .ok_or_else(|| bad(format!("synonym `{value}` must be head:variant")))?;
                    spec.synonyms
                        .push((head.trim().to_string(), variant.trim().to_string()));
                }
                "neutral_template" => spec.neutral_templates.push(value.clone()),
                "style" => {
                    style_order.push(value.clone());
                    style_markers.entry(value.clone()).or_default();
                    style_templates.entry(value.clone()).or_default();
                }
                other => {
                    if let Some(rest) = other.strip_prefix("style.") {
                        if let Some(name) = rest.strip_suffix(".marker") {
                            style_markers
                                .entry(name.to_string())
                                .or_default()
                                .push(value.clone());
                        } else if let Some(name) = rest.strip_suffix(".template") {
                            style_templates
                                .entry(name.to_string())
                                .or_default()
                                .push(value.clone());
                        } else {
                            return Err(bad(format!("unknown key `{other}`")));
                        }
                    } else {
                        return Err(bad(format!("unknown key `{other}`")));
                    }
                }
            }
        }
        for name in style_order {
            spec.styles.push(StyleSpec {
                markers: style_markers.remove(&name).unwrap_or_default(),
                templates: style_templates.remove(&name).unwrap_or_default(),
                name,
            });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn render_text(&self) -> String {
        let mut kv = KeyValueFile::new();
        kv.push("seed", self.seed);
        kv.push("feature_dim", self.feature_dim);
        kv.push("noise_scale", self.noise_scale);
        kv.push("train_pairs", self.train_pairs);
        kv.push("style_sentences", self.style_sentences);
        kv.push("test_items", self.test_items);
        kv.push("synonym_swap", self.synonym_swap);
        for n in &self.nouns {
            kv.push("noun", n);
        }
        for (h, v) in &self.synonyms {
            kv.push("synonym", format!("{h}:{v}"));
        }
        for a in &self.adjectives {
            kv.push("adj", a);
        }
        for t in &self.neutral_templates {
            kv.push("neutral_template", t);
        }
        for style in &self.styles {
            kv.push("style", &style.name);
            for m in &style.markers {
                kv.push(&format!("style.{}.marker", style.name), m);
            }
            for t in &style.templates {
                kv.push(&format!("style.{}.template", style.name), t);
            }
        }
        kv.render()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nouns.is_empty() || self.adjectives.is_empty() {
            return Err(DlnError::Spec("need at least one noun and one adjective".into()));
        }
        if self.neutral_templates.is_empty() {
            return Err(DlnError::Spec("need at least one neutral template".into()));
        }
        if self.styles.is_empty() {
            return Err(DlnError::Spec("need at least one style".into()));
        }
        let noun_set: HashSet<&str> = self
            .nouns
            .iter()
            .chain(self.synonyms.iter().map(|(_, v)| v))
            .map(|s| s.as_str())
            .collect();
        let attr_set: HashSet<&str> = noun_set
            .iter()
            .copied()
            .chain(self.adjectives.iter().map(|s| s.as_str()))
            .collect();
        for (head, _) in &self.synonyms {
            if !self.nouns.contains(head) {
                return Err(DlnError::Spec(format!(
                    "synonym head `{head}` is not a declared noun"
                )));
            }
        }
        // marker vocabularies: pairwise disjoint and disjoint from scene tokens
        for (i, a) in self.styles.iter().enumerate() {
            for marker in &a.markers {
                if attr_set.contains(marker.as_str()) {
                    return Err(DlnError::Spec(format!(
                        "style `{}` marker `{marker}` collides with a scene token",
                        a.name
                    )));
                }
            }
            for b in self.styles.iter().skip(i + 1) {
                if a.name == b.name {
                    return Err(DlnError::Spec(format!("duplicate style `{}`", a.name)));
                }
                for marker in &a.markers {
                    if b.markers.contains(marker) {
                        return Err(DlnError::Spec(format!(
                            "marker `{marker}` shared by styles `{}` and `{}`",
                            a.name, b.name
                        )));
                    }
                }
            }
        }
        // templates: slots must parse, neutral templates must avoid markers,
        // style templates must show at least one of their own markers
        let all_markers: HashSet<&str> = self
            .styles
            .iter()
            .flat_map(|s| s.markers.iter().map(|m| m.as_str()))
            .collect();
        for t in &self.neutral_templates {
            let parsed = parse_template(t)?;
            if parsed.noun_slots == 0 {
                return Err(DlnError::Spec(format!("template `{t}` has no noun slot")));
            }
            for tok in &parsed.tokens {
                if let TemplateToken::Literal(word) = tok {
                    if all_markers.contains(word.as_str()) {
                        return Err(DlnError::Spec(format!(
                            "neutral template `{t}` contains marker `{word}`"
                        )));
                    }
                }
            }
        }
        for style in &self.styles {
            if style.templates.is_empty() {
                return Err(DlnError::Spec(format!("style `{}` has no templates", style.name)));
            }
            for t in &style.templates {
                let parsed = parse_template(t)?;
                if parsed.noun_slots == 0 {
                    return Err(DlnError::Spec(format!("template `{t}` has no noun slot")));
                }
                let has_marker = parsed.tokens.iter().any(|tok| match tok {
                    TemplateToken::Literal(word) => style.markers.contains(word),
                    _ => false,
                });
                if !style.markers.is_empty() && !has_marker {
                    return Err(DlnError::Spec(format!(
                        "style `{}` template `{t}` shows none of its markers",
                        style.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical noun for a token (identity for non-variants).
    fn canonical<'a>(&'a self, token: &'a str) -> &'a str {
        self.synonyms
            .iter()
            .find(|(_, v)| v == token)
            .map(|(h, _)| h.as_str())
            .unwrap_or(token)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TemplateToken {
    Literal(String),
    NounSlot,
    AdjSlot,
}

#[derive(Debug, Clone)]
struct ParsedTemplate {
    tokens: Vec<TemplateToken>,
    noun_slots: usize,
}

fn parse_template(template: &str) -> Result<ParsedTemplate> {
    let mut tokens = Vec::new();
    let mut noun_slots = 0;
    for word in template.split_whitespace() {
        match word {
            "{noun}" => {
                noun_slots += 1;
                tokens.push(TemplateToken::NounSlot);
            }
            "{adj}" => tokens.push(TemplateToken::AdjSlot),
            other if other.starts_with('{') => {
                return Err(DlnError::Spec(format!(
                    "template `{template}` references unknown slot `{other}`"
                )));
            }
            other => tokens.push(TemplateToken::Literal(other.to_string())),
        }
    }
    Ok(ParsedTemplate { tokens, noun_slots })
}

/// One held-out evaluation item.
#[derive(Debug, Clone)]
pub struct TestItem {
    pub features: Vec<f64>,
    pub reference: Vec<String>,
    /// Noun tokens present in the reference, sorted.
    pub nouns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub source_pairs: Vec<(Vec<f64>, Vec<String>)>,
    pub style_corpora: Vec<(String, Vec<Vec<String>>)>,
    pub test_items: Vec<TestItem>,
    pub noun_lexicon: Vec<String>,
    pub synonyms: Vec<(String, String)>,
    pub feature_dim: usize,
    pub seed: u64,
}

/// Per-token feature embeddings plus renderers, all seeded.
struct Generator<'a> {
    spec: &'a SyntheticSceneSpec,
    embeddings: HashMap<String, Vec<f64>>,
    neutral: Vec<ParsedTemplate>,
    styles: Vec<Vec<ParsedTemplate>>,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a SyntheticSceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x00e5_cafe);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut embeddings = HashMap::new();
        // canonical nouns and adjectives each get a fixed random direction;
        // synonym variants alias their canonical noun below
        let mut keys: Vec<&str> = spec
            .nouns
            .iter()
            .chain(spec.adjectives.iter())
            .map(|s| s.as_str())
            .collect();
        keys.sort_unstable();
        for key in keys {
            let v: Vec<f64> = (0..spec.feature_dim).map(|_| normal.sample(&mut rng)).collect();
            embeddings.insert(key.to_string(), v);
        }
        for (head, variant) in &spec.synonyms {
            let emb = embeddings
                .get(head)
                .cloned()
                .ok_or_else(|| DlnError::Spec(format!("synonym head `{head}` missing")))?;
            embeddings.insert(variant.clone(), emb);
        }
        let neutral = spec
            .neutral_templates
            .iter()
            .map(|t| parse_template(t))
            .collect::<Result<Vec<_>>>()?;
        let styles = spec
            .styles
            .iter()
            .map(|s| s.templates.iter().map(|t| parse_template(t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Generator {
            spec,
            embeddings,
            neutral,
            styles,
        })
    }

    /// Samples `k` scene nouns (canonical, possibly swapped to variants).
    fn sample_nouns(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let picks = index_sample(rng, self.spec.nouns.len(), k);
        picks
            .iter()
            .map(|i| {
                let canon = &self.spec.nouns[i];
                let variant = self
                    .spec
                    .synonyms
                    .iter()
                    .find(|(h, _)| h == canon)
                    .map(|(_, v)| v);
                match variant {
                    Some(v) if rng.gen_range(0.0..1.0) < self.spec.synonym_swap => v.clone(),
                    _ => canon.clone(),
                }
            })
            .collect()
    }

    /// Renders a template set for a scene; templates are chosen among those
    /// whose noun-slot count matches the scene size.
    fn render(
        &self,
        templates: &[ParsedTemplate],
        nouns: &[String],
        rng: &mut ChaCha8Rng,
    ) -> (Vec<String>, Vec<String>) {
        let fitting: Vec<&ParsedTemplate> = templates
            .iter()
            .filter(|t| t.noun_slots == nouns.len())
            .collect();
        let template = fitting[rng.gen_range(0..fitting.len())];
        let mut tokens = Vec::new();
        let mut adjs = Vec::new();
        let mut next_noun = 0usize;
        for tok in &template.tokens {
            match tok {
                TemplateToken::Literal(w) => tokens.push(w.clone()),
                TemplateToken::NounSlot => {
                    tokens.push(nouns[next_noun].clone());
                    next_noun += 1;
                }
                TemplateToken::AdjSlot => {
                    let adj =
                        self.spec.adjectives[rng.gen_range(0..self.spec.adjectives.len())].clone();
                    adjs.push(adj.clone());
                    tokens.push(adj);
                }
            }
        }
        debug_assert!(tokens.len() <= MAX_DESC_LEN);
        (tokens, adjs)
    }

    /// Available scene sizes for a template set.
    fn sizes(templates: &[ParsedTemplate]) -> Vec<usize> {
        let set: BTreeSet<usize> = templates
            .iter()
            .map(|t| t.noun_slots)
            .filter(|&n| n >= 1 && n <= MAX_SCENE_NOUNS)
            .collect();
        set.into_iter().collect()
    }

    /// Unit-norm feature vector for a rendered scene.
    fn features(&self, nouns: &[String], adjs: &[String], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let normal = Normal::new(0.0, self.spec.noise_scale.max(f64::MIN_POSITIVE)).unwrap();
        let mut out = vec![0.0f64; self.spec.feature_dim];
        for tok in nouns.iter().chain(adjs.iter()) {
            let canon = self.spec.canonical(tok);
            let emb = &self.embeddings[canon];
            for (o, e) in out.iter_mut().zip(emb.iter()) {
                *o += e;
            }
        }
        if self.spec.noise_scale > 0.0 {
            for o in out.iter_mut() {
                *o += normal.sample(rng);
            }
        }
        let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for o in out.iter_mut() {
                *o /= norm;
            }
        }
        out
    }
}

pub fn generate_synthetic_dataset(spec: &SyntheticSceneSpec) -> Result<SyntheticDataset> {
    let generator = Generator::new(spec)?;
    let neutral_sizes = Generator::sizes(&generator.neutral);
    if neutral_sizes.is_empty() {
        return Err(DlnError::Spec("neutral templates define no usable scene size".into()));
    }

    // source train and test references share one dedupe pool so the splits
    // stay disjoint
    let mut seen: HashSet<String> = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0050_4152);
    let draw_neutral = |seen: &mut HashSet<String>,
                            rng: &mut ChaCha8Rng|
     -> Result<(Vec<f64>, Vec<String>, Vec<String>)> {
        for _ in 0..500 {
            let k = neutral_sizes[rng.gen_range(0..neutral_sizes.len())];
            let nouns = generator.sample_nouns(k, rng);
            let (tokens, adjs) = generator.render(&generator.neutral, &nouns, rng);
            let line = tokens.join(" ");
            if seen.insert(line) {
                let feats = generator.features(&nouns, &adjs, rng);
                return Ok((feats, tokens, nouns));
            }
        }
        Err(DlnError::Spec(
            "exhausted attempts to draw unique neutral sentences; enlarge the inventory".into(),
        ))
    };

    let mut source_pairs = Vec::with_capacity(spec.train_pairs);
    for _ in 0..spec.train_pairs {
        let (feats, tokens, _) = draw_neutral(&mut seen, &mut rng)?;
        source_pairs.push((feats, tokens));
    }

    let mut test_items = Vec::with_capacity(spec.test_items);
    for _ in 0..spec.test_items {
        let (feats, tokens, mut nouns) = draw_neutral(&mut seen, &mut rng)?;
        nouns.sort();
        test_items.push(TestItem {
            features: feats,
            reference: tokens,
            nouns,
        });
    }

    let mut style_corpora = Vec::new();
    for (idx, style) in spec.styles.iter().enumerate() {
        let sizes = Generator::sizes(&generator.styles[idx]);
        if sizes.is_empty() {
            return Err(DlnError::Spec(format!(
                "style `{}` templates define no usable scene size",
                style.name
            )));
        }
        let mut style_rng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0057_0000 ^ ((idx as u64 + 1) << 32));
        let mut lines = Vec::with_capacity(spec.style_sentences);
        for _ in 0..spec.style_sentences {
            let k = sizes[style_rng.gen_range(0..sizes.len())];
            let nouns = generator.sample_nouns(k, &mut style_rng);
            let (tokens, _) = generator.render(&generator.styles[idx], &nouns, &mut style_rng);
            lines.push(tokens);
        }
        style_corpora.push((style.name.clone(), lines));
    }

    let mut noun_lexicon: Vec<String> = spec
        .nouns
        .iter()
        .cloned()
        .chain(spec.synonyms.iter().map(|(_, v)| v.clone()))
        .collect();
    noun_lexicon.sort();
    noun_lexicon.dedup();

    Ok(SyntheticDataset {
        source_pairs,
        style_corpora,
        test_items,
        noun_lexicon,
        synonyms: spec.synonyms.clone(),
        feature_dim: spec.feature_dim,
        seed: spec.seed,
    })
}

impl SyntheticDataset {
    /// Writes all corpus/feature/lexicon files plus `manifest.txt` under
    /// `dir`; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        save_corpus(
            &self.source_pairs.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>(),
            &dir.join("source_train.txt"),
        )?;
        save_features(
            &self.source_pairs.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>(),
            &dir.join("source_train_features.txt"),
        )?;
        let mut styles = Vec::new();
        for (name, lines) in &self.style_corpora {
            let file = format!("style_{name}.txt");
            save_corpus(lines, &dir.join(&file))?;
            styles.push((name.clone(), file));
        }
        save_features(
            &self.test_items.iter().map(|t| t.features.clone()).collect::<Vec<_>>(),
            &dir.join("test_features.txt"),
        )?;
        save_corpus(
            &self.test_items.iter().map(|t| t.reference.clone()).collect::<Vec<_>>(),
            &dir.join("test_references.txt"),
        )?;
        save_corpus(
            &self.test_items.iter().map(|t| t.nouns.clone()).collect::<Vec<_>>(),
            &dir.join("test_nouns.txt"),
        )?;
        let mut noun_text = String::new();
        for n in &self.noun_lexicon {
            noun_text.push_str(n);
            noun_text.push('\n');
        }
        std::fs::write(dir.join("nouns.txt"), noun_text)?;
        let mut syn_text = String::from("# head: synonym list\n");
        for (h, v) in &self.synonyms {
            syn_text.push_str(&format!("{h}: {v}\n"));
        }
        std::fs::write(dir.join("synonyms.txt"), syn_text)?;

        let manifest = DatasetManifest {
            feature_dim: self.feature_dim,
            seed: self.seed,
            source_corpus: "source_train.txt".into(),
            source_features: "source_train_features.txt".into(),
            styles,
            test_features: "test_features.txt".into(),
            test_references: "test_references.txt".into(),
            test_nouns: "test_nouns.txt".into(),
            nouns: "nouns.txt".into(),
            synonyms: "synonyms.txt".into(),
        };
        let path = dir.join("manifest.txt");
        manifest.save(&path)?;
        Ok(path)
    }
}
