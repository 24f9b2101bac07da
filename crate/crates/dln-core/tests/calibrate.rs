//! Scratch calibration harness (ignored by default): prints the numbers the
//! acceptance thresholds are frozen against.

use std::collections::BTreeSet;
use std::time::Instant;

use dln_core::classifier::{train_style_classifier, ClassifierConfig};
use dln_core::decoding::DecodeConfig;
use dln_core::gradcheck::finite_difference_check;
use dln_core::metrics::{
    content_similarity, extract_nouns, random_baseline, transfer_accuracy, NounLexicon,
    SynonymLexicon,
};
use dln_core::model::{joint_loss, DLNModel, ModelConfig};
use dln_core::optim::OptimConfig;
use dln_core::synth::{generate_synthetic_dataset, SyntheticSceneSpec};
use dln_core::train::{prepare_data, train_joint, TrainConfig};
use dln_core::vocab::Vocabulary;
use rand_chacha::rand_core::SeedableRng;

#[test]
#[ignore]
fn gradcheck_full_model() {
    let start = Instant::now();
    let vocab = Vocabulary::from_content_tokens(
        (0..8).map(|i| format!("w{i}")),
    )
    .unwrap();
    let cfg = ModelConfig {
        hidden: 8,
        embed: 6,
        feature_dim: 10,
        text_feature_dim: 16,
        init_range: 0.4,
        seed: 17,
        ..ModelConfig::default()
    };
    let mut model: DLNModel<f64> = DLNModel::new(&cfg, vocab, "styled").unwrap();

    let words = |names: &[&str]| -> Vec<String> { names.iter().map(|s| s.to_string()).collect() };
    let mut batch_s = Vec::new();
    for i in 0..2 {
        let feats: Vec<f64> = (0..10).map(|j| ((i * 10 + j) as f64 * 0.37).sin() * 0.8).collect();
        let tokens = words(&["w0", "w3", "w1", "w5", "w2"]);
        batch_s.push(model.prepare_source(&feats, &tokens).unwrap());
    }
    let mut batch_t = Vec::new();
    for i in 0..2 {
        let tokens = words(&[
            ["w7", "w4"][i % 2],
            "w6",
            "w2",
            ["w1", "w0"][i % 2],
            "w5",
        ]);
        batch_t.push(model.prepare_target("styled", &tokens).unwrap());
    }

    model.joint_backward(&batch_s, &batch_t, "styled", 0.5).unwrap();
    let (arch, params) = model.split_mut();
    let style = arch.style_index("styled").unwrap();
    let report = finite_difference_check(
        params,
        |p| Ok(joint_loss(arch, p, &batch_s, &batch_t, style, 0.5)?.total),
        1e-5,
    )
    .unwrap();
    for (name, err) in &report.per_param {
        println!("{name}: {err:.3e}");
    }
    println!(
        "max_rel_error = {:.3e}, elapsed = {:?}",
        report.max_rel_error,
        start.elapsed()
    );
    assert!(report.max_rel_error < 1e-4);
}

#[test]
#[ignore]
fn end_to_end_transfer_calibration() {
    let total = Instant::now();
    let spec = SyntheticSceneSpec::default_spec();
    let ds = generate_synthetic_dataset(&spec).unwrap();
    println!("dataset: {} pairs, {} styles, {} test", ds.source_pairs.len(), ds.style_corpora.len(), ds.test_items.len());

    let mut corpus: Vec<Vec<String>> = ds.source_pairs.iter().map(|(_, t)| t.clone()).collect();
    corpus.extend(ds.style_corpora[0].1.iter().cloned());
    let vocab = Vocabulary::build(&corpus, 500).unwrap();
    println!("vocab: {}", vocab.len());

    let cfg = ModelConfig {
        hidden: 64,
        embed: 32,
        feature_dim: spec.feature_dim,
        text_feature_dim: 48,
        seed: 42,
        ..ModelConfig::default()
    };
    let mut model: DLNModel<f32> = DLNModel::new(&cfg, vocab, "lyric").unwrap();
    let (source, target) = prepare_data(&model, &ds.source_pairs, &ds.style_corpora[0].1, "lyric").unwrap();

    let t0 = Instant::now();
    train_joint(
        &mut model,
        &source,
        &target,
        "lyric",
        &TrainConfig {
            epochs: 30,
            batch_size: 64,
            ..TrainConfig::default()
        },
        &OptimConfig::default(),
        |s| {
            if s.epoch % 5 == 0 || s.epoch == 29 {
                println!(
                    "epoch {}: L_S {:.4} L_T {:.4} L {:.4} ({:?})",
                    s.epoch, s.loss_source, s.loss_target, s.loss_total, t0.elapsed()
                );
            }
        },
    )
    .unwrap();
    println!("training took {:?}", t0.elapsed());

    // generations
    let decode = DecodeConfig {
        beam_width: 5,
        max_len: 30,
    };
    let t1 = Instant::now();
    let generations: Vec<Vec<String>> = ds
        .test_items
        .iter()
        .map(|item| model.generate(&item.features, "lyric", &decode).unwrap())
        .collect();
    println!("generation took {:?}", t1.elapsed());
    for g in generations.iter().take(8) {
        println!("gen: {}", g.join(" "));
    }
    for item in ds.test_items.iter().take(4) {
        println!("ref: {}", item.reference.join(" "));
    }

    // classifier on training corpora
    let t2 = Instant::now();
    let source_corpus: Vec<Vec<String>> = ds.source_pairs.iter().map(|(_, t)| t.clone()).collect();
    let clf = train_style_classifier::<f32>(
        &source_corpus,
        &ds.style_corpora[0].1,
        &ClassifierConfig::default(),
    )
    .unwrap();
    println!(
        "classifier: acc {:.4} epochs {} ({:?})",
        clf.train_accuracy,
        clf.epochs_run,
        t2.elapsed()
    );

    let rt = transfer_accuracy(&generations, &clf.classifier).unwrap();
    println!("transfer accuracy R_T = {rt:.4}");

    // content similarity vs random baseline
    let nouns = NounLexicon::from_tokens(ds.noun_lexicon.clone());
    let syn = SynonymLexicon::from_pairs(ds.synonyms.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut cs_sum = 0.0;
    let mut random_sum = 0.0;
    for (item, gen) in ds.test_items.iter().zip(generations.iter()) {
        let c_s: BTreeSet<String> = item.nouns.iter().cloned().collect();
        let c_t = extract_nouns(gen, &nouns);
        cs_sum += content_similarity(&c_s, &c_t, &syn).f;
        let rand_tokens = random_baseline(c_s.len(), &nouns, &mut rng);
        let c_rand: BTreeSet<String> = rand_tokens.into_iter().collect();
        random_sum += content_similarity(&c_s, &c_rand, &syn).f;
    }
    let cs = cs_sum / ds.test_items.len() as f64;
    let cs_random = random_sum / ds.test_items.len() as f64;
    println!("content similarity: model {cs:.4} random {cs_random:.4} ratio {:.2}", cs / cs_random.max(1e-9));
    println!("total {:?}", total.elapsed());
}
