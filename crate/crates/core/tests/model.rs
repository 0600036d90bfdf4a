use phonoprobe::corpus::{
    parse_sigmorphon_str, synth_language, to_copy_task, Corpus, ParseOptions, SynthRules,
};
use phonoprobe::model::{
    exact_match, greedy_decode, train, Checkpoint, ModelConfig, Regime, TrainParams, Transformer,
    Vocabulary,
};
use phonoprobe::numerics::{grad_check, Coordinates, NumericsError};
use phonoprobe::par::Exec;

fn w(s: &str) -> Vec<String> {
    s.chars().map(String::from).collect()
}

fn corpus(rules: &str, size: usize) -> Corpus {
    synth_language(&SynthRules::parse(rules).unwrap(), size, 2).unwrap()
}

fn short_params(epochs: usize) -> TrainParams {
    TrainParams {
        max_epochs: epochs,
        patience: epochs,
        stop_at_perfect: false,
        ..TrainParams::default()
    }
}

#[test]
fn loss_falls_over_the_first_hundred_steps() {
    let c = corpus("devoicing,harmony", 400);
    let model = Transformer::build(ModelConfig::tiny(1), Vocabulary::from_corpus(&c)).unwrap();
    let (_, report) = train(model, &c, Regime::Inflection, &short_params(9)).unwrap();
    let losses = &report.step_losses;
    assert!(losses.len() >= 100, "{} steps", losses.len());
    let avg = |i: usize| losses[i..i + 10].iter().sum::<f64>() / 10.0;
    let start = avg(0);
    let end = avg(90);
    assert!(end < 0.8 * start, "moving average {start} → {end}");
    assert!(losses.iter().all(|l| l.is_finite()));
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let c = corpus("devoicing", 200);
    let run = || {
        let model = Transformer::build(ModelConfig::tiny(4), Vocabulary::from_corpus(&c)).unwrap();
        train(model, &c, Regime::Inflection, &short_params(2))
            .unwrap()
            .0
    };
    let a = run();
    let b = run();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    a.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.digest(), a.digest());
    assert_eq!(back.metadata, a.metadata);
    assert_eq!(back.metadata.corpus_hash, c.content_hash());
}

#[test]
fn seeds_give_different_embeddings() {
    let c = corpus("devoicing", 50);
    let v = Vocabulary::from_corpus(&c);
    let a = Transformer::build(ModelConfig::desk(0), v.clone()).unwrap();
    let b = Transformer::build(ModelConfig::desk(1), v).unwrap();
    let ea = a.embedding_of("b").unwrap();
    assert_eq!(ea.len(), 128);
    assert_ne!(ea, b.embedding_of("b").unwrap());
    assert_eq!(
        ea,
        Transformer::build(ModelConfig::desk(0), a.vocab().clone())
            .unwrap()
            .embedding_of("b")
            .unwrap()
    );
}

#[test]
fn regime_mismatch_is_rejected() {
    let c = corpus("harmony", 50);
    let model = Transformer::build(ModelConfig::tiny(0), Vocabulary::from_corpus(&c)).unwrap();
    assert!(train(model.clone(), &c, Regime::Copy, &short_params(1)).is_err());
    let copy = to_copy_task(&c);
    let model = Transformer::build(ModelConfig::tiny(0), Vocabulary::from_corpus(&copy)).unwrap();
    assert!(train(model, &copy, Regime::Inflection, &short_params(1)).is_err());
}

#[test]
fn gradients_of_a_two_layer_model() {
    let c = corpus("devoicing,gemination", 30);
    let mut cfg = ModelConfig::tiny(8);
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 2;
    let model = Transformer::build(cfg, Vocabulary::from_corpus(&c)).unwrap();
    let batch: Vec<_> = c.examples().iter().take(4).collect();
    let mut params = model.params().to_vec();
    let r = grad_check(
        |tape| {
            model
                .teacher_forced_loss(tape, &batch)
                .map_err(|e| NumericsError::Shape(e.to_string()))
        },
        &mut params,
        1e-5,
        Coordinates::Sample { count: 80, seed: 3 },
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{}", r.max_rel_error);
}

/// Learns to copy, then copies a word it never saw.
#[test]
fn copy_model_reproduces_kebap() {
    let base = corpus("devoicing,harmony", 2000);
    let copy = to_copy_task(&base);
    let model = Transformer::build(ModelConfig::desk(0), Vocabulary::from_corpus(&copy)).unwrap();
    let (ck, report) = train(model, &copy, Regime::Copy, &TrainParams::default()).unwrap();
    assert!(report.dev_accuracy >= 0.99, "{}", report.dev_accuracy);
    let kebap =
        parse_sigmorphon_str("kebap\tkebap\tCOPY;COPY\n", &ParseOptions::default()).unwrap();
    let e = &kebap.examples()[0];
    assert!(!copy.examples().iter().any(|x| x.lemma == e.lemma));
    let out = greedy_decode(&ck.model, &e.lemma, &e.tags, 20).unwrap();
    assert_eq!(out.phonemes, w("kebap"));
    assert!(!out.truncated);
    let sample: Vec<_> = copy.examples().iter().take(50).collect();
    assert!(exact_match(&ck.model, &sample, Exec::Sequential) >= 0.98);
}
