use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phonoprobe::corpus::{synth_language, SynthRules};
use phonoprobe::model::{train, ModelConfig, Regime, TrainParams, Transformer, Vocabulary};
use phonoprobe::numerics::NUM_CLASSES;
use phonoprobe::par::Exec;
use phonoprobe::phonology::{Feature, FeatureTable};
use phonoprobe::probing::{
    align_schedule, build_phoneme_probe, make_schedule, online_code_with, MlpTrainer, ModelKind,
    ProbeConfig,
};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn training_epoch(c: &mut Criterion) {
    let corpus = synth_language(&SynthRules::parse("devoicing").unwrap(), 300, 0).unwrap();
    let vocab = Vocabulary::from_corpus(&corpus);
    let mut g = c.benchmark_group("train_one_epoch");
    g.sample_size(10);
    for (name, exec) in MODES {
        let params = TrainParams {
            max_epochs: 1,
            exec,
            ..TrainParams::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let model = Transformer::build(ModelConfig::tiny(0), vocab.clone()).unwrap();
                train(model, &corpus, Regime::Inflection, &params).unwrap()
            })
        });
    }
    g.finish();
}

fn online_coding(c: &mut Criterion) {
    let corpus = synth_language(&SynthRules::parse("devoicing").unwrap(), 100, 0).unwrap();
    let table = FeatureTable::bundled();
    let params = TrainParams {
        max_epochs: 0,
        ..TrainParams::default()
    };
    let cks: Vec<_> = (0..4)
        .map(|seed| {
            let model =
                Transformer::build(ModelConfig::tiny(seed), Vocabulary::from_corpus(&corpus))
                    .unwrap();
            train(model, &corpus, Regime::Inflection, &params)
                .unwrap()
                .0
        })
        .collect();
    let refs: Vec<_> = cks.iter().collect();
    let ds = build_phoneme_probe(
        &refs,
        &table,
        Feature::Voice,
        "bench",
        ModelKind::Inflection,
        3,
        0,
    )
    .unwrap();
    let schedule = align_schedule(&make_schedule(ds.len(), NUM_CLASSES).unwrap(), &ds).unwrap();
    let mut g = c.benchmark_group("online_code");
    g.sample_size(10);
    for (name, exec) in MODES {
        let trainer = MlpTrainer {
            config: ProbeConfig {
                max_epochs: 10,
                ..ProbeConfig::default()
            },
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| online_code_with(&ds, &schedule, &trainer, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, training_epoch, online_coding);
criterion_main!(benches);
