use phonoprobe::corpus::{
    generate_nonce, parse_sigmorphon, parse_sigmorphon_str, synth_language, to_copy_task,
    GraphemeMap, NonceConfig, ParseOptions, Segmenter, SynthRules, COPY_TAG,
};
use phonoprobe::phonology::{
    harmony_label, trainable_features, Feature, FeatureTable, PhonClass, PhonemeInventory, Ternary,
};

fn table_options() -> ParseOptions {
    ParseOptions {
        language: "synth".into(),
        segmenter: Segmenter::Table(FeatureTable::bundled()),
        grapheme_map: None,
    }
}

#[test]
fn parse_serialize_parse_round_trip() {
    let corpus = synth_language(
        &SynthRules::parse("devoicing,harmony,gemination").unwrap(),
        300,
        4,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.tsv");
    corpus.write_tsv(&path).unwrap();
    let back = parse_sigmorphon(&path, &table_options()).unwrap();
    assert_eq!(back, corpus);
    assert_eq!(back.content_hash(), corpus.content_hash());
}

#[test]
fn synthetic_corpora_obey_their_rules() {
    for rules in [
        "",
        "devoicing",
        "harmony",
        "gemination",
        "devoicing,harmony,gemination",
    ] {
        let r = SynthRules::parse(rules).unwrap();
        let corpus = synth_language(&r, 500, 11).unwrap();
        assert_eq!(corpus.len(), 500);
        for e in corpus.examples() {
            assert_eq!(
                r.inflect(&e.lemma, &e.tags).as_ref(),
                Some(&e.target),
                "{rules}: {e:?}"
            );
        }
        corpus.check_against(&FeatureTable::bundled()).unwrap();
    }
}

#[test]
fn devoicing_language_shows_the_alternation() {
    let corpus = synth_language(&SynthRules::parse("devoicing").unwrap(), 2000, 7).unwrap();
    let voiced = ["b", "d", "g", "z"];
    let voiceless = ["p", "t", "k", "s"];
    let ends_voiced = |w: &[String]| w.last().is_some_and(|c| voiced.contains(&c.as_str()));
    let mut devoiced = 0;
    let mut kept = 0;
    for e in corpus.examples().iter().filter(|e| ends_voiced(&e.lemma)) {
        let last = &e.target[e.lemma.len() - 1];
        if e.tags[1] == "NOM" {
            assert!(voiceless.contains(&last.as_str()), "{:?}", e.target);
            devoiced += 1;
        } else {
            assert_eq!(last, e.lemma.last().unwrap());
            kept += 1;
        }
    }
    assert!(devoiced > 0 && kept > 0);
}

#[test]
fn copy_task_targets_equal_lemmas() {
    let corpus = synth_language(&SynthRules::parse("harmony").unwrap(), 200, 1).unwrap();
    let copy = to_copy_task(&corpus);
    assert!(copy
        .examples()
        .iter()
        .all(|e| e.target == e.lemma && e.tags.iter().all(|t| t == COPY_TAG)));
    assert_eq!(copy.inventory(), corpus.inventory());
    assert_eq!(to_copy_task(&copy), copy);
}

#[test]
fn kebap_under_the_table_segmenter() {
    let options = ParseOptions {
        grapheme_map: Some(GraphemeMap::new([("ı".to_string(), "ɯ".to_string())])),
        ..table_options()
    };
    let c = parse_sigmorphon_str("kebap\tkebabı\tN;ACC\n", &options).unwrap();
    let e = &c.examples()[0];
    assert_eq!(e.lemma, ["k", "e", "b", "a", "p"]);
    assert_eq!(e.target, ["k", "e", "b", "a", "b", "ɯ"]);
    assert_eq!(e.tags, ["N", "ACC"]);
}

#[test]
fn nonce_labels_are_balanced_for_every_trainable_feature() {
    let table = FeatureTable::bundled();
    let corpus = synth_language(&SynthRules::parse("harmony").unwrap(), 500, 3).unwrap();
    let inventory: PhonemeInventory = corpus.inventory().clone();
    let mut checked = 0;
    for class in [PhonClass::Vowel, PhonClass::Consonant] {
        for f in trainable_features(&inventory, class, &table).unwrap() {
            let cfg = NonceConfig::new(300, 5)
                .lengths(3, 8)
                .balanced_for(f, class);
            let Ok(lex) = generate_nonce(&inventory, &table, &cfg) else {
                continue;
            };
            assert_eq!(lex.len(), 300);
            let mut counts = [0usize; 3];
            for w in &lex.words {
                assert!((3..=8).contains(&w.len()));
                assert!(w.iter().all(|p| inventory.contains(p)));
                counts[harmony_label(w, f, class, &table).unwrap().class_index()] += 1;
            }
            for c in counts {
                assert!((90..=110).contains(&c), "{f} {class:?} {counts:?}");
            }
            checked += 1;
        }
    }
    assert!(checked > 0);
    // Back harmony over the synthetic vowels is always balanceable.
    let cfg = NonceConfig::new(60, 0).balanced_for(Feature::Back, PhonClass::Vowel);
    let lex = generate_nonce(&inventory, &table, &cfg).unwrap();
    let plus = lex
        .words
        .iter()
        .filter(|w| {
            harmony_label(w, Feature::Back, PhonClass::Vowel, &table).unwrap() == Ternary::Plus
        })
        .count();
    assert_eq!(plus, 20);
}
