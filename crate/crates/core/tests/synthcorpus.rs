use conngan::connmat::ClassLabel;
use conngan::synthcorpus::{
    class_separation, generate_corpus, mean_module_weight, CorpusConfig,
};
use conngan::Error;
use proptest::prelude::*;

fn small(seed: u64) -> CorpusConfig {
    CorpusConfig {
        n: 16,
        per_class: 12,
        seed,
        ..CorpusConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_subject_is_a_valid_matrix(seed in 0u64..1000, n in 4usize..20) {
        let cfg = CorpusConfig { n, modules: 4.min(n), per_class: 3, seed, ..CorpusConfig::default() };
        let d = generate_corpus(&cfg).unwrap();
        prop_assert_eq!(d.len(), 6);
        prop_assert_eq!(d.count(ClassLabel::Control), 3);
        for m in d.matrices() {
            m.validate().unwrap();
        }
    }
}

#[test]
fn corpus_is_reproducible_per_seed() {
    assert_eq!(
        generate_corpus(&small(1)).unwrap(),
        generate_corpus(&small(1)).unwrap()
    );
    assert_ne!(
        generate_corpus(&small(1)).unwrap(),
        generate_corpus(&small(2)).unwrap()
    );
}

#[test]
fn disease_attenuates_inter_module_weight() {
    let cfg = small(5);
    let d = generate_corpus(&cfg).unwrap();
    let cn = mean_module_weight(&cfg, &d, ClassLabel::Control, true);
    let ad = mean_module_weight(&cfg, &d, ClassLabel::Disease, true);
    assert!(ad < cn, "inter-module weight {ad} should fall below {cn}");
    let ratio = ad / cn;
    assert!((ratio - cfg.attenuation).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn classes_are_separated() {
    let d = generate_corpus(&small(3)).unwrap();
    assert!(class_separation(&d).unwrap() > 0.0);
    let none = generate_corpus(&CorpusConfig {
        attenuation: 1.0,
        ..small(3)
    })
    .unwrap();
    assert!(class_separation(&d).unwrap() > class_separation(&none).unwrap());
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        CorpusConfig { n: 1, ..small(0) },
        CorpusConfig {
            per_class: 0,
            ..small(0)
        },
        CorpusConfig {
            attenuation: 1.5,
            ..small(0)
        },
        CorpusConfig {
            p_intra: -0.1,
            ..small(0)
        },
        CorpusConfig {
            modules: 0,
            ..small(0)
        },
    ] {
        assert!(
            matches!(generate_corpus(&cfg), Err(Error::Config(_))),
            "{cfg:?}"
        );
    }
}
