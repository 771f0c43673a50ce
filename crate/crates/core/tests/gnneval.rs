use conngan::autodiff::{Graph, Tensor};
use conngan::connmat::{ClassLabel, ConnectivityMatrix, LabeledDataset, Provenance, Sample};
use conngan::gnneval::*;
use conngan::graphmetrics::node_strength;
use conngan::nn::{init_params, ModelParams};
use conngan::oversample::OversampleConfig;
use conngan::synthcorpus::{generate_corpus, CorpusConfig};
use conngan::Error;
use proptest::prelude::*;

fn real(matrix: ConnectivityMatrix, label: ClassLabel) -> Sample {
    Sample {
        matrix,
        label,
        provenance: Provenance::Real,
    }
}

fn constant(n: usize, w: f64) -> ConnectivityMatrix {
    ConnectivityMatrix::from_upper_triangle(&vec![w; n * (n - 1) / 2], n).unwrap()
}

fn small_corpus(per_class: usize, seed: u64) -> LabeledDataset {
    generate_corpus(&CorpusConfig {
        n: 8,
        modules: 2,
        per_class,
        attenuation: 0.3,
        seed,
        ..CorpusConfig::default()
    })
    .unwrap()
}

fn params_for(feature_dim: usize, seed: u64) -> ModelParams {
    init_params(&GraphConvArch { feature_dim }.param_specs(), seed).unwrap()
}

fn arb_matrix(n: usize) -> impl Strategy<Value = ConnectivityMatrix> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n * (n - 1) / 2)
        .prop_map(move |v| ConnectivityMatrix::from_upper_triangle(&v, n).unwrap())
}

#[test]
fn strengths_agree_with_graphmetrics() {
    let m = ConnectivityMatrix::from_rows(&[
        vec![0.0, 1.0, 0.5],
        vec![1.0, 0.0, 0.0],
        vec![0.5, 0.0, 0.0],
    ])
    .unwrap();
    let g = build_graph(&m);
    assert_eq!(g.edges.len(), 2);
    let s: Vec<f64> = (0..3).map(|i| 2.0 * g.features[i * 4 + 3]).collect();
    assert_eq!(s, node_strength(&m));
    assert_eq!(s, vec![1.5, 1.0, 0.5]);
}

proptest! {
    #[test]
    fn edge_count_matches_positive_entries(m in arb_matrix(6)) {
        let g = build_graph(&m);
        let positive = m.to_upper_triangle().iter().filter(|&&w| w > 0.0).count();
        prop_assert_eq!(g.edges.len(), positive);
        prop_assert!(g.edges.iter().all(|&(i, j, w)| i < j && w > 0.0 && w == m.get(j, i)));
    }

    #[test]
    fn probabilities_sum_to_one(m in arb_matrix(5), seed in 0u64..1000) {
        let p = graphconv_forward(&params_for(6, seed), &build_graph(&m)).unwrap();
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn permutation_invariance_is_exact(
        m in arb_matrix(6),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        seed in 0u64..1000,
    ) {
        let params = params_for(7, seed);
        let g = build_graph(&m);
        let a = graphconv_forward(&params, &g).unwrap();
        let b = graphconv_forward(&params, &g.permuted(&perm)).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn isolated_node_sees_only_its_own_features() {
    // Node 2 has no edges, so its layer output is relu(h W_self + b).
    let (n, d, out) = (3, 2, 3);
    let adj = vec![0.0, 0.7, 0.0, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0];
    let h = vec![0.3, -1.2, 0.8, 0.4, -0.5, 0.9];
    let ws = vec![0.5, -0.2, 0.1, 0.3, 0.4, -0.6];
    let wn = vec![1.0, 2.0, -3.0, 0.5, -0.5, 0.25];
    let b = vec![0.05, -0.1, 0.2];
    let mut g = Graph::new();
    let hv = g.leaf(Tensor::new(&[1, n, d], h.clone()).unwrap()).unwrap();
    let av = g.leaf(Tensor::new(&[1, n, n], adj).unwrap()).unwrap();
    let wsv = g.leaf(Tensor::new(&[d, out], ws.clone()).unwrap()).unwrap();
    let wnv = g.leaf(Tensor::new(&[d, out], wn).unwrap()).unwrap();
    let bv = g.leaf(Tensor::new(&[out], b.clone()).unwrap()).unwrap();
    let y = graphconv_layer(&mut g, hv, av, wsv, wnv, bv).unwrap();
    let row = &g.value(y).data()[2 * out..3 * out];
    for k in 0..out {
        let expect = (h[4] * ws[k] + h[5] * ws[out + k] + b[k]).max(0.0);
        assert!(
            (row[k] - expect).abs() < 1e-15,
            "{k}: {} vs {expect}",
            row[k]
        );
    }
}

#[test]
fn forward_rejects_wrong_feature_dim() {
    let g = build_graph(&constant(4, 0.5));
    assert!(graphconv_forward(&params_for(6, 0), &g).is_err());
}

fn separable_toy() -> LabeledDataset {
    let n = 6;
    let mut d = LabeledDataset::new(n);
    for (w, label) in [
        (0.2, ClassLabel::Control),
        (0.3, ClassLabel::Control),
        (0.7, ClassLabel::Disease),
        (0.9, ClassLabel::Disease),
    ] {
        for _ in 0..4 {
            d.push(real(constant(n, w), label)).unwrap();
        }
    }
    d
}

#[test]
fn separable_toy_is_learned() {
    let d = separable_toy();
    let t = train_classifier(&d, &d, 11).unwrap();
    assert!(t.log.len() <= MAX_EPOCHS);
    let pred = predict(&t.params, &d).unwrap();
    let truth: Vec<ClassLabel> = d.iter().map(|s| s.label).collect();
    assert_eq!(Metrics::from_predictions(&truth, &pred).accuracy, 1.0);
}

#[test]
fn training_is_deterministic() {
    let d = small_corpus(10, 2);
    let (tr, va) = (
        d.select(&(0..20).step_by(2).collect::<Vec<_>>()),
        d.select(&(1..20).step_by(2).collect::<Vec<_>>()),
    );
    let a = train_classifier(&tr, &va, 4).unwrap();
    let b = train_classifier(&tr, &va, 4).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    assert!(a.log.len() <= MAX_EPOCHS);
    assert!(a.best_epoch < a.log.len());
    let best = a.log[a.best_epoch].val_loss;
    assert!(a.log.iter().all(|e| e.val_loss >= best));
}

#[test]
fn empty_splits_are_rejected() {
    let d = separable_toy();
    let empty = LabeledDataset::new(6);
    assert!(matches!(
        train_classifier(&empty, &d, 0),
        Err(Error::EmptyDataset(_))
    ));
    assert!(matches!(
        train_classifier(&d, &empty, 0),
        Err(Error::EmptyDataset(_))
    ));
}

#[test]
fn split_sizes_for_220_samples() {
    let mut d = LabeledDataset::new(3);
    for i in 0..220 {
        let label = if i % 2 == 0 {
            ClassLabel::Control
        } else {
            ClassLabel::Disease
        };
        d.push(real(ConnectivityMatrix::zeros(3), label)).unwrap();
    }
    let parts = stratified_parts(&d, 9).unwrap();
    assert!(parts.iter().all(|p| p.len() == 44));
    for f in 0..FOLDS {
        let (tr, va, te) = fold_split(&parts, f);
        assert_eq!((tr.len(), va.len(), te.len()), (132, 44, 44));
        let tests: Vec<usize> = (0..FOLDS).flat_map(|g| fold_split(&parts, g).2).collect();
        let mut uniq = tests.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), tests.len());
    }
}

#[test]
fn too_small_to_stratify() {
    let d = small_corpus(4, 0);
    assert!(matches!(
        stratified_parts(&d, 0),
        Err(Error::EmptyDataset(_))
    ));
    let aug = Augmenter::Smote(OversampleConfig::default());
    assert!(cross_validate(&d, &aug, Mode::Baseline, 1, 0).is_err());
}

#[test]
fn fakes_depend_only_on_the_training_partition() {
    let d = small_corpus(15, 5);
    let aug = Augmenter::Smote(OversampleConfig {
        k: 3,
        ..Default::default()
    });
    let seed = 13;
    let parts = stratified_parts(&d, seed).unwrap();
    let base = fold_fakes(&d, &aug, seed).unwrap();
    let (tr, va, te) = fold_split(&parts, 1);
    assert_eq!(base[1].len(), tr.len());
    for c in ClassLabel::ALL {
        assert_eq!(base[1].count(c), d.select(&tr).count(c));
    }
    let mut samples = d.samples().to_vec();
    for &i in va.iter().chain(&te) {
        samples[i].matrix = constant(8, 0.123);
    }
    let altered = LabeledDataset::from_samples(8, samples).unwrap();
    let again = fold_fakes(&altered, &aug, seed).unwrap();
    assert_eq!(again[1], base[1]);
    assert_ne!(again[0], base[0]);
}

#[test]
fn cross_validation_protocol() {
    let d = small_corpus(10, 3);
    let smote = Augmenter::Smote(OversampleConfig {
        k: 3,
        ..Default::default()
    });
    let adasyn = Augmenter::Adasyn(OversampleConfig {
        k: 3,
        ..Default::default()
    });
    let a = cross_validate(&d, &smote, Mode::Baseline, 2, 21).unwrap();
    let b = cross_validate(&d, &adasyn, Mode::Baseline, 2, 21).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.method, None);
    assert!(a.csv_row().starts_with("baseline,none,"));
    assert_eq!(a.folds.len(), FOLDS * 2);
    assert_eq!(
        a,
        cross_validate(&d, &smote, Mode::Baseline, 2, 21).unwrap()
    );

    for mode in [Mode::FakeOnly, Mode::Combined] {
        let r = cross_validate(&d, &smote, mode, 1, 21).unwrap();
        assert_eq!((r.mode, r.method), (mode, Some(Method::Smote)));
        assert_eq!(r.folds.len(), FOLDS);
        for f in &r.folds {
            for m in [f.val, f.test] {
                for x in [m.accuracy, m.precision, m.recall] {
                    assert!((0.0..=1.0).contains(&x));
                }
            }
        }
        let row = r.csv_row();
        assert_eq!(
            row.split(',').count(),
            CvReport::CSV_HEADER.split(',').count()
        );
        assert!(r.summary(|f| f.test.recall).std >= 0.0);
    }
}

#[test]
fn twenty_trainings_for_five_repeats() {
    let d = small_corpus(5, 8);
    let r = cross_validate_with(&d, None, None, Mode::Baseline, 5, 1).unwrap();
    assert_eq!(r.folds.len(), 20);
    assert!(cross_validate_with(&d, None, Some(Method::Gan), Mode::Combined, 1, 1).is_err());
}

#[test]
fn majority_predictor_scores_half_on_balanced_sets() {
    let truth: Vec<ClassLabel> = (0..10).map(|i| ClassLabel::ALL[i % 2]).collect();
    let m = Metrics::from_predictions(&truth, &[ClassLabel::Control; 10]);
    assert_eq!(m.accuracy, 0.5);
    assert_eq!((m.precision, m.recall), (0.0, 0.0));
}

#[test]
fn mode_and_method_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
    }
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("both".parse::<Mode>().is_err());
}
