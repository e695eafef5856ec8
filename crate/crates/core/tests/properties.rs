use mscnn_spu::autodiff::{Graph, Tensor};
use mscnn_spu::evaluation::{make_folds, ConfusionMatrix, N_FOLDS};
use mscnn_spu::gradcheck::{gradcheck_inputs, gradcheck_params, GradcheckSetup};
use mscnn_spu::model::predict_probs;
use mscnn_spu::training::{clip_global_norm, global_norm};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(xs in prop::collection::vec(-50.0f64..50.0, 1..20), cut in 0usize..20) {
        let valid = 1 + cut % xs.len();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(xs.clone()));
        let p = g.softmax(x).unwrap();
        let m = g.masked_softmax(x, valid).unwrap();
        for probs in [g.value(p).data(), g.value(m).data()] {
            prop_assert!(probs.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(g.value(m).data()[valid..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn folds_partition_the_data(counts in prop::collection::vec(10usize..30, 2..5), seed in any::<u64>()) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let plan = make_folds(&labels, counts.len(), seed).unwrap();
        let mut seen = vec![0; labels.len()];
        for b in &plan.blocks {
            for &i in b {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let sizes: Vec<usize> = plan.blocks.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for (c, &n) in counts.iter().enumerate() {
            for b in &plan.blocks {
                let k = b.iter().filter(|&&i| labels[i] == c).count();
                prop_assert!(k == n / N_FOLDS || k == n / N_FOLDS + 1);
            }
        }
        for f in &plan.folds {
            let mut all: Vec<usize> = f.train.iter().chain(&f.dev).chain(&f.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }
        prop_assert_eq!(make_folds(&labels, counts.len(), seed).unwrap(), plan);
    }

    #[test]
    fn clipping_bounds_the_norm(g in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 1..8), 1..5), max in 0.01f64..5.0) {
        let mut clipped = g.clone();
        let before = clip_global_norm(&mut clipped, max).unwrap();
        prop_assert!((before - global_norm(&g)).abs() < 1e-12);
        prop_assert!(global_norm(&clipped) <= max * (1.0 + 1e-12));
        if before <= max {
            prop_assert_eq!(&clipped, &g);
        } else {
            let scale = max / before;
            for (a, b) in clipped.iter().flatten().zip(g.iter().flatten()) {
                prop_assert!((a - b * scale).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn accuracy_ignores_class_relabelling(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let mut a = ConfusionMatrix::new(4);
        let mut b = ConfusionMatrix::new(4);
        for &(t, p) in &pairs {
            a.add(t, p);
            b.add(perm[t], perm[p]);
        }
        prop_assert_eq!(a.weighted_accuracy().unwrap(), b.weighted_accuracy().unwrap());
        prop_assert!((a.unweighted_accuracy().unwrap() - b.unweighted_accuracy().unwrap()).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn extra_padding_does_not_change_predictions(seed in 0u64..1000, extra_frames in 1usize..6, extra_tokens in 1usize..4) {
        let setup = GradcheckSetup::tiny(seed);
        let params = gradcheck_params(&setup).unwrap();
        let bundles = gradcheck_inputs(&setup);
        let padded: Vec<_> = bundles
            .iter()
            .map(|b| {
                let mut p = b.clone();
                let mut data = b.audio.data().to_vec();
                data.resize((b.audio.rows() + extra_frames) * b.audio.cols(), 0.0);
                p.audio = Tensor::new(vec![b.audio.rows() + extra_frames, b.audio.cols()], data).unwrap();
                p.max_tokens += extra_tokens;
                p
            })
            .collect();
        let a = predict_probs(&setup.model, &params, &bundles).unwrap();
        let b = predict_probs(&setup.model, &params, &padded).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn dropout_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for rate in [0.1, 0.3, 0.5] {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![1.0; 200_000]));
        let y = g.dropout(x, rate, true, &mut rng).unwrap();
        let v = g.value(y).data();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let dropped = v.iter().filter(|&&e| e == 0.0).count() as f64 / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{rate}: {mean}");
        assert!((dropped - rate).abs() < 0.005, "{rate}: {dropped}");
    }
}
