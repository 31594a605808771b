use geoembed_core::data::{corrupt_aux, read_features, shuffle_aux_within_class, split_by_class, write_features, Example, SplitSpec};
use geoembed_core::eval::{auc, rank_statistic};
use geoembed_core::losses::{basis_vector, LossKind, LossRecipe};
use geoembed_core::sampling::{sample_batch, validate_tuples, SamplerConfig};
use geoembed_core::spaces::{project, SpaceConfig};
use geoembed_core::{Dataset, Rng};
use proptest::prelude::*;

fn dataset(rows: &[(usize, usize)], num_aux: usize, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let num_classes = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let examples = rows
        .iter()
        .map(|&(c, a)| Example {
            features: (0..3).map(|_| rng.normal()).collect(),
            class_id: c,
            aux_label: a % num_aux,
        })
        .collect();
    Dataset::new(examples, num_classes, num_aux).unwrap()
}

/// Classes with 2..6 examples each and arbitrary aux labels.
fn rows_strategy() -> impl Strategy<Value = (Vec<(usize, usize)>, usize)> {
    (2usize..6, 3usize..10).prop_flat_map(|(k, classes)| {
        prop::collection::vec(prop::collection::vec(0..k, 2..6), classes).prop_map(move |cls| {
            let rows = cls
                .into_iter()
                .enumerate()
                .flat_map(|(c, labels)| labels.into_iter().map(move |a| (c, a)))
                .collect();
            (rows, k)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_classes((rows, k) in rows_strategy(), seed in any::<u64>()) {
        let ds = dataset(&rows, k, seed);
        let n = ds.class_ids().len();
        let train = n / 2;
        let val = (n - train) / 2;
        let s = split_by_class(&ds, &SplitSpec { train, val, test: n - train - val, seed }).unwrap();
        let ids = |d: &Dataset| d.class_ids();
        let (a, b, c) = (ids(&s.train), ids(&s.val), ids(&s.test));
        prop_assert!(a.iter().all(|x| !b.contains(x) && !c.contains(x)));
        prop_assert!(b.iter().all(|x| !c.contains(x)));
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), ds.len());
    }

    #[test]
    fn shuffle_keeps_features_and_histograms((rows, k) in rows_strategy(), seed in any::<u64>()) {
        let ds = dataset(&rows, k, 1);
        let sh = shuffle_aux_within_class(&ds, seed);
        prop_assert_eq!(sh.aux_histograms(), ds.aux_histograms());
        for (x, y) in ds.examples().iter().zip(sh.examples()) {
            prop_assert_eq!(&x.features, &y.features);
            prop_assert_eq!(x.class_id, y.class_id);
        }
    }

    #[test]
    fn corruption_extremes((rows, k) in rows_strategy(), seed in any::<u64>()) {
        let ds = dataset(&rows, k, 2);
        prop_assert_eq!(corrupt_aux(&ds, 0.0, seed).unwrap(), ds.clone());
        let all = corrupt_aux(&ds, 1.0, seed).unwrap();
        for (x, y) in ds.examples().iter().zip(all.examples()) {
            prop_assert_ne!(x.aux_label, y.aux_label);
            if k == 2 {
                prop_assert_eq!(y.aux_label, 1 - x.aux_label);
            }
        }
    }

    #[test]
    fn sampled_tuples_are_valid((rows, k) in rows_strategy(), seed in any::<u64>()) {
        let ds = dataset(&rows, k, 3);
        for kind in [LossKind::Pdm, LossKind::Pdp, LossKind::Fbv, LossKind::Ce, LossKind::Mtl] {
            let recipe = LossRecipe::equal_weights(&[LossKind::Tl, kind], SpaceConfig::euclidean(), true).unwrap();
            let cfg = SamplerConfig { batch_size: 50, seed, max_retries: 10_000 };
            // infeasible datasets must error rather than return bad tuples
            if let Ok(b) = sample_batch(&ds, &recipe, &cfg, &mut Rng::new(seed)) {
                prop_assert!(validate_tuples(&ds, &b).is_empty());
                prop_assert_eq!(b.count(kind), 50);
            }
        }
    }

    #[test]
    fn feature_files_round_trip((rows, k) in rows_strategy(), seed in any::<u64>()) {
        let ds = dataset(&rows, k, seed);
        let mut buf = Vec::new();
        write_features(&ds, &mut buf).unwrap();
        prop_assert_eq!(read_features(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn auc_bounds_and_symmetry(
        pos in prop::collection::vec(-5i32..5, 1..40),
        neg in prop::collection::vec(-5i32..5, 1..40),
    ) {
        let p: Vec<f64> = pos.iter().map(|&x| x as f64).collect();
        let n: Vec<f64> = neg.iter().map(|&x| x as f64).collect();
        let a = auc(&p, &n).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let (s, t) = (rank_statistic(&p, &n).unwrap(), rank_statistic(&n, &p).unwrap());
        prop_assert_eq!(s.twice_u + t.twice_u, 2 * p.len() as u128 * n.len() as u128);
        let shifted: Vec<f64> = p.iter().map(|x| 3.0 * x + 7.0).collect();
        let shifted_n: Vec<f64> = n.iter().map(|x| 3.0 * x + 7.0).collect();
        prop_assert_eq!(rank_statistic(&shifted, &shifted_n).unwrap(), s);
    }

    #[test]
    fn basis_vectors_compose(k in 2usize..6, extra in 0usize..4, a in 0usize..6, b in 0usize..6, c in 0usize..6, beta in 0.1f64..5.0) {
        let d = k - 1 + extra;
        let (a, b, c) = (a % k, b % k, c % k);
        prop_assume!(a != b && b != c && a != c);
        let ab = basis_vector(a, b, k, d, beta).unwrap();
        let bc = basis_vector(b, c, k, d, beta).unwrap();
        let ac = basis_vector(a, c, k, d, beta).unwrap();
        for i in 0..d {
            prop_assert!((ab[i] + bc[i] - ac[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spherical_projection_has_unit_norm(v in prop::collection::vec(-100.0f64..100.0, 1..10)) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let y = project(&SpaceConfig::spherical(), &v).unwrap();
        prop_assert!((y.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        prop_assert_eq!(project(&SpaceConfig::euclidean(), &v).unwrap(), v);
    }
}
