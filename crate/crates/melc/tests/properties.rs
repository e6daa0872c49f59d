//! Randomized invariants over the parsing, splitting, density, and model
//! file layers. Tolerances here match the corresponding unit tests.

use std::io::Cursor;

use melc::classifier::{classify_density, load_model, save_model, ProjectionModel, SavedModel};
use melc::data::{affine_transform, parse_libsvm, stratified_kfold, ClassData, Dataset};
use melc::density::{cip, dcs, Projection};
use melc::eval::{compute_metrics, ConfusionCounts};
use melc::optimizer::sphere_step;
use proptest::prelude::*;

fn nonzero_value() -> impl Strategy<Value = f64> {
    prop_oneof![0.001f64..100.0, -100.0f64..-0.001]
}

fn labels(n: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n)
}

fn unit_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("direction too short to normalize", |v| {
            v.iter().map(|x| x * x).sum::<f64>().sqrt() > 0.1
        })
        .prop_map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
}

/// Two classes with at least `min_per_class` points each, dim 2.
fn two_class_dataset(min_per_class: usize) -> impl Strategy<Value = Dataset> {
    let row = prop::collection::vec(-10.0f64..10.0, 2);
    (
        prop::collection::vec(row.clone(), min_per_class..=12),
        prop::collection::vec(row, min_per_class..=12),
    )
        .prop_map(|(pos, neg)| {
            let mut points = Vec::new();
            let mut labels = Vec::new();
            for p in &pos {
                points.extend_from_slice(p);
                labels.push(1);
            }
            for p in &neg {
                points.extend_from_slice(p);
                labels.push(-1);
            }
            Dataset::new(2, points, labels).unwrap()
        })
}

fn classes(ds: &Dataset) -> (ClassData, ClassData) {
    ds.split_classes()
}

proptest! {
    #[test]
    fn libsvm_write_parse_round_trip(
        parts in (1usize..=5, 1usize..=25).prop_flat_map(|(dim, n)| {
            (
                Just(dim),
                prop::collection::vec(nonzero_value(), n * dim),
                labels(n),
            )
        }),
    ) {
        let (dim, points, labels) = parts;
        let ds = Dataset::new(dim, points, labels).unwrap();
        let mut buf = Vec::new();
        ds.write_libsvm(&mut buf).unwrap();
        let back = parse_libsvm(Cursor::new(&buf), false).unwrap();
        prop_assert_eq!(back.dim(), ds.dim());
        prop_assert_eq!(back.labels(), ds.labels());
        for i in 0..ds.len() {
            prop_assert_eq!(back.point(i), ds.point(i));
        }
    }

    #[test]
    fn kfold_test_sets_partition_the_indices(
        sizes in (2usize..=15, 2usize..=15),
        k in 2usize..=4,
        seed in 0u64..1000,
    ) {
        let (n_pos, n_neg) = sizes;
        prop_assume!(k <= n_pos.min(n_neg));
        let n = n_pos + n_neg;
        let mut labels = vec![1i8; n_pos];
        labels.extend(vec![-1i8; n_neg]);
        let points: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ds = Dataset::new(1, points, labels).unwrap();
        let plan = stratified_kfold(&ds, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);
        let mut seen: Vec<usize> = plan.folds.iter().flat_map(|(_, test)| test.iter().copied()).collect();
        seen.sort_unstable();
        let all: Vec<usize> = (0..n).collect();
        prop_assert_eq!(&seen, &all);
        for (train, test) in &plan.folds {
            let mut joined: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
            joined.sort_unstable();
            prop_assert_eq!(&joined, &all);
        }
    }

    #[test]
    fn sphere_step_lands_on_the_unit_sphere(
        v in unit_vector(4),
        g in prop::collection::vec(-3.0f64..3.0, 4),
        alpha in 0.0f64..2.0,
    ) {
        let stepped = sphere_step(&v, &g, alpha);
        let norm: f64 = stepped.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12, "norm {}", norm);
    }

    #[test]
    fn dcs_ignores_direction_magnitude(
        ds in two_class_dataset(3),
        v in unit_vector(2),
        c in prop_oneof![0.25f64..4.0, -4.0f64..-0.25],
        gamma in 0.5f64..2.0,
    ) {
        let (xp, xn) = classes(&ds);
        let base = dcs(&v, &xp, &xn, gamma).unwrap();
        let scaled_v: Vec<f64> = v.iter().map(|x| x * c).collect();
        let scaled = dcs(&scaled_v, &xp, &xn, gamma).unwrap();
        prop_assert!((scaled - base).abs() <= 1e-9 * (1.0 + base.abs()),
            "dcs {} vs {} under v scale {}", base, scaled, c);
    }

    #[test]
    fn dcs_ignores_shared_translation(
        ds in two_class_dataset(3),
        v in unit_vector(2),
        shift in prop::collection::vec(-5.0f64..5.0, 2),
        gamma in 0.5f64..2.0,
    ) {
        let (xp, xn) = classes(&ds);
        let base = dcs(&v, &xp, &xn, gamma).unwrap();
        let identity = vec![1.0, 0.0, 0.0, 1.0];
        let moved = affine_transform(&ds, &identity, &shift).unwrap();
        let (mp, mn) = classes(&moved);
        let shifted = dcs(&v, &mp, &mn, gamma).unwrap();
        prop_assert!((shifted - base).abs() <= 1e-9 * (1.0 + base.abs()),
            "dcs {} vs {} under shift {:?}", base, shifted, shift);
    }

    #[test]
    fn cip_is_symmetric_in_its_classes(
        ds in two_class_dataset(2),
        v in unit_vector(2),
        gamma in 0.5f64..2.0,
    ) {
        let (xp, xn) = classes(&ds);
        let ab = cip(&v, &xp, &xn, gamma).unwrap();
        let ba = cip(&v, &xn, &xp, gamma).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(ba.abs()),
            "cip {} vs {}", ab, ba);
    }

    #[test]
    fn model_file_round_trip_keeps_every_prediction(
        pos in prop::collection::vec(-5.0f64..5.0, 2..=10),
        neg in prop::collection::vec(-5.0f64..5.0, 2..=10),
        v in unit_vector(3),
        gamma in 0.5f64..2.0,
        widths in (0.2f64..1.5, 0.2f64..1.5),
        queries in prop::collection::vec(prop::collection::vec(-6.0f64..6.0, 3), 20),
    ) {
        let model = ProjectionModel::new(
            v,
            gamma,
            widths.0,
            widths.1,
            Projection::uniform(pos).unwrap(),
            Projection::uniform(neg).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        save_model(&SavedModel::from_projection(&model), &mut buf).unwrap();
        let loaded = load_model(Cursor::new(&buf)).unwrap().projection_model().unwrap().unwrap();
        for q in &queries {
            let (l0, p0) = classify_density(&model, q).unwrap();
            let (l1, p1) = classify_density(&loaded, q).unwrap();
            prop_assert_eq!(l0, l1, "label flip after reload at {:?}", q);
            prop_assert_eq!(p0.to_bits(), p1.to_bits(), "likelihood drift after reload");
        }
    }

    #[test]
    fn confusion_metrics_stay_in_range(
        labels_preds in (2usize..=40).prop_flat_map(|n| (labels(n), labels(n)))
            .prop_filter("need both classes among labels", |(l, _)| {
                l.contains(&1) && l.contains(&-1)
            }),
    ) {
        let (labels, preds) = labels_preds;
        let c = ConfusionCounts::from_predictions(&labels, &preds).unwrap();
        let (acc, mcc, wac) = compute_metrics(&c).unwrap();
        let n = labels.len() as f64;
        let exact_acc = (c.true_pos + c.true_neg) as f64 / n;
        prop_assert_eq!(acc, exact_acc);
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert!((-1.0..=1.0).contains(&mcc));
        prop_assert!((0.0..=1.0).contains(&wac));
    }
}
