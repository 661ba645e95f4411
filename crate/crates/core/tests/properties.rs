use paintscore::dataset::{split_every_kth, DatasetManifest, PaintingRecord, Source, Split};
use paintscore::evaluation::{accuracy, confusion, fisher_ci, pearson, r_squared};
use paintscore::preprocess::{self, PreprocessConfig};
use paintscore::rubric::{band_of, bin, consensus, total, Rating, RubricScore, SchemeName};
use proptest::prelude::*;

fn component() -> impl Strategy<Value = f64> {
    (0u8..=20).prop_map(f64::from)
}

fn record(i: usize, source: Source) -> PaintingRecord {
    PaintingRecord {
        id: format!("p{i:03}"),
        image_path: format!("{i}.png").into(),
        source,
        width: 600,
        height: 600,
        ratings: vec![],
        consensus_total: None,
        consensus_components: None,
        split: Split::Unassigned,
    }
}

proptest! {
    #[test]
    fn total_is_component_sum(c in proptest::array::uniform5(component())) {
        let r = RubricScore::from_array(c).unwrap();
        let t = total(&r).unwrap();
        prop_assert_eq!(t, c.iter().sum::<f64>());
        prop_assert!((0.0..=100.0).contains(&t));
        for v in c {
            prop_assert!(band_of(v).is_ok());
        }
    }

    #[test]
    fn binning_is_total_and_monotone(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
        for name in SchemeName::ALL {
            let s = name.scheme();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.class_index(lo).unwrap() <= s.class_index(hi).unwrap());
            prop_assert!(bin(lo, &s).is_ok());
        }
    }

    #[test]
    fn consensus_of_identical_ratings_is_that_rating(c in proptest::array::uniform5(component()), k in 1usize..5) {
        let rubric = RubricScore::from_array(c).unwrap();
        let ratings: Vec<Rating> = (0..k).map(|i| Rating {
            painting_id: "p".into(),
            rater_id: format!("r{i}"),
            rubric,
            timestamp: chrono::DateTime::<chrono::Utc>::UNIX_EPOCH,
        }).collect();
        let cons = consensus(&ratings).unwrap();
        prop_assert_eq!(cons.components, rubric);
        prop_assert_eq!(cons.total, rubric.total());
    }

    #[test]
    fn pearson_affine_invariant(
        xs in proptest::collection::vec(0.0f64..100.0, 5..40),
        noise in proptest::collection::vec(-10.0f64..10.0, 40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, n)| x + n).collect();
        let base = pearson(&xs, &ys);
        prop_assume!(base.is_ok());
        let moved: Vec<f64> = xs.iter().map(|x| x * scale + shift).collect();
        prop_assert!((pearson(&moved, &ys).unwrap() - base.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn r_squared_at_most_one(
        actual in proptest::collection::vec(0.0f64..100.0, 3..30),
        pred in proptest::collection::vec(0.0f64..100.0, 30),
    ) {
        let pred = &pred[..actual.len()];
        if let Ok(r2) = r_squared(pred, &actual) {
            prop_assert!(r2 <= 1.0);
        }
    }

    #[test]
    fn fisher_ci_brackets_r(r in -0.999f64..0.999, n in 4usize..500) {
        let (lo, hi) = fisher_ci(r, n, 0.05).unwrap();
        prop_assert!(-1.0 < lo && lo <= r && r <= hi && hi < 1.0);
    }

    #[test]
    fn confusion_partitions_and_translation_within_class_keeps_accuracy(
        pairs in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..60),
    ) {
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let actual: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        for name in SchemeName::ALL {
            let s = name.scheme();
            let m = confusion(&pred, &actual, &s).unwrap();
            prop_assert_eq!(m.total(), pairs.len() as u64);
            // move every score to the bottom of its own class
            let floor = |v: f64| s.classes[s.class_index(v).unwrap()].lower;
            let p2: Vec<f64> = pred.iter().map(|v| floor(*v)).collect();
            let a2: Vec<f64> = actual.iter().map(|v| floor(*v)).collect();
            let m2 = confusion(&p2, &a2, &s).unwrap();
            prop_assert_eq!(accuracy(&m).unwrap(), accuracy(&m2).unwrap());
        }
    }

    #[test]
    fn split_partitions_by_position(n in 1usize..300, k in 2usize..12, artists in 0usize..300) {
        let artists = artists.min(n);
        let recs = (0..n).map(|i| record(i, if i < artists { Source::Artist } else { Source::Child })).collect();
        let mut m = DatasetManifest::new("", recs);
        let s = split_every_kth(&mut m, k).unwrap();
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        prop_assert_eq!(s.test.len(), n / k);
        for (i, r) in m.records.iter().enumerate() {
            prop_assert_eq!(r.split == Split::Test, (i + 1) % k == 0);
        }
        let again = split_every_kth(&mut m, k).unwrap();
        prop_assert_eq!(again, s);
    }

    #[test]
    fn crop_is_largest_centered_square(w in 1u32..900, h in 1u32..900) {
        let win = preprocess::crop_window(w, h);
        prop_assert_eq!(win.side, w.min(h));
        prop_assert!(win.x + win.side <= w && win.y + win.side <= h);
        prop_assert!((w - win.side - win.x) as i64 - win.x as i64 <= 1);
    }

    #[test]
    fn flip_decisions_are_pure(seed in any::<u64>(), key in any::<u64>()) {
        let cfg = PreprocessConfig { seed, ..PreprocessConfig::mini() };
        prop_assert_eq!(preprocess::flip_decisions(&cfg, key), preprocess::flip_decisions(&cfg, key));
    }
}
