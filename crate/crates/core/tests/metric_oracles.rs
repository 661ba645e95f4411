//! Every metric against a deliberately naive re-derivation on 100 random
//! instances each.

mod common;

use common::*;
use paintscore::evaluation::{accuracy, confusion, mape, pearson, r_squared};
use paintscore::rubric::{icc_2_1, SchemeName};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn pearson_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (p, a) = series(&mut rng);
        assert!((pearson(&p, &a).unwrap() - oracle_pearson(&p, &a)).abs() < TOL);
    }
}

#[test]
fn r_squared_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (p, a) = series(&mut rng);
        assert!((r_squared(&p, &a).unwrap() - oracle_r_squared(&p, &a)).abs() < TOL);
    }
}

#[test]
fn mape_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (p, a) = series(&mut rng);
        assert!((mape(&p, &a).unwrap() - oracle_mape(&p, &a)).abs() < TOL);
    }
}

#[test]
fn icc_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let n = rng.gen_range(3..40);
        let k = rng.gen_range(2..5);
        let table: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let base: f64 = rng.gen_range(0.0..100.0);
                (0..k).map(|_| (base + rng.gen_range(-10.0..10.0)).round()).collect()
            })
            .collect();
        let rows: Vec<&[f64]> = table.iter().map(Vec::as_slice).collect();
        let got = icc_2_1(&rows).unwrap();
        assert!(
            (got - oracle_icc(&table)).abs() < TOL,
            "{got} vs {}",
            oracle_icc(&table)
        );
    }
}

#[test]
fn confusion_and_accuracy_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let name = SchemeName::ALL[i % 5];
        let (p, a) = series(&mut rng);
        let m = confusion(&p, &a, &name.scheme()).unwrap();
        let c = cuts(name).len() + 1;
        let mut expected = vec![vec![0u64; c]; c];
        let mut hits = 0;
        for j in 0..p.len() {
            let (ra, rp) = (oracle_class(a[j], cuts(name)), oracle_class(p[j], cuts(name)));
            expected[ra][rp] += 1;
            if ra == rp {
                hits += 1;
            }
        }
        assert_eq!(m.counts, expected);
        let acc = accuracy(&m).unwrap();
        assert!((acc - 100.0 * hits as f64 / p.len() as f64).abs() < TOL);
    }
}
