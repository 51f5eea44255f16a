mod common;

use common::rng;
use lunet::metrics::{accumulate_confusion, compute_report, ConfusionMatrix};
use lunet::tensor::ClassMap;
use proptest::prelude::*;
use rand::Rng;

fn random_map(r: &mut impl Rng, k: u32, h: usize, w: usize) -> ClassMap {
    ClassMap::new(1, h, w, (0..h * w).map(|_| r.gen_range(0..k)).collect()).unwrap()
}

/// Recounts everything straight from the maps.
fn brute_force(pred: &ClassMap, truth: &ClassMap, k: usize) -> (f64, f64, Vec<Vec<u64>>) {
    let n = pred.classes.len() as f64;
    let mut cm = vec![vec![0u64; k]; k];
    let mut agree = 0.0;
    for (&p, &t) in pred.classes.iter().zip(&truth.classes) {
        cm[t as usize][p as usize] += 1;
        if p == t {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let mut pe = 0.0;
    for c in 0..k as u32 {
        let pt = truth.classes.iter().filter(|&&v| v == c).count() as f64 / n;
        let pp = pred.classes.iter().filter(|&&v| v == c).count() as f64 / n;
        pe += pt * pp;
    }
    let kappa = if pe == 1.0 { f64::from(u8::from(po == 1.0)) } else { (po - pe) / (1.0 - pe) };
    (po, kappa, cm)
}

#[test]
fn report_matches_brute_force_recount() {
    let mut r = rng(21);
    for case in 0..100 {
        let k = if case % 2 == 0 { 2 } else { 8 };
        let truth = random_map(&mut r, k, 16, 16);
        // correlate the prediction with the truth so kappa is not ~0
        let pred = ClassMap {
            classes: truth.classes.iter().map(|&t| if r.gen_bool(0.7) { t } else { r.gen_range(0..k) }).collect(),
            ..truth.clone()
        };
        let cm = accumulate_confusion(&pred, &truth, ConfusionMatrix::new(k as usize)).unwrap();
        let rep = compute_report(&cm).unwrap();
        let (acc, kappa, counts) = brute_force(&pred, &truth, k as usize);
        assert_eq!(rep.confusion, counts);
        assert_eq!(cm.total(), 256);
        assert!((rep.accuracy - acc).abs() < 1e-15);
        assert!((rep.kappa - kappa).abs() < 1e-12);
        if k == 2 {
            assert_eq!(rep.fp.unwrap(), counts[0][1] as f64 / 256.0);
            assert_eq!(rep.fn_.unwrap(), counts[1][0] as f64 / 256.0);
        } else {
            assert!(rep.fp.is_none() && rep.oe.is_none());
        }
    }
}

#[test]
fn hand_evaluated_fixture() {
    let cm = ConfusionMatrix::from_rows(&[vec![40, 10], vec![5, 45]]).unwrap();
    let r = compute_report(&cm).unwrap();
    assert!((r.accuracy - 0.85).abs() < 1e-15);
    assert!((r.kappa - 0.70).abs() < 1e-12);
    assert!((r.fp.unwrap() - 0.10).abs() < 1e-15);
    assert!((r.fn_.unwrap() - 0.05).abs() < 1e-15);
    assert!((r.oe.unwrap() - 0.15).abs() < 1e-15);
    assert_eq!(r.oe.unwrap(), r.fp.unwrap() + r.fn_.unwrap());
}

#[test]
fn table_rendering_fixture() {
    let r = lunet::metrics::MetricsReport {
        accuracy: 0.9010,
        kappa: 0.7874,
        fp: Some(0.0959),
        fn_: Some(0.0031),
        oe: Some(0.0970),
        confusion: vec![],
    };
    let t = r.table("AL-UNet");
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].contains("AL-UNet"));
    assert!(lines[1].starts_with("Accuracy") && lines[1].ends_with("90.10%"));
    assert!(lines[2].ends_with("0.7874"));
    assert!(lines[3].starts_with("FP") && lines[3].ends_with("0.0959"));
    assert!(lines[4].starts_with("FN") && lines[4].ends_with("0.0031"));
    assert!(lines[5].starts_with("OE") && lines[5].ends_with("0.0970"));
}

#[test]
fn errors() {
    assert!(compute_report(&ConfusionMatrix::new(2)).is_err());
    let a = ClassMap::filled(1, 2, 2, 0);
    let b = ClassMap::filled(1, 2, 3, 0);
    assert!(accumulate_confusion(&a, &b, ConfusionMatrix::new(2)).is_err());
    let bad = ClassMap::filled(1, 2, 2, 2);
    assert!(accumulate_confusion(&bad, &a, ConfusionMatrix::new(2)).is_err());
    assert!(ConfusionMatrix::from_rows(&[vec![1, 2]]).is_err());
}

#[test]
fn tiles_accumulate_like_the_whole_image() {
    let mut r = rng(22);
    let truth = random_map(&mut r, 8, 8, 16);
    let pred = random_map(&mut r, 8, 8, 16);
    let whole = accumulate_confusion(&pred, &truth, ConfusionMatrix::new(8)).unwrap();
    let half = |m: &ClassMap, top: bool| ClassMap {
        height: 4,
        classes: if top { m.classes[..64].to_vec() } else { m.classes[64..].to_vec() },
        ..m.clone()
    };
    let mut cm = ConfusionMatrix::new(8);
    cm.accumulate(&half(&pred, true), &half(&truth, true)).unwrap();
    cm.accumulate(&half(&pred, false), &half(&truth, false)).unwrap();
    assert_eq!(cm, whole);
    let mut a = accumulate_confusion(&half(&pred, true), &half(&truth, true), ConfusionMatrix::new(8)).unwrap();
    a.merge(&accumulate_confusion(&half(&pred, false), &half(&truth, false), ConfusionMatrix::new(8)).unwrap())
        .unwrap();
    assert_eq!(a, whole);
}

fn square(k: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(prop::collection::vec(0u64..50, k), k)
        .prop_filter("non-empty", |rows| rows.iter().flatten().sum::<u64>() > 0)
}

proptest! {
    #[test]
    fn kappa_invariant_under_relabeling(rows in square(4), perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle()) {
        let permuted: Vec<Vec<u64>> = (0..4).map(|i| (0..4).map(|j| rows[perm[i]][perm[j]]).collect()).collect();
        let a = compute_report(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = compute_report(&ConfusionMatrix::from_rows(&permuted).unwrap()).unwrap();
        prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-15);
    }

    #[test]
    fn kappa_one_iff_diagonal(rows in square(3)) {
        let r = compute_report(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        let off: u64 = (0..3).flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| rows[i][j]).sum();
        prop_assert_eq!(r.kappa == 1.0, off == 0);
        prop_assert!(r.kappa <= 1.0 && r.kappa.is_finite());
    }

    #[test]
    fn overall_error_is_additive(rows in square(2)) {
        let r = compute_report(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        prop_assert_eq!(r.oe.unwrap(), r.fp.unwrap() + r.fn_.unwrap());
        prop_assert!((r.oe.unwrap() + r.accuracy - 1.0).abs() < 1e-12);
    }
}
