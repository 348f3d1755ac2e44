use mapfuse_core::metrics::{accumulate, evaluate, evaluate_many, f1_scores, ConfusionMatrix, EvalReport};
use mapfuse_core::rasters::{LabelMap, UNDEFINED};
use mapfuse_core::scenegen::default_class_names;
use proptest::prelude::*;

fn pair(max: usize, k: u8) -> impl Strategy<Value = (LabelMap, LabelMap)> {
    (1..=max, 1..=max).prop_flat_map(move |(h, w)| {
        let reference = proptest::collection::vec(prop_oneof![6 => 0..k, 1 => Just(UNDEFINED)], h * w);
        let predicted = proptest::collection::vec(0..k, h * w);
        (reference, predicted)
            .prop_map(move |(r, p)| (LabelMap::new(h, w, p).unwrap(), LabelMap::new(h, w, r).unwrap()))
    })
}

/// Per-class F1 and OA by direct counting over pixels.
fn brute(pred: &LabelMap, reference: &LabelMap, k: u8) -> (Vec<Option<f64>>, Option<f64>) {
    let pairs: Vec<(u8, u8)> =
        pred.values.iter().zip(&reference.values).filter(|(_, &r)| r != UNDEFINED).map(|(&p, &r)| (p, r)).collect();
    let f1 = (0..k)
        .map(|c| {
            let tp = pairs.iter().filter(|&&(p, r)| p == c && r == c).count() as f64;
            let fp = pairs.iter().filter(|&&(p, r)| p == c && r != c).count() as f64;
            let fneg = pairs.iter().filter(|&&(p, r)| p != c && r == c).count() as f64;
            if tp + fp + fneg == 0.0 {
                None
            } else if tp == 0.0 {
                Some(0.0)
            } else {
                Some(2.0 * tp / (2.0 * tp + fp + fneg))
            }
        })
        .collect();
    let correct = pairs.iter().filter(|(p, r)| p == r).count();
    let oa = (!pairs.is_empty()).then(|| correct as f64 / pairs.len() as f64);
    (f1, oa)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_brute_force((pred, reference) in pair(64, 6)) {
        let mut cm = ConfusionMatrix::new(6);
        accumulate(&mut cm, &pred, &reference).unwrap();
        let (f1, oa) = brute(&pred, &reference, 6);
        prop_assert_eq!(f1_scores(&cm), f1);
        prop_assert_eq!(cm.overall_accuracy(), oa);
        prop_assert_eq!(cm.total() as usize, reference.labeled_count());
    }

    #[test]
    fn class_permutation_permutes_scores((pred, reference) in pair(32, 4), shift in 1u8..4) {
        let perm = |m: &LabelMap| {
            let v = m.values.iter().map(|&c| if c == UNDEFINED { c } else { (c + shift) % 4 }).collect();
            LabelMap::new(m.height, m.width, v).unwrap()
        };
        let mut a = ConfusionMatrix::new(4);
        let mut b = ConfusionMatrix::new(4);
        accumulate(&mut a, &pred, &reference).unwrap();
        accumulate(&mut b, &perm(&pred), &perm(&reference)).unwrap();
        let (fa, fb) = (f1_scores(&a), f1_scores(&b));
        for c in 0..4u8 {
            prop_assert_eq!(fa[c as usize], fb[((c + shift) % 4) as usize]);
        }
        prop_assert_eq!(a.overall_accuracy(), b.overall_accuracy());
    }

    #[test]
    fn perfect_prediction_scores_full_marks((_, reference) in pair(32, 6)) {
        let filled = reference.values.iter().map(|&c| if c == UNDEFINED { 0 } else { c }).collect();
        let pred = LabelMap::new(reference.height, reference.width, filled).unwrap();
        let mut cm = ConfusionMatrix::new(6);
        accumulate(&mut cm, &pred, &reference).unwrap();
        if cm.total() > 0 {
            prop_assert_eq!(cm.trace(), cm.total());
            for f in f1_scores(&cm).into_iter().flatten() {
                prop_assert_eq!(f, 1.0);
            }
        }
    }
}

#[test]
fn undefined_reference_pixels_are_ignored() {
    let reference = LabelMap::new(1, 4, vec![0, UNDEFINED, 1, UNDEFINED]).unwrap();
    let a = LabelMap::new(1, 4, vec![0, 1, 1, 2]).unwrap();
    let b = LabelMap::new(1, 4, vec![0, 2, 1, 0]).unwrap();
    let classes = default_class_names();
    assert_eq!(evaluate(&a, &reference, &classes, 0).unwrap().confusion, evaluate(&b, &reference, &classes, 0).unwrap().confusion);
}

#[test]
fn eroded_evaluation_skips_boundaries() {
    // Left half class 0, right half class 1; the prediction is wrong exactly
    // on the two boundary columns, which radius-1 erosion removes.
    let (h, w) = (4, 8);
    let reference = LabelMap::new(h, w, (0..h * w).map(|i| u8::from(i % w >= 4)).collect()).unwrap();
    let mut pred = reference.clone();
    for y in 0..h {
        pred.set(y, 3, 1);
        pred.set(y, 4, 0);
    }
    let classes = default_class_names();
    let raw = evaluate(&pred, &reference, &classes, 0).unwrap();
    let eroded = evaluate(&pred, &reference, &classes, 1).unwrap();
    assert!(raw.overall_accuracy.unwrap() < eroded.overall_accuracy.unwrap());
    assert_eq!(eroded.confusion.total(), (h * (w - 2)) as u64);
    assert_eq!(eroded.confusion.trace(), eroded.confusion.total());
    assert!(eroded.eroded && !raw.eroded);
    assert_eq!(eroded.f1(2), None);
}

#[test]
fn report_json_round_trip() {
    let reference = LabelMap::new(2, 3, vec![0, 1, 2, 3, 4, UNDEFINED]).unwrap();
    let pred = LabelMap::new(2, 3, vec![0, 1, 1, 3, 5, 5]).unwrap();
    let report = evaluate_many([(&pred, &reference), (&pred, &reference)], &default_class_names(), 0).unwrap();
    assert_eq!(report.confusion.total(), 10);
    let back: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    let table = report.to_table();
    assert!(table.contains("building"));
}

#[test]
fn merge_adds_counts() {
    let reference = LabelMap::new(1, 3, vec![0, 1, 2]).unwrap();
    let pred = LabelMap::new(1, 3, vec![0, 2, 2]).unwrap();
    let mut a = ConfusionMatrix::new(3);
    accumulate(&mut a, &pred, &reference).unwrap();
    let mut b = a.clone();
    b.merge(&a).unwrap();
    assert_eq!(b.total(), 6);
    assert_eq!(b.get(1, 2), 2);
    assert!(b.merge(&ConfusionMatrix::new(4)).is_err());
}
