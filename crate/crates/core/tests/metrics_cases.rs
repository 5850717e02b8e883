use meter::augment::{DepthSample, DepthUnit};
use meter::metrics::{
    delta1, evaluate_prediction, evaluate_samples, rel, rmse, ConstantDepth, DepthPredictor, EvalCrop,
    GroundTruthOracle, DELTA1_THRESHOLD,
};
use meter::{Error, Result, Shape, Tensor};
use proptest::prelude::*;

fn all(n: usize) -> Vec<bool> {
    vec![true; n]
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn rmse_hand_cases() {
    close(rmse(&[1.0, 2.0], &[1.0, 4.0], &all(2)).unwrap(), 2f64.sqrt());
    close(rmse(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5], &all(3)).unwrap(), 0.5);
    assert_eq!(rmse(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], &all(3)).unwrap(), 0.0);
}

#[test]
fn rel_hand_cases() {
    close(rel(&[2.0], &[3.0], &all(1)).unwrap(), 0.5);
    close(rel(&[1.0, 2.0, 4.0], &[2.0, 1.0, 4.0], &all(3)).unwrap(), 0.5);
    assert_eq!(rel(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], &all(3)).unwrap(), 0.0);
}

#[test]
fn delta1_hand_cases() {
    assert_eq!(delta1(&[1.0], &[1.3], &all(1), DELTA1_THRESHOLD).unwrap(), 0.0);
    close(delta1(&[1.0, 1.0], &[1.2, 2.0], &all(2), DELTA1_THRESHOLD).unwrap(), 0.5);
    close(delta1(&[1.0, 2.0, 4.0], &[1.1, 1.0, 4.0], &all(3), DELTA1_THRESHOLD).unwrap(), 2.0 / 3.0);
    assert_eq!(delta1(&[2.0], &[2.5], &all(1), DELTA1_THRESHOLD).unwrap(), 0.0, "ratio 1.25 is not < 1.25");
    assert_eq!(delta1(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], &all(3), DELTA1_THRESHOLD).unwrap(), 1.0);
}

#[test]
fn mask_selects_pixels() {
    let mask = [true, false, true];
    close(rmse(&[1.0, 9.0, 2.0], &[1.0, 0.5, 3.0], &mask).unwrap(), 0.5f64.sqrt());
    assert!(rmse(&[1.0], &[1.0], &[false]).is_err());
    assert!(rel(&[1.0, 2.0], &[1.0], &all(2)).is_err());
}

fn sample(depth: Tensor) -> DepthSample {
    let s = depth.shape();
    let rgb = Tensor::full(Shape::new(1, 3, s.height, s.width), 0.5);
    DepthSample::new(rgb, depth, DepthUnit::IndoorCm, 10.0).unwrap()
}

/// Predicts at full resolution from a fixed function of the ground truth.
struct MapPredictor(fn(f32) -> f32);

impl DepthPredictor for MapPredictor {
    fn predict(&self, s: &DepthSample) -> Result<Tensor> {
        Ok(s.depth.map(self.0))
    }
}

#[test]
fn dataset_metrics_are_per_image_means() {
    let maps: Vec<Tensor> = (0..3)
        .map(|k| Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, x| 1.0 + (k * 16 + y * 4 + x) as f32 * 0.1))
        .collect();
    let f = |v: f32| v * 1.2 + 0.05;
    let report =
        evaluate_samples(&MapPredictor(f), maps.iter().map(|m| ("m".to_string(), Ok(sample(m.clone())))), None)
            .unwrap();
    let mut want = [0.0f64; 3];
    for m in &maps {
        let y: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
        let p: Vec<f64> = m.data().iter().map(|&v| f(v) as f64).collect();
        let n = y.len() as f64;
        want[0] += (y.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt() / 3.0;
        want[1] += y.iter().zip(&p).map(|(a, b)| (a - b).abs() / a).sum::<f64>() / n / 3.0;
        want[2] += y.iter().zip(&p).filter(|(a, b)| (*a / *b).max(*b / *a) < 1.25).count() as f64 / n / 3.0;
    }
    close(report.rmse_m, want[0]);
    close(report.rel, want[1]);
    close(report.delta1, want[2]);
    assert_eq!(report.images_evaluated, 3);
    assert_eq!(report.pixels_evaluated, 48);
}

#[test]
fn perfect_and_constant_predictors() {
    let plane = Tensor::full(Shape::new(1, 1, 8, 8), 2.0);
    let one = |t: &Tensor| vec![("p".to_string(), Ok(sample(t.clone())))];
    let r = evaluate_samples(&GroundTruthOracle, one(&plane), None).unwrap();
    assert_eq!((r.rmse_m, r.rel, r.delta1), (0.0, 0.0, 1.0));
    let r = evaluate_samples(&ConstantDepth(2.0), one(&plane), None).unwrap();
    assert_eq!((r.rmse_m, r.rel, r.delta1), (0.0, 0.0, 1.0));
    let far = Tensor::full(Shape::new(1, 1, 8, 8), 2.5);
    let r = evaluate_samples(&ConstantDepth(2.0), one(&far), None).unwrap();
    close(r.rmse_m, 0.5);
    close(r.rel, 0.2);
    assert_eq!(r.delta1, 0.0);
}

#[test]
fn duplicated_sample_gives_identical_report() {
    let m = Tensor::from_fn(Shape::new(1, 1, 6, 6), |_, _, y, x| 1.0 + (y * 6 + x) as f32 * 0.05);
    let single = evaluate_samples(&ConstantDepth(2.0), vec![("a".into(), Ok(sample(m.clone())))], None).unwrap();
    let double = evaluate_samples(
        &ConstantDepth(2.0),
        vec![("a".into(), Ok(sample(m.clone()))), ("a".into(), Ok(sample(m)))],
        None,
    )
    .unwrap();
    assert_eq!((single.rmse_m, single.rel, single.delta1), (double.rmse_m, double.rel, double.delta1));
}

#[test]
fn failed_samples_are_skipped_and_recorded() {
    let good = Tensor::full(Shape::new(1, 1, 4, 4), 3.0);
    let empty = Tensor::zeros(Shape::new(1, 1, 4, 4));
    let samples = vec![
        ("good".to_string(), Ok(sample(good))),
        ("holes".to_string(), Ok(sample(empty.clone()))),
        ("broken".to_string(), Err(Error::Validation("unreadable".into()))),
    ];
    let r = evaluate_samples(&ConstantDepth(3.0), samples, None).unwrap();
    assert_eq!(r.images_evaluated, 1);
    assert_eq!(r.failures.iter().map(|f| f.label.as_str()).collect::<Vec<_>>(), ["holes", "broken"]);
    let only_bad = vec![("holes".to_string(), Ok(sample(empty)))];
    assert!(matches!(evaluate_samples(&ConstantDepth(3.0), only_bad, None), Err(Error::EmptyDataset(_))));
}

#[test]
fn crop_restricts_the_evaluated_pixels() {
    let gt = Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, _| if y < 2 { 1.0 } else { 5.0 });
    let pred = Tensor::full(Shape::new(1, 1, 4, 4), 1.0);
    let top = EvalCrop::new(0.0, 0.5, 0.0, 1.0).unwrap();
    let m = evaluate_prediction(&pred, &gt, Some(top)).unwrap();
    assert_eq!((m.rmse_m, m.rel, m.delta1, m.pixels), (0.0, 0.0, 1.0, 8));
    assert!("0.5,0.2,0,1".parse::<EvalCrop>().is_err());
}

proptest! {
    #[test]
    fn metric_ranges(y in prop::collection::vec(0.1f32..10.0, 1..40), scale in 0.2f32..5.0) {
        let p: Vec<f32> = y.iter().map(|v| v * scale).collect();
        let mask = all(y.len());
        let d = delta1(&y, &p, &mask, DELTA1_THRESHOLD).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(rmse(&y, &p, &mask).unwrap() >= 0.0);
        let r = rel(&y, &p, &mask).unwrap();
        prop_assert!((r - (scale as f64 - 1.0).abs()).abs() < 1e-5);
    }
}
