use approx::assert_abs_diff_eq;
use rgbdtrack::geometry::BBox;
use rgbdtrack::metrics::{accumulate, evaluate, evaluate_benchmark, SequenceGT};
use rgbdtrack::simulator::{generate, scenario_suite, ScenarioSpec};
use rgbdtrack::tracker::{run_sequence, TrackerParams};
use rgbdtrack_testkit::hota_oracle;

fn small_scenarios() -> Vec<ScenarioSpec> {
    ["crossing", "occlusion", "lifecycle", "scale"]
        .iter()
        .flat_map(|n| scenario_suite(n).unwrap())
        .filter(|s| s.targets.len() <= 5 && s.frames <= 50)
        .collect()
}

fn tracked(spec: &ScenarioSpec, params: &TrackerParams) -> (SequenceGT, SequenceGT) {
    let g = generate(spec);
    let out = run_sequence(&g.detections, &g.depths, params).unwrap();
    let pred = SequenceGT::from_results(&out, g.gt.num_frames);
    (g.gt, pred)
}

fn check(gt: &SequenceGT, pred: &SequenceGT) {
    let ours = evaluate(gt, pred).unwrap().to_array();
    let oracle = hota_oracle(gt, pred);
    for (a, b) in ours.iter().zip(oracle.bundle) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
    }
    let per = accumulate(gt, pred).unwrap().per_alpha();
    for (p, o) in per.iter().zip(&oracle.per_alpha) {
        assert_abs_diff_eq!(p.hota, (p.deta * p.assa).sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(p.assa, o.assa, epsilon = 1e-9);
        assert_abs_diff_eq!(p.deta, o.deta, epsilon = 1e-9);
        assert!(p.deta <= p.detre.min(p.detpr) + 1e-12);
    }
}

#[test]
fn tracker_output_on_simulated_scenarios_matches_oracle() {
    let specs = small_scenarios();
    assert!(specs.len() >= 50);
    let mut params = TrackerParams::default();
    for (k, spec) in specs.iter().enumerate().step_by(3) {
        params.sim.alpha = if k % 2 == 0 { 0.9 } else { 0.3 };
        let (gt, pred) = tracked(spec, &params);
        check(&gt, &pred);
    }
}

fn bb(x: f64) -> BBox {
    BBox::new(x, 10.0, x + 20.0, 50.0).unwrap()
}

#[test]
fn single_switch_sequence_matches_oracle() {
    let mut gt = SequenceGT::with_frames(10);
    let mut pred = SequenceGT::with_frames(10);
    for f in 1..=10 {
        gt.insert(f, 1, bb(f64::from(f) * 3.0));
        pred.insert(f, if f < 6 { 7 } else { 8 }, bb(f64::from(f) * 3.0));
    }
    check(&gt, &pred);
    let m = evaluate(&gt, &pred).unwrap();
    assert_abs_diff_eq!(m.deta, 100.0, epsilon = 1e-9);
    assert!(m.assa > 0.0 && m.assa < 100.0);
}

#[test]
fn partial_overlap_and_false_positives_match_oracle() {
    let mut gt = SequenceGT::with_frames(6);
    let mut pred = SequenceGT::with_frames(6);
    for f in 1..=6u32 {
        let x = f64::from(f) * 4.0;
        gt.insert(f, 1, bb(x));
        gt.insert(f, 2, bb(x + 15.0));
        pred.insert(f, 1, bb(x + 2.5));
        if f % 2 == 0 {
            pred.insert(f, 2, bb(x + 13.0));
        }
        if f == 3 {
            pred.insert(f, 9, bb(200.0));
        }
    }
    check(&gt, &pred);
}

#[test]
fn benchmark_pooling_contract() {
    let specs = small_scenarios();
    let pairs: Vec<_> = specs.iter().take(4).map(|s| tracked(s, &TrackerParams::default())).collect();
    let single = evaluate_benchmark(&pairs[..1]).unwrap();
    assert_eq!(single, evaluate(&pairs[0].0, &pairs[0].1).unwrap());
    let doubled = evaluate_benchmark(&[pairs[0].clone(), pairs[0].clone()]).unwrap();
    for (a, b) in doubled.to_array().iter().zip(single.to_array()) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
    }
    let perfect: Vec<_> = pairs.iter().map(|(g, _)| (g.clone(), g.clone())).collect();
    for v in evaluate_benchmark(&perfect).unwrap().to_array() {
        assert_abs_diff_eq!(v, 100.0, epsilon = 1e-9);
    }
    assert!(evaluate_benchmark(&[]).is_err());
}

#[test]
fn deleting_predictions_never_raises_detection_recall() {
    let spec = &small_scenarios()[120 % small_scenarios().len()];
    let (gt, pred) = tracked(spec, &TrackerParams::default());
    let full = evaluate(&gt, &pred).unwrap();
    let mut thinned = SequenceGT::with_frames(pred.num_frames.unwrap());
    for (f, boxes) in pred.frames() {
        for (k, (id, b)) in boxes.iter().enumerate() {
            if !(f as usize + k).is_multiple_of(3) {
                thinned.insert(f, *id, *b);
            }
        }
    }
    assert!(evaluate(&gt, &thinned).unwrap().detre <= full.detre + 1e-12);
}
