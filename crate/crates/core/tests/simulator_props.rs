use rgbdtrack::geometry::{iou, mean_box_depth};
use rgbdtrack::simulator::{crossing_info, generate, scenario_suite, SUITES};

#[test]
fn unoccluded_targets_render_at_their_depth() {
    for name in SUITES {
        for spec in scenario_suite(name).unwrap().iter().step_by(7) {
            let g = generate(spec);
            for f in 1..=spec.frames {
                let map = g.depths[f as usize - 1].as_ref().unwrap();
                for t in &spec.targets {
                    let Some(b) = spec.gt_box(t, f) else { continue };
                    if b.to_array() != t.box_at(f) {
                        continue;
                    }
                    let depth = t.depth_at(f);
                    let covered = spec.targets.iter().any(|o| {
                        o.id != t.id && o.depth_at(f) <= depth && spec.gt_box(o, f).is_some_and(|ob| iou(&ob, &b) > 0.0)
                    });
                    if covered {
                        continue;
                    }
                    let mean = mean_box_depth(map, &b).unwrap();
                    assert!((mean - depth).abs() < 1e-6, "{} frame {f} target {}: {mean} vs {depth}", spec.name, t.id);
                }
            }
        }
    }
}

#[test]
fn crossing_suite_covers_the_ambiguous_regime() {
    let specs = scenario_suite("crossing").unwrap();
    let infos: Vec<_> = specs.iter().map(|s| crossing_info(s).unwrap()).collect();
    let qualifying = infos.iter().filter(|i| i.depth_gap >= 2.0 && i.ambiguity <= 0.05).count();
    assert!(qualifying >= 50, "{qualifying}");
    assert!(infos.iter().all(|i| i.iou >= 0.7));
    for (s, i) in specs.iter().zip(&infos) {
        let g = generate(s);
        let boxes = g.gt.frame(i.frame);
        let measured = iou(&boxes[0].1, &boxes[1].1);
        assert!((measured - i.iou).abs() < 1e-12);
    }
}
