use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use rgbdtrack_cli::{evaluate_dirs, run, run_sweep, Cli, Command as Sub};
use rgbdtrack::metrics::Pooling;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgbdtrack")).args(args).output().unwrap()
}

fn cli(args: &[&str]) -> anyhow::Result<()> {
    run(Cli::try_parse_from(std::iter::once("rgbdtrack").chain(args.iter().copied()))?)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(root: &Path, suite: &str, count: usize) {
    cli(&["simulate", "--suite", suite, "--count", &count.to_string(), "--output", s(root)]).unwrap();
}

#[test]
fn simulate_track_evaluate_closes_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, out) = (dir.path().join("sim"), dir.path().join("out"));
    simulate(&sim, "occlusion", 3);
    let seq = sim.join("occlusion-000");
    assert!(seq.join("gt.txt").is_file() && seq.join("det.jsonl").is_file());
    assert!(seq.join("depth/000001.png").is_file());
    cli(&["track", "--input", s(&sim), "--output", s(&out), "--jobs", "2"]).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let seqs = summary["sequences"].as_array().unwrap();
    assert_eq!(seqs.len(), 3);
    assert_eq!(seqs[0]["name"], "occlusion-000");
    assert!(seqs.iter().all(|q| q["births"].as_u64().unwrap() >= q["tracks"].as_u64().unwrap()));
    let report = evaluate_dirs(&sim, &out, Pooling::Pooled, Some(2)).unwrap();
    assert_eq!(report.sequences.len(), 3);
    assert!(report.combined.hota > 50.0, "{:?}", report.combined);
}

#[test]
fn ground_truth_scored_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, pred) = (dir.path().join("sim"), dir.path().join("pred"));
    simulate(&sim, "lifecycle", 2);
    fs::create_dir_all(&pred).unwrap();
    for name in ["lifecycle-000", "lifecycle-001"] {
        fs::copy(sim.join(name).join("gt.txt"), pred.join(format!("{name}.txt"))).unwrap();
    }
    let report = evaluate_dirs(&sim, &pred, Pooling::Pooled, None).unwrap();
    assert!(report.combined.to_array().iter().all(|v| (v - 100.0).abs() < 1e-9));
}

#[test]
fn evaluate_writes_report_and_warns_on_missing_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "crossing", 1);
    let report = dir.path().join("report.json");
    let out = bin(&["evaluate", "--gt", s(&sim), "--pred", s(&dir.path().join("none")), "--report", s(&report)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: no predictions for sequence crossing-000"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("COMBINED"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["combined"]["hota"], 0.0);
}

#[test]
fn predictions_past_the_sequence_end_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, pred) = (dir.path().join("sim"), dir.path().join("pred"));
    simulate(&sim, "crossing", 1);
    fs::create_dir_all(&pred).unwrap();
    fs::write(pred.join("crossing-000.txt"), "999,1,0,0,10,10\n").unwrap();
    assert!(evaluate_dirs(&sim, &pred, Pooling::Pooled, None).is_err());
}

#[test]
fn require_depth_fails_without_depth_images() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "crossing", 1);
    fs::remove_dir_all(sim.join("crossing-000/depth")).unwrap();
    let out = bin(&["track", "--input", s(&sim), "--output", s(&dir.path().join("o")), "--require-depth"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no depth images"));
    let out = bin(&["track", "--input", s(&sim), "--output", s(&dir.path().join("o"))]);
    assert!(out.status.success());
}

#[test]
fn alpha_one_changes_crossing_output() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "crossing", 100);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli(&["track", "--input", s(&sim), "--output", s(&a)]).unwrap();
    cli(&["track", "--input", s(&sim), "--output", s(&b), "--alpha", "1.0"]).unwrap();
    let differing = (0..100)
        .map(|k| format!("crossing-{k:03}.txt"))
        .filter(|n| fs::read(a.join(n)).unwrap() != fs::read(b.join(n)).unwrap())
        .count();
    assert!(differing > 0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "alpha = 0.5\nmax_age = 7\nsecond_round = false\n").unwrap();
    let parsed = Cli::try_parse_from(["rgbdtrack", "track", "--config", s(&cfg), "--alpha", "0.7"]).unwrap();
    let Sub::Track(args) = parsed.command else { panic!() };
    let (p, _) = args.tune.params().unwrap();
    assert_eq!((p.sim.alpha, p.max_age, p.assoc.second_round), (0.7, 7, false));
    fs::write(&cfg, "alpah = 0.5\n").unwrap();
    assert!(args.tune.params().is_err());
    let parsed = Cli::try_parse_from(["rgbdtrack", "track", "--alpha", "1.5"]).unwrap();
    let Sub::Track(args) = parsed.command else { panic!() };
    assert!(args.tune.params().is_err());
}

#[test]
fn help_documents_every_knob() {
    let help = String::from_utf8(bin(&["track", "--help"]).stdout).unwrap();
    for flag in [
        "--config", "--alpha", "--sigma", "--s-neutral", "--lambda", "--gate", "--second-round-iou-gate",
        "--no-second-round", "--max-age", "--min-hits", "--det-score-min", "--vdc-window", "--track-depth",
        "--jobs", "--require-depth", "init_velocity_var", "std_weight_position",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn reward_batch_scores_every_line() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    let good = r#"<think>two people</think><answer>[{"bbox_2d": [0, 0, 10, 10]}]</answer>"#;
    let lines = [
        serde_json::json!({"id": "a", "response": good, "gt_boxes": [[0, 0, 10, 10]]}),
        serde_json::json!({"id": "b", "response": "no tags", "gt_boxes": [[0, 0, 10, 10]]}),
    ];
    fs::write(&input, lines.iter().map(|l| l.to_string() + "\n").collect::<String>()).unwrap();
    cli(&["reward", "--input", s(&input), "--output", s(&output)]).unwrap();
    let scored: Vec<serde_json::Value> =
        fs::read_to_string(&output).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(scored.len(), 2);
    assert_eq!((scored[0]["id"].as_str(), scored[0]["format"].as_f64(), scored[0]["iou"].as_f64()), (Some("a"), Some(1.0), Some(1.0)));
    assert_eq!(scored[0]["total"], 2.0);
    assert_eq!((scored[1]["format"].as_f64(), scored[1]["total"].as_f64()), (Some(0.0), Some(0.0)));

    fs::write(&input, "").unwrap();
    cli(&["reward", "--input", s(&input), "--output", s(&output)]).unwrap();
    assert_eq!(fs::read_to_string(&output).unwrap(), "");

    fs::write(&input, format!("{}\n{{\"response\": 3}}\n", lines[0])).unwrap();
    let err = cli(&["reward", "--input", s(&input), "--output", s(&output)]).unwrap_err();
    assert!(format!("{err:#}").contains(":2"), "{err:#}");
}

#[test]
fn sweep_has_one_row_per_value() {
    let parsed = Cli::try_parse_from(["rgbdtrack", "sweep", "--param", "alpha", "--values", "0,0.9,1", "--suite", "crossing"]).unwrap();
    let Sub::Sweep(args) = parsed.command else { panic!() };
    let rows = run_sweep(&args).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), [0.0, 0.9, 1.0]);
    assert!(rows[1].metrics.assa > rows[0].metrics.assa);
    assert!(Cli::try_parse_from(["rgbdtrack", "sweep", "--param", "beta"]).is_err());
}
