//! Subcommands of the `rgbdtrack` binary.
//!
//! Sequences live one per directory: `<seq>/gt.txt`, `<seq>/det.jsonl` and
//! `<seq>/depth/<frame>.png`. Tracker output goes to `<out>/<seq>.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rgbdtrack::exec::Execution;
use rgbdtrack::geometry::BBox;
use rgbdtrack::io::{self, ConfigFile, SequenceDir};
use rgbdtrack::metrics::{accumulate, combine, HotaAccumulator, MetricBundle, Pooling, SequenceGT};
use rgbdtrack::rewards::{total_reward, GroundingResponse, ParseMode};
use rgbdtrack::simulator::{generate, scenario_suite, ScenarioSpec, SUITES};
use rgbdtrack::sweep::{sweep, PreparedSuite, SweepParam, SweepRow};
use rgbdtrack::tracker::{Detection, TrackDepthMode, Tracker, TrackerParams};
use serde::Serialize;
use serde_json::{Map, Value};

const CONFIG_HELP: &str = "TOML file of tracker settings; command-line flags override it.

Recognized keys (all optional):
  alpha                  IoU weight of the fused similarity [0.9]
  sigma                  depth decay scale in meters [0.5]
  s_neutral              depth similarity used when a depth is unknown [0.5]
  lambda                 weight of the direction-consistency prior [0.3]
  gate                   minimum fused similarity for a first-round match [0.3]
  second_round           run the last-observation recovery round [true]
  second_round_iou_gate  minimum IoU for a recovery match [0.3]
  max_age                frames a track may coast before it dies [30]
  min_hits               matches needed to confirm a track [3]
  det_score_min          detections scoring lower are ignored [0.1]
  vdc_window             frame gap of direction estimates [3]
  track_depth            \"current_frame\" or \"last_observation\"
  init_position_var      initial Kalman variance of position terms [10]
  init_velocity_var      initial Kalman variance of velocity terms [1000]
  std_weight_position    position noise per unit box size [0.05]
  std_weight_velocity    velocity noise per unit box size [0.00625]
  input, output          default paths for `track`
  seed                   default noise-seed offset for `sweep`";

#[derive(Debug, Parser)]
#[command(name = "rgbdtrack", version, about = "Depth-aware multi-object tracking, evaluation and reward scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track every sequence under an input directory.
    Track(TrackArgs),
    /// Score tracker output against ground truth with the HOTA family.
    Evaluate(EvaluateArgs),
    /// Score a batch of grounding responses.
    Reward(RewardArgs),
    /// Write a synthetic scenario suite as sequence directories.
    Simulate(SimulateArgs),
    /// Sweep one association parameter over a synthetic suite.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthModeArg {
    CurrentFrame,
    LastObservation,
}

/// Tracker knobs shared by `track` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct TunableArgs {
    #[arg(long, value_name = "FILE", long_help = CONFIG_HELP)]
    pub config: Option<PathBuf>,
    /// IoU weight of the fused similarity; 1 ignores depth [default: 0.9]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Depth decay scale in meters [default: 0.5]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Depth similarity assumed when a depth is unknown [default: 0.5]
    #[arg(long)]
    pub s_neutral: Option<f64>,
    /// Weight of the direction-consistency prior [default: 0.3]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Minimum fused similarity for a first-round match [default: 0.3]
    #[arg(long)]
    pub gate: Option<f64>,
    /// Minimum IoU for a recovery-round match [default: 0.3]
    #[arg(long)]
    pub second_round_iou_gate: Option<f64>,
    /// Skip the recovery round against last observations
    #[arg(long)]
    pub no_second_round: bool,
    /// Frames a track may coast before it dies [default: 30]
    #[arg(long)]
    pub max_age: Option<u32>,
    /// Matches needed to confirm a track [default: 3]
    #[arg(long)]
    pub min_hits: Option<u32>,
    /// Detections scoring lower are ignored [default: 0.1]
    #[arg(long)]
    pub det_score_min: Option<f64>,
    /// Frame gap of direction estimates [default: 3]
    #[arg(long)]
    pub vdc_window: Option<u32>,
    /// Source of a track's depth [default: current-frame]
    #[arg(long, value_enum)]
    pub track_depth: Option<DepthModeArg>,
    /// Worker threads; defaults to the number of cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl TunableArgs {
    fn config_file(&self) -> Result<ConfigFile> {
        match &self.config {
            Some(path) => Ok(ConfigFile::load(path)?),
            None => Ok(ConfigFile::default()),
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn params(&self) -> Result<(TrackerParams, ConfigFile)> {
        let file = self.config_file()?;
        let mut p = TrackerParams::default();
        file.apply(&mut p);
        let flags = ConfigFile {
            alpha: self.alpha,
            sigma: self.sigma,
            s_neutral: self.s_neutral,
            lambda: self.lambda,
            gate: self.gate,
            second_round: self.no_second_round.then_some(false),
            second_round_iou_gate: self.second_round_iou_gate,
            max_age: self.max_age,
            min_hits: self.min_hits,
            det_score_min: self.det_score_min,
            vdc_window: self.vdc_window,
            track_depth: self.track_depth.map(|m| match m {
                DepthModeArg::CurrentFrame => TrackDepthMode::CurrentFrame,
                DepthModeArg::LastObservation => TrackDepthMode::LastObservation,
            }),
            ..ConfigFile::default()
        };
        flags.apply(&mut p);
        p.validate().context("invalid tracker settings")?;
        Ok((p, file))
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Directory of sequence directories (or a single sequence directory)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory receiving `<seq>.txt` results and `summary.json`
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fail when a sequence lacks depth images
    #[arg(long)]
    pub require_depth: bool,
    #[command(flatten)]
    pub tune: TunableArgs,
}

#[derive(Debug, Serialize)]
struct SequenceSummary {
    name: String,
    frames: u32,
    tracks: usize,
    births: u32,
    deaths: u32,
    rejected_detections: u64,
    seconds: f64,
    frames_per_second: f64,
}

#[derive(Debug, Serialize)]
struct TrackSummary {
    params: TrackerParams,
    sequences: Vec<SequenceSummary>,
}

/// Sequence directories under `root`, or `root` itself when it holds detections.
fn sequences_in(root: &Path) -> Result<Vec<SequenceDir>> {
    let own = SequenceDir {
        name: root.file_name().and_then(|n| n.to_str()).unwrap_or("sequence").to_string(),
        root: root.to_path_buf(),
    };
    if own.detections_path().is_file() {
        return Ok(vec![own]);
    }
    Ok(io::list_sequences(root)?.into_iter().filter(|s| s.detections_path().is_file()).collect())
}

fn track_one(seq: &SequenceDir, params: &TrackerParams, require_depth: bool, out_dir: &Path) -> Result<SequenceSummary> {
    let started = Instant::now();
    let records = io::read_detections_file(&seq.detections_path())?;
    let by_frame = io::detections_by_frame(&records);
    let depth_files = seq.depth_files()?;
    let frames = by_frame
        .keys()
        .chain(depth_files.keys())
        .copied()
        .max()
        .unwrap_or(0);
    if require_depth {
        if depth_files.is_empty() {
            bail!("sequence {}: no depth images under {}", seq.name, seq.depth_dir().display());
        }
        if let Some(f) = (1..=frames).find(|f| !depth_files.contains_key(f)) {
            bail!("sequence {}: frame {f} has no depth image", seq.name);
        }
    }
    let mut tracker = Tracker::new(*params)?;
    let mut results = Vec::with_capacity(frames as usize);
    let empty: Vec<Detection> = Vec::new();
    for f in 1..=frames {
        let depth = depth_files.get(&f).map(|p| io::load_depth(p)).transpose()?;
        let dets = by_frame.get(&f).unwrap_or(&empty);
        results.push(tracker.step(f, dets, depth.as_ref()).with_context(|| format!("sequence {}", seq.name))?);
    }
    let out_path = out_dir.join(format!("{}.txt", seq.name));
    fs::write(&out_path, io::write_results(&results)).with_context(|| format!("writing {}", out_path.display()))?;
    let stats = tracker.stats();
    let tracks = SequenceGT::from_results(&results, None).ids().len();
    let seconds = started.elapsed().as_secs_f64();
    Ok(SequenceSummary {
        name: seq.name.clone(),
        frames,
        tracks,
        births: stats.births,
        deaths: stats.deaths,
        rejected_detections: stats.rejected_detections,
        seconds,
        frames_per_second: if seconds > 0.0 { f64::from(frames) / seconds } else { 0.0 },
    })
}

pub fn cmd_track(args: &TrackArgs) -> Result<()> {
    let (params, file) = args.tune.params()?;
    let input = args.input.clone().or(file.input).context("no input directory; pass --input or set `input` in the config")?;
    let output = args.output.clone().or(file.output).context("no output directory; pass --output or set `output` in the config")?;
    let seqs = sequences_in(&input)?;
    if seqs.is_empty() {
        bail!("no sequence with {} found under {}", SequenceDir::DETECTIONS, input.display());
    }
    fs::create_dir_all(&output).with_context(|| format!("creating {}", output.display()))?;
    let summaries = pool(args.tune.jobs)?
        .install(|| Execution::Parallel.try_map(&seqs, |s| track_one(s, &params, args.require_depth, &output)))?;
    for s in &summaries {
        eprintln!("{}: {} frames, {} tracks, {:.0} frames/s", s.name, s.frames, s.tracks, s.frames_per_second);
    }
    let summary = TrackSummary { params, sequences: summaries };
    fs::write(output.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of sequence directories holding `gt.txt`
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory holding `<seq>.txt` tracker output
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the JSON report here
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Average per-sequence scores instead of pooling accumulators
    #[arg(long)]
    pub averaged: bool,
    /// Worker threads; defaults to the number of cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub pooling: Pooling,
    pub sequences: BTreeMap<String, MetricBundle>,
    pub combined: MetricBundle,
}

fn gt_sequences(root: &Path) -> Result<Vec<SequenceDir>> {
    let own = SequenceDir {
        name: root.file_name().and_then(|n| n.to_str()).unwrap_or("sequence").to_string(),
        root: root.to_path_buf(),
    };
    if own.gt_path().is_file() {
        return Ok(vec![own]);
    }
    Ok(io::list_sequences(root)?.into_iter().filter(|s| s.gt_path().is_file()).collect())
}

/// Frame count of a sequence: the last frame seen in its annotations,
/// detections or depth images.
fn sequence_length(seq: &SequenceDir, gt: &SequenceGT) -> Result<Option<u32>> {
    let mut last = gt.last_frame();
    if seq.detections_path().is_file() {
        let dets = io::read_detections_file(&seq.detections_path())?;
        last = last.max(dets.iter().map(|d| d.frame).max());
    }
    last = last.max(seq.depth_files()?.keys().next_back().copied());
    Ok(last)
}

fn evaluate_one(seq: &SequenceDir, pred_dir: &Path) -> Result<(String, HotaAccumulator)> {
    let gt_recs = io::read_gt_file(&seq.gt_path())?;
    let mut gt = io::records_to_sequence(&gt_recs, None);
    gt.num_frames = sequence_length(seq, &gt)?;
    let pred_path = pred_dir.join(format!("{}.txt", seq.name));
    let pred = if pred_path.is_file() {
        io::records_to_sequence(&io::read_gt_file(&pred_path)?, gt.num_frames)
    } else {
        eprintln!("warning: no predictions for sequence {} ({}); scoring it as empty", seq.name, pred_path.display());
        SequenceGT::new()
    };
    let acc = accumulate(&gt, &pred).with_context(|| format!("sequence {}", seq.name))?;
    Ok((seq.name.clone(), acc))
}

pub fn evaluate_dirs(gt_dir: &Path, pred_dir: &Path, pooling: Pooling, jobs: Option<usize>) -> Result<EvaluationReport> {
    let seqs = gt_sequences(gt_dir)?;
    if seqs.is_empty() {
        bail!("no sequence with {} found under {}", SequenceDir::GT, gt_dir.display());
    }
    let accs = pool(jobs)?.install(|| Execution::Parallel.try_map(&seqs, |s| evaluate_one(s, pred_dir)))?;
    let sequences = accs.iter().map(|(n, a)| (n.clone(), a.bundle())).collect();
    let combined = combine(accs.into_iter().map(|(_, a)| a).collect(), pooling)?;
    Ok(EvaluationReport { pooling, sequences, combined })
}

pub fn metric_table(rows: &[(String, MetricBundle)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<width$}", "sequence");
    for c in MetricBundle::COLUMNS {
        out.push_str(&format!(" {c:>7}"));
    }
    out.push('\n');
    for (name, m) in rows {
        out.push_str(&format!("{name:<width$}"));
        for v in m.to_array() {
            out.push_str(&format!(" {v:>7.2}"));
        }
        out.push('\n');
    }
    out
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let pooling = if args.averaged { Pooling::Averaged } else { Pooling::Pooled };
    let report = evaluate_dirs(&args.gt, &args.pred, pooling, args.jobs)?;
    let mut rows: Vec<(String, MetricBundle)> = report.sequences.iter().map(|(n, m)| (n.clone(), *m)).collect();
    rows.push(("COMBINED".to_string(), report.combined));
    print!("{}", metric_table(&rows));
    if let Some(path) = &args.report {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    /// JSONL batch: one object per line with `response` and `gt_boxes`
    #[arg(long)]
    pub input: PathBuf,
    /// Scored copy of the batch with `format`, `iou` and `total` added
    #[arg(long)]
    pub output: PathBuf,
    /// Accept a missing think block, a bare answer object and trailing text
    #[arg(long)]
    pub permissive: bool,
    /// Worker threads; defaults to the number of cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn reward_item(path: &Path, line: usize, text: &str) -> Result<(Map<String, Value>, GroundingResponse, Vec<BBox>)> {
    let at = || format!("{}:{line}", path.display());
    let obj: Map<String, Value> = serde_json::from_str(text).with_context(|| format!("{}: malformed JSON", at()))?;
    let response = obj
        .get("response")
        .and_then(Value::as_str)
        .with_context(|| format!("{}: missing string field `response`", at()))?
        .to_string();
    let boxes: Vec<[f64; 4]> = serde_json::from_value(obj.get("gt_boxes").cloned().unwrap_or(Value::Null))
        .with_context(|| format!("{}: `gt_boxes` must be an array of [x1, y1, x2, y2]", at()))?;
    let gts = boxes
        .into_iter()
        .map(BBox::from_array)
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("{}: invalid ground-truth box", at()))?;
    Ok((obj, GroundingResponse::new(response), gts))
}

pub fn score_batch(input: &Path, text: &str, mode: ParseMode) -> Result<String> {
    let items = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| reward_item(input, i + 1, l))
        .collect::<Result<Vec<_>>>()?;
    let scored = Execution::Parallel.map(&items, |(obj, r, gts)| {
        let b = total_reward(r, gts, mode);
        let mut o = obj.clone();
        o.insert("format".into(), b.format.into());
        o.insert("iou".into(), b.iou.into());
        o.insert("total".into(), b.total.into());
        serde_json::to_string(&o).expect("scored line serializes")
    });
    Ok(scored.into_iter().map(|l| l + "\n").collect())
}

pub fn cmd_reward(args: &RewardArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mode = if args.permissive { ParseMode::Permissive } else { ParseMode::Strict };
    let out = pool(args.jobs)?.install(|| score_batch(&args.input, &text, mode))?;
    fs::write(&args.output, out).with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario suite to write
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    pub suite: String,
    /// Directory receiving one sequence directory per scenario
    #[arg(long)]
    pub output: PathBuf,
    /// Offset added to every scenario's noise seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write only the first N scenarios
    #[arg(long)]
    pub count: Option<usize>,
    /// Worker threads; defaults to the number of cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// A suite with the noise seed of every scenario shifted by `offset`.
pub fn suite_specs(name: &str, offset: u64, count: Option<usize>) -> Result<Vec<ScenarioSpec>> {
    let mut specs = scenario_suite(name).with_context(|| format!("unknown suite {name:?}"))?;
    if let Some(n) = count {
        specs.truncate(n);
    }
    for s in &mut specs {
        s.seed = s.seed.wrapping_add(offset);
    }
    Ok(specs)
}

pub fn write_scenario(spec: &ScenarioSpec, root: &Path) -> Result<()> {
    let dir = SequenceDir { name: spec.name.clone(), root: root.join(&spec.name) };
    fs::create_dir_all(dir.depth_dir()).with_context(|| format!("creating {}", dir.depth_dir().display()))?;
    let g = generate(spec);
    io::write_records_file(&dir.gt_path(), &io::sequence_to_records(&g.gt))?;
    let records: Vec<io::DetectionRecord> = g
        .detections
        .iter()
        .enumerate()
        .flat_map(|(i, ds)| {
            ds.iter().map(move |d| io::DetectionRecord { frame: i as u32 + 1, bbox: d.bbox, score: d.score, depth_m: d.depth_m })
        })
        .collect();
    fs::write(dir.detections_path(), io::write_detections(&records))?;
    for (i, depth) in g.depths.iter().enumerate() {
        if let Some(map) = depth {
            io::save_depth(&dir.depth_dir().join(SequenceDir::depth_file_name(i as u32 + 1)), map)?;
        }
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let specs = suite_specs(&args.suite, args.seed.unwrap_or(0), args.count)?;
    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    pool(args.jobs)?.install(|| Execution::Parallel.try_map(&specs, |s| write_scenario(s, &args.output)))?;
    eprintln!("wrote {} scenarios to {}", specs.len(), args.output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter to vary
    #[arg(long, default_value = "alpha", value_parser = ["alpha", "sigma", "lambda", "gate"])]
    pub param: String,
    /// Comma-separated values
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 0.9, 1.0])]
    pub values: Vec<f64>,
    /// Scenario suite to run
    #[arg(long, default_value = "crossing", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    pub suite: String,
    /// Offset added to every scenario's noise seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the rows as JSON here
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub tune: TunableArgs,
}

pub fn run_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let (base, file) = args.tune.params()?;
    let specs = suite_specs(&args.suite, args.seed.or(file.seed).unwrap_or(0), None)?;
    let param = SweepParam::parse(&args.param)?;
    pool(args.tune.jobs)?.install(|| {
        let suite = PreparedSuite::new(specs, Execution::Parallel);
        Ok(sweep(&suite, param, &args.values, &base, Execution::Parallel)?)
    })
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out.push_str(&format!("{:>8}", first.param.name()));
        for c in MetricBundle::COLUMNS {
            out.push_str(&format!(" {c:>7}"));
        }
        out.push_str("    IDsw\n");
    }
    for r in rows {
        out.push_str(&format!("{:>8.3}", r.value));
        for v in r.metrics.to_array() {
            out.push_str(&format!(" {v:>7.2}"));
        }
        out.push_str(&format!(" {:>7}\n", r.id_switches));
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let rows = run_sweep(args)?;
    print!("{}", sweep_table(&rows));
    if let Some(path) = &args.output {
        fs::write(path, serde_json::to_string_pretty(&rows)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Reward(a) => cmd_reward(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
