//! Seeded synthetic scenarios: ground truth, noisy detections and rendered
//! depth maps.
//!
//! Depth maps are drawn in painter's order over a constant background: far
//! targets first, so nearer ones overwrite them. Detections are ground-truth
//! boxes with Gaussian corner jitter clipped to the image, random drops and
//! spurious boxes, shuffled within each frame.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, mean_box_depth, BBox, DepthMap};
use crate::metrics::SequenceGT;
use crate::tracker::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: u32,
    /// Box at frame 1, before clipping.
    pub start: [f64; 4],
    /// Displacement per frame.
    pub velocity: [f64; 2],
    /// `(frame, velocity)`: from that frame on, steps use the new velocity.
    #[serde(default)]
    pub velocity_changes: Vec<(u32, [f64; 2])>,
    /// Depth at frame 1 in meters.
    pub depth: f64,
    /// Depth change per frame in meters.
    #[serde(default)]
    pub depth_rate: f64,
    /// Inclusive frame intervals in which the target is visible; empty means always.
    #[serde(default)]
    pub visible: Vec<(u32, u32)>,
}

impl TargetSpec {
    fn velocity_for_step(&self, from_frame: u32) -> [f64; 2] {
        self.velocity_changes
            .iter()
            .filter(|(f, _)| *f <= from_frame)
            .max_by_key(|(f, _)| *f)
            .map_or(self.velocity, |(_, v)| *v)
    }

    /// Unclipped box at `frame`.
    pub fn box_at(&self, frame: u32) -> [f64; 4] {
        let (mut dx, mut dy) = (0.0, 0.0);
        for k in 1..frame {
            let v = self.velocity_for_step(k);
            dx += v[0];
            dy += v[1];
        }
        let [x1, y1, x2, y2] = self.start;
        [x1 + dx, y1 + dy, x2 + dx, y2 + dy]
    }

    pub fn depth_at(&self, frame: u32) -> f64 {
        self.depth + self.depth_rate * f64::from(frame - 1)
    }

    pub fn is_visible(&self, frame: u32) -> bool {
        self.visible.is_empty() || self.visible.iter().any(|&(a, b)| (a..=b).contains(&frame))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of corner jitter in pixels.
    pub jitter_std: f64,
    /// Probability of one spurious box per frame.
    pub fp_rate: f64,
    /// Probability that a visible target goes undetected.
    pub fn_rate: f64,
    /// Attach a per-detection depth reading instead of leaving depth to the map.
    pub report_depth: bool,
    /// Standard deviation of reported depth in meters.
    pub depth_std: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            jitter_std: 0.0,
            fp_rate: 0.0,
            fn_rate: 0.0,
            report_depth: false,
            depth_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub frames: u32,
    pub width: u32,
    pub height: u32,
    pub background_depth: f64,
    pub targets: Vec<TargetSpec>,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scenario {name}: {message}")]
pub struct ScenarioError {
    pub name: String,
    pub message: String,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |message: String| {
            Err(ScenarioError {
                name: self.name.clone(),
                message,
            })
        };
        let n = &self.noise;
        for (label, rate) in [("fp_rate", n.fp_rate), ("fn_rate", n.fn_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return fail(format!("{label} {rate} outside [0, 1]"));
            }
        }
        if !(n.jitter_std >= 0.0 && n.jitter_std.is_finite() && n.depth_std >= 0.0 && n.depth_std.is_finite()) {
            return fail("noise deviations must be finite and non-negative".into());
        }
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return fail("frame count and image size must be positive".into());
        }
        if !(self.background_depth > 0.0 && self.background_depth.is_finite()) {
            return fail("background depth must be positive".into());
        }
        let mut ids: Vec<u32> = self.targets.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return fail("target ids must be distinct".into());
        }
        for t in &self.targets {
            if BBox::from_array(t.start).is_err() {
                return fail(format!("target {} has an invalid start box", t.id));
            }
            let last = t.depth_at(self.frames);
            if !(t.depth > 0.0 && last > 0.0 && t.depth.is_finite() && last.is_finite()) {
                return fail(format!("target {} depth must stay positive", t.id));
            }
        }
        Ok(())
    }

    /// Visible, in-image ground-truth box of a target at `frame`.
    pub fn gt_box(&self, target: &TargetSpec, frame: u32) -> Option<BBox> {
        if !target.is_visible(frame) {
            return None;
        }
        BBox::from_array(target.box_at(frame))
            .ok()?
            .clip(f64::from(self.width), f64::from(self.height))
    }
}

/// Everything a scenario produces; entry `i` of the per-frame vectors is frame `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub gt: SequenceGT,
    pub detections: Vec<Vec<Detection>>,
    pub depths: Vec<Option<DepthMap>>,
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, std: f64, width: f64, height: f64) -> Option<BBox> {
    if std == 0.0 {
        return Some(*b);
    }
    let normal = Normal::new(0.0, std).expect("finite deviation");
    let c = b.to_array();
    let moved: [f64; 4] = std::array::from_fn(|k| c[k] + normal.sample(rng));
    BBox::from_array(moved).ok()?.clip(width, height)
}

fn spurious(rng: &mut ChaCha8Rng, width: f64, height: f64) -> Option<BBox> {
    let w = rng.random_range(0.05..0.25) * width;
    let h = rng.random_range(0.1..0.4) * height;
    let x = rng.random_range(0.0..(width - w).max(1.0));
    let y = rng.random_range(0.0..(height - h).max(1.0));
    BBox::new(x, y, x + w, y + h).ok()?.clip(width, height)
}

pub fn generate(spec: &ScenarioSpec) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let mut gt = SequenceGT::with_frames(spec.frames);
    let mut detections = Vec::with_capacity(spec.frames as usize);
    let mut depths = Vec::with_capacity(spec.frames as usize);
    let depth_noise = Normal::new(0.0, spec.noise.depth_std).expect("finite deviation");

    for frame in 1..=spec.frames {
        let visible: Vec<(&TargetSpec, BBox, f64)> = spec
            .targets
            .iter()
            .filter_map(|t| spec.gt_box(t, frame).map(|b| (t, b, t.depth_at(frame))))
            .collect();

        let mut map = DepthMap::filled(spec.width as usize, spec.height as usize, spec.background_depth as f32);
        let mut order: Vec<usize> = (0..visible.len()).collect();
        order.sort_by(|&a, &b| visible[b].2.total_cmp(&visible[a].2).then(visible[a].0.id.cmp(&visible[b].0.id)));
        for k in order {
            map.fill_box(&visible[k].1, visible[k].2 as f32);
        }

        let mut dets = Vec::new();
        for (t, b, depth) in &visible {
            gt.insert(frame, t.id, *b);
            if rng.random::<f64>() < spec.noise.fn_rate {
                continue;
            }
            let Some(jb) = jitter(&mut rng, b, spec.noise.jitter_std, w, h) else {
                continue;
            };
            let score = rng.random_range(0.6..=1.0);
            let depth_m = spec
                .noise
                .report_depth
                .then(|| (depth + depth_noise.sample(&mut rng)).max(0.01));
            dets.push(Detection {
                bbox: jb.to_array(),
                score,
                depth_m,
            });
        }
        if rng.random::<f64>() < spec.noise.fp_rate {
            if let Some(fb) = spurious(&mut rng, w, h) {
                let score = rng.random_range(0.1..0.6);
                let depth_m = spec.noise.report_depth.then(|| mean_box_depth(&map, &fb)).flatten();
                dets.push(Detection {
                    bbox: fb.to_array(),
                    score,
                    depth_m,
                });
            }
        }
        dets.shuffle(&mut rng);
        detections.push(dets);
        depths.push(Some(map));
    }
    Generated { gt, detections, depths }
}

/// Geometry of a two-target crossing. Target 1 is the nearer one and moves
/// right; target 2 moves left. Their centers meet at frame `lead + 1` and stay
/// together for `dwell` further frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingGeometry {
    pub width: u32,
    pub height: u32,
    pub box_w: f64,
    pub box_h: f64,
    pub speed: f64,
    /// Vertical offset of target 2 relative to target 1.
    pub offset: f64,
    pub lead: u32,
    pub dwell: u32,
    pub near_depth: f64,
    pub depth_gap: f64,
}

impl Default for CrossingGeometry {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            box_w: 40.0,
            box_h: 80.0,
            speed: 6.0,
            offset: 0.0,
            lead: 10,
            dwell: 0,
            near_depth: 2.0,
            depth_gap: 2.0,
        }
    }
}

impl CrossingGeometry {
    pub fn frames(&self) -> u32 {
        2 * self.lead + self.dwell
    }

    pub fn crossing_frame(&self) -> u32 {
        self.lead + 1
    }

    pub fn targets(&self) -> [TargetSpec; 2] {
        let cx = f64::from(self.width) / 2.0;
        let cy = f64::from(self.height) * 0.6;
        let run = self.speed * f64::from(self.lead);
        let boxed = |x: f64, y: f64| [x - self.box_w / 2.0, y - self.box_h / 2.0, x + self.box_w / 2.0, y + self.box_h / 2.0];
        let pause_end = self.crossing_frame() + self.dwell;
        let changes = |v: f64| {
            if self.dwell == 0 {
                Vec::new()
            } else {
                vec![(self.crossing_frame(), [0.0, 0.0]), (pause_end, [v, 0.0])]
            }
        };
        [
            TargetSpec {
                id: 1,
                start: boxed(cx - run, cy),
                velocity: [self.speed, 0.0],
                velocity_changes: changes(self.speed),
                depth: self.near_depth,
                depth_rate: 0.0,
                visible: Vec::new(),
            },
            TargetSpec {
                id: 2,
                start: boxed(cx + run, cy + self.offset),
                velocity: [-self.speed, 0.0],
                velocity_changes: changes(-self.speed),
                depth: self.near_depth + self.depth_gap,
                depth_rate: 0.0,
                visible: Vec::new(),
            },
        ]
    }
}

/// Two same-size targets at 2 m and 4 m swapping image positions over 20 frames.
pub fn crossing_pair(seed: u64) -> ScenarioSpec {
    let g = CrossingGeometry::default();
    ScenarioSpec {
        name: format!("crossing-pair-{seed}"),
        seed,
        frames: g.frames(),
        width: g.width,
        height: g.height,
        background_depth: 10.0,
        targets: g.targets().to_vec(),
        noise: NoiseModel::default(),
    }
}

/// Overlap at the frame where two targets come closest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingInfo {
    pub frame: u32,
    pub iou: f64,
    /// Gap between the summed IoU of the true and the swapped pairing, per pair.
    pub ambiguity: f64,
    pub depth_gap: f64,
}

/// Crossing statistics of the first two targets, measured on ground truth.
pub fn crossing_info(spec: &ScenarioSpec) -> Option<CrossingInfo> {
    let [a, b] = [spec.targets.first()?, spec.targets.get(1)?];
    let mut best: Option<CrossingInfo> = None;
    for frame in 1..=spec.frames {
        let (Some(ba), Some(bb)) = (spec.gt_box(a, frame), spec.gt_box(b, frame)) else {
            continue;
        };
        let overlap = iou(&ba, &bb);
        if best.is_none_or(|c| overlap > c.iou) {
            let correct = 2.0;
            let swapped = 2.0 * overlap;
            best = Some(CrossingInfo {
                frame,
                iou: overlap,
                ambiguity: (correct - swapped) / 2.0,
                depth_gap: (a.depth_at(frame) - b.depth_at(frame)).abs(),
            });
        }
    }
    best
}

pub const SUITES: [&str; 4] = ["crossing", "occlusion", "lifecycle", "scale"];

/// Ranges the `crossing` suite draws its geometry from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingFamily {
    pub count: u64,
    pub speed: (f64, f64),
    pub dwell: (u32, u32),
    /// Vertical offset range for most scenarios; every fourth one uses `wide_offset`.
    pub offset: (f64, f64),
    pub wide_offset: (f64, f64),
    /// Depth gap range for most scenarios; every fifth one uses `narrow_gap`.
    pub gap: (f64, f64),
    pub narrow_gap: (f64, f64),
    pub jitter_std: f64,
    pub depth_std: f64,
}

impl Default for CrossingFamily {
    fn default() -> Self {
        Self {
            count: 100,
            speed: (4.0, 8.0),
            dwell: (0, 2),
            offset: (0.0, 1.5),
            wide_offset: (2.0, 8.0),
            gap: (2.0, 3.0),
            narrow_gap: (1.0, 2.0),
            jitter_std: 1.0,
            depth_std: 0.05,
        }
    }
}

impl CrossingFamily {
    pub fn specs(&self) -> Vec<ScenarioSpec> {
        (0..self.count).map(|k| self.spec(k)).collect()
    }

    fn spec(&self, k: u64) -> ScenarioSpec {
        let seed = 1000 + k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c405);
        let offset = if k % 4 == 3 { self.wide_offset } else { self.offset };
        let gap = if k % 5 == 4 { self.narrow_gap } else { self.gap };
        let g = CrossingGeometry {
            speed: rng.random_range(self.speed.0..=self.speed.1),
            offset: rng.random_range(offset.0..=offset.1),
            dwell: rng.random_range(self.dwell.0..=self.dwell.1),
            near_depth: rng.random_range(1.5..3.0),
            depth_gap: rng.random_range(gap.0..=gap.1),
            ..CrossingGeometry::default()
        };
        let mut targets = g.targets().to_vec();
        // a bystander at the near target's depth on a separate lane
        let near = targets[0].depth;
        let lane_y = 10.0;
        let x0 = rng.random_range(20.0..240.0);
        targets.push(TargetSpec {
            id: 3,
            start: [x0, lane_y, x0 + g.box_w, lane_y + g.box_h],
            velocity: [rng.random_range(-2.0..2.0), 0.0],
            velocity_changes: Vec::new(),
            depth: near,
            depth_rate: 0.0,
            visible: Vec::new(),
        });
        ScenarioSpec {
            name: format!("crossing-{k:03}"),
            seed,
            frames: g.frames(),
            width: g.width,
            height: g.height,
            background_depth: 10.0,
            targets,
            noise: NoiseModel {
                jitter_std: self.jitter_std,
                fp_rate: 0.0,
                fn_rate: 0.0,
                report_depth: true,
                depth_std: self.depth_std,
            },
        }
    }
}

fn random_target(rng: &mut ChaCha8Rng, id: u32, width: f64, height: f64) -> TargetSpec {
    let bw = rng.random_range(0.05..0.12) * width;
    let bh = bw * rng.random_range(1.5..2.5);
    let x = rng.random_range(0.0..width - bw);
    let y = rng.random_range(0.0..(height - bh).max(1.0));
    TargetSpec {
        id,
        start: [x, y, x + bw, y + bh],
        velocity: [rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)],
        velocity_changes: Vec::new(),
        depth: rng.random_range(1.0..8.0),
        depth_rate: rng.random_range(-0.01..0.01),
        visible: Vec::new(),
    }
}

fn occlusion_suite() -> Vec<ScenarioSpec> {
    (0..20u64)
        .map(|k| {
            let seed = 2000 + k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0cc1);
            let frames = 50;
            let count = rng.random_range(2..=4);
            let targets = (1..=count)
                .map(|id| {
                    let mut t = random_target(&mut rng, id, 640.0, 480.0);
                    let hidden = rng.random_range(5..=15);
                    let from = rng.random_range(8..frames - hidden - 5);
                    t.visible = vec![(1, from - 1), (from + hidden, frames)];
                    t
                })
                .collect();
            ScenarioSpec {
                name: format!("occlusion-{k:03}"),
                seed,
                frames,
                width: 640,
                height: 480,
                background_depth: 12.0,
                targets,
                noise: NoiseModel {
                    jitter_std: 1.0,
                    fp_rate: 0.05,
                    fn_rate: 0.02,
                    ..NoiseModel::default()
                },
            }
        })
        .collect()
}

fn lifecycle_suite() -> Vec<ScenarioSpec> {
    (0..20u64)
        .map(|k| {
            let seed = 3000 + k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11fe);
            let frames = 40;
            let count = rng.random_range(3..=6);
            let targets = (1..=count)
                .map(|id| {
                    let mut t = random_target(&mut rng, id, 640.0, 480.0);
                    let len = rng.random_range(3..=10);
                    let from = rng.random_range(1..=frames - len);
                    t.visible = vec![(from, from + len - 1)];
                    t
                })
                .collect();
            ScenarioSpec {
                name: format!("lifecycle-{k:03}"),
                seed,
                frames,
                width: 640,
                height: 480,
                background_depth: 12.0,
                targets,
                noise: NoiseModel {
                    jitter_std: 1.5,
                    fp_rate: 0.8,
                    fn_rate: 0.05,
                    ..NoiseModel::default()
                },
            }
        })
        .collect()
}

fn scale_suite() -> Vec<ScenarioSpec> {
    (1..=20u32)
        .map(|count| {
            let seed = 4000 + u64::from(count);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1e);
            let targets = (1..=count).map(|id| random_target(&mut rng, id, 640.0, 480.0)).collect();
            ScenarioSpec {
                name: format!("scale-{count:02}"),
                seed,
                frames: 40,
                width: 640,
                height: 480,
                background_depth: 12.0,
                targets,
                noise: NoiseModel {
                    jitter_std: 1.0,
                    fp_rate: 0.1,
                    fn_rate: 0.03,
                    ..NoiseModel::default()
                },
            }
        })
        .collect()
}

/// Named scenario suites; `None` for an unknown name.
pub fn scenario_suite(name: &str) -> Option<Vec<ScenarioSpec>> {
    match name {
        "crossing" => Some(CrossingFamily::default().specs()),
        "occlusion" => Some(occlusion_suite()),
        "lifecycle" => Some(lifecycle_suite()),
        "scale" => Some(scale_suite()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(noise: NoiseModel) -> ScenarioSpec {
        ScenarioSpec {
            name: "one".into(),
            seed: 7,
            frames: 10,
            width: 200,
            height: 100,
            background_depth: 9.0,
            targets: vec![TargetSpec {
                id: 4,
                start: [10.0, 10.0, 40.0, 70.0],
                velocity: [3.0, 0.5],
                velocity_changes: Vec::new(),
                depth: 3.0,
                depth_rate: 0.0,
                visible: Vec::new(),
            }],
            noise,
        }
    }

    #[test]
    fn zero_noise_detections_equal_gt() {
        let spec = single(NoiseModel::default());
        let g = generate(&spec);
        for (i, dets) in g.detections.iter().enumerate() {
            let gt = g.gt.frame(i as u32 + 1);
            assert_eq!(dets.len(), 1);
            assert_eq!(dets[0].bbox, gt[0].1.to_array());
        }
    }

    #[test]
    fn full_miss_rate_empties_detections() {
        let g = generate(&single(NoiseModel { fn_rate: 1.0, ..NoiseModel::default() }));
        assert!(g.detections.iter().all(Vec::is_empty));
        assert_eq!(g.gt.len(), 10);
    }

    #[test]
    fn crossing_pair_geometry() {
        let spec = crossing_pair(1);
        assert_eq!(spec.frames, 20);
        let g = generate(&spec);
        let info = crossing_info(&spec).unwrap();
        assert_eq!(info.frame, 11);
        let boxes = g.gt.frame(info.frame);
        assert!(iou(&boxes[0].1, &boxes[1].1) >= 0.7);
        assert_eq!(info.depth_gap, 2.0);
        let near = mean_box_depth(g.depths[info.frame as usize - 1].as_ref().unwrap(), &boxes[0].1).unwrap();
        assert!((near - 2.0).abs() < 1e-6);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = &scenario_suite("lifecycle").unwrap()[3];
        assert_eq!(generate(spec), generate(spec));
    }

    #[test]
    fn suites_validate() {
        for name in SUITES {
            let specs = scenario_suite(name).unwrap();
            assert!(!specs.is_empty());
            for s in &specs {
                s.validate().unwrap();
            }
            assert_eq!(specs, scenario_suite(name).unwrap());
        }
        let crossing = scenario_suite("crossing").unwrap();
        assert_eq!(crossing.len(), 100);
        let mut seeds: Vec<u64> = crossing.iter().map(|s| s.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 100);
        assert_eq!(scenario_suite("scale").unwrap().iter().map(|s| s.targets.len()).max(), Some(20));
        assert!(scenario_suite("nope").is_none());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = single(NoiseModel { fp_rate: 1.5, ..NoiseModel::default() });
        assert!(s.validate().is_err());
        s.noise.fp_rate = 0.0;
        s.targets[0].depth_rate = -1.0;
        assert!(s.validate().is_err());
    }
}
