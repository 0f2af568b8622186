//! HOTA family metrics over per-frame labeled boxes.
//!
//! Matching follows the usual HOTA protocol: a global alignment score between
//! every ground-truth id and predicted id is accumulated first, then each frame
//! is matched once by Hungarian on `alignment * IoU`, and a match counts as a
//! true positive at localization threshold `a` when its IoU is at least `a`.
//! Scores are averaged over the 19 thresholds `0.05, 0.10, ..., 0.95`.
//! Several sequences are combined by pooling their accumulators before taking
//! ratios.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::geometry::{iou, BBox};
use crate::lap::{self, CostMatrix};
use crate::tracker::FrameResult;

pub const NUM_ALPHAS: usize = 19;

/// Localization thresholds `0.05 * k` for `k = 1..=19`.
pub fn alphas() -> [f64; NUM_ALPHAS] {
    std::array::from_fn(|k| 0.05 * (k + 1) as f64)
}

/// Per-frame `(identity, box)` lists. Used for ground truth and predictions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceGT {
    /// Declared frame count; when absent the last labeled frame is used.
    pub num_frames: Option<u32>,
    frames: BTreeMap<u32, Vec<(u32, BBox)>>,
}

impl SequenceGT {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_frames(num_frames: u32) -> Self {
        Self {
            num_frames: Some(num_frames),
            frames: BTreeMap::new(),
        }
    }

    /// Adds a box; a second box for the same id in the same frame replaces the first.
    pub fn insert(&mut self, frame: u32, id: u32, bbox: BBox) {
        let entries = self.frames.entry(frame).or_default();
        match entries.iter_mut().find(|(i, _)| *i == id) {
            Some(slot) => slot.1 = bbox,
            None => entries.push((id, bbox)),
        }
    }

    pub fn frame(&self, frame: u32) -> &[(u32, BBox)] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = (u32, &[(u32, BBox)])> {
        self.frames.iter().map(|(f, v)| (*f, v.as_slice()))
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.frames.iter().rev().find(|(_, v)| !v.is_empty()).map(|(f, _)| *f)
    }

    pub fn is_empty(&self) -> bool {
        self.frames.values().all(Vec::is_empty)
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.frames.values().flatten().map(|(id, _)| *id).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn from_results(results: &[FrameResult], num_frames: Option<u32>) -> Self {
        let mut s = Self {
            num_frames,
            frames: BTreeMap::new(),
        };
        for r in results {
            for &(id, b) in &r.tracks {
                s.insert(r.frame, id, b);
            }
        }
        s
    }
}

/// The eight HOTA-family scores, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub detre: f64,
    pub detpr: f64,
    pub assre: f64,
    pub asspr: f64,
    pub loca: f64,
}

impl MetricBundle {
    pub const COLUMNS: [&'static str; 8] = ["HOTA", "DetA", "AssA", "DetRe", "DetPr", "AssRe", "AssPr", "LocA"];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.hota, self.deta, self.assa, self.detre, self.detpr, self.assre, self.asspr, self.loca,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            hota: v[0],
            deta: v[1],
            assa: v[2],
            detre: v[3],
            detpr: v[4],
            assre: v[5],
            asspr: v[6],
            loca: v[7],
        }
    }
}

/// Scores at one localization threshold, as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaScores {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub detre: f64,
    pub detpr: f64,
    pub assre: f64,
    pub asspr: f64,
    pub loca: f64,
}

/// Summable HOTA statistics for one or more sequences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HotaAccumulator {
    pub tp: [f64; NUM_ALPHAS],
    pub fn_: [f64; NUM_ALPHAS],
    pub fp: [f64; NUM_ALPHAS],
    pub loc: [f64; NUM_ALPHAS],
    /// Sum over true positives of the association Jaccard of their id pair.
    pub ass: [f64; NUM_ALPHAS],
    pub ass_re: [f64; NUM_ALPHAS],
    pub ass_pr: [f64; NUM_ALPHAS],
    /// Number of pooled sequences that had neither ground truth nor predictions.
    pub empty_sequences: usize,
    pub sequences: usize,
}

impl HotaAccumulator {
    pub fn merge(&mut self, other: &Self) {
        for a in 0..NUM_ALPHAS {
            self.tp[a] += other.tp[a];
            self.fn_[a] += other.fn_[a];
            self.fp[a] += other.fp[a];
            self.loc[a] += other.loc[a];
            self.ass[a] += other.ass[a];
            self.ass_re[a] += other.ass_re[a];
            self.ass_pr[a] += other.ass_pr[a];
        }
        self.empty_sequences += other.empty_sequences;
        self.sequences += other.sequences;
    }

    /// Nothing labeled on either side; scored as perfect.
    fn is_vacuous(&self) -> bool {
        self.sequences > 0 && self.empty_sequences == self.sequences
    }

    pub fn per_alpha(&self) -> Vec<AlphaScores> {
        let vacuous = self.is_vacuous();
        alphas()
            .iter()
            .enumerate()
            .map(|(a, &alpha)| {
                if vacuous {
                    return AlphaScores {
                        alpha,
                        hota: 1.0,
                        deta: 1.0,
                        assa: 1.0,
                        detre: 1.0,
                        detpr: 1.0,
                        assre: 1.0,
                        asspr: 1.0,
                        loca: 1.0,
                    };
                }
                let (tp, fn_, fp) = (self.tp[a], self.fn_[a], self.fp[a]);
                let deta = tp / (tp + fn_ + fp).max(1.0);
                let assa = self.ass[a] / tp.max(1.0);
                AlphaScores {
                    alpha,
                    hota: (deta * assa).sqrt(),
                    deta,
                    assa,
                    detre: tp / (tp + fn_).max(1.0),
                    detpr: tp / (tp + fp).max(1.0),
                    assre: self.ass_re[a] / tp.max(1.0),
                    asspr: self.ass_pr[a] / tp.max(1.0),
                    loca: self.loc[a].max(1e-10) / tp.max(1e-10),
                }
            })
            .collect()
    }

    pub fn bundle(&self) -> MetricBundle {
        let per = self.per_alpha();
        let n = per.len() as f64;
        let mean = |f: fn(&AlphaScores) -> f64| 100.0 * per.iter().map(f).sum::<f64>() / n;
        MetricBundle {
            hota: mean(|s| s.hota),
            deta: mean(|s| s.deta),
            assa: mean(|s| s.assa),
            detre: mean(|s| s.detre),
            detpr: mean(|s| s.detpr),
            assre: mean(|s| s.assre),
            asspr: mean(|s| s.asspr),
            loca: mean(|s| s.loca),
        }
    }
}

fn check_ranges(gt: &SequenceGT, pred: &SequenceGT) -> Result<(), MetricsError> {
    if let (Some(g), Some(p)) = (gt.num_frames, pred.num_frames) {
        if g != p {
            return Err(MetricsError::FrameRange { gt: g, pred: p });
        }
    }
    let limit = gt.num_frames.or(pred.num_frames).or(gt.last_frame());
    for seq in [gt, pred] {
        for (frame, boxes) in seq.frames() {
            if boxes.is_empty() {
                continue;
            }
            if frame == 0 || limit.is_some_and(|n| frame > n) {
                return Err(MetricsError::FrameOutOfRange {
                    frame,
                    frames: limit.unwrap_or(0),
                });
            }
        }
    }
    Ok(())
}

fn dense_ids(seq: &SequenceGT) -> BTreeMap<u32, usize> {
    seq.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect()
}

/// Accumulates HOTA statistics for one sequence.
pub fn accumulate(gt: &SequenceGT, pred: &SequenceGT) -> Result<HotaAccumulator, MetricsError> {
    check_ranges(gt, pred)?;
    let mut acc = HotaAccumulator {
        sequences: 1,
        ..Default::default()
    };
    if gt.is_empty() && pred.is_empty() {
        acc.empty_sequences = 1;
        return Ok(acc);
    }
    let gt_ids = dense_ids(gt);
    let pr_ids = dense_ids(pred);
    let (ng, np) = (gt_ids.len(), pr_ids.len());

    let frames: BTreeSet<u32> = gt.frames().chain(pred.frames()).map(|(f, _)| f).collect();
    struct FrameData {
        g: Vec<usize>,
        p: Vec<usize>,
        sim: Vec<f64>,
    }
    let data: Vec<FrameData> = frames
        .iter()
        .map(|&f| {
            let gs = gt.frame(f);
            let ps = pred.frame(f);
            let sim = gs
                .iter()
                .flat_map(|(_, gb)| ps.iter().map(move |(_, pb)| iou(gb, pb)))
                .collect();
            FrameData {
                g: gs.iter().map(|(id, _)| gt_ids[id]).collect(),
                p: ps.iter().map(|(id, _)| pr_ids[id]).collect(),
                sim,
            }
        })
        .collect();

    let mut potential = vec![0.0f64; ng * np];
    let mut gt_count = vec![0.0f64; ng];
    let mut pr_count = vec![0.0f64; np];
    for fd in &data {
        let (rows, cols) = (fd.g.len(), fd.p.len());
        let row_sum: Vec<f64> = (0..rows).map(|i| fd.sim[i * cols..(i + 1) * cols].iter().sum()).collect();
        let col_sum: Vec<f64> = (0..cols).map(|j| (0..rows).map(|i| fd.sim[i * cols + j]).sum()).collect();
        for i in 0..rows {
            for j in 0..cols {
                let s = fd.sim[i * cols + j];
                let denom = row_sum[i] + col_sum[j] - s;
                if denom > f64::EPSILON {
                    potential[fd.g[i] * np + fd.p[j]] += s / denom;
                }
            }
        }
        for &g in &fd.g {
            gt_count[g] += 1.0;
        }
        for &p in &fd.p {
            pr_count[p] += 1.0;
        }
    }
    let alignment: Vec<f64> = (0..ng * np)
        .map(|k| {
            let (g, p) = (k / np, k % np);
            let denom = gt_count[g] + pr_count[p] - potential[k];
            if denom > 0.0 {
                potential[k] / denom
            } else {
                0.0
            }
        })
        .collect();

    let thresholds = alphas();
    let mut match_counts: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); NUM_ALPHAS];
    for fd in &data {
        let (rows, cols) = (fd.g.len(), fd.p.len());
        let mut matches = Vec::new();
        if rows > 0 && cols > 0 {
            let costs = CostMatrix::from_fn(rows, cols, |i, j| {
                let score = alignment[fd.g[i] * np + fd.p[j]] * fd.sim[i * cols + j];
                (score > 0.0).then_some(-score)
            });
            matches = lap::solve(&costs).matches;
        }
        for (a, &alpha) in thresholds.iter().enumerate() {
            let mut tp = 0usize;
            for &(i, j) in &matches {
                let s = fd.sim[i * cols + j];
                if s >= alpha - f64::EPSILON {
                    tp += 1;
                    acc.loc[a] += s;
                    *match_counts[a].entry((fd.g[i], fd.p[j])).or_default() += 1.0;
                }
            }
            acc.tp[a] += tp as f64;
            acc.fn_[a] += (rows - tp) as f64;
            acc.fp[a] += (cols - tp) as f64;
        }
    }
    for (a, counts) in match_counts.iter().enumerate() {
        for (&(g, p), &m) in counts {
            acc.ass[a] += m * m / (gt_count[g] + pr_count[p] - m).max(1.0);
            acc.ass_re[a] += m * m / gt_count[g].max(1.0);
            acc.ass_pr[a] += m * m / pr_count[p].max(1.0);
        }
    }
    Ok(acc)
}

pub fn evaluate(gt: &SequenceGT, pred: &SequenceGT) -> Result<MetricBundle, MetricsError> {
    Ok(accumulate(gt, pred)?.bundle())
}

/// How several sequences are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Sum accumulators, then take ratios.
    #[default]
    Pooled,
    /// Arithmetic mean of per-sequence bundles.
    Averaged,
}

pub fn evaluate_benchmark(pairs: &[(SequenceGT, SequenceGT)]) -> Result<MetricBundle, MetricsError> {
    combine(pairs.iter().map(|(g, p)| accumulate(g, p)).collect::<Result<Vec<_>, _>>()?, Pooling::Pooled)
}

/// Combines per-sequence accumulators.
pub fn combine(accs: Vec<HotaAccumulator>, pooling: Pooling) -> Result<MetricBundle, MetricsError> {
    if accs.is_empty() {
        return Err(MetricsError::EmptyBenchmark);
    }
    match pooling {
        Pooling::Pooled => {
            let mut total = HotaAccumulator::default();
            for a in &accs {
                total.merge(a);
            }
            Ok(total.bundle())
        }
        Pooling::Averaged => {
            let n = accs.len() as f64;
            let mut sum = [0.0; 8];
            for a in &accs {
                for (s, v) in sum.iter_mut().zip(a.bundle().to_array()) {
                    *s += v;
                }
            }
            Ok(MetricBundle::from_array(sum.map(|s| s / n)))
        }
    }
}

/// Identity switches in the CLEAR-MOT sense: a ground-truth object whose
/// matched prediction id changes from the id it was last matched to.
/// Correspondences from the previous frame are kept while their IoU stays at
/// or above `threshold`; the rest are matched by Hungarian on IoU.
pub fn identity_switches(gt: &SequenceGT, pred: &SequenceGT, threshold: f64) -> usize {
    let mut last_match: BTreeMap<u32, u32> = BTreeMap::new();
    let mut prev_frame: BTreeMap<u32, u32> = BTreeMap::new();
    let mut switches = 0;
    let frames: BTreeSet<u32> = gt.frames().map(|(f, _)| f).collect();
    for f in frames {
        let gs = gt.frame(f);
        let ps = pred.frame(f);
        let mut current: BTreeMap<u32, u32> = BTreeMap::new();
        let mut g_used = vec![false; gs.len()];
        let mut p_used = vec![false; ps.len()];
        for (gi, (gid, gb)) in gs.iter().enumerate() {
            if let Some(pid) = prev_frame.get(gid) {
                if let Some(pj) = ps.iter().position(|(id, _)| id == pid) {
                    if !p_used[pj] && iou(gb, &ps[pj].1) >= threshold {
                        g_used[gi] = true;
                        p_used[pj] = true;
                        current.insert(*gid, *pid);
                    }
                }
            }
        }
        let free_g: Vec<usize> = (0..gs.len()).filter(|&i| !g_used[i]).collect();
        let free_p: Vec<usize> = (0..ps.len()).filter(|&j| !p_used[j]).collect();
        let costs = CostMatrix::from_fn(free_g.len(), free_p.len(), |i, j| {
            let s = iou(&gs[free_g[i]].1, &ps[free_p[j]].1);
            (s >= threshold).then_some(-s)
        });
        for (i, j) in lap::solve(&costs).matches {
            let (gid, pid) = (gs[free_g[i]].0, ps[free_p[j]].0);
            if last_match.get(&gid).is_some_and(|&old| old != pid) {
                switches += 1;
            }
            current.insert(gid, pid);
        }
        for (&g, &p) in &current {
            last_match.insert(g, p);
        }
        prev_frame = current;
    }
    switches
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bb(x: f64) -> BBox {
        BBox::new(x, 10.0, x + 20.0, 50.0).unwrap()
    }

    fn single_target(frames: u32, id_for: impl Fn(u32) -> u32) -> (SequenceGT, SequenceGT) {
        let mut gt = SequenceGT::new();
        let mut pr = SequenceGT::new();
        for f in 1..=frames {
            gt.insert(f, 1, bb(f64::from(f) * 3.0));
            pr.insert(f, id_for(f), bb(f64::from(f) * 3.0));
        }
        (gt, pr)
    }

    #[test]
    fn perfect_tracking_scores_100() {
        let (gt, _) = single_target(10, |_| 1);
        let m = evaluate(&gt, &gt).unwrap();
        for v in m.to_array() {
            assert_abs_diff_eq!(v, 100.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let (gt, _) = single_target(10, |_| 1);
        let m = evaluate(&gt, &SequenceGT::new()).unwrap();
        assert_eq!(m.hota, 0.0);
        assert_eq!(m.deta, 0.0);
        assert_eq!(m.detre, 0.0);
    }

    #[test]
    fn empty_vs_empty_is_perfect() {
        let m = evaluate(&SequenceGT::new(), &SequenceGT::new()).unwrap();
        assert_eq!(m.to_array(), [100.0; 8]);
    }

    #[test]
    fn single_switch_halves_association() {
        let (gt, pr) = single_target(10, |f| if f < 6 { 1 } else { 2 });
        let m = evaluate(&gt, &pr).unwrap();
        assert_abs_diff_eq!(m.deta, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.assa, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.hota, 50.0f64.sqrt() * 10.0, epsilon = 1e-9);
        assert_eq!(identity_switches(&gt, &pr, 0.5), 1);
    }

    #[test]
    fn frame_range_errors() {
        let (gt, pr) = single_target(3, |_| 1);
        let mut gt_declared = gt.clone();
        gt_declared.num_frames = Some(3);
        let mut pr_declared = pr.clone();
        pr_declared.num_frames = Some(4);
        assert!(matches!(evaluate(&gt_declared, &pr_declared), Err(MetricsError::FrameRange { .. })));
        let mut late = pr.clone();
        late.insert(9, 1, bb(0.0));
        assert!(evaluate(&gt, &late).is_err());
        assert!(evaluate(&gt_declared, &late).is_err());
    }

    #[test]
    fn benchmark_contract() {
        let (gt, pr) = single_target(10, |f| if f < 6 { 1 } else { 2 });
        let single = evaluate(&gt, &pr).unwrap();
        let one = evaluate_benchmark(&[(gt.clone(), pr.clone())]).unwrap();
        assert_eq!(single, one);
        let twice = evaluate_benchmark(&[(gt.clone(), pr.clone()), (gt.clone(), pr.clone())]).unwrap();
        for (a, b) in single.to_array().iter().zip(twice.to_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let (g2, _) = single_target(5, |_| 1);
        let perfect = evaluate_benchmark(&[(g2.clone(), g2.clone()), (gt.clone(), gt.clone())]).unwrap();
        for v in perfect.to_array() {
            assert_abs_diff_eq!(v, 100.0, epsilon = 1e-9);
        }
        assert_eq!(evaluate_benchmark(&[]), Err(MetricsError::EmptyBenchmark));
    }

    #[test]
    fn hota_is_geometric_mean_per_threshold() {
        let (gt, pr) = single_target(12, |f| if f % 4 == 0 { 7 } else { 3 });
        let acc = accumulate(&gt, &pr).unwrap();
        for s in acc.per_alpha() {
            assert_abs_diff_eq!(s.hota, (s.deta * s.assa).sqrt(), epsilon = 1e-12);
            assert!(s.deta <= s.detre.min(s.detpr) + 1e-12);
        }
    }
}
