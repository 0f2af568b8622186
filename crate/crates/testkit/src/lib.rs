//! Slow, obviously-correct reference implementations for cross-checking the
//! engine: exhaustive assignment, exhaustive IoU matching and a HOTA
//! evaluator written straight from the accumulator definitions.

use std::collections::BTreeMap;

use rgbdtrack::geometry::{iou, BBox};
use rgbdtrack::lap::CostMatrix;
use rgbdtrack::metrics::SequenceGT;
use serde::Deserialize;

fn partial_min(c: &CostMatrix, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
    if row == c.rows() {
        *best = best.min(acc);
        return;
    }
    partial_min(c, row + 1, used, acc, best);
    for j in 0..c.cols() {
        if let (false, Some(v)) = (used[j], c.get(row, j)) {
            used[j] = true;
            partial_min(c, row + 1, used, acc + v, best);
            used[j] = false;
        }
    }
}

/// Minimum total over all partial one-to-one matchings, summed in row order.
pub fn brute_min_matching(c: &CostMatrix) -> f64 {
    let mut best = 0.0;
    partial_min(c, 0, &mut vec![false; c.cols()], 0.0, &mut best);
    best
}

fn perm_min(c: &CostMatrix, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
    if row == c.rows() {
        *best = best.min(acc);
        return;
    }
    let free_cols = used.iter().filter(|u| !**u).count();
    // rows left over once every column is taken stay unassigned
    if c.rows() - row > free_cols {
        perm_min(c, row + 1, used, acc, best);
    }
    for j in 0..c.cols() {
        if let (false, Some(v)) = (used[j], c.get(row, j)) {
            used[j] = true;
            perm_min(c, row + 1, used, acc + v, best);
            used[j] = false;
        }
    }
}

/// Minimum over maximum-cardinality assignments of a fully admissible matrix.
pub fn brute_min_permutation(c: &CostMatrix) -> f64 {
    let mut best = f64::INFINITY;
    perm_min(c, 0, &mut vec![false; c.cols()], 0.0, &mut best);
    if best.is_infinite() { 0.0 } else { best }
}

fn iou_max(preds: &[BBox], gts: &[BBox], i: usize, used: &mut [bool], acc: f64, best: &mut f64) {
    if i == preds.len() {
        *best = best.max(acc);
        return;
    }
    iou_max(preds, gts, i + 1, used, acc, best);
    for j in 0..gts.len() {
        if !used[j] {
            used[j] = true;
            iou_max(preds, gts, i + 1, used, acc + iou(&preds[i], &gts[j]), best);
            used[j] = false;
        }
    }
}

/// Largest summed IoU over every one-to-one matching, summed in prediction order.
pub fn brute_max_iou(preds: &[BBox], gts: &[BBox]) -> f64 {
    let mut best = 0.0;
    iou_max(preds, gts, 0, &mut vec![false; gts.len()], 0.0, &mut best);
    best
}

/// One format-check case: response text and the expected strict-mode reward.
#[derive(Debug, Clone, Deserialize)]
pub struct FormatCase {
    pub response: String,
    pub expected: f64,
    pub note: String,
}

pub fn format_golden() -> Vec<FormatCase> {
    include_str!("../fixtures/format_golden.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("golden line parses"))
        .collect()
}

/// Scores at one localization threshold, as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAlpha {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub detre: f64,
    pub detpr: f64,
    pub assre: f64,
    pub asspr: f64,
    pub loca: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub per_alpha: Vec<OracleAlpha>,
    /// Threshold means in percent, in table order.
    pub bundle: [f64; 8],
}

type Det = (u32, BBox);

fn frames_of(gt: &SequenceGT, pred: &SequenceGT) -> Vec<(Vec<Det>, Vec<Det>)> {
    let last = gt
        .num_frames
        .or(pred.num_frames)
        .unwrap_or_else(|| gt.last_frame().unwrap_or(0).max(pred.last_frame().unwrap_or(0)));
    (1..=last).map(|f| (gt.frame(f).to_vec(), pred.frame(f).to_vec())).collect()
}

/// Best partial matching by exhaustive search; strictly better totals win so
/// the first optimum in enumeration order is kept.
fn best_matching(score: &[Vec<f64>]) -> Vec<(usize, usize)> {
    fn go(score: &[Vec<f64>], i: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, acc: f64, best: &mut (f64, Vec<(usize, usize)>)) {
        if i == score.len() {
            if acc > best.0 + 1e-12 {
                *best = (acc, cur.clone());
            }
            return;
        }
        go(score, i + 1, used, cur, acc, best);
        for j in 0..used.len() {
            if !used[j] && score[i][j] > 0.0 {
                used[j] = true;
                cur.push((i, j));
                go(score, i + 1, used, cur, acc + score[i][j], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let cols = score.first().map_or(0, Vec::len);
    let mut best = (0.0, Vec::new());
    go(score, 0, &mut vec![false; cols], &mut Vec::new(), 0.0, &mut best);
    best.1
}

/// HOTA from the accumulator definitions: one matching per frame maximizing
/// alignment-weighted IoU, then per threshold explicit TP lists with their
/// TPA/FNA/FPA counts.
pub fn hota_oracle(gt: &SequenceGT, pred: &SequenceGT) -> OracleReport {
    let frames = frames_of(gt, pred);
    let gt_total: usize = frames.iter().map(|(g, _)| g.len()).sum();
    let pred_total: usize = frames.iter().map(|(_, p)| p.len()).sum();
    if gt_total == 0 && pred_total == 0 {
        let one = OracleAlpha { hota: 1.0, deta: 1.0, assa: 1.0, detre: 1.0, detpr: 1.0, assre: 1.0, asspr: 1.0, loca: 1.0 };
        return OracleReport { per_alpha: vec![one; 19], bundle: [100.0; 8] };
    }

    let mut gt_count: BTreeMap<u32, f64> = BTreeMap::new();
    let mut pred_count: BTreeMap<u32, f64> = BTreeMap::new();
    let mut soft: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (g, p) in &frames {
        for (gid, _) in g {
            *gt_count.entry(*gid).or_default() += 1.0;
        }
        for (pid, _) in p {
            *pred_count.entry(*pid).or_default() += 1.0;
        }
        let sim: Vec<Vec<f64>> = g.iter().map(|(_, gb)| p.iter().map(|(_, pb)| iou(gb, pb)).collect()).collect();
        for (i, (gid, _)) in g.iter().enumerate() {
            let row: f64 = sim[i].iter().sum();
            for (j, (pid, _)) in p.iter().enumerate() {
                let col: f64 = sim.iter().map(|r| r[j]).sum();
                let denom = row + col - sim[i][j];
                if denom > f64::EPSILON {
                    *soft.entry((*gid, *pid)).or_default() += sim[i][j] / denom;
                }
            }
        }
    }
    let alignment = |g: u32, p: u32| {
        let s = soft.get(&(g, p)).copied().unwrap_or(0.0);
        s / (gt_count[&g] + pred_count[&p] - s)
    };

    // (gid, pid, iou) of every matched pair, all frames
    let mut matched: Vec<(u32, u32, f64)> = Vec::new();
    for (g, p) in &frames {
        if g.is_empty() || p.is_empty() {
            continue;
        }
        let score: Vec<Vec<f64>> = g
            .iter()
            .map(|(gid, gb)| p.iter().map(|(pid, pb)| alignment(*gid, *pid) * iou(gb, pb)).collect())
            .collect();
        for (i, j) in best_matching(&score) {
            matched.push((g[i].0, p[j].0, iou(&g[i].1, &p[j].1)));
        }
    }

    let mut per_alpha = Vec::with_capacity(19);
    for k in 1..=19 {
        let alpha = 0.05 * f64::from(k);
        let tps: Vec<&(u32, u32, f64)> = matched.iter().filter(|m| m.2 >= alpha - f64::EPSILON).collect();
        let tp = tps.len() as f64;
        let mut tpa: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (g, p, _) in &tps {
            *tpa.entry((*g, *p)).or_default() += 1.0;
        }
        let (mut assa, mut assre, mut asspr, mut loc) = (0.0, 0.0, 0.0, 0.0);
        for (g, p, s) in &tps {
            let n = tpa[&(*g, *p)];
            let fna = gt_count[g] - n;
            let fpa = pred_count[p] - n;
            assa += n / (n + fna + fpa);
            assre += n / (n + fna);
            asspr += n / (n + fpa);
            loc += s;
        }
        let mean = |v: f64| if tp > 0.0 { v / tp } else { 0.0 };
        let deta = tp / (gt_total as f64 + pred_total as f64 - tp);
        let a = OracleAlpha {
            hota: (deta * mean(assa)).sqrt(),
            deta,
            assa: mean(assa),
            detre: if gt_total > 0 { tp / gt_total as f64 } else { 0.0 },
            detpr: if pred_total > 0 { tp / pred_total as f64 } else { 0.0 },
            assre: mean(assre),
            asspr: mean(asspr),
            loca: if tp > 0.0 { loc / tp } else { 1.0 },
        };
        per_alpha.push(a);
    }
    let avg = |f: fn(&OracleAlpha) -> f64| per_alpha.iter().map(f).sum::<f64>() / 19.0 * 100.0;
    let bundle = [
        avg(|a| a.hota),
        avg(|a| a.deta),
        avg(|a| a.assa),
        avg(|a| a.detre),
        avg(|a| a.detpr),
        avg(|a| a.assre),
        avg(|a| a.asspr),
        avg(|a| a.loca),
    ];
    OracleReport { per_alpha, bundle }
}
