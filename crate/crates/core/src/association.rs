//! Fused association cost `C = -(S_RGBD + lambda * VDC)`, gating and the
//! observation-centric recovery round.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::geometry::{iou, rgbd_similarity, BBox, SimilarityParams};
use crate::lap::{self, Assignment, CostMatrix};
use crate::motion::{observation_direction, vdc_score, VelocityDir};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    /// Weight of the direction-consistency prior.
    pub lambda: f64,
    /// Minimum fused similarity for a first-round match.
    pub gate: f64,
    /// Minimum plain IoU for a recovery-round match.
    pub second_round_iou_gate: f64,
    pub second_round: bool,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            gate: 0.3,
            second_round_iou_gate: 0.3,
            second_round: true,
        }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GeometryError::Param("lambda must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.gate) {
            return Err(GeometryError::Param("gate must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.second_round_iou_gate) {
            return Err(GeometryError::Param("second_round_iou_gate must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// What the first round needs to know about a live track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackCue {
    pub predicted: BBox,
    pub depth: Option<f64>,
    pub direction: Option<VelocityDir>,
    /// Observation the candidate directions are measured from.
    pub anchor: Option<BBox>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionCue {
    pub bbox: BBox,
    pub depth: Option<f64>,
}

/// Fused similarity and direction term of one track/detection pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub iou: f64,
    pub s_rgbd: f64,
    pub vdc: f64,
}

pub fn pair_score(track: &TrackCue, det: &DetectionCue, sim: &SimilarityParams) -> PairScore {
    let overlap = iou(&track.predicted, &det.bbox);
    let s_d = sim.depth_term(det.depth, track.depth);
    let candidate = track.anchor.and_then(|a| observation_direction(&a, &det.bbox));
    PairScore {
        iou: overlap,
        s_rgbd: rgbd_similarity(overlap, s_d, sim),
        vdc: vdc_score(track.direction, candidate),
    }
}

/// Rows are tracks, columns detections. Pairs whose fused similarity falls
/// below the gate are forbidden.
pub fn build_cost_matrix(
    tracks: &[TrackCue],
    dets: &[DetectionCue],
    params: &AssociationParams,
    sim: &SimilarityParams,
) -> CostMatrix {
    CostMatrix::from_fn(tracks.len(), dets.len(), |i, j| {
        let s = pair_score(&tracks[i], &dets[j], sim);
        (s.s_rgbd >= params.gate).then(|| -(s.s_rgbd + params.lambda * s.vdc))
    })
}

pub fn solve_assignment(costs: &CostMatrix) -> Assignment {
    lap::solve(costs)
}

/// Hungarian matching of leftover tracks (by their last observed box) to
/// leftover detections on plain IoU. Returned pairs index into the full
/// track and detection lists.
pub fn second_round_recovery(
    unmatched_tracks: &[usize],
    unmatched_dets: &[usize],
    last_observations: &[BBox],
    det_boxes: &[BBox],
    iou_gate: f64,
) -> Vec<(usize, usize)> {
    if unmatched_tracks.is_empty() || unmatched_dets.is_empty() {
        return Vec::new();
    }
    let costs = CostMatrix::from_fn(unmatched_tracks.len(), unmatched_dets.len(), |i, j| {
        let overlap = iou(&last_observations[unmatched_tracks[i]], &det_boxes[unmatched_dets[j]]);
        (overlap >= iou_gate && overlap > 0.0).then_some(-overlap)
    });
    lap::solve(&costs)
        .matches
        .into_iter()
        .map(|(i, j)| (unmatched_tracks[i], unmatched_dets[j]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn moving_track(b: BBox, depth: f64) -> TrackCue {
        TrackCue {
            predicted: b,
            depth: Some(depth),
            direction: VelocityDir::from_displacement(1.0, 0.0),
            anchor: Some(b.translate(-3.0, 0.0)),
        }
    }

    #[test]
    fn perfect_pair_costs_minus_one_point_three() {
        let b = bb(10., 10., 30., 50.);
        let costs = build_cost_matrix(
            &[moving_track(b, 2.0)],
            &[DetectionCue { bbox: b, depth: Some(2.0) }],
            &AssociationParams::default(),
            &SimilarityParams::default(),
        );
        assert_abs_diff_eq!(costs.get(0, 0).unwrap(), -1.3, epsilon = 1e-12);
    }

    #[test]
    fn lambda_zero_leaves_fused_similarity() {
        let t = moving_track(bb(0., 0., 10., 10.), 2.0);
        let d = DetectionCue { bbox: bb(5., 0., 15., 10.), depth: Some(2.5) };
        let params = AssociationParams { lambda: 0.0, gate: 0.0, ..Default::default() };
        let sim = SimilarityParams::default();
        let c = build_cost_matrix(&[t], &[d], &params, &sim).get(0, 0).unwrap();
        assert_abs_diff_eq!(c, -(0.9 / 3.0 + 0.1 * (-1.0f64).exp()), epsilon = 1e-12);
    }

    #[test]
    fn pure_iou_configuration() {
        let t = moving_track(bb(0., 0., 10., 10.), 2.0);
        let d = DetectionCue { bbox: bb(5., 0., 15., 10.), depth: Some(7.0) };
        let params = AssociationParams { lambda: 0.0, gate: 0.0, ..Default::default() };
        let sim = SimilarityParams { alpha: 1.0, ..Default::default() };
        let c = build_cost_matrix(&[t], &[d], &params, &sim).get(0, 0).unwrap();
        assert_abs_diff_eq!(c, -1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gate_forbids_weak_pairs() {
        let t = moving_track(bb(0., 0., 10., 10.), 2.0);
        let far = DetectionCue { bbox: bb(50., 50., 60., 60.), depth: Some(2.0) };
        let costs = build_cost_matrix(&[t], &[far], &AssociationParams::default(), &SimilarityParams::default());
        assert_eq!(costs.get(0, 0), None);
        assert!(solve_assignment(&costs).matches.is_empty());
    }

    #[test]
    fn empty_inputs_give_empty_matrix() {
        let c = build_cost_matrix(&[], &[], &AssociationParams::default(), &SimilarityParams::default());
        assert!(c.is_empty());
        let a = solve_assignment(&c);
        assert!(a.matches.is_empty());
    }

    #[test]
    fn depth_breaks_two_dimensional_ties() {
        // two tracks on the same spot, two detections on the same spot:
        // every pairing has the same IoU, only depth tells them apart
        let b = bb(100., 100., 140., 180.);
        let d = bb(102., 100., 142., 180.);
        let tracks = [
            TrackCue { predicted: b, depth: Some(4.0), direction: None, anchor: None },
            TrackCue { predicted: b, depth: Some(2.0), direction: None, anchor: None },
        ];
        let dets = [
            DetectionCue { bbox: d, depth: Some(2.0) },
            DetectionCue { bbox: d, depth: Some(4.0) },
        ];
        let params = AssociationParams::default();
        let fused = solve_assignment(&build_cost_matrix(&tracks, &dets, &params, &SimilarityParams::default()));
        assert_eq!(fused.matches, vec![(0, 1), (1, 0)]);
        let flat = SimilarityParams { alpha: 1.0, ..Default::default() };
        let tie = solve_assignment(&build_cost_matrix(&tracks, &dets, &params, &flat));
        // pure IoU cannot tell; lexicographic tie-break applies
        assert_eq!(tie.matches, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn recovery_examples() {
        let last = [bb(0., 0., 10., 10.), bb(100., 100., 110., 110.)];
        let dets = [bb(1., 0., 11., 10.), bb(300., 300., 310., 310.)];
        let m = second_round_recovery(&[0, 1], &[0, 1], &last, &dets, 0.3);
        assert_eq!(m, vec![(0, 0)]);
        assert!(second_round_recovery(&[1], &[1], &last, &dets, 0.3).is_empty());
        assert!(second_round_recovery(&[], &[0], &last, &dets, 0.3).is_empty());
    }
}
