//! Per-frame pipeline: predict, associate (fused first round plus recovery),
//! update, then birth and death of tracks.

use serde::{Deserialize, Serialize};

use crate::association::{
    build_cost_matrix, second_round_recovery, solve_assignment, AssociationParams, DetectionCue, TrackCue,
};
use crate::error::TrackError;
use crate::geometry::{mean_box_depth, BBox, DepthMap, SimilarityParams};
use crate::motion::{observation_direction, KalmanConfig, KalmanState, VelocityDir};

/// A raw detection as handed to the tracker. The box is validated on entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: [f64; 4],
    pub score: f64,
    /// Depth reported alongside the box; when absent the depth map is sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
}

impl Detection {
    pub fn new(bbox: [f64; 4], score: f64) -> Self {
        Self { bbox, score, depth_m: None }
    }
}

/// Where a track's depth comes from when scoring a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackDepthMode {
    /// Mean depth under the predicted box in the current frame, falling back to
    /// the last observed depth when that region has no valid pixel.
    #[default]
    CurrentFrame,
    /// Depth cached from the last matched detection.
    LastObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub sim: SimilarityParams,
    pub assoc: AssociationParams,
    pub kalman: KalmanConfig,
    pub max_age: u32,
    pub min_hits: u32,
    pub det_score_min: f64,
    /// Frame gap used for direction estimates.
    pub vdc_window: u32,
    pub track_depth: TrackDepthMode,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            sim: SimilarityParams::default(),
            assoc: AssociationParams::default(),
            kalman: KalmanConfig::default(),
            max_age: 30,
            min_hits: 3,
            det_score_min: 0.1,
            vdc_window: 3,
            track_depth: TrackDepthMode::CurrentFrame,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackError> {
        let param = |e: crate::error::GeometryError| TrackError::Param(e.to_string());
        self.sim.validate().map_err(param)?;
        self.assoc.validate().map_err(param)?;
        if self.max_age < 1 {
            return Err(TrackError::Param("max_age must be at least 1".into()));
        }
        if self.min_hits < 1 {
            return Err(TrackError::Param("min_hits must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.det_score_min) {
            return Err(TrackError::Param("det_score_min must lie in [0, 1]".into()));
        }
        if self.vdc_window < 1 {
            return Err(TrackError::Param("vdc_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub kf: KalmanState,
    pub observations: Vec<(u32, BBox)>,
    pub hits: u32,
    pub age: u32,
    pub time_since_update: u32,
    pub status: TrackStatus,
    pub last_depth: Option<f64>,
    pub direction: Option<VelocityDir>,
}

impl Track {
    fn last_observation(&self) -> BBox {
        self.observations.last().expect("tracks are born from an observation").1
    }

    /// Observation `window` frames before `frame`, else the closest later one
    /// inside the window, else the latest observation.
    fn reference_observation(&self, frame: u32, window: u32) -> BBox {
        for dt in (1..=window).rev() {
            let Some(target) = frame.checked_sub(dt) else { continue };
            if let Ok(i) = self.observations.binary_search_by_key(&target, |(f, _)| *f) {
                return self.observations[i].1;
            }
        }
        self.last_observation()
    }

    fn predicted_box(&self) -> BBox {
        self.kf.bbox().unwrap_or_else(|| self.last_observation())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FrameResult {
    pub frame: u32,
    /// `(track id, box)` sorted by id.
    pub tracks: Vec<(u32, BBox)>,
    pub rejected_detections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrackerStats {
    pub frames: u32,
    pub births: u32,
    pub deaths: u32,
    pub rejected_detections: u64,
}

/// One tracker per sequence; ids start at 1 and are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u32,
    last_frame: Option<u32>,
    stats: TrackerStats,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self, TrackError> {
        params.validate()?;
        Ok(Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            stats: TrackerStats::default(),
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn live_tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    pub fn step(&mut self, frame: u32, detections: &[Detection], depth: Option<&DepthMap>) -> Result<FrameResult, TrackError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackError::FrameOrder { last, got: frame });
            }
        }
        self.last_frame = Some(frame);
        self.stats.frames += 1;
        let p = self.params;

        let mut rejected = 0usize;
        let mut dets: Vec<DetectionCue> = Vec::with_capacity(detections.len());
        for d in detections {
            let Ok(bbox) = BBox::from_array(d.bbox) else {
                rejected += 1;
                continue;
            };
            if !d.score.is_finite() || d.score < p.det_score_min {
                continue;
            }
            let depth_m = d
                .depth_m
                .filter(|v| v.is_finite() && *v > 0.0)
                .or_else(|| depth.and_then(|m| mean_box_depth(m, &bbox)));
            dets.push(DetectionCue { bbox, depth: depth_m });
        }
        self.stats.rejected_detections += rejected as u64;

        for t in &mut self.tracks {
            t.kf = t.kf.predict(&p.kalman);
            t.age += 1;
            t.time_since_update += 1;
        }

        let cues: Vec<TrackCue> = self
            .tracks
            .iter()
            .map(|t| {
                let predicted = t.predicted_box();
                let track_depth = match (p.track_depth, depth) {
                    (TrackDepthMode::CurrentFrame, Some(m)) => mean_box_depth(m, &predicted).or(t.last_depth),
                    (TrackDepthMode::CurrentFrame, None) => None,
                    (TrackDepthMode::LastObservation, _) => t.last_depth,
                };
                TrackCue {
                    predicted,
                    depth: track_depth,
                    direction: t.direction,
                    anchor: Some(t.reference_observation(frame, p.vdc_window)),
                }
            })
            .collect();

        let first = solve_assignment(&build_cost_matrix(&cues, &dets, &p.assoc, &p.sim));
        let mut matches = first.matches;
        if p.assoc.second_round {
            let last_obs: Vec<BBox> = self.tracks.iter().map(Track::last_observation).collect();
            let det_boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
            matches.extend(second_round_recovery(
                &first.unmatched_rows,
                &first.unmatched_cols,
                &last_obs,
                &det_boxes,
                p.assoc.second_round_iou_gate,
            ));
        }

        let mut det_taken = vec![false; dets.len()];
        for &(ti, di) in &matches {
            det_taken[di] = true;
            let det = &dets[di];
            let t = &mut self.tracks[ti];
            let reference = t.reference_observation(frame, p.vdc_window);
            t.direction = observation_direction(&reference, &det.bbox).or(t.direction);
            t.kf = t.kf.update(&det.bbox, &p.kalman);
            t.observations.push((frame, det.bbox));
            t.hits += 1;
            t.time_since_update = 0;
            if det.depth.is_some() {
                t.last_depth = det.depth;
            }
            if t.status == TrackStatus::Tentative && t.hits >= p.min_hits {
                t.status = TrackStatus::Confirmed;
            }
        }

        for t in &mut self.tracks {
            if t.time_since_update > 0 && (t.status == TrackStatus::Tentative || t.time_since_update > p.max_age) {
                t.status = TrackStatus::Dead;
            }
        }
        let before = self.tracks.len();
        self.tracks.retain(|t| t.status != TrackStatus::Dead);
        self.stats.deaths += (before - self.tracks.len()) as u32;

        for (det, _) in dets.iter().zip(&det_taken).filter(|(_, taken)| !**taken) {
            let status = if p.min_hits <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            self.tracks.push(Track {
                id: self.next_id,
                kf: KalmanState::new(&det.bbox, &p.kalman),
                observations: vec![(frame, det.bbox)],
                hits: 1,
                age: 0,
                time_since_update: 0,
                status,
                last_depth: det.depth,
                direction: None,
            });
            self.next_id += 1;
            self.stats.births += 1;
        }

        let warmup = self.stats.frames <= p.min_hits;
        let mut out: Vec<(u32, BBox)> = self
            .tracks
            .iter()
            .filter(|t| t.time_since_update == 0 && (t.status == TrackStatus::Confirmed || warmup))
            .map(|t| (t.id, t.kf.bbox().unwrap_or_else(|| t.last_observation())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        Ok(FrameResult {
            frame,
            tracks: out,
            rejected_detections: rejected,
        })
    }
}

/// Runs a whole sequence; entry `i` of both slices belongs to frame `i + 1`.
pub fn run_sequence(
    detections: &[Vec<Detection>],
    depths: &[Option<DepthMap>],
    params: &TrackerParams,
) -> Result<Vec<FrameResult>, TrackError> {
    if detections.len() != depths.len() {
        return Err(TrackError::LengthMismatch {
            detections: detections.len(),
            depths: depths.len(),
        });
    }
    let mut tracker = Tracker::new(*params)?;
    detections
        .iter()
        .zip(depths)
        .enumerate()
        .map(|(i, (dets, depth))| tracker.step(i as u32 + 1, dets, depth.as_ref()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(b: [f64; 4]) -> Detection {
        Detection::new(b, 0.9)
    }

    #[test]
    fn empty_first_frame() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        let r = t.step(1, &[], None).unwrap();
        assert!(r.tracks.is_empty());
        assert!(t.live_tracks().is_empty());
    }

    #[test]
    fn repeated_detection_confirms_on_third_hit() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        let b = [10.0, 10.0, 50.0, 90.0];
        for f in 1..=6 {
            let r = t.step(f, &[det(b)], None).unwrap();
            assert_eq!(r.tracks.len(), 1, "frame {f}");
            assert_eq!(r.tracks[0].0, 1);
            let status = t.live_tracks()[0].status;
            if f < 3 {
                assert_eq!(status, TrackStatus::Tentative);
            } else {
                assert_eq!(status, TrackStatus::Confirmed);
            }
        }
    }

    #[test]
    fn tentative_tracks_die_on_first_miss() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        t.step(1, &[det([0., 0., 10., 10.])], None).unwrap();
        t.step(2, &[], None).unwrap();
        assert!(t.live_tracks().is_empty());
        assert_eq!(t.stats().deaths, 1);
    }

    #[test]
    fn confirmed_tracks_coast_until_max_age() {
        let params = TrackerParams { max_age: 4, ..Default::default() };
        let mut t = Tracker::new(params).unwrap();
        let b = [10.0, 10.0, 50.0, 90.0];
        for f in 1..=3 {
            t.step(f, &[det(b)], None).unwrap();
        }
        for f in 4..=7 {
            let r = t.step(f, &[], None).unwrap();
            assert!(r.tracks.is_empty(), "coasting tracks emit nothing");
            assert_eq!(t.live_tracks().len(), 1);
        }
        t.step(8, &[], None).unwrap();
        assert!(t.live_tracks().is_empty());
    }

    #[test]
    fn coasting_track_reacquires_same_id() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        let b = [10.0, 10.0, 50.0, 90.0];
        for f in 1..=4 {
            t.step(f, &[det(b)], None).unwrap();
        }
        for f in 5..=8 {
            t.step(f, &[], None).unwrap();
        }
        let r = t.step(9, &[det(b)], None).unwrap();
        assert_eq!(r.tracks.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        t.step(5, &[], None).unwrap();
        assert!(matches!(t.step(5, &[], None), Err(TrackError::FrameOrder { last: 5, got: 5 })));
        assert!(t.step(4, &[], None).is_err());
    }

    #[test]
    fn invalid_boxes_are_counted() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        let r = t
            .step(1, &[det([10., 0., 0., 10.]), det([f64::NAN, 0., 1., 1.]), det([0., 0., 5., 5.])], None)
            .unwrap();
        assert_eq!(r.rejected_detections, 2);
        assert_eq!(r.tracks.len(), 1);
    }

    #[test]
    fn low_score_detections_are_ignored() {
        let mut t = Tracker::new(TrackerParams::default()).unwrap();
        t.step(1, &[Detection::new([0., 0., 5., 5.], 0.05)], None).unwrap();
        assert!(t.live_tracks().is_empty());
    }

    #[test]
    fn run_sequence_contract() {
        let p = TrackerParams::default();
        assert!(run_sequence(&[], &[], &p).unwrap().is_empty());
        assert!(matches!(
            run_sequence(&[vec![]], &[], &p),
            Err(TrackError::LengthMismatch { detections: 1, depths: 0 })
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(Tracker::new(TrackerParams { max_age: 0, ..Default::default() }).is_err());
        assert!(Tracker::new(TrackerParams { min_hits: 0, ..Default::default() }).is_err());
    }
}
