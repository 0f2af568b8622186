//! Grounding rewards: a binary format reward on the response envelope, a
//! Hungarian-matched IoU reward, and their sum.
//!
//! Strict response grammar:
//!
//! ```text
//! response := ws* "<think>" think "</think>" ws* "<answer>" answer "</answer>" ws*
//! think    := any text without "<think>", "</think>", "<answer>", "</answer>"
//! answer   := JSON array; each element an object with key "bbox_2d" holding
//!             exactly four JSON numbers [x1, y1, x2, y2], x2 > x1, y2 > y1
//! ```
//!
//! `ws` is Unicode whitespace. Objects may carry other keys. An empty array is
//! well formed. Permissive mode also accepts a missing think block, a single
//! object instead of an array, and trailing text after `</answer>`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geometry::{iou, BBox};
use crate::lap::{self, CostMatrix};

pub const BOX_KEY: &str = "bbox_2d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingResponse {
    pub raw: String,
}

impl GroundingResponse {
    pub fn new(raw: impl Into<String>) -> Self {
        Self { raw: raw.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub iou: f64,
    pub total: f64,
    /// Number of matched prediction/ground-truth pairs, zero-overlap pairs included.
    pub matches: usize,
}

const TAGS: [&str; 4] = ["<think>", "</think>", "<answer>", "</answer>"];

fn contains_tag(s: &str) -> bool {
    TAGS.iter().any(|t| s.contains(t))
}

/// Answer body, when the envelope is well formed.
fn answer_body(raw: &str, mode: ParseMode) -> Option<&str> {
    let mut rest = raw.trim_start();
    if let Some(after) = rest.strip_prefix("<think>") {
        let end = after.find("</think>")?;
        if contains_tag(&after[..end]) {
            return None;
        }
        rest = after[end + "</think>".len()..].trim_start();
    } else if mode == ParseMode::Strict {
        return None;
    }
    let after = rest.strip_prefix("<answer>")?;
    let end = after.find("</answer>")?;
    let body = &after[..end];
    if contains_tag(body) {
        return None;
    }
    let tail = &after[end + "</answer>".len()..];
    match mode {
        ParseMode::Strict if !tail.trim().is_empty() => None,
        ParseMode::Permissive if contains_tag(tail) => None,
        _ => Some(body),
    }
}

fn box_from_object(obj: &Value) -> Option<BBox> {
    let coords = obj.as_object()?.get(BOX_KEY)?.as_array()?;
    if coords.len() != 4 {
        return None;
    }
    let mut c = [0.0; 4];
    for (slot, v) in c.iter_mut().zip(coords) {
        *slot = v.as_f64()?;
    }
    BBox::from_array(c).ok()
}

/// Boxes in answer order, or `None` when any part of the format check fails.
pub fn parse_boxes(r: &GroundingResponse, mode: ParseMode) -> Option<Vec<BBox>> {
    let body = answer_body(&r.raw, mode)?;
    let value: Value = serde_json::from_str(body.trim()).ok()?;
    match value {
        Value::Array(items) => items.iter().map(box_from_object).collect(),
        obj @ Value::Object(_) if mode == ParseMode::Permissive => box_from_object(&obj).map(|b| vec![b]),
        _ => None,
    }
}

pub fn format_reward(r: &GroundingResponse, mode: ParseMode) -> f64 {
    if parse_boxes(r, mode).is_some() {
        1.0
    } else {
        0.0
    }
}

/// Boxes of a well-formed answer; empty when the format check fails.
pub fn parse_answer_boxes(r: &GroundingResponse, mode: ParseMode) -> Vec<BBox> {
    parse_boxes(r, mode).unwrap_or_default()
}

/// Sum of IoU over the one-to-one matching that maximizes total IoU, with the
/// number of matched pairs.
pub fn matched_iou(preds: &[BBox], gts: &[BBox]) -> (f64, usize) {
    if preds.is_empty() || gts.is_empty() {
        return (0.0, 0);
    }
    let overlaps = CostMatrix::from_fn(preds.len(), gts.len(), |i, j| Some(iou(&preds[i], &gts[j])));
    let costs = CostMatrix::from_fn(preds.len(), gts.len(), |i, j| overlaps.get(i, j).map(|v| -v));
    let a = lap::solve(&costs);
    let sum = a.matches.iter().map(|&(i, j)| overlaps.get(i, j).unwrap()).sum();
    (sum, a.matches.len())
}

pub fn iou_reward(preds: &[BBox], gts: &[BBox]) -> f64 {
    matched_iou(preds, gts).0
}

pub fn total_reward(r: &GroundingResponse, gts: &[BBox], mode: ParseMode) -> RewardBreakdown {
    match parse_boxes(r, mode) {
        Some(preds) => {
            let (iou, matches) = matched_iou(&preds, gts);
            RewardBreakdown {
                format: 1.0,
                iou,
                total: 1.0 + iou,
                matches,
            }
        }
        None => RewardBreakdown {
            format: 0.0,
            iou: 0.0,
            total: 0.0,
            matches: 0,
        },
    }
}
