//! IoU, average precision at IoU 0.50 and mAP@50.
//!
//! AP uses all-point interpolation: the area under the precision envelope
//! `p̂(r) = max{ p_k : r_k ≥ r }` of the ranked precision/recall points.
//! Detections are ranked by descending confidence; ties keep input order.
//! Each detection is greedily matched to the unmatched ground truth of the
//! same image with the highest IoU ≥ 0.5, ties going to the lowest GT index.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1 < x2 && y1 < y2) || ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::Input(format!(
                "box [{x1}, {y1}, {x2}, {y2}] must satisfy x1 < x2 and y1 < y2"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Image identifier; JSON files may use integers or strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageId {
    Int(i64),
    Name(String),
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageId::Int(i) => write!(f, "{i}"),
            ImageId::Name(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ImageId {
    fn from(v: i64) -> Self {
        ImageId::Int(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub image_id: ImageId,
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Input(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub image_id: ImageId,
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub n_classes: usize,
    pub per_class_ap: Vec<f64>,
    pub map50: f64,
    /// Classes with no ground truth; their AP is reported as 0.
    pub classes_without_gt: Vec<usize>,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// True-positive flags in ranked order.
fn match_ranked(dets: &[&Detection], gts: &[&GroundTruth]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort keeps input order for equal confidences.
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut used = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let det = dets[d];
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in gts.iter().enumerate() {
                if used[gi] || gt.image_id != det.image_id {
                    continue;
                }
                let v = iou(&det.bbox, &gt.bbox);
                if v >= IOU_THRESHOLD && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            match best {
                Some((gi, _)) => {
                    used[gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Ranked precision/recall points `(recall, precision)`.
pub fn pr_curve(dets: &[&Detection], gts: &[&GroundTruth]) -> Vec<(f64, f64)> {
    let n_gt = gts.len() as f64;
    let mut tp = 0usize;
    match_ranked(dets, gts)
        .into_iter()
        .enumerate()
        .map(|(k, hit)| {
            tp += hit as usize;
            (tp as f64 / n_gt, tp as f64 / (k + 1) as f64)
        })
        .collect()
}

fn ap_from_curve(curve: &[(f64, f64)]) -> f64 {
    // Precision envelope from the right.
    let mut env: Vec<f64> = curve.iter().map(|p| p.1).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (&(r, _), &p) in curve.iter().zip(&env) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

/// AP at IoU 0.50 for one class. Returns 0 when there is no ground truth.
pub fn average_precision_50(dets: &[&Detection], gts: &[&GroundTruth]) -> f64 {
    if gts.is_empty() || dets.is_empty() {
        return 0.0;
    }
    ap_from_curve(&pr_curve(dets, gts))
}

/// Per-class AP and their unweighted mean over `n_classes` classes.
pub fn map50(dets: &[Detection], gts: &[GroundTruth], n_classes: usize) -> Result<ApResult> {
    if n_classes == 0 {
        return Err(Error::Input("n_classes must be >= 1".into()));
    }
    let mut by_class_d: HashMap<usize, Vec<&Detection>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        d.validate().map_err(|e| Error::Input(format!("detection {i}: {e}")))?;
        if d.class_id >= n_classes {
            return Err(Error::Input(format!(
                "detection {i}: class_id {} out of range [0, {n_classes})",
                d.class_id
            )));
        }
        by_class_d.entry(d.class_id).or_default().push(d);
    }
    let mut by_class_g: HashMap<usize, Vec<&GroundTruth>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        if g.class_id >= n_classes {
            return Err(Error::Input(format!(
                "ground truth {i}: class_id {} out of range [0, {n_classes})",
                g.class_id
            )));
        }
        by_class_g.entry(g.class_id).or_default().push(g);
    }
    let empty_d = Vec::new();
    let empty_g = Vec::new();
    let mut per_class_ap = Vec::with_capacity(n_classes);
    let mut classes_without_gt = Vec::new();
    for c in 0..n_classes {
        let g = by_class_g.get(&c).unwrap_or(&empty_g);
        if g.is_empty() {
            classes_without_gt.push(c);
        }
        per_class_ap.push(average_precision_50(by_class_d.get(&c).unwrap_or(&empty_d), g));
    }
    let map50 = per_class_ap.iter().sum::<f64>() / n_classes as f64;
    Ok(ApResult {
        n_classes,
        per_class_ap,
        map50,
        classes_without_gt,
    })
}
