use alloc::vec::Vec;

use super::iou::polygon_iou;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(prediction index, ground-truth index, iou)` per accepted match.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Greedy one-to-one matching in descending IoU order; a pair counts when
/// its IoU reaches `iou_thresh`. Equal IoUs resolve by prediction index,
/// then ground-truth index.
pub fn match_detections<P: AsRef<[Point]>, G: AsRef<[Point]>>(
    pred: &[P],
    gt: &[G],
    iou_thresh: f64,
    resolution: usize,
) -> Result<MatchResult> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::Config(alloc::format!(
            "iou threshold must be in (0, 1], got {iou_thresh}"
        )));
    }
    let boxes = |polys: &[&[Point]]| -> Vec<Option<BBox>> {
        polys.iter().map(|p| BBox::of_points(p)).collect()
    };
    let pred: Vec<&[Point]> = pred.iter().map(AsRef::as_ref).collect();
    let gt: Vec<&[Point]> = gt.iter().map(AsRef::as_ref).collect();
    let (pb, gb) = (boxes(&pred), boxes(&gt));

    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let (Some(a), Some(b)) = (pb[i], gb[j]) else {
                continue;
            };
            // closed boxes: touching edges can still share grid cells
            if a.x > b.right() || b.x > a.right() || a.y > b.bottom() || b.y > a.bottom() {
                continue;
            }
            let r = polygon_iou(p, g, resolution);
            if r.iou >= iou_thresh {
                candidates.push((i, j, r.iou));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut pred_used = alloc::vec![false; pred.len()];
    let mut gt_used = alloc::vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (i, j, iou) in candidates {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j, iou));
        }
    }
    let tp = pairs.len();
    Ok(MatchResult {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
        pairs,
    })
}
