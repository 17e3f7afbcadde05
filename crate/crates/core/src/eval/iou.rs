use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{BBox, Point};

pub const DEFAULT_IOU_RESOLUTION: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouResult {
    pub iou: f64,
    /// One of the polygons covered no grid cell.
    pub degenerate: bool,
}

/// Even-odd scanline fill of one grid row. Cell `i` is inside when its
/// centre `x0 + (i + 0.5) * cell` lies in a crossing interval.
fn fill_row(poly: &[Point], yc: f64, x0: f64, cell: f64, row: &mut [bool], xs: &mut Vec<f64>) {
    row.fill(false);
    xs.clear();
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > yc) != (b.y > yc) {
            xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    xs.sort_by(f64::total_cmp);
    let cols = row.len() as f64;
    for pair in xs.chunks_exact(2) {
        let lo = libm::ceil((pair[0] - x0) / cell - 0.5).clamp(0.0, cols) as usize;
        let hi = libm::ceil((pair[1] - x0) / cell - 0.5).clamp(0.0, cols) as usize;
        if lo < hi {
            row[lo..hi].fill(true);
        }
    }
}

/// Intersection over union of two polygons, rasterized on a shared grid
/// laid over their joint bounding box with `resolution` cells along its
/// longer side and sampled at cell centres.
pub fn polygon_iou(a: &[Point], b: &[Point], resolution: usize) -> IouResult {
    let degenerate = IouResult {
        iou: 0.0,
        degenerate: true,
    };
    if a.len() < 3 || b.len() < 3 || resolution == 0 {
        return degenerate;
    }
    let all: Vec<Point> = a.iter().chain(b).copied().collect();
    let Some(bounds) = BBox::of_points(&all) else {
        return degenerate;
    };
    let side = bounds.w.max(bounds.h);
    if !(side > 0.0) || !side.is_finite() {
        return degenerate;
    }
    let cell = side / resolution as f64;
    let cols = (libm::ceil(bounds.w / cell) as usize).max(1);
    let rows = (libm::ceil(bounds.h / cell) as usize).max(1);

    let (mut ra, mut rb) = (vec![false; cols], vec![false; cols]);
    let mut xs = Vec::new();
    let (mut count_a, mut count_b, mut inter) = (0usize, 0usize, 0usize);
    for r in 0..rows {
        let yc = bounds.y + (r as f64 + 0.5) * cell;
        fill_row(a, yc, bounds.x, cell, &mut ra, &mut xs);
        fill_row(b, yc, bounds.x, cell, &mut rb, &mut xs);
        for (&pa, &pb) in ra.iter().zip(&rb) {
            count_a += pa as usize;
            count_b += pb as usize;
            inter += (pa && pb) as usize;
        }
    }
    if count_a == 0 || count_b == 0 {
        return degenerate;
    }
    let union = count_a + count_b - inter;
    IouResult {
        iou: inter as f64 / union as f64,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, w: f64, h: f64) -> Vec<Point> {
        vec![
            Point::new(x, y),
            Point::new(x + w, y),
            Point::new(x + w, y + h),
            Point::new(x, y + h),
        ]
    }

    #[test]
    fn identical_is_one() {
        let a = rect(3.0, 4.0, 10.0, 2.0);
        assert_eq!(polygon_iou(&a, &a, 64).iou, 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        let r = polygon_iou(&rect(0.0, 0.0, 1.0, 1.0), &rect(5.0, 5.0, 1.0, 1.0), 512);
        assert_eq!(r.iou, 0.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn half_offset_unit_squares() {
        let r = polygon_iou(&rect(0.0, 0.0, 1.0, 1.0), &rect(0.5, 0.0, 1.0, 1.0), 512);
        assert!((r.iou - 1.0 / 3.0).abs() < 0.02, "{}", r.iou);
    }

    #[test]
    fn concave_polygon() {
        // L-shape of area 3 against the unit square in its corner
        let l = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        let r = polygon_iou(&l, &rect(0.0, 0.0, 1.0, 1.0), 1024);
        assert!((r.iou - 1.0 / 3.0).abs() < 0.01, "{}", r.iou);
    }

    #[test]
    fn degenerate_inputs() {
        let flat = rect(0.0, 0.0, 5.0, 0.0);
        let r = polygon_iou(&flat, &rect(0.0, 0.0, 5.0, 5.0), 512);
        assert!(r.degenerate);
        assert_eq!(r.iou, 0.0);
        assert!(polygon_iou(&[Point::new(0.0, 0.0)], &flat, 512).degenerate);
    }
}
