use alloc::vec::Vec;

use crate::geometry::{area, perimeter, signed_area, Point};

/// Offset distance `area * ratio / perimeter` for dilating shrunk kernels;
/// zero for polygons without perimeter.
pub fn unclip_distance(poly: &[Point], ratio: f64) -> f64 {
    let p = perimeter(poly);
    if p <= 0.0 {
        0.0
    } else {
        area(poly) * ratio / p
    }
}

fn unit(dx: f64, dy: f64) -> (f64, f64) {
    let n = libm::hypot(dx, dy);
    if n == 0.0 {
        (0.0, 0.0)
    } else {
        (dx / n, dy / n)
    }
}

/// Moves every edge of `poly` outward by `distance` (mitred corners).
///
/// Polygons with fewer than three vertices or zero area are returned
/// unchanged.
pub fn unclip(poly: &[Point], distance: f64) -> Vec<Point> {
    let n = poly.len();
    let signed = signed_area(poly);
    if n < 3 || signed == 0.0 || distance == 0.0 {
        return poly.to_vec();
    }
    // positive signed area is clockwise on screen; outward is then left of travel in y-up terms
    let orient = if signed > 0.0 { 1.0 } else { -1.0 };
    let outward = |a: Point, b: Point| {
        let (dx, dy) = unit(b.x - a.x, b.y - a.y);
        ((dy * orient, -dx * orient), (dx, dy))
    };
    (0..n)
        .map(|i| {
            let prev = poly[(i + n - 1) % n];
            let cur = poly[i];
            let next = poly[(i + 1) % n];
            let (n1, d1) = outward(prev, cur);
            let (n2, _) = outward(cur, next);
            let denom = 1.0 + n1.0 * n2.0 + n1.1 * n2.1;
            let (ox, oy) = if denom < 1e-6 {
                // reversal: push past the tip along the incoming edge
                (n1.0 + d1.0, n1.1 + d1.1)
            } else {
                ((n1.0 + n2.0) / denom, (n1.1 + n2.1) / denom)
            };
            Point::new(cur.x + distance * ox, cur.y + distance * oy)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn square_grows_evenly() {
        let sq = vec![
            Point::new(10.0, 10.0),
            Point::new(19.0, 10.0),
            Point::new(19.0, 19.0),
            Point::new(10.0, 19.0),
        ];
        let d = unclip_distance(&sq, 1.5);
        assert!((d - 81.0 * 1.5 / 36.0).abs() < 1e-12);
        let out = unclip(&sq, d);
        let expect = [
            (10.0 - d, 10.0 - d),
            (19.0 + d, 10.0 - d),
            (19.0 + d, 19.0 + d),
            (10.0 - d, 19.0 + d),
        ];
        for (p, e) in out.iter().zip(expect) {
            assert!(
                (p.x - e.0).abs() < 1e-9 && (p.y - e.1).abs() < 1e-9,
                "{p:?} vs {e:?}"
            );
        }
        // orientation does not matter
        let rev: Vec<Point> = sq.iter().rev().copied().collect();
        let out_rev = unclip(&rev, d);
        assert!((area(&out_rev) - area(&out)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_unchanged() {
        let line = vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)];
        assert_eq!(unclip(&line, 2.0), line);
        assert_eq!(unclip_distance(&[Point::new(1.0, 1.0)], 1.5), 0.0);
    }
}
