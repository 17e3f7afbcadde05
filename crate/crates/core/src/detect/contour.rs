use alloc::vec;
use alloc::vec::Vec;

use super::components::{Component, Labels};
use crate::geometry::Point;

/// Clockwise on screen (y grows downward), starting west.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn ring_index(d: (isize, isize)) -> usize {
    RING.iter()
        .position(|&r| r == d)
        .expect("offset between ring neighbours is a unit step")
}

/// Moore-neighbour trace of the outer boundary of one component.
///
/// Vertices are pixel centres in clockwise screen order, beginning at the
/// component's first pixel in raster order. The trace stops when it is about
/// to repeat its first move, which also closes boundaries that pass through
/// the start pixel more than once.
pub fn trace_boundary(labels: &Labels, component: &Component) -> Vec<Point> {
    let label = component.label;
    let (sx, sy) = (component.start.0 as isize, component.start.1 as isize);
    let inside = |x: isize, y: isize| labels.at(x, y) == label;

    // Returns the next boundary pixel and the backtrack direction relative to it.
    let step = |p: (isize, isize), back: usize| -> Option<((isize, isize), usize)> {
        for i in 1..=8 {
            let d = (back + i) % 8;
            let c = (p.0 + RING[d].0, p.1 + RING[d].1);
            if inside(c.0, c.1) {
                let prev = (back + i - 1) % 8;
                let q = (p.0 + RING[prev].0, p.1 + RING[prev].1);
                return Some((c, ring_index((q.0 - c.0, q.1 - c.1))));
            }
        }
        None
    };

    let start = (sx, sy);
    // the start pixel is the first in raster order, so its west neighbour is outside
    let Some(first) = step(start, 0) else {
        return vec![Point::new(sx as f64, sy as f64)];
    };

    let mut out = vec![Point::new(sx as f64, sy as f64)];
    let (mut p, mut back) = first;
    let guard = 4 * component.area + 16;
    for _ in 0..guard {
        let next = step(p, back).expect("a pixel reached by the trace has a neighbour");
        if p == start && next.0 == first.0 {
            break;
        }
        out.push(Point::new(p.0 as f64, p.1 as f64));
        (p, back) = next;
    }
    out
}
