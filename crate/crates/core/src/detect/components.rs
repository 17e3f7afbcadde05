use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_neighbours(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Self::Four),
            8 => Ok(Self::Eight),
            other => Err(Error::Config(alloc::format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

/// Summary of one connected component. Pixel extents are inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
    /// First pixel in raster order (topmost, then leftmost).
    pub start: (usize, usize),
}

impl Component {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }
}

/// Label image (0 = background, components numbered from 1 in raster order
/// of their first pixel) and per-component summaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub width: usize,
    pub height: usize,
    pub map: Vec<u32>,
    pub components: Vec<Component>,
}

impl Labels {
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> u32 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0
        } else {
            self.map[y as usize * self.width + x as usize]
        }
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labelling of a binary mask.
pub fn label_components(
    mask: &[bool],
    width: usize,
    height: usize,
    connectivity: Connectivity,
) -> Labels {
    debug_assert_eq!(mask.len(), width * height);
    let mut provisional = vec![0u32; mask.len()];
    let mut parent: Vec<u32> = vec![0];
    let backward: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };

    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !mask[i] {
                continue;
            }
            let mut current = 0u32;
            for &(dx, dy) in backward {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= width {
                    continue;
                }
                let l = provisional[ny as usize * width + nx as usize];
                if l == 0 {
                    continue;
                }
                if current == 0 {
                    current = l;
                } else {
                    union(&mut parent, current, l);
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            provisional[i] = current;
        }
    }

    let mut relabel = vec![0u32; parent.len()];
    let mut components: Vec<Component> = Vec::new();
    let mut map = provisional;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if map[i] == 0 {
                continue;
            }
            let root = find(&mut parent, map[i]) as usize;
            if relabel[root] == 0 {
                components.push(Component {
                    label: components.len() as u32 + 1,
                    area: 0,
                    min_x: x,
                    min_y: y,
                    max_x: x,
                    max_y: y,
                    start: (x, y),
                });
                relabel[root] = components.len() as u32;
            }
            let label = relabel[root];
            map[i] = label;
            let c = &mut components[label as usize - 1];
            c.area += 1;
            c.min_x = c.min_x.min(x);
            c.max_x = c.max_x.max(x);
            c.max_y = y;
        }
    }

    Labels {
        width,
        height,
        map,
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> (Vec<bool>, usize, usize) {
        let w = rows[0].len();
        let m = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b == b'#'))
            .collect();
        (m, w, rows.len())
    }

    #[test]
    fn diagonal_depends_on_connectivity() {
        let (m, w, h) = mask(&["#..", ".#.", "..#"]);
        assert_eq!(
            label_components(&m, w, h, Connectivity::Eight)
                .components
                .len(),
            1
        );
        assert_eq!(
            label_components(&m, w, h, Connectivity::Four)
                .components
                .len(),
            3
        );
    }

    #[test]
    fn u_shape_merges() {
        let (m, w, h) = mask(&["#.#", "#.#", "###"]);
        let l = label_components(&m, w, h, Connectivity::Four);
        assert_eq!(l.components.len(), 1);
        let c = &l.components[0];
        assert_eq!((c.area, c.width(), c.height(), c.start), (7, 3, 3, (0, 0)));
    }

    #[test]
    fn labels_in_raster_order() {
        let (m, w, h) = mask(&["..#", "#..", "#.."]);
        let l = label_components(&m, w, h, Connectivity::Eight);
        assert_eq!(l.components[0].start, (2, 0));
        assert_eq!(l.components[1].start, (0, 1));
        assert_eq!(l.map, vec![0, 0, 1, 2, 0, 0, 2, 0, 0]);
    }
}
