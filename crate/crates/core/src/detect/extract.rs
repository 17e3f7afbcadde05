use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::binarize::hard_mask;
use super::components::{label_components, Connectivity};
use super::contour::trace_boundary;
use super::maps::ScoreMaps;
use super::unclip::{unclip, unclip_distance};
use crate::error::{Error, Result};
use crate::geometry::{simplify_collinear, BBox, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DetectConfig {
    /// Probability floor applied on top of the per-pixel threshold map.
    pub global_thresh: f64,
    /// Accepted bounding-box heights, inclusive, in map pixels.
    pub min_height: usize,
    pub max_height: usize,
    /// Steepness of the soft binarization (analysis only).
    pub binarize_k: f64,
    /// 4 or 8.
    pub connectivity: u8,
    /// Dilation ratio for backends that report shrunk maps.
    pub unclip_ratio: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            global_thresh: 0.25,
            min_height: 5,
            max_height: 1024,
            binarize_k: 50.0,
            connectivity: 8,
            unclip_ratio: 1.5,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.global_thresh) {
            return Err(Error::Config(format!(
                "detect.global_thresh must be in [0, 1], got {}",
                self.global_thresh
            )));
        }
        if self.min_height == 0 || self.min_height > self.max_height {
            return Err(Error::Config(format!(
                "detect heights need 0 < min_height <= max_height, got {}..{}",
                self.min_height, self.max_height
            )));
        }
        if !(self.binarize_k > 0.0) {
            return Err(Error::Config("detect.binarize_k must be > 0".into()));
        }
        if !(self.unclip_ratio >= 0.0) {
            return Err(Error::Config("detect.unclip_ratio must be >= 0".into()));
        }
        Connectivity::from_neighbours(self.connectivity)?;
        Ok(())
    }
}

/// One detected text region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TextInstance {
    /// Closed outline, vertices at pixel centres, clockwise on screen.
    pub polygon: Vec<Point>,
    /// Pixel cover of the polygon.
    pub bbox: BBox,
    /// Mean probability over the component's pixels.
    pub score: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub text: Option<String>,
}

impl TextInstance {
    /// Maps the instance into a frame scaled by `factor` (e.g. `0.5` to undo a 2x upscale).
    pub fn scaled(&self, factor: f64) -> TextInstance {
        TextInstance {
            polygon: self
                .polygon
                .iter()
                .map(|p| Point::new(p.x * factor, p.y * factor))
                .collect(),
            bbox: self.bbox.scaled(factor),
            score: self.score,
            text: self.text.clone(),
        }
    }
}

fn pixel_cover(poly: &[Point]) -> BBox {
    let b = BBox::of_points(poly).expect("traced polygons are non-empty");
    let (x0, y0) = (libm::floor(b.x), libm::floor(b.y));
    let (x1, y1) = (libm::floor(b.right()), libm::floor(b.bottom()));
    BBox::new(x0, y0, x1 - x0 + 1.0, y1 - y0 + 1.0)
}

/// Candidate mask, connected components, height filter, boundary trace.
///
/// Instances come back sorted by `(bbox.y, bbox.x)`. An empty mask yields an
/// empty list.
pub fn extract_instances(maps: &ScoreMaps, cfg: &DetectConfig) -> Result<Vec<TextInstance>> {
    cfg.validate()?;
    let (w, h) = maps.dims();
    let mask = hard_mask(maps, cfg.global_thresh);
    let labels = label_components(
        &mask,
        w,
        h,
        Connectivity::from_neighbours(cfg.connectivity)?,
    );

    let mut prob_sum = vec![0.0f64; labels.components.len()];
    for (l, p) in labels.map.iter().zip(maps.prob()) {
        if *l != 0 {
            prob_sum[*l as usize - 1] += p;
        }
    }

    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    let mut out: Vec<TextInstance> = labels
        .components
        .iter()
        .filter(|c| (cfg.min_height..=cfg.max_height).contains(&c.height()))
        .map(|c| {
            let mut polygon = simplify_collinear(&trace_boundary(&labels, c));
            if maps.shrunk() {
                let d = unclip_distance(&polygon, cfg.unclip_ratio);
                polygon = unclip(&polygon, d)
                    .into_iter()
                    .map(|p| Point::new(p.x.clamp(0.0, max_x), p.y.clamp(0.0, max_y)))
                    .collect();
            }
            let score = (prob_sum[c.label as usize - 1] / c.area as f64).clamp(0.0, 1.0);
            TextInstance {
                bbox: pixel_cover(&polygon),
                polygon,
                score,
                text: None,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.bbox
            .y
            .total_cmp(&b.bbox.y)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_maps(w: usize, h: usize, bx: usize, by: usize, bw: usize, bh: usize) -> ScoreMaps {
        let mut prob = vec![0.0; w * h];
        for y in by..by + bh {
            for x in bx..bx + bw {
                prob[y * w + x] = 0.9;
            }
        }
        ScoreMaps::with_uniform_thresh(w, h, prob, 0.2).unwrap()
    }

    #[test]
    fn zero_map_is_empty() {
        let maps = ScoreMaps::with_uniform_thresh(20, 20, vec![0.0; 400], 0.2).unwrap();
        assert!(extract_instances(&maps, &DetectConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_block() {
        let maps = block_maps(40, 30, 7, 11, 10, 10);
        let inst = extract_instances(&maps, &DetectConfig::default()).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].bbox, BBox::new(7.0, 11.0, 10.0, 10.0));
        assert!((inst[0].score - 0.9).abs() < 1e-12);
        assert_eq!(inst[0].polygon.len(), 4);
    }

    #[test]
    fn short_block_filtered() {
        let maps = block_maps(40, 30, 7, 11, 10, 3);
        assert!(extract_instances(&maps, &DetectConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn shrunk_maps_are_unclipped_within_bounds() {
        let maps = block_maps(40, 30, 2, 2, 10, 10);
        let maps =
            ScoreMaps::new(40, 30, maps.prob().to_vec(), maps.thresh().to_vec(), true).unwrap();
        let inst = extract_instances(&maps, &DetectConfig::default()).unwrap();
        // side 9 square: delta = 81 * 1.5 / 36 = 3.375, clipped at 0 on the near sides
        assert_eq!(inst[0].bbox, BBox::new(0.0, 0.0, 15.0, 15.0));
        assert!(inst[0].polygon.iter().all(|p| p.x >= 0.0 && p.y >= 0.0));
    }

    #[test]
    fn sorted_by_row_then_column() {
        let mut prob = vec![0.0; 60 * 40];
        for &(bx, by) in &[(40usize, 20usize), (30, 2), (5, 20), (2, 2)] {
            for y in by..by + 6 {
                for x in bx..bx + 8 {
                    prob[y * 60 + x] = 0.8;
                }
            }
        }
        let maps = ScoreMaps::with_uniform_thresh(60, 40, prob, 0.2).unwrap();
        let inst = extract_instances(&maps, &DetectConfig::default()).unwrap();
        let origins: Vec<(f64, f64)> = inst.iter().map(|i| (i.bbox.x, i.bbox.y)).collect();
        assert_eq!(
            origins,
            vec![(2.0, 2.0), (30.0, 2.0), (5.0, 20.0), (40.0, 20.0)]
        );
    }

    #[test]
    fn rejects_bad_config() {
        let maps = block_maps(10, 10, 0, 0, 5, 5);
        for cfg in [
            DetectConfig {
                global_thresh: 1.5,
                ..Default::default()
            },
            DetectConfig {
                min_height: 0,
                ..Default::default()
            },
            DetectConfig {
                min_height: 9,
                max_height: 8,
                ..Default::default()
            },
            DetectConfig {
                connectivity: 6,
                ..Default::default()
            },
            DetectConfig {
                binarize_k: 0.0,
                ..Default::default()
            },
        ] {
            assert!(extract_instances(&maps, &cfg).is_err());
        }
    }
}
