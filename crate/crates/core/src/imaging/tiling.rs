use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::scaler::ScalerBackend;
use crate::backend::BackendError;
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

/// Tiled-inference geometry: tiles of `tile` pixels placed every
/// `tile - overlap` pixels, each upscaled by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TileConfig {
    pub scale: usize,
    pub tile: usize,
    pub overlap: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            tile: 64,
            overlap: 16,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Config("tiles.scale must be >= 1".into()));
        }
        if self.tile == 0 || self.overlap >= self.tile {
            return Err(Error::Config(format!(
                "tiles.overlap ({}) must be smaller than tiles.tile ({})",
                self.overlap, self.tile
            )));
        }
        if !self.overlap.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "tiles.overlap must be even, got {}",
                self.overlap
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.tile - self.overlap
    }
}

/// Tile origins along one axis: `0, stride, 2*stride, ...` while the tile
/// still ends inside the axis, then a final tile flush with the far edge.
/// An axis no longer than one tile gets the single origin 0.
pub fn tile_origins(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut origins: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|o| o + tile < len)
        .collect();
    let last = len - tile;
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    origins
}

/// One tile along one axis: the input span it reads and the sub-span it
/// owns in the reassembled output (both in input pixels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisTile {
    pub origin: usize,
    pub len: usize,
    pub keep_start: usize,
    pub keep_end: usize,
}

/// Halo-discard layout of an image: neighbouring tiles split their overlap
/// at its midpoint, so the owned spans abut exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub cols: Vec<AxisTile>,
    pub rows: Vec<AxisTile>,
}

fn axis_plan(len: usize, cfg: &TileConfig) -> Vec<AxisTile> {
    let origins = tile_origins(len, cfg.tile, cfg.overlap);
    let tile_len = cfg.tile.min(len);
    let n = origins.len();
    let cut = |i: usize| (origins[i + 1] + origins[i] + tile_len) / 2;
    (0..n)
        .map(|i| AxisTile {
            origin: origins[i],
            len: tile_len,
            keep_start: if i == 0 { 0 } else { cut(i - 1) },
            keep_end: if i + 1 == n { len } else { cut(i) },
        })
        .collect()
}

impl TilePlan {
    pub fn new(width: usize, height: usize, cfg: &TileConfig) -> Self {
        Self {
            cols: axis_plan(width, cfg),
            rows: axis_plan(height, cfg),
        }
    }

    pub fn tile_count(&self) -> usize {
        self.cols.len() * self.rows.len()
    }
}

/// Upscales `img` tile by tile and stitches the results by halo discard.
///
/// The output measures exactly `scale * W` by `scale * H`. With a pointwise
/// scaler (pixel replication) the result is bit-identical to scaling the
/// whole image at once.
pub fn upscale_tiled<S: ScalerBackend + ?Sized>(
    img: &ImageBuffer,
    cfg: &TileConfig,
    scaler: &mut S,
) -> Result<ImageBuffer> {
    cfg.validate()?;
    if scaler.scale() != cfg.scale {
        return Err(Error::Config(format!(
            "scaler {:?} has factor {} but tiles.scale is {}",
            scaler.name(),
            scaler.scale(),
            cfg.scale
        )));
    }
    let s = cfg.scale;
    let c = img.channels();
    let (out_w, out_h) = (img.width() * s, img.height() * s);
    let mut out = vec![0u8; out_w * out_h * c];
    let plan = TilePlan::new(img.width(), img.height(), cfg);

    let mut index = 0;
    for row in &plan.rows {
        for col in &plan.cols {
            let tile = img.crop(col.origin, row.origin, col.len, row.len)?;
            let scaled = scaler
                .upscale(&tile)
                .map_err(|error| Error::TileBackend { tile: index, error })?;
            let expected = (col.len * s, row.len * s);
            if scaled.dims() != expected {
                return Err(Error::TileProtocol {
                    tile: index,
                    expected,
                    got: scaled.dims(),
                });
            }
            if scaled.channels() != c {
                return Err(Error::TileBackend {
                    tile: index,
                    error: BackendError::protocol(
                        scaler.name(),
                        format!(
                            "returned {} channels for a {c}-channel tile",
                            scaled.channels()
                        ),
                    ),
                });
            }
            let x0 = (col.keep_start - col.origin) * s;
            let x1 = (col.keep_end - col.origin) * s;
            let span = (x1 - x0) * c;
            for ty in (row.keep_start - row.origin) * s..(row.keep_end - row.origin) * s {
                let src = &scaled.row(ty)[x0 * c..x0 * c + span];
                let oy = row.origin * s + ty;
                let ox = col.origin * s + x0;
                let dst = (oy * out_w + ox) * c;
                out[dst..dst + span].copy_from_slice(src);
            }
            index += 1;
        }
    }
    ImageBuffer::new(out_w, out_h, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::NearestScaler;

    #[test]
    fn origins_for_128() {
        assert_eq!(tile_origins(128, 64, 16), vec![0, 48, 64]);
        assert_eq!(tile_origins(64, 64, 16), vec![0]);
        assert_eq!(tile_origins(30, 64, 16), vec![0]);
        // 112 = 48 + 64 lands exactly on a stride step
        assert_eq!(tile_origins(112, 64, 16), vec![0, 48]);
        assert_eq!(tile_origins(65, 64, 16), vec![0, 1]);
    }

    #[test]
    fn plan_owned_spans_partition_axis() {
        let cfg = TileConfig::default();
        for len in 1..400 {
            let plan = axis_plan(len, &cfg);
            assert_eq!(plan[0].keep_start, 0);
            assert_eq!(plan.last().unwrap().keep_end, len);
            for w in plan.windows(2) {
                assert_eq!(w[0].keep_end, w[1].keep_start);
            }
            for t in &plan {
                assert!(t.keep_start >= t.origin && t.keep_end <= t.origin + t.len);
                assert!(t.keep_start < t.keep_end);
            }
        }
    }

    #[test]
    fn interior_edges_discard_half_the_overlap() {
        let plan = axis_plan(200, &TileConfig::default());
        // origins 0, 48, 96, 136
        assert_eq!(plan[0].keep_end, 64 - 8);
        assert_eq!(plan[1].keep_start, 48 + 8);
    }

    #[test]
    fn small_image_single_tile() {
        let img = ImageBuffer::from_fn(30, 20, |x, y| (x * 7 + y) as u8).unwrap();
        let plan = TilePlan::new(30, 20, &TileConfig::default());
        assert_eq!(plan.tile_count(), 1);
        let out = upscale_tiled(&img, &TileConfig::default(), &mut NearestScaler::new(2)).unwrap();
        assert_eq!(out.dims(), (60, 40));
    }

    #[test]
    fn scale_mismatch_rejected() {
        let img = ImageBuffer::filled(4, 4, 0).unwrap();
        let r = upscale_tiled(&img, &TileConfig::default(), &mut NearestScaler::new(3));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    struct Shrinker;
    impl ScalerBackend for Shrinker {
        fn name(&self) -> &str {
            "shrinker"
        }
        fn scale(&self) -> usize {
            2
        }
        fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError> {
            Ok(tile.clone())
        }
    }

    struct Failing(usize);
    impl ScalerBackend for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn scale(&self) -> usize {
            2
        }
        fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError> {
            if self.0 == 0 {
                return Err(BackendError::failed("failing", "boom"));
            }
            self.0 -= 1;
            Ok(NearestScaler::new(2).apply(tile))
        }
    }

    #[test]
    fn backend_errors_carry_tile_index() {
        let img = ImageBuffer::filled(128, 128, 0).unwrap();
        let r = upscale_tiled(&img, &TileConfig::default(), &mut Shrinker);
        assert_eq!(
            r,
            Err(Error::TileProtocol {
                tile: 0,
                expected: (128, 128),
                got: (64, 64)
            })
        );
        let r = upscale_tiled(&img, &TileConfig::default(), &mut Failing(4));
        assert!(matches!(r, Err(Error::TileBackend { tile: 4, .. })));
    }
}
