use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

const BINS: usize = 256;

/// Contrast-limited adaptive histogram equalization settings.
///
/// `clip_factor` is relative to a flat histogram: a tile of `n` pixels has its
/// bins capped at `max(1, round(clip_factor * n / 256))`. An infinite factor
/// disables clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ClaheConfig {
    #[cfg_attr(feature = "serde", serde(with = "clip_serde"))]
    pub clip_factor: f64,
    pub grid_cols: usize,
    pub grid_rows: usize,
}

/// Infinite factors travel as the string `"inf"`, which JSON cannot
/// express as a number.
#[cfg(feature = "serde")]
mod clip_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> core::result::Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(alloc::string::String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t)
                if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") =>
            {
                Ok(f64::INFINITY)
            }
            Repr::Text(t) => Err(de::Error::invalid_value(
                de::Unexpected::Str(&t),
                &"a number or \"inf\"",
            )),
        }
    }
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            clip_factor: 8.0,
            grid_cols: 8,
            grid_rows: 8,
        }
    }
}

impl ClaheConfig {
    pub fn validate(&self) -> Result<()> {
        // NaN fails this comparison too
        if !(self.clip_factor > 0.0) {
            return Err(Error::Config(format!(
                "clahe.clip_factor must be > 0, got {}",
                self.clip_factor
            )));
        }
        if self.grid_cols == 0 || self.grid_rows == 0 {
            return Err(Error::Config("clahe grid dimensions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Half-open pixel range `[start, end)` covered by one grid cell along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpan {
    pub start: usize,
    pub end: usize,
}

impl TileSpan {
    fn len(&self) -> usize {
        self.end - self.start
    }

    fn center(&self) -> f64 {
        (self.start + self.end) as f64 / 2.0
    }
}

fn spans(len: usize, cells: usize) -> Vec<TileSpan> {
    (0..cells)
        .map(|i| TileSpan {
            start: i * len / cells,
            end: (i + 1) * len / cells,
        })
        .collect()
}

fn check(img: &ImageBuffer, cfg: &ClaheConfig) -> Result<()> {
    cfg.validate()?;
    if !img.is_gray() {
        return Err(Error::NotGray(img.channels()));
    }
    if cfg.grid_cols > img.width() || cfg.grid_rows > img.height() {
        return Err(Error::Config(format!(
            "clahe grid {}x{} exceeds {}x{} image",
            cfg.grid_cols,
            cfg.grid_rows,
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Clips `hist` at the ceiling and spreads the clipped mass over all bins in
/// one pass; the residual that does not divide evenly goes to every
/// `256 / residual`-th bin.
fn clip_histogram(hist: &mut [u32; BINS], pixels: usize, clip_factor: f64) {
    let ceiling = clip_factor * pixels as f64 / BINS as f64;
    if ceiling >= pixels as f64 {
        return;
    }
    let ceiling = (libm::round(ceiling) as u32).max(1);
    let mut excess = 0u32;
    for h in hist.iter_mut() {
        if *h > ceiling {
            excess += *h - ceiling;
            *h = ceiling;
        }
    }
    let share = excess / BINS as u32;
    let residual = (excess % BINS as u32) as usize;
    for h in hist.iter_mut() {
        *h += share;
    }
    if let Some(step) = BINS.checked_div(residual) {
        for h in hist.iter_mut().step_by(step.max(1)).take(residual) {
            *h += 1;
        }
    }
}

fn equalizing_lut(hist: &[u32; BINS], pixels: usize) -> [u8; BINS] {
    let mut lut = [0u8; BINS];
    let total = pixels as u64;
    let mut cdf = 0u64;
    for (v, &h) in hist.iter().enumerate() {
        cdf += h as u64;
        // round(255 * cdf / total), half up
        lut[v] = ((510 * cdf + total) / (2 * total)).min(255) as u8;
    }
    lut
}

/// Grid geometry and per-cell lookup tables (row-major grid order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaheMappings {
    pub cols: Vec<TileSpan>,
    pub rows: Vec<TileSpan>,
    pub luts: Vec<[u8; BINS]>,
}

pub fn tile_mappings(img: &ImageBuffer, cfg: &ClaheConfig) -> Result<ClaheMappings> {
    check(img, cfg)?;
    let cols = spans(img.width(), cfg.grid_cols);
    let rows = spans(img.height(), cfg.grid_rows);
    let mut luts = Vec::with_capacity(cols.len() * rows.len());
    for r in &rows {
        for c in &cols {
            let mut hist = [0u32; BINS];
            for y in r.start..r.end {
                for &v in &img.row(y)[c.start..c.end] {
                    hist[v as usize] += 1;
                }
            }
            let pixels = r.len() * c.len();
            clip_histogram(&mut hist, pixels, cfg.clip_factor);
            luts.push(equalizing_lut(&hist, pixels));
        }
    }
    Ok(ClaheMappings { cols, rows, luts })
}

/// For every pixel index along an axis: the two neighbouring cell indices
/// and the weight of the second, clamped to the edge cells.
fn axis_weights(len: usize, spans: &[TileSpan]) -> Vec<(usize, usize, f64)> {
    let last = spans.len() - 1;
    let mut out = Vec::with_capacity(len);
    let mut i = 0;
    for p in 0..len {
        let pos = p as f64 + 0.5;
        if pos <= spans[0].center() {
            out.push((0, 0, 0.0));
            continue;
        }
        if pos >= spans[last].center() {
            out.push((last, last, 0.0));
            continue;
        }
        while spans[i + 1].center() < pos {
            i += 1;
        }
        let (a, b) = (spans[i].center(), spans[i + 1].center());
        out.push((i, i + 1, (pos - a) / (b - a)));
    }
    out
}

/// CLAHE over a grayscale image.
///
/// Each grid cell gets a clipped 256-bin histogram and the mapping
/// `round(255 * cdf(v) / cell_pixels)`. Output pixels blend the mappings of
/// the four nearest cell centres bilinearly; pixels outside the outermost
/// centres use the edge cells.
pub fn clahe(img: &ImageBuffer, cfg: &ClaheConfig) -> Result<ImageBuffer> {
    let ClaheMappings { cols, rows, luts } = tile_mappings(img, cfg)?;
    let ncols = cols.len();
    let wx = axis_weights(img.width(), &cols);
    let wy = axis_weights(img.height(), &rows);
    let mut data = Vec::with_capacity(img.width() * img.height());
    for (y, &(r0, r1, fy)) in wy.iter().enumerate() {
        for (x, &(c0, c1, fx)) in wx.iter().enumerate() {
            let v = img.get(x, y) as usize;
            let m = |r: usize, c: usize| luts[r * ncols + c][v] as f64;
            let top = m(r0, c0) * (1.0 - fx) + m(r0, c1) * fx;
            let bottom = m(r1, c0) * (1.0 - fx) + m(r1, c1) * fx;
            let out = libm::round(top * (1.0 - fy) + bottom * fy);
            data.push(out.clamp(0.0, 255.0) as u8);
        }
    }
    ImageBuffer::gray(img.width(), img.height(), data)
}
