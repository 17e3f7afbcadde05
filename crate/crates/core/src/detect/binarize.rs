use alloc::vec::Vec;

use super::maps::ScoreMaps;

/// Differentiable binarization `1 / (1 + exp(-k (P - T)))`, elementwise.
pub fn soft_binarize(maps: &ScoreMaps, k: f64) -> Vec<f64> {
    maps.prob()
        .iter()
        .zip(maps.thresh())
        .map(|(&p, &t)| 1.0 / (1.0 + libm::exp(-k * (p - t))))
        .collect()
}

/// Candidate text pixels: `P > T` and `P >= floor`.
pub fn hard_mask(maps: &ScoreMaps, floor: f64) -> Vec<bool> {
    maps.prob()
        .iter()
        .zip(maps.thresh())
        .map(|(&p, &t)| p > t && p >= floor)
        .collect()
}
