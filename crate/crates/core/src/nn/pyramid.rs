use super::topology::Topology;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid2};

/// Side of the square local-normalization window (clipped at image edges).
pub const NORM_WINDOW: usize = 15;
/// Variance floor added before the square root.
pub const NORM_EPSILON: f64 = 1e-4;

/// Halves both dimensions by averaging 2×2 blocks; an odd last row or column
/// is dropped.
pub fn downsample(level: &Grid2<f64>) -> Grid2<f64> {
    Grid2::from_fn(level.width() / 2, level.height() / 2, |r, c| {
        let (r0, c0) = (2 * r, 2 * c);
        (level.get(r0, c0) + level.get(r0, c0 + 1) + level.get(r0 + 1, c0) + level.get(r0 + 1, c0 + 1))
            / 4.0
    })
}

/// Zero-mean, unit-variance normalization over a `window`×`window`
/// neighbourhood.
pub fn local_normalize(level: &Grid2<f64>, window: usize, epsilon: f64) -> Grid2<f32> {
    let (h, w) = level.dims();
    // summed-area tables with a zero first row/column
    let mut s1 = vec![0.0f64; (h + 1) * (w + 1)];
    let mut s2 = vec![0.0f64; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row1 = 0.0;
        let mut row2 = 0.0;
        for c in 0..w {
            let v = *level.get(r, c);
            row1 += v;
            row2 += v * v;
            s1[(r + 1) * (w + 1) + c + 1] = s1[r * (w + 1) + c + 1] + row1;
            s2[(r + 1) * (w + 1) + c + 1] = s2[r * (w + 1) + c + 1] + row2;
        }
    }
    let half = window / 2;
    let rect = |t: &[f64], r0: usize, c0: usize, r1: usize, c1: usize| {
        t[r1 * (w + 1) + c1] - t[r0 * (w + 1) + c1] - t[r1 * (w + 1) + c0] + t[r0 * (w + 1) + c0]
    };
    Grid2::from_fn(w, h, |r, c| {
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(h));
        let (c0, c1) = (c.saturating_sub(half), (c + half + 1).min(w));
        let n = ((r1 - r0) * (c1 - c0)) as f64;
        let mean = rect(&s1, r0, c0, r1, c1) / n;
        let var = (rect(&s2, r0, c0, r1, c1) / n - mean * mean).max(0.0);
        ((level.get(r, c) - mean) / (var + epsilon).sqrt()) as f32
    })
}

/// Normalized image pyramid with `topology.n_l` levels, level `l` of size
/// `⌊dims / 2^l⌋`.
pub fn build_pyramid(image: &GrayImage, topology: &Topology) -> Result<Vec<Grid2<f32>>> {
    let min = topology.min_input_size();
    if image.width() < min || image.height() < min {
        return Err(Error::InvalidInput(format!(
            "image {}x{} is smaller than the minimum {min}x{min} for {}",
            image.width(),
            image.height(),
            topology
        )));
    }
    let mut raw = image.map(|&v| v as f64);
    let mut levels = Vec::with_capacity(topology.n_l);
    for l in 0..topology.n_l {
        if l > 0 {
            raw = downsample(&raw);
        }
        levels.push(local_normalize(&raw, NORM_WINDOW, NORM_EPSILON));
    }
    Ok(levels)
}
