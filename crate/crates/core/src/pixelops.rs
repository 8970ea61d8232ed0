//! Pixel-level transforms used by feature extraction.

use thiserror::Error;

use crate::imgio::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum PixelError {
    #[error("downsampling {height}x{width} by {factor} leaves no pixels")]
    DegenerateOutput {
        height: usize,
        width: usize,
        factor: usize,
    },
}

/// Block size used before feature extraction. Always at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DownsampleFactor(usize);

impl DownsampleFactor {
    /// Returns `None` for factors below 2.
    pub fn new(m: usize) -> Option<Self> {
        (m >= 2).then_some(Self(m))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// `max(2, round(min(h, w) / 512))`, rounding half away from zero.
pub fn downsample_factor(height: usize, width: usize) -> DownsampleFactor {
    let ratio = height.min(width) as f64 / 512.0;
    DownsampleFactor((ratio.round() as usize).max(2))
}

/// Averages non-overlapping `m x m` blocks; trailing rows and columns that do
/// not fill a whole block are dropped.
pub fn downsample(img: &GrayImage, m: DownsampleFactor) -> Result<GrayImage, PixelError> {
    let m = m.get();
    let (out_w, out_h) = (img.width() / m, img.height() / m);
    if out_w == 0 || out_h == 0 {
        return Err(PixelError::DegenerateOutput {
            height: img.height(),
            width: img.width(),
            factor: m,
        });
    }
    let norm = 1.0 / (m * m) as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    let mut acc = vec![0.0; out_w];
    for by in 0..out_h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for y in by * m..(by + 1) * m {
            let row = &img.row(y)[..out_w * m];
            for (a, block) in acc.iter_mut().zip(row.chunks_exact(m)) {
                *a += block.iter().sum::<f64>();
            }
        }
        // the mean of values in [0,1] can exceed 1 by an ulp after scaling
        out.extend(acc.iter().map(|&a| (a * norm).min(1.0)));
    }
    Ok(GrayImage::from_raw(out_w, out_h, out))
}

/// Maps every pixel `x` to `1 - x`.
pub fn complement(img: &GrayImage) -> GrayImage {
    GrayImage::from_raw(
        img.width(),
        img.height(),
        img.pixels().iter().map(|&x| 1.0 - x).collect(),
    )
}

/// `x^k` by binary exponentiation: `floor(log2 k)` squarings plus
/// `popcount(k) - 1` multiplies. `k = 0` yields 1.
#[inline]
pub fn fast_pow(x: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    // left-to-right over the bits below the leading one
    let mut acc = x;
    let top = 31 - k.leading_zeros();
    for bit in (0..top).rev() {
        acc *= acc;
        if k & (1 << bit) != 0 {
            acc *= x;
        }
    }
    acc
}

/// Pixel-wise `x^q`.
pub fn power_law(img: &GrayImage, q: u32) -> GrayImage {
    GrayImage::from_raw(
        img.width(),
        img.height(),
        img.pixels().iter().map(|&x| fast_pow(x, q)).collect(),
    )
}
