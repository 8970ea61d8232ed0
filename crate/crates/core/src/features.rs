//! The three-dimensional quality feature vector.
//!
//! Two features are Minkowski deviations of the power-law transformed image
//! and of its complement, each passed through a fourth root. The third is the
//! Shannon entropy of the 256-level histogram.

use crate::imgio::{to_level, GrayImage};
use crate::pixelops::{self, fast_pow, PixelError};

/// Minkowski order and power-law exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MdmParams {
    pub rho: u32,
    pub q: u32,
}

impl Default for MdmParams {
    fn default() -> Self {
        Self { rho: 64, q: 8 }
    }
}

impl MdmParams {
    /// Rejects zero orders.
    pub fn new(rho: u32, q: u32) -> Option<Self> {
        (rho >= 1 && q >= 1).then_some(Self { rho, q })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub mdm_d: f64,
    pub mdm_dc: f64,
    pub entropy_bits: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; 3] {
        [self.mdm_d, self.mdm_dc, self.entropy_bits]
    }

    pub fn from_array([mdm_d, mdm_dc, entropy_bits]: [f64; 3]) -> Self {
        Self {
            mdm_d,
            mdm_dc,
            entropy_bits,
        }
    }
}

/// `((1/N) sum |x_i - mean|^rho)^(1/rho)` over the given values.
///
/// Deviations are divided by their maximum before raising, so high orders do
/// not underflow: `d_max * (mean((d_i / d_max)^rho))^(1/rho)`.
pub fn deviation_of(values: &[f64], rho: u32) -> f64 {
    // constant input: the mean can be off by an ulp, so test exactly instead
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let d_max = values
        .iter()
        .map(|&x| (x - mean).abs())
        .fold(0.0, f64::max);
    if d_max == 0.0 {
        return 0.0;
    }
    let inv = 1.0 / d_max;
    let acc: f64 = values
        .iter()
        .map(|&x| fast_pow((x - mean).abs() * inv, rho))
        .sum();
    d_max * (acc / n).powf(1.0 / f64::from(rho))
}

/// Resolution-normalized Minkowski deviation of order `rho` around the mean.
pub fn minkowski_deviation(img: &GrayImage, rho: u32) -> f64 {
    deviation_of(img.pixels(), rho)
}

/// Fourth root of the order-`rho` deviation of the image raised pixel-wise to `q`.
pub fn mdm_feature(img: &GrayImage, p: MdmParams) -> f64 {
    let powered: Vec<f64> = img.pixels().iter().map(|&x| fast_pow(x, p.q)).collect();
    deviation_of(&powered, p.rho).sqrt().sqrt()
}

/// Shannon entropy in bits of the `round(x * 255)` histogram.
pub fn entropy(img: &GrayImage) -> f64 {
    let mut hist = [0u64; 256];
    for &x in img.pixels() {
        hist[usize::from(to_level(x))] += 1;
    }
    let n = img.len() as f64;
    let h = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    // a single occupied bin gives -0.0
    h.max(0.0)
}

/// Full feature vector. With `use_downsample` the image is first block-averaged
/// by [`pixelops::downsample_factor`], and all three features see the reduced image.
pub fn extract(
    img: &GrayImage,
    p: MdmParams,
    use_downsample: bool,
) -> Result<FeatureVector, PixelError> {
    if use_downsample {
        let m = pixelops::downsample_factor(img.height(), img.width());
        let small = pixelops::downsample(img, m)?;
        Ok(extract_unscaled(&small, p))
    } else {
        Ok(extract_unscaled(img, p))
    }
}

fn extract_unscaled(img: &GrayImage, p: MdmParams) -> FeatureVector {
    FeatureVector {
        mdm_d: mdm_feature(img, p),
        mdm_dc: mdm_feature(&pixelops::complement(img), p),
        entropy_bits: entropy(img),
    }
}
