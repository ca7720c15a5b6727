use nalgebra::DVector;

use super::network::{PwaNetwork, RegionAffine};
use crate::error::{ensure_dim, Result};
use crate::gaussian::Gaussian;
use crate::rng;

pub const DEFAULT_PURITY_SAMPLES: usize = 4096;

/// Affine image of an input Gaussian through the region containing its mean.
#[derive(Clone, Debug)]
pub struct Pushforward {
    pub image: Gaussian,
    /// Fraction of input samples that share the mean's activation pattern.
    pub purity: f64,
    pub region: RegionAffine,
}

/// Pushes `g` through `net` using the per-region affine map at the mean:
/// `N(A·μ + b, A·Σ·Aᵀ)`. The single-Gaussian image is only trustworthy when
/// `purity` is close to one.
pub fn pushforward_gaussian(net: &PwaNetwork, g: &Gaussian, purity_samples: usize, seed: u64) -> Result<Pushforward> {
    ensure_dim(net.input_dim(), g.dim())?;
    let region = net.affine_extract(g.mean())?;
    let image = g.affine_image(&region.a_matrix, &region.b_offset)?;
    let purity = region_purity(net, g, &region.activation_pattern, purity_samples, seed)?;
    Ok(Pushforward { image, purity, region })
}

fn region_purity(net: &PwaNetwork, g: &Gaussian, pattern: &[bool], n: usize, seed: u64) -> Result<f64> {
    if n == 0 || g.rank_hint() == 0 {
        return Ok(1.0);
    }
    let mut rng = rng::from_seed(seed);
    let samples = g.sample_with(&mut rng, n);
    let mut same = 0usize;
    for row in samples.row_iter() {
        let x: DVector<f64> = row.transpose();
        if net.activation_pattern(&x)? == pattern {
            same += 1;
        }
    }
    Ok(same as f64 / n as f64)
}
