//! Two-class synthetic bag datasets in the plane.
//!
//! Each sample is a bag of `m` points drawn from its class distribution.
//!
//! * Concentric: class 0 is uniform on the unit disc, class 1 uniform on the
//!   annulus with radii in `[2, 3]`. Isotropic Gaussian noise of the given
//!   scale is added to every point.
//! * XOR: class 0 is an equal mixture of Gaussians at `(0, 0)` and `(1, 1)`,
//!   class 1 at `(0, 1)` and `(1, 0)`, with standard deviation `noise`.
//!
//! Coordinates are rounded to `f32` so a generated container survives the
//! single-precision file format unchanged.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::BagContainer;
use crate::encoders::FeatureBag;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    Concentric,
    Xor,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Concentric => "concentric",
            SyntheticKind::Xor => "xor",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "concentric" => Ok(SyntheticKind::Concentric),
            "xor" => Ok(SyntheticKind::Xor),
            other => Err(Error::InvalidArgument(format!("unknown dataset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub dataset: SyntheticKind,
    pub bags_per_class: usize,
    pub features_per_bag: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dataset: SyntheticKind::Concentric,
            bags_per_class: 100,
            features_per_bag: 50,
            noise: 0.1,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features_per_bag == 0 {
            return Err(Error::InvalidArgument("features per bag must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise must be nonnegative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

fn gauss(rng: &mut Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    }
}

fn sample_ring(rng: &mut Rng, r_min: f64, r_max: f64, noise: f64) -> [f64; 2] {
    // area-uniform radius
    let u: f64 = rng.random();
    let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
    let theta = rng.random::<f64>() * TAU;
    let x = r * theta.cos() + gauss(rng, noise);
    let y = r * theta.sin() + gauss(rng, noise);
    [round32(x), round32(y)]
}

fn sample_corners(rng: &mut Rng, corners: &[[f64; 2]; 2], noise: f64) -> [f64; 2] {
    let c = corners[rng.random_range(0..2)];
    [round32(c[0] + gauss(rng, noise)), round32(c[1] + gauss(rng, noise))]
}

pub fn gen_concentric(cfg: &SyntheticConfig) -> Result<BagContainer> {
    cfg.validate()?;
    Ok(build(cfg, |rng, label| {
        if label == 0 {
            sample_ring(rng, 0.0, 1.0, cfg.noise)
        } else {
            sample_ring(rng, 2.0, 3.0, cfg.noise)
        }
    }))
}

pub fn gen_xor(cfg: &SyntheticConfig) -> Result<BagContainer> {
    cfg.validate()?;
    const CLASS0: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 1.0]];
    const CLASS1: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];
    Ok(build(cfg, |rng, label| {
        sample_corners(rng, if label == 0 { &CLASS0 } else { &CLASS1 }, cfg.noise)
    }))
}

/// Dispatches on `cfg.dataset`. Panics only on an invalid config.
pub fn generate(cfg: &SyntheticConfig) -> BagContainer {
    match cfg.dataset {
        SyntheticKind::Concentric => gen_concentric(cfg),
        SyntheticKind::Xor => gen_xor(cfg),
    }
    .expect("invalid synthetic config")
}

fn build(cfg: &SyntheticConfig, mut point: impl FnMut(&mut Rng, usize) -> [f64; 2]) -> BagContainer {
    let mut rng = rng::stream(cfg.seed, Stream::Data);
    let mut bags = Vec::with_capacity(2 * cfg.bags_per_class);
    for label in 0..2 {
        for b in 0..cfg.bags_per_class {
            let mut data = Vec::with_capacity(2 * cfg.features_per_bag);
            for _ in 0..cfg.features_per_bag {
                data.extend(point(&mut rng, label));
            }
            let m = Matrix::from_vec(cfg.features_per_bag, 2, data).expect("row count");
            let id = format!("{}-c{label}-{b:05}", cfg.dataset);
            bags.push(FeatureBag::new(id, label, m).expect("finite synthetic data"));
        }
    }
    BagContainer {
        classes: 2,
        dim: 2,
        bags,
    }
}
