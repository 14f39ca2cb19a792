//! Safety-oriented regression losses for matched box pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iogt3d, normalize_angle, Box3D};

pub const DEFAULT_LAMBDA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the SmoothL1 term; the IoGT term gets `1 - lambda`.
    pub lambda: f64,
    pub smooth_l1_beta: f64,
    pub wrap_yaw: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            smooth_l1_beta: DEFAULT_BETA,
            wrap_yaw: true,
        }
    }
}

impl LossConfig {
    pub fn new(lambda: f64, smooth_l1_beta: f64, wrap_yaw: bool) -> Result<Self> {
        let cfg = Self {
            lambda,
            smooth_l1_beta,
            wrap_yaw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.smooth_l1_beta.is_finite() && self.smooth_l1_beta > 0.0) {
            return Err(Error::Config(format!(
                "smooth_l1_beta must be positive, got {}",
                self.smooth_l1_beta
            )));
        }
        Ok(())
    }
}

fn huber(residual: f64, beta: f64) -> f64 {
    let r = residual.abs();
    if r < beta {
        0.5 * r * r / beta
    } else {
        r - 0.5 * beta
    }
}

/// SmoothL1 summed over the `(x, y, z, l, h, w, yaw)` parameters.
pub fn smooth_l1(p: &Box3D, g: &Box3D, beta: f64, wrap_yaw: bool) -> f64 {
    let (pp, gp) = (p.params(), g.params());
    (0..7)
        .map(|i| {
            let mut r = pp[i] - gp[i];
            if i == 6 && wrap_yaw {
                r = normalize_angle(r);
            }
            huber(r, beta)
        })
        .sum()
}

/// `1 - IoGT` in 3D; zero whenever `p` contains `g`.
pub fn iogt_loss(p: &Box3D, g: &Box3D) -> f64 {
    1.0 - iogt3d(p, g)
}

/// The convex blend `lambda * smooth_l1 + (1 - lambda) * iogt_loss`.
pub fn blend(smooth_l1: f64, iogt_loss: f64, lambda: f64) -> f64 {
    lambda * smooth_l1 + (1.0 - lambda) * iogt_loss
}

pub fn safety_loss(p: &Box3D, g: &Box3D, config: &LossConfig) -> f64 {
    blend(
        smooth_l1(p, g, config.smooth_l1_beta, config.wrap_yaw),
        iogt_loss(p, g),
        config.lambda,
    )
}

/// All three terms for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub smooth_l1: f64,
    pub iogt: f64,
    pub safety: f64,
}

pub fn loss_terms(p: &Box3D, g: &Box3D, config: &LossConfig) -> LossTerms {
    let smooth = smooth_l1(p, g, config.smooth_l1_beta, config.wrap_yaw);
    let iogt = iogt_loss(p, g);
    LossTerms {
        smooth_l1: smooth,
        iogt,
        safety: blend(smooth, iogt, config.lambda),
    }
}
