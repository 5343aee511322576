use serde::{Deserialize, Serialize};

use super::Detector;
use crate::direction::DirectionVector;
use crate::error::{Error, Result};
use crate::generator::{GeneratorAdapter, LatentCode};
use crate::scalar::Scalar;

/// Outward search constants: start at `initial`, multiply by `factor` until the
/// detector fails or `cap` is reached, then bisect down to `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub initial: f64,
    pub factor: f64,
    pub cap: f64,
    pub tolerance: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            initial: 0.1,
            factor: 2.0,
            cap: 64.0,
            tolerance: 1e-2,
        }
    }
}

impl CalibrationConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.initial > 0.0
            && self.factor > 1.0
            && self.cap >= self.initial
            && self.tolerance > 0.0
            && [self.initial, self.factor, self.cap, self.tolerance].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid calibration config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `lambda_min + i·(lambda_max − lambda_min)/5` for `i = 0..=5`.
    pub strengths: [f64; 6],
    /// No failing strength was found below the cap on the negative side.
    pub clamped_min: bool,
    pub clamped_max: bool,
    /// Detector calls spent on the negative and positive side (the shared λ = 0 check excluded).
    pub detector_calls: [usize; 2],
}

impl CalibrationResult {
    pub fn clamped(&self) -> bool {
        self.clamped_min || self.clamped_max
    }
}

struct Side {
    bound: f64,
    clamped: bool,
    calls: usize,
}

fn search_side(passes: &mut impl FnMut(f64) -> Result<bool>, sign: f64, cfg: &CalibrationConfig) -> Result<Side> {
    let mut calls = 0;
    let mut pass = 0.0;
    let mut step = cfg.initial;
    let fail = loop {
        let m = step.min(cfg.cap);
        calls += 1;
        if passes(sign * m)? {
            pass = m;
            if m >= cfg.cap {
                return Ok(Side {
                    bound: sign * m,
                    clamped: true,
                    calls,
                });
            }
            step *= cfg.factor;
        } else {
            break m;
        }
    };
    let (mut lo, mut hi) = (pass, fail);
    while hi - lo > cfg.tolerance {
        let mid = 0.5 * (lo + hi);
        calls += 1;
        if passes(sign * mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Side {
        bound: sign * lo,
        clamped: false,
        calls,
    })
}

/// Calibrates against an arbitrary pass/fail oracle over strengths.
pub fn calibrate_with(mut passes: impl FnMut(f64) -> Result<bool>, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    if !passes(0.0)? {
        return Err(Error::InvalidReference("the detector rejects the unedited image".into()));
    }
    let neg = search_side(&mut passes, -1.0, cfg)?;
    let pos = search_side(&mut passes, 1.0, cfg)?;
    let (lo, hi) = (neg.bound, pos.bound);
    if lo >= hi {
        return Err(Error::Numeric(format!("empty applicable strength range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / 5.0;
    let mut strengths = [0.0; 6];
    for (i, s) in strengths.iter_mut().enumerate() {
        *s = lo + i as f64 * step;
    }
    strengths[5] = hi;
    Ok(CalibrationResult {
        lambda_min: lo,
        lambda_max: hi,
        strengths,
        clamped_min: neg.clamped,
        clamped_max: pos.clamped,
        detector_calls: [neg.calls, pos.calls],
    })
}

/// Strength range of `d` on latent `z` within which `detector` keeps passing.
pub fn calibrate_strength<S: Scalar>(
    adapter: &dyn GeneratorAdapter<S>,
    z: &LatentCode<S>,
    d: &DirectionVector<S>,
    detector: &dyn Detector<S>,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    calibrate_with(
        |strength| {
            let image = adapter.render_with_direction(z, d, S::of(strength))?;
            detector.detect(&image)
        },
        cfg,
    )
}
