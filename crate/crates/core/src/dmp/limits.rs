use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAFETY_SCALE: f64 = 0.98;

/// Numerical slack allowed when checking samples against bounds.
pub const BOUND_SLACK: f64 = 1e-9;

/// Per-channel kinematic bounds.
///
/// Velocity and acceleration bounds are scaled by `safety_scale`; the position
/// interval is shrunk about its centre by the same factor, so the effective
/// region always lies inside the nominal one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LimitsFile")]
pub struct KinematicLimits {
    pub pos_lo: Vec<f64>,
    pub pos_hi: Vec<f64>,
    pub vel_max: Vec<f64>,
    pub acc_max: Vec<f64>,
    pub safety_scale: f64,
}

#[derive(Deserialize)]
struct LimitsFile {
    pos_lo: Vec<f64>,
    pos_hi: Vec<f64>,
    vel_max: Vec<f64>,
    acc_max: Vec<f64>,
    #[serde(default = "default_scale")]
    safety_scale: f64,
}

fn default_scale() -> f64 {
    DEFAULT_SAFETY_SCALE
}

impl TryFrom<LimitsFile> for KinematicLimits {
    type Error = Error;

    fn try_from(f: LimitsFile) -> Result<Self> {
        KinematicLimits::new(f.pos_lo, f.pos_hi, f.vel_max, f.acc_max, f.safety_scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLimits {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
}

impl KinematicLimits {
    pub fn new(
        pos_lo: Vec<f64>,
        pos_hi: Vec<f64>,
        vel_max: Vec<f64>,
        acc_max: Vec<f64>,
        safety_scale: f64,
    ) -> Result<Self> {
        let n = pos_lo.len();
        if n == 0 || pos_hi.len() != n || vel_max.len() != n || acc_max.len() != n {
            return Err(Error::invalid("limit vectors must be non-empty and equally long"));
        }
        if !(safety_scale > 0.0 && safety_scale <= 1.0) {
            return Err(Error::invalid("safety_scale must lie in (0, 1]"));
        }
        for c in 0..n {
            if !(pos_lo[c] < pos_hi[c]) || !pos_lo[c].is_finite() || !pos_hi[c].is_finite() {
                return Err(Error::invalid(format!("channel {c}: pos_lo must be below pos_hi")));
            }
            if !(vel_max[c] > 0.0) || !(acc_max[c] > 0.0) {
                return Err(Error::invalid(format!("channel {c}: vel_max and acc_max must be positive")));
            }
        }
        Ok(KinematicLimits { pos_lo, pos_hi, vel_max, acc_max, safety_scale })
    }

    /// Bounds wide enough that no motion of ordinary scale touches them.
    pub fn unbounded(n: usize, safety_scale: f64) -> Self {
        KinematicLimits {
            pos_lo: vec![-1e12; n],
            pos_hi: vec![1e12; n],
            vel_max: vec![1e12; n],
            acc_max: vec![1e12; n],
            safety_scale,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.pos_lo.len()
    }

    pub fn effective(&self) -> EffectiveLimits {
        let k = self.safety_scale;
        let (lo, hi) = self
            .pos_lo
            .iter()
            .zip(&self.pos_hi)
            .map(|(&lo, &hi)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * k;
                (mid - half, mid + half)
            })
            .unzip();
        EffectiveLimits {
            lo,
            hi,
            vel: self.vel_max.iter().map(|v| v * k).collect(),
            acc: self.acc_max.iter().map(|a| a * k).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// Exhaustive check of recorded states against the effective bounds.
    pub fn check_states<'a>(
        &self,
        states: impl IntoIterator<Item = (&'a [f64], &'a [f64], &'a [f64])>,
    ) -> Result<()> {
        let eff = self.effective();
        for (i, (y, v, a)) in states.into_iter().enumerate() {
            for c in 0..self.n_channels() {
                if a[c].abs() > eff.acc[c] + BOUND_SLACK {
                    return Err(Error::LimitViolation(format!(
                        "sample {i} channel {c}: |a| = {} > {}",
                        a[c].abs(),
                        eff.acc[c]
                    )));
                }
                if v[c].abs() > eff.vel[c] + BOUND_SLACK {
                    return Err(Error::LimitViolation(format!(
                        "sample {i} channel {c}: |v| = {} > {}",
                        v[c].abs(),
                        eff.vel[c]
                    )));
                }
                if y[c] < self.pos_lo[c] - BOUND_SLACK || y[c] > self.pos_hi[c] + BOUND_SLACK {
                    return Err(Error::LimitViolation(format!(
                        "sample {i} channel {c}: y = {} outside [{}, {}]",
                        y[c], self.pos_lo[c], self.pos_hi[c]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_bounds_shrink_about_centre() {
        let l = KinematicLimits::new(vec![0.2], vec![1.2], vec![2.0], vec![10.0], 0.98).unwrap();
        let e = l.effective();
        assert!((e.lo[0] - 0.21).abs() < 1e-12);
        assert!((e.hi[0] - 1.19).abs() < 1e-12);
        assert!((e.vel[0] - 1.96).abs() < 1e-12);
        assert!((e.acc[0] - 9.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_inconsistent_bounds() {
        assert!(KinematicLimits::new(vec![1.0], vec![0.0], vec![1.0], vec![1.0], 0.98).is_err());
        assert!(KinematicLimits::new(vec![0.0], vec![1.0], vec![0.0], vec![1.0], 0.98).is_err());
        assert!(KinematicLimits::new(vec![0.0], vec![1.0], vec![1.0], vec![1.0], 1.5).is_err());
        assert!(KinematicLimits::new(vec![0.0], vec![1.0, 2.0], vec![1.0], vec![1.0], 0.9).is_err());
    }

    #[test]
    fn file_defaults_safety_scale() {
        let l: KinematicLimits = serde_json::from_str(
            r#"{"pos_lo":[-1],"pos_hi":[1],"vel_max":[1],"acc_max":[1]}"#,
        )
        .unwrap();
        assert_eq!(l.safety_scale, DEFAULT_SAFETY_SCALE);
        let bad = serde_json::from_str::<KinematicLimits>(
            r#"{"pos_lo":[1],"pos_hi":[-1],"vel_max":[1],"acc_max":[1]}"#,
        );
        assert!(bad.is_err());
    }
}
