//! Uniform resampling, zero-phase low-pass filtering and axis masking.

use serde::{Deserialize, Serialize};

use super::demo::{Demonstration, Sample};
use crate::error::{Error, Result};
use crate::quat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub target_rate_hz: f64,
    pub cutoff_hz: f64,
    /// `false` pins the channel to its first value.
    pub essential_axes: Vec<bool>,
}

impl PreprocessSpec {
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        if !(self.target_rate_hz > 0.0 && self.target_rate_hz.is_finite()) {
            return Err(Error::invalid("target_rate_hz must be positive"));
        }
        if !(self.cutoff_hz > 0.0) {
            return Err(Error::invalid("cutoff_hz must be positive"));
        }
        if self.cutoff_hz >= self.target_rate_hz / 2.0 {
            return Err(Error::invalid(format!(
                "cutoff {} Hz is not below the Nyquist frequency {} Hz",
                self.cutoff_hz,
                self.target_rate_hz / 2.0
            )));
        }
        if self.essential_axes.len() != n_channels {
            return Err(Error::invalid(format!(
                "essential_axes has {} entries for {} channels",
                self.essential_axes.len(),
                n_channels
            )));
        }
        if !self.essential_axes.iter().any(|&e| e) {
            return Err(Error::invalid("at least one axis must be essential"));
        }
        Ok(())
    }
}

pub fn resample_and_filter(demo: &Demonstration, spec: &PreprocessSpec) -> Result<Demonstration> {
    demo.validate()?;
    spec.validate(demo.n_channels())?;
    if demo.samples.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 samples to resample, got {}",
            demo.samples.len()
        )));
    }

    let mut samples = resample(demo, spec.target_rate_hz);
    let filter = Biquad::butterworth_lowpass(spec.cutoff_hz, spec.target_rate_hz);
    for (c, &essential) in spec.essential_axes.iter().enumerate() {
        if essential {
            let raw: Vec<f64> = samples.iter().map(|s| s.y[c]).collect();
            let smooth = filter.filtfilt(&raw, spec.target_rate_hz / spec.cutoff_hz);
            for (s, v) in samples.iter_mut().zip(smooth) {
                s.y[c] = v;
            }
        } else {
            let first = samples[0].y[c];
            for s in &mut samples {
                s.y[c] = first;
            }
        }
    }

    Demonstration::new(demo.labels.clone(), spec.target_rate_hz, demo.layout, samples)
}

fn resample(demo: &Demonstration, rate: f64) -> Vec<Sample> {
    let src = &demo.samples;
    let duration = demo.duration();
    let count = (duration * rate + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let t = k as f64 / rate;
        while seg + 2 < src.len() && src[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&src[seg], &src[seg + 1]);
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let y = a.y.iter().zip(&b.y).map(|(&ya, &yb)| ya + u * (yb - ya)).collect();
        let q = a
            .q
            .iter()
            .zip(&b.q)
            .map(|(qa, qb)| {
                let q = quat::slerp(qa, qb, u);
                quat::normalized_wxyz(quat::to_wxyz(&q)).expect("slerp of unit quaternions")
            })
            .collect();
        out.push(Sample { t, y, q });
    }
    out
}

/// Second-order IIR section in transposed direct form II.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_hz: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sample_hz;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / std::f64::consts::SQRT_2;
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos) / a0;
        Biquad {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        // start at the steady state for a constant input x[0]
        let u = x[0];
        let g = self.dc_gain();
        let mut z1 = (g - b0) * u;
        let mut z2 = (b2 - a2 * g) * u;
        x.iter()
            .map(|&xi| {
                let y = b0 * xi + z1;
                z1 = b1 * xi - a1 * y + z2;
                z2 = b2 * xi - a2 * y;
                y
            })
            .collect()
    }

    /// Forward-backward filtering with odd-symmetric edge padding.
    ///
    /// `settle_samples` hints how many samples the filter needs to forget its
    /// initial state; the pad length is about three times that.
    pub fn filtfilt(&self, x: &[f64], settle_samples: f64) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = ((3.0 * settle_samples).ceil() as usize).max(6).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));

        let mut fwd = self.run(&ext);
        fwd.reverse();
        let mut back = self.run(&fwd);
        back.reverse();
        back[pad..pad + n].to_vec()
    }
}
