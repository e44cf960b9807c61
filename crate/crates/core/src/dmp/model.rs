//! Discrete movement primitive: model type, least-squares fitting and the
//! versioned JSON model file.
//!
//! Each channel follows the critically damped transformation system
//!
//! ```text
//! τ ż = α_z (β_z (g − y) − z) + k · f(s),   τ ẏ = z,   τ ṡ = −α_s s
//! f(s) = Σ ψᵢ(s) wᵢ s / Σ ψᵢ(s),   ψᵢ(s) = exp(−hᵢ (s − cᵢ)²)
//! ```
//!
//! where `k = g − y0` when amplitude scaling is enabled for the channel and
//! `k = 1` otherwise. Orientations are encoded as the rotation vector from
//! the current orientation to the goal orientation and form three extra
//! channels per arm, all driven by the same phase.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::demo::Demonstration;
use crate::error::{Error, Result};
use crate::quat::{self, Quat};

pub const MODEL_VERSION: &str = "predress.dmp.v1";

/// Below this goal offset a channel is fitted without amplitude scaling.
pub const DEGENERATE_AMPLITUDE: f64 = 1e-8;

pub const DEFAULT_N_BASIS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub alpha_z: f64,
    pub alpha_s: f64,
}

impl Default for Gains {
    /// `α_s = ln 100` makes the phase decay to 0.01 at `t = τ`.
    fn default() -> Self {
        Gains { alpha_z: 25.0, alpha_s: 100f64.ln() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationModel {
    /// 3 × n_basis, one row per rotation-vector component.
    pub weights: Vec<Vec<f64>>,
    pub q_start: Quat,
    pub q_goal: Quat,
    /// Rotation vector from `q_start` to `q_goal` at fit time.
    pub e0: [f64; 3],
    pub amplitude_scaling: [bool; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpModel {
    pub channel_labels: Vec<String>,
    /// n_channels × n_basis.
    pub weights: Vec<Vec<f64>>,
    pub basis_centers: Vec<f64>,
    pub basis_widths: Vec<f64>,
    pub alpha_z: f64,
    pub beta_z: f64,
    pub alpha_s: f64,
    pub tau: f64,
    pub y0: Vec<f64>,
    pub g: Vec<f64>,
    pub amplitude_scaling: Vec<bool>,
    pub orientation: Vec<OrientationModel>,
}

/// One scalar DMP channel, position or rotation-vector component.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChannelView<'a> {
    pub weights: &'a [f64],
    pub y0: f64,
    pub g: f64,
    pub scaled: bool,
}

impl DmpModel {
    pub fn n_channels(&self) -> usize {
        self.y0.len()
    }

    pub fn n_basis(&self) -> usize {
        self.basis_centers.len()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.orientation.iter().flat_map(|o| o.weights.iter()))
            .flatten()
            .fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Normalized, phase-gated basis activations `ψᵢ(s) s / Σ ψ`.
    pub fn features(&self, s: f64) -> Vec<f64> {
        basis_features(&self.basis_centers, &self.basis_widths, s)
    }

    /// Position channels followed by three rotation-vector channels per arm.
    pub(crate) fn channels(&self) -> Vec<ChannelView<'_>> {
        let mut out: Vec<ChannelView<'_>> = (0..self.n_channels())
            .map(|c| ChannelView {
                weights: &self.weights[c],
                y0: self.y0[c],
                g: self.g[c],
                scaled: self.amplitude_scaling[c],
            })
            .collect();
        for o in &self.orientation {
            for c in 0..3 {
                out.push(ChannelView {
                    weights: &o.weights[c],
                    y0: o.e0[c],
                    g: 0.0,
                    scaled: o.amplitude_scaling[c],
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_channels();
        let b = self.n_basis();
        if n == 0 {
            return Err(Error::invalid("model has no channels"));
        }
        if b < 2 {
            return Err(Error::invalid("model needs at least two basis functions"));
        }
        if self.g.len() != n || self.weights.len() != n || self.amplitude_scaling.len() != n {
            return Err(Error::invalid("model channel arrays disagree in length"));
        }
        if self.channel_labels.len() != n {
            return Err(Error::invalid("channel_labels length mismatch"));
        }
        let rows = self.weights.iter().chain(self.orientation.iter().flat_map(|o| o.weights.iter()));
        for row in rows {
            if row.len() != b || row.iter().any(|w| !w.is_finite()) {
                return Err(Error::invalid("weight row has wrong length or non-finite entries"));
            }
        }
        if self.orientation.iter().any(|o| o.weights.len() != 3) {
            return Err(Error::invalid("orientation model needs three weight rows"));
        }
        if self.basis_widths.len() != b || self.basis_widths.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::invalid("basis widths must be positive"));
        }
        if self.basis_centers.iter().any(|&c| !(c > 0.0 && c <= 1.0))
            || self.basis_centers.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::invalid("basis centers must be strictly decreasing in (0, 1]"));
        }
        for (name, v) in [("alpha_z", self.alpha_z), ("alpha_s", self.alpha_s), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if (self.beta_z - self.alpha_z / 4.0).abs() > 1e-12 * self.alpha_z {
            return Err(Error::invalid("beta_z must equal alpha_z / 4"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("model file: {e}")))?;
        DmpModel::try_from(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn basis_features(centers: &[f64], widths: &[f64], s: f64) -> Vec<f64> {
    let psi: Vec<f64> = centers
        .iter()
        .zip(widths)
        .map(|(&c, &h)| (-h * (s - c) * (s - c)).exp())
        .collect();
    let total: f64 = psi.iter().sum();
    if total <= f64::MIN_POSITIVE {
        return vec![0.0; psi.len()];
    }
    psi.into_iter().map(|p| p * s / total).collect()
}

/// Centers spaced evenly in time along the phase decay, from 1 down to
/// `exp(-α_s)`; widths put neighbouring activations at `e^{-1}` of the peak.
pub fn basis_layout(n_basis: usize, alpha_s: f64) -> (Vec<f64>, Vec<f64>) {
    let centers: Vec<f64> = (0..n_basis)
        .map(|i| (-alpha_s * i as f64 / (n_basis - 1) as f64).exp())
        .collect();
    let mut widths: Vec<f64> = centers.windows(2).map(|w| 1.0 / (w[0] - w[1]).powi(2)).collect();
    widths.push(*widths.last().expect("n_basis >= 2"));
    (centers, widths)
}

/// First derivative: central differences inside, second-order one-sided at the ends.
pub fn first_derivative(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        d[k] = (y[k + 1] - y[k - 1]) / (2.0 * dt);
    }
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt);
    d
}

pub fn second_derivative(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    let dt2 = dt * dt;
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        d[k] = (y[k + 1] - 2.0 * y[k] + y[k - 1]) / dt2;
    }
    d[0] = (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / dt2;
    d[n - 1] = (2.0 * y[n - 1] - 5.0 * y[n - 2] + 4.0 * y[n - 3] - y[n - 4]) / dt2;
    d
}

struct Regression {
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    eps: f64,
}

impl Regression {
    fn new(phases: &[f64], centers: &[f64], widths: &[f64]) -> Self {
        let b = centers.len();
        let mut design = DMatrix::<f64>::zeros(phases.len(), b);
        for (k, &s) in phases.iter().enumerate() {
            for (i, phi) in basis_features(centers, widths, s).into_iter().enumerate() {
                design[(k, i)] = phi;
            }
        }
        let svd = design.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        Regression { svd, eps }
    }

    /// Least-squares weights for one channel; returns the weights and whether
    /// amplitude scaling is enabled.
    fn fit_channel(&self, y: &[f64], dt: f64, tau: f64, gains: Gains) -> (Vec<f64>, bool) {
        let beta_z = gains.alpha_z / 4.0;
        let (y0, g) = (y[0], y[y.len() - 1]);
        let yd = first_derivative(y, dt);
        let ydd = second_derivative(y, dt);
        let amplitude = g - y0;
        let scaled = amplitude.abs() >= DEGENERATE_AMPLITUDE;
        let k = if scaled { amplitude } else { 1.0 };
        let target = DMatrix::from_iterator(
            y.len(),
            1,
            (0..y.len()).map(|i| {
                let f = tau * tau * ydd[i] - gains.alpha_z * (beta_z * (g - y[i]) - tau * yd[i]);
                f / k
            }),
        );
        let w = self.svd.solve(&target, self.eps).expect("svd computed with u and v^t");
        (w.column(0).iter().copied().collect(), scaled)
    }
}

/// Fits one primitive to a uniformly sampled demonstration.
pub fn fit(demo: &Demonstration, n_basis: usize, gains: Gains) -> Result<DmpModel> {
    demo.validate()?;
    if n_basis < 2 {
        return Err(Error::invalid("n_basis must be at least 2"));
    }
    if !(gains.alpha_z > 0.0 && gains.alpha_s > 0.0) {
        return Err(Error::invalid("gains must be positive"));
    }
    let m = demo.samples.len();
    if m < 4 {
        return Err(Error::invalid("need at least 4 samples to fit"));
    }
    let dt = 1.0 / demo.rate_hz;
    for (k, s) in demo.samples.iter().enumerate() {
        if (s.t - k as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
            return Err(Error::invalid(format!(
                "demonstration is not uniformly sampled at {} Hz (sample {k})",
                demo.rate_hz
            )));
        }
    }
    let tau = demo.duration();
    let (centers, widths) = basis_layout(n_basis, gains.alpha_s);
    let phases: Vec<f64> = demo.samples.iter().map(|s| (-gains.alpha_s * s.t / tau).exp()).collect();
    let regression = Regression::new(&phases, &centers, &widths);

    let n = demo.n_channels();
    let mut weights = Vec::with_capacity(n);
    let mut amplitude_scaling = Vec::with_capacity(n);
    for c in 0..n {
        let (w, scaled) = regression.fit_channel(&demo.channel(c), dt, tau, gains);
        weights.push(w);
        amplitude_scaling.push(scaled);
    }

    let mut orientation = Vec::with_capacity(demo.n_orientations());
    for j in 0..demo.n_orientations() {
        let q_start = demo.samples[0].q[j];
        let q_goal = demo.samples[m - 1].q[j];
        let mut e: Vec<Vector3<f64>> = Vec::with_capacity(m);
        for s in &demo.samples {
            let r = quat::orientation_displacement(&s.q[j], &q_goal)?;
            if let Some(prev) = e.last() {
                if (r - prev).norm() > 1.0 {
                    return Err(Error::invalid(format!(
                        "orientation {j} jumps at t = {}; rotation to goal must stay below π",
                        s.t
                    )));
                }
            }
            e.push(r);
        }
        let mut rows = Vec::with_capacity(3);
        let mut scaling = [false; 3];
        for (c, scaled_flag) in scaling.iter_mut().enumerate() {
            let comp: Vec<f64> = e.iter().map(|r| r[c]).collect();
            let (w, scaled) = regression.fit_channel(&comp, dt, tau, gains);
            rows.push(w);
            *scaled_flag = scaled;
        }
        orientation.push(OrientationModel {
            weights: rows,
            q_start,
            q_goal,
            e0: [e[0].x, e[0].y, e[0].z],
            amplitude_scaling: scaling,
        });
    }

    let model = DmpModel {
        channel_labels: demo.labels.clone(),
        weights,
        basis_centers: centers,
        basis_widths: widths,
        alpha_z: gains.alpha_z,
        beta_z: gains.alpha_z / 4.0,
        alpha_s: gains.alpha_s,
        tau,
        y0: demo.samples[0].y.clone(),
        g: demo.samples[m - 1].y.clone(),
        amplitude_scaling,
        orientation,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Serialize, Deserialize)]
struct OrientationFile {
    weights: Vec<Vec<f64>>,
    q_start: [f64; 4],
    q_goal: [f64; 4],
    e0: [f64; 3],
    amplitude_scaling: [bool; 3],
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    n_channels: usize,
    channel_labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    basis_centers: Vec<f64>,
    basis_widths: Vec<f64>,
    alpha_z: f64,
    beta_z: f64,
    alpha_s: f64,
    tau: f64,
    y0: Vec<f64>,
    g: Vec<f64>,
    amplitude_scaling: Vec<bool>,
    #[serde(default)]
    orientation: Vec<OrientationFile>,
}

impl From<&DmpModel> for ModelFile {
    fn from(m: &DmpModel) -> Self {
        ModelFile {
            version: MODEL_VERSION.to_string(),
            n_channels: m.n_channels(),
            channel_labels: m.channel_labels.clone(),
            weights: m.weights.clone(),
            basis_centers: m.basis_centers.clone(),
            basis_widths: m.basis_widths.clone(),
            alpha_z: m.alpha_z,
            beta_z: m.beta_z,
            alpha_s: m.alpha_s,
            tau: m.tau,
            y0: m.y0.clone(),
            g: m.g.clone(),
            amplitude_scaling: m.amplitude_scaling.clone(),
            orientation: m
                .orientation
                .iter()
                .map(|o| OrientationFile {
                    weights: o.weights.clone(),
                    q_start: quat::to_wxyz(&o.q_start),
                    q_goal: quat::to_wxyz(&o.q_goal),
                    e0: o.e0,
                    amplitude_scaling: o.amplitude_scaling,
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for DmpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model version {:?} (expected {MODEL_VERSION})",
                f.version
            )));
        }
        if f.n_channels != f.y0.len() {
            return Err(Error::invalid("n_channels does not match y0"));
        }
        let orientation = f
            .orientation
            .into_iter()
            .map(|o| {
                Ok(OrientationModel {
                    weights: o.weights,
                    q_start: quat::from_wxyz(o.q_start)?,
                    q_goal: quat::from_wxyz(o.q_goal)?,
                    e0: o.e0,
                    amplitude_scaling: o.amplitude_scaling,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = DmpModel {
            channel_labels: f.channel_labels,
            weights: f.weights,
            basis_centers: f.basis_centers,
            basis_widths: f.basis_widths,
            alpha_z: f.alpha_z,
            beta_z: f.beta_z,
            alpha_s: f.alpha_s,
            tau: f.tau,
            y0: f.y0,
            g: f.g,
            amplitude_scaling: f.amplitude_scaling,
            orientation,
        };
        model.validate()?;
        Ok(model)
    }
}
