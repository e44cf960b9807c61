//! Numerical integration of a fitted primitive, optionally under kinematic
//! limits.
//!
//! With limits, every step picks the admissible acceleration closest to the
//! one the primitive asks for: within the acceleration bound, keeping the
//! next velocity within its bound, and keeping the next state able to brake
//! before the position bound. Whenever the requested acceleration had to be
//! modified the phase is held, so the motion is slowed down rather than cut
//! short.

use std::io::Write;

use nalgebra::Vector3;

use super::limits::{EffectiveLimits, KinematicLimits};
use super::model::{basis_features, ChannelView, DmpModel};
use crate::error::{Error, Result};
use crate::quat::{self, Quat};

pub const DEFAULT_DT: f64 = 0.002;

/// Phase value below which the forcing term counts as extinguished.
pub const PHASE_END: f64 = 0.01;

/// Velocity norm (channel units per second) under which a rollout may stop.
pub const STOP_VELOCITY: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// Acceleration applied over the step that produced this state.
    pub a: Vec<f64>,
    pub q: Vec<Quat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<TrajState>,
    pub phase: Vec<f64>,
    /// Steps in which at least one limit altered the requested motion.
    pub clamped_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.states.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn last(&self) -> &TrajState {
        self.states.last().expect("trajectory has at least the start state")
    }

    pub fn check_limits(&self, limits: &KinematicLimits) -> Result<()> {
        limits.check_states(self.states.iter().map(|s| (&s.y[..], &s.v[..], &s.a[..])))
    }

    pub fn write_csv(&self, labels: &[String], mut out: impl Write) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        for prefix in ["y", "v", "a"] {
            header.extend(labels.iter().map(|l| format!("{prefix}_{l}")));
        }
        let n_q = self.states.first().map_or(0, |s| s.q.len());
        for j in 0..n_q {
            header.extend(["w", "x", "y", "z"].iter().map(|c| format!("q{j}_{c}")));
        }
        header.push("phase".into());
        writeln!(out, "{}", header.join(","))?;
        for (i, (s, phase)) in self.states.iter().zip(&self.phase).enumerate() {
            let mut row = vec![(i as f64 * self.dt).to_string()];
            row.extend(s.y.iter().chain(&s.v).chain(&s.a).map(f64::to_string));
            for q in &s.q {
                row.extend(quat::to_wxyz(q).iter().map(f64::to_string));
            }
            row.push(phase.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Integration state of one model: position channels first, then three
/// rotation-vector channels per orientation.
pub(crate) struct Integrator<'a> {
    model: &'a DmpModel,
    channels: Vec<ChannelView<'a>>,
    goal: Vec<f64>,
    /// Where `settled` expects the state to come to rest.
    rest: Vec<f64>,
    amplitude: Vec<f64>,
    tau: f64,
    n_pos: usize,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    tolerance: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(model: &'a DmpModel, start: &[f64], goal: &[f64], tau: f64) -> Result<Self> {
        model.validate()?;
        let n_pos = model.n_channels();
        if start.len() != n_pos || goal.len() != n_pos {
            return Err(Error::invalid(format!(
                "start/goal need {n_pos} entries (got {} and {})",
                start.len(),
                goal.len()
            )));
        }
        if start.iter().chain(goal).any(|v| !v.is_finite()) {
            return Err(Error::invalid("start and goal must be finite"));
        }
        let channels = model.channels();
        let mut y: Vec<f64> = start.to_vec();
        let mut g: Vec<f64> = goal.to_vec();
        for ch in &channels[n_pos..] {
            y.push(ch.y0);
            g.push(ch.g);
        }
        let amplitude = channels
            .iter()
            .zip(y.iter().zip(&g))
            .map(|(ch, (&y0, &g))| if ch.scaled { g - y0 } else { 1.0 })
            .collect();
        let tolerance = y
            .iter()
            .zip(&g)
            .map(|(&y0, &g)| 0.5 * f64::max(1e-3, 1e-3 * (g - y0).abs()))
            .collect();
        let n = channels.len();
        Ok(Integrator {
            model,
            channels,
            rest: g.clone(),
            goal: g,
            amplitude,
            tau,
            n_pos,
            y,
            v: vec![0.0; n],
            a: vec![0.0; n],
            tolerance,
        })
    }

    fn desired_acc(&self, features: &[f64]) -> Vec<f64> {
        let m = self.model;
        let tau2 = self.tau * self.tau;
        self.channels
            .iter()
            .enumerate()
            .map(|(c, ch)| {
                let forcing: f64 = ch.weights.iter().zip(features).map(|(w, p)| w * p).sum();
                let spring = m.alpha_z * (m.beta_z * (self.goal[c] - self.y[c]) - self.tau * self.v[c]);
                (spring + self.amplitude[c] * forcing) / tau2
            })
            .collect()
    }

    /// Accelerations to apply this step and whether any limit intervened.
    pub fn plan(&self, s: f64, dt: f64, limits: Option<&EffectiveLimits>) -> (Vec<f64>, bool) {
        let features = basis_features(&self.model.basis_centers, &self.model.basis_widths, s);
        let mut acc = self.desired_acc(&features);
        let mut clamped = false;
        if let Some(lim) = limits {
            for c in 0..self.n_pos {
                let a = admissible_acc(self.y[c], self.v[c], acc[c], dt, lim, c);
                if a != acc[c] {
                    clamped = true;
                    acc[c] = a;
                }
            }
        }
        (acc, clamped)
    }

    /// Semi-implicit Euler step; returns true if a position had to be clipped.
    pub fn commit(&mut self, acc: Vec<f64>, dt: f64, limits: Option<&EffectiveLimits>) -> bool {
        let mut clipped = false;
        for c in 0..acc.len() {
            self.v[c] += acc[c] * dt;
            self.y[c] += self.v[c] * dt;
        }
        if let Some(lim) = limits {
            for c in 0..self.n_pos {
                let bounded = self.y[c].clamp(lim.lo[c], lim.hi[c]);
                if bounded != self.y[c] {
                    self.y[c] = bounded;
                    clipped = true;
                }
            }
        }
        self.a = acc;
        clipped
    }

    pub fn first_non_finite(&self) -> Option<String> {
        let bad = |v: &[f64]| v.iter().position(|x| !x.is_finite());
        if let Some(c) = bad(&self.y) {
            return Some(format!("position channel {c}"));
        }
        if let Some(c) = bad(&self.v) {
            return Some(format!("velocity channel {c}"));
        }
        None
    }

    pub fn settled(&self) -> bool {
        let close = self
            .y
            .iter()
            .zip(&self.rest)
            .zip(&self.tolerance)
            .all(|((y, g), tol)| (g - y).abs() <= *tol);
        let (pos_v, rot_v) = self.v.split_at(self.n_pos);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        close && norm(pos_v) < STOP_VELOCITY && rot_v.chunks(3).all(|w| norm(w) < STOP_VELOCITY)
    }

    pub fn positions(&self) -> &[f64] {
        &self.y[..self.n_pos]
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.y[..self.n_pos]
    }

    pub fn velocities_mut(&mut self) -> &mut [f64] {
        &mut self.v[..self.n_pos]
    }

    /// Replaces the rest position used by `settled` for the position channels.
    pub fn set_rest_positions(&mut self, rest: &[f64]) {
        self.rest[..self.n_pos].copy_from_slice(rest);
    }

    pub fn snapshot(&self) -> TrajState {
        let n = self.n_pos;
        let q = self
            .model
            .orientation
            .iter()
            .enumerate()
            .map(|(j, o)| {
                let e = &self.y[n + 3 * j..n + 3 * j + 3];
                quat::exp_map(&-Vector3::new(e[0], e[1], e[2])) * o.q_goal
            })
            .collect();
        TrajState {
            y: self.y[..n].to_vec(),
            v: self.v[..n].to_vec(),
            a: self.a[..n].to_vec(),
            q,
        }
    }
}

/// Largest admissible acceleration closest to `desired` for one channel.
fn admissible_acc(y: f64, v: f64, desired: f64, dt: f64, lim: &EffectiveLimits, c: usize) -> f64 {
    let acc = lim.acc[c];
    let vel = lim.vel[c];
    let lo_a = f64::max(-acc, (-vel - v) / dt);
    let hi_a = f64::min(acc, (vel - v) / dt);
    if lo_a > hi_a {
        // |v| already at the edge of the velocity band; brake as hard as allowed.
        return if v > 0.0 { -acc } else { acc };
    }
    let a = desired.clamp(lo_a, hi_a);

    // Excess over the position bound after stepping with `a` and then braking
    // at full deceleration; positive means the bound cannot be kept.
    let upper = |a: f64| {
        let v1 = v + a * dt;
        let ahead = v1.max(0.0);
        y + v1 * dt + ahead * dt + ahead * ahead / (2.0 * acc) - lim.hi[c]
    };
    let lower = |a: f64| {
        let v1 = v + a * dt;
        let ahead = (-v1).max(0.0);
        lim.lo[c] - (y + v1 * dt - ahead * dt - ahead * ahead / (2.0 * acc))
    };

    if upper(a) > 0.0 {
        // upper() grows with a; search the largest viable a in [lo_a, a].
        if upper(lo_a) > 0.0 {
            return lo_a;
        }
        return bisect(lo_a, a, |x| upper(x) <= 0.0);
    }
    if lower(a) > 0.0 {
        if lower(hi_a) > 0.0 {
            return hi_a;
        }
        return bisect(hi_a, a, |x| lower(x) <= 0.0);
    }
    a
}

/// Moves from a feasible point `ok` toward the infeasible `bad`, returning the
/// feasible value closest to `bad`.
fn bisect(mut ok: f64, mut bad: f64, feasible: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (ok + bad);
        if feasible(mid) {
            ok = mid;
        } else {
            bad = mid;
        }
    }
    ok
}

pub(crate) fn step_budget(tau: f64, dt: f64) -> usize {
    ((20.0 * tau + 30.0) / dt).ceil() as usize
}

pub(crate) fn check_start(limits: &KinematicLimits, eff: &EffectiveLimits, start: &[f64], goal: &[f64]) -> Result<()> {
    if limits.n_channels() != start.len() {
        return Err(Error::invalid(format!(
            "limits cover {} channels, model has {}",
            limits.n_channels(),
            start.len()
        )));
    }
    for c in 0..start.len() {
        if start[c] < eff.lo[c] || start[c] > eff.hi[c] {
            return Err(Error::invalid(format!(
                "start channel {c} = {} outside effective position bounds [{}, {}]",
                start[c], eff.lo[c], eff.hi[c]
            )));
        }
        if goal[c] < eff.lo[c] || goal[c] > eff.hi[c] {
            return Err(Error::invalid(format!(
                "goal channel {c} = {} outside effective position bounds [{}, {}]",
                goal[c], eff.lo[c], eff.hi[c]
            )));
        }
    }
    Ok(())
}

/// Integrates `model` from `start` toward `goal`.
pub fn rollout(
    model: &DmpModel,
    start: &[f64],
    goal: &[f64],
    dt: f64,
    limits: Option<&KinematicLimits>,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    let mut arm = Integrator::new(model, start, goal, model.tau)?;
    let eff = match limits {
        Some(l) => {
            let eff = l.effective();
            check_start(l, &eff, start, goal)?;
            Some(eff)
        }
        None => None,
    };
    let decay = (-model.alpha_s * dt / model.tau).exp();
    let budget = step_budget(model.tau, dt);

    let mut s = 1.0;
    let mut states = vec![arm.snapshot()];
    let mut phase = vec![s];
    let mut clamped_steps = 0;
    for step in 0.. {
        if s <= PHASE_END && arm.settled() {
            break;
        }
        if step >= budget {
            return Err(Error::NotConverged { steps: budget });
        }
        let (acc, clamped) = arm.plan(s, dt, eff.as_ref());
        let clipped = arm.commit(acc, dt, eff.as_ref());
        if let Some(detail) = arm.first_non_finite() {
            return Err(Error::NonFinite { step, detail });
        }
        if clamped || clipped {
            clamped_steps += 1;
        } else {
            s *= decay;
        }
        states.push(arm.snapshot());
        phase.push(s);
    }
    Ok(Trajectory { dt, states, phase, clamped_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmp::demo::{Demonstration, Layout, Sample};
    use crate::dmp::model::{fit, Gains};

    fn demo(rate: f64, n: usize, f: impl Fn(f64) -> f64) -> Demonstration {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                Sample { t, y: vec![f(t)], q: vec![] }
            })
            .collect();
        Demonstration::new(vec!["x".into()], rate, Layout::Generic, samples).unwrap()
    }

    #[test]
    fn equilibrium_stays_put() {
        let m = fit(&demo(500.0, 501, |_| 0.3), 30, Gains::default()).unwrap();
        let tr = rollout(&m, &[0.3], &[0.3], DEFAULT_DT, None).unwrap();
        assert!(tr.states.iter().all(|s| (s.y[0] - 0.3).abs() < 1e-12 && s.v[0].abs() < 1e-12));
        assert_eq!(tr.phase.len(), tr.states.len());
        assert!(*tr.phase.last().unwrap() <= PHASE_END);
    }

    #[test]
    fn admissible_acc_respects_braking_distance() {
        let lim = EffectiveLimits { lo: vec![-1.0], hi: vec![1.0], vel: vec![10.0], acc: vec![2.0] };
        // moving at 1 m/s, 0.2 m from the bound: needs 0.25 m to stop
        let a = admissible_acc(0.8, 1.0, 0.0, 0.001, &lim, 0);
        assert!(a < 0.0);
        assert!(a >= -2.0);
        // far from the bound the request passes through untouched
        assert_eq!(admissible_acc(0.0, 0.1, 0.5, 0.001, &lim, 0), 0.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = fit(&demo(500.0, 501, |t| t), 10, Gains::default()).unwrap();
        assert!(rollout(&m, &[0.0], &[1.0], 0.0, None).is_err());
        assert!(rollout(&m, &[0.0, 1.0], &[1.0], 0.002, None).is_err());
        let lim = KinematicLimits::new(vec![0.5], vec![2.0], vec![5.0], vec![50.0], 0.98).unwrap();
        assert!(matches!(rollout(&m, &[0.0], &[1.0], 0.002, Some(&lim)), Err(Error::Invalid(_))));
    }

    #[test]
    fn non_finite_reports_step() {
        let m = fit(&demo(500.0, 501, |t| t), 10, Gains::default()).unwrap();
        match rollout(&m, &[0.0], &[1e307], 0.002, None) {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
