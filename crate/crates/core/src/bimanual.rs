//! Two-arm coupling: shared phase and a maximum inter-arm distance.

use std::io::Write;

use nalgebra::Vector3;

use crate::dmp::limits::KinematicLimits;
use crate::dmp::model::DmpModel;
use crate::dmp::rollout::{check_start, step_budget, Integrator, TrajState, PHASE_END};
use crate::error::{Error, Result};
use crate::quat::{self, Quat};

/// Largest relative duration mismatch accepted between co-recorded arms.
pub const TAU_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub q: Quat,
}

impl ArmState {
    pub fn at_rest(p: Vector3<f64>, q: Quat) -> Self {
        ArmState { p, v: Vector3::zeros(), a: Vector3::zeros(), q }
    }

    fn from_traj(s: &TrajState) -> Self {
        ArmState {
            p: Vector3::new(s.y[0], s.y[1], s.y[2]),
            v: Vector3::new(s.v[0], s.v[1], s.v[2]),
            a: Vector3::new(s.a[0], s.a[1], s.a[2]),
            q: s.q.first().copied().unwrap_or_else(Quat::identity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub left: ArmState,
    pub right: ArmState,
}

impl PairState {
    pub fn distance(&self) -> f64 {
        (self.left.p - self.right.p).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTrajectory {
    pub dt: f64,
    pub states: Vec<PairState>,
    pub phase: Vec<f64>,
    pub d_max: f64,
    pub clamped_steps: usize,
}

impl PairTrajectory {
    pub fn duration(&self) -> f64 {
        self.states.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn first(&self) -> &PairState {
        &self.states[0]
    }

    pub fn last(&self) -> &PairState {
        self.states.last().expect("pair trajectory is never empty")
    }

    pub fn max_distance(&self) -> f64 {
        self.states.iter().map(PairState::distance).fold(0.0, f64::max)
    }

    /// Exhaustive check of every sample against the kinematic and distance bounds.
    pub fn check(&self, limits: &KinematicLimits) -> Result<()> {
        if limits.n_channels() != 3 {
            return Err(Error::invalid("pair limits must cover three position channels"));
        }
        for (name, pick) in [("left", 0usize), ("right", 1)] {
            let arm = |s: &PairState| if pick == 0 { s.left } else { s.right };
            let rows: Vec<ArmState> = self.states.iter().map(arm).collect();
            limits
                .check_states(rows.iter().map(|s| (s.p.as_slice(), s.v.as_slice(), s.a.as_slice())))
                .map_err(|e| Error::LimitViolation(format!("{name} arm: {e}")))?;
        }
        for (i, s) in self.states.iter().enumerate() {
            let d = s.distance();
            if d > self.d_max + 1e-9 {
                return Err(Error::LimitViolation(format!(
                    "sample {i}: inter-arm distance {d} exceeds {}",
                    self.d_max
                )));
            }
            for q in [s.left.q, s.right.q] {
                if (q.quaternion().norm() - 1.0).abs() > quat::UNIT_TOL {
                    return Err(Error::LimitViolation(format!("sample {i}: non-unit quaternion")));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        for arm in ["left", "right"] {
            header.extend(["px", "py", "pz", "qw", "qx", "qy", "qz"].iter().map(|c| format!("{arm}_{c}")));
        }
        header.push("phase".into());
        writeln!(out, "{}", header.join(","))?;
        for (i, (s, phase)) in self.states.iter().zip(&self.phase).enumerate() {
            let mut row = vec![(i as f64 * self.dt).to_string()];
            for arm in [&s.left, &s.right] {
                row.extend(arm.p.iter().map(f64::to_string));
                row.extend(quat::to_wxyz(&arm.q).iter().map(f64::to_string));
            }
            row.push(phase.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Pulls both points symmetrically toward their midpoint until they are at
/// most `d_max` apart; points already within range are returned untouched.
pub fn enforce_max_distance(
    p_left: Vector3<f64>,
    p_right: Vector3<f64>,
    d_max: f64,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::invalid("d_max must be positive"));
    }
    let gap = p_right - p_left;
    let d = gap.norm();
    // the relative slack makes the projection idempotent under rounding
    if d <= d_max * (1.0 + 1e-12) {
        return Ok((p_left, p_right));
    }
    let mid = (p_left + p_right) * 0.5;
    let half = gap * (0.5 * d_max / d);
    Ok((mid - half, mid + half))
}

pub fn check_tau_match(left: f64, right: f64) -> Result<()> {
    let mismatch = (left - right).abs() / left.min(right);
    if mismatch > TAU_TOLERANCE {
        return Err(Error::invalid(format!(
            "arm durations {left} s and {right} s differ by {:.1}% (max {:.0}%)",
            100.0 * mismatch,
            100.0 * TAU_TOLERANCE
        )));
    }
    Ok(())
}

/// Integrates both arms on one phase variable under shared kinematic limits.
///
/// A limit intervening on either arm holds the phase for both. After every
/// step the positions are projected back within `d_max`, and velocities
/// lose their separating component. The rollout settles on the projected
/// goals when the goals themselves are more than `d_max` apart.
pub fn pair_rollout(
    left: &DmpModel,
    right: &DmpModel,
    limits: &KinematicLimits,
    d_max: f64,
    dt: f64,
) -> Result<PairTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::invalid("d_max must be positive"));
    }
    for (name, m) in [("left", left), ("right", right)] {
        if m.n_channels() != 3 {
            return Err(Error::invalid(format!(
                "{name} model has {} channels; pair rollout needs x, y, z",
                m.n_channels()
            )));
        }
        if m.orientation.len() > 1 {
            return Err(Error::invalid(format!("{name} model carries more than one orientation")));
        }
    }
    check_tau_match(left.tau, right.tau)?;
    let tau = 0.5 * (left.tau + right.tau);
    let alpha_s = 0.5 * (left.alpha_s + right.alpha_s);
    let eff = limits.effective();
    check_start(limits, &eff, &left.y0, &left.g)?;
    check_start(limits, &eff, &right.y0, &right.g)?;

    let mut arms = [
        Integrator::new(left, &left.y0, &left.g, tau)?,
        Integrator::new(right, &right.y0, &right.g, tau)?,
    ];
    // goals farther apart than d_max are unreachable; the arms rest at their projection
    let (gl, gr) = enforce_max_distance(v3(&left.g), v3(&right.g), d_max)?;
    arms[0].set_rest_positions(gl.as_slice());
    arms[1].set_rest_positions(gr.as_slice());
    project(&mut arms, d_max)?;

    let decay = (-alpha_s * dt / tau).exp();
    let budget = step_budget(tau, dt);
    let mut s = 1.0;
    let mut states = vec![snapshot(&arms)];
    let mut phase = vec![s];
    let mut clamped_steps = 0;
    for step in 0.. {
        if s <= PHASE_END && arms.iter().all(Integrator::settled) {
            break;
        }
        if step >= budget {
            return Err(Error::NotConverged { steps: budget });
        }
        let plans: Vec<(Vec<f64>, bool)> = arms.iter().map(|a| a.plan(s, dt, Some(&eff))).collect();
        let mut held = plans.iter().any(|(_, clamped)| *clamped);
        for (arm, (acc, _)) in arms.iter_mut().zip(plans) {
            held |= arm.commit(acc, dt, Some(&eff));
            if let Some(detail) = arm.first_non_finite() {
                return Err(Error::NonFinite { step, detail });
            }
        }
        project(&mut arms, d_max)?;
        if held {
            clamped_steps += 1;
        } else {
            s *= decay;
        }
        states.push(snapshot(&arms));
        phase.push(s);
    }
    Ok(PairTrajectory { dt, states, phase, d_max, clamped_steps })
}

fn v3(p: &[f64]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

/// Midpoint projection of the positions. When it acts, the separating part
/// of the relative velocity is removed as well, split evenly between arms.
fn project(arms: &mut [Integrator<'_>; 2], d_max: f64) -> Result<()> {
    let (pl, pr) = (v3(arms[0].positions()), v3(arms[1].positions()));
    let (l, r) = enforce_max_distance(pl, pr, d_max)?;
    if (l, r) == (pl, pr) {
        return Ok(());
    }
    arms[0].positions_mut().copy_from_slice(l.as_slice());
    arms[1].positions_mut().copy_from_slice(r.as_slice());
    let axis = (r - l).normalize();
    let (vl, vr) = (v3(arms[0].velocities_mut()), v3(arms[1].velocities_mut()));
    let separating = (vr - vl).dot(&axis);
    if separating > 0.0 {
        let dv = axis * (0.5 * separating);
        arms[0].velocities_mut().copy_from_slice((vl + dv).as_slice());
        arms[1].velocities_mut().copy_from_slice((vr - dv).as_slice());
    }
    Ok(())
}

fn snapshot(arms: &[Integrator<'_>; 2]) -> PairState {
    PairState {
        left: ArmState::from_traj(&arms[0].snapshot()),
        right: ArmState::from_traj(&arms[1].snapshot()),
    }
}
