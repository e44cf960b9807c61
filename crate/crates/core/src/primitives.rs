//! Manipulation primitive registry and per-iteration plans.
//!
//! Registry layout, one directory per primitive:
//!
//! ```text
//! <registry>/fling/{meta.json, left.json, right.json, demo.ndjson}
//! <registry>/shake/...
//! <registry>/twist/...
//! <registry>/quasi_static/meta.json
//! ```
//!
//! `meta.json` names the kind, rotation axis, distance bound and a limits file
//! relative to the primitive directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bimanual::{enforce_max_distance, pair_rollout, ArmState, PairState, PairTrajectory};
use crate::dmp::demo::Demonstration;
use crate::dmp::limits::KinematicLimits;
use crate::dmp::model::DmpModel;
use crate::error::{Error, Result};
use crate::quat::{self, Quat};
use crate::synth::min_jerk_state;

/// Share of accumulated rotation the declared axis must carry.
pub const AXIS_DOMINANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimitiveName {
    Fling,
    Shake,
    Twist,
    QuasiStatic,
}

impl PrimitiveName {
    pub const ALL: [PrimitiveName; 4] =
        [PrimitiveName::Fling, PrimitiveName::Shake, PrimitiveName::Twist, PrimitiveName::QuasiStatic];

    pub fn dir_name(self) -> &'static str {
        match self {
            PrimitiveName::Fling => "fling",
            PrimitiveName::Shake => "shake",
            PrimitiveName::Twist => "twist",
            PrimitiveName::QuasiStatic => "quasi_static",
        }
    }

    /// Name used in plan labels ("Twist + Quasi").
    pub fn label(self) -> &'static str {
        match self {
            PrimitiveName::Fling => "Fling",
            PrimitiveName::Shake => "Shake",
            PrimitiveName::Twist => "Twist",
            PrimitiveName::QuasiStatic => "Quasi",
        }
    }

    pub fn expected_axis(self) -> Option<Axis> {
        match self {
            PrimitiveName::Fling | PrimitiveName::Shake => Some(Axis::Y),
            PrimitiveName::Twist => Some(Axis::Z),
            PrimitiveName::QuasiStatic => None,
        }
    }
}

impl fmt::Display for PrimitiveName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PrimitiveName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fling" => Ok(PrimitiveName::Fling),
            "shake" => Ok(PrimitiveName::Shake),
            "twist" => Ok(PrimitiveName::Twist),
            "quasi" | "quasistatic" | "quasi_static" | "quasi-static" => Ok(PrimitiveName::QuasiStatic),
            other => Err(Error::invalid(format!("unknown primitive {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Dynamic,
    QuasiStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiStaticParams {
    pub forward_distance: f64,
    pub duration: f64,
}

#[derive(Debug, Clone)]
pub struct PrimitiveSpec {
    pub name: PrimitiveName,
    pub kind: PrimitiveKind,
    pub main_rotation_axis: Option<Axis>,
    pub left_model: Option<Arc<DmpModel>>,
    pub right_model: Option<Arc<DmpModel>>,
    pub limits: KinematicLimits,
    pub d_max: f64,
    pub quasi: Option<QuasiStaticParams>,
}

impl PrimitiveSpec {
    /// Constrained pair rollout of a dynamic primitive.
    pub fn pair_trajectory(&self, dt: f64) -> Result<PairTrajectory> {
        match (&self.left_model, &self.right_model) {
            (Some(l), Some(r)) => pair_rollout(l, r, &self.limits, self.d_max, dt),
            _ => Err(Error::invalid(format!("{} has no movement models", self.name))),
        }
    }

    /// Quasi-static translation starting from the given pair of poses.
    pub fn quasi_static_from(&self, start: &PairState, dt: f64) -> Result<PairTrajectory> {
        let params = self
            .quasi
            .ok_or_else(|| Error::invalid(format!("{} is not quasi-static", self.name)))?;
        build_quasi_static(
            (start.left.p, start.left.q),
            (start.right.p, start.right.q),
            params.forward_distance,
            params.duration,
            self.d_max,
            dt,
        )
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct MetaFile {
    name: PrimitiveName,
    kind: PrimitiveKind,
    #[serde(default)]
    axis: Option<Axis>,
    d_max: f64,
    limits: PathBuf,
    #[serde(default)]
    demonstration: Option<PathBuf>,
    #[serde(default)]
    forward_distance: Option<f64>,
    #[serde(default)]
    duration: Option<f64>,
}

/// Fraction of accumulated rotation about each robot-frame axis, summing
/// increments `log(q[k+1] ⊗ q[k]⁻¹)` over all orientation tracks.
pub fn rotation_axis_shares(demo: &Demonstration) -> Result<[f64; 3]> {
    if demo.n_orientations() == 0 {
        return Err(Error::invalid("demonstration carries no orientations"));
    }
    let mut total = [0.0; 3];
    for pair in demo.samples.windows(2) {
        for (a, b) in pair[0].q.iter().zip(&pair[1].q) {
            let step = quat::log_map(&(b * a.inverse()));
            for c in 0..3 {
                total[c] += step[c].abs();
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum == 0.0 {
        return Err(Error::invalid("demonstration does not rotate"));
    }
    Ok(total.map(|t| t / sum))
}

pub fn validate_axis(demo: &Demonstration, axis: Axis) -> Result<()> {
    let shares = rotation_axis_shares(demo)?;
    let share = shares[axis.index()];
    if share < AXIS_DOMINANCE {
        return Err(Error::invalid(format!(
            "declared axis {axis:?} carries {:.1}% of the rotation (needs {:.0}%); shares x/y/z = {:.3}/{:.3}/{:.3}",
            100.0 * share,
            100.0 * AXIS_DOMINANCE,
            shares[0],
            shares[1],
            shares[2]
        )));
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Loads and validates one primitive from a registry directory.
pub fn load_primitive(name: PrimitiveName, registry_dir: impl AsRef<Path>) -> Result<PrimitiveSpec> {
    let dir = registry_dir.as_ref().join(name.dir_name());
    let meta: MetaFile = read_json(&dir.join("meta.json"))?;
    let bad = |msg: String| Error::parse(dir.join("meta.json"), msg);
    if meta.name != name {
        return Err(bad(format!("meta names {:?}, expected {name:?}", meta.name)));
    }
    if !(meta.d_max > 0.0 && meta.d_max.is_finite()) {
        return Err(bad("d_max must be positive".into()));
    }
    let limits = KinematicLimits::load(dir.join(&meta.limits))?;
    if limits.n_channels() != 3 {
        return Err(bad("limits must cover x, y, z".into()));
    }

    match (name, meta.kind) {
        (PrimitiveName::QuasiStatic, PrimitiveKind::QuasiStatic) => {
            let (Some(forward_distance), Some(duration)) = (meta.forward_distance, meta.duration) else {
                return Err(bad("quasi-static primitive needs forward_distance and duration".into()));
            };
            if !(forward_distance > 0.0) || !(duration > 0.0) {
                return Err(bad("forward_distance and duration must be positive".into()));
            }
            for f in ["left.json", "right.json"] {
                if dir.join(f).exists() {
                    return Err(bad(format!("quasi-static primitive must not ship {f}")));
                }
            }
            Ok(PrimitiveSpec {
                name,
                kind: PrimitiveKind::QuasiStatic,
                main_rotation_axis: None,
                left_model: None,
                right_model: None,
                limits,
                d_max: meta.d_max,
                quasi: Some(QuasiStaticParams { forward_distance, duration }),
            })
        }
        (PrimitiveName::QuasiStatic, _) | (_, PrimitiveKind::QuasiStatic) => {
            Err(bad(format!("kind {:?} does not match {name:?}", meta.kind)))
        }
        (_, PrimitiveKind::Dynamic) => {
            let axis = meta.axis.ok_or_else(|| bad("dynamic primitive needs an axis".into()))?;
            if Some(axis) != name.expected_axis() {
                return Err(bad(format!(
                    "{name:?} must rotate mainly about {:?}, meta declares {axis:?}",
                    name.expected_axis().expect("dynamic primitives have an axis")
                )));
            }
            let demo_path = meta
                .demonstration
                .as_ref()
                .ok_or_else(|| bad("dynamic primitive needs its demonstration file".into()))?;
            let demo = Demonstration::load(dir.join(demo_path))?;
            validate_axis(&demo, axis).map_err(|e| bad(e.to_string()))?;
            let left = DmpModel::load(dir.join("left.json"))?;
            let right = DmpModel::load(dir.join("right.json"))?;
            Ok(PrimitiveSpec {
                name,
                kind: PrimitiveKind::Dynamic,
                main_rotation_axis: Some(axis),
                left_model: Some(Arc::new(left)),
                right_model: Some(Arc::new(right)),
                limits,
                d_max: meta.d_max,
                quasi: None,
            })
        }
    }
}

/// Straight forward (+x) translation of both grippers with a minimum-jerk
/// speed profile, orientations held.
pub fn build_quasi_static(
    left: (Vector3<f64>, Quat),
    right: (Vector3<f64>, Quat),
    forward_distance: f64,
    duration: f64,
    d_max: f64,
    dt: f64,
) -> Result<PairTrajectory> {
    if !(forward_distance > 0.0 && forward_distance.is_finite()) {
        return Err(Error::invalid("forward_distance must be positive"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration must be positive"));
    }
    if !(dt > 0.0 && dt <= duration) {
        return Err(Error::invalid("dt must be positive and no longer than the motion"));
    }
    let (pl, pr) = (left.0, right.0);
    let gap = (pl - pr).norm();
    if enforce_max_distance(pl, pr, d_max)? != (pl, pr) {
        return Err(Error::invalid(format!(
            "start poses are {gap} m apart, more than d_max = {d_max}"
        )));
    }
    let n = (duration / dt).round() as usize + 1;
    let mut states = Vec::with_capacity(n);
    let mut phase = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i as f64 * dt).min(duration);
        let (x, v, a) = min_jerk_state(0.0, forward_distance, duration, t);
        let shift = Vector3::new(x, 0.0, 0.0);
        let vel = Vector3::new(v, 0.0, 0.0);
        let acc = Vector3::new(a, 0.0, 0.0);
        states.push(PairState {
            left: ArmState { p: pl + shift, v: vel, a: acc, q: left.1 },
            right: ArmState { p: pr + shift, v: vel, a: acc, q: right.1 },
        });
        phase.push(1.0 - t / duration);
    }
    Ok(PairTrajectory { dt, states, phase, d_max, clamped_steps: 0 })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IterationPlan {
    pub steps: Vec<PrimitiveName>,
    pub label: String,
}

impl IterationPlan {
    pub fn new(steps: Vec<PrimitiveName>) -> Result<Self> {
        if steps.is_empty() || steps.len() > 2 {
            return Err(Error::invalid(format!("a plan has one or two steps, got {}", steps.len())));
        }
        if steps[..steps.len() - 1].contains(&PrimitiveName::QuasiStatic) {
            return Err(Error::invalid("the quasi-static motion may only come last"));
        }
        if steps == [PrimitiveName::QuasiStatic] {
            return Err(Error::invalid("the quasi-static motion needs a preceding primitive"));
        }
        let label = steps.iter().map(|s| s.label()).collect::<Vec<_>>().join(" + ");
        Ok(IterationPlan { steps, label })
    }

    /// Parses a display label such as `"Fling + Quasi"`.
    pub fn from_label(label: &str) -> Result<Self> {
        let steps = label.split('+').map(str::parse).collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }
}

impl fmt::Display for IterationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    pub dir: PathBuf,
    primitives: BTreeMap<PrimitiveName, PrimitiveSpec>,
}

impl Registry {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mut primitives = BTreeMap::new();
        for name in PrimitiveName::ALL {
            primitives.insert(name, load_primitive(name, &dir)?);
        }
        Ok(Registry { dir, primitives })
    }

    pub fn get(&self, name: PrimitiveName) -> Result<&PrimitiveSpec> {
        self.primitives
            .get(&name)
            .ok_or_else(|| Error::invalid(format!("{name} is not in the registry")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PrimitiveSpec> {
        self.primitives.values()
    }

    pub fn compose(&self, names: &[PrimitiveName]) -> Result<IterationPlan> {
        let plan = IterationPlan::new(names.to_vec())?;
        for n in &plan.steps {
            self.get(*n)?;
        }
        Ok(plan)
    }

    /// Rolls out every registered motion (the quasi-static one from the end
    /// pose of each dynamic primitive) and checks all bounds exhaustively.
    pub fn validate(&self, dt: f64) -> Result<Vec<RegistryCheck>> {
        let mut out = Vec::new();
        let quasi = self.get(PrimitiveName::QuasiStatic)?;
        for spec in self.iter().filter(|s| s.kind == PrimitiveKind::Dynamic) {
            let traj = spec.pair_trajectory(dt)?;
            traj.check(&spec.limits)
                .map_err(|e| Error::LimitViolation(format!("{}: {e}", spec.name)))?;
            out.push(RegistryCheck::new(spec.name.label().to_string(), &traj));

            let follow = quasi.quasi_static_from(traj.last(), dt)?;
            follow
                .check(&quasi.limits)
                .map_err(|e| Error::LimitViolation(format!("{} + Quasi: {e}", spec.name)))?;
            out.push(RegistryCheck::new(format!("Quasi after {}", spec.name), &follow));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryCheck {
    pub motion: String,
    pub samples: usize,
    pub duration: f64,
    pub max_distance: f64,
    pub clamped_steps: usize,
}

impl RegistryCheck {
    fn new(motion: String, traj: &PairTrajectory) -> Self {
        RegistryCheck {
            motion,
            samples: traj.states.len(),
            duration: traj.duration(),
            max_distance: traj.max_distance(),
            clamped_steps: traj.clamped_steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_table_naming() {
        use PrimitiveName::*;
        assert_eq!(IterationPlan::new(vec![Twist]).unwrap().label, "Twist");
        assert_eq!(IterationPlan::new(vec![Fling, Shake]).unwrap().label, "Fling + Shake");
        assert_eq!(IterationPlan::new(vec![Twist, QuasiStatic]).unwrap().label, "Twist + Quasi");
        assert!(IterationPlan::new(vec![QuasiStatic, Fling]).is_err());
        assert!(IterationPlan::new(vec![]).is_err());
        assert!(IterationPlan::new(vec![Fling, Shake, Twist]).is_err());
        assert_eq!(
            IterationPlan::from_label("Shake + Quasi").unwrap().steps,
            vec![Shake, QuasiStatic]
        );
    }

    fn start() -> ((Vector3<f64>, Quat), (Vector3<f64>, Quat)) {
        (
            (Vector3::new(0.5, 0.2, 1.0), Quat::identity()),
            (Vector3::new(0.5, -0.2, 1.0), Quat::identity()),
        )
    }

    #[test]
    fn quasi_static_is_rigid_translation() {
        let (l, r) = start();
        let tr = build_quasi_static(l, r, 0.3, 4.0, 0.45, 0.002).unwrap();
        assert_eq!(tr.states.len(), 2001);
        let end = tr.last();
        assert!((end.left.p - Vector3::new(0.8, 0.2, 1.0)).norm() < 1e-12);
        assert!((end.right.p - Vector3::new(0.8, -0.2, 1.0)).norm() < 1e-12);
        for s in &tr.states {
            assert!((s.distance() - 0.4).abs() < 1e-9);
            assert_eq!(s.left.q, Quat::identity());
        }
        let peak = tr.states.iter().map(|s| s.left.v.x).fold(0.0, f64::max);
        assert!((peak - 1.875 * 0.3 / 4.0).abs() < 1e-6);
    }

    #[test]
    fn quasi_static_rejects_bad_start_and_params() {
        let (l, r) = start();
        assert!(build_quasi_static(l, r, 0.3, 4.0, 0.3, 0.002).is_err());
        assert!(build_quasi_static(l, r, 0.0, 4.0, 0.45, 0.002).is_err());
        assert!(build_quasi_static(l, r, 0.3, -1.0, 0.45, 0.002).is_err());
    }
}
