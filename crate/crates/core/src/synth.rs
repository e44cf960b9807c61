//! Hand-authored demonstrations used for the bundled data set.
//!
//! The dynamic primitives are written as mocap-style bimanual recordings
//! (120 Hz, small marker noise) in the robot frame: x forward, y to the
//! robot's left, z up. Both grippers start level at the same height, 0.4 m
//! apart.

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use std::fs;
use std::path::Path;

use crate::dmp::demo::{Demonstration, Layout, Sample, BIMANUAL_LABELS};
use crate::dmp::limits::{KinematicLimits, DEFAULT_SAFETY_SCALE};
use crate::dmp::model::{fit, Gains, DEFAULT_N_BASIS};
use crate::dmp::preprocess::{resample_and_filter, PreprocessSpec};
use crate::error::{Error, Result};
use crate::quat::Quat;

pub const MOCAP_RATE_HZ: f64 = 120.0;
pub const POSITION_NOISE: f64 = 3e-4;
pub const ORIENTATION_NOISE: f64 = 2e-5;

pub const LEFT_HOME: [f64; 3] = [0.45, 0.2, 1.0];
pub const RIGHT_HOME: [f64; 3] = [0.45, -0.2, 1.0];

/// Minimum-jerk blend from 0 to 1 over `u ∈ [0, 1]`, clamped outside.
pub fn min_jerk(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Closed-form minimum-jerk position, velocity and acceleration.
pub fn min_jerk_state(x0: f64, x1: f64, duration: f64, t: f64) -> (f64, f64, f64) {
    let d = x1 - x0;
    if t <= 0.0 {
        return (x0, 0.0, 0.0);
    }
    if t >= duration {
        return (x1, 0.0, 0.0);
    }
    let u = t / duration;
    let p = x0 + d * u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    let v = d / duration * 30.0 * u * u * (1.0 - u) * (1.0 - u);
    let a = d / (duration * duration) * 60.0 * u * (1.0 - 3.0 * u + 2.0 * u * u);
    (p, v, a)
}

fn seg(t: f64, t0: f64, t1: f64) -> f64 {
    min_jerk((t - t0) / (t1 - t0))
}

fn generic(labels: &[&str], rate: f64, duration: f64, f: impl Fn(f64) -> Vec<f64>) -> Demonstration {
    let n = (duration * rate).round() as usize + 1;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / rate;
            Sample { t, y: f(t), q: vec![] }
        })
        .collect();
    Demonstration::new(labels.iter().map(|s| s.to_string()).collect(), rate, Layout::Generic, samples)
        .expect("synthetic demo is valid")
}

pub fn constant_demo() -> Demonstration {
    generic(&["x", "y", "z"], 500.0, 2.0, |_| vec![0.45, 0.2, 1.0])
}

pub const MIN_JERK_START: [f64; 3] = [0.4, 0.0, 0.9];
pub const MIN_JERK_END: [f64; 3] = [0.7, 0.15, 1.1];
pub const MIN_JERK_DURATION: f64 = 2.0;

pub fn min_jerk_demo() -> Demonstration {
    generic(&["x", "y", "z"], 500.0, MIN_JERK_DURATION, |t| {
        (0..3)
            .map(|c| min_jerk_state(MIN_JERK_START[c], MIN_JERK_END[c], MIN_JERK_DURATION, t).0)
            .collect()
    })
}

/// Two raised-cosine components per channel; starts at rest.
pub fn sine_value(c: usize, t: f64) -> f64 {
    use std::f64::consts::TAU;
    let base = [0.5, 0.1, 1.0][c];
    let (f1, f2) = [(0.5, 1.25), (0.75, 1.5), (0.5, 1.0)][c];
    let (a1, a2) = [(0.1, 0.04), (0.06, 0.03), (0.08, 0.05)][c];
    base + a1 * (1.0 - (TAU * f1 * t).cos()) + a2 * (1.0 - (TAU * f2 * t).cos())
}

pub fn sine_demo() -> Demonstration {
    generic(&["x", "y", "z"], 500.0, 4.0, |t| (0..3).map(|c| sine_value(c, t)).collect())
}

struct ArmMotion {
    dp: [f64; 3],
    rot: Vector3<f64>,
}

fn bimanual(
    duration: f64,
    seed: u64,
    motion: impl Fn(f64) -> (ArmMotion, ArmMotion),
) -> Demonstration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_noise = Normal::new(0.0, POSITION_NOISE).expect("valid sigma");
    let rot_noise = Normal::new(0.0, ORIENTATION_NOISE).expect("valid sigma");
    let n = (duration * MOCAP_RATE_HZ).round() as usize + 1;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / MOCAP_RATE_HZ;
        let (left, right) = motion(t);
        let mut y = Vec::with_capacity(6);
        let mut q: Vec<Quat> = Vec::with_capacity(2);
        for (home, arm) in [(LEFT_HOME, &left), (RIGHT_HOME, &right)] {
            for c in 0..3 {
                y.push(home[c] + arm.dp[c] + pos_noise.sample(&mut rng));
            }
            let jitter = Vector3::new(
                rot_noise.sample(&mut rng),
                rot_noise.sample(&mut rng),
                rot_noise.sample(&mut rng),
            );
            q.push(UnitQuaternion::from_scaled_axis(arm.rot + jitter));
        }
        samples.push(Sample { t, y, q });
    }
    Demonstration::new(
        BIMANUAL_LABELS.iter().map(|s| s.to_string()).collect(),
        MOCAP_RATE_HZ,
        Layout::Bimanual,
        samples,
    )
    .expect("synthetic demo is valid")
}

/// A wind-up followed by one fast forward-down sweep, pitching about Y.
pub fn fling_demo() -> Demonstration {
    bimanual(2.4, 11, |t| {
        let up = seg(t, 0.2, 0.9);
        let sweep = seg(t, 0.9, 1.6);
        let dp = [-0.12 * up + 0.40 * sweep, 0.0, 0.12 * up - 0.30 * sweep];
        let rot = Vector3::new(0.0, -0.35 * up + 0.9 * sweep, 0.0);
        (ArmMotion { dp, rot }, ArmMotion { dp, rot })
    })
}

/// Three back-and-forth cycles with an in-phase pitch about Y.
pub fn shake_demo() -> Demonstration {
    bimanual(3.6, 12, |t| {
        let envelope = seg(t, 0.3, 0.8) * (1.0 - seg(t, 2.8, 3.3));
        let wave = if (0.3..=3.3).contains(&t) {
            (std::f64::consts::TAU * (t - 0.3)).sin() * envelope
        } else {
            0.0
        };
        let dp = [0.08 * wave, 0.0, 0.0];
        let rot = Vector3::new(0.0, 0.4 * wave, 0.0);
        (ArmMotion { dp, rot }, ArmMotion { dp, rot })
    })
}

/// Two slow forward pushes, the grippers yawing about Z in opposite senses.
pub fn twist_demo() -> Demonstration {
    bimanual(4.0, 13, |t| {
        let push = seg(t, 0.3, 1.5) + seg(t, 2.0, 3.2);
        let dp = [0.10 * push, 0.0, 0.0];
        let yaw = 0.4 * push;
        (
            ArmMotion { dp, rot: Vector3::new(0.0, 0.0, yaw) },
            ArmMotion { dp, rot: Vector3::new(0.0, 0.0, -yaw) },
        )
    })
}

/// A sweep that only rolls about X; used to exercise axis validation.
pub fn roll_only_demo() -> Demonstration {
    bimanual(2.0, 14, |t| {
        let u = seg(t, 0.2, 1.6);
        let dp = [0.2 * u, 0.0, 0.0];
        let rot = Vector3::new(0.8 * u, 0.0, 0.0);
        (ArmMotion { dp, rot }, ArmMotion { dp, rot })
    })
}

/// Preprocessing used for each bundled dynamic primitive.
pub fn preprocess_spec(name: &str) -> PreprocessSpec {
    let essential = match name {
        "fling" => vec![true, false, true, true, false, true],
        _ => vec![true, false, false, true, false, false],
    };
    PreprocessSpec { target_rate_hz: 500.0, cutoff_hz: 10.0, essential_axes: essential }
}

/// Cartesian workspace limits shared by both grippers.
pub fn registry_limits() -> KinematicLimits {
    KinematicLimits::new(
        vec![0.0, -0.8, 0.4],
        vec![1.3, 0.8, 1.6],
        vec![1.2; 3],
        vec![6.0; 3],
        DEFAULT_SAFETY_SCALE,
    )
    .expect("static limits are valid")
}

/// Nominal UR5e joint limits (rad, rad/s, rad/s²).
pub fn ur5e_joint_limits() -> KinematicLimits {
    use std::f64::consts::{PI, TAU};
    KinematicLimits::new(
        vec![-TAU, -TAU, -PI, -TAU, -TAU, -TAU],
        vec![TAU, TAU, PI, TAU, TAU, TAU],
        vec![PI; 6],
        vec![40.0; 6],
        DEFAULT_SAFETY_SCALE,
    )
    .expect("static limits are valid")
}

pub const REGISTRY_D_MAX: f64 = 0.45;
pub const QUASI_FORWARD_DISTANCE: f64 = 0.3;
pub const QUASI_DURATION: f64 = 4.0;

fn write(path: &Path, text: String) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn limits_json(l: &KinematicLimits) -> String {
    serde_json::to_string_pretty(l).expect("limits serialize") + "\n"
}

/// Regenerates the bundled demonstrations, limits files and primitive
/// registry under `root`.
pub fn write_bundle(root: &Path) -> Result<()> {
    let demos = root.join("demos");
    fs::create_dir_all(&demos).map_err(|e| Error::io(&demos, e))?;
    constant_demo().save(demos.join("constant.ndjson"))?;
    min_jerk_demo().save(demos.join("min_jerk.ndjson"))?;
    sine_demo().save(demos.join("sine.ndjson"))?;

    write(&root.join("limits/ur5e_joints.json"), limits_json(&ur5e_joint_limits()))?;
    let registry = root.join("registry");
    write(&registry.join("limits.json"), limits_json(&registry_limits()))?;

    let dynamic: [(&str, &str, fn() -> Demonstration); 3] = [
        ("fling", "Y", fling_demo),
        ("shake", "Y", shake_demo),
        ("twist", "Z", twist_demo),
    ];
    for (name, axis, make) in dynamic {
        let raw = make();
        raw.save(demos.join(format!("{name}_raw.ndjson")))?;
        let clean = resample_and_filter(&raw, &preprocess_spec(name))?;
        let dir = registry.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        clean.save(dir.join("demo.ndjson"))?;
        let (left, right) = clean.split_arms()?;
        fit(&left, DEFAULT_N_BASIS, Gains::default())?.save(dir.join("left.json"))?;
        fit(&right, DEFAULT_N_BASIS, Gains::default())?.save(dir.join("right.json"))?;
        let mut title = name.to_string();
        title[..1].make_ascii_uppercase();
        let meta = serde_json::json!({
            "name": title,
            "kind": "dynamic",
            "axis": axis,
            "d_max": REGISTRY_D_MAX,
            "limits": "../limits.json",
            "demonstration": "demo.ndjson",
        });
        write(&dir.join("meta.json"), serde_json::to_string_pretty(&meta).expect("json") + "\n")?;
    }
    let meta = serde_json::json!({
        "name": "QuasiStatic",
        "kind": "quasi_static",
        "d_max": REGISTRY_D_MAX,
        "limits": "../limits.json",
        "forward_distance": QUASI_FORWARD_DISTANCE,
        "duration": QUASI_DURATION,
    });
    write(
        &registry.join("quasi_static/meta.json"),
        serde_json::to_string_pretty(&meta).expect("json") + "\n",
    )
}
