#![allow(dead_code)]

use std::path::PathBuf;

use predress::dmp::{Demonstration, KinematicLimits, Trajectory};

pub fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn range(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    hi - lo
}

/// Largest |second difference| / dt² per channel.
pub fn peak_fd_acceleration(demo: &Demonstration) -> Vec<f64> {
    let dt = 1.0 / demo.rate_hz;
    (0..demo.n_channels())
        .map(|c| {
            let y = demo.channel(c);
            y.windows(3).map(|w| ((w[2] - 2.0 * w[1] + w[0]) / (dt * dt)).abs()).fold(0.0, f64::max)
        })
        .collect()
}

/// Bound check written out directly, without the library's checker.
pub fn assert_within(traj: &Trajectory, lim: &KinematicLimits) {
    let s = lim.safety_scale;
    for (i, st) in traj.states.iter().enumerate() {
        for c in 0..st.y.len() {
            assert!(st.a[c].abs() <= s * lim.acc_max[c] + 1e-9, "acc at {i}/{c}: {}", st.a[c]);
            assert!(st.v[c].abs() <= s * lim.vel_max[c] + 1e-9, "vel at {i}/{c}: {}", st.v[c]);
            assert!(st.y[c] >= lim.pos_lo[c] - 1e-9 && st.y[c] <= lim.pos_hi[c] + 1e-9, "pos at {i}/{c}");
        }
    }
}
