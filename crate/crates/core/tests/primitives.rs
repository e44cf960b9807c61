mod common;

use std::fs;
use std::path::Path;

use common::workspace;
use predress::dmp::{Demonstration, DEFAULT_DT};
use predress::primitives::{
    load_primitive, rotation_axis_shares, Axis, IterationPlan, PrimitiveKind, PrimitiveName, Registry,
};
use predress::synth;

fn registry() -> Registry {
    Registry::load(workspace().join("registry")).unwrap()
}

#[test]
fn twist_declares_z() {
    let spec = load_primitive(PrimitiveName::Twist, workspace().join("registry")).unwrap();
    assert_eq!(spec.main_rotation_axis, Some(Axis::Z));
    let demo = Demonstration::load(workspace().join("registry/twist/demo.ndjson")).unwrap();
    let shares = rotation_axis_shares(&demo).unwrap();
    println!("twist shares {shares:?}");
    assert!(shares[2] >= 0.5);
}

#[test]
fn fling_and_shake_declare_y() {
    for name in [PrimitiveName::Fling, PrimitiveName::Shake] {
        let spec = load_primitive(name, workspace().join("registry")).unwrap();
        assert_eq!(spec.main_rotation_axis, Some(Axis::Y));
        assert_eq!(spec.kind, PrimitiveKind::Dynamic);
        assert!(spec.left_model.is_some() && spec.right_model.is_some());
    }
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dst = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dst);
        } else {
            fs::copy(entry.path(), dst).unwrap();
        }
    }
}

#[test]
fn roll_only_demo_fails_as_fling() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&workspace().join("registry"), dir.path());
    synth::roll_only_demo().save(dir.path().join("fling/demo.ndjson")).unwrap();
    let err = load_primitive(PrimitiveName::Fling, dir.path()).unwrap_err();
    println!("{err}");
    assert!(err.to_string().contains("axis") || err.to_string().contains("rotation"));
}

#[test]
fn quasi_static_has_no_models() {
    let spec = load_primitive(PrimitiveName::QuasiStatic, workspace().join("registry")).unwrap();
    assert_eq!(spec.kind, PrimitiveKind::QuasiStatic);
    assert!(spec.left_model.is_none() && spec.right_model.is_none());
    assert!(spec.quasi.is_some());
}

#[test]
fn axis_shares_ignore_time_scaling() {
    for demo in [synth::fling_demo(), synth::shake_demo(), synth::twist_demo()] {
        let base = rotation_axis_shares(&demo).unwrap();
        for factor in [0.5, 3.0] {
            let mut slow = demo.clone();
            slow.rate_hz /= factor;
            for s in &mut slow.samples {
                s.t *= factor;
            }
            let scaled = rotation_axis_shares(&slow).unwrap();
            for a in 0..3 {
                assert!((base[a] - scaled[a]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn compose_follows_ordering_rule() {
    let reg = registry();
    use PrimitiveName::*;
    assert_eq!(reg.compose(&[Twist]).unwrap().label, "Twist");
    assert_eq!(reg.compose(&[Fling, Shake]).unwrap().label, "Fling + Shake");
    assert!(reg.compose(&[QuasiStatic, Fling]).is_err());
    assert_eq!(IterationPlan::from_label("Shake + Quasi").unwrap().steps, vec![Shake, QuasiStatic]);
}

#[test]
fn every_registry_motion_respects_all_bounds() {
    let reg = registry();
    let quasi = reg.get(PrimitiveName::QuasiStatic).unwrap();
    for spec in reg.iter().filter(|s| s.kind == PrimitiveKind::Dynamic) {
        let traj = spec.pair_trajectory(DEFAULT_DT).unwrap();
        let follow = quasi.quasi_static_from(traj.last(), DEFAULT_DT).unwrap();
        for (t, lim) in [(&traj, &spec.limits), (&follow, &quasi.limits)] {
            let s = lim.safety_scale;
            for st in &t.states {
                assert!((st.left.p - st.right.p).norm() <= t.d_max + 1e-9);
                for arm in [&st.left, &st.right] {
                    for c in 0..3 {
                        assert!(arm.a[c].abs() <= s * lim.acc_max[c] + 1e-9);
                        assert!(arm.v[c].abs() <= s * lim.vel_max[c] + 1e-9);
                        assert!(arm.p[c] >= lim.pos_lo[c] - 1e-9 && arm.p[c] <= lim.pos_hi[c] + 1e-9);
                    }
                    assert!((arm.q.quaternion().norm() - 1.0).abs() <= 1e-9);
                }
            }
        }
        // quasi-static step starts where the primitive ended
        assert_eq!(follow.first().left.p, traj.last().left.p);
    }
}

#[test]
fn shipped_bundle_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    synth::write_bundle(dir.path()).unwrap();
    let mut compared = 0;
    let mut stack = vec![dir.path().to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir.path()).unwrap();
            let shipped = fs::read(workspace().join(rel)).unwrap_or_else(|_| panic!("{} not shipped", rel.display()));
            assert!(shipped == fs::read(&p).unwrap(), "{} differs from generator output", rel.display());
            compared += 1;
        }
    }
    assert!(compared >= 15, "{compared}");
}
