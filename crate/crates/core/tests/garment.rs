mod common;

use std::fs;

use common::workspace;
use predress::garment::{
    calibrate, load_calibration, read_calibration_csv, sample_outcome, Condition, ForcedDraw, GarmentCategory,
    ResponseModel, UnitSource,
};
use predress::primitives::IterationPlan;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shipped_model() -> ResponseModel {
    let mut rows = load_calibration(workspace().join("tables/table1.csv")).unwrap();
    rows.extend(load_calibration(workspace().join("tables/table2.csv")).unwrap());
    calibrate(&rows).unwrap()
}

#[test]
fn shipped_tables_render_back_verbatim() {
    for name in ["table1.csv", "table2.csv"] {
        let path = workspace().join("tables").join(name);
        let text = fs::read_to_string(&path).unwrap();
        let model = calibrate(&read_calibration_csv(&text, &path).unwrap()).unwrap();
        assert_eq!(model.render_csv(), text);
    }
}

#[test]
fn fractional_mean_over_many_seeds() {
    let model = shipped_model();
    let plan = IterationPlan::from_label("Fling + Quasi").unwrap();
    let n = 100_000;
    let total: usize = (0..n)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_outcome(&model, Condition::Unpacked, &plan, &mut rng).unwrap().iterations_to_partly
        })
        .sum();
    let mean = total as f64 / n as f64;
    println!("mean {mean}");
    assert!((1.45..=1.55).contains(&mean));
}

#[test]
fn empirical_rates_match_every_entry() {
    let model = shipped_model();
    let n = 100_000;
    for (condition, label, e) in model.iter() {
        let plan = IterationPlan::from_label(label).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut opened, mut partly, mut arms, mut iters) = (0usize, 0usize, 0usize, 0usize);
        for _ in 0..n {
            let o = sample_outcome(&model, condition, &plan, &mut rng).unwrap();
            opened += (o.terminal == GarmentCategory::Opened) as usize;
            partly += (o.terminal == GarmentCategory::PartlyOpened) as usize;
            arms += o.arms_forward as usize;
            iters += o.iterations_to_partly;
        }
        let f = |k: usize| k as f64 / n as f64;
        assert!((f(opened) - e.p_opened).abs() <= 0.01, "{condition} {label}");
        assert!((f(partly) - e.p_partly).abs() <= 0.01, "{condition} {label}");
        assert!((f(arms) - e.p_arms_forward).abs() <= 0.01, "{condition} {label}");
        assert!((f(iters) - e.mean_iterations).abs() <= 0.05, "{condition} {label}");
    }
}

#[test]
fn same_seed_same_sequence() {
    let model = shipped_model();
    let plan = IterationPlan::from_label("Fling").unwrap();
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..500).map(|_| sample_outcome(&model, Condition::PrevOpened, &plan, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

struct Recorder(Vec<f64>, usize);

impl UnitSource for Recorder {
    fn next_unit(&mut self) -> f64 {
        self.1 += 1;
        self.0[self.1 - 1]
    }
}

#[test]
fn draws_are_consumed_in_fixed_order() {
    let model = shipped_model();
    let plan = IterationPlan::from_label("Fling").unwrap();
    // category first: 0.9 lands past p_opened = 1/3
    let mut src = Recorder(vec![0.9, 0.1, 0.1], 0);
    let o = sample_outcome(&model, Condition::PrevOpened, &plan, &mut src).unwrap();
    assert_eq!(src.1, 3);
    assert_eq!(o.terminal, GarmentCategory::PartlyOpened);
    assert!(o.arms_forward);
    // the iteration draw decides between floor and ceil of 1.5
    let fq = IterationPlan::from_label("Fling + Quasi").unwrap();
    for (u, want) in [(0.25, 2), (0.75, 1)] {
        let o = sample_outcome(&model, Condition::Unpacked, &fq, &mut ForcedDraw(u)).unwrap();
        assert_eq!(o.iterations_to_partly, want);
    }
}

#[test]
fn unknown_entry_is_an_error() {
    let model = shipped_model();
    let plan = IterationPlan::from_label("Shake + Quasi").unwrap();
    assert!(sample_outcome(&model, Condition::PrevOpened, &plan, &mut ForcedDraw(0.5)).is_err());
}
