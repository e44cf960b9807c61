//! Garment state vocabulary and the stochastic response model.
//!
//! The model stores, per (condition, plan), the probability of each terminal
//! state, of the sleeves ending up forward, and the mean iteration at which
//! the terminal state is first observed. Sampling draws these independently.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::IterationPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarmentCategory {
    Closed,
    PartlyOpened,
    Opened,
}

impl GarmentCategory {
    pub fn wire_name(self) -> &'static str {
        match self {
            GarmentCategory::Closed => "closed",
            GarmentCategory::PartlyOpened => "partly_opened",
            GarmentCategory::Opened => "opened",
        }
    }
}

impl FromStr for GarmentCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(GarmentCategory::Closed),
            "partly_opened" => Ok(GarmentCategory::PartlyOpened),
            "opened" => Ok(GarmentCategory::Opened),
            other => Err(Error::invalid(format!("unknown garment category {other:?}"))),
        }
    }
}

impl fmt::Display for GarmentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarmentObservation {
    pub category: GarmentCategory,
    pub confidence: f64,
    pub arms_forward: bool,
    pub sleeves_visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Gown opened before and refolded.
    PrevOpened,
    /// Gown straight out of its sealed bag.
    Unpacked,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::PrevOpened => "PrevOpened",
            Condition::Unpacked => "Unpacked",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "PrevOpened" | "prev_opened" | "previously_opened" => Ok(Condition::PrevOpened),
            "Unpacked" | "unpacked" => Ok(Condition::Unpacked),
            other => Err(Error::invalid(format!("unknown condition {other:?}"))),
        }
    }
}

/// One line of a calibration table; percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub condition: String,
    pub label: String,
    pub opened_pct: f64,
    pub partly_pct: f64,
    pub arms_fwd_pct: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseEntry {
    pub p_opened: f64,
    pub p_partly: f64,
    pub p_arms_forward: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseModel {
    keys: Vec<(Condition, String)>,
    entries: HashMap<(Condition, String), ResponseEntry>,
}

impl ResponseModel {
    pub fn get(&self, condition: Condition, label: &str) -> Result<&ResponseEntry> {
        self.entries
            .get(&(condition, label.to_string()))
            .ok_or_else(|| Error::invalid(format!("no calibration for ({condition}, {label})")))
    }

    pub fn contains(&self, condition: Condition, label: &str) -> bool {
        self.entries.contains_key(&(condition, label.to_string()))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Entries in calibration order.
    pub fn iter(&self) -> impl Iterator<Item = (Condition, &str, &ResponseEntry)> {
        self.keys.iter().map(|k| (k.0, k.1.as_str(), &self.entries[k]))
    }

    /// Table rows in calibration order, two-decimal percentages.
    pub fn render_csv(&self) -> String {
        let mut out = String::from(CALIBRATION_HEADER);
        out.push('\n');
        for (c, label, e) in self.iter() {
            out.push_str(&format!(
                "{c},{label},{:.2},{:.2},{:.2},{:.2}\n",
                100.0 * e.p_opened,
                100.0 * e.p_partly,
                100.0 * e.p_arms_forward,
                e.mean_iterations
            ));
        }
        out
    }
}

pub const CALIBRATION_HEADER: &str = "condition,label,opened_pct,partly_pct,arms_fwd_pct,mean_iterations";

pub fn calibrate(rows: &[CalibrationRow]) -> Result<ResponseModel> {
    let mut keys = Vec::with_capacity(rows.len());
    let mut entries = HashMap::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let at = |msg: String| Error::invalid(format!("calibration row {}: {msg}", i + 1));
        let condition: Condition = row.condition.parse().map_err(|e: Error| at(e.to_string()))?;
        let label = IterationPlan::from_label(&row.label).map_err(|e| at(e.to_string()))?.label;
        for (name, v) in [
            ("opened_pct", row.opened_pct),
            ("partly_pct", row.partly_pct),
            ("arms_fwd_pct", row.arms_fwd_pct),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(at(format!("{name} = {v} outside [0, 100]")));
            }
        }
        if row.opened_pct + row.partly_pct > 100.0 + 1e-9 {
            return Err(at("opened_pct + partly_pct exceeds 100".into()));
        }
        if !(row.mean_iterations >= 1.0 && row.mean_iterations.is_finite()) {
            return Err(at(format!("mean_iterations = {} must be at least 1", row.mean_iterations)));
        }
        let key = (condition, label);
        if entries.contains_key(&key) {
            return Err(at(format!("duplicate entry ({}, {})", key.0, key.1)));
        }
        entries.insert(
            key.clone(),
            ResponseEntry {
                p_opened: row.opened_pct / 100.0,
                p_partly: row.partly_pct / 100.0,
                p_arms_forward: row.arms_fwd_pct / 100.0,
                mean_iterations: row.mean_iterations,
            },
        );
        keys.push(key);
    }
    Ok(ResponseModel { keys, entries })
}

pub fn read_calibration_csv(text: &str, origin: &Path) -> Result<Vec<CalibrationRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(origin, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != CALIBRATION_HEADER {
        return Err(Error::parse(origin, format!("expected header {CALIBRATION_HEADER}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::parse(origin, e.to_string())))
        .collect()
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Vec<CalibrationRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_calibration_csv(&text, path)
}

/// Source of uniform draws in `[0, 1)`.
pub trait UnitSource {
    fn next_unit(&mut self) -> f64;
}

impl<R: rand::RngCore> UnitSource for R {
    fn next_unit(&mut self) -> f64 {
        rand::Rng::gen::<f64>(self)
    }
}

/// Returns the same value for every draw; used for stratified replays.
#[derive(Debug, Clone, Copy)]
pub struct ForcedDraw(pub f64);

impl UnitSource for ForcedDraw {
    fn next_unit(&mut self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub terminal: GarmentCategory,
    pub arms_forward: bool,
    pub iterations_to_partly: usize,
}

/// Draws one episode outcome.
///
/// Exactly three draws are consumed, always in this order: terminal category,
/// arms-forward flag, iteration count. A fractional mean `m` becomes
/// `⌈m⌉` with probability `m − ⌊m⌋` and `⌊m⌋` otherwise.
pub fn sample_outcome(
    model: &ResponseModel,
    condition: Condition,
    plan: &IterationPlan,
    rng: &mut impl UnitSource,
) -> Result<Outcome> {
    let e = model.get(condition, &plan.label)?;
    let u = rng.next_unit();
    let terminal = if u < e.p_opened {
        GarmentCategory::Opened
    } else if u < e.p_opened + e.p_partly {
        GarmentCategory::PartlyOpened
    } else {
        GarmentCategory::Closed
    };
    let arms_forward = rng.next_unit() < e.p_arms_forward;
    let floor = e.mean_iterations.floor();
    let frac = e.mean_iterations - floor;
    let u = rng.next_unit();
    let iterations = if frac > 0.0 && u < frac { floor + 1.0 } else { floor };
    Ok(Outcome { terminal, arms_forward, iterations_to_partly: iterations as usize })
}

/// What the estimator is shown for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest<'a> {
    /// State of the simulated garment.
    pub truth: GarmentCategory,
    pub condition: Condition,
    pub plan: &'a str,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub category: GarmentCategory,
    pub confidence: f64,
}

impl Estimate {
    pub fn new(category: GarmentCategory, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Estimator(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Estimate { category, confidence })
    }
}

pub trait StateEstimator {
    fn estimate(&mut self, request: &EstimateRequest<'_>) -> Result<Estimate>;
}

/// Reports the simulated ground truth with full confidence.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockEstimator;

impl StateEstimator for MockEstimator {
    fn estimate(&mut self, request: &EstimateRequest<'_>) -> Result<Estimate> {
        Ok(Estimate { category: request.truth, confidence: 1.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(c: &str, l: &str, o: f64, p: f64, a: f64, it: f64) -> CalibrationRow {
        CalibrationRow {
            condition: c.into(),
            label: l.into(),
            opened_pct: o,
            partly_pct: p,
            arms_fwd_pct: a,
            mean_iterations: it,
        }
    }

    #[test]
    fn calibrate_parses_percentages() {
        let m = calibrate(&[
            row("PrevOpened", "Twist", 100.0, 0.0, 100.0, 1.0),
            row("Unpacked", "Fling", 0.0, 100.0, 0.0, 4.0),
            row("Unpacked", "Fling + Quasi", 0.0, 100.0, 100.0, 1.5),
        ])
        .unwrap();
        let e = m.get(Condition::PrevOpened, "Twist").unwrap();
        assert_eq!((e.p_opened, e.p_partly, e.p_arms_forward, e.mean_iterations), (1.0, 0.0, 1.0, 1.0));
        let e = m.get(Condition::Unpacked, "Fling").unwrap();
        assert_eq!((e.p_opened, e.p_partly, e.p_arms_forward, e.mean_iterations), (0.0, 1.0, 0.0, 4.0));
        let e = m.get(Condition::Unpacked, "Fling + Quasi").unwrap();
        assert_eq!((e.p_opened, e.p_partly, e.p_arms_forward, e.mean_iterations), (0.0, 1.0, 1.0, 1.5));
    }

    #[test]
    fn calibrate_rejects_duplicates_and_ranges() {
        let r = row("Unpacked", "Fling", 0.0, 100.0, 0.0, 4.0);
        assert!(calibrate(&[r.clone(), r.clone()]).is_err());
        assert!(calibrate(&[row("Unpacked", "Fling", 0.0, 100.5, 0.0, 4.0)]).is_err());
        assert!(calibrate(&[row("Unpacked", "Fling", -1.0, 10.0, 0.0, 4.0)]).is_err());
        assert!(calibrate(&[row("Unpacked", "Fling", 0.0, 10.0, 0.0, 0.5)]).is_err());
        assert!(calibrate(&[row("Unpacked", "Quasi + Fling", 0.0, 10.0, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn deterministic_rows_ignore_seed() {
        let m = calibrate(&[
            row("PrevOpened", "Twist", 100.0, 0.0, 100.0, 1.0),
            row("Unpacked", "Shake", 0.0, 100.0, 0.0, 1.0),
        ])
        .unwrap();
        let twist = IterationPlan::from_label("Twist").unwrap();
        let shake = IterationPlan::from_label("Shake").unwrap();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let o = sample_outcome(&m, Condition::PrevOpened, &twist, &mut rng).unwrap();
            assert_eq!(o, Outcome { terminal: GarmentCategory::Opened, arms_forward: true, iterations_to_partly: 1 });
            let o = sample_outcome(&m, Condition::Unpacked, &shake, &mut rng).unwrap();
            assert_eq!(
                o,
                Outcome { terminal: GarmentCategory::PartlyOpened, arms_forward: false, iterations_to_partly: 1 }
            );
        }
        assert!(sample_outcome(&m, Condition::Unpacked, &twist, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn categories_are_ordered() {
        assert!(GarmentCategory::Closed < GarmentCategory::PartlyOpened);
        assert!(GarmentCategory::PartlyOpened < GarmentCategory::Opened);
        for c in [GarmentCategory::Closed, GarmentCategory::PartlyOpened, GarmentCategory::Opened] {
            assert_eq!(c.wire_name().parse::<GarmentCategory>().unwrap(), c);
        }
    }

    #[test]
    fn mock_reports_truth() {
        let req = EstimateRequest { truth: GarmentCategory::Opened, condition: Condition::Unpacked, plan: "Twist", iteration: 1 };
        assert_eq!(
            MockEstimator.estimate(&req).unwrap(),
            Estimate { category: GarmentCategory::Opened, confidence: 1.0 }
        );
    }
}
