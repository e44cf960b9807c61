//! Pre-dressing episodes, Monte-Carlo batches and result tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bimanual::PairTrajectory;
use crate::bridge::EstimatorSpec;
use crate::dmp::DEFAULT_DT;
use crate::error::{Error, Result};
use crate::garment::{
    calibrate, load_calibration, sample_outcome, Condition, EstimateRequest, ForcedDraw, GarmentCategory,
    GarmentObservation, ResponseModel, StateEstimator, UnitSource,
};
use crate::primitives::{IterationPlan, PrimitiveKind, PrimitiveName, Registry};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;
/// Consecutive non-improving iterations tolerated after the first partial opening.
pub const NO_IMPROVEMENT_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ReachedOpened,
    MaxIterations,
    NoImprovement,
    EstimatorError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub steps: Vec<String>,
    pub observation: GarmentObservation,
    /// World clock after the iteration's motions, in seconds.
    pub world_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub condition: Condition,
    pub plan: IterationPlan,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub first_partly_iteration: Option<usize>,
    pub reached_opened: bool,
    pub diagnostic: Option<String>,
}

impl EpisodeTrace {
    pub fn final_observation(&self) -> Option<&GarmentObservation> {
        self.iterations.last().map(|r| &r.observation)
    }
}

/// Validated trajectories for each step of a plan.
#[derive(Debug, Clone)]
pub struct PlanExecutor {
    steps: Vec<(String, PairTrajectory)>,
}

impl PlanExecutor {
    pub fn prepare(registry: &Registry, plan: &IterationPlan, dt: f64) -> Result<Self> {
        Self::prepare_cached(registry, plan, dt, &mut HashMap::new())
    }

    fn prepare_cached(
        registry: &Registry,
        plan: &IterationPlan,
        dt: f64,
        cache: &mut HashMap<PrimitiveName, PairTrajectory>,
    ) -> Result<Self> {
        let mut steps: Vec<(String, PairTrajectory)> = Vec::with_capacity(plan.steps.len());
        for &name in &plan.steps {
            let spec = registry.get(name)?;
            let traj = match spec.kind {
                PrimitiveKind::Dynamic => match cache.get(&name) {
                    Some(t) => t.clone(),
                    None => {
                        let t = spec.pair_trajectory(dt)?;
                        t.check(&spec.limits).map_err(|e| Error::LimitViolation(format!("{name}: {e}")))?;
                        cache.insert(name, t.clone());
                        t
                    }
                },
                PrimitiveKind::QuasiStatic => {
                    let (_, prev) = steps
                        .last()
                        .ok_or_else(|| Error::invalid("the quasi-static motion needs a preceding primitive"))?;
                    let t = spec.quasi_static_from(prev.last(), dt)?;
                    t.check(&spec.limits)
                        .map_err(|e| Error::LimitViolation(format!("{} + {name}: {e}", plan.label)))?;
                    t
                }
            };
            steps.push((name.label().to_string(), traj));
        }
        Ok(PlanExecutor { steps })
    }

    pub fn step_labels(&self) -> Vec<String> {
        self.steps.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &PairTrajectory> {
        self.steps.iter().map(|(_, t)| t)
    }
}

/// Stand-in for the robot and garment: executing a motion advances the clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedWorld {
    pub clock: f64,
}

impl SimulatedWorld {
    pub fn execute(&mut self, traj: &PairTrajectory) {
        self.clock += traj.duration();
    }
}

/// One episode: the outcome is drawn once, then the plan is repeated until
/// the garment opens, stops improving, or the iteration budget runs out.
pub fn run_episode(
    plan: &IterationPlan,
    condition: Condition,
    model: &ResponseModel,
    estimator: &mut dyn StateEstimator,
    executor: &PlanExecutor,
    max_iterations: usize,
    rng: &mut impl UnitSource,
) -> Result<EpisodeTrace> {
    if max_iterations == 0 {
        return Err(Error::invalid("max_iterations must be at least 1"));
    }
    let outcome = sample_outcome(model, condition, plan, rng)?;
    let mut world = SimulatedWorld::default();
    let mut trace = EpisodeTrace {
        condition,
        plan: plan.clone(),
        iterations: Vec::new(),
        stop_reason: StopReason::MaxIterations,
        first_partly_iteration: None,
        reached_opened: false,
        diagnostic: None,
    };
    let mut best = GarmentCategory::Closed;
    let mut stagnant = 0;
    for i in 1..=max_iterations {
        for traj in executor.trajectories() {
            world.execute(traj);
        }
        let truth = if i < outcome.iterations_to_partly { GarmentCategory::Closed } else { outcome.terminal };
        let request = EstimateRequest { truth, condition, plan: &plan.label, iteration: i };
        let estimate = match estimator.estimate(&request) {
            Ok(e) => e,
            Err(e) => {
                trace.stop_reason = StopReason::EstimatorError;
                trace.diagnostic = Some(format!("iteration {i}: {e}"));
                return Ok(trace);
            }
        };
        let opened = truth == GarmentCategory::Opened;
        let arms_forward = truth != GarmentCategory::Closed && (outcome.arms_forward || opened);
        trace.iterations.push(IterationRecord {
            steps: executor.step_labels(),
            observation: GarmentObservation {
                category: estimate.category,
                confidence: estimate.confidence,
                arms_forward,
                sleeves_visible: !opened,
            },
            world_time: world.clock,
        });

        let seen = estimate.category;
        if seen == GarmentCategory::Opened {
            trace.reached_opened = true;
            trace.stop_reason = StopReason::ReachedOpened;
            trace.first_partly_iteration.get_or_insert(i);
            return Ok(trace);
        }
        if trace.first_partly_iteration.is_none() {
            if seen >= GarmentCategory::PartlyOpened {
                trace.first_partly_iteration = Some(i);
                best = seen;
            }
        } else if seen > best {
            best = seen;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= NO_IMPROVEMENT_WINDOW {
                trace.stop_reason = StopReason::NoImprovement;
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    /// Independent pseudo-random draws per episode.
    #[default]
    Random,
    /// Episode `j` of `n` uses the fixed draw `(j + 0.5) / n`, which replays
    /// the calibration rows exactly when `n` matches the trial count.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub conditions: Vec<Condition>,
    pub plans: Vec<String>,
    pub n_episodes: usize,
    pub seed: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub registry: PathBuf,
    pub calibration: Vec<PathBuf>,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    #[serde(default)]
    pub draws: DrawMode,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_estimator() -> String {
    "mock".into()
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl ExperimentConfig {
    /// Reads a config; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.registry = base.join(&cfg.registry);
        for p in &mut cfg.calibration {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }
}

/// A config with its tables, registry and trajectories loaded.
pub struct Experiment {
    pub pairs: Vec<(Condition, IterationPlan)>,
    pub model: ResponseModel,
    pub executors: HashMap<String, PlanExecutor>,
    pub estimator: EstimatorSpec,
    pub max_iterations: usize,
    pub draws: DrawMode,
}

impl Experiment {
    pub fn from_config(cfg: &ExperimentConfig, estimator: EstimatorSpec) -> Result<Self> {
        let mut rows = Vec::new();
        for p in &cfg.calibration {
            rows.extend(load_calibration(p)?);
        }
        let model = calibrate(&rows)?;
        let registry = Registry::load(&cfg.registry)?;
        Self::new(cfg, model, &registry, estimator)
    }

    pub fn new(
        cfg: &ExperimentConfig,
        model: ResponseModel,
        registry: &Registry,
        estimator: EstimatorSpec,
    ) -> Result<Self> {
        if cfg.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if cfg.conditions.is_empty() || cfg.plans.is_empty() {
            return Err(Error::invalid("config needs at least one condition and one plan"));
        }
        let mut cache = HashMap::new();
        let mut executors = HashMap::new();
        let mut pairs = Vec::new();
        for &c in &cfg.conditions {
            for label in &cfg.plans {
                let plan = IterationPlan::from_label(label)?;
                if !model.contains(c, &plan.label) {
                    return Err(Error::invalid(format!("no calibration for ({c}, {})", plan.label)));
                }
                if !executors.contains_key(&plan.label) {
                    let ex = PlanExecutor::prepare_cached(registry, &plan, cfg.dt, &mut cache)?;
                    executors.insert(plan.label.clone(), ex);
                }
                pairs.push((c, plan));
            }
        }
        Ok(Experiment {
            pairs,
            model,
            executors,
            estimator,
            max_iterations: cfg.max_iterations,
            draws: cfg.draws,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: Condition,
    pub plan: String,
    pub opened_pct: f64,
    pub partly_pct: f64,
    pub arms_fwd_pct: f64,
    pub mean_iterations: f64,
    pub n_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl BatchReport {
    pub fn row(&self, condition: Condition, plan: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.condition == condition && r.plan == plan)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Rng for one episode: the seed picks the key, (pair, episode) the stream.
pub fn episode_rng(seed: u64, pair: usize, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((pair as u64) << 32) | episode as u64);
    rng
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    opened: usize,
    partly: usize,
    arms: usize,
    successes: usize,
    partly_iter_sum: usize,
}

fn summarize(trace: &EpisodeTrace) -> Tally {
    let last = trace.final_observation();
    Tally {
        opened: trace.reached_opened as usize,
        partly: last.is_some_and(|o| o.category == GarmentCategory::PartlyOpened) as usize,
        arms: last.is_some_and(|o| o.arms_forward) as usize,
        successes: trace.first_partly_iteration.is_some() as usize,
        partly_iter_sum: trace.first_partly_iteration.unwrap_or(0),
    }
}

/// Runs `n_episodes` per (condition, plan) pair.
///
/// Each episode owns its rng, so results do not depend on scheduling. In
/// parallel mode every worker opens its own estimator connection.
pub fn run_batch(exp: &Experiment, n_episodes: usize, seed: u64, mode: ExecutionMode) -> Result<BatchReport> {
    if n_episodes == 0 {
        return Err(Error::invalid("n_episodes must be at least 1"));
    }
    let total = exp.pairs.len() * n_episodes;
    let job = |est: &mut dyn StateEstimator, idx: usize| -> Result<Tally> {
        let (p, e) = (idx / n_episodes, idx % n_episodes);
        let (condition, plan) = &exp.pairs[p];
        let executor = &exp.executors[&plan.label];
        let trace = match exp.draws {
            DrawMode::Random => {
                let mut rng = episode_rng(seed, p, e);
                run_episode(plan, *condition, &exp.model, est, executor, exp.max_iterations, &mut rng)
            }
            DrawMode::Stratified => {
                let mut draw = ForcedDraw((e as f64 + 0.5) / n_episodes as f64);
                run_episode(plan, *condition, &exp.model, est, executor, exp.max_iterations, &mut draw)
            }
        }
        .map_err(|err| Error::invalid(format!("({condition}, {}) episode {e}: {err}", plan.label)))?;
        if trace.stop_reason == StopReason::EstimatorError {
            return Err(Error::Estimator(format!(
                "({condition}, {}) episode {e}: {}",
                plan.label,
                trace.diagnostic.unwrap_or_default()
            )));
        }
        Ok(summarize(&trace))
    };

    let tallies: Vec<Tally> = match mode {
        ExecutionMode::Sequential => {
            let mut est = exp.estimator.connect()?;
            (0..total).map(|i| job(est.as_mut(), i)).collect::<Result<_>>()?
        }
        ExecutionMode::Parallel => {
            // contiguous chunks, one estimator connection each
            let workers = rayon::current_num_threads().clamp(1, total);
            let chunk = total.div_ceil(workers);
            let parts: Vec<Vec<Tally>> = (0..workers)
                .into_par_iter()
                .map(|w| {
                    let mut est = exp.estimator.connect()?;
                    (w * chunk..((w + 1) * chunk).min(total)).map(|i| job(est.as_mut(), i)).collect()
                })
                .collect::<Result<_>>()?;
            parts.into_iter().flatten().collect()
        }
    };

    let mut rows: Vec<ReportRow> = exp
        .pairs
        .iter()
        .zip(tallies.chunks(n_episodes))
        .map(|((condition, plan), chunk)| {
            let sum = chunk.iter().fold(
                Tally { opened: 0, partly: 0, arms: 0, successes: 0, partly_iter_sum: 0 },
                |a, t| Tally {
                    opened: a.opened + t.opened,
                    partly: a.partly + t.partly,
                    arms: a.arms + t.arms,
                    successes: a.successes + t.successes,
                    partly_iter_sum: a.partly_iter_sum + t.partly_iter_sum,
                },
            );
            let pct = |k: usize| 100.0 * k as f64 / n_episodes as f64;
            ReportRow {
                condition: *condition,
                plan: plan.label.clone(),
                opened_pct: pct(sum.opened),
                partly_pct: pct(sum.partly),
                arms_fwd_pct: pct(sum.arms),
                mean_iterations: if sum.successes == 0 {
                    0.0
                } else {
                    sum.partly_iter_sum as f64 / sum.successes as f64
                },
                n_episodes,
            }
        })
        .collect();
    sort_rows(&mut rows);
    Ok(BatchReport { seed, rows })
}

const PLAN_ORDER: [&str; 10] = [
    "Fling",
    "Shake",
    "Twist",
    "Fling + Shake",
    "Fling + Twist",
    "Twist + Fling",
    "Twist + Shake",
    "Fling + Quasi",
    "Shake + Quasi",
    "Twist + Quasi",
];

/// Table order: conditions first, then plans as they appear in the tables;
/// other plans keep their relative order at the end.
pub fn sort_rows(rows: &mut [ReportRow]) {
    let rank = |p: &str| PLAN_ORDER.iter().position(|&q| q == p).unwrap_or(PLAN_ORDER.len());
    rows.sort_by_key(|r| (r.condition, rank(&r.plan)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

pub const REPORT_CSV_HEADER: &str = "condition,plan,opened_pct,partly_pct,arms_fwd_pct,mean_iterations,n_episodes,seed";

pub fn render_report(report: &BatchReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(REPORT_CSV_HEADER);
            out.push('\n');
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{:.2},{:.2},{:.2},{:.2},{},{}",
                    r.condition, r.plan, r.opened_pct, r.partly_pct, r.arms_fwd_pct, r.mean_iterations,
                    r.n_episodes, report.seed
                );
            }
        }
        ReportFormat::Text => {
            let plan_w = report.rows.iter().map(|r| r.plan.len()).max().unwrap_or(4).max(4);
            let _ = writeln!(
                out,
                "{:<10} | {:<plan_w$} | {:>6} | {:>6} | {:>9} | {:>5} | {:>8}",
                "Condition", "Plan", "Opened", "Partly", "Arms Fwd.", "It.", "Episodes"
            );
            let _ = writeln!(out, "{}", "-".repeat(10 + plan_w + 6 + 6 + 9 + 5 + 8 + 18));
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{:<10} | {:<plan_w$} | {:>6.2} | {:>6.2} | {:>9.2} | {:>5.2} | {:>8}",
                    r.condition.name(),
                    r.plan,
                    r.opened_pct,
                    r.partly_pct,
                    r.arms_fwd_pct,
                    r.mean_iterations,
                    r.n_episodes
                );
            }
            let _ = writeln!(out, "seed {}", report.seed);
        }
    }
    out
}

#[derive(Deserialize)]
struct CsvRow {
    condition: String,
    plan: String,
    opened_pct: f64,
    partly_pct: f64,
    arms_fwd_pct: f64,
    mean_iterations: f64,
    n_episodes: usize,
    seed: u64,
}

/// Reads the CSV rendering back; values carry its two-decimal precision.
pub fn parse_report_csv(text: &str, origin: &Path) -> Result<BatchReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(origin, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != REPORT_CSV_HEADER {
        return Err(Error::parse(origin, format!("expected header {REPORT_CSV_HEADER}")));
    }
    let mut seed = None;
    let mut out = Vec::new();
    for rec in reader.deserialize::<CsvRow>() {
        let r = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
        if *seed.get_or_insert(r.seed) != r.seed {
            return Err(Error::parse(origin, "rows disagree on the seed"));
        }
        out.push(ReportRow {
            condition: r.condition.parse().map_err(|e: Error| Error::parse(origin, e.to_string()))?,
            plan: r.plan,
            opened_pct: r.opened_pct,
            partly_pct: r.partly_pct,
            arms_fwd_pct: r.arms_fwd_pct,
            mean_iterations: r.mean_iterations,
            n_episodes: r.n_episodes,
        });
    }
    let seed = seed.ok_or_else(|| Error::parse(origin, "report has no rows"))?;
    Ok(BatchReport { seed, rows: out })
}

/// Rounds every statistic to the two decimals the CSV carries.
pub fn round_report(report: &BatchReport) -> BatchReport {
    let r2 = |x: f64| format!("{x:.2}").parse::<f64>().expect("formatted float parses");
    BatchReport {
        seed: report.seed,
        rows: report
            .rows
            .iter()
            .map(|r| ReportRow {
                opened_pct: r2(r.opened_pct),
                partly_pct: r2(r.partly_pct),
                arms_fwd_pct: r2(r.arms_fwd_pct),
                mean_iterations: r2(r.mean_iterations),
                ..r.clone()
            })
            .collect(),
    }
}

/// The report's CSV with the calibration header, for feeding back into
/// [`calibrate`].
pub fn report_as_calibration_csv(report: &BatchReport) -> String {
    let mut out = String::from(crate::garment::CALIBRATION_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2},{:.2},{:.2}",
            r.condition, r.plan, r.opened_pct, r.partly_pct, r.arms_fwd_pct, r.mean_iterations
        );
    }
    out
}
