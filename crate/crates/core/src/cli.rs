//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation or invariant failure,
//! 3 I/O or bridge failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bimanual::pair_rollout;
use crate::bridge::EstimatorSpec;
use crate::dmp::{fit, resample_and_filter, rollout, Demonstration, DmpModel, Gains, KinematicLimits, Layout, PreprocessSpec};
use crate::engine::{render_report, run_batch, BatchReport, ExecutionMode, Experiment, ExperimentConfig, ReportFormat};
use crate::error::Error;
use crate::primitives::Registry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "predress", version, about = "Bimanual movement primitives and pre-dressing episode simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resample, low-pass filter and mask a demonstration.
    Preprocess {
        #[arg(long)]
        demo: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500.0)]
        rate: f64,
        #[arg(long, default_value_t = 10.0)]
        cutoff: f64,
        /// Comma-separated channel labels to keep; the rest are pinned. Default: all.
        #[arg(long, value_delimiter = ',')]
        essential: Vec<String>,
    },
    /// Fit movement primitives. Bimanual demos write left.json and right.json
    /// into the --out directory; generic demos write one model file.
    Fit {
        #[arg(long)]
        demo: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = crate::dmp::DEFAULT_N_BASIS)]
        n_basis: usize,
    },
    /// Integrate one model, or a left/right pair, to a trajectory CSV.
    Rollout {
        /// One model, or two (left then right) for a coupled pair.
        #[arg(long, required = true, num_args = 1..=2)]
        model: Vec<PathBuf>,
        #[arg(long)]
        limits: Option<PathBuf>,
        /// Maximum inter-arm distance; required for a pair.
        #[arg(long)]
        d_max: Option<f64>,
        #[arg(long, default_value_t = crate::dmp::DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out every registered primitive and check all bounds.
    ValidateRegistry {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long, default_value_t = crate::dmp::DEFAULT_DT)]
        dt: f64,
    },
    /// Run a Monte-Carlo batch and write its report as JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// mock, bridge:<host:port> or bridge:stdio (PREDRESS_BRIDGE overrides).
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Run episodes on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Render a batch report.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Csv,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Estimator(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> crate::Result<()> {
    match cmd {
        Command::Preprocess { demo, out, rate, cutoff, essential } => {
            let d = Demonstration::load(&demo)?;
            let essential_axes = if essential.is_empty() {
                vec![true; d.n_channels()]
            } else {
                for e in &essential {
                    if !d.labels.contains(e) {
                        return Err(Error::Invalid(format!("--essential names unknown channel {e:?}")));
                    }
                }
                d.labels.iter().map(|l| essential.contains(l)).collect()
            };
            let spec = PreprocessSpec { target_rate_hz: rate, cutoff_hz: cutoff, essential_axes };
            resample_and_filter(&d, &spec)?.save(&out)
        }
        Command::Fit { demo, out, n_basis } => {
            let d = Demonstration::load(&demo)?;
            match d.layout {
                Layout::Bimanual => {
                    let (l, r) = d.split_arms()?;
                    let (ml, mr) = (fit(&l, n_basis, Gains::default())?, fit(&r, n_basis, Gains::default())?);
                    fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
                    ml.save(out.join("left.json"))?;
                    mr.save(out.join("right.json"))
                }
                Layout::Generic => fit(&d, n_basis, Gains::default())?.save(&out),
            }
        }
        Command::Rollout { model, limits, d_max, dt, out } => {
            let limits = limits.map(KinematicLimits::load).transpose()?;
            let models = model.iter().map(DmpModel::load).collect::<crate::Result<Vec<_>>>()?;
            if let [m] = models.as_slice() {
                if d_max.is_some() {
                    return Err(Error::Invalid("--d-max applies to a pair of models".into()));
                }
                let traj = rollout(m, &m.y0, &m.g, dt, limits.as_ref())?;
                if let Some(l) = &limits {
                    traj.check_limits(l)?;
                }
                write_file(&out, |w| traj.write_csv(&m.channel_labels, w))
            } else {
                let d_max = d_max.ok_or_else(|| Error::Invalid("a pair rollout needs --d-max".into()))?;
                let limits = limits.ok_or_else(|| Error::Invalid("a pair rollout needs --limits".into()))?;
                let traj = pair_rollout(&models[0], &models[1], &limits, d_max, dt)?;
                traj.check(&limits)?;
                write_file(&out, |w| traj.write_csv(w))
            }
        }
        Command::ValidateRegistry { registry, dt } => {
            let reg = Registry::load(&registry)?;
            for c in reg.validate(dt)? {
                println!(
                    "ok {:<16} samples {:>6}  duration {:>7.3} s  max distance {:.4}  clamped steps {}",
                    c.motion, c.samples, c.duration, c.max_distance, c.clamped_steps
                );
            }
            Ok(())
        }
        Command::Simulate { config, n, seed, estimator, out, sequential } => {
            let cfg = ExperimentConfig::load(&config)?;
            let est = EstimatorSpec::resolve(estimator.as_deref().unwrap_or(&cfg.estimator))?;
            let exp = Experiment::from_config(&cfg, est)?;
            let mode = if sequential { ExecutionMode::Sequential } else { ExecutionMode::Parallel };
            let report = run_batch(&exp, n.unwrap_or(cfg.n_episodes), seed.unwrap_or(cfg.seed), mode)?;
            let text = report.to_json();
            write_file(&out, |w| w.write_all(text.as_bytes()))
        }
        Command::Report { report, format, out } => {
            let rep = BatchReport::load(&report)?;
            if rep.rows.is_empty() {
                return Err(Error::Invalid("report has no rows".into()));
            }
            let fmt = match format {
                Format::Text => ReportFormat::Text,
                Format::Csv => ReportFormat::Csv,
            };
            let text = render_report(&rep, fmt);
            match out {
                Some(p) => write_file(&p, |w| w.write_all(text.as_bytes())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> crate::Result<()> {
    let io = |e| Error::Io { path: path.to_path_buf(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w).and_then(|_| w.flush()).map_err(io)
}
