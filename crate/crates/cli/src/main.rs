//! `mgd`: command-line front end for the low-rank Gaussian depth toolkit.
//!
//! Exit codes: 0 success, 2 malformed input or arguments, 3 dimension
//! mismatch, 4 numerical failure.

mod commands;
mod parallel;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mgd_core::{Boundary, Error};

#[derive(Debug, Parser)]
#[command(
    name = "mgd",
    version,
    about = "Low-rank multivariate Gaussian depth distributions"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Isotropic noise std-dev σ.
    #[arg(long, global = true, default_value_t = mgd_core::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Rank budget M. When given, factor files must have exactly this many
    /// channels; otherwise the rank is read from the file.
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    #[arg(long, global = true, default_value_t = mgd_core::DEFAULT_SEED)]
    pub seed: u64,
    /// Depth cap in meters for metric evaluation.
    #[arg(long, global = true, default_value_t = mgd_core::DEFAULT_CAP)]
    pub cap: f64,
    /// Boundary convention of the gradient loss.
    #[arg(long, global = true, value_enum, default_value_t = BoundaryArg::Dirichlet)]
    pub boundary: BoundaryArg,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalOpts {
    pub fn rank_or_default(&self) -> usize {
        self.rank.unwrap_or(mgd_core::DEFAULT_RANK)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Forward,
    Dirichlet,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Forward => Boundary::Forward,
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Negative log likelihood of observations: `nll MU [PSI] Z`.
    ///
    /// Each channel of Z is one observation; one NLL is printed per channel.
    /// Without PSI the model is the diagonal one (M = 0).
    Nll {
        #[arg(num_args = 2..=3, required = true, value_name = "FILE")]
        files: Vec<PathBuf>,
        /// Also evaluate through the dense N×N covariance (N ≤ 4096) and
        /// print the absolute gap.
        #[arg(long)]
        dense_check: bool,
    },
    /// Draw samples and write them to `<out>/sample_XXXX.mgd`: `sample MU [PSI]`.
    Sample {
        #[arg(num_args = 1..=2, required = true, value_name = "FILE")]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Maximum-likelihood fit of (μ, Ψ, σ) to sample rasters.
    ///
    /// Every channel of every input counts as one sample. Writes `mu.mgd`,
    /// `psi.mgd` (when M > 0) and `fit.log` into `--out`.
    Fit {
        #[arg(required = true, value_name = "SAMPLE")]
        samples: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Initial gradient step in (0, 1].
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Also fit σ, starting from the pooled sample std-dev.
        #[arg(long)]
        fit_sigma: bool,
    },
    /// Moment-matched fusion of an equal-weight ensemble: `fuse MU1 PSI1 MU2 PSI2 ...`.
    Fuse {
        #[arg(required = true, value_name = "FILE")]
        files: Vec<PathBuf>,
        /// Observation whose ensemble and fused NLL are printed.
        #[arg(long)]
        probe: Option<PathBuf>,
        /// Truncate the fused factor to this many leading directions.
        #[arg(long)]
        truncate: Option<usize>,
    },
    /// Depth-evaluation statistics of a prediction against ground truth.
    ///
    /// Ground-truth pixels ≤ 0 or above `--cap` are excluded.
    Metrics {
        pred: PathBuf,
        gt: PathBuf,
        /// Align the prediction by a least-squares scale and shift first.
        #[arg(long)]
        align: bool,
        /// Report iRMS in 1/km instead of 1/m.
        #[arg(long)]
        irms_km: bool,
    },
    /// Write one row of ΨΨᵀ + σ²I as a raster to `--out`.
    Covrow {
        psi: PathBuf,
        /// Row-major pixel index.
        #[arg(long)]
        index: usize,
    },
    /// Compare the NLL against the classical losses it reduces to.
    ReduceCheck {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        probes: usize,
    },
    /// Time the NLL over a doubling sweep of N at fixed M.
    Bench {
        #[arg(long, default_value_t = 8)]
        m: usize,
        /// `MIN:MAX` pixel counts.
        #[arg(long, default_value = "4096:32768", value_parser = parse_sweep)]
        n_sweep: (usize, usize),
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Evaluations per timed repetition.
        #[arg(long, default_value_t = 16)]
        inner: usize,
    },
}

fn parse_sweep(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo: usize = lo.parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi: usize = hi.parse().map_err(|e| format!("bad MAX: {e}"))?;
    if lo == 0 || hi < lo {
        return Err("need 0 < MIN ≤ MAX".into());
    }
    Ok((lo, hi))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Io(_) | Error::InvalidArgument(_) => 2,
        Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => 3,
        Error::NotPositiveDefinite { .. } | Error::NonFinite(_) | Error::Degenerate(_) => 4,
    }
}

fn run(cli: Cli) -> mgd_core::Result<()> {
    let g = &cli.global;
    if !(g.sigma > 0.0 && g.sigma.is_finite()) {
        return Err(Error::InvalidArgument(
            "--sigma must be positive and finite".into(),
        ));
    }
    if !(g.cap > 0.0 && g.cap.is_finite()) {
        return Err(Error::InvalidArgument(
            "--cap must be positive and finite".into(),
        ));
    }
    let threads = parallel::threads_from_env()?;
    match cli.command {
        Command::Nll { files, dense_check } => commands::nll(g, &files, dense_check, threads),
        Command::Sample { files, count } => commands::sample(g, &files, count),
        Command::Fit {
            samples,
            iterations,
            step,
            fit_sigma,
        } => commands::fit(g, &samples, iterations, step, fit_sigma),
        Command::Fuse {
            files,
            probe,
            truncate,
        } => commands::fuse(g, &files, probe.as_deref(), truncate),
        Command::Metrics {
            pred,
            gt,
            align,
            irms_km,
        } => commands::metrics(g, &pred, &gt, align, irms_km),
        Command::Covrow { psi, index } => commands::covrow(g, &psi, index),
        Command::ReduceCheck { n, probes } => commands::reduce_check(g, n, probes, threads),
        Command::Bench {
            m,
            n_sweep,
            repetitions,
            inner,
        } => commands::bench(g, m, n_sweep, repetitions, inner),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mgd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
