use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mgd_core::bench::{scaling_sweep, BenchConfig};
use mgd_core::{
    align_scale_shift, check_reduction, evaluate_with, fit_mle, DepthRaster, Error,
    GaussianEnsemble, InverseDepthUnit, LowRankGaussian, Matrix, MgdFile, ReductionKind, Result,
    SeededRng,
};

use crate::parallel;
use crate::GlobalOpts;

/// Largest N for which `--dense-check` builds the N×N covariance.
const DENSE_LIMIT: usize = 4096;

fn read(path: &Path) -> Result<MgdFile> {
    MgdFile::read(path).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn same_shape(a: &MgdFile, b: &MgdFile, context: &'static str) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.rows(),
            found: b.rows(),
        });
    }
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.cols(),
            found: b.cols(),
        });
    }
    Ok(())
}

fn single_channel(f: &MgdFile, context: &'static str) -> Result<()> {
    if f.channels() != 1 {
        return Err(Error::DimensionMismatch {
            context,
            expected: 1,
            found: f.channels(),
        });
    }
    Ok(())
}

/// One vector of N values per channel.
fn channels(f: &MgdFile) -> Vec<Vec<f64>> {
    let c = f.channels();
    (0..c)
        .map(|k| f.data().iter().skip(k).step_by(c).copied().collect())
        .collect()
}

fn out_dir(g: &GlobalOpts) -> Result<&Path> {
    let dir = g
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out <DIR> is required".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Loads `(μ, Ψ)` from a mean raster and an optional factor raster whose
/// channels are the columns of Ψ.
fn load_model(
    g: &GlobalOpts,
    mu_path: &Path,
    psi_path: Option<&Path>,
) -> Result<(MgdFile, LowRankGaussian<f64>)> {
    let mu = read(mu_path)?;
    single_channel(&mu, "mean raster channels")?;
    let psi = match psi_path {
        Some(p) => {
            let f = read(p)?;
            same_shape(&mu, &f, "factor raster shape")?;
            f.to_matrix()
        }
        None => Matrix::zeros(mu.pixels(), 0),
    };
    if let Some(rank) = g.rank {
        if rank != psi.cols() {
            return Err(Error::DimensionMismatch {
                context: "factor channels vs --rank",
                expected: rank,
                found: psi.cols(),
            });
        }
    }
    let model = LowRankGaussian::new(mu.data().to_vec(), psi, g.sigma)?;
    Ok((mu, model))
}

pub fn nll(g: &GlobalOpts, files: &[PathBuf], dense_check: bool, threads: usize) -> Result<()> {
    let (mu_path, psi_path, z_path) = match files {
        [mu, z] => (mu, None, z),
        [mu, psi, z] => (mu, Some(psi.as_path()), z),
        _ => return Err(Error::InvalidArgument("nll expects MU [PSI] Z".into())),
    };
    let (mu, model) = load_model(g, mu_path, psi_path)?;
    let z = read(z_path)?;
    same_shape(&mu, &z, "observation raster shape")?;
    if dense_check && model.n() > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "--dense-check limited to N ≤ {DENSE_LIMIT}, got N = {}",
            model.n()
        )));
    }
    let ws = model.workspace()?;
    let dense = dense_check.then(|| model.to_dense());
    let results = parallel::map(
        &channels(&z),
        threads,
        |obs| -> Result<(f64, Option<f64>)> {
            let value = ws.nll(&model, obs)?;
            let gap = match &dense {
                Some(d) => Some((value - d.nll(obs)?).abs()),
                None => None,
            };
            Ok((value, gap))
        },
    );
    let mut out = String::new();
    for r in results {
        let (value, gap) = r?;
        let _ = writeln!(out, "{value:.12}");
        if let Some(gap) = gap {
            let _ = writeln!(out, "dense_gap {gap:e}");
        }
    }
    print!("{out}");
    Ok(())
}

pub fn sample(g: &GlobalOpts, files: &[PathBuf], count: usize) -> Result<()> {
    let (mu, model) = load_model(g, &files[0], files.get(1).map(PathBuf::as_path))?;
    let draws = model.sample(&mut SeededRng::new(g.seed), count)?;
    let dir = out_dir(g)?;
    for (i, d) in draws.into_iter().enumerate() {
        MgdFile::from_vector(mu.rows(), mu.cols(), d)?
            .write(dir.join(format!("sample_{i:04}.mgd")))?;
    }
    println!("wrote {count} samples to {}", dir.display());
    Ok(())
}

pub fn fit(
    g: &GlobalOpts,
    paths: &[PathBuf],
    iterations: usize,
    step: f64,
    fit_sigma: bool,
) -> Result<()> {
    let mut first: Option<MgdFile> = None;
    let mut samples = Vec::new();
    for p in paths {
        let f = read(p)?;
        if let Some(ref head) = first {
            same_shape(head, &f, "sample raster shape")?;
        }
        samples.extend(channels(&f));
        first.get_or_insert(f);
    }
    let Some(shape) = first else {
        return Err(Error::InvalidArgument(
            "fit needs at least one sample file".into(),
        ));
    };
    let dir = out_dir(g)?;
    let mut config = mgd_core::FitConfig::new(g.rank_or_default());
    config.iterations = iterations;
    config.step_size = step;
    config.fit_sigma = fit_sigma;
    config.seed = g.seed;
    config.initial_sigma = if fit_sigma { None } else { Some(g.sigma) };
    let result = fit_mle(&samples, &config)?;
    let model = &result.model;

    MgdFile::from_vector(shape.rows(), shape.cols(), model.mu().to_vec())?
        .write(dir.join("mu.mgd"))?;
    if model.m() > 0 {
        MgdFile::from_matrix(shape.rows(), shape.cols(), model.psi())?
            .write(dir.join("psi.mgd"))?;
    }
    let mut log = String::new();
    let _ = writeln!(
        log,
        "samples {} n {} m {}",
        samples.len(),
        model.n(),
        model.m()
    );
    for c in &result.checkpoints {
        let _ = writeln!(log, "iteration {} mean_nll {:.12}", c.iteration, c.mean_nll);
    }
    let _ = writeln!(log, "iterations_run {}", result.iterations_run);
    let _ = writeln!(log, "sigma {:.16e}", model.sigma());
    write_text(&dir.join("fit.log"), &log)?;
    println!("final_mean_nll {:.12}", result.final_mean_nll);
    println!("sigma {:.16e}", model.sigma());
    Ok(())
}

pub fn fuse(
    g: &GlobalOpts,
    files: &[PathBuf],
    probe: Option<&Path>,
    truncate: Option<usize>,
) -> Result<()> {
    if !files.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument("fuse expects MU PSI pairs".into()));
    }
    let mut shape = None;
    let mut components = Vec::with_capacity(files.len() / 2);
    for pair in files.chunks(2) {
        let (mu, model) = load_model(g, &pair[0], Some(&pair[1]))?;
        if let Some(ref head) = shape {
            same_shape(head, &mu, "component raster shape")?;
        } else {
            shape = Some(mu);
        }
        components.push(model);
    }
    let Some(shape) = shape else {
        return Err(Error::InvalidArgument(
            "fuse needs at least one component".into(),
        ));
    };
    let ensemble = GaussianEnsemble::new(components)?;
    let fused = match truncate {
        Some(r) => ensemble.fuse_truncated(r)?,
        None => ensemble.fuse()?,
    };
    println!("components {}", ensemble.len());
    println!("fused_rank {}", fused.m());

    if let Some(path) = probe {
        let z = read(path)?;
        same_shape(&shape, &z, "probe raster shape")?;
        for obs in channels(&z) {
            println!("ensemble_nll {:.12}", ensemble.nll(&obs)?);
            println!("fused_nll {:.12}", fused.nll(&obs)?);
        }
    }
    if g.out.is_some() {
        let dir = out_dir(g)?;
        MgdFile::from_vector(shape.rows(), shape.cols(), fused.mu().to_vec())?
            .write(dir.join("mu.mgd"))?;
        if fused.m() > 0 {
            MgdFile::from_matrix(shape.rows(), shape.cols(), fused.psi())?
                .write(dir.join("psi.mgd"))?;
        }
    }
    Ok(())
}

pub fn metrics(
    g: &GlobalOpts,
    pred_path: &Path,
    gt_path: &Path,
    align: bool,
    irms_km: bool,
) -> Result<()> {
    let pred = read(pred_path)?;
    let gt = read(gt_path)?;
    single_channel(&pred, "prediction channels")?;
    single_channel(&gt, "ground-truth channels")?;
    same_shape(&gt, &pred, "prediction raster shape")?;
    let (rows, cols) = (gt.rows(), gt.cols());
    let gt = DepthRaster::from_values(rows, cols, gt.into_data(), g.cap)?;
    let mut pred = DepthRaster::new(rows, cols, pred.into_data(), vec![true; rows * cols], g.cap)?;
    if align {
        pred = align_scale_shift(&pred, &gt)?.raster;
    }
    let unit = if irms_km {
        InverseDepthUnit::PerKilometer
    } else {
        InverseDepthUnit::PerMeter
    };
    let report = evaluate_with(&pred, &gt, unit)?;
    let mut out = String::new();
    for (name, value) in report.fields() {
        let _ = writeln!(out, "{name} {value}");
    }
    print!("{out}");
    Ok(())
}

pub fn covrow(g: &GlobalOpts, psi_path: &Path, index: usize) -> Result<()> {
    let psi = read(psi_path)?;
    if let Some(rank) = g.rank {
        if rank != psi.channels() {
            return Err(Error::DimensionMismatch {
                context: "factor channels vs --rank",
                expected: rank,
                found: psi.channels(),
            });
        }
    }
    let out = g
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out <FILE> is required".into()))?;
    let model = LowRankGaussian::new(vec![0.0; psi.pixels()], psi.to_matrix(), g.sigma)?;
    let row = model.covariance_row(index)?;
    MgdFile::from_vector(psi.rows(), psi.cols(), row)?.write(out)
}

pub fn reduce_check(g: &GlobalOpts, n: usize, probes: usize, threads: usize) -> Result<()> {
    let cases = [
        ReductionKind::L2,
        ReductionKind::ScaleInvariant,
        ReductionKind::Gradient {
            rank: g.rank_or_default().min(n),
            boundary: g.boundary.into(),
        },
    ];
    // Each case gets its own stream so results do not depend on threading.
    let reports = parallel::map(&cases, threads, |&kind| {
        let mut rng = SeededRng::new(g.seed);
        check_reduction(kind, n, g.sigma, probes, &mut rng)
    });
    for (kind, report) in cases.iter().zip(reports) {
        let r = report?;
        println!(
            "{} affine_gap {:e} relative_gap {:e} slope {:.12} intercept {:.12}",
            kind.name(),
            r.affine_gap,
            r.relative_gap,
            r.slope,
            r.intercept
        );
    }
    Ok(())
}

pub fn bench(
    g: &GlobalOpts,
    m: usize,
    (n_min, n_max): (usize, usize),
    repetitions: usize,
    inner: usize,
) -> Result<()> {
    let rows = scaling_sweep(&BenchConfig {
        m,
        n_min,
        n_max,
        repetitions,
        inner,
        seed: g.seed,
    })?;
    for r in rows {
        println!("{} {} {}", r.n, r.m, r.nanos);
    }
    Ok(())
}
