//! Standard depth-evaluation statistics and least-squares scale/shift
//! alignment.

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Default evaluation cap for indoor scenes, meters.
pub const INDOOR_CAP: f64 = 10.0;
/// Default evaluation cap for driving scenes, meters.
pub const OUTDOOR_CAP: f64 = 80.0;
/// Lower clamp applied to predictions before taking logs.
pub const MIN_PREDICTION: f64 = 1e-3;

/// Row-major depth map with a validity mask and an evaluation cap.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    mask: Vec<bool>,
    cap: T,
}

impl<T: Scalar> DepthRaster<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>, mask: Vec<bool>, cap: T) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(
                "raster dimensions must be positive".into(),
            ));
        }
        check_len("raster values", rows * cols, values.len())?;
        check_len("raster mask", rows * cols, mask.len())?;
        if !(cap > T::zero()) || !cap.is_finite() {
            return Err(Error::InvalidArgument("depth cap must be positive".into()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            mask,
            cap,
        })
    }

    /// Marks pixels valid where the value is finite and positive; zero is
    /// the conventional "no measurement" marker.
    pub fn from_values(rows: usize, cols: usize, values: Vec<T>, cap: T) -> Result<Self> {
        let mask = values
            .iter()
            .map(|v| v.is_finite() && *v > T::zero())
            .collect();
        Self::new(rows, cols, values, mask, cap)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cap(&self) -> T {
        self.cap
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        check_len("raster rows", self.rows, other.rows)?;
        check_len("raster cols", self.cols, other.cols)
    }

    /// Indices valid in both rasters with the truth inside `(0, cap]`.
    fn joint_pixels<'a>(&'a self, gt: &'a Self) -> impl Iterator<Item = usize> + 'a {
        (0..self.values.len()).filter(move |&i| {
            let g = gt.values[i];
            self.mask[i] && gt.mask[i] && g > T::zero() && g <= gt.cap
        })
    }
}

/// Unit for the inverse-depth RMS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InverseDepthUnit {
    #[default]
    PerMeter,
    PerKilometer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport<T> {
    pub silog: T,
    pub abs_rel: T,
    pub rms: T,
    pub rms_log: T,
    pub sq_rel: T,
    pub irms: T,
    pub delta1: T,
    pub delta2: T,
    pub delta3: T,
    pub irms_unit: InverseDepthUnit,
    /// Number of pixels the statistics were taken over.
    pub pixels: usize,
}

impl<T: Scalar> MetricReport<T> {
    /// `(name, value)` for the nine statistics, in report order.
    pub fn fields(&self) -> [(&'static str, T); 9] {
        [
            ("silog", self.silog),
            ("abs_rel", self.abs_rel),
            ("rms", self.rms),
            ("rms_log", self.rms_log),
            ("sq_rel", self.sq_rel),
            ("irms", self.irms),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
        ]
    }
}

pub fn evaluate<T: Scalar>(pred: &DepthRaster<T>, gt: &DepthRaster<T>) -> Result<MetricReport<T>> {
    evaluate_with(pred, gt, InverseDepthUnit::PerMeter)
}

/// Statistics over pixels valid in both rasters with truth in `(0, cap]`.
/// Predictions are clamped into `[1e-3, cap]`; a non-positive or
/// non-finite prediction on a valid pixel is an error.
pub fn evaluate_with<T: Scalar>(
    pred: &DepthRaster<T>,
    gt: &DepthRaster<T>,
    unit: InverseDepthUnit,
) -> Result<MetricReport<T>> {
    pred.same_shape(gt)?;
    let lo = T::lit(MIN_PREDICTION);
    let mut pairs = Vec::new();
    for i in pred.joint_pixels(gt) {
        let p = pred.values[i];
        if !p.is_finite() || !(p > T::zero()) {
            return Err(Error::Degenerate(
                "non-positive predicted depth on a valid pixel",
            ));
        }
        pairs.push((p.max(lo).min(gt.cap), gt.values[i]));
    }
    if pairs.is_empty() {
        return Err(Error::Degenerate("no jointly valid pixels"));
    }
    let k = T::from_usize_lossy(pairs.len());
    let mean = |f: &dyn Fn(T, T) -> T| pairs.iter().map(|&(p, g)| f(p, g)).sum::<T>() / k;

    let log_diff: Vec<T> = pairs.iter().map(|&(p, g)| p.ln() - g.ln()).collect();
    let d_mean = log_diff.iter().copied().sum::<T>() / k;
    let d_var = log_diff
        .iter()
        .map(|&d| (d - d_mean) * (d - d_mean))
        .sum::<T>()
        / k;
    let d_sq = log_diff.iter().map(|&d| d * d).sum::<T>() / k;

    let inv_scale = match unit {
        InverseDepthUnit::PerMeter => T::one(),
        InverseDepthUnit::PerKilometer => T::lit(1000.0),
    };
    let threshold = T::lit(1.25);
    let delta = |power: i32| {
        mean(&|p, g| {
            if (p / g).max(g / p) < threshold.powi(power) {
                T::one()
            } else {
                T::zero()
            }
        })
    };

    Ok(MetricReport {
        silog: T::lit(100.0) * d_var.sqrt(),
        abs_rel: mean(&|p, g| (p - g).abs() / g),
        rms: mean(&|p, g| (p - g) * (p - g)).sqrt(),
        rms_log: d_sq.sqrt(),
        sq_rel: mean(&|p, g| (p - g) * (p - g) / g),
        irms: inv_scale * mean(&|p, g| (p.recip() - g.recip()).powi(2)).sqrt(),
        delta1: delta(1),
        delta2: delta(2),
        delta3: delta(3),
        irms_unit: unit,
        pixels: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T> {
    pub raster: DepthRaster<T>,
    pub scale: T,
    pub shift: T,
}

/// Least-squares `(s, t)` minimizing `Σ(s·pred + t − gt)²` over jointly
/// valid pixels, applied to every valid prediction. Pixels whose aligned
/// value is not positive are masked out.
pub fn align_scale_shift<T: Scalar>(
    pred: &DepthRaster<T>,
    gt: &DepthRaster<T>,
) -> Result<Alignment<T>> {
    pred.same_shape(gt)?;
    let idx: Vec<usize> = pred.joint_pixels(gt).collect();
    if idx.len() < 2 {
        return Err(Error::Degenerate(
            "alignment needs at least two valid pixels",
        ));
    }
    let k = T::from_usize_lossy(idx.len());
    let mp = idx.iter().map(|&i| pred.values[i]).sum::<T>() / k;
    let mg = idx.iter().map(|&i| gt.values[i]).sum::<T>() / k;
    let spp: T = idx.iter().map(|&i| (pred.values[i] - mp).powi(2)).sum();
    let spg: T = idx
        .iter()
        .map(|&i| (pred.values[i] - mp) * (gt.values[i] - mg))
        .sum();
    let scale_ref = idx
        .iter()
        .map(|&i| pred.values[i].abs())
        .fold(T::zero(), T::max);
    if !(spp > T::epsilon() * T::lit(16.0) * k * scale_ref * scale_ref) {
        return Err(Error::Degenerate("constant prediction cannot be aligned"));
    }
    let scale = spg / spp;
    let shift = mg - scale * mp;

    let mut values = pred.values.clone();
    let mut mask = pred.mask.clone();
    for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
        if *m {
            *v = scale * *v + shift;
            if !(*v > T::zero()) {
                *m = false;
            }
        }
    }
    Ok(Alignment {
        raster: DepthRaster::new(pred.rows, pred.cols, values, mask, pred.cap)?,
        scale,
        shift,
    })
}
