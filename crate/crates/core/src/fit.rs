//! Analytic NLL gradients, finite-difference verification, the multi-scale
//! training loss, and a direct-parameter maximum-likelihood fit.
//!
//! With `w = Σ⁻¹r` and `A = σ⁻²ΨᵀΨ + I`:
//!
//! ```text
//! ∂/∂μ = −w
//! ∂/∂Ψ = (Σ⁻¹ − wwᵀ)Ψ = σ⁻²ΨA⁻¹ − w(wᵀΨ)
//! ∂/∂σ = σ(tr Σ⁻¹ − wᵀw),   tr Σ⁻¹ = σ⁻²(N − M + tr A⁻¹)
//! ```
//!
//! None of these form an N×N matrix.

use crate::error::{check_len, Error, Result};
use crate::gaussian::{CholeskyWorkspace, LowRankGaussian};
use crate::linalg::{dot, Matrix};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Partial derivatives of the NLL.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGradient<T> {
    pub d_mu: Vec<T>,
    pub d_psi: Matrix<T>,
    pub d_sigma: T,
}

impl<T: Scalar> NllGradient<T> {
    pub fn is_finite(&self) -> bool {
        self.d_mu.iter().all(|x| x.is_finite())
            && self.d_psi.is_finite()
            && self.d_sigma.is_finite()
    }
}

/// Per-observation buffers, reused across a batch.
struct Scratch<T> {
    r: Vec<T>,
    p: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(n: usize, m: usize) -> Self {
        Self {
            r: vec![T::zero(); n],
            p: vec![T::zero(); m],
            y: vec![T::zero(); m],
        }
    }

    /// Fills `r = z − μ`, `p = Ψᵀr`, `y = A⁻¹p` and returns the
    /// data-dependent part of the NLL, `½σ⁻²(rᵀr − σ⁻²pᵀy)`.
    fn quadratic(
        &mut self,
        g: &LowRankGaussian<T>,
        ws: &CholeskyWorkspace<T>,
        z: &[T],
    ) -> Result<T> {
        check_len("observation", g.n(), z.len())?;
        let psi = g.psi();
        self.p.iter_mut().for_each(|x| *x = T::zero());
        let mut rr = T::zero();
        for (i, ((r, &zi), &mi)) in self.r.iter_mut().zip(z).zip(g.mu()).enumerate() {
            *r = zi - mi;
            rr += *r * *r;
            for (p, &a) in self.p.iter_mut().zip(psi.row(i)) {
                *p += a * *r;
            }
        }
        self.y.copy_from_slice(&self.p);
        ws.cholesky().solve_in_place(&mut self.y)?;
        let inv_s2 = (g.sigma() * g.sigma()).recip();
        Ok(T::lit(0.5) * inv_s2 * (rr - inv_s2 * dot(&self.p, &self.y)))
    }
}

/// The observation-independent part of the NLL, `N/2·log 2πσ² + ½log det A`.
fn nll_constant<T: Scalar>(g: &LowRankGaussian<T>, ws: &CholeskyWorkspace<T>) -> T {
    let s2 = g.sigma() * g.sigma();
    T::lit(0.5) * (T::from_usize_lossy(g.n()) * (T::TAU() * s2).ln() + ws.cholesky().log_det())
}

/// Accumulates `Σ_k w_k`, `Σ_k w_k(w_kᵀΨ)` and `Σ_k w_kᵀw_k` over
/// observations, where `w = Σ⁻¹r = σ⁻²(r − Ψy)` and `Ψᵀw = σ⁻²y`.
struct GradientAccumulator<T> {
    scratch: Scratch<T>,
    sum_w: Vec<T>,
    sum_wwt_psi: Matrix<T>,
    sum_wtw: T,
    sum_quad: T,
    count: usize,
}

impl<T: Scalar> GradientAccumulator<T> {
    fn new(n: usize, m: usize) -> Self {
        Self {
            scratch: Scratch::new(n, m),
            sum_w: vec![T::zero(); n],
            sum_wwt_psi: Matrix::zeros(n, m),
            sum_wtw: T::zero(),
            sum_quad: T::zero(),
            count: 0,
        }
    }

    fn add(&mut self, g: &LowRankGaussian<T>, ws: &CholeskyWorkspace<T>, z: &[T]) -> Result<()> {
        self.sum_quad += self.scratch.quadratic(g, ws, z)?;
        let inv_s2 = (g.sigma() * g.sigma()).recip();
        let Scratch { r, y, .. } = &self.scratch;
        let psi = g.psi();
        for (i, &ri) in r.iter().enumerate() {
            let wi = inv_s2 * (ri - inv_s2 * dot(psi.row(i), y));
            self.sum_w[i] += wi;
            self.sum_wtw += wi * wi;
            let c = wi * inv_s2;
            for (o, &yj) in self.sum_wwt_psi.row_mut(i).iter_mut().zip(y) {
                *o += c * yj;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Mean NLL and mean gradient over the accumulated observations.
    fn finish(
        self,
        g: &LowRankGaussian<T>,
        ws: &CholeskyWorkspace<T>,
    ) -> Result<(T, NllGradient<T>)> {
        let inv_k = T::from_usize_lossy(self.count).recip();
        let sigma = g.sigma();
        let inv_s2 = (sigma * sigma).recip();
        let a_inv = ws.cholesky().inverse();
        let mut d_psi = g.psi().matmul(&a_inv)?.scale(inv_s2);
        for (d, &s) in d_psi
            .as_mut_slice()
            .iter_mut()
            .zip(self.sum_wwt_psi.as_slice())
        {
            *d -= s * inv_k;
        }
        let tr_a_inv: T = (0..g.m()).map(|i| a_inv[(i, i)]).sum();
        let tr_sigma_inv =
            inv_s2 * (T::from_usize_lossy(g.n()) - T::from_usize_lossy(g.m()) + tr_a_inv);
        let d_sigma = sigma * (tr_sigma_inv - self.sum_wtw * inv_k);
        let d_mu = self.sum_w.iter().map(|&s| -s * inv_k).collect();
        let loss = nll_constant(g, ws) + self.sum_quad * inv_k;
        if !loss.is_finite() {
            return Err(Error::NonFinite("mean negative log likelihood"));
        }
        Ok((
            loss,
            NllGradient {
                d_mu,
                d_psi,
                d_sigma,
            },
        ))
    }
}

/// Exact gradient of the NLL of `z` with respect to μ, Ψ and σ.
pub fn nll_gradients<T: Scalar>(g: &LowRankGaussian<T>, z: &[T]) -> Result<NllGradient<T>> {
    let ws = g.workspace()?;
    let mut acc = GradientAccumulator::new(g.n(), g.m());
    acc.add(g, &ws, z)?;
    Ok(acc.finish(g, &ws)?.1)
}

/// Mean NLL over `samples`.
pub fn mean_nll<T: Scalar>(g: &LowRankGaussian<T>, samples: &[Vec<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let ws = g.workspace()?;
    let mut scratch = Scratch::new(g.n(), g.m());
    let mut total = T::zero();
    for z in samples {
        total += scratch.quadratic(g, &ws, z)?;
    }
    let value = nll_constant(g, &ws) + total / T::from_usize_lossy(samples.len());
    if !value.is_finite() {
        return Err(Error::NonFinite("mean negative log likelihood"));
    }
    Ok(value)
}

/// Mean NLL over `samples` and its gradient, sharing one factorization.
pub fn mean_nll_and_gradients<T: Scalar>(
    g: &LowRankGaussian<T>,
    samples: &[Vec<T>],
) -> Result<(T, NllGradient<T>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let ws = g.workspace()?;
    let mut acc = GradientAccumulator::new(g.n(), g.m());
    for z in samples {
        acc.add(g, &ws, z)?;
    }
    acc.finish(g, &ws)
}

/// Largest relative error between [`nll_gradients`] and central
/// differences of the NLL, over every entry of μ, Ψ and σ.
///
/// The error for one parameter is `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn finite_diff_check<T: Scalar>(g: &LowRankGaussian<T>, z: &[T], eps: T) -> Result<T> {
    if !(eps > T::zero() && eps <= T::lit(1e-2)) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1e-2], got {eps}"
        )));
    }
    let analytic = nll_gradients(g, z)?;
    let two_eps = eps + eps;
    let rel = |a: T, f: T| (a - f).abs() / T::one().max(a.abs()).max(f.abs());
    let mut worst = T::zero();

    for i in 0..g.n() {
        let shifted = |delta: T| {
            let mut mu = g.mu().to_vec();
            mu[i] += delta;
            g.with_mu(mu)?.nll(z)
        };
        let numeric = (shifted(eps)? - shifted(-eps)?) / two_eps;
        worst = worst.max(rel(analytic.d_mu[i], numeric));
    }
    for i in 0..g.n() {
        for j in 0..g.m() {
            let shifted = |delta: T| {
                let mut psi = g.psi().clone();
                psi[(i, j)] += delta;
                g.with_psi(psi)?.nll(z)
            };
            let numeric = (shifted(eps)? - shifted(-eps)?) / two_eps;
            worst = worst.max(rel(analytic.d_psi[(i, j)], numeric));
        }
    }
    let numeric =
        (g.with_sigma(g.sigma() + eps)?.nll(z)? - g.with_sigma(g.sigma() - eps)?.nll(z)?) / two_eps;
    worst = worst.max(rel(analytic.d_sigma, numeric));
    Ok(worst)
}

/// Multi-scale training loss: the NLL of `z_gt` under every mean in
/// `mu_scales` (sharing Ψ and σ), plus `(1/N)·Σ(μ¹ − z_gt)²` on the first
/// (finest) scale.
pub fn total_loss<T: Scalar>(
    mu_scales: &[&[T]],
    psi: &Matrix<T>,
    sigma: T,
    z_gt: &[T],
) -> Result<T> {
    total_loss_with(mu_scales, psi, sigma, z_gt, true)
}

/// [`total_loss`] with the mean-squared-error term optional.
pub fn total_loss_with<T: Scalar>(
    mu_scales: &[&[T]],
    psi: &Matrix<T>,
    sigma: T,
    z_gt: &[T],
    include_mse: bool,
) -> Result<T> {
    let Some(finest) = mu_scales.first() else {
        return Err(Error::InvalidArgument(
            "total loss needs at least one scale".into(),
        ));
    };
    let n = z_gt.len();
    let mut g = LowRankGaussian::new(finest.to_vec(), psi.clone(), sigma)?;
    let ws = g.workspace()?;
    let mut total = T::zero();
    for mu in mu_scales {
        check_len("scale mean", n, mu.len())?;
        g = g.with_mu(mu.to_vec())?;
        total += ws.nll(&g, z_gt)?;
    }
    if include_mse {
        let mse = finest
            .iter()
            .zip(z_gt)
            .map(|(&m, &z)| (m - z) * (m - z))
            .sum::<T>()
            / T::from_usize_lossy(n);
        total += mse;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T> {
    /// Initial gradient step, in (0, 1]. Halved whenever a step would
    /// increase the mean NLL.
    pub step_size: T,
    pub iterations: usize,
    /// Also descend on log σ.
    pub fit_sigma: bool,
    /// Seeds the Ψ initialization.
    pub seed: u64,
    /// Rank budget of the fitted Ψ.
    pub m: usize,
    /// Starting σ; `None` uses the pooled per-pixel sample std.
    pub initial_sigma: Option<T>,
    pub checkpoint_every: usize,
}

impl<T: Scalar> FitConfig<T> {
    pub fn new(m: usize) -> Self {
        Self {
            step_size: T::lit(1e-2),
            iterations: 1000,
            fit_sigma: false,
            seed: crate::DEFAULT_SEED,
            m,
            initial_sigma: Some(T::lit(crate::DEFAULT_SIGMA)),
            checkpoint_every: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > T::zero() && self.step_size <= T::one()) {
            return Err(Error::InvalidArgument(
                "step_size must lie in (0, 1]".into(),
            ));
        }
        if self.iterations == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument(
                "iterations and checkpoint interval must be positive".into(),
            ));
        }
        if let Some(s) = self.initial_sigma {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::InvalidArgument(
                    "initial sigma must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        Self::new(crate::DEFAULT_RANK)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint<T> {
    pub iteration: usize,
    pub mean_nll: T,
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub model: LowRankGaussian<T>,
    /// Mean NLL at iteration 0, every `checkpoint_every` iterations, and at
    /// the end. Non-increasing.
    pub checkpoints: Vec<Checkpoint<T>>,
    pub final_mean_nll: T,
    /// Iterations actually taken; fewer than requested when no step size
    /// down to the halving limit decreases the objective.
    pub iterations_run: usize,
}

const MAX_HALVINGS: usize = 40;

/// Plain gradient descent on the mean NLL of `samples` over (μ, Ψ, log σ).
pub fn fit_mle<T: Scalar>(samples: &[Vec<T>], config: &FitConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "fit needs at least two samples".into(),
        ));
    }
    let n = samples[0].len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "samples must be non-empty vectors".into(),
        ));
    }
    for s in samples {
        check_len("fit sample", n, s.len())?;
        if !s.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("fit samples"));
        }
    }

    let k = T::from_usize_lossy(samples.len());
    let mut mu = vec![T::zero(); n];
    for s in samples {
        for (m, &x) in mu.iter_mut().zip(s) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= k);

    let sigma = match config.initial_sigma {
        Some(s) => s,
        None => {
            let ss: T = samples
                .iter()
                .flat_map(|s| s.iter().zip(&mu).map(|(&x, &m)| (x - m) * (x - m)))
                .sum();
            let std = (ss / (k * T::from_usize_lossy(n))).sqrt();
            if !(std > T::zero()) {
                return Err(Error::Degenerate(
                    "samples have zero spread; supply a sigma",
                ));
            }
            std
        }
    };

    let mut rng = SeededRng::new(config.seed);
    let init_scale = T::lit(1e-2);
    let psi = Matrix::from_vec(
        n,
        config.m,
        (0..n * config.m)
            .map(|_| init_scale * rng.normal::<T>())
            .collect(),
    )?;
    let mut model = LowRankGaussian::new(mu, psi, sigma)?;

    let (mut loss, mut grad) = mean_nll_and_gradients(&model, samples)?;
    let mut checkpoints = vec![Checkpoint {
        iteration: 0,
        mean_nll: loss,
    }];
    let mut step = config.step_size;
    let mut iterations_run = 0;

    'outer: for it in 1..=config.iterations {
        let mut halvings = 0;
        let accepted = loop {
            let candidate = descend(&model, &grad, step, config.fit_sigma)?;
            match candidate.as_ref().map(|c| mean_nll(c, samples)) {
                Some(Ok(v)) if v <= loss => break candidate.expect("checked"),
                _ => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        break 'outer;
                    }
                    step *= T::lit(0.5);
                }
            }
        };
        model = accepted;
        (loss, grad) = mean_nll_and_gradients(&model, samples)?;
        iterations_run = it;
        if it % config.checkpoint_every == 0 {
            checkpoints.push(Checkpoint {
                iteration: it,
                mean_nll: loss,
            });
        }
    }
    if checkpoints.last().map(|c| c.iteration) != Some(iterations_run) {
        checkpoints.push(Checkpoint {
            iteration: iterations_run,
            mean_nll: loss,
        });
    }
    Ok(FitResult {
        model,
        checkpoints,
        final_mean_nll: loss,
        iterations_run,
    })
}

/// One gradient step; `None` if the step leaves the valid parameter set.
fn descend<T: Scalar>(
    g: &LowRankGaussian<T>,
    grad: &NllGradient<T>,
    step: T,
    fit_sigma: bool,
) -> Result<Option<LowRankGaussian<T>>> {
    let mu: Vec<T> = g
        .mu()
        .iter()
        .zip(&grad.d_mu)
        .map(|(&m, &d)| m - step * d)
        .collect();
    let mut psi = g.psi().clone();
    for (p, &d) in psi.as_mut_slice().iter_mut().zip(grad.d_psi.as_slice()) {
        *p -= step * d;
    }
    let sigma = if fit_sigma {
        // d/d(log σ) = σ·∂/∂σ
        let log_sigma = g.sigma().ln() - step * g.sigma() * grad.d_sigma;
        log_sigma.exp()
    } else {
        g.sigma()
    };
    if !sigma.is_finite() || !(sigma > T::zero()) || !psi.is_finite() {
        return Ok(None);
    }
    Ok(Some(LowRankGaussian::new(mu, psi, sigma)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_isotropic_has_zero_mean_gradient() {
        let g = LowRankGaussian::isotropic(vec![1.0, -2.0, 0.5], 0.3).unwrap();
        let grad = nll_gradients(&g, &[1.0, -2.0, 0.5]).unwrap();
        assert!(grad.d_mu.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn univariate_closed_form() {
        let g = LowRankGaussian::isotropic(vec![0.0f64], 1.0).unwrap();
        let grad = nll_gradients(&g, &[2.0]).unwrap();
        assert!((grad.d_mu[0] + 2.0).abs() < 1e-14);
        assert!((grad.d_sigma + 3.0).abs() < 1e-14);
        assert_eq!(grad.d_psi.cols(), 0);
    }

    #[test]
    fn diagonal_finite_differences() {
        let g = LowRankGaussian::isotropic(vec![0.5, -0.25, 1.0], 1.0).unwrap();
        let err = finite_diff_check(&g, &[1.0, 0.0, -1.0], 1e-5).unwrap();
        assert!(err >= 0.0);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn finite_diff_rejects_bad_eps() {
        let g = LowRankGaussian::isotropic(vec![0.0], 1.0).unwrap();
        assert!(finite_diff_check(&g, &[0.0], 0.0).is_err());
        assert!(finite_diff_check(&g, &[0.0], 0.1).is_err());
    }

    #[test]
    fn total_loss_at_ground_truth() {
        let z = vec![1.0, 2.0, 3.0];
        let psi = Matrix::zeros(3, 0);
        let scales: Vec<&[f64]> = vec![&z, &z, &z, &z];
        let total = total_loss(&scales, &psi, 0.2, &z).unwrap();
        let single = LowRankGaussian::new(z.clone(), psi.clone(), 0.2)
            .unwrap()
            .nll(&z)
            .unwrap();
        assert!((total - 4.0 * single).abs() < 1e-12);
    }

    #[test]
    fn total_loss_replicated_scale() {
        let z = vec![1.0, 2.0, 3.0, 4.0];
        let mu = vec![1.5, 1.0, 3.0, 4.5];
        let psi = Matrix::from_vec(4, 1, vec![0.1, 0.2, -0.1, 0.3]).unwrap();
        let scales: Vec<&[f64]> = vec![&mu; 4];
        let total = total_loss(&scales, &psi, 0.5, &z).unwrap();
        let nll = LowRankGaussian::new(mu.clone(), psi.clone(), 0.5)
            .unwrap()
            .nll(&z)
            .unwrap();
        let mse = (0.25 + 1.0 + 0.0 + 0.25) / 4.0;
        assert!((total - (4.0 * nll + mse)).abs() < 1e-12);
        let no_mse = total_loss_with(&scales, &psi, 0.5, &z, false).unwrap();
        assert!((no_mse - 4.0 * nll).abs() < 1e-12);
    }

    #[test]
    fn total_loss_decreases_toward_ground_truth() {
        let z = vec![0.5, 1.5, -0.5, 2.0, 1.0];
        let psi =
            Matrix::from_vec(5, 2, (0..10).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let eval = |t: f64| {
            let mu1: Vec<f64> = z.iter().map(|&v| v + t).collect();
            let scales: Vec<&[f64]> = vec![&mu1, &z, &z, &z];
            total_loss(&scales, &psi, 0.3, &z).unwrap()
        };
        assert!(eval(1.0) > eval(0.5));
        assert!(eval(0.5) > eval(0.0));
    }

    #[test]
    fn total_loss_errors() {
        let z = vec![1.0, 2.0];
        let short = vec![1.0];
        let psi = Matrix::zeros(2, 0);
        assert!(total_loss::<f64>(&[], &psi, 1.0, &z).is_err());
        assert!(total_loss(&[&z, &short], &psi, 1.0, &z).is_err());
    }

    #[test]
    fn fit_identical_samples_recovers_mean() {
        let c = vec![1.0f64, 2.5, -0.5, 4.0];
        let samples = vec![c.clone(); 5];
        let mut cfg = FitConfig::new(2);
        cfg.iterations = 50;
        let fit = fit_mle(&samples, &cfg).unwrap();
        let err = fit
            .model
            .mu()
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6);
        for w in fit.checkpoints.windows(2) {
            assert!(w[1].mean_nll <= w[0].mean_nll + 1e-6);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        let cfg = FitConfig::<f64>::new(1);
        assert!(fit_mle(&[vec![1.0]], &cfg).is_err());
        assert!(fit_mle(&[vec![1.0], vec![1.0, 2.0]], &cfg).is_err());
        assert!(matches!(
            fit_mle(&[vec![1.0], vec![f64::NAN]], &cfg),
            Err(Error::NonFinite(_))
        ));
        let mut bad = cfg.clone();
        bad.step_size = 2.0;
        assert!(fit_mle(&[vec![1.0], vec![2.0]], &bad).is_err());
        let mut no_sigma = cfg;
        no_sigma.initial_sigma = None;
        assert!(matches!(
            fit_mle(&[vec![1.0], vec![1.0]], &no_sigma),
            Err(Error::Degenerate(_))
        ));
    }
}
