//! Adam hyperparameter training, posterior prediction and GRF sampling.

use crate::aafn::{AafnPrecond, AafnStructure};
use crate::data::{FeatureWindows, PointSet};
use crate::error::{check_len, Error, Result};
use crate::fastsum::{AdditiveMatvecEngine, Backend, NfftConfig};
use crate::kernels::{dense_matrix, Family, HyperParams, KernelSpec, Operator};
use crate::krylov::{evaluate, pcg_many, EstimatorConfig, ProbeSet};
use crate::linalg::{cholesky_in_place, Matrix};
use crate::scalar::{softplus_inv, Scalar};
use crate::streams::{sub_rng, sub_seed};
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Whether `σ_f` is optimized or pinned to `1/√P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaFMode {
    Trained,
    Fixed,
}

impl FromStr for SigmaFMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trained" => Ok(SigmaFMode::Trained),
            "fixed" => Ok(SigmaFMode::Fixed),
            other => Err(Error::InvalidParameter(format!("unknown sigma_f mode '{other}'"))),
        }
    }
}

impl fmt::Display for SigmaFMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaFMode::Trained => "trained",
            SigmaFMode::Fixed => "fixed",
        })
    }
}

/// Settings for training and prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub family: Family,
    pub backend: Backend,
    pub nfft: NfftConfig,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub n_probes: usize,
    pub cg_tol: f64,
    pub cg_iters: usize,
    pub lanczos_steps: usize,
    pub predict_cg_iters: usize,
    pub predict_cg_tol: f64,
    pub landmarks_per_window: usize,
    pub fill: usize,
    pub seed: u64,
    pub sigma_f_mode: SigmaFMode,
    pub precondition: bool,
    pub rebuild_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: Family::Gaussian,
            backend: Backend::Nfft,
            nfft: NfftConfig::default(),
            learning_rate: 0.01,
            max_iter: 500,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            n_probes: 10,
            cg_tol: 1e-6,
            cg_iters: 10,
            lanczos_steps: 10,
            predict_cg_iters: 50,
            predict_cg_tol: 1e-8,
            landmarks_per_window: 10,
            fill: 20,
            seed: 0,
            sigma_f_mode: SigmaFMode::Trained,
            precondition: true,
            rebuild_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_probes", self.n_probes),
            ("cg_iters", self.cg_iters),
            ("lanczos_steps", self.lanczos_steps),
            ("predict_cg_iters", self.predict_cg_iters),
            ("landmarks_per_window", self.landmarks_per_window),
            ("fill", self.fill),
            ("rebuild_every", self.rebuild_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParameter("Adam moments need beta in [0, 1) and eps > 0".into()));
        }
        if !(self.cg_tol > 0.0) || !(self.predict_cg_tol > 0.0) {
            return Err(Error::InvalidParameter("CG tolerances must be positive".into()));
        }
        Ok(())
    }

    fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig { cg_tol: self.cg_tol, cg_iters: self.cg_iters, lanczos_steps: self.lanczos_steps }
    }
}

/// One Adam iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub raw: [f64; 3],
    pub values: [f64; 3],
    pub loss: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

pub type TrainTrace = Vec<TraceRecord>;

/// Error raised during training, with the iterations completed before it.
#[derive(Clone, Debug)]
pub struct FitFailure {
    pub error: Error,
    pub trace: TrainTrace,
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training stopped after {} iterations: {}", self.trace.len(), self.error)
    }
}

impl std::error::Error for FitFailure {}

impl From<FitFailure> for Error {
    fn from(f: FitFailure) -> Self {
        f.error
    }
}

fn initial_raw<T: Scalar>(windows: &FeatureWindows, mode: SigmaFMode) -> [T; 3] {
    match mode {
        SigmaFMode::Trained => [T::zero(); 3],
        SigmaFMode::Fixed => [softplus_inv(T::one() / T::of_usize(windows.len()).sqrt()), T::zero(), T::zero()],
    }
}

/// Fits `(σ_f, ℓ, σ_ε)` by Adam on the stochastic objective.
pub fn adam_fit<T: Scalar>(
    x: &PointSet<T>,
    y: &[T],
    windows: &FeatureWindows,
    cfg: &TrainConfig,
) -> std::result::Result<(HyperParams<T>, TrainTrace), FitFailure> {
    let mut trace = Vec::new();
    let fail = |error: Error, trace: TrainTrace| FitFailure { error, trace };
    if let Err(e) = cfg.validate().and_then(|_| check_len(x.n(), y.len())) {
        return Err(fail(e, trace));
    }
    let mut raw = initial_raw::<T>(windows, cfg.sigma_f_mode);
    let spec = KernelSpec::new(cfg.family, windows.clone(), HyperParams::from_raw(raw));
    let mut engine = match AdditiveMatvecEngine::new(spec, x, cfg.backend, cfg.nfft) {
        Ok(e) => e,
        Err(e) => return Err(fail(e, trace)),
    };
    let structure = if cfg.precondition && cfg.max_iter > 0 {
        match AafnStructure::new(x, windows, cfg.landmarks_per_window, cfg.fill) {
            Ok(s) => Some(s),
            Err(e) => return Err(fail(e, trace)),
        }
    } else {
        None
    };
    let est = cfg.estimator();
    let (b1, b2, eps, lr) = (T::of(cfg.beta1), T::of(cfg.beta2), T::of(cfg.adam_eps), T::of(cfg.learning_rate));
    let mut m1 = [T::zero(); 3];
    let mut m2 = [T::zero(); 3];
    let mut precond: Option<AafnPrecond<T>> = None;
    let start = Instant::now();
    for it in 0..cfg.max_iter {
        let params = HyperParams::from_raw(raw);
        let step = (|| -> Result<(T, [T; 3])> {
            engine.set_params(params)?;
            if let Some(s) = &structure {
                if it % cfg.rebuild_every == 0 {
                    precond = Some(AafnPrecond::with_structure(engine.spec(), x, s.clone())?);
                }
            }
            let probes = ProbeSet::rademacher(x.n(), cfg.n_probes, sub_seed(cfg.seed, "probes", it as u64));
            let ev = evaluate(&mut engine, precond.as_ref(), y, &probes, &est, true)?;
            Ok((ev.loss, ev.grad.unwrap()))
        })();
        let (loss, mut g) = match step {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trace)),
        };
        if cfg.sigma_f_mode == SigmaFMode::Fixed {
            g[0] = T::zero();
        }
        let gnorm = g.iter().map(|v| *v * *v).sum::<T>().sqrt();
        trace.push(TraceRecord {
            iter: it,
            raw: raw.map(|v| v.to64()),
            values: params.values().map(|v| v.to64()),
            loss: loss.to64(),
            grad_norm: gnorm.to64(),
            seconds: start.elapsed().as_secs_f64(),
        });
        let t = (it + 1) as i32;
        for k in 0..3 {
            m1[k] = b1 * m1[k] + (T::one() - b1) * g[k];
            m2[k] = b2 * m2[k] + (T::one() - b2) * g[k] * g[k];
            let mh = m1[k] / (T::one() - b1.powi(t));
            let vh = m2[k] / (T::one() - b2.powi(t));
            raw[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok((HyperParams::from_raw(raw), trace))
}

/// Posterior mean and variances at test points.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub mean: Vec<T>,
    pub latent_var: Vec<T>,
    pub noisy_var: Vec<T>,
    pub lo95: Vec<T>,
    pub hi95: Vec<T>,
    /// Number of latent variances clamped at zero.
    pub clamped: usize,
}

struct Posterior<T: Scalar> {
    engine: AdditiveMatvecEngine<T>,
    precond: Option<AafnPrecond<T>>,
    alpha: Vec<T>,
}

fn posterior<T: Scalar>(
    params: HyperParams<T>,
    windows: &FeatureWindows,
    x_train: &PointSet<T>,
    y: &[T],
    x_test: &PointSet<T>,
    cfg: &TrainConfig,
) -> Result<Posterior<T>> {
    cfg.validate()?;
    check_len(x_train.n(), y.len())?;
    if x_test.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test points"));
    }
    let spec = KernelSpec::new(cfg.family, windows.clone(), params);
    let mut engine = AdditiveMatvecEngine::covering(spec, x_train, x_test, cfg.backend, cfg.nfft)?;
    let precond = if cfg.precondition {
        Some(AafnPrecond::build(engine.spec(), x_train, cfg.landmarks_per_window, cfg.fill)?)
    } else {
        None
    };
    let solve = solve_many(&mut engine, precond.as_ref(), &[y.to_vec()], cfg)?;
    let alpha = solve.into_iter().next().unwrap();
    Ok(Posterior { engine, precond, alpha })
}

fn solve_many<T: Scalar>(
    engine: &mut AdditiveMatvecEngine<T>,
    precond: Option<&AafnPrecond<T>>,
    rhs: &[Vec<T>],
    cfg: &TrainConfig,
) -> Result<Vec<Vec<T>>> {
    let reports = pcg_many(
        |vs: &[Vec<T>]| engine.matvec_many(vs, Operator::KHat),
        |v: &[T]| match precond {
            Some(m) => m.apply_inverse(v),
            None => Ok(v.to_vec()),
        },
        rhs,
        T::of(cfg.predict_cg_tol),
        cfg.predict_cg_iters,
        false,
    )?;
    Ok(reports.into_iter().map(|r| r.solution).collect())
}

/// Posterior mean `K_{*X} K̂⁻¹ y` only.
pub fn predict_mean<T: Scalar>(
    params: HyperParams<T>,
    windows: &FeatureWindows,
    x_train: &PointSet<T>,
    y: &[T],
    x_test: &PointSet<T>,
    cfg: &TrainConfig,
) -> Result<Vec<T>> {
    let post = posterior(params, windows, x_train, y, x_test, cfg)?;
    post.engine.cross_matvec(x_test, &post.alpha)
}

/// Batch size for the variance solves.
const VARIANCE_BLOCK: usize = 16;

/// Posterior mean, latent and noisy variances, and the 95% band.
pub fn predict<T: Scalar>(
    params: HyperParams<T>,
    windows: &FeatureWindows,
    x_train: &PointSet<T>,
    y: &[T],
    x_test: &PointSet<T>,
    cfg: &TrainConfig,
) -> Result<Prediction<T>> {
    let mut post = posterior(params, windows, x_train, y, x_test, cfg)?;
    let mean = post.engine.cross_matvec(x_test, &post.alpha)?;
    let prior = post.engine.spec().diagonal();
    let noise = params.sigma_eps * params.sigma_eps;
    let mut latent_var = Vec::with_capacity(x_test.n());
    let mut clamped = 0;
    let idx: Vec<usize> = (0..x_test.n()).collect();
    for block in idx.chunks(VARIANCE_BLOCK) {
        let cols: Vec<Vec<T>> = block.iter().map(|&j| post.engine.cross_column(x_test.row(j))).collect();
        let sols = solve_many(&mut post.engine, post.precond.as_ref(), &cols, cfg)?;
        for (c, s) in cols.iter().zip(&sols) {
            let v = prior - crate::linalg::dot(c, s);
            if v < T::zero() {
                clamped += 1;
                latent_var.push(T::zero());
            } else {
                latent_var.push(v);
            }
        }
    }
    let z = T::of(1.96);
    let noisy_var: Vec<T> = latent_var.iter().map(|v| *v + noise).collect();
    let lo95 = mean.iter().zip(&noisy_var).map(|(m, v)| *m - z * v.sqrt()).collect();
    let hi95 = mean.iter().zip(&noisy_var).map(|(m, v)| *m + z * v.sqrt()).collect();
    Ok(Prediction { mean, latent_var, noisy_var, lo95, hi95, clamped })
}

/// Root mean square error.
pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_len(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    let s: T = pred.iter().zip(truth).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
    Ok((s / T::of_usize(pred.len())).sqrt())
}

/// Jitter added to the covariance before factorization.
pub const GRF_JITTER: f64 = 1e-10;

/// `L g + σ_ε g'` with `L L^T = cov + jitter I`.
pub fn grf_from_covariance<T: Scalar>(mut cov: Matrix<T>, sigma_eps: T, seed: u64) -> Result<Vec<T>> {
    let n = cov.rows();
    for i in 0..n {
        cov[(i, i)] += T::of(GRF_JITTER);
    }
    cholesky_in_place(&mut cov)?;
    let mut rng = sub_rng(seed, "grf", 0);
    let g: Vec<T> = (0..n).map(|_| T::of(StandardNormal.sample(&mut rng))).collect();
    let g2: Vec<T> = (0..n).map(|_| T::of(StandardNormal.sample(&mut rng))).collect();
    Ok((0..n)
        .map(|i| {
            let lg: T = (0..=i).map(|j| cov[(i, j)] * g[j]).sum();
            lg + sigma_eps * g2[i]
        })
        .collect())
}

/// Labels drawn from the zero-mean GRF with the additive kernel `K` plus noise.
pub fn grf_sample<T: Scalar>(
    points: &PointSet<T>,
    family: Family,
    windows: &FeatureWindows,
    sigma_f: T,
    ell: T,
    sigma_eps: T,
    seed: u64,
) -> Result<Vec<T>> {
    if sigma_f < T::zero() || !(ell > T::zero()) || sigma_eps < T::zero() {
        return Err(Error::InvalidParameter("GRF needs sigma_f, sigma_eps >= 0 and ell > 0".into()));
    }
    let params = HyperParams { raw: [T::zero(); 3], sigma_f, ell, sigma_eps };
    let spec = KernelSpec::new(family, windows.clone(), params);
    let cov = dense_matrix(&spec, points, Operator::K)?;
    grf_from_covariance(cov, sigma_eps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cholesky, cholesky_solve, dot};
    use crate::streams::sub_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid_1d(n: usize) -> PointSet<f64> {
        PointSet::new(n, 1, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap()
    }

    fn one_window() -> FeatureWindows {
        FeatureWindows::new(vec![vec![0]]).unwrap()
    }

    fn exact_cfg() -> TrainConfig {
        TrainConfig { backend: Backend::Exact, ..TrainConfig::default() }
    }

    #[test]
    fn zero_iterations_return_log2() {
        let x = grid_1d(20);
        let y = vec![0.5; 20];
        let cfg = TrainConfig { max_iter: 0, ..exact_cfg() };
        let (p, trace) = adam_fit(&x, &y, &one_window(), &cfg).unwrap();
        assert!(trace.is_empty());
        for v in p.values() {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_sigma_f_stays_pinned() {
        let x = PointSet::new(30, 2, (0..60).map(|i| ((i * 37) % 61) as f64 / 61.0).collect()).unwrap();
        let w = FeatureWindows::new(vec![vec![0], vec![1]]).unwrap();
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let cfg = TrainConfig { max_iter: 5, sigma_f_mode: SigmaFMode::Fixed, ..exact_cfg() };
        let (p, trace) = adam_fit(&x, &y, &w, &cfg).unwrap();
        assert!((p.sigma_f - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(trace.len(), 5);
        assert!(trace.iter().all(|r| (r.values[0] - 0.5f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let x = grid_1d(25);
        let y: Vec<f64> = (0..25).map(|i| (i as f64 * 0.4).cos()).collect();
        let cfg = TrainConfig { max_iter: 1, ..exact_cfg() };
        let (p, trace) = adam_fit(&x, &y, &one_window(), &cfg).unwrap();
        for k in 0..3 {
            let step = p.raw[k] - trace[0].raw[k];
            assert!((step.abs() - 0.01).abs() < 1e-6, "step {step}");
        }
    }

    #[test]
    fn training_is_reproducible() {
        let x = grid_1d(40);
        let y = grf_sample(&x, Family::Gaussian, &one_window(), 1.0, 0.2, 0.1, 3).unwrap();
        let cfg = TrainConfig { max_iter: 4, seed: 11, ..exact_cfg() };
        let a = adam_fit(&x, &y, &one_window(), &cfg).unwrap();
        let b = adam_fit(&x, &y, &one_window(), &cfg).unwrap();
        let strip = |t: &TrainTrace| t.iter().map(|r| (r.iter, r.raw, r.values, r.loss, r.grad_norm)).collect::<Vec<_>>();
        assert_eq!(strip(&a.1), strip(&b.1));
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn training_reduces_loss_on_grf_data() {
        let x = grid_1d(80);
        let y = grf_sample(&x, Family::Gaussian, &one_window(), 1.0, 0.1, 0.1, 5).unwrap();
        let cfg = TrainConfig { max_iter: 150, learning_rate: 0.05, seed: 2, ..exact_cfg() };
        let (_, trace) = adam_fit(&x, &y, &one_window(), &cfg).unwrap();
        let head: f64 = trace[..10].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        let tail: f64 = trace[trace.len() - 10..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
        assert!(trace.iter().all(|r| r.loss.is_finite() && r.grad_norm.is_finite()));
    }

    #[test]
    fn invalid_config_reports_empty_trace() {
        let x = grid_1d(10);
        let cfg = TrainConfig { n_probes: 0, ..exact_cfg() };
        let err = adam_fit(&x, &[0.0; 10], &one_window(), &cfg).unwrap_err();
        assert!(err.trace.is_empty());
        let cfg = TrainConfig { learning_rate: 0.0, ..exact_cfg() };
        assert!(adam_fit(&x, &[0.0; 10], &one_window(), &cfg).is_err());
    }

    fn dense_posterior(x: &PointSet<f64>, w: &FeatureWindows, p: HyperParams<f64>, y: &[f64], xt: &PointSet<f64>) -> (Vec<f64>, Vec<f64>) {
        let spec = KernelSpec::new(Family::Gaussian, w.clone(), p);
        let l = cholesky(&dense_matrix(&spec, x, Operator::KHat).unwrap()).unwrap();
        let alpha = cholesky_solve(&l, y);
        let kx = crate::kernels::dense_cross(&spec, xt, x).unwrap();
        let mean = kx.matvec(&alpha);
        let var = (0..xt.n())
            .map(|j| {
                let c = kx.row(j).to_vec();
                spec.diagonal() - dot(&c, &cholesky_solve(&l, &c))
            })
            .collect();
        (mean, var)
    }

    #[test]
    fn predict_matches_dense_posterior() {
        let mut rng = sub_rng(1, "test", 0);
        let x = PointSet::new(100, 2, (0..200).map(|_| rng.random::<f64>()).collect()).unwrap();
        let xt = PointSet::new(15, 2, (0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
        let w = FeatureWindows::new(vec![vec![0], vec![1]]).unwrap();
        let y: Vec<f64> = (0..100).map(|i| (3.0 * x.row(i)[0]).sin() + x.row(i)[1]).collect();
        let p = HyperParams::from_values(0.8, 0.3, 0.2).unwrap();
        let cfg = TrainConfig { predict_cg_tol: 1e-12, predict_cg_iters: 400, ..exact_cfg() };
        let pred = predict(p, &w, &x, &y, &xt, &cfg).unwrap();
        let (mean, var) = dense_posterior(&x, &w, p, &y, &xt);
        for j in 0..15 {
            assert!((pred.mean[j] - mean[j]).abs() < 1e-6);
            assert!((pred.latent_var[j] - var[j]).abs() < 1e-6);
            assert!((pred.noisy_var[j] - var[j] - 0.04).abs() < 1e-6);
            assert!(pred.lo95[j] < pred.mean[j] && pred.mean[j] < pred.hi95[j]);
        }
        let m = predict_mean(p, &w, &x, &y, &xt, &cfg).unwrap();
        for j in 0..15 {
            assert!((m[j] - pred.mean[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_interpolation() {
        let x = grid_1d(12);
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let p = HyperParams::from_values(1.0, 0.1, 1e-4).unwrap();
        let cfg = TrainConfig { predict_cg_tol: 1e-14, predict_cg_iters: 200, precondition: false, ..exact_cfg() };
        let xt = x.select(&[3, 7]);
        let pred = predict(p, &one_window(), &x, &y, &xt, &cfg).unwrap();
        assert!((pred.mean[0] - y[3]).abs() < 1e-4);
        assert!((pred.mean[1] - y[7]).abs() < 1e-4);
        assert!(pred.latent_var.iter().all(|v| *v < 1e-6));
    }

    #[test]
    fn nfft_prediction_close_to_exact() {
        let mut rng = sub_rng(2, "test", 0);
        let x = PointSet::new(300, 1, (0..300).map(|_| rng.random::<f64>()).collect()).unwrap();
        let xt = PointSet::new(20, 1, (0..20).map(|_| rng.random::<f64>()).collect()).unwrap();
        let y = grf_sample(&x, Family::Gaussian, &one_window(), 1.0, 0.1, 0.1, 9).unwrap();
        let p = HyperParams::from_values(1.0, 0.1, 0.1).unwrap();
        let a = predict(p, &one_window(), &x, &y, &xt, &exact_cfg()).unwrap();
        let b = predict(p, &one_window(), &x, &y, &xt, &TrainConfig::default()).unwrap();
        for j in 0..20 {
            assert!((a.mean[j] - b.mean[j]).abs() < 1e-3);
            assert!((a.latent_var[j] - b.latent_var[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse::<f64>(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse::<f64>(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse::<f64>(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.535534).abs() < 1e-6);
        assert!(rmse::<f64>(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn grf_zero_signal_is_pure_noise_and_deterministic() {
        let x = grid_1d(10);
        let a = grf_sample(&x, Family::Matern12, &one_window(), 0.0, 0.3, 0.5, 4).unwrap();
        let b = grf_sample(&x, Family::Matern12, &one_window(), 0.0, 0.3, 0.5, 4).unwrap();
        assert_eq!(a, b);
        let mut rng = sub_rng(4, "grf", 0);
        let skip: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert_eq!(skip.len(), 10);
        for ai in &a {
            let g: f64 = StandardNormal.sample(&mut rng);
            assert!((ai - 0.5 * g).abs() < 1e-4);
        }
    }

    #[test]
    fn grf_empirical_covariance() {
        let x = PointSet::new(5, 1, vec![0.0, 0.1, 0.25, 0.5, 0.9]).unwrap();
        let w = one_window();
        let (sf, ell, se) = (1.0, 0.3, 0.2);
        let p = HyperParams::from_values(sf, ell, se).unwrap();
        let khat = dense_matrix(&KernelSpec::new(Family::Gaussian, w.clone(), p), &x, Operator::KHat).unwrap();
        let reps = 2000;
        let draws: Vec<Vec<f64>> = (0..reps).map(|r| grf_sample(&x, Family::Gaussian, &w, sf, ell, se, r as u64).unwrap()).collect();
        for i in 0..5 {
            for j in 0..5 {
                let prods: Vec<f64> = draws.iter().map(|d| d[i] * d[j]).collect();
                let mean = prods.iter().sum::<f64>() / reps as f64;
                let var = prods.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
                let se_ij = (var / reps as f64).sqrt();
                assert!((mean - khat[(i, j)]).abs() <= 3.0 * se_ij + 1e-12, "({i},{j}) {mean} vs {}", khat[(i, j)]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn clamped_variances_are_nonnegative(seed in 0u64..1000, ell in 0.05f64..2.0) {
            let mut rng = sub_rng(seed, "prop", 0);
            let x = PointSet::new(30, 1, (0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
            let xt = PointSet::new(10, 1, (0..10).map(|_| rng.random::<f64>()).collect()).unwrap();
            let y: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let p = HyperParams::from_values(1.0, ell, 1e-3).unwrap();
            let cfg = TrainConfig { predict_cg_iters: 3, ..exact_cfg() };
            let pred = predict(p, &one_window(), &x, &y, &xt, &cfg).unwrap();
            prop_assert!(pred.latent_var.iter().all(|v| *v >= 0.0));
            prop_assert!(pred.noisy_var.iter().all(|v| *v >= 1e-6 - 1e-18));
        }

        #[test]
        fn rmse_of_constant_offset(c in -10.0f64..10.0, n in 1usize..20) {
            let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let p: Vec<f64> = t.iter().map(|v| v + c).collect();
            prop_assert!((rmse(&p, &t).unwrap() - c.abs()).abs() < 1e-9);
        }
    }
}
