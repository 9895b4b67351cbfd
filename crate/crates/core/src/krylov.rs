//! Preconditioned conjugate gradients, stochastic Lanczos quadrature and
//! the stochastic loss and gradient estimators built on them.

use crate::aafn::AafnPrecond;
use crate::error::{check_len, Error, Result};
use crate::fastsum::AdditiveMatvecEngine;
use crate::kernels::Operator;
use crate::linalg::{axpy, dot, norm2, sym_tridiag_eig};
use crate::scalar::{softplus_grad, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed set of Rademacher vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSet<T> {
    seed: u64,
    probes: Vec<Vec<T>>,
}

impl<T: Scalar> ProbeSet<T> {
    pub fn rademacher(n: usize, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probes = (0..count)
            .map(|_| (0..n).map(|_| if rng.random::<bool>() { T::one() } else { -T::one() }).collect())
            .collect();
        ProbeSet { seed, probes }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.probes.first().map_or(0, |p| p.len())
    }

    pub fn probes(&self) -> &[Vec<T>] {
        &self.probes
    }
}

/// Outcome of one (P)CG solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// `‖r_k‖/‖b‖` for `k = 0..=iterations`.
    pub residuals: Vec<T>,
    pub converged: bool,
    /// Iterates `x_1..x_k`, only when requested.
    pub iterates: Vec<Vec<T>>,
}

impl<T: Scalar> SolveReport<T> {
    pub fn final_residual(&self) -> T {
        *self.residuals.last().unwrap()
    }
}

/// Sample mean and variance of a stochastic estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport<T> {
    pub estimate: T,
    pub samples: Vec<T>,
    pub variance: T,
}

impl<T: Scalar> EstimatorReport<T> {
    pub fn from_samples(samples: Vec<T>) -> Self {
        let k = samples.len();
        if k == 0 {
            return EstimatorReport { estimate: T::zero(), samples, variance: T::zero() };
        }
        let mean = samples.iter().copied().sum::<T>() / T::of_usize(k);
        let variance = if k > 1 {
            samples.iter().map(|s| (*s - mean) * (*s - mean)).sum::<T>() / T::of_usize(k - 1)
        } else {
            T::zero()
        };
        EstimatorReport { estimate: mean, samples, variance }
    }
}

/// Solves `A x = b` by preconditioned CG from `x₀ = 0`.
pub fn pcg<T, A, M>(mut apply_a: A, apply_minv: M, b: &[T], tol: T, maxit: usize) -> Result<SolveReport<T>>
where
    T: Scalar,
    A: FnMut(&[T]) -> Result<Vec<T>>,
    M: FnMut(&[T]) -> Result<Vec<T>>,
{
    let mut out = pcg_many(|vs: &[Vec<T>]| vs.iter().map(|v| apply_a(v)).collect(), apply_minv, &[b.to_vec()], tol, maxit, false)?;
    Ok(out.pop().unwrap())
}

/// Runs PCG on several right-hand sides in lockstep so that `apply_a`
/// sees all active search directions at once.
pub fn pcg_many<T, A, M>(mut apply_a: A, mut apply_minv: M, bs: &[Vec<T>], tol: T, maxit: usize, keep_iterates: bool) -> Result<Vec<SolveReport<T>>>
where
    T: Scalar,
    A: FnMut(&[Vec<T>]) -> Result<Vec<Vec<T>>>,
    M: FnMut(&[T]) -> Result<Vec<T>>,
{
    if !(tol >= T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be non-negative")));
    }
    let n = bs.first().map_or(0, |b| b.len());
    for b in bs {
        check_len(n, b.len())?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
    }
    struct State<T> {
        x: Vec<T>,
        r: Vec<T>,
        p: Vec<T>,
        rz: T,
        bnorm: T,
        report: SolveReport<T>,
        done: bool,
    }
    let mut states = Vec::with_capacity(bs.len());
    for b in bs {
        let bnorm = norm2(b);
        let mut report = SolveReport { solution: vec![T::zero(); n], iterations: 0, residuals: vec![T::one()], converged: false, iterates: Vec::new() };
        if bnorm == T::zero() {
            report.residuals[0] = T::zero();
            report.converged = true;
            states.push(State { x: vec![T::zero(); n], r: Vec::new(), p: Vec::new(), rz: T::zero(), bnorm, report, done: true });
            continue;
        }
        let z = apply_minv(b)?;
        let rz = dot(b, &z);
        let done = maxit == 0 || tol >= T::one();
        report.converged = tol >= T::one();
        states.push(State { x: vec![T::zero(); n], r: b.clone(), p: z, rz, bnorm, report, done });
    }
    for _ in 0..maxit {
        let active: Vec<usize> = (0..states.len()).filter(|&i| !states[i].done).collect();
        if active.is_empty() {
            break;
        }
        let dirs: Vec<Vec<T>> = active.iter().map(|&i| states[i].p.clone()).collect();
        let aps = apply_a(&dirs)?;
        check_len(active.len(), aps.len())?;
        for (&i, ap) in active.iter().zip(&aps) {
            let st = &mut states[i];
            let pap = dot(&st.p, ap);
            if pap == T::zero() || !pap.is_finite() {
                return Err(Error::NonFinite("pcg curvature"));
            }
            let alpha = st.rz / pap;
            axpy(alpha, &st.p, &mut st.x);
            axpy(-alpha, ap, &mut st.r);
            if st.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("pcg iterate"));
            }
            st.report.iterations += 1;
            let rel = norm2(&st.r) / st.bnorm;
            st.report.residuals.push(rel);
            if keep_iterates {
                st.report.iterates.push(st.x.clone());
            }
            if rel <= tol {
                st.report.converged = true;
                st.done = true;
                continue;
            }
            let z = apply_minv(&st.r)?;
            let rz_new = dot(&st.r, &z);
            let beta = rz_new / st.rz;
            st.rz = rz_new;
            for (pi, zi) in st.p.iter_mut().zip(&z) {
                *pi = *zi + beta * *pi;
            }
        }
    }
    Ok(states
        .into_iter()
        .map(|mut st| {
            st.report.solution = st.x;
            st.report
        })
        .collect())
}

/// Lanczos tridiagonal of a symmetric operator started at `q₀/‖q₀‖`, with
/// full reorthogonalization. Returns `(α, β)` truncated at breakdown.
fn lanczos_many<T, A>(apply: &mut A, starts: &[Vec<T>], steps: usize) -> Result<Vec<(Vec<T>, Vec<T>)>>
where
    T: Scalar,
    A: FnMut(&[Vec<T>]) -> Result<Vec<Vec<T>>>,
{
    let k = starts.len();
    let mut basis: Vec<Vec<Vec<T>>> = starts
        .iter()
        .map(|z| {
            let nz = norm2(z);
            vec![z.iter().map(|v| *v / nz).collect()]
        })
        .collect();
    let mut alphas = vec![Vec::new(); k];
    let mut betas = vec![Vec::new(); k];
    let mut active: Vec<bool> = vec![true; k];
    for _ in 0..steps {
        let idx: Vec<usize> = (0..k).filter(|&i| active[i]).collect();
        if idx.is_empty() {
            break;
        }
        let qs: Vec<Vec<T>> = idx.iter().map(|&i| basis[i].last().unwrap().clone()).collect();
        let ws = apply(&qs)?;
        for (&i, mut w) in idx.iter().zip(ws) {
            let q = basis[i].last().unwrap();
            let a = dot(q, &w);
            if !a.is_finite() {
                return Err(Error::NonFinite("lanczos"));
            }
            alphas[i].push(a);
            for _ in 0..2 {
                for qj in &basis[i] {
                    let c = dot(qj, &w);
                    axpy(-c, qj, &mut w);
                }
            }
            if alphas[i].len() == steps {
                active[i] = false;
                continue;
            }
            let b = norm2(&w);
            let scale = alphas[i].iter().map(|x| x.abs()).fold(T::zero(), T::max).max(T::min_positive_value());
            if !(b > T::of(1e3) * T::epsilon() * scale) {
                active[i] = false;
                continue;
            }
            betas[i].push(b);
            for v in w.iter_mut() {
                *v /= b;
            }
            basis[i].push(w);
        }
    }
    Ok(alphas.into_iter().zip(betas).collect())
}

/// `Σ τ_j² log θ_j` for the leading `t × t` block of a tridiagonal.
fn quadrature<T: Scalar>(alpha: &[T], beta: &[T], t: usize) -> Result<T> {
    let t = t.min(alpha.len());
    let (theta, first) = sym_tridiag_eig(&alpha[..t], &beta[..t.saturating_sub(1)])?;
    let mut acc = T::zero();
    for (th, tau) in theta.iter().zip(&first) {
        if !(*th > T::zero()) {
            return Err(Error::NonFinite("non-positive Ritz value"));
        }
        acc += *tau * *tau * th.ln();
    }
    Ok(acc)
}

/// SLQ estimates of `tr logm(M⁻¹K̂)` for every step count `1..=steps`.
/// Without a preconditioner this estimates `log det K̂`.
pub fn slq_by_step<T, A>(mut apply_khat: A, precond: Option<&AafnPrecond<T>>, probes: &ProbeSet<T>, steps: usize) -> Result<Vec<EstimatorReport<T>>>
where
    T: Scalar,
    A: FnMut(&[Vec<T>]) -> Result<Vec<Vec<T>>>,
{
    if steps == 0 {
        return Err(Error::InvalidParameter("lanczos steps must be at least 1".into()));
    }
    if probes.is_empty() {
        return Err(Error::InvalidParameter("at least one probe is required".into()));
    }
    let mut op = |qs: &[Vec<T>]| -> Result<Vec<Vec<T>>> {
        match precond {
            None => apply_khat(qs),
            Some(m) => {
                let us = qs.iter().map(|q| m.apply_f_inv_t(q)).collect::<Result<Vec<_>>>()?;
                let ks = apply_khat(&us)?;
                ks.iter().map(|k| m.apply_f_inv(k)).collect()
            }
        }
    };
    let tri = lanczos_many(&mut op, probes.probes(), steps)?;
    let norms: Vec<T> = probes.probes().iter().map(|z| dot(z, z)).collect();
    (1..=steps)
        .map(|t| {
            let samples = tri.iter().zip(&norms).map(|((a, b), nz)| Ok(*nz * quadrature(a, b, t)?)).collect::<Result<Vec<T>>>()?;
            Ok(EstimatorReport::from_samples(samples))
        })
        .collect()
}

/// SLQ estimate of `tr logm(M⁻¹K̂)` with `steps` Lanczos steps per probe.
pub fn slq_logdet_correction<T, A>(apply_khat: A, precond: Option<&AafnPrecond<T>>, probes: &ProbeSet<T>, steps: usize) -> Result<EstimatorReport<T>>
where
    T: Scalar,
    A: FnMut(&[Vec<T>]) -> Result<Vec<Vec<T>>>,
{
    Ok(slq_by_step(apply_khat, precond, probes, steps)?.pop().unwrap())
}

/// Budgets for the stochastic estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub cg_tol: f64,
    pub cg_iters: usize,
    pub lanczos_steps: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { cg_tol: 1e-6, cg_iters: 10, lanczos_steps: 10 }
    }
}

/// Loss estimate and, optionally, its gradient.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub loss: T,
    pub alpha: Vec<T>,
    pub data_fit: T,
    pub logdet_precond: T,
    pub correction: EstimatorReport<T>,
    pub alpha_solve: SolveReport<T>,
    /// Gradient with respect to the raw variables.
    pub grad: Option<[T; 3]>,
    /// Gradient with respect to `(σ_f, ℓ, σ_ε)`, with per-probe samples.
    pub grad_values: Option<[EstimatorReport<T>; 3]>,
}

fn precond_apply<'a, T: Scalar>(precond: Option<&'a AafnPrecond<T>>) -> impl FnMut(&[T]) -> Result<Vec<T>> + 'a {
    move |v: &[T]| match precond {
        Some(m) => m.apply_inverse(v),
        None => Ok(v.to_vec()),
    }
}

/// Evaluates `Z̃(θ)` at the engine's current parameters and, when
/// `with_grad` is set, the Hutchinson gradient estimate.
pub fn evaluate<T: Scalar>(
    engine: &mut AdditiveMatvecEngine<T>,
    precond: Option<&AafnPrecond<T>>,
    y: &[T],
    probes: &ProbeSet<T>,
    config: &EstimatorConfig,
    with_grad: bool,
) -> Result<Evaluation<T>> {
    let n = engine.n();
    check_len(n, y.len())?;
    if let Some(m) = precond {
        check_len(n, m.n())?;
    }
    if !probes.is_empty() {
        check_len(n, probes.dim())?;
    }
    let tol = T::of(config.cg_tol);
    let mut rhs = vec![y.to_vec()];
    if with_grad {
        rhs.extend(probes.probes().iter().cloned());
    }
    let mut solves = pcg_many(|vs: &[Vec<T>]| engine.matvec_many(vs, Operator::KHat), precond_apply(precond), &rhs, tol, config.cg_iters, false)?;
    let probe_solves = solves.split_off(1);
    let alpha_solve = solves.pop().unwrap();
    let alpha = alpha_solve.solution.clone();
    let data_fit = dot(y, &alpha);
    let correction = slq_logdet_correction(|vs: &[Vec<T>]| engine.matvec_many(vs, Operator::KHat), precond, probes, config.lanczos_steps)?;
    let logdet_precond = precond.map_or(T::zero(), |m| m.logdet());
    let half = T::of(0.5);
    let loss = half * (data_fit + logdet_precond + correction.estimate + T::of_usize(n) * T::TAU().ln());
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let (grad, grad_values) = if with_grad {
        let params = *engine.params();
        let mut reports = Vec::with_capacity(3);
        let mut vecs = vec![alpha.clone()];
        vecs.extend(probes.probes().iter().cloned());
        for op in [Operator::DSigmaF, Operator::DEll, Operator::DSigmaEps] {
            let d = engine.matvec_many(&vecs, op)?;
            let fit = dot(&alpha, &d[0]);
            let samples: Vec<T> = probe_solves.iter().zip(&d[1..]).map(|(x, dz)| half * (dot(&x.solution, dz) - fit)).collect();
            reports.push(EstimatorReport::from_samples(samples));
        }
        let raw = params.raw;
        let g = [
            reports[0].estimate * softplus_grad(raw[0]),
            reports[1].estimate * softplus_grad(raw[1]),
            reports[2].estimate * softplus_grad(raw[2]),
        ];
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let arr: [EstimatorReport<T>; 3] = reports.try_into().map_err(|_| Error::Empty)?;
        (Some(g), Some(arr))
    } else {
        (None, None)
    };
    Ok(Evaluation { loss, alpha, data_fit, logdet_precond, correction, alpha_solve, grad, grad_values })
}

/// `Z̃(θ)` at the engine's current parameters.
pub fn loss<T: Scalar>(
    engine: &mut AdditiveMatvecEngine<T>,
    precond: Option<&AafnPrecond<T>>,
    y: &[T],
    probes: &ProbeSet<T>,
    config: &EstimatorConfig,
) -> Result<T> {
    Ok(evaluate(engine, precond, y, probes, config, false)?.loss)
}

/// `∇Z̃` with respect to the raw variables.
pub fn grad<T: Scalar>(
    engine: &mut AdditiveMatvecEngine<T>,
    precond: Option<&AafnPrecond<T>>,
    y: &[T],
    probes: &ProbeSet<T>,
    config: &EstimatorConfig,
) -> Result<[T; 3]> {
    Ok(evaluate(engine, precond, y, probes, config, true)?.grad.unwrap())
}
