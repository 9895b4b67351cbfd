//! Fast matrix-vector products with additive kernel matrices.
//!
//! Each window's coordinates are shifted and divided by a factor `c_s` so
//! they fit in `[-1/4, 1/4)^{d_s}`; the length scale is divided by the same
//! factor, which leaves kernel values unchanged. The periodically continued
//! kernel is sampled on the `m^d` grid over `[-1/2, 1/2)^d` and applied via
//! adjoint NFFT, diagonal scaling, and forward NFFT.

use crate::data::{FeatureWindows, PointSet};
use crate::error::{check_len, Error, Result};
use crate::kernels::{dense_matrix, derivative_from_sq, kernel_from_sq, Family, HyperParams, KernelSpec, Operator};
use crate::linalg::{axpy, Matrix};
use crate::scalar::Scalar;
use crate::transform::{grid_fourier_coeffs, CoeffTable, FourierPlan};
use std::fmt;
use std::str::FromStr;

/// Margin kept free on each side of the scaled domain.
pub const SCALE_MARGIN: f64 = 1.0 / 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Exact,
    Nfft,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "dense" => Ok(Backend::Exact),
            "nfft" => Ok(Backend::Nfft),
            other => Err(Error::InvalidParameter(format!("unknown backend '{other}'"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Nfft => "nfft",
        })
    }
}

/// Transform parameters shared by all windows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NfftConfig {
    pub m: usize,
    pub sigma_over: f64,
    pub s: usize,
}

impl Default for NfftConfig {
    fn default() -> Self {
        NfftConfig { m: 32, sigma_over: 2.0, s: 8 }
    }
}

/// Per-window affine maps into the transform domain.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowScaling<T> {
    /// Divisor `c_s` per window.
    pub scale: Vec<T>,
    /// Center subtracted from each coordinate, per window.
    pub center: Vec<Vec<T>>,
}

impl<T: Scalar> WindowScaling<T> {
    /// Scaled window coordinates of every point, row-major per window.
    pub fn apply(&self, x: &PointSet<T>, windows: &FeatureWindows) -> Vec<Vec<T>> {
        windows
            .iter()
            .enumerate()
            .map(|(s, w)| {
                let mut pts = x.project(w);
                for row in pts.chunks_mut(w.len()) {
                    for (v, c) in row.iter_mut().zip(&self.center[s]) {
                        *v = (*v - *c) / self.scale[s];
                    }
                }
                pts
            })
            .collect()
    }

    /// Effective length scale `ℓ / c_s` of window `s`.
    pub fn effective_ell(&self, s: usize, ell: T) -> T {
        ell / self.scale[s]
    }
}

/// Computes `c_s = range_s / (1/2 − 1/64)` and centers per window and
/// returns the scaling with the scaled point sets.
pub fn scale_windows<T: Scalar>(x: &PointSet<T>, windows: &FeatureWindows) -> Result<(WindowScaling<T>, Vec<Vec<T>>)> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input coordinates"));
    }
    windows.check_features(x.p())?;
    let mut scale = Vec::with_capacity(windows.len());
    let mut center = Vec::with_capacity(windows.len());
    for w in windows.iter() {
        let mut range = T::zero();
        let mut c = Vec::with_capacity(w.len());
        for &f in w {
            let col = x.column(f);
            let lo = col.iter().copied().fold(T::infinity(), T::min);
            let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
            range = range.max(hi - lo);
            c.push((lo + hi) / T::of(2.0));
        }
        let cs = if range > T::zero() { range / T::of(0.5 - SCALE_MARGIN) } else { T::one() };
        scale.push(cs);
        center.push(c);
    }
    let scaling = WindowScaling { scale, center };
    let pts = scaling.apply(x, windows);
    let quarter = T::of(0.25);
    for (s, p) in pts.iter().enumerate() {
        if let Some(i) = p.iter().position(|v| !(*v >= -quarter && *v < quarter)) {
            return Err(Error::Domain { index: i / windows.get(s).len() });
        }
    }
    Ok((scaling, pts))
}

/// Kernel and derivative weights of one window on the half spectrum used by
/// the real transform path.
#[derive(Clone, Debug)]
struct WindowTables<T> {
    kernel: Vec<T>,
    derivative: Vec<T>,
}

/// Samples of the (derivative) kernel on the centered `m^d` grid over `[-1/2, 1/2)^d`.
fn kernel_grid_samples<T: Scalar>(family: Family, d: usize, m: usize, ell: T, derivative: bool, factor: T) -> Vec<T> {
    let total = m.pow(d as u32);
    let h = (m / 2) as i64;
    let mf = T::of_usize(m);
    (0..total)
        .map(|mut pos| {
            let mut r2 = T::zero();
            for _ in 0..d {
                let l = (pos % m) as i64 - h;
                pos /= m;
                let x = T::of(l as f64) / mf;
                r2 += x * x;
            }
            let v = if derivative { derivative_from_sq(family, r2, ell) } else { kernel_from_sq(family, r2, ell) };
            v * factor
        })
        .collect()
}

/// Fourier coefficient table of the periodically continued window kernel.
pub fn kernel_coefficients<T: Scalar>(family: Family, d: usize, m: usize, ell: T, derivative: bool) -> Result<CoeffTable<T>> {
    grid_fourier_coeffs(&kernel_grid_samples(family, d, m, ell, derivative, T::one()), d, m)
}

/// Spreads coefficients over `[-m/2, m/2]^{d-1} × [0, m/2]`, halving each
/// Nyquist edge, and folds in the window deconvolution of `plan`.
fn half_spectrum_weights<T: Scalar>(plan: &FourierPlan<T>, b: &CoeffTable<T>) -> Vec<T> {
    let d = plan.d();
    let m = plan.m();
    let h = (m / 2) as i64;
    let mut w = Vec::with_capacity(plan.real_even_len());
    let mut k = vec![0i64; d];
    let total = plan.real_even_len();
    let half = T::of(0.5);
    for pos in 0..total {
        let mut rem = pos;
        k[d - 1] = (rem % (m / 2 + 1)) as i64;
        rem /= m / 2 + 1;
        for a in (0..d - 1).rev() {
            k[a] = (rem % (m + 1)) as i64 - h;
            rem /= m + 1;
        }
        let mut factor = T::one();
        let mut kk = vec![0i64; d];
        for a in 0..d {
            if k[a].abs() == h {
                factor *= half;
            }
            kk[a] = if k[a] == h { -h } else { k[a] };
            let ih = plan.inv_hat(k[a]);
            factor *= ih * ih;
        }
        w.push(b.get(&kk).re * factor);
    }
    w
}

/// Matrix-vector products with `K̂`, its hyperparameter derivatives, and
/// rectangular kernel blocks, using either dense matrices or NFFT fast sums.
pub struct AdditiveMatvecEngine<T: Scalar> {
    spec: KernelSpec<T>,
    backend: Backend,
    config: NfftConfig,
    x: PointSet<T>,
    scaling: WindowScaling<T>,
    plans: Vec<FourierPlan<T>>,
    tables: Vec<WindowTables<T>>,
    table_ell: Option<T>,
    dense_k: Option<Matrix<T>>,
    dense_d: Option<Matrix<T>>,
    dense_ell: Option<T>,
}

impl<T: Scalar> fmt::Debug for AdditiveMatvecEngine<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveMatvecEngine")
            .field("backend", &self.backend)
            .field("n", &self.x.n())
            .field("windows", &self.spec.windows)
            .field("params", &self.spec.params)
            .finish()
    }
}

impl<T: Scalar> AdditiveMatvecEngine<T> {
    pub fn new(spec: KernelSpec<T>, x: &PointSet<T>, backend: Backend, config: NfftConfig) -> Result<Self> {
        let (scaling, pts) = scale_windows(x, &spec.windows)?;
        Self::with_scaling(spec, x, backend, config, scaling, pts)
    }

    /// Builds an engine whose window scaling also covers `extra` points, so
    /// that rectangular products with them stay inside the domain.
    pub fn covering(spec: KernelSpec<T>, x: &PointSet<T>, extra: &PointSet<T>, backend: Backend, config: NfftConfig) -> Result<Self> {
        if extra.p() != x.p() {
            return Err(Error::SizeMismatch { expected: x.p(), got: extra.p() });
        }
        let mut rows = x.as_slice().to_vec();
        rows.extend_from_slice(extra.as_slice());
        let union = PointSet::new(x.n() + extra.n(), x.p(), rows)?;
        let (scaling, _) = scale_windows(&union, &spec.windows)?;
        let pts = scaling.apply(x, &spec.windows);
        Self::with_scaling(spec, x, backend, config, scaling, pts)
    }

    fn with_scaling(
        spec: KernelSpec<T>,
        x: &PointSet<T>,
        backend: Backend,
        config: NfftConfig,
        scaling: WindowScaling<T>,
        pts: Vec<Vec<T>>,
    ) -> Result<Self> {
        let mut plans = Vec::new();
        if backend == Backend::Nfft {
            for (s, p) in pts.iter().enumerate() {
                let d = spec.windows.get(s).len();
                plans.push(FourierPlan::new(p, d, config.m, T::of(config.sigma_over), config.s)?);
            }
        }
        let mut engine = AdditiveMatvecEngine {
            spec,
            backend,
            config,
            x: x.clone(),
            scaling,
            plans,
            tables: Vec::new(),
            table_ell: None,
            dense_k: None,
            dense_d: None,
            dense_ell: None,
        };
        engine.refresh()?;
        Ok(engine)
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn params(&self) -> &HyperParams<T> {
        &self.spec.params
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn nfft_config(&self) -> NfftConfig {
        self.config
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn points(&self) -> &PointSet<T> {
        &self.x
    }

    pub fn scaling(&self) -> &WindowScaling<T> {
        &self.scaling
    }

    /// Updates the hyperparameters; tables are regenerated only when `ℓ` changes.
    pub fn set_params(&mut self, params: HyperParams<T>) -> Result<()> {
        self.spec.params = params;
        self.refresh()
    }

    fn refresh(&mut self) -> Result<()> {
        let ell = self.spec.params.ell;
        match self.backend {
            Backend::Nfft => {
                if self.table_ell != Some(ell) {
                    let mut tables = Vec::with_capacity(self.plans.len());
                    for (s, plan) in self.plans.iter().enumerate() {
                        let d = plan.d();
                        let cs = self.scaling.scale[s];
                        let ell_s = ell / cs;
                        let bk = grid_fourier_coeffs(&kernel_grid_samples(self.spec.family, d, plan.m(), ell_s, false, T::one()), d, plan.m())?;
                        let bd = grid_fourier_coeffs(
                            &kernel_grid_samples(self.spec.family, d, plan.m(), ell_s, true, T::one() / cs),
                            d,
                            plan.m(),
                        )?;
                        tables.push(WindowTables { kernel: half_spectrum_weights(plan, &bk), derivative: half_spectrum_weights(plan, &bd) });
                    }
                    self.tables = tables;
                    self.table_ell = Some(ell);
                }
            }
            Backend::Exact => {
                if self.dense_ell != Some(ell) {
                    self.dense_k = Some(self.unit_dense(Operator::K)?);
                    self.dense_d = None;
                    self.dense_ell = Some(ell);
                }
            }
        }
        Ok(())
    }

    fn unit_spec(&self) -> KernelSpec<T> {
        let mut s = self.spec.clone();
        s.params.sigma_f = T::one();
        s
    }

    fn unit_dense(&self, op: Operator) -> Result<Matrix<T>> {
        dense_matrix(&self.unit_spec(), &self.x, op)
    }

    fn ensure_fresh(&self) -> Result<()> {
        let ell = Some(self.spec.params.ell);
        let fresh = match self.backend {
            Backend::Nfft => self.table_ell == ell,
            Backend::Exact => self.dense_ell == ell,
        };
        if fresh {
            Ok(())
        } else {
            Err(Error::StaleTables)
        }
    }

    /// `Σ_s K_s v` (no `σ_f` factor), or its `ℓ`-derivative.
    fn window_sum(&mut self, v: &[T], derivative: bool) -> Result<Vec<T>> {
        self.ensure_fresh()?;
        match self.backend {
            Backend::Nfft => {
                let mut out = vec![T::zero(); v.len()];
                for (plan, t) in self.plans.iter().zip(&self.tables) {
                    let w = if derivative { &t.derivative } else { &t.kernel };
                    let part = plan.convolve_real_even(w, v);
                    axpy(T::one(), &part, &mut out);
                }
                Ok(out)
            }
            Backend::Exact => {
                if derivative {
                    Ok(self.derivative_matrix()?.matvec(v))
                } else {
                    Ok(self.dense_k.as_ref().expect("dense kernel matrix").matvec(v))
                }
            }
        }
    }

    fn derivative_matrix(&mut self) -> Result<&Matrix<T>> {
        if self.dense_d.is_none() {
            self.dense_d = Some(self.unit_dense(Operator::DEll)?);
        }
        Ok(self.dense_d.as_ref().unwrap())
    }

    /// Applies `op` to `v`.
    pub fn matvec(&mut self, v: &[T], op: Operator) -> Result<Vec<T>> {
        check_len(self.n(), v.len())?;
        let HyperParams { sigma_f, sigma_eps, .. } = self.spec.params;
        let two = T::of(2.0);
        let out = match op {
            Operator::K | Operator::KHat => {
                let mut y = self.window_sum(v, false)?;
                for yi in y.iter_mut() {
                    *yi *= sigma_f * sigma_f;
                }
                if op == Operator::KHat {
                    axpy(sigma_eps * sigma_eps, v, &mut y);
                }
                y
            }
            Operator::DEll => {
                let mut y = self.window_sum(v, true)?;
                for yi in y.iter_mut() {
                    *yi *= sigma_f * sigma_f;
                }
                y
            }
            Operator::DSigmaF => {
                let mut y = self.window_sum(v, false)?;
                for yi in y.iter_mut() {
                    *yi *= two * sigma_f;
                }
                y
            }
            Operator::DSigmaEps => v.iter().map(|x| two * sigma_eps * *x).collect(),
        };
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matvec"));
        }
        Ok(out)
    }

    /// Applies `op` to several vectors; the exact backend reads its matrix once.
    pub fn matvec_many(&mut self, vs: &[Vec<T>], op: Operator) -> Result<Vec<Vec<T>>> {
        if self.backend == Backend::Nfft || op == Operator::DSigmaEps || vs.len() < 2 {
            return vs.iter().map(|v| self.matvec(v, op)).collect();
        }
        for v in vs {
            check_len(self.n(), v.len())?;
        }
        self.ensure_fresh()?;
        let HyperParams { sigma_f, sigma_eps, .. } = self.spec.params;
        let refs: Vec<&[T]> = vs.iter().map(|v| v.as_slice()).collect();
        let (mut outs, scale) = match op {
            Operator::DEll => (self.derivative_matrix()?.matvec_many(&refs), sigma_f * sigma_f),
            Operator::DSigmaF => (self.dense_k.as_ref().unwrap().matvec_many(&refs), T::of(2.0) * sigma_f),
            _ => (self.dense_k.as_ref().unwrap().matvec_many(&refs), sigma_f * sigma_f),
        };
        for (o, v) in outs.iter_mut().zip(vs) {
            for oi in o.iter_mut() {
                *oi *= scale;
            }
            if op == Operator::KHat {
                axpy(sigma_eps * sigma_eps, v, o);
            }
        }
        Ok(outs)
    }

    /// `K_{test,train} v` (with `σ_f²`, without noise).
    pub fn cross_matvec(&self, x_test: &PointSet<T>, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n(), v.len())?;
        if x_test.p() != self.x.p() {
            return Err(Error::SizeMismatch { expected: self.x.p(), got: x_test.p() });
        }
        let sf2 = self.spec.params.sigma_f * self.spec.params.sigma_f;
        match self.backend {
            Backend::Exact => {
                let c = crate::kernels::dense_cross(&self.spec, x_test, &self.x)?;
                Ok(c.matvec(v))
            }
            Backend::Nfft => {
                self.ensure_fresh()?;
                let test_pts = self.scaling.apply(x_test, &self.spec.windows);
                let quarter = T::of(0.25);
                let n = self.n();
                let nt = x_test.n();
                let mut out = vec![T::zero(); nt];
                let mut padded = v.to_vec();
                padded.resize(n + nt, T::zero());
                for (s, plan) in self.plans.iter().enumerate() {
                    let d = plan.d();
                    if let Some(i) = test_pts[s].iter().position(|c| !(*c >= -quarter && *c < quarter)) {
                        return Err(Error::Domain { index: i / d });
                    }
                    let mut union = plan.points().to_vec();
                    union.extend_from_slice(&test_pts[s]);
                    let uplan = FourierPlan::new(&union, d, plan.m(), plan.sigma_over(), plan.s())?;
                    let part = uplan.convolve_real_even(&self.tables[s].kernel, &padded);
                    axpy(sf2, &part[n..], &mut out);
                }
                Ok(out)
            }
        }
    }

    /// Column `j` of `K_{train,test}`, evaluated directly.
    pub fn cross_column(&self, x_test: &[T]) -> Vec<T> {
        let sf2 = self.spec.params.sigma_f * self.spec.params.sigma_f;
        (0..self.n())
            .map(|i| {
                let xi = self.x.row(i);
                sf2 * self
                    .spec
                    .windows
                    .iter()
                    .map(|w| {
                        let r2: T = w.iter().map(|&f| (xi[f] - x_test[f]) * (xi[f] - x_test[f])).sum();
                        kernel_from_sq(self.spec.family, r2, self.spec.params.ell)
                    })
                    .sum::<T>()
            })
            .collect()
    }
}
