//! Nonequispaced FFT with a truncated Kaiser–Bessel window.
//!
//! Frequencies live in `I_m = [-m/2, m/2)^d`; coefficient tables store them
//! centered and row-major, table index `i` on an axis meaning `k = i - m/2`.

use crate::error::{check_len, Error, Result};
use crate::scalar::{ComplexFft, RealFftPair, Scalar};
use num_complex::Complex;

/// Complex values indexed by the frequency set `I_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTable<T> {
    d: usize,
    m: usize,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> CoeffTable<T> {
    pub fn zeros(d: usize, m: usize) -> Self {
        CoeffTable { d, m, values: vec![Complex::default(); m.pow(d as u32)] }
    }

    pub fn from_values(d: usize, m: usize, values: Vec<Complex<T>>) -> Result<Self> {
        check_len(m.pow(d as u32), values.len())?;
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("coefficient table"));
        }
        Ok(CoeffTable { d, m, values })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    /// Table position of the multi-index `k`.
    pub fn position(&self, k: &[i64]) -> usize {
        let h = (self.m / 2) as i64;
        k.iter().fold(0usize, |acc, &kj| acc * self.m + (kj + h) as usize)
    }

    /// Multi-index of table position `pos`.
    pub fn frequency(&self, mut pos: usize) -> Vec<i64> {
        let h = (self.m / 2) as i64;
        let mut k = vec![0i64; self.d];
        for a in (0..self.d).rev() {
            k[a] = (pos % self.m) as i64 - h;
            pos /= self.m;
        }
        k
    }

    pub fn get(&self, k: &[i64]) -> Complex<T> {
        self.values[self.position(k)]
    }

    pub fn norm1(&self) -> T {
        self.values.iter().map(|c| c.norm()).sum()
    }
}

/// Kaiser–Bessel window shape parameter `b = π(2 − 1/σ)`.
fn kb_shape(sigma: f64) -> f64 {
    std::f64::consts::PI * (2.0 - 1.0 / sigma)
}

/// `e^{-x} I₀(x)` for `x ≥ 0`.
pub(crate) fn scaled_bessel_i0(x: f64) -> f64 {
    if x < 50.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..12 {
            let a = (2 * j - 1) as f64;
            term *= a * a / (j as f64 * 8.0 * x);
            sum += term;
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// Window value `φ(x)/φ(0)` in grid units `t = n·x`.
fn window_normalized(t: f64, s: f64, b: f64) -> f64 {
    let w2 = s * s - t * t;
    if w2 < 0.0 {
        return 0.0;
    }
    let w = w2.sqrt();
    let denom = 1.0 - (-2.0 * b * s).exp();
    if w < 1e-8 {
        return 2.0 * b * s * (-b * s).exp() / denom;
    }
    (s / w) * (b * (w - s)).exp() * (1.0 - (-2.0 * b * w).exp()) / denom
}

/// Per-axis deconvolution value `n φ̂(k) / φ(0)`.
fn window_hat_normalized(k: f64, n: f64, s: f64, b: f64) -> f64 {
    let a = 2.0 * std::f64::consts::PI * k / n;
    let z = s * (b * b - a * a).sqrt();
    let denom = 1.0 - (-2.0 * b * s).exp();
    scaled_bessel_i0(z) * 2.0 * std::f64::consts::PI * s * (z - b * s).exp() / denom
}

/// Oversampled grid length: `σm` rounded up to the next even integer.
pub fn oversampled_len(m: usize, sigma: f64) -> usize {
    let raw = (sigma * m as f64 - 1e-9).ceil() as usize;
    raw + raw % 2
}

/// Immutable per-point NFFT state.
#[derive(Clone)]
pub struct FourierPlan<T: Scalar> {
    d: usize,
    m: usize,
    sigma: T,
    s: usize,
    n_os: usize,
    n_points: usize,
    points: Vec<T>,
    width: usize,
    // First grid index of each point's window per axis, in centered storage
    // where grid point l/n sits at index (l + n/2) mod n.
    starts: Vec<u32>,
    wts: Vec<T>,
    // Window data is stored in grid order for locality; slot q holds point order[q].
    order: Vec<u32>,
    // No window wraps around the grid.
    contiguous: bool,
    // Per axis, the index range touched by some window.
    active: Vec<(usize, usize)>,
    // (-1)^k/(n φ̂(k)) for k ∈ [-m/2, m/2], stored at k + m/2, up to φ(0);
    // the sign accounts for the centered grid storage.
    inv_hat: Vec<T>,
    fwd: ComplexFft<T>,
    inv: ComplexFft<T>,
    real: RealFftPair<T>,
}

impl<T: Scalar> std::fmt::Debug for FourierPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPlan")
            .field("d", &self.d)
            .field("m", &self.m)
            .field("sigma", &self.sigma)
            .field("s", &self.s)
            .field("n_os", &self.n_os)
            .field("n_points", &self.n_points)
            .finish()
    }
}

/// Builds a plan for `points` (row-major, `d` coordinates each) in `[-1/4, 1/4)^d`.
pub fn build_plan<T: Scalar>(points: &[T], d: usize, m: usize, sigma_over: T, s: usize) -> Result<FourierPlan<T>> {
    FourierPlan::new(points, d, m, sigma_over, s)
}

impl<T: Scalar> FourierPlan<T> {
    pub fn new(points: &[T], d: usize, m: usize, sigma_over: T, s: usize) -> Result<Self> {
        let quarter = T::of(0.25);
        if points.iter().any(|x| !(*x >= -quarter && *x < quarter)) {
            let bad = points.iter().position(|x| !(*x >= -quarter && *x < quarter)).unwrap();
            return Err(Error::Domain { index: bad / d.max(1) });
        }
        Self::new_on_torus(points, d, m, sigma_over, s)
    }

    /// Same as [`FourierPlan::new`] but accepts any point in `[-1/2, 1/2)^d`.
    pub(crate) fn new_on_torus(points: &[T], d: usize, m: usize, sigma_over: T, s: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension d = {d} not in 1..=3")));
        }
        if m < 4 || !m.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("bandwidth m = {m} must be even and >= 4")));
        }
        let sigma = sigma_over.to64();
        if !(sigma > 1.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("oversampling {sigma} must exceed 1")));
        }
        if s < 1 || 2 * s >= (sigma * m as f64) as usize {
            return Err(Error::InvalidParameter(format!("support s = {s} must satisfy 1 <= s < sigma*m/2")));
        }
        if !points.len().is_multiple_of(d) {
            return Err(Error::SizeMismatch { expected: (points.len() / d + 1) * d, got: points.len() });
        }
        let half = T::of(0.5);
        if let Some(bad) = points.iter().position(|x| !(*x >= -half && *x < half)) {
            return Err(Error::Domain { index: bad / d });
        }
        let n_os = oversampled_len(m, sigma);
        let n_points = points.len() / d;
        let b = kb_shape(sigma);
        let sf = s as f64;
        let width = 2 * s + 1;
        let mut starts = Vec::with_capacity(n_points * d);
        let mut wts = Vec::with_capacity(n_points * d * width);
        let nf = n_os as f64;
        let half_n = (n_os / 2) as i64;
        let mut contiguous = true;
        let mut active = vec![(n_os, 0); d];
        for (i, p) in points.iter().enumerate() {
            let t = p.to64() * nf;
            let u = t.floor() as i64;
            let first = u - s as i64 + half_n;
            if first < 0 || first + width as i64 > n_os as i64 {
                contiguous = false;
            } else {
                let r = &mut active[i % d];
                r.0 = r.0.min(first as usize);
                r.1 = r.1.max(first as usize + width);
            }
            starts.push(first.rem_euclid(n_os as i64) as u32);
            for l in (u - s as i64)..=(u + s as i64) {
                wts.push(T::of(window_normalized(t - l as f64, sf, b)));
            }
        }
        if !contiguous || n_points == 0 {
            active = vec![(0, n_os); d];
        }
        let mut order: Vec<u32> = (0..n_points as u32).collect();
        order.sort_by_key(|&j| &starts[j as usize * d..(j as usize + 1) * d]);
        let starts: Vec<u32> = order.iter().flat_map(|&j| starts[j as usize * d..(j as usize + 1) * d].iter().copied()).collect();
        let wts: Vec<T> = order.iter().flat_map(|&j| wts[j as usize * d * width..(j as usize + 1) * d * width].iter().copied()).collect();
        let mut inv_hat = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let k = i as f64 - (m / 2) as f64;
            let c = window_hat_normalized(k, nf, sf, b);
            let ct = T::of(c);
            if !(ct > T::zero()) || !(T::one() / ct).is_finite() {
                return Err(Error::WindowUnderflow);
            }
            let sign = if (i as i64 - (m / 2) as i64).rem_euclid(2) == 1 { -T::one() } else { T::one() };
            inv_hat.push(sign / ct);
        }
        Ok(FourierPlan {
            d,
            m,
            sigma: sigma_over,
            s,
            n_os,
            n_points,
            points: points.to_vec(),
            width,
            starts,
            wts,
            order,
            contiguous,
            active,
            inv_hat,
            fwd: T::c2c(n_os, false),
            inv: T::c2c(n_os, true),
            real: T::real_pair(n_os),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sigma_over(&self) -> T {
        self.sigma
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Oversampled grid length per axis.
    pub fn grid_len(&self) -> usize {
        self.n_os
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn frequency_count(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Deconvolution factor `1/(n φ̂(k))` up to a constant shared with the
    /// spread weights, for `-m/2 ≤ k ≤ m/2`.
    pub(crate) fn inv_hat(&self, k: i64) -> T {
        self.inv_hat[(k + (self.m / 2) as i64) as usize]
    }

    /// Window Fourier coefficients relative to the window peak, for `k ∈ [-m/2, m/2)`.
    pub fn window_coefficients(&self) -> Vec<T> {
        self.inv_hat[..self.m].iter().map(|v| T::one() / v.abs()).collect()
    }

    #[inline]
    fn axis_window(&self, j: usize, a: usize) -> (usize, &[T]) {
        let off = (j * self.d + a) * self.width;
        (self.starts[j * self.d + a] as usize, &self.wts[off..off + self.width])
    }

    fn wrapped(&self, start: usize, buf: &mut [usize]) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = (start + i) % self.n_os;
        }
    }

    /// `g_l = Σ_j v_j φ(x_j − l/n)` on the oversampled grid.
    fn spread<V>(&self, v: &[V], grid: &mut [V])
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::ops::AddAssign,
    {
        let n = self.n_os;
        let w = self.width;
        if self.contiguous {
            for (j, &p) in self.order.iter().enumerate() {
                let vj = v[p as usize];
                match self.d {
                    1 => {
                        let (s0, w0) = self.axis_window(j, 0);
                        for (g, &wa) in grid[s0..s0 + w].iter_mut().zip(w0) {
                            *g += vj * wa;
                        }
                    }
                    2 => {
                        let (s0, w0) = self.axis_window(j, 0);
                        let (s1, w1) = self.axis_window(j, 1);
                        for (ia, &wa) in w0.iter().enumerate() {
                            let va = vj * wa;
                            let row = &mut grid[(s0 + ia) * n + s1..(s0 + ia) * n + s1 + w];
                            for (g, &wb) in row.iter_mut().zip(w1) {
                                *g += va * wb;
                            }
                        }
                    }
                    _ => {
                        let (s0, w0) = self.axis_window(j, 0);
                        let (s1, w1) = self.axis_window(j, 1);
                        let (s2, w2) = self.axis_window(j, 2);
                        for (ia, &wa) in w0.iter().enumerate() {
                            let va = vj * wa;
                            let plane = (s0 + ia) * n;
                            for (ib, &wb) in w1.iter().enumerate() {
                                let vab = va * wb;
                                let off = (plane + s1 + ib) * n + s2;
                                for (g, &wc) in grid[off..off + w].iter_mut().zip(w2) {
                                    *g += vab * wc;
                                }
                            }
                        }
                    }
                }
            }
            return;
        }
        let mut i0 = vec![0; w];
        let mut i1 = vec![0; w];
        let mut i2 = vec![0; w];
        for (j, &p) in self.order.iter().enumerate() {
            let vj = v[p as usize];
            let (s0, w0) = self.axis_window(j, 0);
            self.wrapped(s0, &mut i0);
            if self.d == 1 {
                for (&ia, &wa) in i0.iter().zip(w0) {
                    grid[ia] += vj * wa;
                }
                continue;
            }
            let (s1, w1) = self.axis_window(j, 1);
            self.wrapped(s1, &mut i1);
            if self.d == 2 {
                for (&ia, &wa) in i0.iter().zip(w0) {
                    let va = vj * wa;
                    for (&ib, &wb) in i1.iter().zip(w1) {
                        grid[ia * n + ib] += va * wb;
                    }
                }
                continue;
            }
            let (s2, w2) = self.axis_window(j, 2);
            self.wrapped(s2, &mut i2);
            for (&ia, &wa) in i0.iter().zip(w0) {
                let va = vj * wa;
                for (&ib, &wb) in i1.iter().zip(w1) {
                    let vab = va * wb;
                    let off = (ia * n + ib) * n;
                    for (&ic, &wc) in i2.iter().zip(w2) {
                        grid[off + ic] += vab * wc;
                    }
                }
            }
        }
    }

    /// `f_j = Σ_l g_l φ(x_j − l/n)`.
    fn gather<V>(&self, grid: &[V], out: &mut [V], zero: V)
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::ops::AddAssign,
    {
        let n = self.n_os;
        let w = self.width;
        if self.contiguous {
            for (j, &p) in self.order.iter().enumerate() {
                let mut acc = zero;
                match self.d {
                    1 => {
                        let (s0, w0) = self.axis_window(j, 0);
                        for (&g, &wa) in grid[s0..s0 + w].iter().zip(w0) {
                            acc += g * wa;
                        }
                    }
                    2 => {
                        let (s0, w0) = self.axis_window(j, 0);
                        let (s1, w1) = self.axis_window(j, 1);
                        for (ia, &wa) in w0.iter().enumerate() {
                            let mut r = zero;
                            let row = &grid[(s0 + ia) * n + s1..(s0 + ia) * n + s1 + w];
                            for (&g, &wb) in row.iter().zip(w1) {
                                r += g * wb;
                            }
                            acc += r * wa;
                        }
                    }
                    _ => {
                        let (s0, w0) = self.axis_window(j, 0);
                        let (s1, w1) = self.axis_window(j, 1);
                        let (s2, w2) = self.axis_window(j, 2);
                        for (ia, &wa) in w0.iter().enumerate() {
                            let plane = (s0 + ia) * n;
                            let mut p = zero;
                            for (ib, &wb) in w1.iter().enumerate() {
                                let off = (plane + s1 + ib) * n + s2;
                                p += dot_split(&grid[off..off + w], w2, zero) * wb;
                            }
                            acc += p * wa;
                        }
                    }
                }
                out[p as usize] = acc;
            }
            return;
        }
        let mut i0 = vec![0; w];
        let mut i1 = vec![0; w];
        let mut i2 = vec![0; w];
        for (j, &p) in self.order.iter().enumerate() {
            let mut acc = zero;
            let (s0, w0) = self.axis_window(j, 0);
            self.wrapped(s0, &mut i0);
            match self.d {
                1 => {
                    for (&ia, &wa) in i0.iter().zip(w0) {
                        acc += grid[ia] * wa;
                    }
                }
                2 => {
                    let (s1, w1) = self.axis_window(j, 1);
                    self.wrapped(s1, &mut i1);
                    for (&ia, &wa) in i0.iter().zip(w0) {
                        let mut r = zero;
                        for (&ib, &wb) in i1.iter().zip(w1) {
                            r += grid[ia * n + ib] * wb;
                        }
                        acc += r * wa;
                    }
                }
                _ => {
                    let (s1, w1) = self.axis_window(j, 1);
                    let (s2, w2) = self.axis_window(j, 2);
                    self.wrapped(s1, &mut i1);
                    self.wrapped(s2, &mut i2);
                    for (&ia, &wa) in i0.iter().zip(w0) {
                        let mut p = zero;
                        for (&ib, &wb) in i1.iter().zip(w1) {
                            let off = (ia * n + ib) * n;
                            let mut r = zero;
                            for (&ic, &wc) in i2.iter().zip(w2) {
                                r += grid[off + ic] * wc;
                            }
                            p += r * wb;
                        }
                        acc += p * wa;
                    }
                }
            }
            out[p as usize] = acc;
        }
    }

    /// Evaluates `Σ_{k∈I_m} b_k e^{2πi k·x_j}` at every plan point.
    pub fn forward(&self, b: &CoeffTable<T>) -> Result<Vec<Complex<T>>> {
        if b.d != self.d || b.m != self.m {
            return Err(Error::SizeMismatch { expected: self.frequency_count(), got: b.values.len() });
        }
        let m = self.m;
        let mut data: Vec<Complex<T>> = b.values.clone();
        for (pos, c) in data.iter_mut().enumerate() {
            *c *= self.deconv(&b.frequency(pos));
        }
        let mut dims = vec![m; self.d];
        for a in 0..self.d {
            data = axis_pass(&data, &dims, a, self.n_os, m / 2, true, false, &self.inv, None);
            dims[a] = self.n_os;
        }
        let mut out = vec![Complex::default(); self.n_points];
        self.gather(&data, &mut out, Complex::default());
        Ok(out)
    }

    /// Approximates `Σ_j v_j e^{-2πi k·x_j}` for every `k ∈ I_m`.
    pub fn adjoint(&self, v: &[T]) -> Result<CoeffTable<T>> {
        check_len(self.n_points, v.len())?;
        let vc: Vec<Complex<T>> = v.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.adjoint_complex(&vc)
    }

    /// Adjoint transform of complex values.
    pub fn adjoint_complex(&self, v: &[Complex<T>]) -> Result<CoeffTable<T>> {
        check_len(self.n_points, v.len())?;
        let n = self.n_os;
        let mut grid = vec![Complex::default(); n.pow(self.d as u32)];
        self.spread(v, &mut grid);
        let mut dims = vec![n; self.d];
        for a in 0..self.d {
            grid = axis_pass(&grid, &dims, a, self.m, self.m / 2, false, true, &self.fwd, None);
            dims[a] = self.m;
        }
        let mut table = CoeffTable { d: self.d, m: self.m, values: grid };
        for pos in 0..table.values.len() {
            let f = self.deconv(&table.frequency(pos));
            table.values[pos] *= f;
        }
        Ok(table)
    }

    fn deconv(&self, k: &[i64]) -> T {
        k.iter().fold(T::one(), |acc, &kj| acc * self.inv_hat(kj))
    }

    /// Applies the real, even trigonometric polynomial whose coefficients on
    /// `[-m/2, m/2]^{d-1} × [0, m/2]` are `weights` (window deconvolution
    /// already folded in) to `v`: adjoint spread, diagonal scaling, forward
    /// gather, using real transforms along the last axis.
    pub(crate) fn convolve_real_even(&self, weights: &[T], v: &[T]) -> Vec<T> {
        let n = self.n_os;
        let m = self.m;
        let d = self.d;
        let hl = m / 2 + 1;
        let lines = n.pow(d as u32 - 1);
        let mut grid = vec![T::zero(); n.pow(d as u32)];
        self.spread(v, &mut grid);

        let nh = n / 2 + 1;
        let mut spec = vec![Complex::default(); nh];
        let mut scratch = vec![Complex::default(); self.real.scratch_len()];
        let mut half = vec![Complex::default(); lines * hl];
        let live = |line: usize| match d {
            1 => true,
            2 => (self.active[0].0..self.active[0].1).contains(&line),
            _ => (self.active[0].0..self.active[0].1).contains(&(line / n)) && (self.active[1].0..self.active[1].1).contains(&(line % n)),
        };
        for (i, (line, out)) in grid.chunks_mut(n).zip(half.chunks_mut(hl)).enumerate() {
            if live(i) {
                self.real.forward(line, &mut spec, &mut scratch);
                out.copy_from_slice(&spec[..hl]);
            }
        }
        let mut dims = vec![n; d];
        dims[d - 1] = hl;
        let mut data = half;
        let prune = |a: usize| if a == 1 { Some(self.active[0]) } else { None };
        for a in (0..d - 1).rev() {
            data = axis_pass(&data, &dims, a, m + 1, m / 2, false, true, &self.fwd, prune(a));
            dims[a] = m + 1;
        }
        for (c, &w) in data.iter_mut().zip(weights) {
            *c *= w;
        }
        for a in 0..d - 1 {
            data = axis_pass(&data, &dims, a, n, m / 2, true, false, &self.inv, prune(a));
            dims[a] = n;
        }
        for (i, (line, src)) in grid.chunks_mut(n).zip(data.chunks(hl)).enumerate() {
            if !live(i) {
                continue;
            }
            spec[..hl].copy_from_slice(src);
            for c in spec[hl..].iter_mut() {
                *c = Complex::default();
            }
            self.real.inverse(&mut spec, line, &mut scratch);
        }
        let mut out = vec![T::zero(); self.n_points];
        self.gather(&grid, &mut out, T::zero());
        out
    }

    /// Size of the weight array expected by `convolve_real_even`.
    pub(crate) fn real_even_len(&self) -> usize {
        (self.m + 1).pow(self.d as u32 - 1) * (self.m / 2 + 1)
    }
}

/// `Σ g_i w_i` with four independent partial sums.
#[inline]
fn dot_split<T: Scalar, V>(g: &[V], w: &[T], zero: V) -> V
where
    V: Copy + std::ops::Mul<T, Output = V> + std::ops::AddAssign,
{
    let mut acc = [zero; 4];
    let mut gc = g.chunks_exact(4);
    let mut wc = w.chunks_exact(4);
    for (a, b) in (&mut gc).zip(&mut wc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    for (&a, &b) in gc.remainder().iter().zip(wc.remainder()) {
        acc[0] += a * b;
    }
    acc[0] += acc[1];
    acc[2] += acc[3];
    acc[0] += acc[2];
    acc[0]
}

#[inline]
fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// One-dimensional transforms along `axis` of a row-major array with shape
/// `dims`, resizing that axis to `out_len`. Centered sides map index `i` to
/// FFT position `(i − h) mod n`; uncentered sides are already in FFT order.
/// With `outer_range`, only lines whose outer index lies in the range are
/// transformed and the others are left zero.
#[allow(clippy::too_many_arguments)]
fn axis_pass<T: Scalar>(
    data: &[Complex<T>],
    dims: &[usize],
    axis: usize,
    out_len: usize,
    h: usize,
    in_centered: bool,
    out_centered: bool,
    fft: &ComplexFft<T>,
    outer_range: Option<(usize, usize)>,
) -> Vec<Complex<T>> {
    let n = fft.len();
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let in_len = dims[axis];
    let zero = Complex::default();
    let mut out = vec![zero; outer * out_len * inner];
    let mut buf = vec![zero; inner * n];
    let mut scratch = vec![zero; fft.scratch_len()];
    let in_pos: Vec<usize> =
        (0..in_len).map(|i| if in_centered { wrap(i as i64 - h as i64, n) } else { i }).collect();
    let out_pos: Vec<usize> =
        (0..out_len).map(|i| if out_centered { wrap(i as i64 - h as i64, n) } else { i }).collect();
    let (o_lo, o_hi) = outer_range.unwrap_or((0, outer));
    for o in o_lo..o_hi.min(outer) {
        let src = &data[o * in_len * inner..(o + 1) * in_len * inner];
        if in_len < n {
            buf.fill(zero);
        }
        if inner == 1 {
            for (i, &p) in in_pos.iter().enumerate() {
                buf[p] = src[i];
            }
        } else {
            for (i, &p) in in_pos.iter().enumerate() {
                let row = &src[i * inner..(i + 1) * inner];
                for (q, &val) in row.iter().enumerate() {
                    buf[q * n + p] = val;
                }
            }
        }
        fft.process(&mut buf, &mut scratch);
        let dst = &mut out[o * out_len * inner..(o + 1) * out_len * inner];
        if inner == 1 {
            for (i, &p) in out_pos.iter().enumerate() {
                dst[i] = buf[p];
            }
        } else {
            for (i, &p) in out_pos.iter().enumerate() {
                let row = &mut dst[i * inner..(i + 1) * inner];
                for (q, val) in row.iter_mut().enumerate() {
                    *val = buf[q * n + p];
                }
            }
        }
    }
    out
}

/// Discrete Fourier coefficients `b_k = m^{-d} Σ_l κ(l/m) e^{-2πi l·k/m}` of
/// samples taken on the centered grid `{l/m : l ∈ I_m}` (row-major, `l = i − m/2`).
pub fn grid_fourier_coeffs<T: Scalar>(samples: &[T], d: usize, m: usize) -> Result<CoeffTable<T>> {
    if !(1..=3).contains(&d) || m < 2 || !m.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("grid coefficients need d in 1..=3 and even m, got d={d}, m={m}")));
    }
    check_len(m.pow(d as u32), samples.len())?;
    let fft = T::c2c(m, false);
    let mut data: Vec<Complex<T>> = samples.iter().map(|&x| Complex::new(x, T::zero())).collect();
    let dims = vec![m; d];
    for a in 0..d {
        data = axis_pass(&data, &dims, a, m, m / 2, true, true, &fft, None);
    }
    let scale = T::one() / T::of_usize(m.pow(d as u32));
    for c in data.iter_mut() {
        *c *= scale;
    }
    CoeffTable::from_values(d, m, data)
}

/// Analytic bound on the window approximation error per unit `‖b‖₁`:
/// `4π(s+√s)(1−1/σ)^{1/4} e^{−2πs√(1−1/σ)}`.
pub fn window_error_factor(s: usize, sigma_over: f64) -> f64 {
    let s = s as f64;
    let q = 1.0 - 1.0 / sigma_over;
    4.0 * std::f64::consts::PI * (s + s.sqrt()) * q.powf(0.25) * (-2.0 * std::f64::consts::PI * s * q.sqrt()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn direct_forward(points: &[f64], d: usize, b: &CoeffTable<f64>) -> Vec<Complex<f64>> {
        points
            .chunks(d)
            .map(|x| {
                let mut acc = Complex::new(0.0, 0.0);
                for (pos, c) in b.values().iter().enumerate() {
                    let k = b.frequency(pos);
                    let ph: f64 = k.iter().zip(x).map(|(kk, xx)| *kk as f64 * xx).sum();
                    acc += c * Complex::from_polar(1.0, 2.0 * PI * ph);
                }
                acc
            })
            .collect()
    }

    fn direct_adjoint(points: &[f64], d: usize, m: usize, v: &[f64]) -> CoeffTable<f64> {
        let mut t = CoeffTable::zeros(d, m);
        for pos in 0..t.values.len() {
            let k = t.frequency(pos);
            let mut acc = Complex::new(0.0, 0.0);
            for (x, vj) in points.chunks(d).zip(v) {
                let ph: f64 = k.iter().zip(x).map(|(kk, xx)| *kk as f64 * xx).sum();
                acc += Complex::from_polar(*vj, -2.0 * PI * ph);
            }
            t.values[pos] = acc;
        }
        t
    }

    fn random_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n * d).map(|_| rng.random_range(-0.25..0.25)).collect()
    }

    fn random_table(d: usize, m: usize, rng: &mut ChaCha8Rng) -> CoeffTable<f64> {
        let vals = (0..m.pow(d as u32))
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        CoeffTable::from_values(d, m, vals).unwrap()
    }

    #[test]
    fn bessel_series_and_asymptotic_agree() {
        for &x in &[49.9, 50.0, 50.1] {
            let q = 0.25 * x * x;
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..400 {
                term *= q / (k as f64 * k as f64);
                sum += term;
            }
            let series = sum * (-x).exp();
            assert!((scaled_bessel_i0(x) - series).abs() < 1e-12 * series);
        }
        assert!((scaled_bessel_i0(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn minimal_plan() {
        let p = build_plan(&[0.0f64], 1, 8, 2.0, 4).unwrap();
        assert_eq!(p.frequency_count(), 8);
        assert_eq!(p.grid_len(), 16);
    }

    #[test]
    fn boundary_point_rejected() {
        assert_eq!(build_plan(&[0.25f64], 1, 8, 2.0, 4).unwrap_err(), Error::Domain { index: 0 });
        assert!(build_plan(&[-0.25f64], 1, 8, 2.0, 4).is_ok());
    }

    #[test]
    fn parameter_ranges_rejected() {
        assert!(build_plan(&[0.0f64], 4, 8, 2.0, 4).is_err());
        assert!(build_plan(&[0.0f64], 1, 7, 2.0, 4).is_err());
        assert!(build_plan(&[0.0f64], 1, 2, 2.0, 1).is_err());
        assert!(build_plan(&[0.0f64], 1, 8, 1.0, 4).is_err());
        assert!(build_plan(&[0.0f64], 1, 8, 2.0, 8).is_err());
        assert!(build_plan(&[0.0f64], 1, 8, 2.0, 0).is_err());
    }

    #[test]
    fn default_setting_frequency_count() {
        let p = build_plan(&[0.0f64, 0.1, -0.2], 3, 32, 2.0, 8).unwrap();
        assert_eq!(p.frequency_count(), 32768);
        assert!(p.window_coefficients().iter().all(|c| *c > 0.0));
    }

    #[test]
    fn constant_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(20, 2, &mut rng);
        let plan = build_plan(&pts, 2, 8, 2.0, 6).unwrap();
        let mut b = CoeffTable::zeros(2, 8);
        let p0 = b.position(&[0, 0]);
        b.values_mut()[p0] = Complex::new(1.0, 0.0);
        for f in plan.forward(&b).unwrap() {
            assert!((f - Complex::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn single_harmonic() {
        let x = 0.137;
        let plan = build_plan(&[x], 1, 16, 2.0, 8).unwrap();
        let mut b = CoeffTable::zeros(1, 16);
        let p = b.position(&[1]);
        b.values_mut()[p] = Complex::new(1.0, 0.0);
        let f = plan.forward(&b).unwrap()[0];
        let bound = window_error_factor(8, 2.0);
        assert!((f - Complex::from_polar(1.0, 2.0 * PI * x)).norm() <= bound);
    }

    #[test]
    fn forward_within_window_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=3 {
            let pts = random_points(100, d, &mut rng);
            let b = random_table(d, 16, &mut rng);
            let plan = build_plan(&pts, d, 16, 2.0, 8).unwrap();
            let fast = plan.forward(&b).unwrap();
            let slow = direct_forward(&pts, d, &b);
            let err = fast.iter().zip(&slow).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
            let bound = b.norm1() * window_error_factor(8, 2.0);
            assert!(err <= bound, "d={d}: err {err:e} > bound {bound:e}");
        }
    }

    #[test]
    fn adjoint_zero_and_single_point() {
        let plan = build_plan(&[0.0f64], 1, 16, 2.0, 8).unwrap();
        assert!(plan.adjoint(&[0.0]).unwrap().values().iter().all(|c| c.norm() == 0.0));
        let t = plan.adjoint(&[1.0]).unwrap();
        let bound = window_error_factor(8, 2.0);
        assert!(t.values().iter().all(|c| (c - Complex::new(1.0, 0.0)).norm() <= bound));
    }

    #[test]
    fn adjoint_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 1..=3 {
            let pts = random_points(40, d, &mut rng);
            let v: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let plan = build_plan(&pts, d, 16, 2.0, 8).unwrap();
            let fast = plan.adjoint(&v).unwrap();
            let slow = direct_adjoint(&pts, d, 16, &v);
            let v1: f64 = v.iter().map(|x| x.abs()).sum();
            let err = fast.values().iter().zip(slow.values()).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
            assert!(err <= v1 * window_error_factor(8, 2.0), "d={d}: {err:e}");
        }
    }

    #[test]
    fn doubling_support_reduces_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(60, 2, &mut rng);
        let b = random_table(2, 16, &mut rng);
        let slow = direct_forward(&pts, 2, &b);
        let err = |s: usize| {
            let plan = build_plan(&pts, 2, 16, 2.0, s).unwrap();
            plan.forward(&b).unwrap().iter().zip(&slow).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max)
        };
        let (e2, e4, e8) = (err(2), err(4), err(8));
        assert!(e4 < e2 && e8 < e4, "{e2:e} {e4:e} {e8:e}");
    }

    #[test]
    fn plans_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(30, 3, &mut rng);
        let b = random_table(3, 8, &mut rng);
        let a1 = build_plan(&pts, 3, 8, 2.0, 4).unwrap().forward(&b).unwrap();
        let a2 = build_plan(&pts, 3, 8, 2.0, 4).unwrap().forward(&b).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn grid_coeffs_constant_and_cosine() {
        let t = grid_fourier_coeffs(&vec![1.0f64; 64], 2, 8).unwrap();
        for (pos, c) in t.values().iter().enumerate() {
            let expect = if t.frequency(pos) == vec![0, 0] { 1.0 } else { 0.0 };
            assert!((c - Complex::new(expect, 0.0)).norm() < 1e-14);
        }
        let samples: Vec<f64> = (0..8).map(|i| (2.0 * PI * (i as f64 - 4.0) / 8.0).cos()).collect();
        let t = grid_fourier_coeffs(&samples, 1, 8).unwrap();
        for (pos, c) in t.values().iter().enumerate() {
            let k = t.frequency(pos)[0];
            let expect = if k.abs() == 1 { 0.5 } else { 0.0 };
            assert!((c - Complex::new(expect, 0.0)).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn grid_coeffs_matern_match_naive_dft() {
        let m = 8;
        let ell = 0.3;
        let samples: Vec<f64> = (0..m).map(|i| (-((i as f64 - 4.0) / 8.0).abs() / ell).exp()).collect();
        let t = grid_fourier_coeffs(&samples, 1, m).unwrap();
        for (pos, c) in t.values().iter().enumerate() {
            let k = t.frequency(pos)[0] as f64;
            let mut acc = Complex::new(0.0, 0.0);
            for (i, s) in samples.iter().enumerate() {
                let l = i as f64 - 4.0;
                acc += Complex::from_polar(*s, -2.0 * PI * l * k / m as f64);
            }
            acc /= m as f64;
            assert!((c - acc).norm() < 1e-15);
        }
    }

    #[test]
    fn grid_coeffs_reject_size_mismatch() {
        assert!(grid_fourier_coeffs(&[1.0f64; 7], 1, 8).is_err());
    }

    #[test]
    fn forward_works_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(30, 3, &mut rng);
        let b = random_table(3, 8, &mut rng);
        let slow = direct_forward(&pts, 3, &b);
        let pts32: Vec<f32> = pts.iter().map(|x| *x as f32).collect();
        let b32 = CoeffTable::from_values(
            3,
            8,
            b.values().iter().map(|c| Complex::new(c.re as f32, c.im as f32)).collect(),
        )
        .unwrap();
        let fast = build_plan(&pts32, 3, 8, 2.0f32, 6).unwrap().forward(&b32).unwrap();
        let err = fast
            .iter()
            .zip(&slow)
            .map(|(a, c)| ((a.re as f64 - c.re).powi(2) + (a.im as f64 - c.im).powi(2)).sqrt())
            .fold(0.0, f64::max);
        assert!(err < 1e-3 * b.norm1(), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn adjointness(seed in 0u64..10_000, d in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 25;
            let m = 8;
            let pts = random_points(n, d, &mut rng);
            let b = random_table(d, m, &mut rng);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let plan = build_plan(&pts, d, m, 2.0, 6).unwrap();
            let f = plan.forward(&b).unwrap();
            let h = plan.adjoint(&v).unwrap();
            let lhs: Complex<f64> = f.iter().zip(&v).map(|(a, x)| a * x).sum();
            let rhs: Complex<f64> = b.values().iter().zip(h.values()).map(|(a, c)| a * c.conj()).sum();
            let v1: f64 = v.iter().map(|x| x.abs()).sum();
            let tol = 2.0 * b.norm1() * v1 * window_error_factor(6, 2.0);
            prop_assert!((lhs - rhs).norm() <= tol);
        }

        #[test]
        fn forward_within_bound_any_sigma(seed in 0u64..10_000, sigma in 1.3f64..3.0, s in 3usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(15, 2, &mut rng);
            let b = random_table(2, 16, &mut rng);
            let plan = build_plan(&pts, 2, 16, sigma, s).unwrap();
            let fast = plan.forward(&b).unwrap();
            let slow = direct_forward(&pts, 2, &b);
            let err = fast.iter().zip(&slow).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
            prop_assert!(err <= b.norm1() * window_error_factor(s, sigma) + 1e-12);
        }
    }
}
