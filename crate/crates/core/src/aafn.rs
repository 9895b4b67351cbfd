//! Additive adaptive factorized Nyström (AAFN) preconditioner.
//!
//! Landmarks picked by farthest point sampling in every window form the
//! (1,1) block of `K̂`, which is factored exactly. The Schur complement of
//! the remaining block is approximated through a factorized sparse
//! approximate inverse `G` (`S⁻¹ ≈ GᵀG`), giving `M = F Fᵀ` with
//! `F = [L₁₁ 0; K₂₁L₁₁⁻ᵀ G⁻¹]`.

use crate::data::{FeatureWindows, PointSet};
use crate::error::{check_len, Error, Result};
use crate::kernels::{additive_kernel_entry, KernelSpec};
use crate::linalg::{axpy, cholesky_in_place, dot, solve_lower, solve_lower_transpose, Matrix};
use crate::scalar::Scalar;

/// Greedy maximin selection of `k` indices from row-major `points` of dimension `d`.
pub fn fps<T: Scalar>(points: &[T], d: usize, k: usize) -> Vec<usize> {
    let n = if d == 0 { 0 } else { points.len() / d };
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let dist2 = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>();
    let mut centroid = vec![T::zero(); d];
    for i in 0..n {
        axpy(T::one(), row(i), &mut centroid);
    }
    for c in centroid.iter_mut() {
        *c /= T::of_usize(n);
    }
    let argmax = |vals: &[T]| {
        let mut best = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v > vals[best] {
                best = i;
            }
        }
        best
    };
    let to_centroid: Vec<T> = (0..n).map(|i| dist2(row(i), &centroid)).collect();
    let mut picks = vec![argmax(&to_centroid)];
    let mut mind: Vec<T> = (0..n).map(|i| dist2(row(i), row(picks[0]))).collect();
    while picks.len() < k {
        let next = argmax(&mind);
        picks.push(next);
        for i in 0..n {
            let dn = dist2(row(i), row(next));
            if dn < mind[i] {
                mind[i] = dn;
            }
        }
        mind[next] = T::neg_infinity();
        for &p in &picks {
            mind[p] = T::neg_infinity();
        }
    }
    picks
}

/// Hyperparameter-independent part of the preconditioner: landmarks and
/// the sparsity pattern of `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct AafnStructure {
    n: usize,
    landmarks: Vec<usize>,
    rest: Vec<usize>,
    /// Per row of `G`: positions into `rest`, ascending, ending with the row itself.
    patterns: Vec<Vec<usize>>,
}

impl AafnStructure {
    pub fn new<T: Scalar>(x: &PointSet<T>, windows: &FeatureWindows, k_per_window: usize, fill: usize) -> Result<Self> {
        if k_per_window == 0 {
            return Err(Error::InvalidParameter("landmarks per window must be at least 1".into()));
        }
        if fill == 0 {
            return Err(Error::InvalidParameter("fill must be at least 1".into()));
        }
        if x.is_empty() {
            return Err(Error::Empty);
        }
        windows.check_features(x.p())?;
        let n = x.n();
        let mut is_landmark = vec![false; n];
        let mut landmarks = Vec::new();
        let projected: Vec<Vec<T>> = windows.iter().map(|w| x.project(w)).collect();
        for (w, pts) in windows.iter().zip(&projected) {
            for i in fps(pts, w.len(), k_per_window) {
                if !is_landmark[i] {
                    is_landmark[i] = true;
                    landmarks.push(i);
                }
            }
        }
        let rest: Vec<usize> = (0..n).filter(|&i| !is_landmark[i]).collect();
        let dist = |a: usize, b: usize| -> T {
            windows
                .iter()
                .zip(&projected)
                .map(|(w, pts)| {
                    let d = w.len();
                    pts[a * d..(a + 1) * d]
                        .iter()
                        .zip(&pts[b * d..(b + 1) * d])
                        .map(|(u, v)| (*u - *v) * (*u - *v))
                        .sum::<T>()
                        .sqrt()
                })
                .sum()
        };
        let mut patterns = Vec::with_capacity(rest.len());
        let mut cand: Vec<(T, usize)> = Vec::with_capacity(rest.len());
        for (r, &i) in rest.iter().enumerate() {
            cand.clear();
            cand.extend((0..r).map(|q| (dist(i, rest[q]), q)));
            let keep = (fill - 1).min(cand.len());
            let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1));
            if keep < cand.len() && keep > 0 {
                cand.select_nth_unstable_by(keep - 1, cmp);
            }
            let mut pat: Vec<usize> = cand[..keep].iter().map(|c| c.1).collect();
            pat.sort_unstable();
            pat.push(r);
            patterns.push(pat);
        }
        Ok(AafnStructure { n, landmarks, rest, patterns })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn landmarks(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn non_landmarks(&self) -> &[usize] {
        &self.rest
    }

    pub fn patterns(&self) -> &[Vec<usize>] {
        &self.patterns
    }
}

/// Factored preconditioner `M ≈ K̂` with explicit `log det M`.
#[derive(Clone, Debug)]
pub struct AafnPrecond<T> {
    structure: AafnStructure,
    l11: Matrix<T>,
    /// `K₂₁ L₁₁⁻ᵀ`, one row per non-landmark.
    w: Matrix<T>,
    g_vals: Vec<Vec<T>>,
    logdet: T,
    jittered: bool,
}

fn cholesky_with_jitter<T: Scalar>(a: &mut Matrix<T>) -> Result<bool> {
    let backup = a.clone();
    match cholesky_in_place(a) {
        Ok(()) => Ok(false),
        Err(Error::CholeskyBreakdown { .. }) => {
            *a = backup;
            let k = a.rows();
            let trace: T = (0..k).map(|i| a[(i, i)]).sum();
            let jitter = T::of(1e-10) * trace / T::of_usize(k);
            for i in 0..k {
                a[(i, i)] += jitter;
            }
            cholesky_in_place(a)?;
            Ok(true)
        }
        Err(e) => Err(e),
    }
}

impl<T: Scalar> AafnPrecond<T> {
    /// Selects landmarks and patterns, then factors at `spec.params`.
    pub fn build(spec: &KernelSpec<T>, x: &PointSet<T>, k_per_window: usize, fill: usize) -> Result<Self> {
        let structure = AafnStructure::new(x, &spec.windows, k_per_window, fill)?;
        Self::with_structure(spec, x, structure)
    }

    /// Factors `K̂` at `spec.params` on a precomputed structure.
    pub fn with_structure(spec: &KernelSpec<T>, x: &PointSet<T>, structure: AafnStructure) -> Result<Self> {
        check_len(structure.n, x.n())?;
        let noise = spec.params.sigma_eps * spec.params.sigma_eps;
        let entry = |a: usize, b: usize| -> Result<T> {
            let v = additive_kernel_entry(spec, x.row(a), x.row(b))?;
            Ok(if a == b { v + noise } else { v })
        };
        let lm = &structure.landmarks;
        let k = lm.len();
        let mut l11 = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = entry(lm[i], lm[j])?;
                l11[(i, j)] = v;
                l11[(j, i)] = v;
            }
        }
        let mut jittered = cholesky_with_jitter(&mut l11)?;
        let rest = &structure.rest;
        let mut w = Matrix::zeros(rest.len(), k);
        for (r, &i) in rest.iter().enumerate() {
            let row = w.row_mut(r);
            for (c, &j) in lm.iter().enumerate() {
                row[c] = entry(i, j)?;
            }
            solve_lower(&l11, row);
        }
        let mut g_vals = Vec::with_capacity(rest.len());
        let mut logdet_g = T::zero();
        for (r, pat) in structure.patterns.iter().enumerate() {
            let f = pat.len();
            let mut s = Matrix::zeros(f, f);
            for a in 0..f {
                for b in 0..=a {
                    let ia = rest[pat[a]];
                    let ib = rest[pat[b]];
                    let v = entry(ia, ib)? - dot(w.row(pat[a]), w.row(pat[b]));
                    s[(a, b)] = v;
                    s[(b, a)] = v;
                }
            }
            jittered |= cholesky_with_jitter(&mut s)?;
            let mut e = vec![T::zero(); f];
            e[f - 1] = T::one();
            solve_lower(&s, &mut e);
            solve_lower_transpose(&s, &mut e);
            let gii = e[f - 1];
            if !(gii > T::zero()) {
                return Err(Error::CholeskyBreakdown { pivot: r });
            }
            let scale = T::one() / gii.sqrt();
            for v in e.iter_mut() {
                *v *= scale;
            }
            logdet_g += e[f - 1].ln();
            g_vals.push(e);
        }
        let two = T::of(2.0);
        let logdet_l: T = (0..k).map(|i| l11[(i, i)].ln()).sum();
        let logdet = two * logdet_l - two * logdet_g;
        if !logdet.is_finite() {
            return Err(Error::NonFinite("preconditioner log-determinant"));
        }
        Ok(AafnPrecond { structure, l11, w, g_vals, logdet, jittered })
    }

    pub fn n(&self) -> usize {
        self.structure.n
    }

    pub fn structure(&self) -> &AafnStructure {
        &self.structure
    }

    pub fn landmarks(&self) -> &[usize] {
        &self.structure.landmarks
    }

    pub fn l11(&self) -> &Matrix<T> {
        &self.l11
    }

    /// Whether the diagonal jitter had to be applied.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// `log det M`.
    pub fn logdet(&self) -> T {
        self.logdet
    }

    /// Diagonal entries of `G` in non-landmark order.
    pub fn g_diagonal(&self) -> Vec<T> {
        self.g_vals.iter().map(|g| *g.last().unwrap()).collect()
    }

    fn split(&self, v: &[T]) -> (Vec<T>, Vec<T>) {
        let v1 = self.structure.landmarks.iter().map(|&i| v[i]).collect();
        let v2 = self.structure.rest.iter().map(|&i| v[i]).collect();
        (v1, v2)
    }

    fn merge(&self, u1: &[T], u2: &[T]) -> Vec<T> {
        let mut u = vec![T::zero(); self.n()];
        for (&i, &x) in self.structure.landmarks.iter().zip(u1) {
            u[i] = x;
        }
        for (&i, &x) in self.structure.rest.iter().zip(u2) {
            u[i] = x;
        }
        u
    }

    fn apply_g(&self, v: &[T]) -> Vec<T> {
        self.structure.patterns.iter().zip(&self.g_vals).map(|(p, g)| p.iter().zip(g).map(|(&q, &c)| c * v[q]).sum()).collect()
    }

    fn apply_gt(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        for ((p, g), &vr) in self.structure.patterns.iter().zip(&self.g_vals).zip(v) {
            for (&q, &c) in p.iter().zip(g) {
                out[q] += c * vr;
            }
        }
        out
    }

    /// `F⁻¹ v`.
    pub fn apply_f_inv(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n(), v.len())?;
        let (mut y1, mut v2) = self.split(v);
        solve_lower(&self.l11, &mut y1);
        for (r, x) in v2.iter_mut().enumerate() {
            *x -= dot(self.w.row(r), &y1);
        }
        let y2 = self.apply_g(&v2);
        Ok(self.merge(&y1, &y2))
    }

    /// `F⁻ᵀ v`.
    pub fn apply_f_inv_t(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n(), v.len())?;
        let (mut y1, y2) = self.split(v);
        let u2 = self.apply_gt(&y2);
        let wt = self.w.matvec_t(&u2);
        for (a, b) in y1.iter_mut().zip(&wt) {
            *a -= *b;
        }
        solve_lower_transpose(&self.l11, &mut y1);
        Ok(self.merge(&y1, &u2))
    }

    /// `M⁻¹ v = F⁻ᵀ F⁻¹ v`.
    pub fn apply_inverse(&self, v: &[T]) -> Result<Vec<T>> {
        self.apply_f_inv_t(&self.apply_f_inv(v)?)
    }

    /// `M v = F Fᵀ v`, for testing and diagnostics.
    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n(), v.len())?;
        // Fᵀ = [L₁₁ᵀ Wᵀ; 0 G⁻ᵀ]
        let (v1, v2) = self.split(v);
        let u2 = self.solve_gt(&v2);
        let mut u1 = self.l11.matvec_t(&v1);
        axpy(T::one(), &self.w.matvec_t(&v2), &mut u1);
        // F = [L₁₁ 0; W G⁻¹]
        let y1 = self.l11.matvec(&u1);
        let mut y2 = self.w.matvec(&u1);
        axpy(T::one(), &self.solve_g(&u2), &mut y2);
        Ok(self.merge(&y1, &y2))
    }

    /// Solves `G x = b` by forward substitution.
    fn solve_g(&self, b: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); b.len()];
        for (r, (p, g)) in self.structure.patterns.iter().zip(&self.g_vals).enumerate() {
            let f = p.len();
            let s: T = p[..f - 1].iter().zip(&g[..f - 1]).map(|(&q, &c)| c * x[q]).sum();
            x[r] = (b[r] - s) / g[f - 1];
        }
        x
    }

    /// Solves `Gᵀ x = b` by backward substitution.
    fn solve_gt(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        for (r, (p, g)) in self.structure.patterns.iter().zip(&self.g_vals).enumerate().rev() {
            let f = p.len();
            x[r] /= g[f - 1];
            let xr = x[r];
            for (&q, &c) in p[..f - 1].iter().zip(&g[..f - 1]) {
                x[q] -= c * xr;
            }
        }
        x
    }
}
