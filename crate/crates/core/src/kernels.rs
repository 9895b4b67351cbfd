//! Windowed Gaussian and Matérn(½) kernels, their length-scale
//! derivatives, and dense additive kernel matrices.

use crate::data::{FeatureWindows, PointSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{softplus, softplus_inv, Scalar};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Matern12,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" | "g" => Ok(Family::Gaussian),
            "matern" | "matern12" | "matern1/2" | "m" => Ok(Family::Matern12),
            other => Err(Error::InvalidParameter(format!("unknown kernel family '{other}'"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Matern12 => "matern12",
        })
    }
}

/// Raw optimizer variables and their softplus images `(σ_f, ℓ, σ_ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams<T> {
    pub raw: [T; 3],
    pub sigma_f: T,
    pub ell: T,
    pub sigma_eps: T,
}

impl<T: Scalar> HyperParams<T> {
    pub fn from_raw(raw: [T; 3]) -> Self {
        HyperParams { raw, sigma_f: softplus(raw[0]), ell: softplus(raw[1]), sigma_eps: softplus(raw[2]) }
    }

    /// Parameters with the given positive values.
    pub fn from_values(sigma_f: T, ell: T, sigma_eps: T) -> Result<Self> {
        for (name, v) in [("sigma_f", sigma_f), ("ell", ell), ("sigma_eps", sigma_eps)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")));
            }
        }
        Ok(HyperParams {
            raw: [softplus_inv(sigma_f), softplus_inv(ell), softplus_inv(sigma_eps)],
            sigma_f,
            ell,
            sigma_eps,
        })
    }

    pub fn values(&self) -> [T; 3] {
        [self.sigma_f, self.ell, self.sigma_eps]
    }
}

/// Kernel family, feature windows and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec<T> {
    pub family: Family,
    pub windows: FeatureWindows,
    pub params: HyperParams<T>,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(family: Family, windows: FeatureWindows, params: HyperParams<T>) -> Self {
        KernelSpec { family, windows, params }
    }

    /// Value of the additive kernel at zero lag, `σ_f² P`.
    pub fn diagonal(&self) -> T {
        self.params.sigma_f * self.params.sigma_f * T::of_usize(self.windows.len())
    }
}

/// Kernel value from the squared lag norm.
#[inline]
pub fn kernel_from_sq<T: Scalar>(family: Family, r2: T, ell: T) -> T {
    match family {
        Family::Gaussian => (-r2 / (T::of(2.0) * ell * ell)).exp(),
        Family::Matern12 => (-r2.sqrt() / ell).exp(),
    }
}

/// Length-scale derivative of the kernel from the squared lag norm.
#[inline]
pub fn derivative_from_sq<T: Scalar>(family: Family, r2: T, ell: T) -> T {
    match family {
        Family::Gaussian => r2 / (ell * ell * ell) * kernel_from_sq(family, r2, ell),
        Family::Matern12 => {
            let r = r2.sqrt();
            r / (ell * ell) * (-r / ell).exp()
        }
    }
}

/// `exp(−‖r‖²/(2ℓ²))` or `exp(−‖r‖/ℓ)`.
pub fn kernel_value<T: Scalar>(family: Family, r: &[T], ell: T) -> T {
    kernel_from_sq(family, r.iter().map(|x| *x * *x).sum(), ell)
}

/// `∂/∂ℓ` of [`kernel_value`].
pub fn derivative_kernel_value<T: Scalar>(family: Family, r: &[T], ell: T) -> T {
    derivative_from_sq(family, r.iter().map(|x| *x * *x).sum(), ell)
}

#[inline]
fn window_sq_dist<T: Scalar>(w: &[usize], a: &[T], b: &[T]) -> T {
    w.iter().map(|&f| (a[f] - b[f]) * (a[f] - b[f])).sum()
}

/// `σ_f² Σ_s κ(x_i^{W_s} − x_j^{W_s})`.
pub fn additive_kernel_entry<T: Scalar>(spec: &KernelSpec<T>, xi: &[T], xj: &[T]) -> Result<T> {
    if xi.len() != xj.len() {
        return Err(Error::SizeMismatch { expected: xi.len(), got: xj.len() });
    }
    spec.windows.check_features(xi.len())?;
    let sf2 = spec.params.sigma_f * spec.params.sigma_f;
    let s: T = spec.windows.iter().map(|w| kernel_from_sq(spec.family, window_sq_dist(w, xi, xj), spec.params.ell)).sum();
    Ok(sf2 * s)
}

/// Operators available as dense matrices and fast matrix-vector products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    /// `σ_f² Σ_s K_s`.
    K,
    /// `K + σ_ε² I`.
    KHat,
    /// `∂K̂/∂ℓ`.
    DEll,
    /// `∂K̂/∂σ_f = 2σ_f Σ_s K_s`.
    DSigmaF,
    /// `∂K̂/∂σ_ε = 2σ_ε I`.
    DSigmaEps,
}

/// Default upper limit on `n` for dense matrices.
pub const DENSE_CAP: usize = 5000;

/// Dense `n × n` matrix of `op` on the points `x`.
pub fn dense_matrix<T: Scalar>(spec: &KernelSpec<T>, x: &PointSet<T>, op: Operator) -> Result<Matrix<T>> {
    dense_matrix_capped(spec, x, op, DENSE_CAP)
}

pub fn dense_matrix_capped<T: Scalar>(spec: &KernelSpec<T>, x: &PointSet<T>, op: Operator, cap: usize) -> Result<Matrix<T>> {
    let n = x.n();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    spec.windows.check_features(x.p())?;
    let HyperParams { sigma_f, ell, sigma_eps, .. } = spec.params;
    let mut out = Matrix::zeros(n, n);
    if op == Operator::DSigmaEps {
        for i in 0..n {
            out[(i, i)] = T::of(2.0) * sigma_eps;
        }
        return Ok(out);
    }
    let (scale, deriv) = match op {
        Operator::K | Operator::KHat => (sigma_f * sigma_f, false),
        Operator::DEll => (sigma_f * sigma_f, true),
        Operator::DSigmaF => (T::of(2.0) * sigma_f, false),
        Operator::DSigmaEps => unreachable!(),
    };
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..=i {
            let xj = x.row(j);
            let mut s = T::zero();
            for w in spec.windows.iter() {
                let r2 = window_sq_dist(w, xi, xj);
                s += if deriv { derivative_from_sq(spec.family, r2, ell) } else { kernel_from_sq(spec.family, r2, ell) };
            }
            out[(i, j)] = scale * s;
            out[(j, i)] = scale * s;
        }
    }
    if op == Operator::KHat {
        for i in 0..n {
            out[(i, i)] += sigma_eps * sigma_eps;
        }
    }
    Ok(out)
}

/// Dense rectangular `σ_f² Σ_s κ(a_i − b_j)`.
pub fn dense_cross<T: Scalar>(spec: &KernelSpec<T>, a: &PointSet<T>, b: &PointSet<T>) -> Result<Matrix<T>> {
    if a.p() != b.p() {
        return Err(Error::SizeMismatch { expected: a.p(), got: b.p() });
    }
    spec.windows.check_features(a.p())?;
    let sf2 = spec.params.sigma_f * spec.params.sigma_f;
    Ok(Matrix::from_fn(a.n(), b.n(), |i, j| {
        let (xi, xj) = (a.row(i), b.row(j));
        sf2 * spec
            .windows
            .iter()
            .map(|w| kernel_from_sq(spec.family, window_sq_dist(w, xi, xj), spec.params.ell))
            .sum::<T>()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(family: Family, windows: Vec<Vec<usize>>, sf: f64, ell: f64, se: f64) -> KernelSpec<f64> {
        KernelSpec::new(family, FeatureWindows::new(windows).unwrap(), HyperParams::from_values(sf, ell, se).unwrap())
    }

    fn random_points(n: usize, p: usize, seed: u64) -> PointSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::new(n, p, (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_lag_is_one() {
        for f in [Family::Gaussian, Family::Matern12] {
            assert_eq!(kernel_value(f, &[0.0, 0.0], 0.7), 1.0);
            assert_eq!(derivative_kernel_value(f, &[0.0, 0.0], 0.7), 0.0);
        }
    }

    #[test]
    fn closed_form_values() {
        assert!((kernel_value(Family::Matern12, &[0.3, 0.4], 0.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((kernel_value(Family::Gaussian, &[0.6f64, 0.8], 1.0) - 0.606_530_659_712_633_4).abs() < 1e-15);
        let dm = derivative_kernel_value(Family::Matern12, &[0.5], 0.5);
        assert!((dm - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((dm - 0.735_758_882_342_884_6).abs() < 1e-12);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Gaussian".parse::<Family>().unwrap(), Family::Gaussian);
        assert_eq!("matern12".parse::<Family>().unwrap(), Family::Matern12);
        assert!("rbf2".parse::<Family>().is_err());
        assert_eq!(Family::Matern12.to_string().parse::<Family>().unwrap(), Family::Matern12);
    }

    #[test]
    fn hyperparams_at_zero_raw() {
        let h = HyperParams::<f64>::from_raw([0.0; 3]);
        for v in h.values() {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        }
        assert!(HyperParams::from_values(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn additive_entry_cases() {
        let s = spec(Family::Gaussian, vec![vec![0, 1], vec![2]], 1.3, 0.4, 0.1);
        let x = [0.1, -0.2, 0.5];
        assert!((additive_kernel_entry(&s, &x, &x).unwrap() - 1.69 * 2.0).abs() < 1e-14);
        let y = [0.3, 0.1, -0.2];
        let expect = 1.69 * (kernel_value(Family::Gaussian, &[-0.2, -0.3], 0.4) + kernel_value(Family::Gaussian, &[0.7], 0.4));
        assert!((additive_kernel_entry(&s, &x, &y).unwrap() - expect).abs() < 1e-14);
        let single = spec(Family::Matern12, vec![vec![0, 1, 2]], 0.9, 0.8, 0.1);
        let r: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!((additive_kernel_entry(&single, &x, &y).unwrap() - 0.81 * kernel_value(Family::Matern12, &r, 0.8)).abs() < 1e-15);
        assert!(additive_kernel_entry(&s, &x, &y[..2]).is_err());
    }

    #[test]
    fn dense_scalar_case() {
        let s = spec(Family::Matern12, vec![vec![0], vec![1]], 0.8, 0.3, 0.2);
        let x = random_points(1, 2, 1);
        let k = dense_matrix(&s, &x, Operator::KHat).unwrap();
        assert!((k[(0, 0)] - (0.64 * 2.0 + 0.04)).abs() < 1e-15);
    }

    #[test]
    fn dense_is_symmetric_and_operators_consistent() {
        let s = spec(Family::Gaussian, vec![vec![0, 2], vec![1]], 1.1, 0.6, 0.3);
        let x = random_points(30, 3, 2);
        let kh = dense_matrix(&s, &x, Operator::KHat).unwrap();
        assert_eq!(kh.max_abs_diff(&kh.transpose()), 0.0);
        let k = dense_matrix(&s, &x, Operator::K).unwrap();
        let dsf = dense_matrix(&s, &x, Operator::DSigmaF).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert!((dsf[(i, j)] - 2.0 / 1.1 * k[(i, j)]).abs() < 1e-13);
                let diag = if i == j { 0.09 } else { 0.0 };
                assert!((kh[(i, j)] - k[(i, j)] - diag).abs() < 1e-15);
            }
        }
        let dse = dense_matrix(&s, &x, Operator::DSigmaEps).unwrap();
        assert_eq!(dse[(3, 3)], 0.6);
        assert_eq!(dse[(3, 4)], 0.0);
    }

    #[test]
    fn dense_derivative_matches_difference() {
        let s = spec(Family::Matern12, vec![vec![0, 1]], 0.7, 0.5, 0.1);
        let x = random_points(10, 2, 3);
        let d = dense_matrix(&s, &x, Operator::DEll).unwrap();
        let h = 1e-6;
        let mut sp = s.clone();
        sp.params = HyperParams::from_values(0.7, 0.5 + h, 0.1).unwrap();
        let mut sm = s.clone();
        sm.params = HyperParams::from_values(0.7, 0.5 - h, 0.1).unwrap();
        let kp = dense_matrix(&sp, &x, Operator::K).unwrap();
        let km = dense_matrix(&sm, &x, Operator::K).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let fd = (kp[(i, j)] - km[(i, j)]) / (2.0 * h);
                assert!((fd - d[(i, j)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn cap_enforced() {
        let s = spec(Family::Gaussian, vec![vec![0]], 1.0, 1.0, 1.0);
        let x = random_points(11, 1, 4);
        assert_eq!(dense_matrix_capped(&s, &x, Operator::K, 10), Err(Error::CapExceeded { n: 11, cap: 10 }));
    }

    #[test]
    fn smallest_eigenvalue_exceeds_noise() {
        for f in [Family::Gaussian, Family::Matern12] {
            let s = spec(f, vec![vec![0, 1, 2], vec![3, 4]], 1.0, 0.7, 0.1);
            let x = random_points(50, 5, 5);
            let k = dense_matrix(&s, &x, Operator::KHat).unwrap();
            let nk = nalgebra::DMatrix::from_row_slice(50, 50, k.as_slice());
            let min = nk.symmetric_eigen().eigenvalues.min();
            assert!(min >= 0.01 * (1.0 - 1e-10), "{min}");
        }
    }

    #[test]
    fn cross_matrix_matches_entries() {
        let s = spec(Family::Gaussian, vec![vec![1], vec![0, 2]], 0.9, 0.4, 0.1);
        let a = random_points(4, 3, 6);
        let b = random_points(3, 3, 7);
        let c = dense_cross(&s, &a, &b).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert!((c[(i, j)] - additive_kernel_entry(&s, a.row(i), b.row(j)).unwrap()).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(
            r in proptest::collection::vec(-2.0f64..2.0, 1..=3),
            ell in 0.05f64..5.0,
            gauss in any::<bool>(),
        ) {
            let f = if gauss { Family::Gaussian } else { Family::Matern12 };
            let h = 1e-6;
            let fd = (kernel_value(f, &r, ell + h) - kernel_value(f, &r, ell - h)) / (2.0 * h);
            let an = derivative_kernel_value(f, &r, ell);
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3));
        }

        #[test]
        fn additive_matrices_positive_definite(seed in 0u64..1000, n in 2usize..60, gauss in any::<bool>()) {
            let f = if gauss { Family::Gaussian } else { Family::Matern12 };
            let s = spec(f, vec![vec![0, 1], vec![2]], 1.2, 0.3, 0.05);
            let x = random_points(n, 3, seed);
            let k = dense_matrix(&s, &x, Operator::KHat).unwrap();
            let nk = nalgebra::DMatrix::from_row_slice(n, n, k.as_slice());
            let min = nk.symmetric_eigen().eigenvalues.min();
            prop_assert!(min > 0.0025 * (1.0 - 1e-10));
        }
    }
}
