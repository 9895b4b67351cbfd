//! Closed-form Fourier and periodization error bounds for the trivariate
//! Matérn(½) kernel and its length-scale derivative, and a harness that
//! measures the actual truncation error.

use crate::error::{Error, Result};
use crate::fastsum::kernel_coefficients;
use crate::kernels::{derivative_from_sq, kernel_from_sq, Family};
use crate::transform::{window_error_factor, FourierPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Kernel whose Fourier error is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundFamily {
    Matern,
    DerMatern,
}

impl FromStr for BoundFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern" | "matern12" => Ok(BoundFamily::Matern),
            "dermatern" => Ok(BoundFamily::DerMatern),
            other => Err(Error::InvalidParameter(format!("unknown bound family '{other}'"))),
        }
    }
}

impl fmt::Display for BoundFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundFamily::Matern => "matern",
            BoundFamily::DerMatern => "dermatern",
        })
    }
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParameter(format!("length-scale {ell} must be positive")));
    }
    Ok(())
}

fn check_m(m: usize) -> Result<f64> {
    let gap = m as f64 - 2.0 * SQRT3;
    if gap <= 0.0 {
        return Err(Error::InvalidParameter(format!("bandwidth m = {m} must exceed 2√3")));
    }
    Ok(gap)
}

/// `δ^m(ℓ)`, the periodization gap of the trivariate Matérn(½) kernel.
pub fn periodization_gap_matern(ell: f64) -> Result<f64> {
    check_ell(ell)?;
    let a = 2.0 * SQRT3 * ell;
    let e = (-1.0 / a).exp();
    Ok(3.0 * e * (1.0 + a) + 3.0 * e * e * (1.0 + a).powi(2) + e * e * e * (1.0 + a).powi(3))
}

/// `δ^derm(ℓ)` for the derivative kernel; requires `ℓ < 1/2`.
pub fn periodization_gap_dermatern(ell: f64) -> Result<f64> {
    check_ell(ell)?;
    if ell >= 0.5 {
        return Err(Error::InvalidParameter(format!("length-scale {ell} must be below 1/2")));
    }
    let a = 2.0 * SQRT3 * ell;
    let e = (-1.0 / a).exp();
    let l2 = ell * ell;
    Ok(3.0 / l2 * (1.0 + e * (1.0 + a)).powi(2) * (1.0 + e * (1.0 + a + 12.0 * l2)) - 3.0 / l2)
}

/// `8 / (π² ℓ (m − 2√3))`.
pub fn fourier_bound_matern(m: usize, ell: f64) -> Result<f64> {
    let gap = check_m(m)?;
    check_ell(ell)?;
    Ok(8.0 / (std::f64::consts::PI.powi(2) * ell * gap))
}

/// `32 / (3 ℓ⁴ π⁴ (m − 2√3)³) + 8 / (ℓ² π² (m − 2√3))`.
pub fn fourier_bound_dermatern(m: usize, ell: f64) -> Result<f64> {
    let gap = check_m(m)?;
    check_ell(ell)?;
    let pi = std::f64::consts::PI;
    Ok(32.0 / (3.0 * ell.powi(4) * pi.powi(4) * gap.powi(3)) + 8.0 / (ell * ell * pi * pi * gap))
}

/// Bound for the chosen family.
pub fn fourier_bound(family: BoundFamily, m: usize, ell: f64) -> Result<f64> {
    match family {
        BoundFamily::Matern => fourier_bound_matern(m, ell),
        BoundFamily::DerMatern => fourier_bound_dermatern(m, ell),
    }
}

/// `‖b‖₁ 4π(s + √s)(1 − 1/σ)^{1/4} e^{−2πs√(1−1/σ)}`.
pub fn nfft_window_bound(s: usize, sigma_over: f64, b_norm1: f64) -> Result<f64> {
    if !(sigma_over > 1.0) || !sigma_over.is_finite() {
        return Err(Error::InvalidParameter(format!("oversampling {sigma_over} must exceed 1")));
    }
    if s == 0 {
        return Err(Error::InvalidParameter("support s must be at least 1".into()));
    }
    Ok(b_norm1 * window_error_factor(s, sigma_over))
}

fn family_value(family: BoundFamily, r2: f64, ell: f64) -> f64 {
    match family {
        BoundFamily::Matern => kernel_from_sq(Family::Matern12, r2, ell),
        BoundFamily::DerMatern => derivative_from_sq(Family::Matern12, r2, ell),
    }
}

/// Sampled sup error of a Fourier truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub max_error: f64,
    pub pairs: usize,
}

/// Options of the measurement harness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureConfig {
    pub n_samples: usize,
    pub max_pairs: usize,
    pub sigma_over: f64,
    pub s: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig { n_samples: 10_000, max_pairs: 1_000_000, sigma_over: 2.0, s: 4 }
    }
}

fn sample_lags(cfg: &MeasureConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_samples.max(2);
    let pts: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-0.25..0.25)).collect();
    let all = n * (n - 1);
    let mut lags = Vec::with_capacity(3 * cfg.max_pairs.min(all));
    if all <= cfg.max_pairs {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    lags.extend((0..3).map(|a| pts[3 * i + a] - pts[3 * j + a]));
                }
            }
        }
    } else {
        for _ in 0..cfg.max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            lags.extend((0..3).map(|a| pts[3 * i + a] - pts[3 * j + a]));
        }
    }
    lags
}

/// `max |κ(r) − κ_RF(r)|` over lags `r = x_i − x_j` of points drawn
/// uniformly from `[-1/4, 1/4)³`, with `κ_RF` the `m`-term Fourier sum of
/// the periodically continued kernel evaluated by an NFFT.
pub fn measure_max_error(family: BoundFamily, m: usize, ell: f64, cfg: &MeasureConfig, seed: u64) -> Result<Measurement> {
    check_ell(ell)?;
    let lags = sample_lags(cfg, seed);
    let b = kernel_coefficients(Family::Matern12, 3, m, ell, family == BoundFamily::DerMatern)?;
    let plan = FourierPlan::new_on_torus(&lags, 3, m, cfg.sigma_over, cfg.s)?;
    let approx = plan.forward(&b)?;
    let max_error = lags
        .chunks_exact(3)
        .zip(&approx)
        .map(|(r, f)| (family_value(family, r.iter().map(|x| x * x).sum(), ell) - f.re).abs())
        .fold(0.0, f64::max);
    Ok(Measurement { max_error, pairs: approx.len() })
}

/// One row of a bound comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub ell: f64,
    pub m: usize,
    pub bound: f64,
    pub measured: f64,
    pub ratio: f64,
}

impl BoundRow {
    pub fn valid(&self) -> bool {
        self.measured <= self.bound
    }
}

/// Bound and measurement over an `ℓ` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub family: BoundFamily,
    pub pairs: usize,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn all_valid(&self) -> bool {
        self.rows.iter().all(BoundRow::valid)
    }

    /// CSV with columns `ell,m,bound,measured,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ell,m,bound,measured,ratio\n");
        for r in &self.rows {
            s.push_str(&format!("{:e},{},{:e},{:e},{:e}\n", r.ell, r.m, r.bound, r.measured, r.ratio));
        }
        s
    }
}

/// `count` points spaced logarithmically over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Runs the comparison for every `(m, ℓ)` combination.
pub fn bound_report(family: BoundFamily, ms: &[usize], ells: &[f64], cfg: &MeasureConfig, seed: u64) -> Result<BoundReport> {
    let mut rows = Vec::with_capacity(ms.len() * ells.len());
    let mut pairs = 0;
    for &m in ms {
        for &ell in ells {
            let bound = fourier_bound(family, m, ell)?;
            let meas = measure_max_error(family, m, ell, cfg, seed)?;
            pairs = meas.pairs;
            let ratio = bound / meas.max_error;
            rows.push(BoundRow { ell, m, bound, measured: meas.max_error, ratio });
        }
    }
    Ok(BoundReport { family, pairs, rows })
}

/// Measured components of the total error at sampled lags: the
/// periodization gap `|κ̃ − κ|`, the Fourier truncation `|κ − κ_RF|`
/// and the NFFT evaluation error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorComponents {
    pub periodization: f64,
    pub fourier: f64,
    pub nfft: f64,
}

/// Lattice sum `Σ_{n ≠ 0, |n_j| ≤ reach} κ(r + n)`.
pub fn periodization_tail(family: BoundFamily, r: &[f64; 3], ell: f64, reach: i64) -> f64 {
    let mut acc = 0.0;
    for a in -reach..=reach {
        for b in -reach..=reach {
            for c in -reach..=reach {
                if a == 0 && b == 0 && c == 0 {
                    continue;
                }
                let s = [r[0] + a as f64, r[1] + b as f64, r[2] + c as f64];
                acc += family_value(family, s.iter().map(|x| x * x).sum(), ell);
            }
        }
    }
    acc
}

/// Diagnostic split of the total error on `n_pairs` sampled lags.
pub fn error_components(family: BoundFamily, m: usize, ell: f64, n_pairs: usize, cfg: &MeasureConfig, seed: u64) -> Result<ErrorComponents> {
    check_ell(ell)?;
    let sub = MeasureConfig { max_pairs: n_pairs, ..*cfg };
    let lags = sample_lags(&sub, seed);
    let b = kernel_coefficients(Family::Matern12, 3, m, ell, family == BoundFamily::DerMatern)?;
    let plan = FourierPlan::new_on_torus(&lags, 3, m, cfg.sigma_over, cfg.s)?;
    let fast = plan.forward(&b)?;
    let h = (m / 2) as i64;
    let mut out = ErrorComponents { periodization: 0.0, fourier: 0.0, nfft: 0.0 };
    for (r, f) in lags.chunks_exact(3).zip(&fast) {
        let r = [r[0], r[1], r[2]];
        let exact = family_value(family, r.iter().map(|x| x * x).sum(), ell);
        out.periodization = out.periodization.max(periodization_tail(family, &r, ell, 6));
        out.fourier = out.fourier.max((exact - f.re).abs());
        let mut direct = 0.0;
        for (i, v) in b.values().iter().enumerate() {
            let k = [(i % m) as i64 - h, ((i / m) % m) as i64 - h, (i / (m * m)) as i64 - h];
            let phase = 2.0 * std::f64::consts::PI * (k[0] as f64 * r[0] + k[1] as f64 * r[1] + k[2] as f64 * r[2]);
            direct += v.re * phase.cos() - v.im * phase.sin();
        }
        out.nfft = out.nfft.max((direct - f.re).abs());
    }
    Ok(out)
}
