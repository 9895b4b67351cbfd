//! Synthetic datasets for the benchmark and training experiments.
//!
//! Every generator draws from named sub-streams of one seed, so the same
//! seed always reproduces the same data.

use crate::data::{FeatureWindows, PointSet};
use crate::error::{Error, Result};
use crate::kernels::{kernel_from_sq, Family};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::streams::sub_rng;
use crate::trainer::{grf_from_covariance, grf_sample};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::str::FromStr;

/// Inputs, labels, and the number of leading rows used for training.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: PointSet<T>,
    pub y: Vec<T>,
    pub n_train: usize,
    pub windows: FeatureWindows,
}

impl<T: Scalar> Dataset<T> {
    pub fn train(&self) -> (PointSet<T>, Vec<T>) {
        let idx: Vec<usize> = (0..self.n_train).collect();
        (self.x.select(&idx), self.y[..self.n_train].to_vec())
    }

    pub fn test(&self) -> (PointSet<T>, Vec<T>) {
        let idx: Vec<usize> = (self.n_train..self.x.n()).collect();
        (self.x.select(&idx), self.y[self.n_train..].to_vec())
    }
}

/// Named synthetic setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setup {
    /// 1000 points in ℝ⁶, three 2-D windows each uniform in a disc of
    /// radius `√(1000/π)`; labels are a uniform `[-1/2, 1/2]` right-hand side.
    Disc,
    /// 3000 points uniform in the hypercube of side `3000^{1/3}` in ℝ⁶;
    /// labels are a uniform `[-1/2, 1/2]` right-hand side.
    Cube,
    /// 3000 points uniform in `[0,1]^6` with
    /// `y = sin(2πx)ᵀexp(x) + ‖x‖² + ε`, `ε ~ N(0, 0.01)`.
    Trig,
    /// 1000 points uniform in `[0,1]`, Gaussian GRF labels with
    /// `σ_f² = 1`, `ℓ = 0.1`, `σ_ε² = 0.01`; 800 for training.
    Grf1d,
    /// 3000 points uniform in `[0,1]^20`; labels from a Gaussian GRF on the
    /// first six features jointly with `σ_f² = 1/2`, `ℓ = 1`,
    /// `σ_ε² = 10⁻⁴`; 2400 for training.
    HighDim,
}

impl Setup {
    pub const ALL: [Setup; 5] = [Setup::Disc, Setup::Cube, Setup::Trig, Setup::Grf1d, Setup::HighDim];

    pub fn name(self) -> &'static str {
        match self {
            Setup::Disc => "disc",
            Setup::Cube => "cube",
            Setup::Trig => "trig",
            Setup::Grf1d => "grf1d",
            Setup::HighDim => "highdim",
        }
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Setup::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown synthetic setup '{s}'")))
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn uniform_rhs<T: Scalar>(n: usize, seed: u64) -> Vec<T> {
    let mut rng = sub_rng(seed, "synthetic-rhs", 0);
    (0..n).map(|_| T::of(rng.random::<f64>() - 0.5)).collect()
}

fn uniform_points<T: Scalar>(n: usize, p: usize, side: f64, seed: u64) -> PointSet<T> {
    let mut rng = sub_rng(seed, "synthetic-points", 0);
    PointSet::new(n, p, (0..n * p).map(|_| T::of(side * rng.random::<f64>())).collect()).unwrap()
}

/// Builds the dataset of `setup` from `seed`.
pub fn generate<T: Scalar>(setup: Setup, seed: u64) -> Result<Dataset<T>> {
    match setup {
        Setup::Disc => {
            let n = 1000;
            let radius = (n as f64 / std::f64::consts::PI).sqrt();
            let mut rng = sub_rng(seed, "synthetic-points", 0);
            let mut data = vec![T::zero(); n * 6];
            for w in 0..3 {
                for i in 0..n {
                    let (a, b) = loop {
                        let a = 2.0 * rng.random::<f64>() - 1.0;
                        let b = 2.0 * rng.random::<f64>() - 1.0;
                        if a * a + b * b < 1.0 {
                            break (a, b);
                        }
                    };
                    data[i * 6 + 2 * w] = T::of(radius * a);
                    data[i * 6 + 2 * w + 1] = T::of(radius * b);
                }
            }
            Ok(Dataset {
                x: PointSet::new(n, 6, data)?,
                y: uniform_rhs(n, seed),
                n_train: n,
                windows: FeatureWindows::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]])?,
            })
        }
        Setup::Cube => {
            let n = 3000;
            Ok(Dataset {
                x: uniform_points(n, 6, (n as f64).cbrt(), seed),
                y: uniform_rhs(n, seed),
                n_train: n,
                windows: FeatureWindows::new(vec![vec![0, 1, 2], vec![3, 4, 5]])?,
            })
        }
        Setup::Trig => {
            let n = 3000;
            let x: PointSet<T> = uniform_points(n, 6, 1.0, seed);
            let mut rng = sub_rng(seed, "synthetic-noise", 0);
            let noise = Normal::new(0.0, 0.1).unwrap();
            let y = (0..n)
                .map(|i| {
                    let r = x.row(i);
                    let v: f64 = r.iter().map(|t| {
                        let t = t.to64();
                        (std::f64::consts::TAU * t).sin() * t.exp() + t * t
                    }).sum();
                    T::of(v + noise.sample(&mut rng))
                })
                .collect();
            Ok(Dataset { x, y, n_train: n, windows: FeatureWindows::new(vec![vec![0, 1, 2], vec![3, 4, 5]])? })
        }
        Setup::Grf1d => {
            let x: PointSet<T> = uniform_points(1000, 1, 1.0, seed);
            let windows = FeatureWindows::new(vec![vec![0]])?;
            let y = grf_sample(&x, Family::Gaussian, &windows, T::one(), T::of(0.1), T::of(0.1), seed)?;
            Ok(Dataset { x, y, n_train: 800, windows })
        }
        Setup::HighDim => {
            let n = 3000;
            let x: PointSet<T> = uniform_points(n, 20, 1.0, seed);
            let sf2 = T::of(0.5);
            let ell = T::one();
            let cov = Matrix::from_fn(n, n, |i, j| {
                let r2: T = (0..6).map(|f| (x.row(i)[f] - x.row(j)[f]) * (x.row(i)[f] - x.row(j)[f])).sum();
                sf2 * kernel_from_sq(Family::Gaussian, r2, ell)
            });
            let y = grf_from_covariance(cov, T::of(0.01), seed)?;
            Ok(Dataset { x, y, n_train: 2400, windows: FeatureWindows::from_one_based(&[vec![6, 4, 5], vec![3, 2, 1]])? })
        }
    }
}
