//! Point sets and feature windows.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major matrix of `n` points with `p` features each.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    n: usize,
    p: usize,
    data: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(n: usize, p: usize, data: Vec<T>) -> Result<Self> {
        crate::error::check_len(n * p, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(PointSet { n, p, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::SizeMismatch { expected: p, got: r.len() });
        }
        Self::new(rows.len(), p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Rows listed in `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        PointSet { n: idx.len(), p: self.p, data }
    }

    /// Coordinates restricted to `window`, row-major `n × |window|`.
    pub fn project(&self, window: &[usize]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * window.len());
        for i in 0..self.n {
            let r = self.row(i);
            out.extend(window.iter().map(|&f| r[f]));
        }
        out
    }

    pub fn column(&self, f: usize) -> Vec<T> {
        (0..self.n).map(|i| self.data[i * self.p + f]).collect()
    }
}

/// Maximum number of features in one window.
pub const D_MAX: usize = 3;

/// Disjoint groups of 0-based feature indices, each of size 1 to 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureWindows {
    windows: Vec<Vec<usize>>,
}

impl FeatureWindows {
    pub fn new(windows: Vec<Vec<usize>>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Windows("no windows".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in &windows {
            if w.is_empty() || w.len() > D_MAX {
                return Err(Error::Windows(format!("window size {} not in 1..={D_MAX}", w.len())));
            }
            for &f in w {
                if !seen.insert(f) {
                    return Err(Error::Windows(format!("feature {} appears twice", f + 1)));
                }
            }
        }
        Ok(FeatureWindows { windows })
    }

    /// Builds windows from 1-based feature indices.
    pub fn from_one_based(windows: &[Vec<usize>]) -> Result<Self> {
        let mut w0 = Vec::with_capacity(windows.len());
        for w in windows {
            if w.contains(&0) {
                return Err(Error::Windows("feature index 0 in a 1-based listing".into()));
            }
            w0.push(w.iter().map(|f| f - 1).collect());
        }
        Self::new(w0)
    }

    /// Rejects windows referring to features beyond `p`.
    pub fn check_features(&self, p: usize) -> Result<()> {
        match self.windows.iter().flatten().find(|&&f| f >= p) {
            Some(f) => Err(Error::Windows(format!("feature {} exceeds the {p} available", f + 1))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn get(&self, s: usize) -> &[usize] {
        &self.windows[s]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.windows.iter().map(|w| w.as_slice())
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.windows.iter().map(|w| w.iter().map(|f| f + 1).collect()).collect()
    }
}
