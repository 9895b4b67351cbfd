//! Feature windows from mutual-information scores or elastic-net coefficients.

use crate::data::{FeatureWindows, PointSet, D_MAX};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Coefficients below this magnitude are always dropped from EN rankings.
pub const EN_DROP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreKind {
    MutualInformation,
    ElasticNet,
}

/// Per-feature scores and their descending ranking.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScores {
    pub kind: ScoreKind,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
    /// Set when the scores are degenerate, e.g. for a constant label.
    pub warning: Option<String>,
}

impl FeatureScores {
    pub fn new(kind: ScoreKind, scores: Vec<f64>) -> Self {
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        FeatureScores { kind, scores, ranking, warning: None }
    }
}

/// Equal-frequency bin of every value; equal values share a bin.
pub fn quantile_bins<T: Scalar>(values: &[T], n_bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut bins = vec![0; n];
    let mut first = 0;
    for r in 0..n {
        if r > 0 && values[idx[r]] != values[idx[r - 1]] {
            first = r;
        }
        bins[idx[r]] = (first * n_bins / n).min(n_bins - 1);
    }
    bins
}

/// Plug-in mutual information (nats) of two discrete labelings.
pub fn plugin_mi(a: &[usize], b: &[usize], na: usize, nb: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0usize; na * nb];
    let mut pa = vec![0usize; na];
    let mut pb = vec![0usize; nb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * nb + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let mut mi = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let c = joint[i * nb + j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Mutual information between each feature and the label from a joint
/// quantile-bin histogram.
pub fn mis_scores<T: Scalar>(x: &PointSet<T>, y: &[T], n_bins: usize) -> Result<FeatureScores> {
    check_len(x.n(), y.len())?;
    if x.n() < 2 {
        return Err(Error::InvalidParameter("mutual information needs at least two points".into()));
    }
    if n_bins < 2 {
        return Err(Error::InvalidParameter("n_bins must be at least 2".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("labels"));
    }
    if y.iter().all(|v| *v == y[0]) {
        let mut s = FeatureScores::new(ScoreKind::MutualInformation, vec![0.0; x.p()]);
        s.warning = Some("constant label vector; all scores are zero".into());
        return Ok(s);
    }
    let yb = quantile_bins(y, n_bins);
    let scores = (0..x.p()).map(|f| plugin_mi(&quantile_bins(&x.column(f), n_bins), &yb, n_bins, n_bins)).collect();
    Ok(FeatureScores::new(ScoreKind::MutualInformation, scores))
}

/// Coordinate-descent result on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct ElasticNetFit {
    pub coef: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep, starting with the value at `w = 0`.
    pub objective: Vec<f64>,
}

fn standardize<T: Scalar>(x: &PointSet<T>, y: &[T]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.n() as f64;
    let cols = (0..x.p())
        .map(|f| {
            let c: Vec<f64> = x.column(f).iter().map(|v| v.to64()).collect();
            let mean = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                c.iter().map(|v| (v - mean) / sd).collect()
            } else {
                vec![0.0; c.len()]
            }
        })
        .collect();
    let ym = y.iter().map(|v| v.to64()).sum::<f64>() / n;
    (cols, y.iter().map(|v| v.to64() - ym).collect())
}

/// `(1/2n)‖Xw − y‖² + λρ‖w‖₁ + (λ(1−ρ)/2)‖w‖₂²` on standardized data.
pub fn en_objective(cols: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64, rho: f64) -> f64 {
    let n = y.len() as f64;
    let mut r = y.to_vec();
    for (c, wj) in cols.iter().zip(w) {
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri -= wj * ci;
        }
    }
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    r.iter().map(|v| v * v).sum::<f64>() / (2.0 * n) + lambda * rho * l1 + 0.5 * lambda * (1.0 - rho) * l2
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Elastic net by cyclic coordinate descent with soft-thresholding.
pub fn elastic_net<T: Scalar>(x: &PointSet<T>, y: &[T], lambda: f64, rho: f64, max_sweeps: usize, tol: f64) -> Result<ElasticNetFit> {
    check_len(x.n(), y.len())?;
    if x.is_empty() {
        return Err(Error::Empty);
    }
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter("elastic net needs lambda >= 0 and rho in [0, 1]".into()));
    }
    let (cols, yc) = standardize(x, y);
    let n = x.n() as f64;
    let p = x.p();
    let mut w = vec![0.0; p];
    let mut r = yc.clone();
    let mut objective = vec![en_objective(&cols, &yc, &w, lambda, rho)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let c = &cols[j];
            let sq: f64 = c.iter().map(|v| v * v).sum::<f64>() / n;
            if sq == 0.0 {
                continue;
            }
            let z = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + sq * w[j];
            let new = soft_threshold(z, lambda * rho) / (sq + lambda * (1.0 - rho));
            let delta = new - w[j];
            if delta != 0.0 {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= delta * ci;
                }
                w[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        objective.push(en_objective(&cols, &yc, &w, lambda, rho));
        if max_change < tol {
            converged = true;
            break;
        }
    }
    Ok(ElasticNetFit { coef: w, sweeps, converged, objective })
}

/// Scores `|w_j|` from an elastic-net fit.
pub fn en_scores(fit: &ElasticNetFit) -> FeatureScores {
    FeatureScores::new(ScoreKind::ElasticNet, fit.coef.iter().map(|v| v.abs()).collect())
}

/// Feature selection rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectionPolicy {
    Threshold(f64),
    Ratio(f64),
    Target(usize),
}

/// Keeps features by `policy` and chunks them, in ranking order, into
/// windows of at most `d_max` features.
pub fn build_windows(scores: &FeatureScores, policy: SelectionPolicy, d_max: usize) -> Result<FeatureWindows> {
    if d_max == 0 || d_max > D_MAX {
        return Err(Error::InvalidParameter(format!("d_max must be in 1..={D_MAX}")));
    }
    let p = scores.scores.len();
    let eligible: Vec<usize> = scores
        .ranking
        .iter()
        .copied()
        .filter(|&f| scores.kind != ScoreKind::ElasticNet || scores.scores[f] >= EN_DROP_TOL)
        .collect();
    let kept: Vec<usize> = match policy {
        SelectionPolicy::Threshold(t) => {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter("thres must be positive".into()));
            }
            eligible.into_iter().filter(|&f| scores.scores[f] >= t).collect()
        }
        SelectionPolicy::Ratio(r) => {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidParameter("d_ratio must be in (0, 1]".into()));
            }
            let k = ((r * p as f64) - 1e-9).ceil().max(0.0) as usize;
            eligible.into_iter().take(k).collect()
        }
        SelectionPolicy::Target(k) => {
            if k == 0 {
                return Err(Error::InvalidParameter("d_target must be positive".into()));
            }
            eligible.into_iter().take(k).collect()
        }
    };
    if kept.is_empty() {
        return Err(Error::NoFeatures);
    }
    FeatureWindows::new(kept.chunks(d_max).map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::sub_rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn random_points(n: usize, p: usize, seed: u64) -> PointSet<f64> {
        let mut rng = sub_rng(seed, "test", 0);
        PointSet::new(n, p, (0..n * p).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let s = FeatureScores::new(ScoreKind::MutualInformation, vec![0.1, 0.5, 0.1, 0.5]);
        assert_eq!(s.ranking, vec![1, 3, 0, 2]);
    }

    #[test]
    fn ratio_example_keeps_five_of_thirteen() {
        let order = [2usize, 7, 9, 4, 10, 1, 3, 5, 6, 8, 11, 12, 13];
        let mut scores = vec![0.0; 13];
        for (r, f) in order.iter().enumerate() {
            scores[f - 1] = 13.0 - r as f64;
        }
        let s = FeatureScores::new(ScoreKind::MutualInformation, scores);
        let w = build_windows(&s, SelectionPolicy::Ratio(1.0 / 3.0), 3).unwrap();
        assert_eq!(w.to_one_based(), vec![vec![2, 7, 9], vec![4, 10]]);
    }

    #[test]
    fn chunking_rule() {
        let s = FeatureScores::new(ScoreKind::MutualInformation, (0..7).map(|i| 7.0 - i as f64).collect());
        let w = build_windows(&s, SelectionPolicy::Target(7), 3).unwrap();
        let sizes: Vec<usize> = w.iter().map(|x| x.len()).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        let s3 = FeatureScores::new(ScoreKind::MutualInformation, vec![0.3, 0.2, 0.1]);
        assert_eq!(build_windows(&s3, SelectionPolicy::Target(5), 3).unwrap().len(), 1);
        let w = build_windows(&s, SelectionPolicy::Threshold(4.5), 3).unwrap();
        assert_eq!(w.to_one_based(), vec![vec![1, 2, 3]]);
        assert_eq!(build_windows(&s, SelectionPolicy::Threshold(100.0), 3), Err(Error::NoFeatures));
        assert!(build_windows(&s, SelectionPolicy::Ratio(0.0), 3).is_err());
    }

    #[test]
    fn en_drops_tiny_coefficients() {
        let s = FeatureScores::new(ScoreKind::ElasticNet, vec![0.5, 1e-13, 0.2, 0.0]);
        let w = build_windows(&s, SelectionPolicy::Target(4), 3).unwrap();
        assert_eq!(w.to_one_based(), vec![vec![1, 3]]);
    }

    #[test]
    fn mi_of_binned_feature_is_its_entropy() {
        let x = random_points(800, 1, 1);
        let bins = quantile_bins(&x.column(0), 16);
        let y: Vec<f64> = bins.iter().map(|b| *b as f64).collect();
        let s = mis_scores(&x, &y, 16).unwrap();
        let mut counts = [0usize; 16];
        for b in &bins {
            counts[*b] += 1;
        }
        let h: f64 = counts.iter().filter(|c| **c > 0).map(|&c| {
            let p = c as f64 / 800.0;
            -p * p.ln()
        }).sum();
        assert!((s.scores[0] - h).abs() < 1e-12);
    }

    #[test]
    fn mi_of_independent_feature_is_small() {
        let x = random_points(2000, 2, 2);
        let y: Vec<f64> = (0..2000).map(|i| x.row(i)[0]).collect();
        let s = mis_scores(&x, &y, 16).unwrap();
        assert!(s.scores[1] < 0.1 * s.scores[0]);
        let mut perm = y.clone();
        perm.shuffle(&mut sub_rng(3, "test", 0));
        let nulls: Vec<f64> = (0..20)
            .map(|k| {
                let mut p = y.clone();
                p.shuffle(&mut sub_rng(100 + k, "test", 0));
                mis_scores(&x, &p, 16).unwrap().scores[0]
            })
            .collect();
        let top = nulls.iter().copied().fold(0.0, f64::max);
        let si = mis_scores(&x, &perm, 16).unwrap().scores[0];
        assert!(si <= 2.0 * top + 1e-12, "{si} vs null max {top}");
        assert!(top < 0.1);
    }

    #[test]
    fn constant_label_warns() {
        let x = random_points(10, 3, 4);
        let s = mis_scores(&x, &[1.0; 10], 16).unwrap();
        assert!(s.warning.is_some());
        assert!(s.scores.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn en_full_shrinkage() {
        let x = random_points(50, 4, 5);
        let y: Vec<f64> = (0..50).map(|i| x.row(i)[0] * 3.0).collect();
        let fit = elastic_net(&x, &y, 100.0, 0.5, 1000, 1e-6).unwrap();
        assert!(fit.coef.iter().all(|v| *v == 0.0));
        assert!(fit.converged);
    }

    fn standardized_normal_eq(x: &PointSet<f64>, y: &[f64], ridge: f64) -> Vec<f64> {
        let (cols, yc) = standardize(x, y);
        let n = y.len() as f64;
        let p = cols.len();
        let a = nalgebra::DMatrix::from_fn(p, p, |i, j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / n + if i == j { ridge } else { 0.0 });
        let b = nalgebra::DVector::from_fn(p, |i, _| cols[i].iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / n);
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn en_zero_lambda_is_least_squares() {
        let x = random_points(200, 6, 6);
        let mut rng = sub_rng(6, "noise", 0);
        let y: Vec<f64> = (0..200).map(|i| x.row(i).iter().enumerate().map(|(j, v)| (j as f64 - 2.0) * v).sum::<f64>() + 0.1 * rng.random::<f64>()).collect();
        let fit = elastic_net(&x, &y, 0.0, 0.5, 10000, 1e-12).unwrap();
        let ols = standardized_normal_eq(&x, &y, 0.0);
        for (a, b) in fit.coef.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn en_pure_ridge_matches_normal_equations() {
        let x = random_points(100, 4, 7);
        let y: Vec<f64> = (0..100).map(|i| x.row(i)[0] - 2.0 * x.row(i)[2]).collect();
        let fit = elastic_net(&x, &y, 0.3, 0.0, 10000, 1e-13).unwrap();
        let ridge = standardized_normal_eq(&x, &y, 0.3);
        for (a, b) in fit.coef.iter().zip(&ridge) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    fn proximal_gradient_lasso(cols: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
        let n = y.len() as f64;
        let p = cols.len();
        let gram = nalgebra::DMatrix::from_fn(p, p, |i, j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / n);
        let step = 1.0 / gram.clone().symmetric_eigen().eigenvalues.max();
        let xty: Vec<f64> = (0..p).map(|i| cols[i].iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n).collect();
        let mut w = vec![0.0; p];
        for _ in 0..200000 {
            let g: Vec<f64> = (0..p).map(|i| (0..p).map(|j| gram[(i, j)] * w[j]).sum::<f64>() - xty[i]).collect();
            w = (0..p).map(|i| soft_threshold(w[i] - step * g[i], step * lambda)).collect();
        }
        w
    }

    #[test]
    fn en_rho_one_is_lasso() {
        let x = random_points(120, 5, 8);
        let y: Vec<f64> = (0..120).map(|i| 2.0 * x.row(i)[1] - x.row(i)[3] + 0.3 * x.row(i)[4]).collect();
        let fit = elastic_net(&x, &y, 0.05, 1.0, 10000, 1e-13).unwrap();
        let (cols, yc) = standardize(&x, &y);
        let oracle = proximal_gradient_lasso(&cols, &yc, 0.05);
        for (a, b) in fit.coef.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert!(fit.coef[0].abs() < 1e-12 && fit.coef[2].abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn en_objective_nonincreasing(seed in 0u64..10000, lambda in 0.0f64..1.0, rho in 0.0f64..=1.0) {
            let x = random_points(40, 5, seed);
            let mut rng = sub_rng(seed, "y", 0);
            let y: Vec<f64> = (0..40).map(|i| x.row(i)[0] - x.row(i)[1] + rng.random::<f64>()).collect();
            let fit = elastic_net(&x, &y, lambda, rho, 50, 0.0).unwrap();
            for w in fit.objective.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }

        #[test]
        fn mi_invariant_under_monotone_transform(seed in 0u64..10000) {
            let x = random_points(300, 1, seed);
            let y: Vec<f64> = (0..300).map(|i| (6.0 * x.row(i)[0]).sin()).collect();
            let xt = PointSet::new(300, 1, x.column(0).iter().map(|v| (3.0 * v).exp() - 7.0).collect()).unwrap();
            let a = mis_scores(&x, &y, 16).unwrap().scores[0];
            let b = mis_scores(&xt, &y, 16).unwrap().scores[0];
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn windows_partition_kept_features(scores in proptest::collection::vec(0.0f64..1.0, 1..20), k in 1usize..20) {
            let s = FeatureScores::new(ScoreKind::MutualInformation, scores.clone());
            let w = build_windows(&s, SelectionPolicy::Target(k), 3).unwrap();
            let flat: Vec<usize> = w.iter().flatten().copied().collect();
            prop_assert_eq!(flat.len(), k.min(scores.len()));
            prop_assert_eq!(&flat[..], &s.ranking[..flat.len()]);
            prop_assert!(w.iter().all(|x| x.len() <= 3));
        }
    }
}
