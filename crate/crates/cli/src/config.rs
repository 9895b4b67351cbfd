//! Flat `key = value` configuration with documented defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Every accepted key with its default and a short description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data", "", "training CSV (header row, numeric cells)"),
    ("label_column", "", "label column name; empty selects the last column"),
    ("test_data", "", "test CSV for predict, same columns as the training CSV"),
    ("windows", "", "windows file, one window of 1-based features per line"),
    ("params", "", "fitted-params file written by train"),
    ("output", "out", "output directory"),
    ("family", "gaussian", "kernel family: gaussian | matern12"),
    ("backend", "nfft", "matvec backend: nfft | exact"),
    ("nfft_m", "32", "NFFT bandwidth per axis"),
    ("nfft_sigma", "2", "NFFT oversampling factor"),
    ("nfft_s", "8", "NFFT window support"),
    ("learning_rate", "0.01", "Adam learning rate"),
    ("max_iter", "500", "Adam iterations"),
    ("beta1", "0.9", "Adam first-moment decay"),
    ("beta2", "0.999", "Adam second-moment decay"),
    ("adam_eps", "1e-8", "Adam denominator offset"),
    ("n_probes", "10", "Rademacher probes per iteration"),
    ("cg_tol", "1e-6", "relative residual tolerance of training solves"),
    ("cg_iters", "10", "PCG iterations during training"),
    ("lanczos_steps", "10", "Lanczos steps per probe"),
    ("predict_cg_iters", "50", "PCG iterations for prediction"),
    ("predict_cg_tol", "1e-8", "relative residual tolerance for prediction"),
    ("landmarks", "10", "AAFN landmarks per window"),
    ("fill", "20", "AAFN Schur-complement fill per row"),
    ("seed", "0", "master seed of all random sub-streams"),
    ("sigma_f_mode", "trained", "trained | fixed (sigma_f = 1/sqrt(P))"),
    ("precondition", "true", "use the AAFN preconditioner"),
    ("rebuild_every", "1", "rebuild AAFN every this many Adam steps"),
    ("window_source", "file", "file | mis | en"),
    ("thres", "", "keep features scoring at least this value"),
    ("d_ratio", "", "keep this fraction of the features"),
    ("d_target", "", "keep this many features"),
    ("d_max", "3", "largest window size"),
    ("n_bins", "16", "quantile bins of the mutual-information estimate"),
    ("en_lambda", "0.01", "elastic-net penalty weight"),
    ("en_rho", "0.5", "elastic-net L1 share"),
    ("en_max_sweeps", "1000", "elastic-net coordinate sweeps"),
    ("en_tol", "1e-6", "elastic-net coefficient change tolerance"),
    ("subsample", "1000", "rows used for grouping; 0 uses all"),
    ("setup", "cube", "synthetic setup: disc | cube | trig | grf1d | highdim"),
    ("synthetic", "grf1d,highdim", "setups written by make-synthetic"),
    ("ell_min", "0.1", "smallest length-scale of the precond-bench sweep"),
    ("ell_max", "100", "largest length-scale of the precond-bench sweep"),
    ("ell_count", "10", "length-scales in the precond-bench sweep"),
    ("rank", "300", "total AAFN landmarks in precond-bench"),
    ("bench_fill", "100", "AAFN fill in precond-bench"),
    ("bench_tol", "1e-4", "relative residual tolerance in precond-bench"),
    ("bench_cap", "200", "iteration cap in precond-bench"),
    ("bench_noise", "0.01", "noise variance in precond-bench"),
    ("sizes", "500,1000,2000", "point counts of matvec-bench"),
    ("bench_ell", "0.5", "length-scale of matvec-bench"),
    ("bound_m", "16,32,64", "bandwidths of verify-bounds"),
    ("bound_ell_min", "0.01", "smallest length-scale of verify-bounds"),
    ("bound_ell_max", "10", "largest length-scale of verify-bounds"),
    ("bound_ell_count", "13", "length-scales in verify-bounds"),
    ("bound_samples", "10000", "sampled points in verify-bounds"),
    ("bound_pairs", "1000000", "largest number of lags in verify-bounds"),
    ("bound_s", "4", "NFFT support used to evaluate the Fourier sums"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> Result<(), String> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(format!("unknown config key '{key}'"))
    }
}

impl Default for Config {
    fn default() -> Self {
        Config { values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Config::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected 'key = value'", no + 1))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| format!("line {}: {e}", no + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        known(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `--key value` and `--key=value` pairs.
    pub fn apply_flags(&mut self, args: &[String]) -> Result<(), String> {
        let mut it = args.iter();
        while let Some(a) = it.next() {
            let body = a.strip_prefix("--").ok_or_else(|| format!("expected --key, got '{a}'"))?;
            let (k, v) = match body.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| format!("flag --{body} needs a value"))?;
                    (body.to_string(), v.clone())
                }
            };
            self.set(&k.replace('-', "_"), &v)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, String>
    where
        T::Err: Display,
    {
        self.raw(key).parse().map_err(|e| format!("config key '{key}': {e}"))
    }

    /// `None` for an empty value.
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, String>
    where
        T::Err: Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| format!("config key '{key}': {e}")))
            .collect()
    }

    /// Every key with its resolved value, in `key = value` form.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
