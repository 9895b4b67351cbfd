//! The CLI workflows.

use crate::config::Config;
use crate::io::{format_params, format_windows, load_csv, load_windows, parse_params, write_csv, write_table, Table};
use nfftgp::aafn::AafnPrecond;
use nfftgp::bounds::{bound_report, log_grid, BoundFamily, MeasureConfig};
use nfftgp::data::{FeatureWindows, PointSet};
use nfftgp::fastsum::{AdditiveMatvecEngine, Backend, NfftConfig};
use nfftgp::grouping::{build_windows, elastic_net, en_scores, mis_scores, FeatureScores, SelectionPolicy};
use nfftgp::kernels::{dense_matrix, Family, HyperParams, KernelSpec, Operator};
use nfftgp::krylov::pcg_many;
use nfftgp::streams::sub_rng;
use nfftgp::synthetic::{generate, Dataset, Setup};
use nfftgp::trainer::{adam_fit, predict, rmse, TrainConfig};
use rand::seq::index::sample;
use rand::Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub const COMMANDS: [&str; 7] = ["train", "predict", "group-features", "matvec-bench", "precond-bench", "verify-bounds", "make-synthetic"];

type Res<T> = Result<T, String>;

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Settings for training and prediction taken from the config.
pub fn train_config(cfg: &Config) -> Res<TrainConfig> {
    let tc = TrainConfig {
        family: cfg.get("family")?,
        backend: cfg.get("backend")?,
        nfft: NfftConfig { m: cfg.get("nfft_m")?, sigma_over: cfg.get("nfft_sigma")?, s: cfg.get("nfft_s")? },
        learning_rate: cfg.get("learning_rate")?,
        max_iter: cfg.get("max_iter")?,
        beta1: cfg.get("beta1")?,
        beta2: cfg.get("beta2")?,
        adam_eps: cfg.get("adam_eps")?,
        n_probes: cfg.get("n_probes")?,
        cg_tol: cfg.get("cg_tol")?,
        cg_iters: cfg.get("cg_iters")?,
        lanczos_steps: cfg.get("lanczos_steps")?,
        predict_cg_iters: cfg.get("predict_cg_iters")?,
        predict_cg_tol: cfg.get("predict_cg_tol")?,
        landmarks_per_window: cfg.get("landmarks")?,
        fill: cfg.get("fill")?,
        seed: cfg.get("seed")?,
        sigma_f_mode: cfg.get("sigma_f_mode")?,
        precondition: cfg.get("precondition")?,
        rebuild_every: cfg.get("rebuild_every")?,
    };
    tc.validate().map_err(e2s)?;
    Ok(tc)
}

fn required(cfg: &Config, key: &str) -> Res<PathBuf> {
    let v = cfg.raw(key);
    if v.is_empty() {
        Err(format!("config key '{key}' is required for this command"))
    } else {
        Ok(PathBuf::from(v))
    }
}

fn load_data(cfg: &Config, key: &str) -> Res<Table> {
    let label = cfg.raw("label_column");
    load_csv(&required(cfg, key)?, if label.is_empty() { None } else { Some(label) })
}

fn policy(cfg: &Config) -> Res<SelectionPolicy> {
    let set = [cfg.opt::<f64>("thres")?.map(SelectionPolicy::Threshold), cfg.opt::<f64>("d_ratio")?.map(SelectionPolicy::Ratio), cfg.opt::<usize>("d_target")?.map(SelectionPolicy::Target)];
    let chosen: Vec<SelectionPolicy> = set.into_iter().flatten().collect();
    match chosen.as_slice() {
        [p] => Ok(*p),
        [] => Err("set exactly one of thres, d_ratio, d_target".into()),
        _ => Err("thres, d_ratio and d_target are mutually exclusive".into()),
    }
}

/// Scores from the configured source on the grouping subsample.
fn feature_scores(cfg: &Config, x: &PointSet<f64>, y: &[f64], source: &str) -> Res<FeatureScores> {
    let sub: usize = cfg.get("subsample")?;
    let (xs, ys) = if sub > 0 && sub < x.n() {
        let mut rng = sub_rng(cfg.get("seed")?, "grouping-subsample", 0);
        let mut idx = sample(&mut rng, x.n(), sub).into_vec();
        idx.sort_unstable();
        (x.select(&idx), idx.iter().map(|&i| y[i]).collect::<Vec<_>>())
    } else {
        (x.clone(), y.to_vec())
    };
    match source {
        "mis" => mis_scores(&xs, &ys, cfg.get("n_bins")?).map_err(e2s),
        "en" => {
            let fit = elastic_net(&xs, &ys, cfg.get("en_lambda")?, cfg.get("en_rho")?, cfg.get("en_max_sweeps")?, cfg.get("en_tol")?).map_err(e2s)?;
            if !fit.converged {
                eprintln!("warning: elastic net stopped after {} sweeps without converging", fit.sweeps);
            }
            Ok(en_scores(&fit))
        }
        other => Err(format!("window_source '{other}' does not produce scores")),
    }
}

fn resolve_windows(cfg: &Config, t: &Table) -> Res<FeatureWindows> {
    let w = match cfg.raw("window_source") {
        "file" => load_windows(&required(cfg, "windows")?)?,
        src @ ("mis" | "en") => {
            let s = feature_scores(cfg, &t.x, &t.y, src)?;
            build_windows(&s, policy(cfg)?, cfg.get("d_max")?).map_err(e2s)?
        }
        other => return Err(format!("unknown window_source '{other}'")),
    };
    w.check_features(t.x.p()).map_err(e2s)?;
    Ok(w)
}

fn out_dir(cfg: &Config) -> Res<PathBuf> {
    let d = PathBuf::from(cfg.raw("output"));
    std::fs::create_dir_all(&d).map_err(|e| format!("cannot create {}: {e}", d.display()))?;
    Ok(d)
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn write_manifest(dir: &Path, command: &str, cfg: &Config, outputs: &[PathBuf], extra: &str) -> Res<PathBuf> {
    let mut s = String::new();
    writeln!(s, "# command").unwrap();
    writeln!(s, "command = {command}").unwrap();
    writeln!(s, "nfftgp_version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "seed = {}", cfg.raw("seed")).unwrap();
    for o in outputs {
        writeln!(s, "output_file = {}", o.display()).unwrap();
    }
    s.push_str(extra);
    writeln!(s, "# config").unwrap();
    s.push_str(&cfg.echo());
    let p = dir.join("manifest.txt");
    write_text(&p, &s)?;
    Ok(p)
}

fn cmd_train(cfg: &Config) -> Res<Vec<PathBuf>> {
    let t = load_data(cfg, "data")?;
    let windows = resolve_windows(cfg, &t)?;
    let tc = train_config(cfg)?;
    let dir = out_dir(cfg)?;
    let result = adam_fit(&t.x, &t.y, &windows, &tc);
    let trace = match &result {
        Ok((_, tr)) => tr.clone(),
        Err(f) => f.trace.clone(),
    };
    let trace_path = dir.join("trace.csv");
    write_csv(
        &trace_path,
        &["iter", "raw_sigma_f", "raw_ell", "raw_sigma_eps", "sigma_f", "ell", "sigma_eps", "loss", "grad_norm", "seconds"],
        trace.iter().map(|r| vec![r.iter as f64, r.raw[0], r.raw[1], r.raw[2], r.values[0], r.values[1], r.values[2], r.loss, r.grad_norm, r.seconds]),
    )?;
    let (params, _) = result.map_err(e2s)?;
    let params_path = dir.join("params.txt");
    write_text(&params_path, &format_params(&params, &tc.family.to_string()))?;
    let windows_path = dir.join("windows.txt");
    write_text(&windows_path, &format_windows(&windows))?;
    let outs = vec![trace_path, params_path, windows_path];
    let m = write_manifest(&dir, "train", cfg, &outs, "")?;
    Ok(outs.into_iter().chain([m]).collect())
}

fn cmd_predict(cfg: &Config) -> Res<Vec<PathBuf>> {
    let train = load_data(cfg, "data")?;
    let test = load_data(cfg, "test_data")?;
    if test.x.p() != train.x.p() {
        return Err(format!("test data has {} features, training data {}", test.x.p(), train.x.p()));
    }
    let windows = load_windows(&required(cfg, "windows")?)?;
    windows.check_features(train.x.p()).map_err(e2s)?;
    let text = std::fs::read_to_string(required(cfg, "params")?).map_err(|e| format!("cannot read params: {e}"))?;
    let (params, fam) = parse_params(&text)?;
    let mut tc = train_config(cfg)?;
    if let Some(f) = fam {
        tc.family = Family::from_str(&f).map_err(e2s)?;
    }
    let pred = predict(params, &windows, &train.x, &train.y, &test.x, &tc).map_err(e2s)?;
    if pred.clamped > 0 {
        eprintln!("warning: {} latent variances clamped at zero", pred.clamped);
    }
    let dir = out_dir(cfg)?;
    let path = dir.join("predictions.csv");
    write_csv(
        &path,
        &["mean", "latent_var", "noisy_var", "lo95", "hi95"],
        (0..test.x.n()).map(|j| vec![pred.mean[j], pred.latent_var[j], pred.noisy_var[j], pred.lo95[j], pred.hi95[j]]),
    )?;
    let r = rmse(&pred.mean, &test.y).map_err(e2s)?;
    let extra = format!("test_rmse = {r}\nclamped_variances = {}\n", pred.clamped);
    let m = write_manifest(&dir, "predict", cfg, std::slice::from_ref(&path), &extra)?;
    Ok(vec![path, m])
}

fn cmd_group(cfg: &Config) -> Res<Vec<PathBuf>> {
    let t = load_data(cfg, "data")?;
    let source = match cfg.raw("window_source") {
        "file" => "mis",
        s => s,
    };
    let scores = feature_scores(cfg, &t.x, &t.y, source)?;
    if let Some(w) = &scores.warning {
        eprintln!("warning: {w}");
    }
    let windows = build_windows(&scores, policy(cfg)?, cfg.get("d_max")?).map_err(e2s)?;
    let dir = out_dir(cfg)?;
    let wpath = dir.join("windows.txt");
    write_text(&wpath, &format_windows(&windows))?;
    let mut rank = vec![0usize; scores.scores.len()];
    for (r, &f) in scores.ranking.iter().enumerate() {
        rank[f] = r + 1;
    }
    let spath = dir.join("scores.csv");
    write_csv(&spath, &["feature", "score", "rank"], (0..scores.scores.len()).map(|f| vec![(f + 1) as f64, scores.scores[f], rank[f] as f64]))?;
    let outs = vec![wpath, spath];
    let m = write_manifest(&dir, "group-features", cfg, &outs, &format!("score_source = {source}\n"))?;
    Ok(outs.into_iter().chain([m]).collect())
}

fn default_windows(cfg: &Config) -> Res<FeatureWindows> {
    if cfg.raw("windows").is_empty() {
        FeatureWindows::from_one_based(&[vec![1, 2, 3], vec![4, 5, 6]]).map_err(e2s)
    } else {
        load_windows(&required(cfg, "windows")?)
    }
}

/// Backend codes used in the matvec-bench CSV.
pub fn backend_code(b: Backend) -> f64 {
    match b {
        Backend::Exact => 0.0,
        Backend::Nfft => 1.0,
    }
}

fn cmd_matvec_bench(cfg: &Config) -> Res<Vec<PathBuf>> {
    let tc = train_config(cfg)?;
    let windows = default_windows(cfg)?;
    let p = windows.iter().flatten().max().unwrap() + 1;
    let ell: f64 = cfg.get("bench_ell")?;
    let seed: u64 = cfg.get("seed")?;
    let mut rows = Vec::new();
    for n in cfg.list::<usize>("sizes")? {
        let mut rng = sub_rng(seed, "matvec-bench", n as u64);
        let x = PointSet::new(n, p, (0..n * p).map(|_| rng.random::<f64>()).collect()).map_err(e2s)?;
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let spec = KernelSpec::new(tc.family, windows.clone(), HyperParams::from_values(1.0, ell, 0.1).map_err(e2s)?);
        let t = Instant::now();
        let exact = dense_matrix(&spec, &x, Operator::K).map_err(e2s)?.matvec(&v);
        let te = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let fast = AdditiveMatvecEngine::new(spec, &x, Backend::Nfft, tc.nfft).and_then(|mut e| e.matvec(&v, Operator::K)).map_err(e2s)?;
        let tn = t.elapsed().as_secs_f64();
        let scale = exact.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let err = exact.iter().zip(&fast).fold(0.0f64, |a, (u, w)| a.max((u - w).abs())) / scale;
        rows.push(vec![n as f64, backend_code(Backend::Exact), 0.0, te]);
        rows.push(vec![n as f64, backend_code(Backend::Nfft), err, tn]);
    }
    let dir = out_dir(cfg)?;
    let path = dir.join("matvec_bench.csv");
    write_csv(&path, &["n", "backend", "max_rel_err", "seconds"], rows)?;
    let m = write_manifest(&dir, "matvec-bench", cfg, std::slice::from_ref(&path), "backend_codes = 0:exact,1:nfft\n")?;
    Ok(vec![path, m])
}

fn cmd_precond_bench(cfg: &Config) -> Res<Vec<PathBuf>> {
    let tc = train_config(cfg)?;
    let setup: Setup = cfg.get("setup")?;
    let data: Dataset<f64> = generate(setup, cfg.get("seed")?).map_err(e2s)?;
    let pcount = data.windows.len();
    let per_window = (cfg.get::<usize>("rank")? / pcount).max(1);
    let fill: usize = cfg.get("bench_fill")?;
    let tol: f64 = cfg.get("bench_tol")?;
    let cap: usize = cfg.get("bench_cap")?;
    let noise: f64 = cfg.get("bench_noise")?;
    let sf = (1.0 / pcount as f64).sqrt();
    let mut rows = Vec::new();
    for ell in log_grid(cfg.get("ell_min")?, cfg.get("ell_max")?, cfg.get("ell_count")?) {
        let spec = KernelSpec::new(tc.family, data.windows.clone(), HyperParams::from_values(sf, ell, noise.sqrt()).map_err(e2s)?);
        let mut engine = AdditiveMatvecEngine::new(spec.clone(), &data.x, tc.backend, tc.nfft).map_err(e2s)?;
        let m = AafnPrecond::build(&spec, &data.x, per_window, fill).map_err(e2s)?;
        let rhs = [data.y.clone()];
        let mut iters = [0usize; 2];
        for (k, pre) in [None, Some(&m)].into_iter().enumerate() {
            let r = pcg_many(
                |vs: &[Vec<f64>]| engine.matvec_many(vs, Operator::KHat),
                |v: &[f64]| match pre {
                    Some(m) => m.apply_inverse(v),
                    None => Ok(v.to_vec()),
                },
                &rhs,
                tol,
                cap,
                false,
            )
            .map_err(e2s)?;
            iters[k] = r[0].iterations;
        }
        rows.push(vec![ell, iters[0] as f64, iters[1] as f64]);
    }
    let dir = out_dir(cfg)?;
    let path = dir.join("precond_bench.csv");
    write_csv(&path, &["ell", "cg_iters", "pcg_iters"], rows)?;
    let m = write_manifest(&dir, "precond-bench", cfg, std::slice::from_ref(&path), "")?;
    Ok(vec![path, m])
}

fn cmd_verify_bounds(cfg: &Config) -> Res<Vec<PathBuf>> {
    let mc = MeasureConfig { n_samples: cfg.get("bound_samples")?, max_pairs: cfg.get("bound_pairs")?, sigma_over: cfg.get("nfft_sigma")?, s: cfg.get("bound_s")? };
    let ms: Vec<usize> = cfg.list("bound_m")?;
    let ells = log_grid(cfg.get("bound_ell_min")?, cfg.get("bound_ell_max")?, cfg.get("bound_ell_count")?);
    let dir = out_dir(cfg)?;
    let mut outs = Vec::new();
    let mut extra = String::new();
    for family in [BoundFamily::Matern, BoundFamily::DerMatern] {
        let rep = bound_report(family, &ms, &ells, &mc, cfg.get("seed")?).map_err(e2s)?;
        let path = dir.join(format!("bounds_{family}.csv"));
        write_text(&path, &rep.to_csv())?;
        writeln!(extra, "{family}_all_valid = {}\n{family}_pairs = {}", rep.all_valid(), rep.pairs).unwrap();
        outs.push(path);
    }
    let m = write_manifest(&dir, "verify-bounds", cfg, &outs, &extra)?;
    Ok(outs.into_iter().chain([m]).collect())
}

fn cmd_make_synthetic(cfg: &Config) -> Res<Vec<PathBuf>> {
    let seed: u64 = cfg.get("seed")?;
    let dir = out_dir(cfg)?;
    let mut outs = Vec::new();
    for name in cfg.list::<String>("synthetic")? {
        let setup: Setup = name.parse().map_err(e2s)?;
        let data: Dataset<f64> = generate(setup, seed).map_err(e2s)?;
        let (xtr, ytr) = data.train();
        let p = dir.join(format!("{setup}_train.csv"));
        write_table(&p, &xtr, &ytr)?;
        outs.push(p);
        if data.n_train < data.x.n() {
            let (xte, yte) = data.test();
            let p = dir.join(format!("{setup}_test.csv"));
            write_table(&p, &xte, &yte)?;
            outs.push(p);
        }
        let p = dir.join(format!("{setup}_windows.txt"));
        write_text(&p, &format_windows(&data.windows))?;
        outs.push(p);
    }
    let m = write_manifest(&dir, "make-synthetic", cfg, &outs, "")?;
    Ok(outs.into_iter().chain([m]).collect())
}

/// Runs `command` and returns the files it wrote.
pub fn run(command: &str, cfg: &Config) -> Res<Vec<PathBuf>> {
    match command {
        "train" => cmd_train(cfg),
        "predict" => cmd_predict(cfg),
        "group-features" => cmd_group(cfg),
        "matvec-bench" => cmd_matvec_bench(cfg),
        "precond-bench" => cmd_precond_bench(cfg),
        "verify-bounds" => cmd_verify_bounds(cfg),
        "make-synthetic" => cmd_make_synthetic(cfg),
        other => Err(format!("unknown command '{other}'")),
    }
}
