//! CSV, windows and params files.

use nfftgp::data::{FeatureWindows, PointSet};
use nfftgp::kernels::HyperParams;
use std::path::Path;

/// Inputs and labels read from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub features: Vec<String>,
    pub label: String,
    pub x: PointSet<f64>,
    pub y: Vec<f64>,
}

/// Reads a headed numeric CSV; `label_column` defaults to the last column.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Table, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let headers: Vec<String> = rdr.headers().map_err(|e| format!("{}: {e}", path.display()))?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 2 {
        return Err(format!("{}: need at least one feature and one label column", path.display()));
    }
    let label_idx = match label_column {
        None => headers.len() - 1,
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| format!("{}: no column named '{name}'", path.display()))?,
    };
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| format!("{} row {row}: {e}", path.display()))?;
        if rec.len() != headers.len() {
            return Err(format!("{} row {row}: expected {} cells, found {}", path.display(), headers.len(), rec.len()));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| format!("{} row {row} column {} ('{}'): non-numeric cell '{cell}'", path.display(), c + 1, headers[c]))?;
            if !v.is_finite() {
                return Err(format!("{} row {row} column {} ('{}'): non-finite value", path.display(), c + 1, headers[c]));
            }
            if c == label_idx {
                y.push(v);
            } else {
                data.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(format!("{}: no data rows", path.display()));
    }
    let p = headers.len() - 1;
    let x = PointSet::new(n, p, data).map_err(|e| e.to_string())?;
    let label = headers[label_idx].clone();
    let features = headers.into_iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h).collect();
    Ok(Table { features, label, x, y })
}

/// Writes a numeric CSV with shortest round-trip float formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    w.write_record(header).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

/// Inputs and labels as a CSV with columns `x1..xp,y`.
pub fn write_table(path: &Path, x: &PointSet<f64>, y: &[f64]) -> Result<(), String> {
    let names: Vec<String> = (1..=x.p()).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    write_csv(path, &header, (0..x.n()).map(|i| {
        let mut r = x.row(i).to_vec();
        r.push(y[i]);
        r
    }))
}

pub fn parse_windows(text: &str) -> Result<FeatureWindows, String> {
    let mut ws = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let w: Result<Vec<usize>, _> = line.split(',').map(|s| s.trim().parse::<usize>()).collect();
        ws.push(w.map_err(|e| format!("windows line {}: {e}", no + 1))?);
    }
    FeatureWindows::from_one_based(&ws).map_err(|e| e.to_string())
}

pub fn load_windows(path: &Path) -> Result<FeatureWindows, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read windows {}: {e}", path.display()))?;
    parse_windows(&text)
}

pub fn format_windows(w: &FeatureWindows) -> String {
    w.to_one_based()
        .iter()
        .map(|win| win.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

/// `key = value` text of fitted hyperparameters.
pub fn format_params(p: &HyperParams<f64>, family: &str) -> String {
    format!(
        "family = {family}\nsigma_f = {}\nell = {}\nsigma_eps = {}\nraw_sigma_f = {}\nraw_ell = {}\nraw_sigma_eps = {}\n",
        p.sigma_f, p.ell, p.sigma_eps, p.raw[0], p.raw[1], p.raw[2]
    )
}

/// Reads a params file; the raw values are authoritative.
pub fn parse_params(text: &str) -> Result<(HyperParams<f64>, Option<String>), String> {
    let mut raw = [None; 3];
    let mut family = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("params: malformed line '{line}'"))?;
        let (k, v) = (k.trim(), v.trim());
        let slot = match k {
            "raw_sigma_f" => 0,
            "raw_ell" => 1,
            "raw_sigma_eps" => 2,
            "family" => {
                family = Some(v.to_string());
                continue;
            }
            "sigma_f" | "ell" | "sigma_eps" => continue,
            other => return Err(format!("params: unknown key '{other}'")),
        };
        raw[slot] = Some(v.parse::<f64>().map_err(|e| format!("params: {k}: {e}"))?);
    }
    match raw {
        [Some(a), Some(b), Some(c)] => Ok((HyperParams::from_raw([a, b, c]), family)),
        _ => Err("params: raw_sigma_f, raw_ell and raw_sigma_eps are required".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "a,b,y\n1,2,3\n4,5,6\n").unwrap();
        let t = load_csv(&p, None).unwrap();
        assert_eq!((t.x.n(), t.x.p()), (2, 2));
        assert_eq!(t.y, vec![3.0, 6.0]);
        let t = load_csv(&p, Some("a")).unwrap();
        assert_eq!(t.y, vec![1.0, 4.0]);
        assert_eq!(t.x.row(1), &[5.0, 6.0]);
        assert_eq!(t.features, vec!["b", "y"]);
    }

    #[test]
    fn bad_cells_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "a,b,y\n1,2,3\n4,x,6\n").unwrap();
        let e = load_csv(&p, None).unwrap_err();
        assert!(e.contains("row 3") && e.contains("column 2"), "{e}");
        std::fs::write(&p, "a,b,y\n1,2,3\n4,inf,6\n").unwrap();
        assert!(load_csv(&p, None).unwrap_err().contains("non-finite"));
        std::fs::write(&p, "a,b,y\n1,2,3\n4,6\n").unwrap();
        assert!(load_csv(&p, None).unwrap_err().contains("expected 3 cells"));
        assert!(load_csv(&dir.path().join("missing.csv"), None).is_err());
    }

    #[test]
    fn round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let vals = [0.1 + 0.2, std::f64::consts::PI, -1.0e-300, 123_456_789.123_456_79, 1.0 / 3.0];
        let x = PointSet::new(5, 1, vals.to_vec()).unwrap();
        let y: Vec<f64> = vals.iter().map(|v| v * 7.0).collect();
        write_table(&p, &x, &y).unwrap();
        let t = load_csv(&p, None).unwrap();
        assert_eq!(t.x, x);
        assert_eq!(t.y, y);
    }

    #[test]
    fn windows_and_params_files() {
        let w = parse_windows("6,4,5\n# comment\n3, 2, 1\n").unwrap();
        assert_eq!(w.get(0), &[5, 3, 4]);
        assert_eq!(parse_windows(&format_windows(&w)).unwrap(), w);
        assert!(parse_windows("0,1\n").is_err());
        assert!(parse_windows("1,2,3,4\n").is_err());
        let p = HyperParams::from_raw([0.1, -0.3, 2.0]);
        let (q, fam) = parse_params(&format_params(&p, "gaussian")).unwrap();
        assert_eq!(q, p);
        assert_eq!(fam.as_deref(), Some("gaussian"));
        assert!(parse_params("raw_ell = 1").is_err());
    }
}
