//! On-disk formats.
//!
//! * Kernel manifest: JSON `{"version": 1, "factors": [{"rows": n, "path": "..."}]}`
//!   with factor paths relative to the manifest's directory.
//! * Factor file: one matrix row per line, comma-separated, each value in
//!   the shortest decimal form that parses back to the same `f64`.
//! * Subsets file: one subset per line, whitespace-separated zero-based
//!   indices. Blank lines and lines starting with `#` are ignored.
//! * Plan file: JSON `{"z": z, "groups": [[subset indices]]}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use krondpp::linalg::{Matrix, SpdMatrix};
use krondpp::partition::PartitionPlan;
use krondpp::{KronKernel, Subset, TrainingSet};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorEntry {
    pub rows: usize,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelManifest {
    pub version: u32,
    pub factors: Vec<FactorEntry>,
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, rows: usize, path: &Path) -> CliResult<Matrix> {
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.len() != rows {
        return Err(parse_err(lines.len(), format!("expected {rows} rows, found {}", lines.len())));
    }
    let mut m = Matrix::zeros(rows, rows);
    for (i, (line_no, line)) in lines.iter().enumerate() {
        let values: Vec<&str> = line.split(',').map(str::trim).collect();
        if values.len() != rows {
            return Err(parse_err(
                *line_no,
                format!("expected {rows} values, found {}", values.len()),
            ));
        }
        for (j, v) in values.iter().enumerate() {
            m[(i, j)] = v
                .parse::<f64>()
                .map_err(|e| parse_err(*line_no, format!("bad number {v:?}: {e}")))?;
        }
    }
    Ok(m)
}

fn factor_file_name(manifest: &Path, k: usize) -> String {
    let stem = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "kernel".into());
    format!("{stem}.factor{k}.csv")
}

/// Writes the manifest at `path` and one factor file per factor beside it.
pub fn save_kernel(path: &Path, factors: &[&Matrix]) -> CliResult<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    let mut entries = Vec::with_capacity(factors.len());
    for (k, f) in factors.iter().enumerate() {
        let name = factor_file_name(path, k);
        write_text(&dir.join(&name), &format_matrix(f))?;
        entries.push(FactorEntry {
            rows: f.nrows(),
            path: name,
        });
    }
    let manifest = KernelManifest {
        version: MANIFEST_VERSION,
        factors: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    json.push('\n');
    write_text(path, &json)
}

pub fn save_kron_kernel(path: &Path, k: &KronKernel) -> CliResult<()> {
    let factors: Vec<&Matrix> = k.factors().iter().map(|f| f.as_matrix()).collect();
    save_kernel(path, &factors)
}

pub fn load_kernel(path: &Path) -> CliResult<KronKernel> {
    let text = read_text(path)?;
    let manifest: KernelManifest = serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CliError::Usage(format!(
            "{}: unsupported manifest version {}",
            path.display(),
            manifest.version
        )));
    }
    if manifest.factors.is_empty() {
        return Err(CliError::Usage(format!("{}: manifest lists no factors", path.display())));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    let mut factors = Vec::with_capacity(manifest.factors.len());
    for entry in &manifest.factors {
        let fpath: PathBuf = dir.join(&entry.path);
        let m = parse_matrix(&read_text(&fpath)?, entry.rows, &fpath)?;
        factors.push(SpdMatrix::new(m)?);
    }
    Ok(KronKernel::new(factors)?)
}

/// Parses a subsets file over `n` items; errors carry 1-based line numbers.
pub fn parse_subsets(text: &str, n: usize, path: &Path) -> CliResult<TrainingSet> {
    let mut subsets = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let items = line
            .split_whitespace()
            .map(|tok| tok.parse::<usize>().map_err(|e| parse_err(format!("bad index {tok:?}: {e}"))))
            .collect::<CliResult<Vec<usize>>>()?;
        let subset = Subset::new(items, n).map_err(|e| parse_err(e.to_string()))?;
        subsets.push(subset);
    }
    Ok(TrainingSet::new(n, subsets)?)
}

pub fn load_subsets(path: &Path, n: usize) -> CliResult<TrainingSet> {
    parse_subsets(&read_text(path)?, n, path)
}

/// Largest index in a subsets file plus one, for commands without a
/// ground-set size.
pub fn infer_ground_size(path: &Path) -> CliResult<usize> {
    let text = read_text(path)?;
    let mut n = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split_whitespace() {
            let v = tok.parse::<usize>().map_err(|e| CliError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad index {tok:?}: {e}"),
            })?;
            n = n.max(v + 1);
        }
    }
    Ok(n)
}

pub fn format_subset(y: &Subset) -> String {
    let parts: Vec<String> = y.indices().iter().map(|i| i.to_string()).collect();
    parts.join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub z: usize,
    pub groups: Vec<Vec<usize>>,
}

pub fn save_plan(path: &Path, plan: &PartitionPlan) -> CliResult<()> {
    let file = PlanFile {
        z: plan.z,
        groups: plan.groups.clone(),
    };
    let mut json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    json.push('\n');
    write_text(path, &json)
}

/// Reads a plan and rebuilds its unions from `t`, then validates it.
pub fn load_plan(path: &Path, t: &TrainingSet) -> CliResult<PartitionPlan> {
    let file: PlanFile = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut unions = Vec::with_capacity(file.groups.len());
    for g in &file.groups {
        let mut u: Vec<usize> = Vec::new();
        for &i in g {
            let y = t.subsets().get(i).ok_or_else(|| {
                CliError::Usage(format!("{}: subset index {i} out of range", path.display()))
            })?;
            u.extend_from_slice(y.indices());
        }
        u.sort_unstable();
        u.dedup();
        unions.push(u);
    }
    let plan = PartitionPlan {
        z: file.z,
        groups: file.groups,
        unions,
    };
    plan.validate(t)?;
    Ok(plan)
}
