//! On-disk formats: the dataset manifest + per-task CSVs, coefficient CSVs,
//! and the ground-truth sidecar. Numbers are written in shortest round-trip
//! decimal form so re-runs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{CoefMatrix, MultiTaskDataset, PopTruth, Task};

/// A failure attributable to user input (malformed files, bad paths).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for InputError {}

type IoResult<T> = std::result::Result<T, InputError>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub n: usize,
    pub p: usize,
    pub row_counts: Vec<usize>,
    pub task_files: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSidecar {
    pub schema_version: u32,
    pub sigma: f64,
    pub moment_bound: f64,
    /// CSV with the true coefficients, p rows x n columns.
    pub true_b_csv: String,
    /// Population second moments; `identity_design` means they are assembled
    /// from the true coefficients with identity regressor covariance.
    pub pop_cov: String,
}

pub const SCHEMA_VERSION: u32 = 1;

fn fmt_row(values: impl Iterator<Item = f64>) -> String {
    let mut line = String::new();
    for (k, v) in values.enumerate() {
        if k > 0 {
            line.push(',');
        }
        let _ = write!(line, "{v}");
    }
    line
}

/// Writes `manifest.json` plus one headerless CSV per task with rows
/// `(y, x_1, ..., x_p)`.
pub fn write_dataset(dataset: &MultiTaskDataset, dir: &Path) -> IoResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| InputError(format!("create {}: {e}", dir.display())))?;
    let mut task_files = Vec::new();
    for (i, task) in dataset.tasks().iter().enumerate() {
        let name = format!("task_{i:03}.csv");
        let mut body = String::new();
        for j in 0..task.rows() {
            let y = task.response[j];
            let row = task.design.row(j).clone_owned();
            body.push_str(&fmt_row(std::iter::once(y).chain(row.iter().copied())));
            body.push('\n');
        }
        fs::write(dir.join(&name), body)
            .map_err(|e| InputError(format!("write {name}: {e}")))?;
        task_files.push(name);
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        n: dataset.n_tasks(),
        p: dataset.n_features(),
        row_counts: dataset.tasks().iter().map(Task::rows).collect(),
        task_files,
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| InputError(format!("encode manifest: {e}")))?;
    fs::write(&path, body + "\n")
        .map_err(|e| InputError(format!("write {}: {e}", path.display())))?;
    Ok(path)
}

fn parse_csv_matrix(path: &Path, expect_cols: usize) -> IoResult<Vec<Vec<f64>>> {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let body = fs::read_to_string(path)
        .map_err(|e| InputError(format!("{name}: {e}")))?;
    let mut rows = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expect_cols {
            return Err(InputError(format!(
                "{name} row {}: expected {expect_cols} columns, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(expect_cols);
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                InputError(format!(
                    "{name} row {} column {}: not a number: {field:?}",
                    lineno + 1,
                    col + 1
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a dataset back from its manifest.
pub fn read_dataset(manifest_path: &Path) -> IoResult<MultiTaskDataset> {
    let body = fs::read_to_string(manifest_path)
        .map_err(|e| InputError(format!("{}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&body)
        .map_err(|e| InputError(format!("{}: {e}", manifest_path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(InputError(format!(
            "{}: unsupported schema version {}",
            manifest_path.display(),
            manifest.schema_version
        )));
    }
    if manifest.task_files.len() != manifest.n || manifest.row_counts.len() != manifest.n {
        return Err(InputError(format!(
            "{}: task file or row count list does not match n = {}",
            manifest_path.display(),
            manifest.n
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut tasks = Vec::with_capacity(manifest.n);
    for (i, file) in manifest.task_files.iter().enumerate() {
        let rows = parse_csv_matrix(&dir.join(file), manifest.p + 1)?;
        if rows.len() != manifest.row_counts[i] {
            return Err(InputError(format!(
                "{file}: expected {} rows, found {}",
                manifest.row_counts[i],
                rows.len()
            )));
        }
        let m = rows.len();
        let response = DVector::from_iterator(m, rows.iter().map(|r| r[0]));
        let design = DMatrix::from_fn(m, manifest.p, |r, c| rows[r][c + 1]);
        tasks.push(
            Task::new(design, response)
                .map_err(|e| InputError(format!("{file}: {e}")))?,
        );
    }
    MultiTaskDataset::new(tasks).map_err(|e| InputError(format!("dataset: {e}")))
}

/// Writes a p x n coefficient matrix as headerless CSV (row per coefficient).
pub fn write_coef_csv(b: &CoefMatrix, path: &Path) -> IoResult<()> {
    let mut body = String::new();
    for l in 0..b.values.nrows() {
        body.push_str(&fmt_row(b.values.row(l).iter().copied()));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

pub fn read_coef_csv(path: &Path, p: usize, n: usize) -> IoResult<CoefMatrix> {
    let rows = parse_csv_matrix(path, n)?;
    if rows.len() != p {
        return Err(InputError(format!(
            "{}: expected {p} rows, found {}",
            path.display(),
            rows.len()
        )));
    }
    CoefMatrix::new(DMatrix::from_fn(p, n, |r, c| rows[r][c]))
        .map_err(|e| InputError(format!("{}: {e}", path.display())))
}

/// Writes the ground-truth sidecar (`truth.json` + `truth_b.csv`).
pub fn write_truth(truth: &PopTruth, dir: &Path) -> IoResult<PathBuf> {
    write_coef_csv(&truth.true_b, &dir.join("truth_b.csv"))?;
    let sidecar = TruthSidecar {
        schema_version: SCHEMA_VERSION,
        sigma: truth.sigma,
        moment_bound: truth.moment_bound,
        true_b_csv: "truth_b.csv".into(),
        pop_cov: "identity_design".into(),
    };
    let path = dir.join("truth.json");
    let body = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| InputError(format!("encode truth: {e}")))?;
    fs::write(&path, body + "\n")
        .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Reads the truth sidecar back, reassembling the population second moments
/// for the identity-design convention.
pub fn read_truth(path: &Path, p: usize, n: usize) -> IoResult<PopTruth> {
    let body = fs::read_to_string(path)
        .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let sidecar: TruthSidecar = serde_json::from_str(&body)
        .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    if sidecar.schema_version != SCHEMA_VERSION {
        return Err(InputError(format!(
            "{}: unsupported schema version {}",
            path.display(),
            sidecar.schema_version
        )));
    }
    if sidecar.pop_cov != "identity_design" {
        return Err(InputError(format!(
            "{}: unknown pop_cov convention {:?}",
            path.display(),
            sidecar.pop_cov
        )));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let true_b = read_coef_csv(&dir.join(&sidecar.true_b_csv), p, n)?;
    let pop_cov = (0..n)
        .map(|i| {
            let beta = true_b.values.column(i).clone_owned();
            let mut cov = DMatrix::zeros(p + 1, p + 1);
            cov[(0, 0)] = beta.norm_squared() + sidecar.sigma * sidecar.sigma;
            for l in 0..p {
                cov[(0, l + 1)] = beta[l];
                cov[(l + 1, 0)] = beta[l];
                cov[(l + 1, l + 1)] = 1.0;
            }
            cov
        })
        .collect();
    PopTruth::new(true_b, sidecar.sigma, pop_cov, sidecar.moment_bound)
        .map_err(|e| InputError(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_decay, SimConfig};

    #[test]
    fn dataset_round_trips_exactly() {
        let config = SimConfig {
            n: 3,
            p: 4,
            m: 5,
            seed: 31,
            ..Default::default()
        };
        let (dataset, truth) = gen_decay(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&dataset, dir.path()).unwrap();
        let back = read_dataset(&manifest).unwrap();
        for (a, b) in dataset.tasks().iter().zip(back.tasks()) {
            assert_eq!(a.design, b.design);
            assert_eq!(a.response, b.response);
        }
        write_truth(&truth, dir.path()).unwrap();
        let truth_back = read_truth(&dir.path().join("truth.json"), 4, 3).unwrap();
        assert_eq!(truth.true_b.values, truth_back.true_b.values);
        assert_eq!(truth.sigma, truth_back.sigma);
    }

    #[test]
    fn malformed_row_is_reported_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let config = SimConfig {
            n: 1,
            p: 2,
            m: 3,
            seed: 1,
            ..Default::default()
        };
        let (dataset, _) = gen_decay(&config).unwrap();
        let manifest = write_dataset(&dataset, dir.path()).unwrap();
        // drop a column from row 2
        let task_path = dir.path().join("task_000.csv");
        let body = fs::read_to_string(&task_path).unwrap();
        let mut lines: Vec<String> = body.lines().map(String::from).collect();
        let trimmed = lines[1].rsplit_once(',').unwrap().0.to_string();
        lines[1] = trimmed;
        fs::write(&task_path, lines.join("\n") + "\n").unwrap();
        let err = read_dataset(&manifest).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("task_000.csv"), "message: {msg}");
        assert!(msg.contains("row 2"), "message: {msg}");
    }

    #[test]
    fn coef_csv_round_trip() {
        let b = CoefMatrix::new(DMatrix::from_row_slice(
            2,
            3,
            &[0.1, -2.25, 1e-17, 3.5, 0.0, -1.0 / 3.0],
        ))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coef.csv");
        write_coef_csv(&b, &path).unwrap();
        let back = read_coef_csv(&path, 2, 3).unwrap();
        assert_eq!(b.values, back.values);
    }
}
