//! Loading, saving, and generation of numeric artifacts.
//!
//! Matrices move between processes in two formats: a headerless CSV dialect
//! (comma separator, `.` decimal, values printed with shortest round-trip
//! precision) and a binary format (`CNID` magic, u16 version, u64 rows/cols,
//! row-major little-endian f64) that round-trips bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

const BINARY_MAGIC: &[u8; 4] = b"CNID";
const BINARY_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "binary" | "bin" => Ok(MatrixFormat::Binary),
            other => Err(Error::Config(format!("unknown matrix format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Voxel,
    Region,
}

/// Denoised signal: rows are regions (or voxels), columns are time points.
#[derive(Debug, Clone)]
pub struct TimeSeriesMatrix {
    pub values: DMatrix<f64>,
    pub tr_seconds: f64,
    pub row_kind: RowKind,
}

impl TimeSeriesMatrix {
    pub fn new(values: DMatrix<f64>, tr_seconds: f64, row_kind: RowKind) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Format(format!(
                "time series needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 3 {
            return Err(Error::Format(format!(
                "time series needs at least 3 columns, got {}",
                values.ncols()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Format("time series contains non-finite entries".into()));
        }
        if !(tr_seconds > 0.0) {
            return Err(Error::Format(format!("tr_seconds must be positive, got {tr_seconds}")));
        }
        Ok(Self {
            values,
            tr_seconds,
            row_kind,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Voxel-to-region membership. Labels are 1-based region ids.
#[derive(Debug, Clone)]
pub struct AtlasLabeling {
    pub labels: Vec<usize>,
    pub region_count: usize,
}

impl AtlasLabeling {
    pub fn new(labels: Vec<usize>, region_count: usize) -> Result<Self> {
        if region_count == 0 {
            return Err(Error::Atlas("region_count must be positive".into()));
        }
        let mut seen = vec![false; region_count];
        for (i, &l) in labels.iter().enumerate() {
            if l < 1 || l > region_count {
                return Err(Error::Atlas(format!(
                    "label {l} at voxel {i} outside [1, {region_count}]"
                )));
            }
            seen[l - 1] = true;
        }
        if let Some(r) = seen.iter().position(|&s| !s) {
            return Err(Error::Atlas(format!("region {} has no voxels", r + 1)));
        }
        Ok(Self {
            labels,
            region_count,
        })
    }
}

// ---------------------------------------------------------------------------
// Matrix file I/O
// ---------------------------------------------------------------------------

pub fn save_matrix(m: &DMatrix<f64>, path: &Path, format: MatrixFormat) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Format("refusing to save an empty matrix".into()));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Format("matrix contains non-finite entries".into()));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MatrixFormat::Csv => write_csv(m, &mut w),
        MatrixFormat::Binary => write_binary(m, &mut w),
    };
    res.map_err(|e| Error::io(path, e))
}

fn write_csv(m: &DMatrix<f64>, w: &mut impl Write) -> std::io::Result<()> {
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            // `{}` on f64 prints the shortest decimal that parses back exactly
            line.push_str(&format!("{}", m[(i, j)]));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn write_binary(m: &DMatrix<f64>, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::Binary => load_binary(path),
    }
}

fn load_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "non-numeric cell {:?} at line {}, column {}",
                    cell,
                    lineno + 1,
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value at line {}, column {}",
                    lineno + 1,
                    col + 1
                )));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Format(format!(
                    "ragged row at line {}: expected {} cells, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty matrix file".into()));
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn load_binary(path: &Path) -> Result<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}")));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2).map_err(|e| Error::io(path, e))?;
    let version = u16::from_le_bytes(b2);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported binary version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
    let nrows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
    let ncols = u64::from_le_bytes(b8) as usize;
    if nrows == 0 || ncols == 0 {
        return Err(Error::Format("empty matrix in binary file".into()));
    }
    let mut values = Vec::with_capacity(nrows * ncols);
    for _ in 0..nrows * ncols {
        r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
        let v = f64::from_le_bytes(b8);
        if !v.is_finite() {
            return Err(Error::Format("non-finite value in binary file".into()));
        }
        values.push(v);
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

pub fn load_time_series(
    path: &Path,
    format: MatrixFormat,
    tr_seconds: f64,
    row_kind: RowKind,
) -> Result<TimeSeriesMatrix> {
    let values = load_matrix(path, format)?;
    TimeSeriesMatrix::new(values, tr_seconds, row_kind)
}

// ---------------------------------------------------------------------------
// Cohorts
// ---------------------------------------------------------------------------

pub const REST_TASK: &str = "rest";

/// One scan: a subject performing one condition in one of two sessions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScanKey {
    pub subject: String,
    pub session: u8,
    pub task: String,
}

/// Two-session study: each subject has a session-1 and a session-2 scan per
/// condition. The truth bijection between sessions is subject identity.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub subjects: Vec<String>,
    pub tasks: Vec<String>,
    pub scans: BTreeMap<ScanKey, TimeSeriesMatrix>,
    /// (subject, task) -> percentage accuracy in [0, 100]
    pub performance: BTreeMap<(String, String), f64>,
}

impl Cohort {
    pub fn validate(&self) -> Result<()> {
        let mut region_count = None;
        let mut tr = None;
        for (key, ts) in &self.scans {
            match region_count {
                None => region_count = Some(ts.nrows()),
                Some(rc) if rc != ts.nrows() => {
                    return Err(Error::Shape(format!(
                        "scan {key:?} has {} rows, cohort has {rc}",
                        ts.nrows()
                    )))
                }
                _ => {}
            }
            match tr {
                None => tr = Some(ts.tr_seconds),
                Some(t) if t != ts.tr_seconds => {
                    return Err(Error::Shape(format!(
                        "scan {key:?} has tr {}, cohort has {t}",
                        ts.tr_seconds
                    )))
                }
                _ => {}
            }
        }
        // truth must be a bijection: each subject present in both sessions of
        // every task it appears in
        for task in &self.tasks {
            for subject in &self.subjects {
                let s1 = self.scans.contains_key(&ScanKey {
                    subject: subject.clone(),
                    session: 1,
                    task: task.clone(),
                });
                let s2 = self.scans.contains_key(&ScanKey {
                    subject: subject.clone(),
                    session: 2,
                    task: task.clone(),
                });
                if s1 != s2 {
                    return Err(Error::Config(format!(
                        "subject {subject} task {task} present in only one session"
                    )));
                }
            }
        }
        for (k, v) in &self.performance {
            if !(0.0..=100.0).contains(v) {
                return Err(Error::Config(format!(
                    "performance for {k:?} out of [0,100]: {v}"
                )));
            }
        }
        Ok(())
    }

    /// Scans of one (task, session), ordered by subject index. This fixed
    /// order makes the session-1/session-2 truth bijection the identity.
    pub fn session_scans(&self, task: &str, session: u8) -> Vec<(&str, &TimeSeriesMatrix)> {
        self.subjects
            .iter()
            .filter_map(|s| {
                self.scans
                    .get(&ScanKey {
                        subject: s.clone(),
                        session,
                        task: task.to_string(),
                    })
                    .map(|ts| (s.as_str(), ts))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Synthetic cohorts
// ---------------------------------------------------------------------------

fn default_latent_factors() -> usize {
    5
}

/// Configuration for the seeded synthetic cohort generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_regions: usize,
    pub n_timepoints: usize,
    #[serde(default)]
    pub n_tasks: usize,
    pub signature_strength: f64,
    #[serde(default)]
    pub task_strength: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Amplitude of a component shared by every scan in the cohort. Lets two
    /// merged cohorts carry distinct covariance priors (case/control analog).
    #[serde(default)]
    pub shared_component_strength: f64,
    #[serde(default = "default_latent_factors")]
    pub latent_factors: usize,
    #[serde(default = "default_tr_seconds")]
    pub tr_seconds: f64,
}

fn default_tr_seconds() -> f64 {
    0.72
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be positive".into()));
        }
        if self.n_regions < 4 {
            return Err(Error::Config("n_regions must be at least 4".into()));
        }
        if self.n_timepoints < 16 {
            return Err(Error::Config("n_timepoints must be at least 16".into()));
        }
        if self.signature_strength < 0.0 || self.task_strength < 0.0 {
            return Err(Error::Config("strengths must be non-negative".into()));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(Error::Config("noise_sigma must be positive".into()));
        }
        if self.latent_factors == 0 {
            return Err(Error::Config("latent_factors must be positive".into()));
        }
        Ok(())
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

// tag words for RNG stream derivation
const TAG_SUBJECT_LOADING: u64 = 1;
const TAG_TASK_LOADING: u64 = 2;
const TAG_SHARED_LOADING: u64 = 3;
const TAG_SESSION_FACTORS: u64 = 4;
const TAG_TASK_FACTORS: u64 = 5;
const TAG_NOISE: u64 = 6;
const TAG_SHARED_FACTORS: u64 = 7;
const TAG_SCANNER_NOISE: u64 = 8;

/// Build a deterministic two-session cohort with planted subject signatures.
///
/// Each scan is `signature_strength * L_subj * F + task_strength * L_task *
/// F_task + shared * L_pop * F_pop + noise_sigma * E` where the loading
/// matrices are fixed per subject/task/cohort and the factor matrices are
/// redrawn per session. Same-subject scans therefore share covariance
/// structure while their raw samples differ.
pub fn generate_synthetic_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let k = cfg.latent_factors;
    let norm = (k as f64).sqrt();

    let subjects: Vec<String> = (0..cfg.n_subjects).map(|i| format!("sub-{i:04}")).collect();
    let mut tasks = vec![REST_TASK.to_string()];
    tasks.extend((1..=cfg.n_tasks).map(|t| format!("task{t}")));

    let subject_loadings: Vec<DMatrix<f64>> = (0..cfg.n_subjects)
        .map(|s| {
            let mut rng = derive_rng(cfg.seed, &[TAG_SUBJECT_LOADING, s as u64]);
            gaussian_matrix(cfg.n_regions, k, &mut rng) / norm
        })
        .collect();
    let task_loadings: Vec<DMatrix<f64>> = (0..=cfg.n_tasks)
        .map(|t| {
            let mut rng = derive_rng(cfg.seed, &[TAG_TASK_LOADING, t as u64]);
            gaussian_matrix(cfg.n_regions, k, &mut rng) / norm
        })
        .collect();
    let shared_loading = {
        let mut rng = derive_rng(cfg.seed, &[TAG_SHARED_LOADING]);
        gaussian_matrix(cfg.n_regions, k, &mut rng) / norm
    };

    let mut scans = BTreeMap::new();
    for (s, subject) in subjects.iter().enumerate() {
        for (t, task) in tasks.iter().enumerate() {
            for session in 1u8..=2 {
                let tags = [s as u64, t as u64, session as u64];
                let mut frng = derive_rng(cfg.seed, &[TAG_SESSION_FACTORS, tags[0], tags[1], tags[2]]);
                let factors = gaussian_matrix(k, cfg.n_timepoints, &mut frng);
                let mut values = &subject_loadings[s] * factors * cfg.signature_strength;

                if t > 0 && cfg.task_strength > 0.0 {
                    let mut trng =
                        derive_rng(cfg.seed, &[TAG_TASK_FACTORS, tags[0], tags[1], tags[2]]);
                    let tf = gaussian_matrix(k, cfg.n_timepoints, &mut trng);
                    // task components ramp in strength across tasks, so some
                    // conditions drown the subject signature more than others
                    let ramp = if cfg.n_tasks > 1 {
                        0.5 + 1.5 * (t - 1) as f64 / (cfg.n_tasks - 1) as f64
                    } else {
                        1.0
                    };
                    values += &task_loadings[t] * tf * (cfg.task_strength * ramp);
                }
                if cfg.shared_component_strength > 0.0 {
                    let mut prng =
                        derive_rng(cfg.seed, &[TAG_SHARED_FACTORS, tags[0], tags[1], tags[2]]);
                    let pf = gaussian_matrix(k, cfg.n_timepoints, &mut prng);
                    values += &shared_loading * pf * cfg.shared_component_strength;
                }
                let mut nrng = derive_rng(cfg.seed, &[TAG_NOISE, tags[0], tags[1], tags[2]]);
                values += gaussian_matrix(cfg.n_regions, cfg.n_timepoints, &mut nrng)
                    * cfg.noise_sigma;

                let ts = TimeSeriesMatrix::new(values, cfg.tr_seconds, RowKind::Region)?;
                scans.insert(
                    ScanKey {
                        subject: subject.clone(),
                        session,
                        task: task.clone(),
                    },
                    ts,
                );
            }
        }
    }

    let cohort = Cohort {
        subjects,
        tasks,
        scans,
        performance: BTreeMap::new(),
    };
    cohort.validate()?;
    Ok(cohort)
}

/// Add per-row Gaussian noise with mean equal to the row mean and variance a
/// fraction of the row variance. Models a second acquisition site.
pub fn inject_scanner_noise(
    ts: &TimeSeriesMatrix,
    variance_fraction: f64,
    seed: u64,
) -> Result<TimeSeriesMatrix> {
    if !(variance_fraction > 0.0 && variance_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "variance_fraction must be in (0,1), got {variance_fraction}"
        )));
    }
    let n = ts.nrows();
    let t = ts.ncols();
    let mut out = ts.values.clone();
    for i in 0..n {
        let row = ts.values.row(i);
        let mean = row.sum() / t as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        if var == 0.0 {
            return Err(Error::Domain(format!("row {i} has zero variance")));
        }
        let dist = Normal::new(mean, (variance_fraction * var).sqrt())
            .map_err(|e| Error::Numerical(e.to_string()))?;
        // per-row stream: rows stay independent of each other and of ordering
        let mut rng = derive_rng(seed, &[TAG_SCANNER_NOISE, i as u64]);
        for j in 0..t {
            out[(i, j)] += dist.sample(&mut rng);
        }
    }
    TimeSeriesMatrix::new(out, ts.tr_seconds, ts.row_kind)
}

// ---------------------------------------------------------------------------
// Cohort manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestScan {
    pub subject: String,
    pub session: u8,
    pub task: String,
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub performance: Option<f64>,
}

/// JSON sidecar describing a cohort on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortManifest {
    pub tr_seconds: f64,
    pub format: MatrixFormat,
    pub subjects: Vec<String>,
    pub tasks: Vec<String>,
    pub scans: Vec<ManifestScan>,
}

/// Write every scan matrix plus a `manifest.json` into `dir`.
pub fn save_cohort(cohort: &Cohort, dir: &Path, format: MatrixFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut scans = Vec::new();
    let mut tr = 0.72;
    for (key, ts) in &cohort.scans {
        tr = ts.tr_seconds;
        let name = format!(
            "{}_ses-{}_{}.{}",
            key.subject,
            key.session,
            key.task,
            format.extension()
        );
        save_matrix(&ts.values, &dir.join(&name), format)?;
        let performance = if key.session == 1 {
            cohort
                .performance
                .get(&(key.subject.clone(), key.task.clone()))
                .copied()
        } else {
            None
        };
        scans.push(ManifestScan {
            subject: key.subject.clone(),
            session: key.session,
            task: key.task.clone(),
            path: name,
            performance,
        });
    }
    let manifest = CohortManifest {
        tr_seconds: tr,
        format,
        subjects: cohort.subjects.clone(),
        tasks: cohort.tasks.clone(),
        scans,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_cohort(manifest_path: &Path) -> Result<Cohort> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CohortManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut scans = BTreeMap::new();
    let mut performance = BTreeMap::new();
    for entry in &manifest.scans {
        let ts = load_time_series(
            &base.join(&entry.path),
            manifest.format,
            manifest.tr_seconds,
            RowKind::Region,
        )?;
        scans.insert(
            ScanKey {
                subject: entry.subject.clone(),
                session: entry.session,
                task: entry.task.clone(),
            },
            ts,
        );
        if let Some(p) = entry.performance {
            performance.insert((entry.subject.clone(), entry.task.clone()), p);
        }
    }
    let cohort = Cohort {
        subjects: manifest.subjects,
        tasks: manifest.tasks,
        scans,
        performance,
    };
    cohort.validate()?;
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn csv_round_trip_small() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_fn(4, 10, |i, j| (i * 10 + j) as f64 * 0.25 - 3.0);
        save_matrix(&m, &path, MatrixFormat::Csv).unwrap();
        let ts = load_time_series(&path, MatrixFormat::Csv, 0.72, RowKind::Region).unwrap();
        assert_eq!(ts.nrows(), 4);
        assert_eq!(ts.ncols(), 10);
        assert_eq!(ts.values, m);
    }

    #[test]
    fn csv_rejects_nan() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1.0,2.0,3.0\n4.0,nan,6.0\n").unwrap();
        let err = load_time_series(&path, MatrixFormat::Csv, 0.72, RowKind::Region).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn csv_rejects_ragged() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        fs::write(&path, "1,2,3\n4,5\n").unwrap();
        assert!(matches!(
            load_matrix(&path, MatrixFormat::Csv),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn too_few_columns_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("narrow.csv");
        fs::write(&path, "1,2\n3,4\n").unwrap();
        let err = load_time_series(&path, MatrixFormat::Csv, 0.72, RowKind::Region).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    // round-trip oracle: a seeded random matrix must reload bitwise equal
    #[test]
    fn binary_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let mut rng = derive_rng(42, &[99]);
        let m = gaussian_matrix(360, 100, &mut rng);
        save_matrix(&m, &path, MatrixFormat::Binary).unwrap();
        let back = load_matrix(&path, MatrixFormat::Binary).unwrap();
        assert!(m
            .iter()
            .zip(back.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn csv_round_trip_exact_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut rng = derive_rng(7, &[1]);
        let m = gaussian_matrix(50, 20, &mut rng);
        save_matrix(&m, &path, MatrixFormat::Csv).unwrap();
        let back = load_matrix(&path, MatrixFormat::Csv).unwrap();
        assert!(m
            .iter()
            .zip(back.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn save_empty_matrix_rejected() {
        let dir = tempdir().unwrap();
        let m = DMatrix::<f64>::zeros(0, 0);
        let err = save_matrix(&m, &dir.path().join("e.bin"), MatrixFormat::Binary).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn identity_matrix_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("i.bin");
        let m = DMatrix::<f64>::identity(2, 2);
        save_matrix(&m, &path, MatrixFormat::Binary).unwrap();
        assert_eq!(load_matrix(&path, MatrixFormat::Binary).unwrap(), m);
    }

    #[test]
    fn synthetic_cohort_deterministic() {
        let cfg = SynthConfig {
            n_subjects: 3,
            n_regions: 8,
            n_timepoints: 32,
            n_tasks: 1,
            signature_strength: 1.0,
            task_strength: 0.5,
            noise_sigma: 1.0,
            seed: 11,
            shared_component_strength: 0.0,
            latent_factors: 5,
            tr_seconds: 0.72,
        };
        let a = generate_synthetic_cohort(&cfg).unwrap();
        let b = generate_synthetic_cohort(&cfg).unwrap();
        for (key, ts) in &a.scans {
            let other = &b.scans[key];
            assert!(ts
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn synth_config_invariants_enforced() {
        let cfg = SynthConfig {
            n_subjects: 3,
            n_regions: 3, // below minimum
            n_timepoints: 32,
            n_tasks: 0,
            signature_strength: 1.0,
            task_strength: 0.0,
            noise_sigma: 1.0,
            seed: 0,
            shared_component_strength: 0.0,
            latent_factors: 5,
            tr_seconds: 0.72,
        };
        assert!(matches!(
            generate_synthetic_cohort(&cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scanner_noise_rejects_constant_row() {
        let mut values = DMatrix::from_element(3, 20, 1.0);
        for j in 0..20 {
            values[(1, j)] = j as f64;
            values[(2, j)] = (j as f64).sin();
        }
        let ts = TimeSeriesMatrix::new(values, 0.72, RowKind::Region).unwrap();
        assert!(matches!(
            inject_scanner_noise(&ts, 0.1, 5),
            Err(Error::Domain(_))
        ));
    }

    // statistical oracle: sample variance of the injected noise per row should
    // track variance_fraction * row variance within 3 standard errors
    #[test]
    fn scanner_noise_variance_matches() {
        let t = 10_000;
        let mut rng = derive_rng(3, &[0]);
        let values = gaussian_matrix(4, t, &mut rng) * 2.5;
        let ts = TimeSeriesMatrix::new(values, 0.72, RowKind::Region).unwrap();
        let vf = 0.2;
        let noisy = inject_scanner_noise(&ts, vf, 77).unwrap();
        for i in 0..4 {
            let row = ts.values.row(i);
            let mean = row.sum() / t as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            let target = vf * var;
            let diff: Vec<f64> = (0..t).map(|j| noisy.values[(i, j)] - ts.values[(i, j)]).collect();
            let dmean = diff.iter().sum::<f64>() / t as f64;
            let dvar = diff.iter().map(|v| (v - dmean).powi(2)).sum::<f64>() / t as f64;
            // variance of the sample variance of N(0, s^2) is 2 s^4 / T
            let se = (2.0 * target * target / t as f64).sqrt();
            assert!(
                (dvar - target).abs() < 3.0 * se,
                "row {i}: dvar {dvar}, target {target}, se {se}"
            );
            assert!((dmean - mean).abs() < 3.0 * (target / t as f64).sqrt() + 0.05 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn scanner_noise_rows_independent() {
        let t = 20_000;
        let mut rng = derive_rng(9, &[0]);
        let values = gaussian_matrix(3, t, &mut rng);
        let ts = TimeSeriesMatrix::new(values, 0.72, RowKind::Region).unwrap();
        let noisy = inject_scanner_noise(&ts, 0.5, 13).unwrap();
        let noise = &noisy.values - &ts.values;
        for a in 0..3 {
            for b in (a + 1)..3 {
                let ra = noise.row(a);
                let rb = noise.row(b);
                let ma = ra.sum() / t as f64;
                let mb = rb.sum() / t as f64;
                let mut cov = 0.0;
                let mut va = 0.0;
                let mut vb = 0.0;
                for j in 0..t {
                    cov += (ra[j] - ma) * (rb[j] - mb);
                    va += (ra[j] - ma).powi(2);
                    vb += (rb[j] - mb).powi(2);
                }
                let r = cov / (va.sqrt() * vb.sqrt());
                assert!(r.abs() < 3.0 / (t as f64).sqrt() * 1.5, "rows {a},{b}: r = {r}");
            }
        }
    }

    #[test]
    fn cohort_manifest_round_trip() {
        let cfg = SynthConfig {
            n_subjects: 2,
            n_regions: 6,
            n_timepoints: 24,
            n_tasks: 1,
            signature_strength: 1.0,
            task_strength: 0.3,
            noise_sigma: 0.5,
            seed: 4,
            shared_component_strength: 0.0,
            latent_factors: 3,
            tr_seconds: 0.72,
        };
        let mut cohort = generate_synthetic_cohort(&cfg).unwrap();
        cohort
            .performance
            .insert(("sub-0000".into(), "task1".into()), 87.5);
        let dir = tempdir().unwrap();
        let manifest = save_cohort(&cohort, dir.path(), MatrixFormat::Binary).unwrap();
        let back = load_cohort(&manifest).unwrap();
        assert_eq!(back.subjects, cohort.subjects);
        assert_eq!(back.tasks, cohort.tasks);
        assert_eq!(back.performance[&("sub-0000".into(), "task1".into())], 87.5);
        for (key, ts) in &cohort.scans {
            assert_eq!(back.scans[key].values, ts.values);
        }
    }
}
