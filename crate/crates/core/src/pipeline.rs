//! End-to-end experiment orchestration on synthetic or file-backed cohorts:
//! rest-vs-rest identification, cross-task identifiability grids, task
//! clustering with t-SNE, performance regression, case/control matching, and
//! multi-site noise robustness. Every run writes a manifest recording the
//! spec, seeds, and SHA-256 of each artifact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectome::{build_group_matrix, correlation_matrix, GroupMatrix};
use crate::error::{Error, Result};
use crate::ingest::{
    generate_synthetic_cohort, inject_scanner_noise, load_cohort, Cohort, SynthConfig,
};
use crate::matcher::{cross_similarity, identifiability_matrix, identification_accuracy, match_subjects};
use crate::regress::{plant_linear_performance, run_performance_experiment, ModelConfig};
use crate::sketch::{principal_features, restrict_features};
use crate::tsne::{nn_classify, tsne_embed, Embedding, TsneParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RestVsRest,
    CrossTaskGrid,
    TaskClustering,
    Performance,
    CaseControl,
    Multisite,
}

fn default_top_features() -> usize {
    100
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_repeats() -> usize {
    100
}
fn default_labeled_fraction() -> f64 {
    0.5
}
fn default_noise_fractions() -> Vec<f64> {
    vec![0.10, 0.20, 0.30]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Synthetic cohort source; ignored when `manifest` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    /// Second sub-population for case/control runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_cases: Option<SynthConfig>,
    /// Path to a cohort manifest of preprocessed matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_top_features")]
    pub top_features: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_noise_fractions")]
    pub noise_fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsne: Option<TsneParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regress: Option<ModelConfig>,
    /// Task whose performance metric is regressed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_labeled_fraction")]
    pub labeled_fraction: f64,
    /// Noise realizations averaged per fraction in multisite runs.
    #[serde(default = "default_noise_repeats")]
    pub noise_repeats: usize,
}

fn default_noise_repeats() -> usize {
    1
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.synth.is_none() && self.manifest.is_none() {
            return Err(Error::Config("need either a synth config or a manifest".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if self.top_features == 0 {
            return Err(Error::Config("top_features must be positive".into()));
        }
        match self.kind {
            ExperimentKind::Multisite => {
                if self.noise_fractions.is_empty() {
                    return Err(Error::Config("multisite needs noise fractions".into()));
                }
                if self.noise_repeats == 0 {
                    return Err(Error::Config("noise_repeats must be positive".into()));
                }
                for &f in &self.noise_fractions {
                    if !(f > 0.0 && f < 1.0) {
                        return Err(Error::Config(format!("noise fraction {f} outside (0,1)")));
                    }
                }
            }
            ExperimentKind::Performance => {
                if !(self.repeats > 0) {
                    return Err(Error::Config("repeats must be positive".into()));
                }
            }
            ExperimentKind::TaskClustering => {
                if !(self.labeled_fraction > 0.0 && self.labeled_fraction < 1.0) {
                    return Err(Error::Config("labeled_fraction outside (0,1)".into()));
                }
            }
            ExperimentKind::CaseControl => {
                if self.manifest.is_none() && self.synth_cases.is_none() {
                    return Err(Error::Config("case/control needs synth_cases".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Outcome of one experiment: metric values plus the files written.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub artifacts: Vec<PathBuf>,
}

fn cohort_for_seed(spec: &ExperimentSpec, seed: u64) -> Result<Cohort> {
    if let Some(path) = &spec.manifest {
        return load_cohort(path);
    }
    let mut cfg = spec.synth.clone().unwrap();
    cfg.seed = seed;
    generate_synthetic_cohort(&cfg)
}

fn task_groups(cohort: &Cohort, task: &str) -> Result<(GroupMatrix, GroupMatrix)> {
    let build = |session: u8| -> Result<GroupMatrix> {
        let scans = cohort.session_scans(task, session);
        if scans.is_empty() {
            return Err(Error::Config(format!("no session-{session} scans for {task:?}")));
        }
        let mut conns = Vec::with_capacity(scans.len());
        let mut ids = Vec::with_capacity(scans.len());
        for (subject, ts) in scans {
            conns.push(correlation_matrix(ts)?);
            ids.push(subject.to_string());
        }
        build_group_matrix(&conns, &ids)
    };
    Ok((build(1)?, build(2)?))
}

fn write_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", m[(i, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Min-max normalized grayscale raster in binary PGM (P5): header
/// `P5\n<cols> <rows>\n255\n` followed by one byte per cell, row-major.
/// A constant matrix maps to mid-gray.
pub fn render_heatmap(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 || !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Format("heatmap input must be non-empty and finite".into()));
    }
    let max = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    let mut bytes = Vec::with_capacity(64 + m.len());
    bytes.extend_from_slice(format!("P5\n{} {}\n255\n", m.ncols(), m.nrows()).as_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let norm = if range > 0.0 {
                (m[(i, j)] - min) / range
            } else {
                0.5
            };
            bytes.push((norm * 255.0).round() as u8);
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Embedding as CSV rows `id,x,y,label`.
pub fn save_embedding_csv(
    emb: &Embedding,
    ids: &[String],
    labels: &[String],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("id,x,y,label\n");
    for i in 0..emb.y.nrows() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            ids[i],
            emb.y[(i, 0)],
            emb.y[(i, 1)],
            labels[i]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Scatter plot of a 2-D embedding as standalone SVG, one color per label.
pub fn save_embedding_svg(emb: &Embedding, labels: &[String], path: &Path) -> Result<()> {
    let n = emb.y.nrows();
    let (w, h) = (640.0, 640.0);
    let pad = 40.0;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for i in 0..n {
        xmin = xmin.min(emb.y[(i, 0)]);
        xmax = xmax.max(emb.y[(i, 0)]);
        ymin = ymin.min(emb.y[(i, 1)]);
        ymax = ymax.max(emb.y[(i, 1)]);
    }
    let xr = (xmax - xmin).max(1e-12);
    let yr = (ymax - ymin).max(1e-12);
    let mut unique: Vec<&String> = Vec::new();
    for l in labels {
        if !unique.contains(&l) {
            unique.push(l);
        }
    }
    let palette = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
        "#bcbd22", "#17becf",
    ];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for i in 0..n {
        let px = pad + (emb.y[(i, 0)] - xmin) / xr * (w - 2.0 * pad);
        let py = pad + (1.0 - (emb.y[(i, 1)] - ymin) / yr) * (h - 2.0 * pad);
        let ci = unique.iter().position(|&l| l == &labels[i]).unwrap();
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{}\"/>\n",
            palette[ci % palette.len()]
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    kind: ExperimentKind,
    spec: &'a ExperimentSpec,
    artifacts: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

fn finalize(
    spec: &ExperimentSpec,
    out_dir: &Path,
    metrics: BTreeMap<String, serde_json::Value>,
    mut artifacts: Vec<PathBuf>,
) -> Result<RunReport> {
    let report_path = out_dir.join("report.json");
    let report_json = serde_json::to_string_pretty(&metrics)
        .map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&report_path, report_json).map_err(|e| Error::io(&report_path, e))?;
    artifacts.push(report_path);

    let entries = artifacts
        .iter()
        .map(|p| {
            Ok(ManifestEntry {
                path: p
                    .strip_prefix(out_dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        kind: spec.kind,
        spec,
        artifacts: entries,
    };
    let mpath = out_dir.join("run_manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    Ok(RunReport {
        kind: spec.kind,
        metrics,
        artifacts,
    })
}

fn jnum(v: f64) -> serde_json::Value {
    serde_json::json!(v)
}

/// Run one experiment, writing reports, matrices, images, and the run
/// manifest into `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match spec.kind {
        ExperimentKind::RestVsRest => run_rest_vs_rest(spec, out_dir),
        ExperimentKind::CrossTaskGrid => run_cross_task_grid(spec, out_dir),
        ExperimentKind::TaskClustering => run_task_clustering(spec, out_dir),
        ExperimentKind::Performance => run_performance(spec, out_dir),
        ExperimentKind::CaseControl => run_case_control(spec, out_dir),
        ExperimentKind::Multisite => run_multisite(spec, out_dir),
    }
}

fn run_rest_vs_rest(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut accuracies = Vec::new();
    for (i, &seed) in spec.seeds.iter().enumerate() {
        let cohort = cohort_for_seed(spec, seed)?;
        let (g1, g2) = task_groups(&cohort, "rest")?;
        let truth: Vec<usize> = (0..g1.a.ncols()).collect();
        let t = spec.top_features.min(g1.a.nrows());
        let sel = principal_features(&g1.a, t)?;
        let r1 = restrict_features(&g1, &sel)?;
        let r2 = restrict_features(&g2, &sel)?;
        let sim = cross_similarity(&r1, &r2)?;
        let result = match_subjects(&sim, Some(&truth))?;
        accuracies.push(result.accuracy.unwrap());
        if i == 0 {
            let csv = out_dir.join("similarity.csv");
            write_matrix_csv(&sim.sim, &csv)?;
            artifacts.push(csv);
            let pgm = out_dir.join("similarity.pgm");
            render_heatmap(&sim.sim, &pgm)?;
            artifacts.push(pgm);
        }
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    metrics.insert("accuracy_per_seed".into(), serde_json::json!(accuracies));
    metrics.insert("accuracy_mean".into(), jnum(mean));
    finalize(spec, out_dir, metrics, artifacts)
}

fn run_cross_task_grid(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut mean_grid: Option<DMatrix<f64>> = None;
    let mut tasks = Vec::new();
    for (i, &seed) in spec.seeds.iter().enumerate() {
        let cohort = cohort_for_seed(spec, seed)?;
        tasks = cohort.tasks.clone();
        let mut refs = Vec::new();
        let mut tgts = Vec::new();
        for task in &cohort.tasks {
            let (g1, g2) = task_groups(&cohort, task)?;
            refs.push((task.clone(), g1));
            tgts.push((task.clone(), g2));
        }
        let truth: Vec<usize> = (0..refs[0].1.a.ncols()).collect();
        let grid = identifiability_matrix(&refs, &tgts, spec.top_features, &truth)?;
        match &mut mean_grid {
            Some(acc) => *acc += &grid,
            None => mean_grid = Some(grid.clone()),
        }
        if i == 0 {
            let csv = out_dir.join("identifiability.csv");
            write_matrix_csv(&grid, &csv)?;
            artifacts.push(csv);
            let pgm = out_dir.join("identifiability.pgm");
            render_heatmap(&grid, &pgm)?;
            artifacts.push(pgm);
        }
    }
    let mut mean = mean_grid.unwrap();
    mean /= spec.seeds.len() as f64;
    let csv = out_dir.join("identifiability_mean.csv");
    write_matrix_csv(&mean, &csv)?;
    artifacts.push(csv);
    let diag: f64 = (0..mean.nrows()).map(|i| mean[(i, i)]).sum::<f64>() / mean.nrows() as f64;
    let mut off = 0.0;
    let n = mean.nrows();
    if n > 1 {
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    off += mean[(a, b)];
                }
            }
        }
        off /= (n * (n - 1)) as f64;
    }
    metrics.insert("tasks".into(), serde_json::json!(tasks));
    metrics.insert("diagonal_mean_accuracy".into(), jnum(diag));
    metrics.insert("offdiagonal_mean_accuracy".into(), jnum(off));
    finalize(spec, out_dir, metrics, artifacts)
}

fn run_task_clustering(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut per_seed_acc = Vec::new();
    for (si, &seed) in spec.seeds.iter().enumerate() {
        let cohort = cohort_for_seed(spec, seed)?;
        // stack session-1 scans of every condition: rows = scans
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut ids: Vec<String> = Vec::new();
        for task in &cohort.tasks {
            for (subject, ts) in cohort.session_scans(task, 1) {
                let conn = correlation_matrix(ts)?;
                rows.push(crate::connectome::vectorize_upper(&conn).values);
                labels.push(task.clone());
                ids.push(format!("{subject}:{task}"));
            }
        }
        let n = rows.len();
        let d = rows[0].len();
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);

        let mut params = spec.tsne.clone().unwrap_or_default();
        params.seed = seed;
        let emb = tsne_embed(&x, &params)?;

        // deterministic 50/50 split within each condition
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        let mut counter: BTreeMap<&String, usize> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            let c = counter.entry(l).or_insert(0);
            let stride = (1.0 / spec.labeled_fraction).round() as usize;
            if *c % stride.max(1) == 0 {
                labeled.push((i, l.clone()));
            } else {
                unlabeled.push(i);
            }
            *c += 1;
        }
        let predicted = nn_classify(&emb.y, &labeled, &unlabeled)?;
        let correct = predicted
            .iter()
            .zip(&unlabeled)
            .filter(|(p, &i)| **p == labels[i])
            .count();
        per_seed_acc.push(correct as f64 / unlabeled.len() as f64);

        if si == 0 {
            let csv = out_dir.join("embedding.csv");
            save_embedding_csv(&emb, &ids, &labels, &csv)?;
            artifacts.push(csv);
            let svg = out_dir.join("embedding.svg");
            save_embedding_svg(&emb, &labels, &svg)?;
            artifacts.push(svg);
        }
    }
    let mean = per_seed_acc.iter().sum::<f64>() / per_seed_acc.len() as f64;
    metrics.insert("accuracy_per_seed".into(), serde_json::json!(per_seed_acc));
    metrics.insert("accuracy_mean".into(), jnum(mean));
    finalize(spec, out_dir, metrics, artifacts)
}

fn run_performance(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    let seed = spec.seeds[0];
    let mut cohort = cohort_for_seed(spec, seed)?;
    let task = spec
        .task
        .clone()
        .or_else(|| cohort.tasks.iter().find(|t| *t != "rest").cloned())
        .ok_or_else(|| Error::Config("no task available for regression".into()))?;
    if spec.manifest.is_none() {
        // synthetic cohorts get a planted linear target
        plant_linear_performance(&mut cohort, &task, 5, 0.02, seed)?;
    }
    let cfg = spec.regress.clone().unwrap_or_default();
    let report =
        run_performance_experiment(&cohort, &task, spec.top_features, spec.repeats, seed, &cfg)?;
    let csv_path = out_dir.join("performance.csv");
    let csv = format!(
        "{}\n{}\n",
        crate::regress::ExperimentReport::csv_header(),
        report.csv_row()
    );
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    artifacts.push(csv_path);
    metrics.insert("task".into(), serde_json::json!(report.task));
    metrics.insert("train_nrmse_mean".into(), jnum(report.train_nrmse_mean));
    metrics.insert("train_nrmse_std".into(), jnum(report.train_nrmse_std));
    metrics.insert("test_nrmse_mean".into(), jnum(report.test_nrmse_mean));
    metrics.insert("test_nrmse_std".into(), jnum(report.test_nrmse_std));
    finalize(spec, out_dir, metrics, artifacts)
}

fn run_case_control(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut accs_mixed = Vec::new();
    let mut accs_controls = Vec::new();
    let mut accs_cases = Vec::new();
    for (i, &seed) in spec.seeds.iter().enumerate() {
        let controls = cohort_for_seed(spec, seed)?;
        let mut case_cfg = spec
            .synth_cases
            .clone()
            .ok_or_else(|| Error::Config("case/control needs synth_cases".into()))?;
        case_cfg.seed = seed ^ 0x9e3779b97f4a7c15;
        let cases = generate_synthetic_cohort(&case_cfg)?;

        let (c1, c2) = task_groups(&controls, "rest")?;
        let (k1, k2) = task_groups(&cases, "rest")?;
        let truth_c: Vec<usize> = (0..c1.a.ncols()).collect();
        let truth_k: Vec<usize> = (0..k1.a.ncols()).collect();
        accs_controls.push(identification_accuracy(&c1, &c2, spec.top_features, &truth_c)?);
        accs_cases.push(identification_accuracy(&k1, &k2, spec.top_features, &truth_k)?);

        // merged population: controls then cases, column-concatenated
        let merge = |a: &GroupMatrix, b: &GroupMatrix| -> Result<GroupMatrix> {
            if a.a.nrows() != b.a.nrows() {
                return Err(Error::Shape("sub-populations need equal region counts".into()));
            }
            let cols = a.a.ncols() + b.a.ncols();
            let m = DMatrix::from_fn(a.a.nrows(), cols, |f, k| {
                if k < a.a.ncols() {
                    a.a[(f, k)]
                } else {
                    b.a[(f, k - a.a.ncols())]
                }
            });
            let mut ids = a.column_ids.clone();
            ids.extend(b.column_ids.iter().map(|s| format!("case-{s}")));
            Ok(GroupMatrix {
                a: m,
                column_ids: ids,
                feature_pairs: a.feature_pairs.clone(),
                region_count: a.region_count,
            })
        };
        let m1 = merge(&c1, &k1)?;
        let m2 = merge(&c2, &k2)?;
        let truth: Vec<usize> = (0..m1.a.ncols()).collect();
        let acc = identification_accuracy(&m1, &m2, spec.top_features, &truth)?;
        accs_mixed.push(acc);

        if i == 0 {
            let sel = principal_features(&m1.a, spec.top_features.min(m1.a.nrows()))?;
            let sim = cross_similarity(
                &restrict_features(&m1, &sel)?,
                &restrict_features(&m2, &sel)?,
            )?;
            let pgm = out_dir.join("mixed_similarity.pgm");
            render_heatmap(&sim.sim, &pgm)?;
            artifacts.push(pgm);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    metrics.insert("accuracy_mixed_mean".into(), jnum(mean(&accs_mixed)));
    metrics.insert("accuracy_controls_mean".into(), jnum(mean(&accs_controls)));
    metrics.insert("accuracy_cases_mean".into(), jnum(mean(&accs_cases)));
    metrics.insert("accuracy_mixed_per_seed".into(), serde_json::json!(accs_mixed));
    finalize(spec, out_dir, metrics, artifacts)
}

fn run_multisite(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    let mut metrics = BTreeMap::new();
    let artifacts = Vec::new();
    // accuracy per seed at each fraction, plus the clean baseline
    let mut table: Vec<Vec<f64>> = Vec::new();
    for &seed in &spec.seeds {
        let cohort = cohort_for_seed(spec, seed)?;
        let (g1, g2_scans) = {
            let (g1, _) = task_groups(&cohort, "rest")?;
            (g1, cohort.session_scans("rest", 2))
        };
        let truth: Vec<usize> = (0..g1.a.ncols()).collect();
        let mut row = Vec::new();

        let group_of = |scans: &[crate::connectome::Connectome], ids: &[String]| {
            build_group_matrix(scans, ids)
        };
        let ids: Vec<String> = g2_scans.iter().map(|(s, _)| s.to_string()).collect();

        // clean baseline
        let clean: Vec<_> = g2_scans
            .iter()
            .map(|(_, ts)| correlation_matrix(ts))
            .collect::<Result<_>>()?;
        let g2 = group_of(&clean, &ids)?;
        row.push(identification_accuracy(&g1, &g2, spec.top_features, &truth)?);

        for (fi, &fraction) in spec.noise_fractions.iter().enumerate() {
            let mut acc_sum = 0.0;
            for rep in 0..spec.noise_repeats as u64 {
                let noisy: Vec<_> = g2_scans
                    .iter()
                    .enumerate()
                    .map(|(k, (_, ts))| {
                        let noise_seed =
                            seed ^ ((fi as u64 + 1) << 32) ^ (rep << 48) ^ k as u64;
                        let noised = inject_scanner_noise(ts, fraction, noise_seed)?;
                        correlation_matrix(&noised)
                    })
                    .collect::<Result<_>>()?;
                let g2n = group_of(&noisy, &ids)?;
                acc_sum += identification_accuracy(&g1, &g2n, spec.top_features, &truth)?;
            }
            row.push(acc_sum / spec.noise_repeats as f64);
        }
        table.push(row);
    }
    let n_levels = spec.noise_fractions.len() + 1;
    let means: Vec<f64> = (0..n_levels)
        .map(|l| table.iter().map(|r| r[l]).sum::<f64>() / table.len() as f64)
        .collect();
    // trend over the noise fractions only; the clean baseline (column 0) is
    // a single realization and reported separately
    let monotone = table
        .iter()
        .filter(|r| r[1..].windows(2).all(|w| w[1] <= w[0]))
        .count();
    metrics.insert(
        "noise_fractions".into(),
        serde_json::json!(std::iter::once(0.0)
            .chain(spec.noise_fractions.iter().copied())
            .collect::<Vec<_>>()),
    );
    metrics.insert("accuracy_means".into(), serde_json::json!(means));
    metrics.insert("accuracy_table".into(), serde_json::json!(table));
    metrics.insert(
        "monotone_fraction".into(),
        jnum(monotone as f64 / table.len() as f64),
    );
    finalize(spec, out_dir, metrics, artifacts)
}
