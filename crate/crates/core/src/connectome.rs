//! From time series to functional connectomes and group matrices.

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::ingest::{AtlasLabeling, RowKind, TimeSeriesMatrix};

/// Symmetric region-by-region Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone)]
pub struct Connectome {
    corr: DMatrix<f64>,
}

impl Connectome {
    pub fn new(corr: DMatrix<f64>) -> Result<Self> {
        let n = corr.nrows();
        if n == 0 || corr.ncols() != n {
            return Err(Error::Shape(format!(
                "connectome must be square and non-empty, got {}x{}",
                corr.nrows(),
                corr.ncols()
            )));
        }
        for i in 0..n {
            if corr[(i, i)] != 1.0 {
                return Err(Error::Domain(format!("diagonal entry ({i},{i}) != 1")));
            }
            for j in 0..n {
                let v = corr[(i, j)];
                if !v.is_finite() || v < -1.0 || v > 1.0 {
                    return Err(Error::Domain(format!("entry ({i},{j}) = {v} outside [-1,1]")));
                }
                if corr[(j, i)].to_bits() != v.to_bits() {
                    return Err(Error::Domain(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        Ok(Self { corr })
    }

    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn region_count(&self) -> usize {
        self.corr.nrows()
    }
}

/// Vectorized strict upper triangle of a connectome.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub region_count: usize,
}

/// Features-by-scans matrix of vectorized connectomes (the group matrix).
#[derive(Debug, Clone)]
pub struct GroupMatrix {
    pub a: DMatrix<f64>,
    pub column_ids: Vec<String>,
    /// (i, j) region pair backing each row, in row order.
    pub feature_pairs: Vec<(usize, usize)>,
    pub region_count: usize,
}

pub fn upper_triangle_len(region_count: usize) -> usize {
    region_count * (region_count - 1) / 2
}

/// Region pairs (i, j), i < j, in the fixed column-major order used by
/// [`vectorize_upper`]. Feature indices stay aligned across group matrices.
pub fn feature_pairs(region_count: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(upper_triangle_len(region_count));
    for j in 1..region_count {
        for i in 0..j {
            pairs.push((i, j));
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Temporal preprocessing
// ---------------------------------------------------------------------------

/// Per-row DFT-mask bandpass. Bins with |frequency| in [low_hz, high_hz] are
/// retained, everything else (including DC when low_hz > 0) is zeroed.
pub fn bandpass_filter(
    ts: &TimeSeriesMatrix,
    low_hz: f64,
    high_hz: f64,
) -> Result<TimeSeriesMatrix> {
    let nyquist = 1.0 / (2.0 * ts.tr_seconds);
    if !(low_hz >= 0.0 && low_hz < high_hz) {
        return Err(Error::Domain(format!(
            "need 0 <= low_hz < high_hz, got [{low_hz}, {high_hz}]"
        )));
    }
    if high_hz > nyquist * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "high_hz {high_hz} exceeds Nyquist {nyquist}"
        )));
    }
    let t = ts.ncols();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(t);
    let ifft = planner.plan_fft_inverse(t);

    let df = 1.0 / (t as f64 * ts.tr_seconds);
    let tol = 1e-9 * df;
    let keep: Vec<bool> = (0..t)
        .map(|k| {
            let f = k.min(t - k) as f64 * df;
            f >= low_hz - tol && f <= high_hz + tol
        })
        .collect();

    let mut out = ts.values.clone();
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(t);
    for i in 0..ts.nrows() {
        buf.clear();
        buf.extend((0..t).map(|j| Complex::new(ts.values[(i, j)], 0.0)));
        fft.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            if !keep[k] {
                *b = Complex::new(0.0, 0.0);
            }
        }
        ifft.process(&mut buf);
        for j in 0..t {
            out[(i, j)] = buf[j].re / t as f64;
        }
    }
    TimeSeriesMatrix::new(out, ts.tr_seconds, ts.row_kind)
}

/// Replace each row by its residual after least-squares regression onto the
/// across-row mean series (with intercept).
pub fn global_signal_regression(ts: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let n = ts.nrows();
    let t = ts.ncols();
    let mut global = vec![0.0; t];
    for j in 0..t {
        global[j] = (0..n).map(|i| ts.values[(i, j)]).sum::<f64>() / n as f64;
    }
    let gmean = global.iter().sum::<f64>() / t as f64;
    let gvar: f64 = global.iter().map(|g| (g - gmean).powi(2)).sum();
    if gvar == 0.0 {
        return Err(Error::Domain("global mean series has zero variance".into()));
    }
    let mut out = ts.values.clone();
    for i in 0..n {
        let row = ts.values.row(i);
        let rmean = row.sum() / t as f64;
        let cov: f64 = (0..t).map(|j| (row[j] - rmean) * (global[j] - gmean)).sum();
        let slope = cov / gvar;
        let intercept = rmean - slope * gmean;
        for j in 0..t {
            out[(i, j)] = row[j] - intercept - slope * global[j];
        }
    }
    // keep the type invariants; residuals may legitimately be all-zero rows
    Ok(TimeSeriesMatrix {
        values: out,
        tr_seconds: ts.tr_seconds,
        row_kind: ts.row_kind,
    })
}

/// Z-score each row (population normalization). Errors on zero-variance rows.
pub fn zscore_rows(ts: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let t = ts.ncols();
    let mut out = ts.values.clone();
    let mut degenerate = Vec::new();
    for i in 0..ts.nrows() {
        let row = ts.values.row(i);
        let mean = row.sum() / t as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        if var == 0.0 {
            degenerate.push(i);
            continue;
        }
        let sd = var.sqrt();
        for j in 0..t {
            out[(i, j)] = (row[j] - mean) / sd;
        }
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateRows(degenerate));
    }
    Ok(TimeSeriesMatrix {
        values: out,
        tr_seconds: ts.tr_seconds,
        row_kind: ts.row_kind,
    })
}

/// Average voxel rows into region rows according to the atlas labels.
pub fn collapse_to_regions(
    ts: &TimeSeriesMatrix,
    atlas: &AtlasLabeling,
) -> Result<TimeSeriesMatrix> {
    if atlas.labels.len() != ts.nrows() {
        return Err(Error::Atlas(format!(
            "atlas has {} labels but time series has {} rows",
            atlas.labels.len(),
            ts.nrows()
        )));
    }
    let t = ts.ncols();
    let mut sums = DMatrix::<f64>::zeros(atlas.region_count, t);
    let mut counts = vec![0usize; atlas.region_count];
    for (v, &label) in atlas.labels.iter().enumerate() {
        counts[label - 1] += 1;
        for j in 0..t {
            sums[(label - 1, j)] += ts.values[(v, j)];
        }
    }
    for (r, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::Atlas(format!("region {} has no voxels", r + 1)));
        }
        for j in 0..t {
            sums[(r, j)] /= c as f64;
        }
    }
    // direct construction: a single-region atlas legitimately yields one row
    Ok(TimeSeriesMatrix {
        values: sums,
        tr_seconds: ts.tr_seconds,
        row_kind: RowKind::Region,
    })
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// What to do with zero-variance rows when computing correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Abort with the list of offending rows (default).
    Abort,
    /// Impute r = 0 for every pair involving a zero-variance row.
    Zero,
}

pub fn correlation_matrix(ts: &TimeSeriesMatrix) -> Result<Connectome> {
    correlation_matrix_with(ts, DegeneratePolicy::Abort)
}

/// Pearson correlation of rows over time, population (1/T) normalization.
pub fn correlation_matrix_with(
    ts: &TimeSeriesMatrix,
    policy: DegeneratePolicy,
) -> Result<Connectome> {
    let n = ts.nrows();
    let t = ts.ncols();
    let mut z = DMatrix::<f64>::zeros(n, t);
    let mut degenerate = Vec::new();
    for i in 0..n {
        let row = ts.values.row(i);
        let mean = row.sum() / t as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        if var == 0.0 {
            degenerate.push(i);
            continue;
        }
        let sd = var.sqrt();
        for j in 0..t {
            z[(i, j)] = (row[j] - mean) / (sd * (t as f64).sqrt());
        }
    }
    if !degenerate.is_empty() && policy == DegeneratePolicy::Abort {
        return Err(Error::DegenerateRows(degenerate));
    }
    let mut corr = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        corr[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let r = if degenerate.contains(&i) || degenerate.contains(&j) {
                0.0
            } else {
                z.row(i).dot(&z.row(j)).clamp(-1.0, 1.0)
            };
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    Connectome::new(corr)
}

/// Strict upper triangle in fixed column-major pair order: (i, j) with i < j,
/// ordered by j then i.
pub fn vectorize_upper(c: &Connectome) -> FeatureVector {
    let n = c.region_count();
    let mut values = Vec::with_capacity(upper_triangle_len(n));
    for j in 1..n {
        for i in 0..j {
            values.push(c.corr()[(i, j)]);
        }
    }
    FeatureVector {
        values,
        region_count: n,
    }
}

pub fn build_group_matrix(scans: &[Connectome], column_ids: &[String]) -> Result<GroupMatrix> {
    if scans.is_empty() {
        return Err(Error::Shape("group matrix needs at least one scan".into()));
    }
    if column_ids.len() != scans.len() {
        return Err(Error::Shape(format!(
            "{} scans but {} column ids",
            scans.len(),
            column_ids.len()
        )));
    }
    let region_count = scans[0].region_count();
    for (k, c) in scans.iter().enumerate() {
        if c.region_count() != region_count {
            return Err(Error::Shape(format!(
                "scan {k} has {} regions, expected {region_count}",
                c.region_count()
            )));
        }
    }
    let m = upper_triangle_len(region_count);
    let mut a = DMatrix::<f64>::zeros(m, scans.len());
    for (k, c) in scans.iter().enumerate() {
        let fv = vectorize_upper(c);
        for (row, v) in fv.values.iter().enumerate() {
            a[(row, k)] = *v;
        }
    }
    Ok(GroupMatrix {
        a,
        column_ids: column_ids.to_vec(),
        feature_pairs: feature_pairs(region_count),
        region_count,
    })
}
