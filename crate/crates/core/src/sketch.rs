//! Leverage-score machinery: orthonormal column-space basis, exact leverage
//! scores, l2 and leverage-weighted row sampling, and deterministic
//! principal-features selection.
//!
//! The tall side (features) never gets factorized directly: with m >> n the
//! basis comes from an eigendecomposition of the n-by-n Gram matrix A^T A,
//! with U = A V Sigma^-1.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::connectome::GroupMatrix;
use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// Rank-truncation tolerance relative to the largest singular value.
const RANK_TOL: f64 = 1e-10;

/// Leverage scores l_i = ||U_{i,*}||^2 plus the normalized sampling
/// probabilities p_i = l_i / rank.
#[derive(Debug, Clone)]
pub struct LeverageProfile {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub rank: usize,
}

/// Ordered indices of the top-t leverage features (the principal features
/// subspace), scores non-increasing.
#[derive(Debug, Clone)]
pub struct FeatureSelection {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Rescaled sampled-row sketch produced by randomized row sampling.
#[derive(Debug, Clone)]
pub struct SketchMatrix {
    pub rows: DMatrix<f64>,
    pub sampled_indices: Vec<usize>,
    pub rescale_factors: Vec<f64>,
}

/// Orthonormal basis U for the column space of `a`, columns with singular
/// value below tol * sigma_max dropped.
pub fn column_space_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new(gram);
    let n = a.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let sigma_max = eig.eigenvalues[order[0]].max(0.0).sqrt();
    if sigma_max == 0.0 {
        return Err(Error::Rank("matrix is identically zero".into()));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() > RANK_TOL * sigma_max)
        .collect();
    let r = kept.len();
    let mut u = DMatrix::<f64>::zeros(a.nrows(), r);
    for (col, &i) in kept.iter().enumerate() {
        let sigma = eig.eigenvalues[i].sqrt();
        let v = eig.eigenvectors.column(i);
        let ui = a * v / sigma;
        u.set_column(col, &ui);
    }
    Ok(u)
}

pub fn leverage_scores(a: &DMatrix<f64>) -> Result<LeverageProfile> {
    let u = column_space_basis(a)?;
    let rank = u.ncols();
    let scores: Vec<f64> = (0..u.nrows())
        .map(|i| u.row(i).iter().map(|v| v * v).sum())
        .collect();
    let total: f64 = scores.iter().sum();
    let probabilities = scores.iter().map(|s| s / total).collect();
    Ok(LeverageProfile {
        scores,
        probabilities,
        rank,
    })
}

/// Row-norm sampling distribution: p_i = ||A_{i,*}||^2 / ||A||_F^2.
pub fn l2_row_probabilities(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let norms: Vec<f64> = (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v * v).sum())
        .collect();
    let total: f64 = norms.iter().sum();
    if total == 0.0 {
        return Err(Error::Domain("cannot sample rows of a zero matrix".into()));
    }
    Ok(norms.into_iter().map(|n| n / total).collect())
}

/// Draw `s` rows i.i.d. with replacement from distribution `p` and rescale
/// each by 1/sqrt(s p_i), so that E[sketch^T sketch] = A^T A.
pub fn row_sample(a: &DMatrix<f64>, s: usize, p: &[f64], seed: u64) -> Result<SketchMatrix> {
    if s == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    if p.len() != a.nrows() {
        return Err(Error::Shape(format!(
            "distribution has {} entries for {} rows",
            p.len(),
            a.nrows()
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) {
        return Err(Error::Domain(format!(
            "row probabilities must be non-negative and sum to 1, got sum {total}"
        )));
    }
    let mut cumulative = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &x in p {
        acc += x;
        cumulative.push(acc);
    }
    // guard against float drift at the top end
    *cumulative.last_mut().unwrap() = 1.0;

    let mut rng = derive_rng(seed, &[0x5a5a]);
    let mut rows = DMatrix::<f64>::zeros(s, a.ncols());
    let mut sampled_indices = Vec::with_capacity(s);
    let mut rescale_factors = Vec::with_capacity(s);
    for t in 0..s {
        let u: f64 = rng.gen::<f64>();
        let idx = cumulative.partition_point(|&c| c <= u).min(p.len() - 1);
        if p[idx] == 0.0 {
            return Err(Error::Domain(format!(
                "sampled zero-probability row {idx}; sampler invariant broken"
            )));
        }
        let factor = 1.0 / (s as f64 * p[idx]).sqrt();
        for j in 0..a.ncols() {
            rows[(t, j)] = a[(idx, j)] * factor;
        }
        sampled_indices.push(idx);
        rescale_factors.push(factor);
    }
    Ok(SketchMatrix {
        rows,
        sampled_indices,
        rescale_factors,
    })
}

/// Deterministic top-t leverage selection; ties broken by lower feature index.
pub fn principal_features(a: &DMatrix<f64>, t: usize) -> Result<FeatureSelection> {
    let m = a.nrows();
    if t == 0 || t > m {
        return Err(Error::Index(format!("t = {t} outside [1, {m}]")));
    }
    let profile = leverage_scores(a)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        profile.scores[j]
            .partial_cmp(&profile.scores[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let indices: Vec<usize> = order.into_iter().take(t).collect();
    let scores = indices.iter().map(|&i| profile.scores[i]).collect();
    Ok(FeatureSelection { indices, scores })
}

/// Row-subset of a group matrix in selection order, feature ids carried over.
pub fn restrict_features(a: &GroupMatrix, sel: &FeatureSelection) -> Result<GroupMatrix> {
    let m = a.a.nrows();
    let mut rows = DMatrix::<f64>::zeros(sel.indices.len(), a.a.ncols());
    let mut pairs = Vec::with_capacity(sel.indices.len());
    for (out_row, &idx) in sel.indices.iter().enumerate() {
        if idx >= m {
            return Err(Error::Index(format!("feature index {idx} >= {m}")));
        }
        for j in 0..a.a.ncols() {
            rows[(out_row, j)] = a.a[(idx, j)];
        }
        pairs.push(a.feature_pairs[idx]);
    }
    Ok(GroupMatrix {
        a: rows,
        column_ids: a.column_ids.clone(),
        feature_pairs: pairs,
        region_count: a.region_count,
    })
}

/// CSV export: feature_index, region_i, region_j, leverage_score.
pub fn save_feature_selection(
    sel: &FeatureSelection,
    pairs: &[(usize, usize)],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("feature_index,region_i,region_j,leverage_score\n");
    for (&idx, &score) in sel.indices.iter().zip(&sel.scores) {
        let (i, j) = pairs
            .get(idx)
            .ok_or_else(|| Error::Index(format!("feature index {idx} has no region pair")))?;
        out.push_str(&format!("{idx},{i},{j},{score}\n"));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_feature_selection(path: &Path) -> Result<FeatureSelection> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut indices = Vec::new();
    let mut scores = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(Error::Format(format!(
                "selection line {} has {} cells, expected 4",
                lineno + 1,
                cells.len()
            )));
        }
        indices.push(
            cells[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad index at line {}", lineno + 1)))?,
        );
        scores.push(
            cells[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad score at line {}", lineno + 1)))?,
        );
    }
    if indices.is_empty() {
        return Err(Error::Format("empty feature selection".into()));
    }
    Ok(FeatureSelection { indices, scores })
}
