//! De-anonymization core: cross-group similarity, identity assignment, and
//! task-by-task identifiability grids.

use nalgebra::DMatrix;

use crate::connectome::GroupMatrix;
use crate::error::{Error, Result};
use crate::sketch::{principal_features, restrict_features};

/// Pearson similarities between reference (de-anonymized) and target
/// (anonymous) scans. Rows index the reference group.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub sim: DMatrix<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

/// Per-row argmax assignment with accuracy against a truth bijection.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// For each reference scan, the predicted target column.
    pub assignment: Vec<usize>,
    /// Fraction of correct predictions, when truth is known.
    pub accuracy: Option<f64>,
    /// True-match similarity minus best impostor similarity, per reference
    /// scan, when truth is known.
    pub margins: Option<Vec<f64>>,
}

fn column_stats(a: &DMatrix<f64>, col: usize) -> (f64, f64) {
    let m = a.nrows() as f64;
    let c = a.column(col);
    let mean = c.sum() / m;
    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

/// Pearson correlation between every reference column and every target column.
pub fn cross_similarity(reference: &GroupMatrix, target: &GroupMatrix) -> Result<SimilarityMatrix> {
    if reference.a.nrows() != target.a.nrows() {
        return Err(Error::Shape(format!(
            "feature counts differ: {} vs {}",
            reference.a.nrows(),
            target.a.nrows()
        )));
    }
    let m = reference.a.nrows() as f64;
    let check = |g: &GroupMatrix| -> Result<Vec<(f64, f64)>> {
        let mut stats = Vec::with_capacity(g.a.ncols());
        let mut degenerate = Vec::new();
        for k in 0..g.a.ncols() {
            let (mean, var) = column_stats(&g.a, k);
            if var == 0.0 {
                degenerate.push(k);
            }
            stats.push((mean, var.sqrt()));
        }
        if degenerate.is_empty() {
            Ok(stats)
        } else {
            Err(Error::DegenerateColumns(degenerate))
        }
    };
    let ref_stats = check(reference)?;
    let tgt_stats = check(target)?;

    let mut sim = DMatrix::<f64>::zeros(reference.a.ncols(), target.a.ncols());
    for i in 0..reference.a.ncols() {
        let (mi, si) = ref_stats[i];
        for j in 0..target.a.ncols() {
            let (mj, sj) = tgt_stats[j];
            let mut cov = 0.0;
            for f in 0..reference.a.nrows() {
                cov += (reference.a[(f, i)] - mi) * (target.a[(f, j)] - mj);
            }
            sim[(i, j)] = (cov / m / (si * sj)).clamp(-1.0, 1.0);
        }
    }
    Ok(SimilarityMatrix {
        sim,
        row_ids: reference.column_ids.clone(),
        col_ids: target.column_ids.clone(),
    })
}

/// Independent per-row argmax assignment, ties broken by lowest column index.
/// `truth[i]` gives the correct target column for reference row i.
pub fn match_subjects(s: &SimilarityMatrix, truth: Option<&[usize]>) -> Result<MatchResult> {
    let (n, m) = (s.sim.nrows(), s.sim.ncols());
    if n == 0 || m == 0 {
        return Err(Error::Shape("empty similarity matrix".into()));
    }
    if let Some(t) = truth {
        if t.len() != n || t.iter().any(|&j| j >= m) {
            return Err(Error::Shape("truth bijection does not match matrix".into()));
        }
    }
    let mut assignment = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0;
        for j in 1..m {
            if s.sim[(i, j)] > s.sim[(i, best)] {
                best = j;
            }
        }
        assignment.push(best);
    }
    let (accuracy, margins) = match truth {
        Some(t) => {
            let correct = assignment.iter().zip(t).filter(|(a, b)| a == b).count();
            let margins = (0..n)
                .map(|i| {
                    let own = s.sim[(i, t[i])];
                    let impostor = (0..m)
                        .filter(|&j| j != t[i])
                        .map(|j| s.sim[(i, j)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    own - impostor
                })
                .collect();
            (Some(correct as f64 / n as f64), Some(margins))
        }
        None => (None, None),
    };
    Ok(MatchResult {
        assignment,
        accuracy,
        margins,
    })
}

/// Identification accuracy for one (reference, target) group pair at a fixed
/// feature budget: select on the reference, restrict both, match.
pub fn identification_accuracy(
    reference: &GroupMatrix,
    target: &GroupMatrix,
    t: usize,
    truth: &[usize],
) -> Result<f64> {
    let sel = principal_features(&reference.a, t.min(reference.a.nrows()))?;
    let r = restrict_features(reference, &sel)?;
    let g = restrict_features(target, &sel)?;
    let sim = cross_similarity(&r, &g)?;
    let result = match_subjects(&sim, Some(truth))?;
    Ok(result.accuracy.unwrap())
}

/// Task-by-task grid of identification accuracies. Cell (a, b) selects
/// features on the reference group of task a and matches it against the
/// anonymous group of task b. The grid is generally asymmetric.
pub fn identifiability_matrix(
    groups_ref: &[(String, GroupMatrix)],
    groups_target: &[(String, GroupMatrix)],
    t: usize,
    truth: &[usize],
) -> Result<DMatrix<f64>> {
    if groups_ref.is_empty() || groups_ref.len() != groups_target.len() {
        return Err(Error::Shape("reference/target task lists differ".into()));
    }
    let n = groups_ref.len();
    let mut grid = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        let sel = principal_features(&groups_ref[a].1.a, t.min(groups_ref[a].1.a.nrows()))?;
        let reduced_ref = restrict_features(&groups_ref[a].1, &sel)?;
        for b in 0..n {
            let reduced_target = restrict_features(&groups_target[b].1, &sel)?;
            let sim = cross_similarity(&reduced_ref, &reduced_target)?;
            let result = match_subjects(&sim, Some(truth))?;
            grid[(a, b)] = result.accuracy.unwrap();
        }
    }
    Ok(grid)
}
