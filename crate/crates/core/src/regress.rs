//! Task-performance regression on leverage-selected features, reported as
//! normalized RMSE percentages.
//!
//! The default regressor is linear epsilon-insensitive regression with L2
//! regularization trained by deterministic full-batch subgradient descent;
//! squared-loss ridge (iterative, with a closed-form normal-equations
//! baseline) is the verification path.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::connectome::{build_group_matrix, correlation_matrix, GroupMatrix};
use crate::error::{Error, Result};
use crate::ingest::Cohort;
use crate::rng::derive_rng;
use crate::sketch::principal_features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    EpsilonInsensitive,
    Squared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub loss: Loss,
    /// Tube half-width in standardized target units.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lambda")]
    pub regularization: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    1e-2
}
fn default_max_iters() -> usize {
    100_000
}
fn default_tol() -> f64 {
    1e-8
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            loss: Loss::EpsilonInsensitive,
            epsilon: default_epsilon(),
            regularization: default_lambda(),
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }
}

/// Linear model in the original (unstandardized) feature space.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub regularization: f64,
    pub loss: Loss,
    pub epsilon: f64,
}

/// Mean and std dev statistics. Zero-variance coordinates get unit scale so
/// they standardize to exactly zero.
fn standardize_stats(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
}

struct Standardized {
    x: DMatrix<f64>, // features x samples
    y: Vec<f64>,
    fx_mean: Vec<f64>,
    fx_std: Vec<f64>,
    y_mean: f64,
    y_std: f64,
}

fn standardize(x: &DMatrix<f64>, y: &[f64]) -> Standardized {
    let (d, n) = (x.nrows(), x.ncols());
    let mut fx_mean = Vec::with_capacity(d);
    let mut fx_std = Vec::with_capacity(d);
    for f in 0..d {
        let row: Vec<f64> = x.row(f).iter().copied().collect();
        let (m, s) = standardize_stats(&row);
        fx_mean.push(m);
        fx_std.push(s);
    }
    let (y_mean, y_std) = standardize_stats(y);
    let xs = DMatrix::from_fn(d, n, |f, k| (x[(f, k)] - fx_mean[f]) / fx_std[f]);
    let ys = y.iter().map(|v| (v - y_mean) / y_std).collect();
    Standardized {
        x: xs,
        y: ys,
        fx_mean,
        fx_std,
        y_mean,
        y_std,
    }
}

fn objective(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &DVector<f64>,
    b: f64,
    cfg: &ModelConfig,
) -> f64 {
    let n = x.ncols() as f64;
    let mut loss = 0.0;
    for k in 0..x.ncols() {
        let pred = w.dot(&x.column(k)) + b;
        let e = pred - y[k];
        loss += match cfg.loss {
            Loss::Squared => 0.5 * e * e,
            Loss::EpsilonInsensitive => (e.abs() - cfg.epsilon).max(0.0),
        };
    }
    loss / n + 0.5 * cfg.regularization * w.norm_squared()
}

/// Fit on columns-as-samples `x` (features x samples) against targets `y`.
pub fn fit_regressor(x: &DMatrix<f64>, y: &[f64], cfg: &ModelConfig) -> Result<RegressionModel> {
    let (d, n) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n}")));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{n} samples but {} targets", y.len())));
    }
    if cfg.epsilon < 0.0 || cfg.regularization < 0.0 {
        return Err(Error::Config("epsilon and regularization must be >= 0".into()));
    }
    let std = standardize(x, y);

    let mut w = DVector::<f64>::zeros(d);
    let mut b = 0.0;
    let mut prev_obj = objective(&std.x, &std.y, &w, b, cfg);
    let mut best = (w.clone(), b, prev_obj);

    // step size: squared loss is smooth, use 1/L with L from the data Gram
    // spectral norm; the epsilon-insensitive path uses a fixed decaying
    // schedule over full-batch subgradients
    let lipschitz = match cfg.loss {
        Loss::Squared => {
            let gram = &std.x * std.x.transpose() / n as f64;
            spectral_norm(&gram) + cfg.regularization + 1.0
        }
        Loss::EpsilonInsensitive => 0.0,
    };

    let mut converged = false;
    for t in 0..cfg.max_iters {
        let mut grad_w = &w * cfg.regularization;
        let mut grad_b = 0.0;
        for k in 0..n {
            let col = std.x.column(k);
            let e = w.dot(&col) + b - std.y[k];
            let g = match cfg.loss {
                Loss::Squared => e,
                Loss::EpsilonInsensitive => {
                    if e.abs() <= cfg.epsilon {
                        0.0
                    } else {
                        e.signum()
                    }
                }
            };
            if g != 0.0 {
                grad_w.axpy(g / n as f64, &col, 1.0);
                grad_b += g / n as f64;
            }
        }
        let step = match cfg.loss {
            Loss::Squared => 1.0 / lipschitz,
            Loss::EpsilonInsensitive => 0.5 / (1.0 + (t as f64) * 0.01),
        };
        w.axpy(-step, &grad_w, 1.0);
        b -= step * grad_b;

        let obj = objective(&std.x, &std.y, &w, b, cfg);
        if obj < best.2 {
            best = (w.clone(), b, obj);
        }
        let rel = (prev_obj - obj).abs() / prev_obj.abs().max(1e-12);
        if rel < cfg.tol && t > 10 {
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    if !converged && cfg.loss == Loss::Squared {
        return Err(Error::Convergence(format!(
            "squared-loss fit did not converge in {} iterations (last objective {prev_obj})",
            cfg.max_iters
        )));
    }
    let (w, b, _) = best;

    // unfold the standardization into original-space coefficients
    let mut weights = Vec::with_capacity(d);
    let mut intercept = std.y_mean + std.y_std * b;
    for f in 0..d {
        let wf = std.y_std * w[f] / std.fx_std[f];
        weights.push(wf);
        intercept -= wf * std.fx_mean[f];
    }
    Ok(RegressionModel {
        weights,
        intercept,
        regularization: cfg.regularization,
        loss: cfg.loss,
        epsilon: cfg.epsilon,
    })
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = mv / norm;
        lambda = norm;
    }
    lambda
}

/// Closed-form ridge solution (normal equations, intercept unpenalized) on
/// standardized data. Verification baseline for the iterative squared path.
pub fn ridge_closed_form(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RegressionModel> {
    let (d, n) = (x.nrows(), x.ncols());
    if n < 2 || y.len() != n {
        return Err(Error::Shape("bad sample count".into()));
    }
    let std = standardize(x, y);
    let gram = (&std.x * std.x.transpose()) / n as f64
        + DMatrix::<f64>::identity(d, d) * lambda;
    let ys = DVector::from_vec(std.y.clone());
    let rhs = (&std.x * ys) / n as f64;
    let w = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular ridge system".into()))?;
    // standardized features have zero mean, so the standardized intercept is 0
    let mut weights = Vec::with_capacity(d);
    let mut intercept = std.y_mean;
    for f in 0..d {
        let wf = std.y_std * w[f] / std.fx_std[f];
        weights.push(wf);
        intercept -= wf * std.fx_mean[f];
    }
    Ok(RegressionModel {
        weights,
        intercept,
        regularization: lambda,
        loss: Loss::Squared,
        epsilon: 0.0,
    })
}

pub fn predict(model: &RegressionModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.nrows() != model.weights.len() {
        return Err(Error::Shape(format!(
            "model has {} weights but input has {} features",
            model.weights.len(),
            x.nrows()
        )));
    }
    Ok((0..x.ncols())
        .map(|k| {
            model.intercept
                + model
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(f, w)| w * x[(f, k)])
                    .sum::<f64>()
        })
        .collect())
}

/// 100 * RMSE / range(y_true), as a percentage.
pub fn nrmse(y_hat: &[f64], y_true: &[f64]) -> Result<f64> {
    if y_hat.len() != y_true.len() || y_true.len() < 2 {
        return Err(Error::Shape("prediction/target length mismatch".into()));
    }
    let max = y_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = y_true.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Err(Error::Domain("constant target has zero range".into()));
    }
    let mse = y_hat
        .iter()
        .zip(y_true)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y_true.len() as f64;
    Ok(100.0 * mse.sqrt() / (max - min))
}

/// Mean +/- std of train/test nRMSE over repeated random splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: String,
    pub repeats: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub train_nrmse_mean: f64,
    pub train_nrmse_std: f64,
    pub test_nrmse_mean: f64,
    pub test_nrmse_std: f64,
}

impl ExperimentReport {
    pub fn csv_header() -> &'static str {
        "task,repeats,train_count,test_count,train_nrmse_mean,train_nrmse_std,test_nrmse_mean,test_nrmse_std"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.task,
            self.repeats,
            self.train_count,
            self.test_count,
            self.train_nrmse_mean,
            self.train_nrmse_std,
            self.test_nrmse_mean,
            self.test_nrmse_std
        )
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Group matrix of session-1 scans of one task, columns ordered by subject.
pub fn task_group_matrix(cohort: &Cohort, task: &str, session: u8) -> Result<GroupMatrix> {
    let scans = cohort.session_scans(task, session);
    if scans.is_empty() {
        return Err(Error::Config(format!("no scans for task {task:?}")));
    }
    let mut conns = Vec::with_capacity(scans.len());
    let mut ids = Vec::with_capacity(scans.len());
    for (subject, ts) in scans {
        conns.push(correlation_matrix(ts)?);
        ids.push(subject.to_string());
    }
    build_group_matrix(&conns, &ids)
}

/// Repeated-split performance-prediction experiment: per repeat, an 80/20
/// subject split, leverage selection on the train group matrix only, fit,
/// and nRMSE on both sides.
pub fn run_performance_experiment(
    cohort: &Cohort,
    task: &str,
    t: usize,
    repeats: usize,
    seed: u64,
    cfg: &ModelConfig,
) -> Result<ExperimentReport> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be positive".into()));
    }
    let group = task_group_matrix(cohort, task, 1)?;
    let n = group.a.ncols();
    let targets: Vec<f64> = group
        .column_ids
        .iter()
        .map(|s| {
            cohort
                .performance
                .get(&(s.clone(), task.to_string()))
                .copied()
                .ok_or_else(|| Error::Config(format!("no performance for subject {s} task {task}")))
        })
        .collect::<Result<_>>()?;

    let test_count = ((n as f64) * 0.2).round().max(1.0) as usize;
    let train_count = n - test_count;
    if train_count < 2 || test_count < 2 {
        return Err(Error::Config(format!("cohort too small to split: {n} subjects")));
    }

    let mut train_scores = Vec::with_capacity(repeats);
    let mut test_scores = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = derive_rng(seed, &[0xbeef, rep as u64]);
        order.shuffle(&mut rng);
        let (train_idx, test_idx) = order.split_at(train_count);

        let take = |idx: &[usize]| -> (DMatrix<f64>, Vec<f64>) {
            let x = DMatrix::from_fn(group.a.nrows(), idx.len(), |f, k| group.a[(f, idx[k])]);
            let y = idx.iter().map(|&k| targets[k]).collect();
            (x, y)
        };
        let (x_train_full, y_train) = take(train_idx);
        let (x_test_full, y_test) = take(test_idx);

        // feature selection sees only the training columns
        let sel = principal_features(&x_train_full, t.min(x_train_full.nrows()))?;
        let pick = |x: &DMatrix<f64>| {
            DMatrix::from_fn(sel.indices.len(), x.ncols(), |f, k| x[(sel.indices[f], k)])
        };
        let x_train = pick(&x_train_full);
        let x_test = pick(&x_test_full);

        let model = fit_regressor(&x_train, &y_train, cfg)?;
        train_scores.push(nrmse(&predict(&model, &x_train)?, &y_train)?);
        test_scores.push(nrmse(&predict(&model, &x_test)?, &y_test)?);
    }
    let (train_mean, train_std) = mean_std(&train_scores);
    let (test_mean, test_std) = mean_std(&test_scores);
    Ok(ExperimentReport {
        task: task.to_string(),
        repeats,
        train_count,
        test_count,
        train_nrmse_mean: train_mean,
        train_nrmse_std: train_std,
        test_nrmse_mean: test_mean,
        test_nrmse_std: test_std,
    })
}

/// Derive a performance score per subject as a fixed linear function of a few
/// session-1 connectome features plus small noise, scaled into [0, 100].
/// Gives synthetic cohorts a learnable regression target.
pub fn plant_linear_performance(
    cohort: &mut Cohort,
    task: &str,
    n_driver_features: usize,
    noise: f64,
    seed: u64,
) -> Result<()> {
    let group = task_group_matrix(cohort, task, 1)?;
    let m = group.a.nrows();
    if n_driver_features == 0 || n_driver_features > m {
        return Err(Error::Config(format!(
            "driver feature count {n_driver_features} outside [1, {m}]"
        )));
    }
    // drivers: the top-leverage features, so selection can rediscover them
    let sel = principal_features(&group.a, n_driver_features)?;
    let mut rng = derive_rng(seed, &[0xfeed]);
    use rand_distr::{Distribution, StandardNormal};
    let coeffs: Vec<f64> = (0..n_driver_features)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        })
        .collect();
    let raw: Vec<f64> = (0..group.a.ncols())
        .map(|k| {
            let mut s = 0.0;
            for (c, &f) in coeffs.iter().zip(&sel.indices) {
                s += c * group.a[(f, k)];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            s + noise * e
        })
        .collect();
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = (max - min).max(1e-12);
    for (k, subject) in group.column_ids.iter().enumerate() {
        let score = 10.0 + 80.0 * (raw[k] - min) / range;
        cohort
            .performance
            .insert((subject.clone(), task.to_string()), score);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic_cohort, SynthConfig};
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = derive_rng(seed, &[55]);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn exact_linear_recovery_squared_loss() {
        let x = random_matrix(1, 40, 1);
        let y: Vec<f64> = (0..40).map(|k| 3.5 * x[(0, k)] + 2.0).collect();
        let cfg = ModelConfig {
            loss: Loss::Squared,
            regularization: 1e-10,
            ..ModelConfig::default()
        };
        let model = fit_regressor(&x, &y, &cfg).unwrap();
        assert!((model.weights[0] - 3.5).abs() / 3.5 < 1e-4, "w = {}", model.weights[0]);
        let x_test = random_matrix(1, 20, 2);
        let y_test: Vec<f64> = (0..20).map(|k| 3.5 * x_test[(0, k)] + 2.0).collect();
        let err = nrmse(&predict(&model, &x_test).unwrap(), &y_test).unwrap();
        assert!(err < 0.1, "test nRMSE {err}%");
    }

    #[test]
    fn constant_target_gives_zero_weights() {
        let x = random_matrix(3, 30, 3);
        let y = vec![5.0; 30];
        let cfg = ModelConfig {
            loss: Loss::Squared,
            regularization: 1e-6,
            ..ModelConfig::default()
        };
        let model = fit_regressor(&x, &y, &cfg).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-6));
        assert!((model.intercept - 5.0).abs() < 1e-6);
    }

    // closed-form oracle: iterative squared-loss objective must match the
    // normal-equations solution
    #[test]
    fn iterative_squared_matches_normal_equations() {
        let x = random_matrix(5, 80, 4);
        let mut rng = derive_rng(5, &[1]);
        let w_true: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..80)
            .map(|k| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                (0..5).map(|f| w_true[f] * x[(f, k)]).sum::<f64>() + 1.5 + 0.1 * noise
            })
            .collect();
        let lambda = 1e-2;
        let cfg = ModelConfig {
            loss: Loss::Squared,
            regularization: lambda,
            ..ModelConfig::default()
        };
        let iterative = fit_regressor(&x, &y, &cfg).unwrap();
        let closed = ridge_closed_form(&x, &y, lambda).unwrap();

        // compare the regularized objective on standardized data through the
        // unstandardized predictions
        let obj = |m: &RegressionModel| {
            let preds = predict(m, &x).unwrap();
            let mse: f64 = preds
                .iter()
                .zip(&y)
                .map(|(a, b)| 0.5 * (a - b).powi(2))
                .sum::<f64>()
                / 80.0;
            mse
        };
        let oi = obj(&iterative);
        let oc = obj(&closed);
        assert!((oi - oc).abs() < 1e-6, "iterative {oi}, closed form {oc}");
        for (a, b) in iterative.weights.iter().zip(&closed.weights) {
            assert!((a - b).abs() < 1e-4, "weights differ: {a} vs {b}");
        }
    }

    #[test]
    fn epsilon_insensitive_fits_within_tube() {
        let x = random_matrix(3, 60, 6);
        let mut rng = derive_rng(6, &[1]);
        let y: Vec<f64> = (0..60)
            .map(|k| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                2.0 * x[(0, k)] - x[(1, k)] + 0.05 * noise
            })
            .collect();
        let cfg = ModelConfig::default();
        let model = fit_regressor(&x, &y, &cfg).unwrap();
        let err = nrmse(&predict(&model, &x).unwrap(), &y).unwrap();
        assert!(err < 5.0, "train nRMSE {err}%");
    }

    #[test]
    fn predict_basics() {
        let model = RegressionModel {
            weights: vec![0.0, 0.0],
            intercept: 5.0,
            regularization: 0.0,
            loss: Loss::Squared,
            epsilon: 0.0,
        };
        let x = random_matrix(2, 7, 7);
        assert!(predict(&model, &x).unwrap().iter().all(|&v| v == 5.0));

        // hand-computed two-feature example
        let model = RegressionModel {
            weights: vec![2.0, -1.0],
            intercept: 0.5,
            regularization: 0.0,
            loss: Loss::Squared,
            epsilon: 0.0,
        };
        let x = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(predict(&model, &x).unwrap(), vec![2.0 * 3.0 - 4.0 + 0.5]);

        let bad = random_matrix(3, 2, 8);
        assert!(predict(&model, &bad).is_err());
    }

    #[test]
    fn nrmse_values() {
        let y = vec![0.0, 100.0];
        assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        let yhat = vec![10.0, 90.0];
        assert!((nrmse(&yhat, &y).unwrap() - 10.0).abs() < 1e-12);
        assert!(nrmse(&[1.0, 2.0], &[3.0, 3.0]).is_err());

        // direct-formula oracle on random vectors
        let a = random_matrix(1, 50, 9);
        let b = random_matrix(1, 50, 10);
        let ya: Vec<f64> = a.iter().copied().collect();
        let yb: Vec<f64> = b.iter().copied().collect();
        let rmse = (ya
            .iter()
            .zip(&yb)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            / 50.0)
            .sqrt();
        let range = yb.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - yb.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((nrmse(&ya, &yb).unwrap() - 100.0 * rmse / range).abs() < 1e-12);
    }

    #[test]
    fn nrmse_shift_invariance() {
        let a = vec![1.0, 2.0, 4.0, 8.0];
        let b = vec![1.5, 2.5, 3.0, 7.0];
        let shifted_a: Vec<f64> = a.iter().map(|v| v + 17.0).collect();
        let shifted_b: Vec<f64> = b.iter().map(|v| v + 17.0).collect();
        assert!((nrmse(&a, &b).unwrap() - nrmse(&shifted_a, &shifted_b).unwrap()).abs() < 1e-12);
    }

    fn small_perf_cohort(seed: u64) -> Cohort {
        let cfg = SynthConfig {
            n_subjects: 20,
            n_regions: 12,
            n_timepoints: 100,
            n_tasks: 1,
            signature_strength: 1.0,
            task_strength: 0.5,
            noise_sigma: 0.5,
            seed,
            shared_component_strength: 0.0,
            latent_factors: 5,
            tr_seconds: 0.72,
        };
        let mut cohort = generate_synthetic_cohort(&cfg).unwrap();
        plant_linear_performance(&mut cohort, "task1", 5, 0.02, seed).unwrap();
        cohort
    }

    #[test]
    fn experiment_reproducible_bitwise() {
        let cohort = small_perf_cohort(20);
        let cfg = ModelConfig::default();
        let a = run_performance_experiment(&cohort, "task1", 20, 1, 42, &cfg).unwrap();
        let b = run_performance_experiment(&cohort, "task1", 20, 1, 42, &cfg).unwrap();
        assert_eq!(a.test_nrmse_mean.to_bits(), b.test_nrmse_mean.to_bits());
        assert_eq!(a.train_nrmse_mean.to_bits(), b.train_nrmse_mean.to_bits());
    }

    // no-leakage property: permuting the test subjects cannot change the
    // selected feature set, so train nRMSE is unchanged
    #[test]
    fn selection_ignores_test_subjects() {
        let cohort = small_perf_cohort(21);
        let group = task_group_matrix(&cohort, "task1", 1).unwrap();
        let n = group.a.ncols();
        let train: Vec<usize> = (0..16).collect();
        let x_train = DMatrix::from_fn(group.a.nrows(), 16, |f, k| group.a[(f, train[k])]);
        let sel1 = principal_features(&x_train, 10).unwrap();
        // scrambling the held-out columns is invisible to selection
        let mut scrambled = group.a.clone();
        for k in 16..n {
            for f in 0..group.a.nrows() {
                scrambled[(f, k)] = -3.0 * scrambled[(f, k)] + 1.0;
            }
        }
        let x_train2 = DMatrix::from_fn(scrambled.nrows(), 16, |f, k| scrambled[(f, train[k])]);
        let sel2 = principal_features(&x_train2, 10).unwrap();
        assert_eq!(sel1.indices, sel2.indices);
    }

    #[test]
    fn pure_noise_target_matches_mean_baseline() {
        let cohort = {
            let mut c = small_perf_cohort(22);
            // overwrite with a target independent of the features
            let mut rng = derive_rng(23, &[9]);
            let subjects = c.subjects.clone();
            for s in subjects {
                let v: f64 = StandardNormal.sample(&mut rng);
                c.performance.insert((s, "task1".into()), 50.0 + 10.0 * v);
            }
            c
        };
        let cfg = ModelConfig::default();
        let report = run_performance_experiment(&cohort, "task1", 5, 50, 7, &cfg).unwrap();

        // baseline: predict the train mean on each split
        let group = task_group_matrix(&cohort, "task1", 1).unwrap();
        let targets: Vec<f64> = group
            .column_ids
            .iter()
            .map(|s| cohort.performance[&(s.clone(), "task1".to_string())])
            .collect();
        let n = targets.len();
        let test_count = ((n as f64) * 0.2).round() as usize;
        let mut baseline_scores = Vec::new();
        for rep in 0..50u64 {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = derive_rng(7, &[0xbeef, rep]);
            order.shuffle(&mut rng);
            let (train_idx, test_idx) = order.split_at(n - test_count);
            let mean: f64 =
                train_idx.iter().map(|&k| targets[k]).sum::<f64>() / train_idx.len() as f64;
            let preds = vec![mean; test_idx.len()];
            let truth: Vec<f64> = test_idx.iter().map(|&k| targets[k]).collect();
            baseline_scores.push(nrmse(&preds, &truth).unwrap());
        }
        let baseline = baseline_scores.iter().sum::<f64>() / 50.0;
        let rel = (report.test_nrmse_mean - baseline).abs() / baseline;
        assert!(
            rel < 0.2,
            "test nRMSE {} vs mean baseline {baseline} (rel {rel})",
            report.test_nrmse_mean
        );
    }
}
