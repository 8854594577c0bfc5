//! t-SNE: perplexity-calibrated Gaussian affinities, Cauchy-kernel
//! low-dimensional affinities, KL objective and gradient, the momentum
//! optimization loop, and nearest-neighbor labeling on the embedded map.
//!
//! The update subtracts the gradient (the objective is minimized); momentum
//! defaults follow the original t-SNE presentation and are configurable.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// High-dimensional kernel distance. `Squared` is the standard Gaussian
/// kernel exp(-d^2 / 2 sigma^2); `Abs` uses the unsquared norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelDistance {
    #[default]
    Squared,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentumSchedule {
    Constant { value: f64 },
    /// alpha = `early` while iteration <= `switch_at`, `late` afterward.
    TwoPhase { switch_at: usize, early: f64, late: f64 },
}

impl MomentumSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        match *self {
            MomentumSchedule::Constant { value } => value,
            MomentumSchedule::TwoPhase {
                switch_at,
                early,
                late,
            } => {
                if iteration <= switch_at {
                    early
                } else {
                    late
                }
            }
        }
    }
}

impl Default for MomentumSchedule {
    fn default() -> Self {
        MomentumSchedule::TwoPhase {
            switch_at: 250,
            early: 0.5,
            late: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: MomentumSchedule,
    pub seed: u64,
    #[serde(default = "default_target_dim")]
    pub target_dim: usize,
    #[serde(default)]
    pub kernel_distance: KernelDistance,
    /// Optional (factor, iterations) early-exaggeration phase; off by default.
    #[serde(default)]
    pub early_exaggeration: Option<(f64, usize)>,
}

fn default_target_dim() -> usize {
    2
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 100.0,
            momentum: MomentumSchedule::default(),
            seed: 0,
            target_dim: 2,
            kernel_distance: KernelDistance::Squared,
            early_exaggeration: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffinityKind {
    Conditional,
    Joint,
}

#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    pub p: DMatrix<f64>,
    pub kind: AffinityKind,
}

/// Low-dimensional map with the optimization trace.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub y: DMatrix<f64>,
    pub final_kl: f64,
    pub kl_trace: Vec<f64>,
}

/// Pairwise kernel distances between rows of `x`.
fn pairwise_distances(x: &DMatrix<f64>, kernel: KernelDistance) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for k in 0..x.ncols() {
                let diff = x[(i, k)] - x[(j, k)];
                sq += diff * diff;
            }
            let v = match kernel {
                KernelDistance::Squared => sq,
                KernelDistance::Abs => sq.sqrt(),
            };
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Conditional distribution P_i for one point at bandwidth sigma, plus its
/// entropy in bits. `dist` holds the kernel distances of row i.
fn conditional_row(dist: &[f64], i: usize, sigma: f64) -> (Vec<f64>, f64) {
    let n = dist.len();
    let beta = 1.0 / (2.0 * sigma * sigma);
    // subtract the min distance before exponentiating for stability
    let min_d = (0..n)
        .filter(|&j| j != i)
        .map(|j| dist[j])
        .fold(f64::INFINITY, f64::min);
    let mut p = vec![0.0; n];
    let mut sum = 0.0;
    for j in 0..n {
        if j == i {
            continue;
        }
        let v = (-(dist[j] - min_d) * beta).exp();
        p[j] = v;
        sum += v;
    }
    let mut entropy_bits = 0.0;
    for j in 0..n {
        if j == i {
            continue;
        }
        p[j] /= sum;
        if p[j] > 0.0 {
            entropy_bits -= p[j] * p[j].log2();
        }
    }
    (p, entropy_bits)
}

/// Binary-search each sigma_i so that 2^H(P_i) hits the target perplexity.
pub fn calibrate_sigmas(
    x: &DMatrix<f64>,
    perplexity: f64,
    kernel: KernelDistance,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {n}")));
    }
    // n-1 itself is attainable only for degenerate (equidistant) geometry;
    // elsewhere the bracket search reports a convergence failure
    if !(perplexity > 1.0 && perplexity <= (n - 1) as f64) {
        return Err(Error::Domain(format!(
            "perplexity must be in (1, {}], got {perplexity}",
            n - 1
        )));
    }
    let d = pairwise_distances(x, kernel);
    let target = perplexity.log2();
    let mut sigmas = Vec::with_capacity(n);
    for i in 0..n {
        let dist: Vec<f64> = d.row(i).iter().copied().collect();
        let entropy_at = |sigma: f64| conditional_row(&dist, i, sigma).1;

        // entropy is non-decreasing in sigma; expand until target is bracketed
        let mut lo = 1.0;
        let mut hi = 1.0;
        let mut steps = 0;
        while entropy_at(hi) < target - 1e-9 {
            hi *= 2.0;
            steps += 1;
            if steps > 200 || hi > 1e20 {
                return Err(Error::Convergence(format!(
                    "perplexity bracket not found (point {i}, upper)"
                )));
            }
        }
        steps = 0;
        while entropy_at(lo) > target + 1e-9 {
            lo /= 2.0;
            steps += 1;
            if steps > 200 || lo < 1e-20 {
                return Err(Error::Convergence(format!(
                    "perplexity bracket not found (point {i}, lower)"
                )));
            }
        }
        let mut sigma = 0.5 * (lo + hi);
        for _ in 0..200 {
            sigma = 0.5 * (lo + hi);
            let h = entropy_at(sigma);
            if (h - target).abs() < 1e-7 {
                break;
            }
            if h < target {
                lo = sigma;
            } else {
                hi = sigma;
            }
        }
        sigmas.push(sigma);
    }
    Ok(sigmas)
}

/// Row-normalized conditional affinities p_{j|i} at the given bandwidths.
pub fn conditional_affinities(
    x: &DMatrix<f64>,
    sigmas: &[f64],
    kernel: KernelDistance,
) -> AffinityMatrix {
    let n = x.nrows();
    let d = pairwise_distances(x, kernel);
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let dist: Vec<f64> = d.row(i).iter().copied().collect();
        let (row, _) = conditional_row(&dist, i, sigmas[i]);
        for j in 0..n {
            p[(i, j)] = row[j];
        }
    }
    AffinityMatrix {
        p,
        kind: AffinityKind::Conditional,
    }
}

/// Symmetrized joint affinities p_ij = (p_{i|j} + p_{j|i}) / 2n: zero
/// diagonal, total mass 1, every row sum above 1/2n.
pub fn joint_affinities(
    x: &DMatrix<f64>,
    perplexity: f64,
    kernel: KernelDistance,
) -> Result<AffinityMatrix> {
    let n = x.nrows();
    if n == 2 {
        // forced by normalization: the single pair carries all mass
        let mut p = DMatrix::<f64>::zeros(2, 2);
        p[(0, 1)] = 0.5;
        p[(1, 0)] = 0.5;
        return Ok(AffinityMatrix {
            p,
            kind: AffinityKind::Joint,
        });
    }
    let sigmas = calibrate_sigmas(x, perplexity, kernel)?;
    let cond = conditional_affinities(x, &sigmas, kernel);
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = (cond.p[(i, j)] + cond.p[(j, i)]) / (2.0 * n as f64);
        }
    }
    Ok(AffinityMatrix {
        p,
        kind: AffinityKind::Joint,
    })
}

/// Cauchy-kernel joint affinities of the low-dimensional map.
pub fn low_dim_affinities(y: &DMatrix<f64>) -> AffinityMatrix {
    let n = y.nrows();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for k in 0..y.ncols() {
                let diff = y[(i, k)] - y[(j, k)];
                sq += diff * diff;
            }
            let v = 1.0 / (1.0 + sq);
            q[(i, j)] = v;
            q[(j, i)] = v;
            total += 2.0 * v;
        }
    }
    for v in q.iter_mut() {
        *v /= total;
    }
    AffinityMatrix {
        p: q,
        kind: AffinityKind::Joint,
    }
}

/// KL(P || Q) in nats; terms with p_ij = 0 contribute nothing.
pub fn kl_divergence(p: &AffinityMatrix, q: &AffinityMatrix) -> Result<f64> {
    if p.p.shape() != q.p.shape() {
        return Err(Error::Shape("affinity shapes differ".into()));
    }
    let mut c = 0.0;
    for (pij, qij) in p.p.iter().zip(q.p.iter()) {
        if *pij > 0.0 {
            if *qij == 0.0 {
                return Err(Error::Domain("q = 0 where p > 0".into()));
            }
            c += pij * (pij / qij).ln();
        }
    }
    Ok(c)
}

/// Analytic gradient: dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1+||y_i-y_j||^2)^-1.
pub fn tsne_gradient(p: &AffinityMatrix, q: &AffinityMatrix, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let dim = y.ncols();
    let mut grad = DMatrix::<f64>::zeros(n, dim);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut sq = 0.0;
            for k in 0..dim {
                let diff = y[(i, k)] - y[(j, k)];
                sq += diff * diff;
            }
            let w = (p.p[(i, j)] - q.p[(i, j)]) / (1.0 + sq);
            for k in 0..dim {
                grad[(i, k)] += 4.0 * w * (y[(i, k)] - y[(j, k)]);
            }
        }
    }
    grad
}

/// Run the full optimization: calibrate affinities, initialize from
/// N(0, 1e-4 I), and descend the KL objective with momentum.
pub fn tsne_embed(x: &DMatrix<f64>, params: &TsneParams) -> Result<Embedding> {
    if params.iterations == 0 {
        return Err(Error::Domain("iterations must be at least 1".into()));
    }
    if !(params.learning_rate > 0.0) {
        return Err(Error::Domain("learning_rate must be positive".into()));
    }
    let n = x.nrows();
    let mut p = joint_affinities(x, params.perplexity.min((n - 1) as f64 - 1e-9), params.kernel_distance)?;
    let plain = p.clone();
    let exaggeration = params.early_exaggeration;
    if let Some((factor, _)) = exaggeration {
        for v in p.p.iter_mut() {
            *v *= factor;
        }
    }

    let mut rng = derive_rng(params.seed, &[0x7e5e]);
    let init = Normal::new(0.0, 1e-2).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut y = DMatrix::from_fn(n, params.target_dim, |_, _| init.sample(&mut rng));
    let mut y_prev = y.clone();
    let mut kl_trace = Vec::with_capacity(params.iterations);

    for t in 1..=params.iterations {
        if let Some((factor, until)) = exaggeration {
            if t == until + 1 && factor != 1.0 {
                p = plain.clone();
            }
        }
        let q = low_dim_affinities(&y);
        let kl = kl_divergence(&plain, &q)?;
        if !kl.is_finite() {
            return Err(Error::Numerical(format!("KL became non-finite at iteration {t}")));
        }
        kl_trace.push(kl);
        let grad = tsne_gradient(&p, &q, &y);
        let alpha = params.momentum.at(t);
        let next = &y - grad * params.learning_rate + (&y - &y_prev) * alpha;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "embedding became non-finite at iteration {t}"
            )));
        }
        y_prev = y;
        y = next;
    }
    let q = low_dim_affinities(&y);
    let final_kl = kl_divergence(&plain, &q)?;
    Ok(Embedding {
        y,
        final_kl,
        kl_trace,
    })
}

/// Assign each unlabeled point the label of its Euclidean nearest labeled
/// neighbor; ties resolved in favor of the lowest labeled index.
pub fn nn_classify<L: Clone>(
    y: &DMatrix<f64>,
    labeled: &[(usize, L)],
    unlabeled: &[usize],
) -> Result<Vec<L>> {
    if labeled.is_empty() {
        return Err(Error::Domain("labeled set is empty".into()));
    }
    let mut out = Vec::with_capacity(unlabeled.len());
    for &u in unlabeled {
        let mut best: Option<(f64, &L)> = None;
        for (idx, label) in labeled {
            let mut sq = 0.0;
            for k in 0..y.ncols() {
                let diff = y[(u, k)] - y[(*idx, k)];
                sq += diff * diff;
            }
            match &best {
                Some((d, _)) if sq >= *d => {}
                _ => best = Some((sq, label)),
            }
        }
        out.push(best.unwrap().1.clone());
    }
    Ok(out)
}
