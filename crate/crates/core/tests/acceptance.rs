//! End-to-end acceptance gate. Each test checks one headline property of the
//! toolkit at a pinned tolerance and prints a single PASS line; a failure
//! anywhere fails the gate.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use connectome_id::connectome::{build_group_matrix, correlation_matrix};
use connectome_id::ingest::{generate_synthetic_cohort, SynthConfig};
use connectome_id::matcher::identification_accuracy;
use connectome_id::regress::{
    fit_regressor, plant_linear_performance, predict, ridge_closed_form,
    run_performance_experiment, Loss, ModelConfig,
};
use connectome_id::rng::derive_rng;
use connectome_id::sketch::{l2_row_probabilities, leverage_scores, row_sample};
use connectome_id::tsne::{
    calibrate_sigmas, joint_affinities, kl_divergence, low_dim_affinities, tsne_gradient,
    AffinityMatrix, KernelDistance,
};
use connectome_id::pipeline::{run_experiment, ExperimentKind, ExperimentSpec};
use connectome_id::tsne::TsneParams;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = derive_rng(seed, &[0xacce]);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn experiment_spec(kind: ExperimentKind, synth: SynthConfig) -> ExperimentSpec {
    ExperimentSpec {
        kind,
        synth: Some(synth),
        synth_cases: None,
        manifest: None,
        top_features: 100,
        seeds: (0..20).collect(),
        noise_fractions: vec![0.10, 0.20, 0.30],
        tsne: None,
        regress: None,
        task: None,
        repeats: 100,
        labeled_fraction: 0.5,
        noise_repeats: 3,
    }
}

/// Leverage scores equal the diagonal of the projection onto the column
/// space, diag(A (A^T A)^-1 A^T), and sum to the rank.
#[test]
fn leverage_scores_match_projection_diagonal() {
    let start = Instant::now();
    for trial in 0..100u64 {
        let mut rng = derive_rng(trial, &[1]);
        let cols = rng.gen_range(2..=50);
        let rows = rng.gen_range(cols + 1..=500);
        let a = random_matrix(rows, cols, trial);

        let profile = leverage_scores(&a).unwrap();
        let gram = a.transpose() * &a;
        let proj = &a * gram.try_inverse().expect("full column rank") * a.transpose();
        let mut max_err: f64 = 0.0;
        for i in 0..rows {
            max_err = max_err.max((profile.scores[i] - proj[(i, i)]).abs());
        }
        assert!(max_err < 1e-8, "trial {trial}: max abs error {max_err}");
        let total: f64 = profile.scores.iter().sum();
        assert!(
            (total - profile.rank as f64).abs() < 1e-8,
            "trial {trial}: sum {total} vs rank {}",
            profile.rank
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS: leverage scores match projection diagonal on 100 matrices within 1e-8 ({elapsed:.2?})");
}

/// Row sampling is unbiased (E[sketch^T sketch] = A^T A) and its error decays
/// as 1/sqrt(s).
#[test]
fn row_sampling_unbiased_with_sqrt_s_error_decay() {
    let start = Instant::now();
    let a = random_matrix(30, 4, 99);
    let p = l2_row_probabilities(&a).unwrap();
    let gram = a.transpose() * &a;
    let s = 10;

    let draws = 10_000;
    let mut sums = DMatrix::<f64>::zeros(4, 4);
    let mut sq_sums = DMatrix::<f64>::zeros(4, 4);
    for draw in 0..draws {
        let sk = row_sample(&a, s, &p, draw as u64).unwrap();
        let g = sk.rows.transpose() * &sk.rows;
        sums += &g;
        sq_sums += g.component_mul(&g);
    }
    for i in 0..4 {
        for j in 0..4 {
            let mean = sums[(i, j)] / draws as f64;
            let var = sq_sums[(i, j)] / draws as f64 - mean * mean;
            let se = (var / draws as f64).sqrt();
            let dev = (mean - gram[(i, j)]).abs();
            assert!(
                dev <= 3.0 * se.max(1e-12),
                "entry ({i},{j}): deviation {dev} > 3 SE ({se})"
            );
        }
    }

    // error medians at s and 4s
    let median_err = |s: usize| {
        let mut errs: Vec<f64> = (0..2000u64)
            .map(|seed| {
                let sk = row_sample(&a, s, &p, 0x517 + seed).unwrap();
                ((sk.rows.transpose() * &sk.rows) - &gram).norm()
            })
            .collect();
        errs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        errs[errs.len() / 2]
    };
    let ratio = median_err(16) / median_err(64);
    assert!(
        (ratio - 2.0).abs() <= 0.5,
        "error ratio between s=16 and s=64 was {ratio}, expected 2 +/- 0.5"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("PASS: row sampling unbiased over 10000 draws, error scales as 1/sqrt(s) ({elapsed:.2?})");
}

fn kl_at(p: &AffinityMatrix, y: &DMatrix<f64>) -> f64 {
    kl_divergence(p, &low_dim_affinities(y)).unwrap()
}

/// The analytic embedding gradient matches central finite differences, and
/// bandwidth calibration hits the requested perplexity exactly.
#[test]
fn gradient_matches_finite_differences_and_perplexity_is_exact() {
    let start = Instant::now();
    for trial in 0..50u64 {
        let mut rng = derive_rng(trial, &[3]);
        let n = rng.gen_range(5..=20);
        let x = random_matrix(n, 4, 1000 + trial);
        let p = joint_affinities(&x, (n as f64 / 3.0).max(2.0), KernelDistance::Squared).unwrap();
        let y = random_matrix(n, 2, 2000 + trial) * 0.1;

        let grad = tsne_gradient(&p, &low_dim_affinities(&y), &y);
        let h = 1e-6;
        let mut max_rel: f64 = 0.0;
        for i in 0..n {
            for k in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[(i, k)] += h;
                ym[(i, k)] -= h;
                let fd = (kl_at(&p, &yp) - kl_at(&p, &ym)) / (2.0 * h);
                let denom = grad[(i, k)].abs().max(fd.abs()).max(1e-4);
                max_rel = max_rel.max((grad[(i, k)] - fd).abs() / denom);
            }
        }
        assert!(max_rel < 1e-5, "trial {trial}: relative error {max_rel}");
    }

    let x = random_matrix(60, 5, 77);
    let target = 17.5;
    let sigmas = calibrate_sigmas(&x, target, KernelDistance::Squared).unwrap();
    let p = connectome_id::tsne::conditional_affinities(&x, &sigmas, KernelDistance::Squared);
    for i in 0..60 {
        let mut entropy = 0.0;
        for j in 0..60 {
            let v = p.p[(i, j)];
            if v > 0.0 {
                entropy -= v * v.log2();
            }
        }
        let perp = 2f64.powf(entropy);
        assert!(
            (perp - target).abs() < 1e-3,
            "point {i}: perplexity {perp} vs target {target}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 20.0, "took {elapsed:?}");
    println!("PASS: embedding gradient matches finite differences (<1e-5), perplexity exact to 1e-3 ({elapsed:.2?})");
}

/// Rest-vs-rest identification exceeds 94% at the calibrated operating point
/// and collapses to chance when the subject signature is removed.
#[test]
fn identification_exceeds_94_percent_and_chance_without_signature() {
    let start = Instant::now();
    let base = SynthConfig {
        n_subjects: 50,
        n_regions: 60,
        n_timepoints: 200,
        n_tasks: 0,
        signature_strength: 0.5,
        task_strength: 0.0,
        noise_sigma: 1.0,
        seed: 0,
        shared_component_strength: 0.0,
        latent_factors: 5,
        tr_seconds: 0.72,
    };
    let accuracy_at = |sig: f64, seed: u64| {
        let cfg = SynthConfig {
            signature_strength: sig,
            seed,
            ..base.clone()
        };
        let cohort = generate_synthetic_cohort(&cfg).unwrap();
        let mk = |session| {
            let scans = cohort.session_scans("rest", session);
            let conns: Vec<_> = scans
                .iter()
                .map(|(_, ts)| correlation_matrix(ts).unwrap())
                .collect();
            let ids: Vec<String> = scans.iter().map(|(s, _)| s.to_string()).collect();
            build_group_matrix(&conns, &ids).unwrap()
        };
        let truth: Vec<usize> = (0..50).collect();
        identification_accuracy(&mk(1), &mk(2), 100, &truth).unwrap()
    };

    let hits = (0..20).filter(|&seed| accuracy_at(0.5, seed) >= 0.94).count();
    assert!(hits >= 18, "only {hits}/20 seeds reached 94% accuracy");

    // no signature -> matching is chance level (1/50), binomial 3-sigma band
    let chance_mean: f64 =
        (0..20).map(|seed| accuracy_at(0.0, 100 + seed)).sum::<f64>() / 20.0;
    let p = 1.0 / 50.0;
    let sigma = (p * (1.0 - p) / (20.0 * 50.0) as f64).sqrt();
    assert!(
        (chance_mean - p).abs() <= 3.0 * sigma,
        "chance-level mean {chance_mean} outside {p} +/- {}",
        3.0 * sigma
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "PASS: identification >= 0.94 in {hits}/20 seeds, chance level {chance_mean:.4} without signature ({elapsed:.2?})"
    );
}

/// Identification accuracy degrades monotonically as scanner noise grows,
/// with a clear gap between the 10% and 30% noise levels.
#[test]
fn accuracy_degrades_monotonically_with_scanner_noise() {
    let start = Instant::now();
    let synth = SynthConfig {
        n_subjects: 50,
        n_regions: 60,
        n_timepoints: 200,
        n_tasks: 0,
        signature_strength: 0.33,
        task_strength: 0.0,
        noise_sigma: 1.0,
        seed: 0,
        shared_component_strength: 0.0,
        latent_factors: 5,
        tr_seconds: 0.72,
    };
    let spec = experiment_spec(ExperimentKind::Multisite, synth);
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&spec, dir.path()).unwrap();
    let table: Vec<Vec<f64>> =
        serde_json::from_value(report.metrics["accuracy_table"].clone()).unwrap();
    assert_eq!(table.len(), 20);

    // columns: clean, 0.10, 0.20, 0.30; the trend check covers the fractions
    let monotone = table
        .iter()
        .filter(|row| row[1] >= row[2] && row[2] >= row[3])
        .count();
    assert!(monotone >= 18, "monotone in only {monotone}/20 seeds");
    let mean = |col: usize| table.iter().map(|r| r[col]).sum::<f64>() / table.len() as f64;
    let gap = mean(1) - mean(3);
    assert!(gap >= 0.05, "10%-vs-30% accuracy gap only {gap}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 180.0, "took {elapsed:?}");
    println!(
        "PASS: accuracy non-increasing in noise for {monotone}/20 seeds, 10%-30% gap {:.1} points ({elapsed:.2?})",
        gap * 100.0
    );
}

/// Nearest-neighbor condition labeling on the 2-D embedding of an
/// 8-condition cohort reaches 99% with half the scans labeled.
#[test]
fn embedding_classifies_eight_conditions_at_99_percent() {
    let start = Instant::now();
    let synth = SynthConfig {
        n_subjects: 15,
        n_regions: 30,
        n_timepoints: 150,
        n_tasks: 7,
        signature_strength: 0.5,
        task_strength: 1.5,
        noise_sigma: 1.0,
        seed: 0,
        shared_component_strength: 0.0,
        latent_factors: 5,
        tr_seconds: 0.72,
    };
    let mut spec = experiment_spec(ExperimentKind::TaskClustering, synth);
    spec.tsne = Some(TsneParams {
        perplexity: 12.0,
        iterations: 400,
        ..TsneParams::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&spec, dir.path()).unwrap();
    let mean: f64 = serde_json::from_value(report.metrics["accuracy_mean"].clone()).unwrap();
    assert!(mean >= 0.99, "mean classification accuracy {mean} < 0.99");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 180.0, "took {elapsed:?}");
    println!(
        "PASS: 8-condition nearest-neighbor classification mean accuracy {:.4} over 20 seeds ({elapsed:.2?})",
        mean
    );
}

/// A planted linear performance target is recovered below 4% test error, and
/// the iterative squared-loss solver agrees with the normal equations.
#[test]
fn planted_linear_target_recovered_below_4_percent() {
    let start = Instant::now();
    let cfg = SynthConfig {
        n_subjects: 200,
        n_regions: 30,
        n_timepoints: 200,
        n_tasks: 1,
        signature_strength: 1.0,
        task_strength: 0.5,
        noise_sigma: 0.5,
        seed: 11,
        shared_component_strength: 0.0,
        latent_factors: 5,
        tr_seconds: 0.72,
    };
    let mut cohort = generate_synthetic_cohort(&cfg).unwrap();
    plant_linear_performance(&mut cohort, "task1", 5, 0.02, 11).unwrap();
    let report = run_performance_experiment(
        &cohort,
        "task1",
        50,
        100,
        11,
        &ModelConfig::default(),
    )
    .unwrap();
    assert!(
        report.test_nrmse_mean < 4.0,
        "test nRMSE {} >= 4%",
        report.test_nrmse_mean
    );

    // iterative squared loss vs closed form on a small random instance
    let x = random_matrix(12, 80, 5);
    let mut rng = derive_rng(6, &[0]);
    let y: Vec<f64> = (0..80)
        .map(|k| x.column(k).iter().sum::<f64>() + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    let cfg_sq = ModelConfig {
        loss: Loss::Squared,
        regularization: 1e-2,
        ..ModelConfig::default()
    };
    let iter_model = fit_regressor(&x, &y, &cfg_sq).unwrap();
    let closed = ridge_closed_form(&x, &y, 1e-2).unwrap();
    let obj = |m: &connectome_id::regress::RegressionModel| {
        let preds = predict(m, &x).unwrap();
        let mse: f64 = preds
            .iter()
            .zip(&y)
            .map(|(p, t)| 0.5 * (p - t).powi(2))
            .sum::<f64>()
            / 80.0;
        mse
    };
    let diff = (obj(&iter_model) - obj(&closed)).abs();
    assert!(diff < 1e-6, "objective gap {diff} between solvers");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "PASS: planted linear target test nRMSE {:.2}% (< 4%), solver agreement {diff:.2e} ({elapsed:.2?})",
        report.test_nrmse_mean
    );
}

/// The command-line pipeline is deterministic: identical reruns produce
/// byte-identical reports and artifacts, and the binary matrix format round
/// trips bit-exactly.
#[test]
fn cli_reruns_are_bit_identical_and_binary_roundtrip_is_exact() {
    use std::process::Command;
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_connectome-id");
    let dir = tempfile::tempdir().unwrap();

    let spec = serde_json::json!({
        "kind": "rest_vs_rest",
        "synth": {
            "n_subjects": 10,
            "n_regions": 20,
            "n_timepoints": 80,
            "signature_strength": 0.6,
            "noise_sigma": 1.0,
            "seed": 0
        },
        "top_features": 50,
        "seeds": [3, 4]
    });
    let cfg_path = dir.path().join("spec.json");
    std::fs::write(&cfg_path, serde_json::to_string(&spec).unwrap()).unwrap();

    let run = |out: &std::path::Path| {
        let status = Command::new(bin)
            .args([
                "match",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run(&out1);
    run(&out2);
    for name in ["report.json", "similarity.csv", "similarity.pgm", "run_manifest.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }

    // binary matrix round trip is bit-exact
    let m = random_matrix(17, 9, 42);
    let path = dir.path().join("m.bin");
    connectome_id::ingest::save_matrix(&m, &path, connectome_id::ingest::MatrixFormat::Binary)
        .unwrap();
    let back =
        connectome_id::ingest::load_matrix(&path, connectome_id::ingest::MatrixFormat::Binary)
            .unwrap();
    assert_eq!(m.nrows(), back.nrows());
    assert_eq!(m.ncols(), back.ncols());
    for (a, b) in m.iter().zip(back.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let elapsed = start.elapsed();
    println!("PASS: CLI reruns bit-identical, binary matrix round trip bit-exact ({elapsed:.2?})");
}
