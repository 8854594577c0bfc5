//! Leverage scores and randomized row sampling: shows that the sampled
//! sketch estimates the Gram matrix without bias and that its error shrinks
//! like 1/sqrt(s) as the sample count grows.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use connectome_id::rng::derive_rng;
use connectome_id::sketch::{l2_row_probabilities, leverage_scores, row_sample};

fn main() {
    let mut rng = derive_rng(3, &[0]);
    let a = DMatrix::from_fn(200, 8, |_, _| StandardNormal.sample(&mut rng));

    let profile = leverage_scores(&a).unwrap();
    println!(
        "rank {}, leverage scores sum to {:.6}",
        profile.rank,
        profile.scores.iter().sum::<f64>()
    );
    let mut top: Vec<(usize, f64)> = profile.scores.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    println!("five most influential rows: {:?}", &top[..5]);

    let p = l2_row_probabilities(&a).unwrap();
    let gram = a.transpose() * &a;
    for &s in &[8usize, 32, 128, 512] {
        let mut errs: Vec<f64> = (0..200u64)
            .map(|seed| {
                let sk = row_sample(&a, s, &p, seed).unwrap();
                ((sk.rows.transpose() * &sk.rows) - &gram).norm()
            })
            .collect();
        errs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        println!(
            "s = {s:4}: median Gram estimation error {:.3} (expect halving per 4x)",
            errs[errs.len() / 2]
        );
    }
}
