//! Cholesky posterior against a dense-inverse oracle.

mod common;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dense_posterior, random_problem};

#[test]
fn cholesky_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let n = rng.random_range(1..=50);
        let p = random_problem(5, 3, n, &mut rng);
        let post = p.fit(false);
        for _ in 0..5 {
            let z = p.random_input(&mut rng);
            let (m, v) = post.mean_var(&z).unwrap();
            let (dm, dv) = dense_posterior(&p, &z);
            assert!((m - dm).abs() < 1e-8, "mean {m} vs {dm}");
            assert!((v - dv.max(0.0)).abs() < 1e-8, "var {v} vs {dv}");
        }
    }
}

#[test]
fn standardised_fit_is_an_affine_map_of_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let n = rng.random_range(2..=30);
        let mut p = random_problem(4, 2, n, &mut rng);
        let post = p.fit(true);
        let (mu, sd) = post.target_transform();
        // Oracle on standardised targets, mapped back by hand.
        let ys: Vec<f64> = p.buffer.targets().iter().map(|y| (y - mu) / sd).collect();
        let inputs = p.buffer.inputs().to_vec();
        p.buffer = mfbo::gp::ObservationBuffer::new();
        for (z, y) in inputs.into_iter().zip(ys) {
            p.buffer.push(z, y);
        }
        let z = p.random_input(&mut rng);
        let (m, v) = post.mean_var(&z).unwrap();
        let (dm, dv) = dense_posterior(&p, &z);
        assert!((m - (mu + sd * dm)).abs() < 1e-8);
        assert!((v - sd * sd * dv.max(0.0)).abs() < 1e-8);
    }
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..=20);
        let p = random_problem(5, 3, n, &mut rng);
        let k = p.kernel.gram(p.buffer.inputs()).unwrap();
        let min = SymmetricEigen::new(k).eigenvalues.min();
        assert!(min >= -1e-8, "min eigenvalue {min}");
    }
}
