//! PCA identities and optimality, checked against brute-force oracles.

use proptest::prelude::*;
use ratekit::dimred::{jacobi_eigen, pca_fit, pca_reconstruction_error, reconstruction_error};
use ratekit::rng::SeededRng;
use ratekit::tensor::Tensor;

fn random_data(seed: u64, n: usize, p: usize) -> Tensor {
    let mut rng = SeededRng::new(seed);
    // Correlated columns so the spectrum is uneven.
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let base = rng.next_gaussian();
            (0..p).map(|j| base * (1.0 / (j + 1) as f64) + 0.5 * rng.next_gaussian()).collect()
        })
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

#[test]
fn components_are_orthonormal() {
    for seed in 0..10 {
        let x = random_data(seed, 40, 6);
        let model = pca_fit(&x, 4).unwrap();
        let c = &model.components;
        for a in 0..4 {
            for b in 0..4 {
                let mut dot = 0.0;
                for r in 0..6 {
                    dot += c.at2(r, a) * c.at2(r, b);
                }
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "seed {seed} entry ({a},{b}): {dot}");
            }
        }
    }
}

#[test]
fn eigenvalues_non_increasing_and_non_negative() {
    for seed in 0..10 {
        let x = random_data(100 + seed, 30, 5);
        let model = pca_fit(&x, 5).unwrap();
        for pair in model.eigenvalues.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
        assert!(model.eigenvalues.iter().all(|&v| v >= -1e-10));
    }
}

#[test]
fn reconstruction_error_matches_discarded_eigenvalue_mass() {
    // With the population covariance convention, the dataset reconstruction
    // error of a truncated basis is exactly n * sum of discarded eigenvalues.
    let n = 100;
    let x = random_data(7, n, 10);
    let full = pca_fit(&x, 10).unwrap();
    for l in 1..10 {
        let model = pca_fit(&x, l).unwrap();
        let err = pca_reconstruction_error(&model, &x).unwrap();
        let discarded: f64 = full.eigenvalues[l..].iter().sum();
        let expected = n as f64 * discarded;
        assert!(
            (err - expected).abs() <= 1e-6 * expected.max(1e-12),
            "l = {l}: {err} vs {expected}"
        );
    }
}

#[test]
fn full_basis_error_vanishes() {
    let x = random_data(11, 100, 10);
    let model = pca_fit(&x, 10).unwrap();
    let err = pca_reconstruction_error(&model, &x).unwrap();
    assert!(err <= 1e-10, "error {err}");
}

#[test]
fn encode_decode_is_identity_on_the_component_span() {
    let x = random_data(21, 40, 6);
    let model = pca_fit(&x, 3).unwrap();
    // A point built inside the span: mean + combination of components.
    let mut probe = model.mean.clone();
    for (c, weight) in [(0usize, 1.3), (1, -0.4), (2, 2.2)] {
        for r in 0..6 {
            probe[r] += weight * model.components.at2(r, c);
        }
    }
    let rebuilt = model.decode(&model.encode(&probe).unwrap()).unwrap();
    for (a, b) in probe.iter().zip(&rebuilt) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn reconstruction_error_equals_the_direct_double_loop() {
    let x = random_data(22, 30, 5);
    let model = pca_fit(&x, 2).unwrap();
    let fast = pca_reconstruction_error(&model, &x).unwrap();
    let mut manual = 0.0;
    for i in 0..30 {
        let row = x.row(i);
        let rebuilt = model.decode(&model.encode(row).unwrap()).unwrap();
        for j in 0..5 {
            manual += (rebuilt[j] - row[j]) * (rebuilt[j] - row[j]);
        }
    }
    // Same arithmetic up to summation order.
    assert!((fast - manual).abs() <= 1e-12 * manual.max(1.0), "{fast} vs {manual}");
}

#[test]
fn pca_beats_random_orthonormal_frames() {
    let x = random_data(13, 50, 8);
    let mut rng = SeededRng::new(99);
    for l in 1..=8 {
        let model = pca_fit(&x, l).unwrap();
        let pca_err = pca_reconstruction_error(&model, &x).unwrap();
        let mean: Vec<f64> = model.mean.clone();
        for trial in 0..100 {
            let frame = random_orthonormal_frame(&mut rng, 8, l);
            let err = reconstruction_error(
                |row| {
                    // frame^T (x - mean)
                    Ok((0..l)
                        .map(|c| {
                            row.iter()
                                .zip(&mean)
                                .enumerate()
                                .map(|(r, (x, m))| frame[r * l + c] * (x - m))
                                .sum()
                        })
                        .collect())
                },
                |z| {
                    Ok((0..8)
                        .map(|r| mean[r] + (0..l).map(|c| frame[r * l + c] * z[c]).sum::<f64>())
                        .collect())
                },
                &x,
            )
            .unwrap();
            assert!(
                pca_err <= err + 1e-9,
                "l = {l}, trial {trial}: random frame error {err} beat PCA {pca_err}"
            );
        }
    }
}

/// Gram-Schmidt on gaussian draws: a uniformly random orthonormal p x l frame
/// (column-major entries at `r * l + c`).
fn random_orthonormal_frame(rng: &mut SeededRng, p: usize, l: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(l);
    while cols.len() < l {
        let mut v: Vec<f64> = (0..p).map(|_| rng.next_gaussian()).collect();
        for u in &cols {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= d * ui;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for vi in &mut v {
                *vi /= norm;
            }
            cols.push(v);
        }
    }
    let mut frame = vec![0.0; p * l];
    for (c, col) in cols.iter().enumerate() {
        for r in 0..p {
            frame[r * l + c] = col[r];
        }
    }
    frame
}

#[test]
fn jacobi_off_diagonal_norm_below_threshold() {
    for seed in 0..10 {
        let mut rng = SeededRng::new(300 + seed);
        let p = 6;
        // Random symmetric matrix with entries in [-1, 1].
        let mut m = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let v = rng.uniform(-1.0, 1.0);
                m[i * p + j] = v;
                m[j * p + i] = v;
            }
        }
        let matrix = Tensor::new(vec![p, p], m.clone()).unwrap();
        let (eigenvalues, vectors) = jacobi_eigen(&matrix).unwrap();
        // Residual off-diagonal mass of V^T A V.
        let mut off = 0.0;
        for a in 0..p {
            for b in 0..p {
                if a == b {
                    continue;
                }
                let mut acc = 0.0;
                for r in 0..p {
                    for s in 0..p {
                        acc += vectors.at2(r, a) * m[r * p + s] * vectors.at2(s, b);
                    }
                }
                off += acc * acc;
            }
        }
        assert!(off.sqrt() < 1e-12, "seed {seed}: off-diagonal norm {}", off.sqrt());
        // And A v = lambda v for every pair.
        for c in 0..p {
            for r in 0..p {
                let av: f64 = (0..p).map(|s| m[r * p + s] * vectors.at2(s, c)).sum();
                assert!((av - eigenvalues[c] * vectors.at2(r, c)).abs() < 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn orthonormality_holds_over_random_datasets(seed in 0u64..10_000, l in 1usize..=5) {
        let x = random_data(seed, 25, 5);
        let model = pca_fit(&x, l).unwrap();
        for a in 0..l {
            for b in 0..l {
                let mut dot = 0.0;
                for r in 0..5 {
                    dot += model.components.at2(r, a) * model.components.at2(r, b);
                }
                let expected = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - expected).abs() < 1e-8);
            }
        }
    }
}
