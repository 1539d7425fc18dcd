//! Kernel-level properties: associativity, brute-force convolution
//! equivalence, roll/unroll inversion, generator reproducibility.

use proptest::prelude::*;
use ratekit::rng::SeededRng;
use ratekit::tensor::{conv2d_valid, matmul, roll, unroll, Tensor};

fn random_tensor(rng: &mut SeededRng, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap()
}

#[test]
fn matmul_is_associative() {
    for seed in 0..20 {
        let mut rng = SeededRng::new(seed);
        let a = random_tensor(&mut rng, vec![3, 4]);
        let b = random_tensor(&mut rng, vec![4, 5]);
        let c = random_tensor(&mut rng, vec![5, 2]);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (l, r) in left.data().iter().zip(right.data()) {
            assert!((l - r).abs() < 1e-10, "seed {seed}: {l} vs {r}");
        }
    }
}

/// Independent triple-loop convolution used as the oracle.
fn conv_oracle(input: &Tensor, filters: &Tensor) -> Tensor {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (f, k) = (filters.shape()[0], filters.shape()[3]);
    let (oh, ow) = (h - f + 1, w - f + 1);
    let mut out = vec![0.0; oh * ow * k];
    for i in 0..oh {
        for j in 0..ow {
            for kk in 0..k {
                let mut acc = 0.0;
                for u in 0..f {
                    for v in 0..f {
                        for cc in 0..c {
                            acc += input.at3(i + u, j + v, cc) * filters.at4(u, v, cc, kk);
                        }
                    }
                }
                out[(i * ow + j) * k + kk] = acc;
            }
        }
    }
    Tensor::new(vec![oh, ow, k], out).unwrap()
}

#[test]
fn conv_matches_brute_force_oracle() {
    for seed in 0..10 {
        let mut rng = SeededRng::new(100 + seed);
        let input = random_tensor(&mut rng, vec![6, 6, 2]);
        let filters = random_tensor(&mut rng, vec![3, 3, 2, 4]);
        let fast = conv2d_valid(&input, &filters).unwrap();
        let slow = conv_oracle(&input, &filters);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn all_ones_filter_is_the_windowed_sum() {
    let mut rng = SeededRng::new(7);
    let input = random_tensor(&mut rng, vec![6, 6, 2]);
    let filters = Tensor::new(vec![2, 2, 2, 1], vec![1.0; 8]).unwrap();
    let out = conv2d_valid(&input, &filters).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let mut acc = 0.0;
            for u in 0..2 {
                for v in 0..2 {
                    for c in 0..2 {
                        acc += input.at3(i + u, j + v, c);
                    }
                }
            }
            assert!((out.at3(i, j, 0) - acc).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn roll_inverts_unroll_for_all_small_shapes(
        h in 1usize..=8,
        w in 1usize..=8,
        c in 1usize..=4,
        seed in 0u64..1000,
    ) {
        let mut rng = SeededRng::new(seed);
        let t = random_tensor(&mut rng, vec![h, w, c]);
        let back = roll(&unroll(&t).unwrap(), [h, w, c]).unwrap();
        prop_assert_eq!(back, t);
    }
}

#[test]
fn rng_streams_are_reproducible() {
    let mut a = SeededRng::new(20240501);
    let mut b = SeededRng::new(20240501);
    let draws_a: Vec<u64> = (0..10_000).map(|_| a.next_u64()).collect();
    let draws_b: Vec<u64> = (0..10_000).map(|_| b.next_u64()).collect();
    assert_eq!(draws_a, draws_b);
}
