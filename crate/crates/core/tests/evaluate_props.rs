//! Evaluation-stage oracles: neighbor rankings against an independent scan,
//! and extrinsic deviance deltas on planted and pure-noise features.

use ratekit::embedding::EmbeddingTable;
use ratekit::evaluate::{extrinsic_compare, nearest_neighbors, SplitSpec};
use ratekit::glm::{FamilyKind, GlmFamily};
use ratekit::rng::SeededRng;

fn random_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = SeededRng::new(seed);
    let mut table = EmbeddingTable::new(dim).unwrap();
    for i in 0..n {
        table
            .insert(format!("v{i:02}"), (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .unwrap();
    }
    table
}

/// Full-scan oracle with its own cosine, sorted the same way.
fn oracle_neighbors(table: &EmbeddingTable, query: &str, k: usize) -> Vec<(String, f64)> {
    let q = table.get(query).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut all: Vec<(String, f64)> = table
        .iter()
        .filter(|(id, _)| *id != query)
        .map(|(id, row)| {
            let c = row.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (norm(row) * norm(q));
            (id.to_owned(), c)
        })
        .collect();
    all.sort_by(|(_, a), (_, b)| b.partial_cmp(a).unwrap());
    all.truncate(k);
    all
}

#[test]
fn neighbor_rankings_match_the_full_scan_oracle() {
    for seed in 0..10 {
        let table = random_table(25, 6, seed);
        let query = format!("v{:02}", seed % 25);
        for k in [1usize, 5, 24] {
            let report = nearest_neighbors(&table, &query, k).unwrap();
            let oracle = oracle_neighbors(&table, &query, k);
            assert_eq!(report.neighbors.len(), oracle.len());
            for ((id_a, c_a), (id_b, c_b)) in report.neighbors.iter().zip(&oracle) {
                assert_eq!(id_a, id_b, "seed {seed} k {k}");
                assert!((c_a - c_b).abs() < 1e-12);
            }
        }
    }
}

/// Poisson data whose log-mean rides on a 1-D latent factor observed through
/// noisy collinear columns: the latent is recoverable by PCA.
fn latent_factor_data(
    n: usize,
    p: usize,
    noise: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = SeededRng::new(seed);
    let direction: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut xs = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.next_gaussian();
        factors.push(t);
        xs.push(
            direction
                .iter()
                .map(|d| d * t + noise * rng.next_gaussian())
                .collect::<Vec<f64>>(),
        );
    }
    let ys: Vec<f64> = factors
        .iter()
        .map(|t| rng.next_poisson((0.2 + 0.6 * t).exp()) as f64)
        .collect();
    let pca = ratekit::dimred::pca_fit(&ratekit::tensor::Tensor::from_rows(&xs).unwrap(), 2).unwrap();
    let scores: Vec<Vec<f64>> = xs.iter().map(|r| pca.encode(r).unwrap()).collect();
    (xs, ys, scores)
}

#[test]
fn planted_latent_factor_gives_positive_delta() {
    let (xs, ys, scores) = latent_factor_data(600, 12, 1.5, 19);
    let split = SplitSpec { train_fraction: 0.6, seed: 4, folds: None };
    let report = extrinsic_compare(
        &[(String::from("raw"), xs)],
        &[(String::from("pca"), scores)],
        &ys,
        GlmFamily::canonical(FamilyKind::Poisson),
        &split,
    )
    .unwrap();
    assert!(report.delta > 0.0, "delta {}", report.delta);
}

#[test]
fn pure_noise_extra_column_moves_deviance_only_slightly() {
    let mut rng = SeededRng::new(6);
    let n = 400;
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| rng.next_poisson((0.5 + 0.7 * x[0]).exp()) as f64)
        .collect();
    let noise: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.next_gaussian()]).collect();
    let split = SplitSpec { train_fraction: 0.7, seed: 12, folds: None };
    let report = extrinsic_compare(
        &[(String::from("x"), xs.clone())],
        &[(String::from("x"), xs), (String::from("noise"), noise)],
        &ys,
        GlmFamily::canonical(FamilyKind::Poisson),
        &split,
    )
    .unwrap();
    // The sign is unconstrained; the magnitude must stay small next to the
    // baseline deviance.
    assert!(
        report.delta.abs() < 0.05 * report.baseline,
        "delta {} vs baseline {}",
        report.delta,
        report.baseline
    );
}

#[test]
fn kfold_reports_one_result_per_fold() {
    let (xs, ys, scores) = latent_factor_data(200, 6, 1.0, 23);
    let split = SplitSpec { train_fraction: 0.8, seed: 2, folds: Some(4) };
    let report = extrinsic_compare(
        &[(String::from("raw"), xs)],
        &[(String::from("pca"), scores)],
        &ys,
        GlmFamily::canonical(FamilyKind::Poisson),
        &split,
    )
    .unwrap();
    assert_eq!(report.folds.len(), 4);
    let sum: f64 = report.folds.iter().map(|f| f.baseline).sum();
    assert!((sum - report.baseline).abs() < 1e-9);
}

#[test]
fn supervised_hidden_layer_embedding_reduces_holdout_deviance() {
    use ratekit::nn::{sgd_train, Activation, Layer, Loss, Network, TrainConfig};
    use ratekit::tensor::Tensor;

    // Nonlinear response a linear model cannot represent.
    let mut rng = SeededRng::new(42);
    let n = 400;
    let xs: Vec<Vec<f64>> =
        (0..n).map(|_| vec![rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| x[0] * x[0] + (2.0 * x[1]).sin() * x[0] + 0.1 * rng.next_gaussian())
        .collect();
    let inputs: Vec<Tensor> = xs.iter().map(|x| Tensor::from_vec(x.clone()).unwrap()).collect();
    let targets: Vec<Tensor> = ys.iter().map(|y| Tensor::from_vec(vec![*y]).unwrap()).collect();

    // Supervised net; the last hidden layer becomes the representation.
    let mut init = SeededRng::new(7);
    let net = Network::new(
        vec![2],
        vec![
            Layer::dense(2, 16, Activation::Tanh, &mut init).unwrap(),
            Layer::dense(16, 8, Activation::Tanh, &mut init).unwrap(),
            Layer::dense(8, 1, Activation::Identity, &mut init).unwrap(),
        ],
        Loss::SquaredError,
    )
    .unwrap();
    let cfg = TrainConfig::new(0.02, 300, 10, 3).unwrap();
    let (trained, _) = sgd_train(&net, &inputs, &targets, &cfg).unwrap();
    let embeddings: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| trained.extract_embedding(1, x).unwrap().data().to_vec())
        .collect();

    let split = SplitSpec { train_fraction: 0.7, seed: 9, folds: None };
    let report = extrinsic_compare(
        &[(String::from("raw"), xs)],
        &[(String::from("embed"), embeddings)],
        &ys,
        GlmFamily::canonical(FamilyKind::Gaussian),
        &split,
    )
    .unwrap();
    assert!(
        report.delta > 0.0,
        "baseline {} vs embedding {}",
        report.baseline,
        report.augmented
    );
}

#[test]
fn failures_name_the_model_that_failed() {
    // Augmented blocks with a duplicated (rank-deficient) column must fail
    // and say it was the augmented model.
    let mut rng = SeededRng::new(3);
    let n = 60;
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x[0] + 0.01 * rng.next_gaussian()).collect();
    let split = SplitSpec { train_fraction: 0.7, seed: 1, folds: None };
    let err = extrinsic_compare(
        &[(String::from("x"), xs.clone())],
        &[(String::from("x"), xs.clone()), (String::from("dup"), xs)],
        &ys,
        GlmFamily::canonical(FamilyKind::Gaussian),
        &split,
    )
    .unwrap_err();
    assert!(err.to_string().contains("augmented"), "{err}");
}
