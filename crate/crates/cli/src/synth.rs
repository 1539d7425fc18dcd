//! Synthetic dataset generators. Each one plants a recoverable structure and
//! is a pure function of its parameters and seed, so generated files are
//! byte-stable across runs.

use std::path::Path;

use ratekit::geo::{GeoPoint, GeoPointSet};
use ratekit::pnm::write_pnm;
use ratekit::rng::SeededRng;
use ratekit::sequence::{write_sequences, Sequence};
use ratekit::serial::fmt_f64;
use ratekit::tensor::Tensor;
use ratekit::Result;

use crate::tabular::Table;

/// Tabular rows whose Poisson response rides on a 1-D latent factor.
///
/// Planted structure: a latent `t ~ N(0,1)` per row is observed through `p`
/// noisy collinear columns `x_j = w_j t + noise * eps` (`w` alternates +/-1),
/// and `y ~ Poisson(exp(0.2 + 0.6 t))`. The latent direction is the top
/// principal component of the features by construction, so a low-dimensional
/// PCA code recovers the signal that the raw noisy columns blur.
pub fn tabular_latent(n: usize, p: usize, noise: f64, seed: u64) -> Result<Table> {
    let mut rng = SeededRng::new(seed);
    let mut ids = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.next_gaussian();
        let mut row: Vec<f64> = (0..p)
            .map(|j| {
                let w = if j % 2 == 0 { 1.0 } else { -1.0 };
                w * t + noise * rng.next_gaussian()
            })
            .collect();
        let y = rng.next_poisson((0.2 + 0.6 * t).exp()) as f64;
        row.push(y);
        ids.push(format!("r{i:05}"));
        rows.push(row);
    }
    let mut columns: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
    columns.push("y".into());
    Table::new(ids, columns, rows)
}

/// Variable-length sequences labeled 1 iff a marker step occurs anywhere.
///
/// Planted structure: background steps are uniform in [0, 0.5) per component;
/// a positive sequence has one step whose leading component is spiked to 3.0.
pub fn marker_sequences(n: usize, dim: usize, max_len: usize, seed: u64) -> Vec<(Sequence, Option<f64>)> {
    let mut rng = SeededRng::new(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let len = 3 + rng.next_index(max_len.saturating_sub(2).max(1));
        let mut steps: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..dim).map(|_| rng.uniform(0.0, 0.5)).collect())
            .collect();
        let label = f64::from(rng.next_f64() < 0.5);
        if label == 1.0 {
            let at = rng.next_index(len);
            steps[at][0] = 3.0;
        }
        records.push((Sequence::new(steps).expect("generated steps are valid"), Some(label)));
    }
    records
}

pub fn marker_sequences_text(n: usize, dim: usize, max_len: usize, seed: u64) -> String {
    write_sequences(&marker_sequences(n, dim, max_len, seed))
}

/// Documents drawn from two disjoint token clusters.
///
/// Planted structure: tokens `a0..a<k>` and `b0..b<k>` are interchangeable
/// within their cluster and the clusters never co-occur in a document, so a
/// useful word embedding must pull each cluster together.
pub fn cluster_corpus(tokens_per_cluster: usize, docs: usize, seed: u64) -> String {
    let mut rng = SeededRng::new(seed);
    let mut out = String::new();
    for _ in 0..docs {
        let cluster = if rng.next_f64() < 0.5 { "a" } else { "b" };
        let len = 6 + rng.next_index(5);
        let words: Vec<String> =
            (0..len).map(|_| format!("{cluster}{}", rng.next_index(tokens_per_cluster))).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

/// One 16x16 grayscale image with a bright axis-aligned square on a dark
/// background (side 4..=6, intensity 0.9 on 0.1).
fn square_image(rng: &mut SeededRng) -> Tensor {
    let mut data = vec![0.1; 16 * 16];
    let size = 4 + rng.next_index(3);
    let top = rng.next_index(16 - size);
    let left = rng.next_index(16 - size);
    for i in top..top + size {
        for j in left..left + size {
            data[i * 16 + j] = 0.9;
        }
    }
    Tensor::new(vec![16, 16, 1], data).expect("generated image is valid")
}

pub fn square_images(count: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| square_image(&mut rng)).collect()
}

/// Writes `count` bright-square images as `img_<i>.pgm` files under `dir`.
pub fn write_square_images(dir: &Path, count: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, img) in square_images(count, seed).iter().enumerate() {
        let text = write_pnm(img, 255)?;
        std::fs::write(dir.join(format!("img_{i:04}.pgm")), text)?;
    }
    Ok(())
}

/// Geo-located points with a smooth planted feature field.
///
/// Planted structure: `n` points uniform in the unit square carry `p`
/// features `f_j(x, y) = sin(a_j x + b_j y + phi_j) + noise * eps` with fixed
/// low frequencies per feature, so nearby points have similar underlying
/// features while the additive noise perturbs each point independently.
pub fn smooth_geo_field(n: usize, p: usize, noise: f64, seed: u64) -> Result<GeoPointSet> {
    let mut rng = SeededRng::new(seed);
    let freqs: Vec<(f64, f64, f64)> = (0..p)
        .map(|j| {
            let a = 2.0 + (j % 3) as f64 * 1.5;
            let b = 2.5 + (j % 4) as f64;
            let phase = j as f64 * 0.7;
            (a, b, phase)
        })
        .collect();
    let points: Vec<GeoPoint> = (0..n)
        .map(|i| {
            let x = rng.next_f64();
            let y = rng.next_f64();
            let features = freqs
                .iter()
                .map(|(a, b, phase)| (a * x + b * y + phase).sin() + noise * rng.next_gaussian())
                .collect();
            GeoPoint { id: format!("g{i:05}"), x, y, features }
        })
        .collect();
    GeoPointSet::new(points, (0..p).map(|j| format!("f{j}")).collect())
}

/// Key:value description of a generator invocation, embedded next to the
/// dataset for provenance.
pub fn describe(kind: &str, params: &[(&str, String)]) -> String {
    let mut out = format!("generator: {kind}\n");
    for (k, v) in params {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

pub fn format_param(v: f64) -> String {
    fmt_f64(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabular_latent_shape_and_determinism() {
        let t1 = tabular_latent(50, 4, 0.5, 9).unwrap();
        let t2 = tabular_latent(50, 4, 0.5, 9).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.n_rows(), 50);
        assert_eq!(t1.columns.last().unwrap(), "y");
        assert_eq!(t1.columns.len(), 5);
        // Poisson responses are non-negative counts.
        let y_idx = t1.column_index("y").unwrap();
        assert!(t1.column(y_idx).iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn smooth_geo_field_shape() {
        let pts = smooth_geo_field(500, 4, 0.3, 3).unwrap();
        assert_eq!(pts.points().len(), 500);
        assert_eq!(pts.feature_dim(), 4);
        let again = smooth_geo_field(500, 4, 0.3, 3).unwrap();
        assert_eq!(pts, again);
    }

    #[test]
    fn marker_sequences_have_labels_and_bounded_len() {
        let records = marker_sequences(30, 3, 10, 1);
        for (seq, label) in &records {
            assert!(seq.len() >= 3 && seq.len() <= 10);
            assert!(matches!(label, Some(l) if *l == 0.0 || *l == 1.0));
            let has_marker = seq.steps().iter().any(|s| s[0] == 3.0);
            assert_eq!(has_marker, label.unwrap() == 1.0);
        }
    }

    #[test]
    fn cluster_corpus_never_mixes_clusters() {
        let text = cluster_corpus(10, 100, 7);
        for line in text.lines() {
            let a = line.split_whitespace().filter(|t| t.starts_with('a')).count();
            let b = line.split_whitespace().filter(|t| t.starts_with('b')).count();
            assert!(a == 0 || b == 0, "mixed doc: {line}");
        }
    }
}
