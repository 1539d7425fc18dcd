//! Intrinsic and extrinsic evaluation of embeddings.
//!
//! Intrinsic: cosine similarity between vectors and nearest-neighbor reports.
//! The value reported is `u.v / (|u||v|)` — larger means closer; zero vectors
//! are rejected rather than silently scored 0, since a zero embedding almost
//! always marks an upstream bug.
//!
//! Extrinsic: fit a baseline GLM and an embedding-augmented GLM on a seeded
//! train split and compare holdout deviances.

use std::fmt::Write as _;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::glm::{assemble_features, deviance, glm_fit, GlmFamily};
use crate::rng::SeededRng;
use crate::serial::fmt_f64;

/// Cosine similarity of two equal-length nonzero vectors, in [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("cosine of lengths {} and {}", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::domain("cosine of a zero-norm vector"));
    }
    Ok(crate::tensor::dot(u, v) / (nu * nv))
}

/// Ranked cosine neighbors of one query embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicReport {
    pub query: String,
    /// `(neighbor id, cosine)` sorted by descending cosine; ties keep table order.
    pub neighbors: Vec<(String, f64)>,
}

impl IntrinsicReport {
    pub fn to_report_text(&self) -> String {
        let mut out = format!("nearest neighbors of {}\n", self.query);
        for (id, value) in &self.neighbors {
            let _ = writeln!(out, "{id:<24} cosine {value:+.6}");
        }
        out
    }

    /// Line-oriented `key: value` form for machine consumption.
    pub fn to_kv(&self) -> String {
        let mut out = format!("query: {}\n", self.query);
        for (i, (id, value)) in self.neighbors.iter().enumerate() {
            let _ = writeln!(out, "neighbor.{i}: {id} {}", fmt_f64(*value));
        }
        out
    }
}

/// Top-`k` cosine neighbors of `query_id`, excluding the query itself.
/// Exhaustive scan; ties keep the table's id order.
pub fn nearest_neighbors(table: &EmbeddingTable, query_id: &str, k: usize) -> Result<IntrinsicReport> {
    let query = table
        .get(query_id)
        .ok_or_else(|| Error::argument(format!("unknown embedding id {query_id:?}")))?;
    if k >= table.len() {
        return Err(Error::argument(format!(
            "k = {k} must be smaller than the table size {}",
            table.len()
        )));
    }
    let mut scored: Vec<(String, f64)> = Vec::with_capacity(table.len() - 1);
    for (id, row) in table.iter() {
        if id == query_id {
            continue;
        }
        let value = cosine(query, row)
            .map_err(|e| Error::domain(format!("embedding {id:?} or {query_id:?}: {e}")))?;
        scored.push((id.to_owned(), value));
    }
    // Stable sort keeps insertion order on exact ties.
    scored.sort_by(|(_, a), (_, b)| b.partial_cmp(a).unwrap());
    scored.truncate(k);
    Ok(IntrinsicReport { query: query_id.to_owned(), neighbors: scored })
}

/// How to split rows for the extrinsic comparison: a single seeded holdout,
/// or `folds`-fold cross-validation when set.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub folds: Option<usize>,
}

/// Holdout deviances of one fold.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub baseline: f64,
    pub augmented: f64,
}

/// Outcome of the extrinsic comparison. `delta = baseline - augmented`, so a
/// positive delta means the augmented features predicted better.
#[derive(Debug, Clone)]
pub struct ExtrinsicReport {
    pub baseline: f64,
    pub augmented: f64,
    pub delta: f64,
    pub folds: Vec<FoldResult>,
}

impl ExtrinsicReport {
    pub fn to_report_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline holdout deviance:  {:.6}", self.baseline);
        let _ = writeln!(out, "augmented holdout deviance: {:.6}", self.augmented);
        let _ = writeln!(out, "delta (baseline - augmented): {:.6}", self.delta);
        if self.folds.len() > 1 {
            for (i, fold) in self.folds.iter().enumerate() {
                let _ = writeln!(out, "fold {i}: baseline {:.6} augmented {:.6}", fold.baseline, fold.augmented);
            }
        }
        out
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline: {}", fmt_f64(self.baseline));
        let _ = writeln!(out, "augmented: {}", fmt_f64(self.augmented));
        let _ = writeln!(out, "delta: {}", fmt_f64(self.delta));
        for (i, fold) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "fold.{i}: {} {}", fmt_f64(fold.baseline), fmt_f64(fold.augmented));
        }
        out
    }
}

type Blocks = [(String, Vec<Vec<f64>>)];

fn subset_blocks(blocks: &Blocks, rows: &[usize]) -> Vec<(String, Vec<Vec<f64>>)> {
    blocks
        .iter()
        .map(|(name, data)| (name.clone(), rows.iter().map(|&r| data[r].clone()).collect()))
        .collect()
}

fn fit_and_score(
    label: &str,
    blocks: &Blocks,
    train: &[usize],
    test: &[usize],
    y: &[f64],
    family: GlmFamily,
) -> Result<f64> {
    let y_train: Vec<f64> = train.iter().map(|&r| y[r]).collect();
    let y_test: Vec<f64> = test.iter().map(|&r| y[r]).collect();
    let design_train = assemble_features(train.len(), &subset_blocks(blocks, train))?;
    let design_test = assemble_features(test.len(), &subset_blocks(blocks, test))?;
    let model = glm_fit(&design_train, &y_train, family, None)
        .map_err(|e| Error::argument(format!("{label} model failed: {e}")))?;
    deviance(&model, &design_test, &y_test, None)
        .map_err(|e| Error::argument(format!("{label} model failed: {e}")))
}

/// Fits baseline and augmented GLMs on the train split and reports their
/// holdout deviances. With `folds` set, every row is scored exactly once as
/// holdout and the reported deviances are sums over folds.
pub fn extrinsic_compare(
    base_blocks: &Blocks,
    augmented_blocks: &Blocks,
    y: &[f64],
    family: GlmFamily,
    split: &SplitSpec,
) -> Result<ExtrinsicReport> {
    let n = y.len();
    if n < 4 {
        return Err(Error::argument("extrinsic comparison needs at least 4 rows"));
    }
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
        return Err(Error::argument(format!(
            "train fraction must lie in (0, 1), got {}",
            split.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(split.seed);
    rng.shuffle(&mut order);

    let mut folds = Vec::new();
    match split.folds {
        None => {
            let cut = ((n as f64 * split.train_fraction).round() as usize).clamp(1, n - 1);
            let (train, test) = order.split_at(cut);
            folds.push(FoldResult {
                baseline: fit_and_score("baseline", base_blocks, train, test, y, family)?,
                augmented: fit_and_score("augmented", augmented_blocks, train, test, y, family)?,
            });
        }
        Some(k) => {
            if k < 2 || k > n {
                return Err(Error::argument(format!("fold count {k} out of range 2..={n}")));
            }
            for f in 0..k {
                let test: Vec<usize> = order.iter().copied().skip(f).step_by(k).collect();
                let train: Vec<usize> =
                    order.iter().copied().filter(|r| !test.contains(r)).collect();
                folds.push(FoldResult {
                    baseline: fit_and_score("baseline", base_blocks, &train, &test, y, family)?,
                    augmented: fit_and_score("augmented", augmented_blocks, &train, &test, y, family)?,
                });
            }
        }
    }
    let baseline: f64 = folds.iter().map(|f| f.baseline).sum();
    let augmented: f64 = folds.iter().map(|f| f.augmented).sum();
    Ok(ExtrinsicReport { baseline, augmented, delta: baseline - augmented, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)] // frozen hand-derived oracle value
    fn cosine_basics() {
        assert!((cosine(&[2.0, 1.0], &[2.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 0.7071068).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_zero_vectors_and_length_mismatch() {
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_symmetry_and_scale_invariance() {
        let u = [0.3, -1.2, 0.8];
        let v = [1.5, 0.2, -0.4];
        assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
        let scaled: Vec<f64> = u.iter().map(|x| 3.7 * x).collect();
        assert!((cosine(&scaled, &v).unwrap() - cosine(&u, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn neighbor_ranking_oracle() {
        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("a", vec![1.0, 0.0]).unwrap();
        table.insert("b", vec![1.0, 0.01]).unwrap();
        table.insert("c", vec![0.0, 1.0]).unwrap();
        let report = nearest_neighbors(&table, "a", 2).unwrap();
        assert_eq!(report.neighbors[0].0, "b");
        assert_eq!(report.neighbors[1].0, "c");
    }

    #[test]
    fn full_ranking_and_tie_break() {
        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("q", vec![1.0, 0.0]).unwrap();
        table.insert("dup2", vec![2.0, 0.0]).unwrap();
        table.insert("dup1", vec![3.0, 0.0]).unwrap();
        let report = nearest_neighbors(&table, "q", 2).unwrap();
        // Both neighbors have cosine exactly 1; table order breaks the tie.
        assert_eq!(report.neighbors[0].0, "dup2");
        assert_eq!(report.neighbors[1].0, "dup1");

        assert!(nearest_neighbors(&table, "missing", 1).is_err());
        assert!(nearest_neighbors(&table, "q", 3).is_err());
    }

    #[test]
    fn zero_embedding_error_names_the_id() {
        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("ok", vec![1.0, 0.0]).unwrap();
        table.insert("bad", vec![0.0, 0.0]).unwrap();
        let err = nearest_neighbors(&table, "ok", 1).unwrap_err();
        assert!(err.to_string().contains("bad"), "{err}");
    }

    #[test]
    fn identical_blocks_give_zero_delta() {
        let mut rng = SeededRng::new(3);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * x[0] + 0.1 * rng.next_gaussian()).collect();
        let blocks = vec![(String::from("x"), xs)];
        let split = SplitSpec { train_fraction: 0.7, seed: 5, folds: None };
        let report = extrinsic_compare(
            &blocks,
            &blocks,
            &y,
            GlmFamily::canonical(crate::glm::FamilyKind::Gaussian),
            &split,
        )
        .unwrap();
        assert!(report.delta.abs() < 1e-10);
    }
}
