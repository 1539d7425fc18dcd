//! Feature standardization and principal component analysis.
//!
//! PCA is fitted by cyclic Jacobi rotations on the covariance matrix, which
//! at desk scale (p up to a few hundred) cheaply yields the full spectrum —
//! needed for the variance-conservation identities. The same eigensolver
//! backs the GLM's weighted normal equations.
//!
//! Conventions, pinned by tests: `standardize` uses the population standard
//! deviation (divide by n); the covariance in `pca_fit` likewise uses the
//! population 1/n convention, so the dataset reconstruction error of a
//! truncated basis equals `n * sum(discarded eigenvalues)` exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::serial::{join_f64, parse_usize, split_f64};
use crate::tensor::Tensor;

/// Linear encoder/decoder pair from PCA.
///
/// `components` is `p x l` with orthonormal columns, ordered by non-increasing
/// eigenvalue. Sign convention: the largest-magnitude entry of each component
/// is positive (first such entry on magnitude ties); exact eigenvalue ties are
/// ordered by the components' lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Tensor,
    pub eigenvalues: Vec<f64>,
}

/// Centers and scales each column to mean 0 and population stddev 1.
/// Constant columns become all zeros with a recorded stddev of 1, which keeps
/// downstream shapes stable instead of dividing by zero.
pub fn standardize(x: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    if x.rank() != 2 {
        return Err(Error::shape(format!("standardize expects a rank-2 tensor, got {:?}", x.shape())));
    }
    let (n, p) = (x.shape()[0], x.shape()[1]);
    if n < 2 {
        return Err(Error::argument(format!("standardize needs at least 2 rows, got {n}")));
    }
    let mut means = vec![0.0; p];
    for i in 0..n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += x.at2(i, j);
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut stds = vec![0.0; p];
    for i in 0..n {
        for (j, s) in stds.iter_mut().enumerate() {
            let d = x.at2(i, j) - means[j];
            *s += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let mut out = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            out.push((x.at2(i, j) - means[j]) / stds[j]);
        }
    }
    Ok((Tensor::new(vec![n, p], out)?, means, stds))
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as the *columns*
/// of the returned matrix, unsorted. Converges when the off-diagonal
/// Frobenius norm drops below `1e-13 * max(1, ||A||_F)`.
pub fn jacobi_eigen(matrix: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    if matrix.rank() != 2 || matrix.shape()[0] != matrix.shape()[1] {
        return Err(Error::shape(format!("jacobi_eigen needs a square matrix, got {:?}", matrix.shape())));
    }
    let p = matrix.shape()[0];
    let sym_tol = 1e-8 * (1.0 + frobenius(matrix.data()));
    for i in 0..p {
        for j in (i + 1)..p {
            if (matrix.at2(i, j) - matrix.at2(j, i)).abs() > sym_tol {
                return Err(Error::argument(format!(
                    "jacobi_eigen needs a symmetric matrix (entry ({i},{j}) differs from ({j},{i}))"
                )));
            }
        }
    }

    let mut a: Vec<f64> = matrix.data().to_vec();
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    let tol = 1e-13 * f64::max(1.0, frobenius(&a));

    let mut converged = false;
    for _sweep in 0..100 {
        if off_diagonal_norm(&a, p) <= tol {
            converged = true;
            break;
        }
        for q in 0..p {
            for r in (q + 1)..p {
                let apq = a[q * p + r];
                if apq == 0.0 {
                    continue;
                }
                let app = a[q * p + q];
                let aqq = a[r * p + r];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/columns q and r.
                for k in 0..p {
                    let akq = a[k * p + q];
                    let akr = a[k * p + r];
                    a[k * p + q] = c * akq - s * akr;
                    a[k * p + r] = s * akq + c * akr;
                }
                for k in 0..p {
                    let aqk = a[q * p + k];
                    let ark = a[r * p + k];
                    a[q * p + k] = c * aqk - s * ark;
                    a[r * p + k] = s * aqk + c * ark;
                }
                for k in 0..p {
                    let vkq = v[k * p + q];
                    let vkr = v[k * p + r];
                    v[k * p + q] = c * vkq - s * vkr;
                    v[k * p + r] = s * vkq + c * vkr;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a, p) > tol {
        return Err(Error::Argument(format!(
            "jacobi rotation did not converge (off-diagonal norm {:e})",
            off_diagonal_norm(&a, p)
        )));
    }
    let eigenvalues: Vec<f64> = (0..p).map(|i| a[i * p + i]).collect();
    Ok((eigenvalues, Tensor::new(vec![p, p], v)?))
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn off_diagonal_norm(a: &[f64], p: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                total += a[i * p + j] * a[i * p + j];
            }
        }
    }
    total.sqrt()
}

/// Fits PCA with `l` components on `n x p` data.
pub fn pca_fit(x: &Tensor, l: usize) -> Result<PcaModel> {
    if x.rank() != 2 {
        return Err(Error::shape(format!("pca_fit expects a rank-2 tensor, got {:?}", x.shape())));
    }
    let (n, p) = (x.shape()[0], x.shape()[1]);
    if n < 2 {
        return Err(Error::argument(format!("pca_fit needs at least 2 rows, got {n}")));
    }
    if l == 0 || l > p {
        return Err(Error::argument(format!("component count must satisfy 1 <= l <= {p}, got {l}")));
    }

    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += x.at2(i, j);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Population covariance, 1/n.
    let mut cov = vec![0.0; p * p];
    for i in 0..n {
        for j in 0..p {
            let dj = x.at2(i, j) - mean[j];
            for k in j..p {
                cov[j * p + k] += dj * (x.at2(i, k) - mean[k]);
            }
        }
    }
    for j in 0..p {
        for k in j..p {
            let v = cov[j * p + k] / n as f64;
            cov[j * p + k] = v;
            cov[k * p + j] = v;
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(&Tensor::new(vec![p, p], cov)?)?;

    // Canonical sign, then order by descending eigenvalue with a
    // lexicographic tie-break on the component entries.
    let mut cols: Vec<(f64, Vec<f64>)> = (0..p)
        .map(|c| {
            let mut col: Vec<f64> = (0..p).map(|r| vectors.at2(r, c)).collect();
            let lead = col
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if col[lead] < 0.0 {
                for v in &mut col {
                    *v = -*v;
                }
            }
            (eigenvalues[c], col)
        })
        .collect();
    cols.sort_by(|(la, va), (lb, vb)| {
        lb.partial_cmp(la)
            .unwrap()
            .then_with(|| va.partial_cmp(vb).unwrap())
    });

    let kept = &cols[..l];
    let mut components = vec![0.0; p * l];
    for (c, (_, col)) in kept.iter().enumerate() {
        for r in 0..p {
            components[r * l + c] = col[r];
        }
    }
    Ok(PcaModel {
        mean,
        components: Tensor::new(vec![p, l], components)?,
        eigenvalues: kept.iter().map(|(v, _)| *v).collect(),
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.components.shape()[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.components.shape()[1]
    }

    /// Coordinates of the centered input in the component basis:
    /// `components^T (x - mean)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (p, l) = (self.input_dim(), self.embedding_dim());
        if x.len() != p {
            return Err(Error::shape(format!("pca encode expects length {p}, got {}", x.len())));
        }
        let mut z = vec![0.0; l];
        for r in 0..p {
            let d = x[r] - self.mean[r];
            if d == 0.0 {
                continue;
            }
            for c in 0..l {
                z[c] += self.components.at2(r, c) * d;
            }
        }
        Ok(z)
    }

    /// `mean + components z`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (p, l) = (self.input_dim(), self.embedding_dim());
        if z.len() != l {
            return Err(Error::shape(format!("pca decode expects length {l}, got {}", z.len())));
        }
        let mut x = self.mean.clone();
        for (c, zc) in z.iter().enumerate() {
            if *zc == 0.0 {
                continue;
            }
            for r in 0..p {
                x[r] += self.components.at2(r, c) * zc;
            }
        }
        Ok(x)
    }

    pub fn to_text(&self) -> String {
        let (p, l) = (self.input_dim(), self.embedding_dim());
        let mut out = String::from("pca\n");
        let _ = writeln!(out, "dims {p} {l}");
        let _ = writeln!(out, "{}", join_f64(&self.mean));
        let _ = writeln!(out, "{}", join_f64(&self.eigenvalues));
        let _ = writeln!(out, "{}", join_f64(self.components.data()));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("unexpected end of pca file, wanted {what}")))
        };
        let (ln, magic) = next("magic")?;
        if magic.trim() != "pca" {
            return Err(Error::parse(ln, "expected magic line \"pca\""));
        }
        let (ln, dims) = next("dims")?;
        let (p, l) = match dims.trim().strip_prefix("dims ") {
            Some(rest) => {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(Error::parse(ln, "dims line needs two integers"));
                }
                (parse_usize(toks[0], ln)?, parse_usize(toks[1], ln)?)
            }
            None => return Err(Error::parse(ln, "expected \"dims <p> <l>\"")),
        };
        let (ln, mean_line) = next("mean")?;
        let mean = split_f64(mean_line, p, ln)?;
        let (ln, eig_line) = next("eigenvalues")?;
        let eigenvalues = split_f64(eig_line, l, ln)?;
        let (ln, comp_line) = next("components")?;
        let components = Tensor::new(vec![p, l], split_f64(comp_line, p * l, ln)?)?;
        Ok(PcaModel { mean, components, eigenvalues })
    }
}

/// Total squared reconstruction error of an arbitrary encoder/decoder pair
/// over a dataset: `sum_i sum_j (decode(encode(x_i))_j - x_ij)^2`.
pub fn reconstruction_error<E, D>(encode: E, decode: D, x: &Tensor) -> Result<f64>
where
    E: Fn(&[f64]) -> Result<Vec<f64>>,
    D: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if x.rank() != 2 {
        return Err(Error::shape(format!("reconstruction_error expects rank-2 data, got {:?}", x.shape())));
    }
    let (n, p) = (x.shape()[0], x.shape()[1]);
    let mut total = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let rebuilt = decode(&encode(row)?)?;
        if rebuilt.len() != p {
            return Err(Error::shape(format!(
                "decoder produced length {}, expected {p}",
                rebuilt.len()
            )));
        }
        total += row.iter().zip(&rebuilt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Reconstruction error of a fitted PCA model on a dataset.
pub fn pca_reconstruction_error(model: &PcaModel, x: &Tensor) -> Result<f64> {
    reconstruction_error(|r| model.encode(r), |z| model.decode(z), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn standardize_is_a_fixed_point_on_standardized_data() {
        // Column with mean 0 and population stddev 1 already.
        let x = Tensor::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let (z, means, stds) = standardize(&x).unwrap();
        assert!(close(z.at2(0, 0), -1.0, 1e-12) && close(z.at2(1, 0), 1.0, 1e-12));
        assert_eq!(means, vec![0.0]);
        assert_eq!(stds, vec![1.0]);
    }

    #[test]
    fn standardize_uses_population_stddev() {
        let x = Tensor::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let (z, means, stds) = standardize(&x).unwrap();
        assert_eq!(means, vec![5.0]);
        assert_eq!(stds, vec![5.0]);
        assert_eq!(z.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zeros_with_unit_stddev() {
        let x = Tensor::from_rows(&[vec![3.0], vec![3.0], vec![3.0]]).unwrap();
        let (z, _, stds) = standardize(&x).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0, 0.0]);
        assert_eq!(stds, vec![1.0]);
    }

    #[test]
    fn standardize_rejects_single_row() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(standardize(&x).is_err());
    }

    #[test]
    fn line_data_has_diagonal_component() {
        // Points exactly on y = x: the single component is (1, 1)/sqrt(2).
        let x = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
        ])
        .unwrap();
        let model = pca_fit(&x, 2).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert!(close(model.components.at2(0, 0), s, 1e-10));
        assert!(close(model.components.at2(1, 0), s, 1e-10));
        assert!(close(model.eigenvalues[1], 0.0, 1e-10));

        // mean + (1,1) projects to sqrt(2) in the 1-D code space.
        let model1 = pca_fit(&x, 1).unwrap();
        let probe: Vec<f64> = model1.mean.iter().map(|m| m + 1.0).collect();
        let z = model1.encode(&probe).unwrap();
        assert!(close(z[0], 2.0_f64.sqrt(), 1e-10));
    }

    #[test]
    fn encode_of_mean_is_zero_and_decode_of_zero_is_mean() {
        let x = Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let model = pca_fit(&x, 2).unwrap();
        let z = model.encode(&model.mean).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let back = model.decode(&[0.0, 0.0]).unwrap();
        assert!(back.iter().zip(&model.mean).all(|(a, b)| close(*a, *b, 1e-12)));
    }

    #[test]
    fn full_basis_reconstruction_error_is_zero() {
        let mut rng = crate::rng::SeededRng::new(8);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let model = pca_fit(&x, 5).unwrap();
        let err = pca_reconstruction_error(&model, &x).unwrap();
        assert!(err < 1e-10, "error {err}");
    }

    #[test]
    fn eigenvalues_sum_to_covariance_trace() {
        let mut rng = crate::rng::SeededRng::new(9);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..6).map(|_| rng.uniform(-1.0, 3.0)).collect()).collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let model = pca_fit(&x, 6).unwrap();
        let n = 30.0;
        let mut trace = 0.0;
        for j in 0..6 {
            let m: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            trace += rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
        }
        let total: f64 = model.eigenvalues.iter().sum();
        assert!(close(total, trace, 1e-8), "{total} vs {trace}");
    }

    #[test]
    fn l_out_of_range_rejected() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&x, 3).is_err());
    }

    #[test]
    fn identity_codec_has_zero_error() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let err = reconstruction_error(|r| Ok(r.to_vec()), |z| Ok(z.to_vec()), &x).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn pca_model_text_roundtrip() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, 1.0, 2.0], vec![2.0, 0.0, 1.0]]).unwrap();
        let model = pca_fit(&x, 2).unwrap();
        let text = model.to_text();
        let back = PcaModel::from_text(&text).unwrap();
        assert_eq!(model, back);
    }
}
