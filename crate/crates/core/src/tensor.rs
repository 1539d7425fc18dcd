//! Dense row-major tensors and the numeric kernels built on them.
//!
//! Rank-2 tensors index as `(row, col)`; rank-3 tensors are
//! `height x width x channel` with channels last, i.e. the flat index of
//! `(i, j, k)` is `(i * width + j) * channels + k`. All values are `f64`.

use crate::error::{Error, Result};

/// Dense numeric array with an explicit shape.
///
/// Immutable from the caller's perspective once built (mutation is confined
/// to parameter updates inside training loops), so shared references are safe
/// across threads. Construction rejects non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape product matches the data
    /// length, every dimension is positive and every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("dimensions must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} implies {expected} entries, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite tensor entry {bad}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    /// Rank-1 tensor from a plain vector.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        Tensor::new(vec![len], data)
    }

    /// Rank-2 tensor from rows (all rows must have equal length).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::shape("from_rows: no rows"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows: ragged rows"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// Rank-2 element access.
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Rank-3 element access, `(row, col, channel)`.
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    /// Rank-4 element access (convolution filter banks, `f x f x C x K`).
    pub fn at4(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        debug_assert_eq!(self.rank(), 4);
        self.data[((a * self.shape[1] + b) * self.shape[2] + c) * self.shape[3] + d]
    }

    /// Row `r` of a rank-2 tensor as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let w = self.shape[1];
        &self.data[r * w..(r + 1) * w]
    }
}

/// Matrix product of two rank-2 tensors, `(m x k) . (k x n) -> (m x n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::shape(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, ka) = (a.shape[0], a.shape[1]);
    let (kb, n) = (b.shape[0], b.shape[1]);
    if ka != kb {
        return Err(Error::shape(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..ka {
            let aij = a.data[i * ka + l];
            if aij == 0.0 {
                continue;
            }
            let brow = &b.data[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aij * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Valid cross-correlation of an `H x W x C` input with an `f x f x C x K`
/// filter bank, stride 1, no padding. Output is `(H-f+1) x (W-f+1) x K` with
/// `out[i][j][k] = sum over (u, v, c) of input[i+u][j+v][c] * filters[u][v][c][k]`.
pub fn conv2d_valid(input: &Tensor, filters: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::shape(format!("conv2d input must be rank-3, got {:?}", input.shape())));
    }
    if filters.rank() != 4 {
        return Err(Error::shape(format!(
            "conv2d filters must be rank-4 (f x f x C x K), got {:?}",
            filters.shape()
        )));
    }
    let (h, w, c) = (input.shape[0], input.shape[1], input.shape[2]);
    let (fh, fw, fc, k) = (filters.shape[0], filters.shape[1], filters.shape[2], filters.shape[3]);
    if fh != fw {
        return Err(Error::shape(format!("conv2d filters must be square, got {fh} x {fw}")));
    }
    if fc != c {
        return Err(Error::shape(format!("conv2d channel mismatch: input has {c}, filters expect {fc}")));
    }
    if fh > h || fw > w {
        return Err(Error::shape(format!(
            "filter {fh} x {fw} larger than input {h} x {w}"
        )));
    }
    let (oh, ow) = (h - fh + 1, w - fw + 1);
    let mut out = vec![0.0; oh * ow * k];
    for i in 0..oh {
        for j in 0..ow {
            for u in 0..fh {
                for v in 0..fw {
                    let in_base = ((i + u) * w + (j + v)) * c;
                    for cc in 0..c {
                        let x = input.data[in_base + cc];
                        if x == 0.0 {
                            continue;
                        }
                        let f_base = ((u * fw + v) * c + cc) * k;
                        let o_base = (i * ow + j) * k;
                        for kk in 0..k {
                            out[o_base + kk] += x * filters.data[f_base + kk];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, k], out)
}

/// Flattens a rank-3 tensor left-to-right, top-to-bottom, front-to-back:
/// element `(i, j, k)` lands at flat index `k*H*W + i*W + j`.
///
/// Note this traversal finishes a whole channel plane before moving to the
/// next channel, which is *not* the storage order (channels-last), so this is
/// a genuine permutation rather than a reshape.
pub fn unroll(t: &Tensor) -> Result<Tensor> {
    if t.rank() != 3 {
        return Err(Error::shape(format!("unroll needs a rank-3 tensor, got {:?}", t.shape())));
    }
    let (h, w, c) = (t.shape[0], t.shape[1], t.shape[2]);
    let mut out = vec![0.0; h * w * c];
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                out[k * h * w + i * w + j] = t.at3(i, j, k);
            }
        }
    }
    Tensor::new(vec![h * w * c], out)
}

/// Exact inverse of [`unroll`]: rebuilds the `H x W x C` grid from a rank-1
/// vector laid out in unroll order.
pub fn roll(v: &Tensor, shape: [usize; 3]) -> Result<Tensor> {
    if v.rank() != 1 {
        return Err(Error::shape(format!("roll needs a rank-1 tensor, got {:?}", v.shape())));
    }
    let [h, w, c] = shape;
    if v.len() != h * w * c {
        return Err(Error::shape(format!(
            "roll: vector of length {} does not fill {h} x {w} x {c}",
            v.len()
        )));
    }
    let mut out = vec![0.0; h * w * c];
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                out[(i * w + j) * c + k] = v.data[k * h * w + i * w + j];
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn new_rejects_shape_data_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_identity() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let id = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(matmul(&a, &id).unwrap(), a);
    }

    #[test]
    fn matmul_hand_oracle() {
        // [[1,2],[3,4]] x [[5],[6]] = [[1*5+2*6],[3*5+4*6]] = [[17],[39]]
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[5.0], &[6.0]]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_dimension_mismatch_names_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]).unwrap();
        let b = Tensor::zeros(vec![2, 2]).unwrap();
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn conv_output_shape_4x4_filter_2x2() {
        let input = Tensor::zeros(vec![4, 4, 1]).unwrap();
        let filters = Tensor::zeros(vec![2, 2, 1, 1]).unwrap();
        let out = conv2d_valid(&input, &filters).unwrap();
        assert_eq!(out.shape(), &[3, 3, 1]);
    }

    #[test]
    fn conv_window_sum_oracle() {
        let input = Tensor::new(
            vec![4, 4, 1],
            (1..=16).map(|v| v as f64).collect(),
        )
        .unwrap();
        // Filter [[1,0],[0,1]] picks up x[i][j] + x[i+1][j+1].
        let filters = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = conv2d_valid(&input, &filters).unwrap();
        assert_eq!(out.at3(0, 0, 0), 1.0 + 6.0);
        assert_eq!(out.at3(2, 2, 0), 11.0 + 16.0);
    }

    #[test]
    fn conv_identity_filter() {
        let input = Tensor::new(vec![3, 3, 1], (0..9).map(|v| v as f64).collect()).unwrap();
        let filters = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d_valid(&input, &filters).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_rejects_oversized_filter() {
        let input = Tensor::zeros(vec![2, 2, 1]).unwrap();
        let filters = Tensor::zeros(vec![3, 3, 1, 1]).unwrap();
        assert!(conv2d_valid(&input, &filters).is_err());
    }

    #[test]
    fn unroll_singleton() {
        let t = Tensor::new(vec![1, 1, 1], vec![42.0]).unwrap();
        assert_eq!(unroll(&t).unwrap().data(), &[42.0]);
    }

    #[test]
    fn unroll_2x2x1_row_order() {
        let t = Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(unroll(&t).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unroll_channels_come_last() {
        // 1x1x2: storage is channel-interleaved but unroll emits plane by plane.
        let t = Tensor::new(vec![1, 1, 2], vec![5.0, 7.0]).unwrap();
        assert_eq!(unroll(&t).unwrap().data(), &[5.0, 7.0]);
        // 2x1x2: (i=0,k=0),(i=1,k=0) then (i=0,k=1),(i=1,k=1).
        let t = Tensor::new(vec![2, 1, 2], vec![1.0, 10.0, 2.0, 20.0]).unwrap();
        assert_eq!(unroll(&t).unwrap().data(), &[1.0, 2.0, 10.0, 20.0]);
    }

    #[test]
    fn roll_inverts_unroll() {
        let t = Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let back = roll(&unroll(&t).unwrap(), [2, 2, 1]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn roll_rejects_length_mismatch() {
        let v = Tensor::from_vec(vec![1.0; 5]).unwrap();
        assert!(roll(&v, [2, 2, 1]).is_err());
    }
}
