//! Row-major dense `f64` matrix with the handful of kernels the network needs.
//!
//! Every reduction accumulates in ascending index order. Pruned networks rely on
//! this: dropping a zero term from a sum leaves the remaining partial sums
//! bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(alloc::format!(
                "matrix data has {} elements, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Config("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// Horizontal concatenation.
    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(Error::Config("hcat row counts differ".into()));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for m in parts {
                out.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        Ok(out)
    }

    /// Copies columns `start..start + width`.
    pub fn col_block(&self, start: usize, width: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out[b][o] = bias[o] + sum_i x[b][i] * w[o][i]` where `w` is `out x in` row-major.
pub(crate) fn affine(x: &Matrix, w: &[f64], bias: &[f64], out_dim: usize) -> Matrix {
    let in_dim = x.cols;
    debug_assert_eq!(w.len(), out_dim * in_dim);
    // Transposing once lets the inner loop run as a contiguous axpy while each
    // output element still sums over `i` in order.
    let mut wt = vec![0.0; in_dim * out_dim];
    for o in 0..out_dim {
        for i in 0..in_dim {
            wt[i * out_dim + o] = w[o * in_dim + i];
        }
    }
    let mut out = Matrix::zeros(x.rows, out_dim);
    for b in 0..x.rows {
        let xr = x.row(b);
        let orow = &mut out.data[b * out_dim..(b + 1) * out_dim];
        for i in 0..in_dim {
            let xv = xr[i];
            let wrow = &wt[i * out_dim..(i + 1) * out_dim];
            for (acc, &wv) in orow.iter_mut().zip(wrow) {
                *acc += xv * wv;
            }
        }
        for (acc, &bv) in orow.iter_mut().zip(bias) {
            *acc += bv;
        }
    }
    out
}

/// `gw[o][i] = sum_b dz[b][o] * x[b][i]`, `gb[o] = sum_b dz[b][o]`.
pub(crate) fn weight_grads(dz: &Matrix, x: &Matrix, gw: &mut [f64], gb: &mut [f64]) {
    let out_dim = dz.cols;
    let in_dim = x.cols;
    gw.iter_mut().for_each(|g| *g = 0.0);
    gb.iter_mut().for_each(|g| *g = 0.0);
    for b in 0..dz.rows {
        let dzr = dz.row(b);
        let xr = x.row(b);
        for o in 0..out_dim {
            let d = dzr[o];
            gb[o] += d;
            if d == 0.0 {
                continue;
            }
            let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
            for (g, &xv) in grow.iter_mut().zip(xr) {
                *g += d * xv;
            }
        }
    }
}

/// `dx[b][i] += sum_o dz[b][o] * w[o][i]`.
pub(crate) fn input_grads_into(dz: &Matrix, w: &[f64], dx: &mut Matrix) {
    let out_dim = dz.cols;
    let in_dim = dx.cols;
    for b in 0..dz.rows {
        let dzr = dz.row(b);
        let dxr = &mut dx.data[b * in_dim..(b + 1) * in_dim];
        for o in 0..out_dim {
            let d = dzr[o];
            if d == 0.0 {
                continue;
            }
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            for (acc, &wv) in dxr.iter_mut().zip(wrow) {
                *acc += d * wv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_naive() {
        let x = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0]]).unwrap();
        let w = [1.0, 0.0, -1.0, 2.0, 1.0, 0.5];
        let b = [0.5, -0.5];
        let out = affine(&x, &w, &b, 2);
        assert_eq!(out.row(0), &[1.0 - 3.0 + 0.5, 2.0 + 2.0 + 1.5 - 0.5]);
        assert_eq!(out.row(1), &[-1.0 + 0.5, -2.0 + 0.5 - 0.5]);
    }

    #[test]
    fn hcat_and_col_block_invert() {
        let a = Matrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let c = Matrix::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.col_block(0, 1), a);
        assert_eq!(c.col_block(1, 2), b);
    }

    #[test]
    fn from_vec_rejects_bad_len() {
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
