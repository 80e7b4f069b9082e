//! Profile (skyline) Cholesky factorization for sparse SPD matrices.
//!
//! Row `i` of the factor is stored densely from its first structural nonzero
//! `first[i]` to the diagonal; fill-in never leaves this envelope.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ProfileCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileCholesky {
    /// Factor the matrix whose lower triangle is given row-wise as
    /// `(column, value)` pairs with `column <= row`.
    pub fn factor(lower: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n = lower.len();
        let mut first = Vec::with_capacity(n);
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0usize;
        for (i, row) in lower.iter().enumerate() {
            let f = row.iter().map(|&(c, _)| c).min().unwrap_or(i).min(i);
            first.push(f);
            start.push(len);
            len += i - f + 1;
        }
        start.push(len);
        let mut data = vec![0.0; len];
        for (i, row) in lower.iter().enumerate() {
            for &(c, v) in row {
                debug_assert!(c <= i, "entry above the diagonal");
                data[start[i] + c - first[i]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let lo = fi.max(fj);
                let ri = &data[si + lo - fi..si + j - fi];
                let rj = &data[sj + lo - fj..sj + j - fj];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let diag_j = data[sj + j - fj];
                data[si + j - fi] = (data[si + j - fi] - dot) / diag_j;
            }
            let row = &data[si..si + i - fi];
            let sq: f64 = row.iter().map(|a| a * a).sum();
            let pivot = data[si + i - fi] - sq;
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::Factorization { index: i, pivot });
            }
            data[si + i - fi] = pivot.sqrt();
        }
        Ok(Self { first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Entries stored in the envelope (including fill).
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.start[i]..self.start[i + 1]]
    }

    /// Diagonal entries of the factor; their squares are the pivots.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| *self.row(i).last().unwrap())
            .collect()
    }

    /// Solve `L y = b` where `b` vanishes before index `from`; the returned
    /// vector holds `y[from..]`.
    pub fn forward_from(&self, b: &[f64], from: usize) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n - from];
        for i in from..n {
            let row = self.row(i);
            let fi = self.first[i];
            let lo = fi.max(from);
            let mut s = b[i];
            for c in lo..i {
                s -= row[c - fi] * y[c - from];
            }
            y[i - from] = s / row[i - fi];
        }
        y
    }

    /// Solve `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let y = self.forward_from(b, 0);
        b.copy_from_slice(&y);
        for i in (0..n).rev() {
            let row = self.row(i);
            let fi = self.first[i];
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for c in fi..i {
                b[c] -= row[c - fi] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lower_of(dense: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        dense
            .iter()
            .enumerate()
            .map(|(i, row)| {
                (0..=i)
                    .filter(|&c| row[c] != 0.0)
                    .map(|c| (c, row[c]))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 30;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = 2.0;
            if i > 0 {
                dense[i][i - 1] = -1.0;
                dense[i - 1][i] = -1.0;
            }
        }
        let f = ProfileCholesky::factor(&lower_of(&dense)).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|c| dense[i][c] * x_true[c]).sum())
            .collect();
        f.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x_true[i]).abs() < 1e-12);
        }
        assert_eq!(f.stored(), 2 * n - 1);
    }

    #[test]
    fn envelope_with_fill() {
        // Arrow-ish matrix: row 4 couples to column 0, forcing fill in row 4.
        let dense = vec![
            vec![4.0, 1.0, 0.0, 0.0, 0.5],
            vec![1.0, 4.0, 1.0, 0.0, 0.0],
            vec![0.0, 1.0, 4.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 4.0, 1.0],
            vec![0.5, 0.0, 0.0, 1.0, 4.0],
        ];
        let f = ProfileCholesky::factor(&lower_of(&dense)).unwrap();
        let mut b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let rhs = b.clone();
        f.solve_in_place(&mut b);
        for i in 0..5 {
            let r: f64 = (0..5).map(|c| dense[i][c] * b[c]).sum();
            assert!((r - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn forward_from_skips_leading_zeros() {
        let dense = vec![
            vec![2.0, 0.3, 0.0],
            vec![0.3, 2.0, 0.4],
            vec![0.0, 0.4, 2.0],
        ];
        let f = ProfileCholesky::factor(&lower_of(&dense)).unwrap();
        let b = vec![0.0, 1.0, -2.0];
        let full = f.forward_from(&b, 0);
        let tail = f.forward_from(&b, 1);
        assert_eq!(full[0], 0.0);
        assert_eq!(&full[1..], &tail[..]);
    }

    #[test]
    fn rejects_indefinite() {
        let dense = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let err = ProfileCholesky::factor(&lower_of(&dense)).unwrap_err();
        assert!(matches!(err, Error::Factorization { index: 1, .. }));
    }
}
