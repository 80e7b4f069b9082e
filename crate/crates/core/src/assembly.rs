//! Stiffness and load matrices of `V_q` in the normalized Babuška–Shen basis
//! `Φ̂_k = Φ_k / ‖Φ_k‖`, and a parity-blocked SPD solver for the stiffness.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factor::ProfileCholesky;
use crate::galerkin::PolyData;
use crate::tensor2d::{
    index_set_p, index_set_v, load_coupling, load_partners, phi_norm_sq, stiff_coupling,
    stiff_partners, Index2, Parity,
};

/// Relative residual demanded of every stiffness solve.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Gram matrix of the normalized functions `Φ̂_k`, stored by rows with
/// sorted column indices. Symmetric with unit diagonal.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    q: usize,
    parity: Option<Parity>,
    indices: Arc<Vec<Index2>>,
    position: HashMap<Index2, usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn assemble_stiffness(q: usize, parity: Option<Parity>) -> Result<StiffnessMatrix> {
    let indices: Vec<Index2> = index_set_v(q)?
        .into_iter()
        .filter(|k| parity.is_none_or(|p| k.parity() == p))
        .collect();
    let position: HashMap<Index2, usize> =
        indices.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let rows = indices
        .iter()
        .map(|&k| {
            let mut row = Vec::with_capacity(5);
            for m in stiff_partners(k) {
                if let Some(&c) = position.get(&m) {
                    row.push((c, stiff_coupling(k, m, true)?));
                }
            }
            row.sort_by_key(|&(c, _)| c);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StiffnessMatrix {
        q,
        parity,
        indices: Arc::new(indices),
        position,
        rows,
    })
}

impl StiffnessMatrix {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn parity(&self) -> Option<Parity> {
        self.parity
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &Arc<Vec<Index2>> {
        &self.indices
    }

    pub fn position(&self, k: Index2) -> Option<usize> {
        self.position.get(&k).copied()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn get_by_index(&self, k: Index2, m: Index2) -> f64 {
        match (self.position(k), self.position(m)) {
            (Some(i), Some(j)) => self.get(i, j),
            _ => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn max_row_nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `xᵀ K y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(x)
            .map(|(row, &xi)| xi * row.iter().map(|&(c, v)| v * y[c]).sum::<f64>())
            .sum()
    }

    /// Dense copy, for small matrices and tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Coordinate dump: one `row col value` line per stored entry, values with
    /// 17 significant digits.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                writeln!(w, "{i} {c} {v:.16e}")?;
            }
        }
        Ok(())
    }
}

/// `(Θ_k, Φ̂_m)_{L²(Ω)}` over Legendre rows `|k| ≤ p` and Babuška–Shen
/// columns `|m| ≤ q`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    p: usize,
    q: usize,
    row_indices: Vec<Index2>,
    col_indices: Arc<Vec<Index2>>,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn assemble_load(p: usize, q: usize) -> Result<CouplingMatrix> {
    let col_indices = Arc::new(index_set_v(q)?);
    let position: HashMap<Index2, usize> = col_indices
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, i))
        .collect();
    let row_indices = index_set_p(p);
    let rows = row_indices
        .iter()
        .map(|&k| load_row(k, &position))
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingMatrix {
        p,
        q,
        row_indices,
        col_indices,
        rows,
    })
}

/// Nonzero entries `(column, (Θ_k, Φ̂_m))` for one Legendre index, restricted
/// to the columns present in `position`.
pub(crate) fn load_row(k: Index2, position: &HashMap<Index2, usize>) -> Result<Vec<(usize, f64)>> {
    let mut row = Vec::with_capacity(4);
    for m in load_partners(k) {
        if let Some(&c) = position.get(&m) {
            let v = load_coupling(k, m)? / phi_norm_sq(m)?.sqrt();
            row.push((c, v));
        }
    }
    row.sort_by_key(|&(c, _)| c);
    Ok(row)
}

impl CouplingMatrix {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row_indices(&self) -> &[Index2] {
        &self.row_indices
    }

    pub fn col_indices(&self) -> &Arc<Vec<Index2>> {
        &self.col_indices
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == j)
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Galerkin right-hand side `b_m = (f, Φ̂_m)` for data of degree `≤ p`.
    pub fn apply(&self, f: &PolyData) -> Result<Vec<f64>> {
        if f.degree() > self.p {
            return Err(Error::domain(format!(
                "load matrix built for degree {} but data has degree {}",
                self.p,
                f.degree()
            )));
        }
        let row_pos: HashMap<Index2, usize> = self
            .row_indices
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect();
        let mut b = vec![0.0; self.col_indices.len()];
        for (k, c) in f.terms() {
            let i = row_pos[&k];
            for &(col, v) in &self.rows[i] {
                b[col] += c * v;
            }
        }
        Ok(b)
    }
}

#[derive(Debug, Clone)]
struct FactorBlock {
    parity: Parity,
    /// Global positions in elimination order: levels descending, then `k1`.
    order: Vec<usize>,
    chol: ProfileCholesky,
}

/// Cholesky factorization of a stiffness matrix, one factor per parity
/// block (the blocks decouple exactly). Each block is eliminated from the
/// highest level down, so right-hand sides supported on low levels only
/// touch the trailing rows of the factor.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    blocks: Vec<FactorBlock>,
    locate: Vec<(usize, usize)>,
}

/// Partial solve `y = L⁻¹ b` for one parity block, stored from `start`.
#[derive(Debug, Clone)]
pub struct HalfSolve {
    block: usize,
    start: usize,
    y: Vec<f64>,
}

impl HalfSolve {
    pub fn norm_sq(&self) -> f64 {
        self.y.iter().map(|v| v * v).sum()
    }

    /// `bᵀ K⁻¹ b'` contribution; zero across blocks.
    pub fn dot(&self, other: &HalfSolve) -> f64 {
        if self.block != other.block {
            return 0.0;
        }
        let lo = self.start.max(other.start);
        let a = &self.y[lo - self.start..];
        let b = &other.y[lo - other.start..];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

impl SpdFactor {
    pub fn new(k: &StiffnessMatrix) -> Result<Self> {
        let indices = k.indices();
        let mut locate = vec![(usize::MAX, usize::MAX); k.dim()];
        let mut orders: Vec<(Parity, Vec<usize>)> = Vec::new();
        for parity in Parity::ALL {
            let mut order: Vec<usize> = (0..k.dim())
                .filter(|&i| indices[i].parity() == parity)
                .collect();
            if order.is_empty() {
                continue;
            }
            order.sort_by_key(|&i| (std::cmp::Reverse(indices[i].total()), indices[i].k1));
            let b = orders.len();
            for (local, &g) in order.iter().enumerate() {
                locate[g] = (b, local);
            }
            orders.push((parity, order));
        }
        let blocks = orders
            .into_par_iter()
            .map(|(parity, order)| {
                let lower: Vec<Vec<(usize, f64)>> = order
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| {
                        k.row(g)
                            .iter()
                            .map(|&(gc, v)| (locate[gc].1, v))
                            .filter(|&(c, _)| c <= i)
                            .collect()
                    })
                    .collect();
                let chol = ProfileCholesky::factor(&lower)?;
                Ok(FactorBlock {
                    parity,
                    order,
                    chol,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: k.dim(),
            blocks,
            locate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parities(&self) -> Vec<Parity> {
        self.blocks.iter().map(|b| b.parity).collect()
    }

    /// Smallest Cholesky pivot over all blocks.
    pub fn min_pivot(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.chol.diagonal())
            .map(|d| d * d)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for block in &self.blocks {
            let mut local: Vec<f64> = block.order.iter().map(|&g| b[g]).collect();
            block.chol.solve_in_place(&mut local);
            for (&g, v) in block.order.iter().zip(local) {
                x[g] = v;
            }
        }
        x
    }

    /// Solve with residual control: iterative refinement until
    /// `‖K x − b‖∞ ≤ RESIDUAL_TOL · ‖b‖∞`.
    pub fn solve_refined(&self, k: &StiffnessMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut x = self.solve(b);
        if bnorm == 0.0 {
            return Ok(x);
        }
        for _ in 0..3 {
            let kx = k.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
            let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rnorm <= RESIDUAL_TOL * bnorm {
                return Ok(x);
            }
            let dx = self.solve(&r);
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
        }
        let kx = k.matvec(&x);
        let rnorm = b
            .iter()
            .zip(&kx)
            .fold(0.0f64, |m, (bi, ki)| m.max((bi - ki).abs()));
        if rnorm <= RESIDUAL_TOL * bnorm {
            Ok(x)
        } else {
            Err(Error::Contract(format!(
                "stiffness residual {:.3e} exceeds {:.0e} relative",
                rnorm / bnorm,
                RESIDUAL_TOL
            )))
        }
    }

    /// `L⁻¹ b` per block for a sparse right-hand side given as
    /// `(global position, value)`.
    pub fn half_solve(&self, rhs: &[(usize, f64)]) -> Vec<HalfSolve> {
        let mut by_block: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.blocks.len()];
        for &(g, v) in rhs {
            let (b, l) = self.locate[g];
            by_block[b].push((l, v));
        }
        by_block
            .into_iter()
            .enumerate()
            .filter(|(_, e)| !e.is_empty())
            .map(|(b, entries)| {
                let block = &self.blocks[b];
                let start = entries.iter().map(|&(l, _)| l).min().unwrap();
                let mut dense = vec![0.0; block.order.len()];
                for (l, v) in entries {
                    dense[l] += v;
                }
                HalfSolve {
                    block: b,
                    start,
                    y: block.chol.forward_from(&dense, start),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projnorm::build_aj;
    use crate::tensor2d::detail_indices;

    #[test]
    fn q4_is_identity() {
        let k = assemble_stiffness(4, None).unwrap();
        assert_eq!(k.dim(), 1);
        assert_eq!(k.get(0, 0), 1.0);
    }

    #[test]
    fn symmetric_unit_diagonal_sparse() {
        for q in [5, 9, 16, 33] {
            let k = assemble_stiffness(q, None).unwrap();
            for i in 0..k.dim() {
                assert_eq!(k.get(i, i), 1.0);
                for &(c, v) in k.row(i) {
                    assert_eq!(k.get(c, i), v, "asymmetry at ({i},{c})");
                }
            }
            assert!(k.max_row_nnz() <= 5);
            assert!(k.nnz() <= 5 * k.dim());
        }
    }

    #[test]
    fn level_blocks_are_coupling_matrices() {
        let k = assemble_stiffness(8, Some(Parity::EVEN_EVEN)).unwrap();
        assert_eq!(k.dim(), 1 + 2 + 3);
        for j in [4, 6] {
            let rows = detail_indices(j, Some(Parity::EVEN_EVEN)).unwrap().indices;
            let cols = detail_indices(j + 2, Some(Parity::EVEN_EVEN))
                .unwrap()
                .indices;
            let a = build_aj(j, Parity::EVEN_EVEN).unwrap();
            for (r, &h) in rows.iter().enumerate() {
                for (c, &m) in cols.iter().enumerate() {
                    assert_eq!(k.get_by_index(h, m), a.entries[(r, c)]);
                }
                for &h2 in &rows {
                    let expect = if h == h2 { 1.0 } else { 0.0 };
                    assert_eq!(k.get_by_index(h, h2), expect);
                }
            }
        }
    }

    #[test]
    fn nested_restriction() {
        let big = assemble_stiffness(20, None).unwrap();
        for qs in [4, 7, 12, 19] {
            let small = assemble_stiffness(qs, None).unwrap();
            for (i, &k) in small.indices().iter().enumerate() {
                for (j, &m) in small.indices().iter().enumerate() {
                    assert_eq!(small.get(i, j), big.get_by_index(k, m));
                }
            }
        }
    }

    #[test]
    fn positive_pivots_up_to_40() {
        for q in (4..=40).step_by(3) {
            let k = assemble_stiffness(q, None).unwrap();
            let f = SpdFactor::new(&k).unwrap();
            assert!(f.min_pivot() > 0.0, "q={q}");
        }
    }

    #[test]
    fn solve_meets_residual_contract() {
        let k = assemble_stiffness(30, None).unwrap();
        let f = SpdFactor::new(&k).unwrap();
        let b: Vec<f64> = (0..k.dim())
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let x = f.solve_refined(&k, &b).unwrap();
        let r = k.matvec(&x);
        let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..b.len() {
            assert!((r[i] - b[i]).abs() <= RESIDUAL_TOL * bn);
        }
    }

    #[test]
    fn half_solve_gives_energy() {
        let k = assemble_stiffness(14, None).unwrap();
        let f = SpdFactor::new(&k).unwrap();
        let rhs = vec![(0usize, 0.7), (3, -0.2), (5, 1.1)];
        let mut b = vec![0.0; k.dim()];
        for &(g, v) in &rhs {
            b[g] = v;
        }
        let x = f.solve(&b);
        let direct: f64 = b.iter().zip(&x).map(|(a, c)| a * c).sum();
        let halves = f.half_solve(&rhs);
        let via: f64 = halves.iter().map(HalfSolve::norm_sq).sum();
        assert!((direct - via).abs() < 1e-13 * direct.abs());
    }

    #[test]
    fn load_examples() {
        let b = assemble_load(0, 4).unwrap();
        assert_eq!(b.nnz(), 1);
        assert!((b.get(0, 0) - 5f64.sqrt() / 6.0).abs() < 1e-15);

        let b = assemble_load(3, 10).unwrap();
        for (i, k) in b.row_indices().iter().enumerate() {
            for &(c, _) in b.row(i) {
                assert_eq!(b.col_indices()[c].parity(), k.parity());
            }
        }
    }

    #[test]
    fn load_pattern_p2_q8() {
        let b = assemble_load(2, 8).unwrap();
        let mut predicted = 0;
        for (i, &k) in b.row_indices().iter().enumerate() {
            for (c, &m) in b.col_indices().iter().enumerate() {
                let a8 = (m.k1 == k.k1 || m.k1 == k.k1 + 2) && (m.k2 == k.k2 || m.k2 == k.k2 + 2);
                assert_eq!(b.get(i, c) != 0.0, a8, "{k} vs {m}");
                predicted += usize::from(a8);
            }
        }
        assert_eq!(b.nnz(), predicted);
    }

    #[test]
    fn coo_dump_format() {
        let k = assemble_stiffness(6, None).unwrap();
        let mut buf = Vec::new();
        k.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), k.nnz());
        let first = text.lines().next().unwrap();
        assert_eq!(first, "0 0 1.0000000000000000e0");
        for line in text.lines() {
            let parts: Vec<&str> = line.split(' ').collect();
            assert_eq!(parts.len(), 3);
            let v: f64 = parts[2].parse().unwrap();
            let (i, j): (usize, usize) = (parts[0].parse().unwrap(), parts[1].parse().unwrap());
            assert_eq!(v, k.get(i, j));
        }
    }
}
