//! Level couplings `A_j` between `W_j` and `W_{j+2}`, the norms of the
//! projections `P_{j+2} : W_j → W_{j+2}`, the row sums of `A_j A_jᵀ` and the
//! backward `T_j` recursion that controls the decay of high-order details.
//!
//! In the normalized basis each `W_j^α` has an orthonormal basis, so
//! `‖P_{j+2}‖ = ‖A_j‖₂`. For the `(even, even)` class `A_j` is bidiagonal
//! with closed-form entries `δ_i` (diagonal) and `δ_{n−i}` (superdiagonal),
//! `n = j/2`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSolver, PolyData, DEFAULT_SEED};
use crate::tensor2d::{detail_indices, stiff_coupling, Index2, Parity};

/// Closed-form `δ_i` for `1 ≤ i ≤ n` (with `δ_n = 0`).
pub fn delta(i: usize, n: usize) -> Result<f64> {
    Ok(-delta_sq(i, n)?.sqrt())
}

/// `δ_i²`, assembled as one ratio of exact integers when they fit in
/// `u128`, so that the only rounding happens in the final division.
pub fn delta_sq(i: usize, n: usize) -> Result<f64> {
    if n < 2 || i == 0 || i > n {
        return Err(Error::domain(format!(
            "delta: need 1 <= i <= n and n >= 2 (i = {i}, n = {n})"
        )));
    }
    if i == n {
        return Ok(0.0);
    }
    let ii = 4 * i as u128;
    let mm = 4 * (n - i) as u128;
    let p1 = (ii - 3) * (ii + 1);
    let p2 = (mm - 3) * (mm + 1);
    let p3 = (mm + 1) * (mm + 5);
    let q = mm + 1;
    let exact = || -> Option<(u128, u128)> {
        let num = p1.checked_mul(p1)?.checked_mul(p2)?.checked_mul(p3)?;
        let den = (4 * q * q)
            .checked_mul((q - 2) * (q + 2))?
            .checked_mul(p1 + p2)?
            .checked_mul(p1 + p3)?;
        Some((num, den))
    };
    Ok(match exact() {
        Some((num, den)) => num as f64 / den as f64,
        None => {
            let (p1, p2, p3, q) = (p1 as f64, p2 as f64, p3 as f64, q as f64);
            (p1 / (p1 + p2)) * (p1 / (p1 + p3)) * (p2 / (q * q)) * (p3 / ((q - 2.0) * (q + 2.0)))
                / 4.0
        }
    })
}

/// Normalized coupling block `A_j` (rows `W_j^α`, columns `W_{j+2}^α`, both
/// ordered by increasing `k1`).
#[derive(Debug, Clone)]
pub struct LevelCouplingMatrix {
    pub level: usize,
    pub parity: Parity,
    pub rows: Vec<Index2>,
    pub cols: Vec<Index2>,
    pub entries: DMatrix<f64>,
}

impl LevelCouplingMatrix {
    /// Nonzeros only at `(i, i)` and `(i, i+1)`.
    pub fn is_bidiagonal(&self) -> bool {
        let (r, c) = self.entries.shape();
        (0..r).all(|i| (0..c).all(|k| k == i || k == i + 1 || self.entries[(i, k)] == 0.0))
    }

    /// `A_j A_jᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.entries * self.entries.transpose()
    }

    /// `‖A_j A_jᵀ‖∞`, the maximal absolute row sum.
    pub fn gram_inf_norm(&self) -> f64 {
        let g = self.gram();
        g.row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub fn build_aj(j: usize, parity: Parity) -> Result<LevelCouplingMatrix> {
    let rows = detail_indices(j, Some(parity))?.indices;
    let cols = detail_indices(j + 2, Some(parity))?.indices;
    for (level, set) in [(j, &rows), (j + 2, &cols)] {
        if set.is_empty() {
            return Err(Error::EmptySpace {
                level,
                parity: parity.to_string(),
            });
        }
    }
    let mut entries = DMatrix::zeros(rows.len(), cols.len());
    for (r, &h) in rows.iter().enumerate() {
        for (c, &k) in cols.iter().enumerate() {
            entries[(r, c)] = stiff_coupling(h, k, true)?;
        }
    }
    Ok(LevelCouplingMatrix {
        level: j,
        parity,
        rows,
        cols,
        entries,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix
/// `tridiag(off, diag, off)` strictly below `x` (Sturm sequence via the
/// pivots of `T − xI = LDLᵀ`).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut pivot = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        let coupling = if i == 0 {
            0.0
        } else {
            off[i - 1] * off[i - 1] / pivot
        };
        pivot = d - x - coupling;
        if pivot == 0.0 {
            pivot = -tiny;
        }
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of a symmetric tridiagonal matrix by bisection.
pub fn largest_eig_tridiagonal(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    assert!(n > 0 && off.len() + 1 == n);
    let mut lo = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut hi = (0..n)
        .map(|i| {
            let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { off[i].abs() } else { 0.0 };
            diag[i] + left + right
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `‖P_{j+2}‖ = ‖A_j‖₂`, from the largest eigenvalue of the tridiagonal
/// `A_j A_jᵀ`.
pub fn proj_norm(j: usize, parity: Parity) -> Result<f64> {
    let a = build_aj(j, parity)?;
    spectral_norm(&a)
}

pub fn spectral_norm(a: &LevelCouplingMatrix) -> Result<f64> {
    if !a.is_bidiagonal() {
        return Err(Error::Contract(format!(
            "A_{} for parity {} is not bidiagonal",
            a.level, a.parity
        )));
    }
    let g = a.gram();
    let n = g.nrows();
    let diag: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    let off: Vec<f64> = (1..n).map(|i| g[(i, i - 1)]).collect();
    Ok(largest_eig_tridiagonal(&diag, &off).max(0.0).sqrt())
}

/// Every nonempty `(level, parity)` pair for `A_j` with `j_min ≤ j ≤ j_max`.
pub fn coupling_levels(j_min: usize, j_max: usize) -> Vec<(usize, Parity)> {
    (j_min.max(4)..=j_max)
        .flat_map(|j| Parity::ALL.into_iter().map(move |p| (j, p)))
        .filter(|&(j, p)| p.admits_level(j) && j >= p.min_bs_level())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjNormEntry {
    /// Level of the domain space `W_j`; the norm is that of `P_{j+2}`.
    pub j: usize,
    pub parity: Parity,
    pub norm: f64,
    /// `(1/2 − ‖P_{j+2}‖) · j²`.
    pub margin_j2: f64,
}

/// Projection norms for all nonempty blocks with `j_min ≤ j ≤ j_max`, in
/// deterministic `(j, parity)` order.
pub fn proj_norm_sweep(j_min: usize, j_max: usize) -> Result<Vec<ProjNormEntry>> {
    coupling_levels(j_min, j_max)
        .into_par_iter()
        .map(|(j, parity)| {
            let norm = proj_norm(j, parity)?;
            Ok(ProjNormEntry {
                j,
                parity,
                norm,
                margin_j2: (0.5 - norm) * (j * j) as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSumProfile {
    pub j: usize,
    /// `s_1, …, s_{n−1}`.
    pub values: Vec<f64>,
    pub max: f64,
    /// `1/4 − max_i s_i`.
    pub margin: f64,
}

impl RowSumProfile {
    /// `s_i`, 1-based.
    pub fn s(&self, i: usize) -> f64 {
        self.values[i - 1]
    }
}

/// Row sums of `A_j A_jᵀ` for the `(even, even)` block from the closed-form
/// `δ_i`.
pub fn row_sums(j: usize) -> Result<RowSumProfile> {
    if j % 2 == 1 || j < 8 {
        return Err(Error::domain(format!(
            "row_sums: need even j >= 8 (got j = {j})"
        )));
    }
    let n = j / 2;
    // d[i] = δ_i for 1 ≤ i ≤ n, d[0] unused.
    let mut d = vec![0.0; n + 1];
    for (i, slot) in d.iter_mut().enumerate().skip(1) {
        *slot = delta(i, n)?;
    }
    let values: Vec<f64> = (1..n)
        .map(|i| d[i] * d[n - i + 1] + d[i] * d[i] + d[n - i] * d[n - i] + d[i + 1] * d[n - i])
        .collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RowSumProfile {
        j,
        values,
        max,
        margin: 0.25 - max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginFit {
    /// `min_j (1/4 − max_i s_i^{(j)}) · j²`.
    pub constant: f64,
    pub argmin_j: usize,
    /// Largest row sum seen over the sweep.
    pub max_row_sum: f64,
}

pub fn margin_constant(j_max: usize) -> Result<MarginFit> {
    if j_max < 8 {
        return Err(Error::domain(format!(
            "margin_constant: need j_max >= 8 (got {j_max})"
        )));
    }
    let fits = (8..=j_max)
        .step_by(2)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let prof = row_sums(j)?;
            Ok((prof.margin * (j * j) as f64, j, prof.max))
        })
        .collect::<Result<Vec<_>>>()?;
    let (constant, argmin_j, _) =
        fits.iter().copied().fold(
            (f64::INFINITY, 0, 0.0),
            |acc, x| if x.0 < acc.0 { x } else { acc },
        );
    let max_row_sum = fits.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(MarginFit {
        constant,
        argmin_j,
        max_row_sum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TLevel {
    pub j: usize,
    /// `‖T_j⁻¹‖`.
    pub inv_norm: f64,
    /// `‖T_j⁻¹ P_j‖` and the bound `(m+1)/(m+2)`, `m = (top − j)/2`, for
    /// `r+4 ≤ j ≤ top`.
    pub tp_norm: Option<f64>,
    pub alpha_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub parity: Parity,
    /// Last level whose Galerkin equation sees the data.
    pub r: usize,
    pub top: usize,
    pub levels: Vec<TLevel>,
    /// `Π_{j=r+4}^{top} ‖T_j⁻¹ P_j‖` and its bound `2/(top − r)`.
    pub product: f64,
    pub product_bound: f64,
    /// `max_j ‖U_j + T_j⁻¹ P_j U_{j−2}‖ / ‖u_q‖` for a random datum.
    pub recursion_residual: f64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TRecursionReport {
    pub p: usize,
    pub q: usize,
    pub chains: Vec<ChainReport>,
}

impl TRecursionReport {
    pub fn violations(&self) -> usize {
        self.chains.iter().map(|c| c.violations.len()).sum()
    }
}

/// Tolerance for the recursion identity on actual Galerkin solutions.
const RECURSION_TOL: f64 = 1e-10;

/// Build `T_top = I`, `T_j = I − A_j T_{j+2}⁻¹ A_jᵀ` for every parity
/// chain of `V_q`, and check `‖T_j⁻¹‖ ≤ 2`, `‖T_j⁻¹P_j‖ ≤ (m+1)/(m+2)` and
/// the product bound.
pub fn verify_t_recursion(p: usize, q: usize) -> Result<TRecursionReport> {
    if q <= p + 4 {
        return Err(Error::domain(format!(
            "verify_t_recursion needs q > p + 4 (p = {p}, q = {q})"
        )));
    }
    let solver = GalerkinSolver::new(q)?;
    let f = PolyData::random(p, DEFAULT_SEED);
    let u = solver.solve(&f)?;
    let u_norm = solver.energy_norm(&u)?;

    let mut chains = Vec::new();
    for parity in Parity::ALL {
        let lp = parity.level_parity();
        let r = if (p + 4) % 2 == lp { p + 4 } else { p + 3 };
        let top = if q % 2 == lp { q } else { q - 1 };
        if top < r + 4 {
            continue;
        }
        chains.push(chain_report(parity, r, top, &u, u_norm)?);
    }
    Ok(TRecursionReport { p, q, chains })
}

fn level_vector(u: &crate::galerkin::BSVector, j: usize, parity: Parity) -> Result<DVector<f64>> {
    let idx = detail_indices(j, Some(parity))?.indices;
    Ok(DVector::from_iterator(
        idx.len(),
        idx.iter().map(|&k| u.coeff(k)),
    ))
}

fn chain_report(
    parity: Parity,
    r: usize,
    top: usize,
    u: &crate::galerkin::BSVector,
    u_norm: f64,
) -> Result<ChainReport> {
    // Inverses T_j⁻¹ indexed by (j − (r+2))/2.
    let levels_down: Vec<usize> = (0..=(top - r - 2) / 2).map(|m| top - 2 * m).collect();
    let mut inverses: Vec<(usize, DMatrix<f64>)> = Vec::with_capacity(levels_down.len());
    let mut norms = Vec::with_capacity(levels_down.len());
    for &j in &levels_down {
        let t = if j == top {
            let d = detail_indices(j, Some(parity))?.len();
            DMatrix::identity(d, d)
        } else {
            let a = build_aj(j, parity)?.entries;
            let next_inv = &inverses.last().expect("chain is built top-down").1;
            let d = a.nrows();
            DMatrix::identity(d, d) - &a * next_inv * a.transpose()
        };
        let eig = nalgebra::SymmetricEigen::new(t.clone());
        let lmin = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(lmin > 0.0) {
            return Err(Error::Contract(format!(
                "T_{j} for parity {parity} is singular or indefinite (λ_min = {lmin:e})"
            )));
        }
        let inv = t
            .cholesky()
            .ok_or_else(|| Error::Contract(format!("T_{j} not positive definite")))?
            .inverse();
        norms.push(1.0 / lmin);
        inverses.push((j, inv));
    }

    let mut levels = Vec::new();
    let mut violations = Vec::new();
    let mut product = 1.0;
    let mut residual: f64 = 0.0;
    for ((j, inv), inv_norm) in inverses.iter().zip(&norms) {
        let j = *j;
        if *inv_norm > 2.0 {
            violations.push(format!("||T_{j}^-1|| = {inv_norm} > 2 (parity {parity})"));
        }
        let (tp_norm, alpha_bound) = if j >= r + 4 {
            let a_prev = build_aj(j - 2, parity)?.entries;
            let tp = inv * a_prev.transpose();
            let s = tp.singular_values().iter().copied().fold(0.0, f64::max);
            let m = (top - j) / 2;
            let bound = (m + 1) as f64 / (m + 2) as f64;
            if s > bound {
                violations.push(format!(
                    "||T_{j}^-1 P_{j}|| = {s} > {bound} (parity {parity})"
                ));
            }
            product *= s;
            if u_norm > 0.0 {
                let uj = level_vector(u, j, parity)?;
                let ujm2 = level_vector(u, j - 2, parity)?;
                let res = (&uj + &tp * &ujm2).norm() / u_norm;
                residual = residual.max(res);
            }
            (Some(s), Some(bound))
        } else {
            (None, None)
        };
        levels.push(TLevel {
            j,
            inv_norm: *inv_norm,
            tp_norm,
            alpha_bound,
        });
    }
    let product_bound = 2.0 / (top - r) as f64;
    if product > product_bound {
        violations.push(format!(
            "chain product {product} > 2/(q-r) = {product_bound} (parity {parity})"
        ));
    }
    if residual > RECURSION_TOL {
        violations.push(format!(
            "U_j = -T_j^-1 P_j U_j-2 violated by {residual:e} (parity {parity})"
        ));
    }
    levels.reverse();
    Ok(ChainReport {
        parity,
        r,
        top,
        levels,
        product,
        product_bound,
        recursion_residual: residual,
        violations,
    })
}
