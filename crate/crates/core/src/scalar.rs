//! Continuous form of the row sums: with `t = 4r(i−1)` and
//! `r = 1/(2(j−4))`, `δ_i² = D(t, r)` and `s_i = S(t, r)`. The regularized
//! `σ(t, a) = S(t, at)` and its finite-difference derivatives in `a` locate
//! the region where `σ` bends below `1/4`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::report::{num, Table};

fn check_positive(factors: &[f64], what: &str, t: f64, r: f64) -> Result<()> {
    if factors.iter().all(|&f| f > 0.0 && f.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{what}: pole at (t, r) = ({t}, {r})"
        )))
    }
}

pub fn a_func(t: f64, r: f64) -> Result<f64> {
    let tau = 1.0 - t;
    let f = [tau + 3.0 * r, tau + 5.0 * r, tau + 7.0 * r];
    check_positive(&f, "A", t, r)?;
    Ok(1.0 / (f[0] * f[1] * f[1] * f[2]))
}

pub fn b_func(t: f64, r: f64) -> Result<f64> {
    let tau = 1.0 - t;
    let f = [t + r, t + 5.0 * r, tau + r, tau + 5.0 * r];
    check_positive(&f, "B", t, r)?;
    Ok(2.0 / (f[0] * f[1]) + 2.0 / (f[2] * f[3]))
}

pub fn c_func(t: f64, r: f64) -> Result<f64> {
    let tau = 1.0 - t;
    let f = [t + r, t + 5.0 * r, tau + 5.0 * r, tau + 9.0 * r];
    check_positive(&f, "C", t, r)?;
    Ok(2.0 / (f[0] * f[1]) + 2.0 / (f[2] * f[3]))
}

/// `D = A / (B C)`.
pub fn d_func(t: f64, r: f64) -> Result<f64> {
    Ok(a_func(t, r)? / (b_func(t, r)? * c_func(t, r)?))
}

/// `S(t,r) = √(D(t)D(τ+4r)) + D(t) + √(D(t+4r)D(τ)) + D(τ)`, `τ = 1 − t`.
pub fn s_func(t: f64, r: f64) -> Result<f64> {
    let tau = 1.0 - t;
    let d_t = d_func(t, r)?;
    let d_tau = d_func(tau, r)?;
    let d_tau_shift = d_func(tau + 4.0 * r, r)?;
    let d_t_shift = d_func(t + 4.0 * r, r)?;
    Ok((d_t * d_tau_shift).sqrt() + d_t + (d_t_shift * d_tau).sqrt() + d_tau)
}

/// Range of `a` on which `σ(·, a)` is evaluated; it extends past
/// `[0, 1/4]` so that difference stencils centered on the edges fit.
pub const SIGMA_A_RANGE: (f64, f64) = (-0.1, 0.3);

/// `σ(t, a) = S(t, at)` with its limits on `a = 0` and `t = 0`.
pub fn sigma(t: f64, a: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&t) || !(SIGMA_A_RANGE.0..=SIGMA_A_RANGE.1).contains(&a) {
        return Err(Error::domain(format!(
            "sigma: (t, a) = ({t}, {a}) outside the domain"
        )));
    }
    if a == 0.0 {
        return Ok(0.25);
    }
    if t == 0.0 {
        return Ok((1.0 + a) * (1.0 + 9.0 * a) / (4.0 * (1.0 + 3.0 * a) * (1.0 + 7.0 * a)));
    }
    s_func(t, a * t)
}

/// The degree-10 polynomial `G` exactly as printed, `τ = 1 − t`.
pub fn g_eval(t: f64) -> f64 {
    let s = 1.0 - t;
    let terms: [(f64, i32); 9] = [
        (3.0, 10),
        (9.0, 8),
        (-8.0, 7),
        (16.0, 6),
        (24.0, 5),
        (16.0, 4),
        (-8.0, 3),
        (9.0, 2),
        (3.0, 0),
    ];
    terms
        .iter()
        .map(|&(c, e)| c * t.powi(e) * s.powi(10 - e))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdDerivs {
    pub first: f64,
    pub second: f64,
    /// `|R − D(h/2)|`, the gap between the extrapolated value and the
    /// finer plain difference.
    pub first_err: f64,
    pub second_err: f64,
}

/// Central differences in `a` with steps `h` and `h/2`, combined by one
/// Richardson step.
pub fn fd_sigma_derivs(t: f64, a: f64, h: f64) -> Result<FdDerivs> {
    if !(h > 0.0) || a - h < SIGMA_A_RANGE.0 || a + h > SIGMA_A_RANGE.1 {
        return Err(Error::domain(format!(
            "fd_sigma_derivs: stencil a ± h = {a} ± {h} leaves [{}, {}]",
            SIGMA_A_RANGE.0, SIGMA_A_RANGE.1
        )));
    }
    let mid = sigma(t, a)?;
    let diffs = |h: f64| -> Result<(f64, f64)> {
        let plus = sigma(t, a + h)?;
        let minus = sigma(t, a - h)?;
        Ok((
            (plus - minus) / (2.0 * h),
            (plus - 2.0 * mid + minus) / (h * h),
        ))
    };
    let (d1_coarse, d2_coarse) = diffs(h)?;
    let (d1_fine, d2_fine) = diffs(0.5 * h)?;
    let first = (4.0 * d1_fine - d1_coarse) / 3.0;
    let second = (4.0 * d2_fine - d2_coarse) / 3.0;
    Ok(FdDerivs {
        first,
        second,
        first_err: (first - d1_fine).abs(),
        second_err: (second - d2_fine).abs(),
    })
}

pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    /// `sigma[it][ia]`.
    pub sigma: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    /// Per `t`, the first `a` where the second derivative stops being
    /// negative (linear interpolation), or `1/4` if it never does.
    pub boundary: Vec<f64>,
    pub a_star: f64,
    /// `−max ∂²σ/∂a²` over the nodes with `a ≤ 1/10`.
    pub c_star: f64,
}

impl GridScan {
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(&["t", "a", "sigma", "d2_fd"]);
        for (it, &t) in self.t.iter().enumerate() {
            for (ia, &a) in self.a.iter().enumerate() {
                table.push(vec![
                    num(t),
                    num(a),
                    num(self.sigma[it][ia]),
                    num(self.d2[it][ia]),
                ]);
            }
        }
        table.note(&["astar", &num(self.a_star)]);
        table
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.to_table().write_csv(w)
    }
}

/// Second derivative on the `nt × na` grid over `[0, 1/2] × [0, 1/4]`.
pub fn scan_negative_region(nt: usize, na: usize) -> Result<GridScan> {
    if nt < 32 || na < 32 {
        return Err(Error::domain(format!(
            "scan needs nt, na >= 32 (got {nt}, {na})"
        )));
    }
    let t: Vec<f64> = (0..nt).map(|i| 0.5 * i as f64 / (nt - 1) as f64).collect();
    let a: Vec<f64> = (0..na).map(|k| 0.25 * k as f64 / (na - 1) as f64).collect();
    let columns = t
        .par_iter()
        .map(|&tv| {
            let mut s = Vec::with_capacity(na);
            let mut d = Vec::with_capacity(na);
            for &av in &a {
                s.push(sigma(tv, av)?);
                d.push(fd_sigma_derivs(tv, av, FD_STEP)?.second);
            }
            Ok((s, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sigma, d2): (Vec<Vec<f64>>, Vec<Vec<f64>>) = columns.into_iter().unzip();
    let boundary: Vec<f64> = d2.iter().map(|col| zero_crossing(&a, col)).collect();
    let a_star = boundary.iter().copied().fold(f64::INFINITY, f64::min);
    let c_star = -d2
        .iter()
        .flat_map(|col| {
            col.iter()
                .zip(&a)
                .filter(|(_, &av)| av <= 0.1)
                .map(|(&v, _)| v)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GridScan {
        t,
        a,
        sigma,
        d2,
        boundary,
        a_star,
        c_star,
    })
}

fn zero_crossing(a: &[f64], col: &[f64]) -> f64 {
    if col[0] >= 0.0 {
        return a[0];
    }
    for k in 1..col.len() {
        if col[k] >= 0.0 {
            let w = -col[k - 1] / (col[k] - col[k - 1]);
            return a[k - 1] + w * (a[k] - a[k - 1]);
        }
    }
    *a.last().unwrap()
}
