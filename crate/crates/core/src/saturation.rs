//! Saturation constants `C_{p,q,r} = max_{f ∈ P_p} ‖u_r‖ / ‖u_q‖` as a
//! generalized eigenvalue problem, stabilized in `r`, and the sweeps over
//! `p` for constant and proportional enrichment rules.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSolver, PolyData, DEFAULT_R_CAP};
use crate::report::{num, Table};
use crate::tensor2d::{index_set_p, Index2};

/// `M_q` with `(M_q)_{k,k'} = (∇u_q(Θ_k), ∇u_q(Θ_k'))` for `|k|, |k'| ≤ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramForm {
    pub p: usize,
    pub q: usize,
    pub indices: Vec<Index2>,
    pub matrix: DMatrix<f64>,
}

impl GramForm {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// `cᵀ M_q c`.
    pub fn quad(&self, c: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(c);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }
}

pub fn gram_form(p: usize, q: usize) -> Result<GramForm> {
    if q < p + 4 {
        return Err(Error::domain(format!(
            "gram_form needs q >= p + 4 (p = {p}, q = {q})"
        )));
    }
    let solver = GalerkinSolver::new(q)?;
    Ok(GramForm {
        p,
        q,
        indices: index_set_p(p),
        matrix: gram_with(&solver, p)?,
    })
}

/// `Bᵀ K⁻¹ B` through half solves `L⁻¹ b_k`, one per data function.
/// No definiteness requirement: for `q < p + 4` the result is singular.
fn gram_with(solver: &GalerkinSolver, p: usize) -> Result<DMatrix<f64>> {
    let indices = index_set_p(p);
    let halves = indices
        .par_iter()
        .map(|&k| {
            let mut f = PolyData::zero(p);
            f.add_theta(k, 1.0)?;
            Ok(solver.factor().half_solve(&solver.rhs_entries(&f)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = indices.len();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v: f64 = halves[a]
                .iter()
                .flat_map(|x| halves[b].iter().map(move |y| x.dot(y)))
                .sum();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(m)
}

type GramCell = OnceLock<std::result::Result<Arc<DMatrix<f64>>, String>>;

/// Gram matrices of the largest data degree, computed once per level and
/// shared by every `(p, rule)` that asks for them. Smaller degrees read the
/// leading principal block, since `index_set_p` lists indices by degree.
pub struct GramCache {
    p_max: usize,
    cells: Mutex<HashMap<usize, Arc<GramCell>>>,
}

impl GramCache {
    pub fn new(p_max: usize) -> Self {
        Self {
            p_max,
            cells: Mutex::new(HashMap::new()),
        }
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    /// `M_r` for data degree `p ≤ p_max`.
    pub fn gram(&self, p: usize, r: usize) -> Result<DMatrix<f64>> {
        if p > self.p_max {
            return Err(Error::domain(format!(
                "data degree {p} exceeds cache degree {}",
                self.p_max
            )));
        }
        let cell = self
            .cells
            .lock()
            .expect("gram cache poisoned")
            .entry(r)
            .or_default()
            .clone();
        let full = cell
            .get_or_init(|| {
                GalerkinSolver::new(r)
                    .and_then(|s| gram_with(&s, self.p_max))
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(Error::Contract)?;
        let n = (p + 1) * (p + 2) / 2;
        Ok(full.view((0, 0), (n, n)).into_owned())
    }
}

/// `sqrt(λ_max)` of the pencil `(M_r, M_q)`.
pub fn pencil_max(m_q: &DMatrix<f64>, m_r: &DMatrix<f64>) -> Result<f64> {
    let chol = m_q.clone().cholesky().ok_or_else(|| {
        Error::Contract("Gram matrix of the coarse level is not positive definite".into())
    })?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(m_r)
        .ok_or_else(|| Error::Contract("singular Cholesky factor".into()))?;
    let y = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Contract("singular Cholesky factor".into()))?;
    let sym = (&y + y.transpose()) * 0.5;
    let lmax = sym
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(lmax.max(0.0).sqrt())
}

pub fn c_pqr(p: usize, q: usize, r: usize) -> Result<f64> {
    if !(r > q && q >= p + 4) {
        return Err(Error::domain(format!(
            "c_pqr needs r > q >= p + 4 (p = {p}, q = {q}, r = {r})"
        )));
    }
    let m_q = gram_form(p, q)?;
    let m_r = gram_form(p, r)?;
    pencil_max(&m_q.matrix, &m_r.matrix)
}

/// How the enriched level `q` follows the degree `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementRule {
    /// `V_p → V_{p+k}` with data in `P_{p−2}`, the range of `−Δ` on `V_p`.
    Constant(usize),
    /// `q = max(⌈λp⌉ + 1, p + 5)` with data in `P_p`.
    Proportional(f64),
}

impl IncrementRule {
    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            IncrementRule::Constant(k) if k < 2 => Err(Error::domain(format!(
                "increment k must be at least 2 (got {k})"
            ))),
            IncrementRule::Constant(_) if p < 2 => Err(Error::domain(format!(
                "constant increment needs p >= 2 (got {p})"
            ))),
            IncrementRule::Proportional(l) if !(l > 1.0 && l.is_finite()) => Err(Error::domain(
                format!("factor lambda must be finite and > 1 (got {l})"),
            )),
            _ => Ok(()),
        }
    }

    pub fn q_for(&self, p: usize) -> usize {
        match *self {
            IncrementRule::Constant(k) => p + k,
            IncrementRule::Proportional(l) => ((l * p as f64).ceil() as usize + 1).max(p + 5),
        }
    }

    pub fn data_degree(&self, p: usize) -> usize {
        match *self {
            IncrementRule::Constant(_) => p - 2,
            IncrementRule::Proportional(_) => p,
        }
    }
}

impl fmt::Display for IncrementRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncrementRule::Constant(k) => write!(f, "k={k}"),
            IncrementRule::Proportional(l) => write!(f, "lambda={l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationRecord {
    pub p: usize,
    pub rule: IncrementRule,
    pub data_degree: usize,
    pub q: usize,
    pub r_final: usize,
    pub c: f64,
    pub iters: usize,
}

/// Stopping rule and cap for the `r` schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub tol: f64,
    pub cap: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            cap: DEFAULT_R_CAP,
        }
    }
}

/// `C_{p,q,r}` along `r = 2q, 2q + s, 2q + 2s, …` with `s = max(q, 16)`,
/// until two consecutive values agree to `tol` (relative).
pub fn stabilize(p: usize, q: usize, tol: f64) -> Result<SaturationRecord> {
    let cache = GramCache::new(p);
    let schedule = Schedule {
        tol,
        ..Schedule::default()
    };
    stabilize_with(
        &cache,
        p,
        q,
        schedule,
        IncrementRule::Constant(q.saturating_sub(p)),
        p,
    )
}

fn stabilize_with(
    cache: &GramCache,
    p: usize,
    q: usize,
    schedule: Schedule,
    rule: IncrementRule,
    row_p: usize,
) -> Result<SaturationRecord> {
    if !(schedule.tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {}",
            schedule.tol
        )));
    }
    if q < p + 4 {
        return Err(Error::domain(format!(
            "stabilize needs q >= p + 4 (p = {p}, q = {q})"
        )));
    }
    let m_q = cache.gram(p, q)?;
    let step = q.max(16);
    let mut record = SaturationRecord {
        p: row_p,
        rule,
        data_degree: p,
        q,
        r_final: 0,
        c: f64::NAN,
        iters: 0,
    };
    let mut r = 2 * q;
    loop {
        if r > schedule.cap {
            return Err(Error::CapExceeded {
                r,
                cap: schedule.cap,
                partial: Box::new(record),
            });
        }
        let c = pencil_max(&m_q, &cache.gram(p, r)?)?;
        let prev = record.c;
        record.c = c;
        record.r_final = r;
        record.iters += 1;
        if record.iters > 1 && (c - prev).abs() < schedule.tol * c {
            return Ok(record);
        }
        r += step;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`; `None` with fewer
/// than two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug)]
pub struct SweepRow {
    pub p: usize,
    pub outcome: Result<SaturationRecord>,
}

#[derive(Debug)]
pub struct Sweep {
    pub rule: IncrementRule,
    pub schedule: Schedule,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn records(&self) -> impl Iterator<Item = &SaturationRecord> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Fit of `C` against `p` over the successful rows.
    pub fn fit(&self) -> Option<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self.records().map(|r| (r.p as f64, r.c)).unzip();
        linear_fit(&xs, &ys)
    }

    pub fn c_range(&self) -> Option<(f64, f64)> {
        self.records().map(|r| r.c).fold(None, |acc, c| match acc {
            None => Some((c, c)),
            Some((lo, hi)) => Some((lo.min(c), hi.max(c))),
        })
    }

    /// `C·(λ−1)/λ` per record for a proportional rule.
    pub fn scaled_constants(&self) -> Vec<(usize, f64)> {
        match self.rule {
            IncrementRule::Proportional(l) => {
                self.records().map(|r| (r.p, r.c * (l - 1.0) / l)).collect()
            }
            IncrementRule::Constant(_) => Vec::new(),
        }
    }

    /// One row per record, then `#error` lines for failed rows and the
    /// `#fit` summary.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["p", "rule", "q", "r_final", "C", "iters"]);
        for row in &self.rows {
            match &row.outcome {
                Ok(r) => t.push(vec![
                    r.p.to_string(),
                    r.rule.to_string(),
                    r.q.to_string(),
                    r.r_final.to_string(),
                    num(r.c),
                    r.iters.to_string(),
                ]),
                Err(e) => t.note(&["error", &row.p.to_string(), e.kind(), &e.to_string()]),
            }
        }
        match self.fit() {
            Some(f) => t.note(&["fit", &num(f.slope), &num(f.intercept), &num(f.r2)]),
            None => t.note(&["fit", "nan", "nan", "nan"]),
        }
        t
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.to_table().write_csv(w)
    }
}

/// One stabilized record per `p`, rows computed independently and kept in
/// `p` order.
pub fn sweep(
    p_range: std::ops::RangeInclusive<usize>,
    rule: IncrementRule,
    schedule: Schedule,
) -> Result<Sweep> {
    let p_max = p_range
        .clone()
        .map(|p| rule.data_degree(p.max(2)))
        .max()
        .unwrap_or(0);
    sweep_with(&GramCache::new(p_max), p_range, rule, schedule)
}

pub fn sweep_with(
    cache: &GramCache,
    p_range: std::ops::RangeInclusive<usize>,
    rule: IncrementRule,
    schedule: Schedule,
) -> Result<Sweep> {
    for p in p_range.clone() {
        rule.validate(p)?;
    }
    let rows = p_range
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|p| {
            let outcome =
                stabilize_with(cache, rule.data_degree(p), rule.q_for(p), schedule, rule, p);
            SweepRow { p, outcome }
        })
        .collect();
    Ok(Sweep {
        rule,
        schedule,
        rows,
    })
}
