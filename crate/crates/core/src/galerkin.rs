//! Galerkin solutions of `−Δu = f`, `u = 0` on `∂Ω`, in `V_q` for polynomial
//! data, their energy norms and multilevel splittings into details `U_j ∈ W_j`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assembly::{assemble_stiffness, load_row, SpdFactor, StiffnessMatrix};
use crate::basis1d::{monomial_in_legendre, theta_eval};
use crate::error::{Error, Result};
use crate::tensor2d::{index_set_v, Index2, Parity};

/// Seed used whenever the caller does not provide one.
pub const DEFAULT_SEED: u64 = 0x5EED_2017_0000_0001;

/// Default upper limit on the reference level `R`.
pub const DEFAULT_R_CAP: usize = 512;

/// Polynomial data `f ∈ P_p(Ω)` as coefficients over the orthonormal
/// tensor Legendre functions `Θ_k`, `|k| ≤ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyData {
    degree: usize,
    coeffs: BTreeMap<Index2, f64>,
}

impl PolyData {
    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Add `c Θ_k`.
    pub fn add_theta(&mut self, k: Index2, c: f64) -> Result<()> {
        if k.total() > self.degree {
            return Err(Error::domain(format!(
                "term {k} has degree {} > declared degree {}",
                k.total(),
                self.degree
            )));
        }
        if c != 0.0 {
            *self.coeffs.entry(k).or_insert(0.0) += c;
        }
        Ok(())
    }

    /// Add `c L_{k1}(x) L_{k2}(y)` (classical, unnormalized Legendre).
    pub fn add_legendre(&mut self, k: Index2, c: f64) -> Result<()> {
        let scale = ((k.k1 as f64 + 0.5) * (k.k2 as f64 + 0.5)).sqrt();
        self.add_theta(k, c / scale)
    }

    /// Add `c x^i y^j`, converted exactly to the Legendre form.
    pub fn add_monomial(&mut self, i: usize, j: usize, c: f64) -> Result<()> {
        if i + j > self.degree {
            return Err(Error::domain(format!(
                "term x^{i} y^{j} has degree {} > declared degree {}",
                i + j,
                self.degree
            )));
        }
        let cx = monomial_in_legendre(i);
        let cy = monomial_in_legendre(j);
        for (a, &va) in cx.iter().enumerate() {
            for (b, &vb) in cy.iter().enumerate() {
                if va != 0.0 && vb != 0.0 {
                    self.add_legendre(Index2::new(a, b), c * va * vb)?;
                }
            }
        }
        Ok(())
    }

    /// `f ≡ 1`.
    pub fn one() -> Self {
        let mut f = Self::zero(0);
        f.add_legendre(Index2::new(0, 0), 1.0).unwrap();
        f
    }

    /// `f = 2(1−x²) + 2(1−y²) = −Δ[(1−x²)(1−y²)]`.
    pub fn bubble_laplacian() -> Self {
        let mut f = Self::zero(2);
        f.add_monomial(0, 0, 4.0).unwrap();
        f.add_monomial(2, 0, -2.0).unwrap();
        f.add_monomial(0, 2, -2.0).unwrap();
        f
    }

    /// Independent standard normal `Θ_k` coefficients for all `|k| ≤ p`.
    pub fn random(p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(p, &mut rng)
    }

    pub fn random_with<R: Rng>(p: usize, rng: &mut R) -> Self {
        let mut f = Self::zero(p);
        for j in 0..=p {
            for k1 in 0..=j {
                let c: f64 = rng.sample(StandardNormal);
                f.coeffs.insert(Index2::new(k1, j - k1), c);
            }
        }
        f
    }

    pub fn terms(&self) -> impl Iterator<Item = (Index2, f64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    pub fn coeff(&self, k: Index2) -> f64 {
        self.coeffs.get(&k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|(&k, &c)| (k, s * c)).collect(),
        }
    }

    /// Component of parity class `α` (even/odd in each variable).
    pub fn parity_part(&self, parity: Parity) -> Self {
        Self {
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.parity() == parity)
                .map(|(&k, &c)| (k, c))
                .collect(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms()
            .map(|(k, c)| c * theta_eval(k.k1, x) * theta_eval(k.k2, y))
            .sum()
    }
}

/// Element of `V_q` as coefficients over `Φ̂_k`, `k ∈ index_set_v(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSVector {
    q: usize,
    indices: Arc<Vec<Index2>>,
    coeffs: Vec<f64>,
}

impl BSVector {
    pub fn zeros(q: usize) -> Result<Self> {
        let indices = Arc::new(index_set_v(q)?);
        let coeffs = vec![0.0; indices.len()];
        Ok(Self { q, indices, coeffs })
    }

    pub fn from_coeffs(q: usize, coeffs: Vec<f64>) -> Result<Self> {
        let indices = Arc::new(index_set_v(q)?);
        Self::with_indices(q, indices, coeffs)
    }

    fn with_indices(q: usize, indices: Arc<Vec<Index2>>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != indices.len() {
            return Err(Error::domain(format!(
                "V_{q} has dimension {} but {} coefficients were given",
                indices.len(),
                coeffs.len()
            )));
        }
        Ok(Self { q, indices, coeffs })
    }

    /// Standard normal coefficients.
    pub fn random_with<R: Rng>(q: usize, rng: &mut R) -> Result<Self> {
        let mut v = Self::zeros(q)?;
        for c in &mut v.coeffs {
            *c = rng.sample(StandardNormal);
        }
        Ok(v)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn indices(&self) -> &[Index2] {
        &self.indices
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: Index2) -> f64 {
        self.indices
            .iter()
            .position(|&m| m == k)
            .map_or(0.0, |i| self.coeffs[i])
    }

    /// The same function viewed in `V_r`, `r ≥ q`.
    pub fn embed(&self, r: usize) -> Result<Self> {
        if r < self.q {
            return Err(Error::domain(format!(
                "cannot embed V_{} into V_{r}",
                self.q
            )));
        }
        // Canonical order is nested: V_q is a prefix of V_r.
        let mut out = Self::zeros(r)?;
        out.coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        Ok(out)
    }

    /// Coefficient truncation to levels `≤ q'`, as an element of `V_{q'}`.
    pub fn truncate(&self, q: usize) -> Result<Self> {
        if q > self.q {
            return Err(Error::domain(format!(
                "cannot truncate V_{} to V_{q}",
                self.q
            )));
        }
        let t = Self::zeros(q)?;
        let n = t.coeffs.len();
        Self::from_coeffs(q, self.coeffs[..n].to_vec())
    }

    pub fn sub(&self, other: &BSVector) -> Result<Self> {
        if self.q != other.q {
            return Err(Error::domain("vectors live in different spaces"));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Self::with_indices(self.q, self.indices.clone(), coeffs)
    }

    /// Coefficients on level `j` only, zero elsewhere.
    pub fn level_part(&self, j: usize) -> Self {
        let coeffs = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(k, &c)| if k.total() == j { c } else { 0.0 })
            .collect();
        Self {
            q: self.q,
            indices: self.indices.clone(),
            coeffs,
        }
    }

    /// Coefficients of parity class `α` only.
    pub fn parity_part(&self, parity: Parity) -> Self {
        let coeffs = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(k, &c)| if k.parity() == parity { c } else { 0.0 })
            .collect();
        Self {
            q: self.q,
            indices: self.indices.clone(),
            coeffs,
        }
    }

    /// Euclidean coefficient norm; on a single level this is the energy norm
    /// because `{Φ̂_k : |k| = j}` is orthonormal.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Splitting `u = Σ_j U_j` with `U_j ∈ W_j`.
#[derive(Debug, Clone)]
pub struct DetailDecomposition {
    pub q: usize,
    pub details: BTreeMap<usize, BSVector>,
}

impl DetailDecomposition {
    pub fn detail(&self, j: usize) -> Option<&BSVector> {
        self.details.get(&j)
    }

    pub fn reassemble(&self) -> Result<BSVector> {
        let mut acc = BSVector::zeros(self.q)?;
        for u in self.details.values() {
            for (a, b) in acc.coeffs.iter_mut().zip(&u.coeffs) {
                *a += b;
            }
        }
        Ok(acc)
    }
}

pub fn multilevel_split(u: &BSVector) -> DetailDecomposition {
    let details = (4..=u.q).map(|j| (j, u.level_part(j))).collect();
    DetailDecomposition { q: u.q, details }
}

/// Assembled and factored stiffness of `V_q`; immutable and shareable.
#[derive(Debug, Clone)]
pub struct GalerkinSolver {
    stiffness: StiffnessMatrix,
    factor: SpdFactor,
}

impl GalerkinSolver {
    pub fn new(q: usize) -> Result<Self> {
        let stiffness = assemble_stiffness(q, None)?;
        let factor = SpdFactor::new(&stiffness)?;
        Ok(Self { stiffness, factor })
    }

    pub fn q(&self) -> usize {
        self.stiffness.q()
    }

    pub fn stiffness(&self) -> &StiffnessMatrix {
        &self.stiffness
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Sparse right-hand side `(position, (f, Φ̂_m))`.
    pub fn rhs_entries(&self, f: &PolyData) -> Result<Vec<(usize, f64)>> {
        let position = self.position_map();
        let mut out = Vec::new();
        for (k, c) in f.terms() {
            for (col, v) in load_row(k, &position)? {
                out.push((col, c * v));
            }
        }
        Ok(out)
    }

    fn position_map(&self) -> std::collections::HashMap<Index2, usize> {
        self.stiffness
            .indices()
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect()
    }

    pub fn rhs(&self, f: &PolyData) -> Result<Vec<f64>> {
        let mut b = vec![0.0; self.stiffness.dim()];
        for (i, v) in self.rhs_entries(f)? {
            b[i] += v;
        }
        Ok(b)
    }

    pub fn solve(&self, f: &PolyData) -> Result<BSVector> {
        let b = self.rhs(f)?;
        let x = self.factor.solve_refined(&self.stiffness, &b)?;
        BSVector::with_indices(self.q(), self.stiffness.indices().clone(), x)
    }

    /// `‖u_q(f)‖²` through the factor, without forming `u_q`.
    pub fn energy_sq_of(&self, f: &PolyData) -> Result<f64> {
        let halves = self.factor.half_solve(&self.rhs_entries(f)?);
        Ok(halves.iter().map(|h| h.norm_sq()).sum())
    }

    pub fn inner(&self, u: &BSVector, v: &BSVector) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.stiffness.bilinear(&u.coeffs, &v.coeffs))
    }

    pub fn energy_norm(&self, u: &BSVector) -> Result<f64> {
        Ok(self.inner(u, u)?.max(0.0).sqrt())
    }

    fn check(&self, u: &BSVector) -> Result<()> {
        if u.q != self.q() {
            return Err(Error::domain(format!(
                "vector of V_{} used with the solver of V_{}",
                u.q,
                self.q()
            )));
        }
        Ok(())
    }
}

/// Solve for `u_q(f)` with a fresh solver.
pub fn solve(f: &PolyData, q: usize) -> Result<BSVector> {
    GalerkinSolver::new(q)?.solve(f)
}

/// `sqrt(aᵀ K a)` with `K` the stiffness of the vector's own space.
pub fn energy_norm(u: &BSVector) -> Result<f64> {
    let k = assemble_stiffness(u.q, None)?;
    Ok(k.bilinear(&u.coeffs, &u.coeffs).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEntry {
    pub j: usize,
    pub detail_norm: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub p: usize,
    pub q: usize,
    pub solution_norm: f64,
    pub entries: [DecayEntry; 2],
}

impl DecayReport {
    pub fn holds(&self) -> bool {
        self.entries.iter().all(|e| e.holds)
    }
}

/// Compare `‖U_j‖` for `j ∈ {q−1, q}` with `6/(q−p) · ‖u_q‖`.
pub fn decay_report(f: &PolyData, q: usize) -> Result<DecayReport> {
    decay_report_with(&GalerkinSolver::new(q)?, f)
}

pub fn decay_report_with(solver: &GalerkinSolver, f: &PolyData) -> Result<DecayReport> {
    let p = f.degree();
    let q = solver.q();
    if q <= p + 4 {
        return Err(Error::domain(format!(
            "decay_report needs q > p + 4 (p = {p}, q = {q})"
        )));
    }
    let u = solver.solve(f)?;
    let norm = solver.energy_norm(&u)?;
    let bound = 6.0 / (q - p) as f64 * norm;
    let entry = |j: usize| -> Result<DecayEntry> {
        let detail_norm = solver.energy_norm(&u.level_part(j))?;
        Ok(DecayEntry {
            j,
            detail_norm,
            bound,
            holds: detail_norm <= bound,
        })
    };
    Ok(DecayReport {
        p,
        q,
        solution_norm: norm,
        entries: [entry(q - 1)?, entry(q)?],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNorm {
    pub value: f64,
    pub r_used: usize,
    /// `(R, ‖u_R‖)` along the doubling schedule.
    pub history: Vec<(usize, f64)>,
}

/// `‖u_R‖` along `R = R₀, 2R₀, 4R₀, …` until the relative change drops
/// below `tol`.
pub fn reference_norm(f: &PolyData, tol: f64) -> Result<ReferenceNorm> {
    reference_norm_with_cap(f, tol, DEFAULT_R_CAP)
}

pub fn reference_norm_with_cap(f: &PolyData, tol: f64, cap: usize) -> Result<ReferenceNorm> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut r = (f.degree() + 5).max(8);
    if r > cap {
        return Err(Error::domain(format!(
            "initial level {r} exceeds cap {cap}"
        )));
    }
    let mut history = Vec::new();
    loop {
        let value = GalerkinSolver::new(r)?.energy_sq_of(f)?.sqrt();
        history.push((r, value));
        if value == 0.0 {
            return Ok(ReferenceNorm {
                value,
                r_used: r,
                history,
            });
        }
        if let [.., (_, prev), _] = history.as_slice() {
            if (value - prev).abs() < tol * value {
                return Ok(ReferenceNorm {
                    value,
                    r_used: r,
                    history,
                });
            }
        }
        if 2 * r > cap {
            return Err(Error::Contract(format!(
                "reference norm not stable to {tol:e} by R = {r} (cap {cap})"
            )));
        }
        r *= 2;
    }
}
