//! Tensor-product index algebra on the square `Ω = I × I`.

use std::fmt;

use crate::basis1d::{ip_phi_h1, ip_phi_l2, ip_theta_phi};
use crate::error::{Error, Result};

/// Multi-index `k = (k1, k2)`; used both for Legendre (`k_i ≥ 0`) and
/// Babuška–Shen (`k_i ≥ 2`) functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Index2 {
    pub k1: usize,
    pub k2: usize,
}

impl Index2 {
    pub const fn new(k1: usize, k2: usize) -> Self {
        Self { k1, k2 }
    }

    /// `|k| = k1 + k2`.
    pub const fn total(self) -> usize {
        self.k1 + self.k2
    }

    pub const fn parity(self) -> Parity {
        Parity::new((self.k1 % 2) as u8, (self.k2 % 2) as u8)
    }

    pub const fn is_bs(self) -> bool {
        self.k1 >= 2 && self.k2 >= 2
    }

    /// Key of the canonical order: by `|k|`, then by `k1`.
    pub fn canonical_key(self) -> (usize, usize) {
        (self.total(), self.k1)
    }
}

impl fmt::Display for Index2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// Even/odd signature `(α1, α2)` of a multi-index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Parity {
    pub a1: u8,
    pub a2: u8,
}

impl Parity {
    pub const EVEN_EVEN: Parity = Parity::new(0, 0);
    pub const EVEN_ODD: Parity = Parity::new(0, 1);
    pub const ODD_EVEN: Parity = Parity::new(1, 0);
    pub const ODD_ODD: Parity = Parity::new(1, 1);
    pub const ALL: [Parity; 4] = [
        Parity::EVEN_EVEN,
        Parity::EVEN_ODD,
        Parity::ODD_EVEN,
        Parity::ODD_ODD,
    ];

    pub const fn new(a1: u8, a2: u8) -> Self {
        Self { a1, a2 }
    }

    /// Position in [`Parity::ALL`].
    pub fn slot(self) -> usize {
        (self.a1 as usize) * 2 + self.a2 as usize
    }

    /// Parity of `|k|` for every `k` of this class.
    pub fn level_parity(self) -> usize {
        ((self.a1 + self.a2) % 2) as usize
    }

    /// Smallest total degree of a Babuška–Shen index of this class.
    pub fn min_bs_level(self) -> usize {
        4 + self.a1 as usize + self.a2 as usize
    }

    pub fn admits_level(self, j: usize) -> bool {
        j % 2 == self.level_parity()
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.a1, self.a2)
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
        match digits.as_str() {
            "00" => Ok(Parity::EVEN_EVEN),
            "01" => Ok(Parity::EVEN_ODD),
            "10" => Ok(Parity::ODD_EVEN),
            "11" => Ok(Parity::ODD_ODD),
            _ => Err(Error::Parse(format!("unknown parity class '{s}'"))),
        }
    }
}

/// All `k` with `k1, k2 ≥ 2` and `|k| ≤ q`, ordered by `|k|` then `k1`.
pub fn index_set_v(q: usize) -> Result<Vec<Index2>> {
    if q < 4 {
        return Err(Error::domain(format!(
            "index_set_v: V_q is trivial for q < 4 (got q = {q})"
        )));
    }
    let mut out = Vec::with_capacity((q - 3) * (q - 2) / 2);
    for j in 4..=q {
        out.extend((2..=j - 2).map(|k1| Index2::new(k1, j - k1)));
    }
    Ok(out)
}

/// Legendre indices with `|k| ≤ p`, ordered by `|k|` then `k1`.
pub fn index_set_p(p: usize) -> Vec<Index2> {
    (0..=p)
        .flat_map(|j| (0..=j).map(move |k1| Index2::new(k1, j - k1)))
        .collect()
}

/// Basis indices of the detail space `W_j`, possibly restricted to one
/// parity class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetailIndexSet {
    pub level: usize,
    pub parity: Option<Parity>,
    pub indices: Vec<Index2>,
}

impl DetailIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn detail_indices(j: usize, parity: Option<Parity>) -> Result<DetailIndexSet> {
    if j < 4 {
        return Err(Error::domain(format!(
            "detail_indices: W_j is defined for j >= 4 (got j = {j})"
        )));
    }
    let indices = (2..=j - 2)
        .map(|k1| Index2::new(k1, j - k1))
        .filter(|k| parity.is_none_or(|p| k.parity() == p))
        .collect();
    Ok(DetailIndexSet {
        level: j,
        parity,
        indices,
    })
}

fn check_bs(k: Index2, op: &str) -> Result<()> {
    if !k.is_bs() {
        return Err(Error::domain(format!(
            "{op}: {k} is not a Babuška–Shen index (need k1, k2 >= 2)"
        )));
    }
    Ok(())
}

/// `‖Φ_h‖²_{H¹₀(Ω)}` in closed form.
pub fn phi_norm_sq(h: Index2) -> Result<f64> {
    check_bs(h, "phi_norm_sq")?;
    let part = |k: usize| 2.0 / ((2 * k - 3) * (2 * k + 1)) as f64;
    Ok(part(h.k1) + part(h.k2))
}

/// `(Φ_k, Φ_m)_{H¹₀(Ω)}`; when `normalized`, the coupling of `Φ_k/‖Φ_k‖`
/// and `Φ_m/‖Φ_m‖`.
pub fn stiff_coupling(k: Index2, m: Index2, normalized: bool) -> Result<f64> {
    check_bs(k, "stiff_coupling")?;
    check_bs(m, "stiff_coupling")?;
    let raw = ip_phi_h1(k.k1, m.k1)? * ip_phi_l2(k.k2, m.k2)?
        + ip_phi_l2(k.k1, m.k1)? * ip_phi_h1(k.k2, m.k2)?;
    if !normalized || raw == 0.0 {
        return Ok(raw);
    }
    if k == m {
        return Ok(1.0);
    }
    Ok(raw / (phi_norm_sq(k)? * phi_norm_sq(m)?).sqrt())
}

/// `(Θ_k, Φ_m)_{L²(Ω)}` for a Legendre index `k` and a Babuška–Shen index `m`.
pub fn load_coupling(k: Index2, m: Index2) -> Result<f64> {
    check_bs(m, "load_coupling")?;
    Ok(ip_theta_phi(k.k1, m.k1)? * ip_theta_phi(k.k2, m.k2)?)
}

/// Babuška–Shen indices `m` with `(Θ_k, Φ_m) ≠ 0`: `m_i ∈ {k_i, k_i + 2}`,
/// `m_i ≥ 2`.
pub fn load_partners(k: Index2) -> impl Iterator<Item = Index2> {
    [(0, 0), (2, 0), (0, 2), (2, 2)]
        .into_iter()
        .map(move |(d1, d2)| Index2::new(k.k1 + d1, k.k2 + d2))
        .filter(|m| m.is_bs())
}

/// Babuška–Shen indices `m` with `(Φ_k, Φ_m)_{H¹₀} ≠ 0`, including `k`.
pub fn stiff_partners(k: Index2) -> impl Iterator<Item = Index2> {
    let shifts: [(isize, isize); 5] = [(0, 0), (-2, 0), (2, 0), (0, -2), (0, 2)];
    shifts.into_iter().filter_map(move |(d1, d2)| {
        let m1 = k.k1 as isize + d1;
        let m2 = k.k2 as isize + d2;
        (m1 >= 2 && m2 >= 2).then(|| Index2::new(m1 as usize, m2 as usize))
    })
}
