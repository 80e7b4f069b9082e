//! One-dimensional Legendre and Babuška–Shen kernels on `I = (-1, 1)`.
//!
//! `L_k` are the classical Legendre polynomials (`L_k(1) = 1`), `θ_k` their
//! `L²(I)`-orthonormal rescaling and `φ_k` (`k ≥ 2`) the integrated Legendre
//! functions, orthonormal in `H¹₀(I)`. Inner products between these families
//! are available in closed form; [`gauss_rule`] provides an independent
//! quadrature route for checking them.

use crate::error::{Error, Result};

/// Evaluate `L_k(x)` with the three-term recurrence
/// `(n+1) L_{n+1} = (2n+1) x L_n - n L_{n-1}`.
pub fn legendre_eval(k: usize, x: f64) -> f64 {
    legendre_pair(k, x).0
}

/// Returns `(L_k(x), L_{k-1}(x))`; the second entry is 0 for `k = 0`.
fn legendre_pair(k: usize, x: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let mut prev = 1.0;
    let mut curr = x;
    for n in 1..k {
        let next = ((2 * n + 1) as f64 * x * curr - n as f64 * prev) / (n + 1) as f64;
        prev = curr;
        curr = next;
    }
    (curr, prev)
}

/// Derivative `L_k'(x)`, from `(1 - x²) L_k' = k (L_{k-1} - x L_k)` in the
/// interior and the endpoint values `L_k'(±1) = (±1)^{k+1} k(k+1)/2`.
pub fn legendre_deriv(k: usize, x: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let end = (k * (k + 1)) as f64 / 2.0;
    if x >= 1.0 {
        return end;
    }
    if x <= -1.0 {
        return if k.is_multiple_of(2) { -end } else { end };
    }
    let (lk, lkm1) = legendre_pair(k, x);
    k as f64 * (lkm1 - x * lk) / (1.0 - x * x)
}

/// `θ_k = sqrt(k + 1/2) L_k`.
pub fn theta_eval(k: usize, x: f64) -> f64 {
    (k as f64 + 0.5).sqrt() * legendre_eval(k, x)
}

/// `φ_k = (L_{k-2} - L_k) / sqrt(4k - 2)`, defined for `k ≥ 2`.
pub fn phi_eval(k: usize, x: f64) -> Result<f64> {
    check_bs(k, "phi_eval")?;
    let (lk, _) = legendre_pair(k, x);
    let lkm2 = legendre_eval(k - 2, x);
    Ok((lkm2 - lk) / ((4 * k - 2) as f64).sqrt())
}

/// `φ_k' = -sqrt(k - 1/2) L_{k-1}`.
pub fn phi_deriv(k: usize, x: f64) -> Result<f64> {
    check_bs(k, "phi_deriv")?;
    Ok(-(k as f64 - 0.5).sqrt() * legendre_eval(k - 1, x))
}

fn check_bs(k: usize, op: &str) -> Result<()> {
    if k < 2 {
        return Err(Error::domain(format!(
            "{op}: Babuška–Shen index must be >= 2, got {k}"
        )));
    }
    Ok(())
}

/// `(φ_k, φ_m)_{L²(I)}` in closed form.
pub fn ip_phi_l2(k: usize, m: usize) -> Result<f64> {
    check_bs(k, "ip_phi_l2")?;
    check_bs(m, "ip_phi_l2")?;
    let (lo, hi) = if k <= m { (k, m) } else { (m, k) };
    let lo = lo as u64;
    Ok(if hi as u64 == lo {
        2.0 / ((2 * lo - 3) * (2 * lo + 1)) as f64
    } else if hi as u64 == lo + 2 {
        let root = (((2 * lo - 1) * (2 * lo + 3)) as f64).sqrt();
        -1.0 / ((2 * lo + 1) as f64 * root)
    } else {
        0.0
    })
}

/// `(φ_k, φ_m)_{H¹₀(I)} = δ_{km}`.
pub fn ip_phi_h1(k: usize, m: usize) -> Result<f64> {
    check_bs(k, "ip_phi_h1")?;
    check_bs(m, "ip_phi_h1")?;
    Ok(if k == m { 1.0 } else { 0.0 })
}

/// `(θ_k, φ_m)_{L²(I)} = sqrt(2/(2k+1)) (δ_{k,m-2} - δ_{k,m}) / sqrt(4m-2)`.
pub fn ip_theta_phi(k: usize, m: usize) -> Result<f64> {
    check_bs(m, "ip_theta_phi")?;
    let sign = if k + 2 == m {
        1.0
    } else if k == m {
        -1.0
    } else {
        return Ok(0.0);
    };
    let scale = (2.0 / (2 * k + 1) as f64).sqrt() / ((4 * m - 2) as f64).sqrt();
    Ok(sign * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis1D {
    Monomial,
    Legendre,
}

/// Coefficients of a univariate polynomial over the monomial or the
/// (unnormalized) Legendre basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs1D {
    basis: Basis1D,
    values: Vec<f64>,
}

impl Coeffs1D {
    /// Panics if `values` is empty; a polynomial has at least one coefficient.
    pub fn new(basis: Basis1D, values: Vec<f64>) -> Self {
        assert!(
            !values.is_empty(),
            "Coeffs1D needs at least one coefficient"
        );
        Self { basis, values }
    }

    pub fn basis(&self) -> Basis1D {
        self.basis
    }

    pub fn degree(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.basis {
            Basis1D::Monomial => self.values.iter().rev().fold(0.0, |acc, &c| acc * x + c),
            Basis1D::Legendre => self
                .values
                .iter()
                .enumerate()
                .map(|(k, &c)| c * legendre_eval(k, x))
                .sum(),
        }
    }
}

/// Legendre coefficients of `x^n`, built by repeated multiplication with
/// `x L_k = ((k+1) L_{k+1} + k L_{k-1}) / (2k+1)`.
pub fn monomial_in_legendre(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    for deg in 0..n {
        let mut next = vec![0.0; n + 1];
        for k in 0..=deg {
            let ck = c[k];
            if ck == 0.0 {
                continue;
            }
            let denom = (2 * k + 1) as f64;
            next[k + 1] += ck * (k + 1) as f64 / denom;
            if k > 0 {
                next[k - 1] += ck * k as f64 / denom;
            }
        }
        c = next;
    }
    c
}

/// Change of basis from monomials to Legendre polynomials.
pub fn monomial_to_legendre(c: &Coeffs1D) -> Result<Coeffs1D> {
    if c.basis != Basis1D::Monomial {
        return Err(Error::domain(
            "monomial_to_legendre: input is not in the monomial basis",
        ));
    }
    let mut out = vec![0.0; c.values.len()];
    for (n, &cn) in c.values.iter().enumerate() {
        if cn == 0.0 {
            continue;
        }
        for (k, v) in monomial_in_legendre(n).into_iter().enumerate() {
            out[k] += cn * v;
        }
    }
    Ok(Coeffs1D::new(Basis1D::Legendre, out))
}

/// Gauss–Legendre rule on `I`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integrate over `[a, b]` by the affine map from `I`.
    pub fn integrate_on(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        half * self.integrate(|x| f(mid + half * x))
    }
}

/// `n`-point Gauss–Legendre rule: Newton iteration on the roots of `L_n`,
/// weights `2 / ((1 - x²) L_n'(x)²)`.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::domain("gauss_rule: need at least one point"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, descending from near 1.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (ln, lnm1) = legendre_pair(n, x);
            let dl = n as f64 * (lnm1 - x * ln) / (1.0 - x * x);
            let dx = ln / dl;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (ln, lnm1) = legendre_pair(n, x);
        let dl = n as f64 * (lnm1 - x * ln) / (1.0 - x * x);
        let w = 2.0 / ((1.0 - x * x) * dl * dl);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre_eval(0, 0.7), 1.0);
        for k in 0..60 {
            assert!(close(legendre_eval(k, 1.0), 1.0, 1e-13), "L_{k}(1)");
        }
        assert!(close(legendre_eval(2, 0.5), -0.125, 1e-15));
        for &x in &[-0.9, -0.3, 0.0, 0.41, 0.77] {
            let l3 = (5.0 * x * x * x - 3.0 * x) / 2.0;
            assert!(close(legendre_eval(3, x), l3, 1e-14));
        }
    }

    #[test]
    fn legendre_derivative_matches_central_difference() {
        let h = 1e-6;
        for k in 0..12 {
            for &x in &[-0.8, -0.1, 0.35, 0.9] {
                let fd = (legendre_eval(k, x + h) - legendre_eval(k, x - h)) / (2.0 * h);
                assert!(close(legendre_deriv(k, x), fd, 1e-6), "k={k} x={x}");
            }
        }
    }

    #[test]
    fn phi_and_theta_examples() {
        assert_eq!(phi_eval(2, 1.0).unwrap(), 0.0);
        assert!(close(phi_eval(2, 0.0).unwrap(), 1.5 / 6f64.sqrt(), 1e-15));
        assert!(close(phi_eval(2, 0.0).unwrap(), 0.6123724, 1e-7));
        for &x in &[-1.0, -0.2, 0.5] {
            assert!(close(theta_eval(0, x), 0.5f64.sqrt(), 1e-15));
        }
        assert!(matches!(phi_eval(1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(phi_eval(0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_vanishes_at_endpoints() {
        for k in 2..=200 {
            assert!(phi_eval(k, 1.0).unwrap().abs() < 1e-13, "phi_{k}(1)");
            assert!(phi_eval(k, -1.0).unwrap().abs() < 1e-13, "phi_{k}(-1)");
        }
    }

    #[test]
    fn phi_integral_form_agrees_with_legendre_difference() {
        let rule = gauss_rule(50).unwrap();
        for k in 2..=40 {
            for &x in &[-0.95, -0.5, 0.0, 0.3, 0.8] {
                let scale = (k as f64 - 0.5).sqrt();
                let integral = scale * rule.integrate_on(x, 1.0, |s| legendre_eval(k - 1, s));
                let diff = phi_eval(k, x).unwrap();
                assert!(
                    close(integral, diff, 1e-12),
                    "k={k} x={x}: {integral} vs {diff}"
                );
            }
        }
    }

    #[test]
    fn l2_products_examples() {
        assert!(close(ip_phi_l2(2, 2).unwrap(), 0.4, 1e-16));
        let v = ip_phi_l2(2, 4).unwrap();
        assert!(close(v, -1.0 / (5.0 * 21f64.sqrt()), 1e-16));
        assert!(close(v, -0.0436436, 1e-7));
        assert_eq!(ip_phi_l2(2, 5).unwrap(), 0.0);
        assert_eq!(ip_phi_l2(4, 2).unwrap(), v);
        assert!(ip_phi_l2(1, 3).is_err());
    }

    #[test]
    fn h1_products_examples() {
        assert_eq!(ip_phi_h1(2, 2).unwrap(), 1.0);
        assert_eq!(ip_phi_h1(2, 4).unwrap(), 0.0);
        assert_eq!(ip_phi_h1(7, 7).unwrap(), 1.0);
        assert!(ip_phi_h1(2, 1).is_err());
    }

    #[test]
    fn theta_phi_examples() {
        assert!(close(
            ip_theta_phi(0, 2).unwrap(),
            2f64.sqrt() / 6f64.sqrt(),
            1e-16
        ));
        assert!(close(ip_theta_phi(0, 2).unwrap(), 0.5773503, 1e-7));
        assert_eq!(ip_theta_phi(1, 2).unwrap(), 0.0);
        let v = ip_theta_phi(2, 2).unwrap();
        assert!(close(v, -(0.4f64).sqrt() / 6f64.sqrt(), 1e-16));
        assert!(close(v, -0.2581989, 1e-7));
        assert!(ip_theta_phi(0, 1).is_err());
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let rule = gauss_rule(42).unwrap();
        for k in 2..=40 {
            for m in 2..=40 {
                let quad = rule.integrate(|x| phi_eval(k, x).unwrap() * phi_eval(m, x).unwrap());
                assert!(close(ip_phi_l2(k, m).unwrap(), quad, 1e-12), "L2 ({k},{m})");
                let quad_h1 =
                    rule.integrate(|x| phi_deriv(k, x).unwrap() * phi_deriv(m, x).unwrap());
                assert!(
                    close(ip_phi_h1(k, m).unwrap(), quad_h1, 1e-12),
                    "H1 ({k},{m})"
                );
            }
        }
        for k in 0..=40 {
            for m in 2..=40 {
                let quad = rule.integrate(|x| theta_eval(k, x) * phi_eval(m, x).unwrap());
                let closed = ip_theta_phi(k, m).unwrap();
                assert!(close(closed, quad, 1e-12), "theta-phi ({k},{m})");
                if k + 2 != m && k != m {
                    assert_eq!(closed, 0.0);
                }
            }
        }
    }

    #[test]
    fn gauss_rule_examples() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert!(close(r1.weights[0], 2.0, 1e-15));

        let r2 = gauss_rule(2).unwrap();
        assert!(close(r2.nodes[0], -(1.0 / 3f64).sqrt(), 1e-15));
        assert!(close(r2.nodes[1], 0.5773503, 1e-7));
        assert!(close(r2.weights[0], 1.0, 1e-15) && close(r2.weights[1], 1.0, 1e-15));

        let r6 = gauss_rule(6).unwrap();
        assert!(close(r6.integrate(|x| x.powi(10)), 2.0 / 11.0, 1e-14));
        assert!(gauss_rule(0).is_err());
    }

    #[test]
    fn gauss_rule_moments() {
        for n in 1..=40 {
            let rule = gauss_rule(n).unwrap();
            assert!(close(rule.weights.iter().sum::<f64>(), 2.0, 1e-14), "n={n}");
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!(rule.nodes.iter().all(|&x| x > -1.0 && x < 1.0));
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg + 1) as f64
                };
                let got = rule.integrate(|x| x.powi(deg as i32));
                assert!(
                    close(got, exact, 1e-14),
                    "n={n} deg={deg}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn monomial_conversion_examples() {
        let one = monomial_to_legendre(&Coeffs1D::new(Basis1D::Monomial, vec![1.0])).unwrap();
        assert_eq!(one.values(), &[1.0]);
        let x = monomial_to_legendre(&Coeffs1D::new(Basis1D::Monomial, vec![0.0, 1.0])).unwrap();
        assert_eq!(x.values(), &[0.0, 1.0]);
        let x2 =
            monomial_to_legendre(&Coeffs1D::new(Basis1D::Monomial, vec![0.0, 0.0, 1.0])).unwrap();
        assert!(close(x2.values()[0], 1.0 / 3.0, 1e-16));
        assert_eq!(x2.values()[1], 0.0);
        assert!(close(x2.values()[2], 2.0 / 3.0, 1e-16));
        assert_eq!(x2.basis(), Basis1D::Legendre);
        assert!(monomial_to_legendre(&x2).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monomial_to_legendre_preserves_values(
                coeffs in proptest::collection::vec(-3.0f64..3.0, 1..14),
                x in -1.0f64..1.0,
            ) {
                let mono = Coeffs1D::new(Basis1D::Monomial, coeffs);
                let leg = monomial_to_legendre(&mono).unwrap();
                prop_assert_eq!(leg.degree(), mono.degree());
                let scale: f64 = mono.values().iter().map(|c| c.abs()).sum::<f64>().max(1.0);
                prop_assert!((leg.eval(x) - mono.eval(x)).abs() <= 1e-12 * scale);
            }
        }
    }
}
