//! Reduced-size invariant suite behind the `verify` subcommand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis1d::{
    gauss_rule, ip_phi_h1, ip_phi_l2, ip_theta_phi, phi_deriv, phi_eval, theta_eval,
};
use crate::error::Result;
use crate::galerkin::{BSVector, GalerkinSolver, PolyData};
use crate::projnorm::{margin_constant, proj_norm_sweep, row_sums, verify_t_recursion};
use crate::report::{num, Table};
use crate::scalar::{fd_sigma_derivs, s_func, scan_negative_region, sigma, FD_STEP};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
}

impl Check {
    fn at_most(name: &'static str, worst: f64, limit: f64) -> Self {
        Self {
            name,
            passed: worst <= limit,
            worst,
            limit,
        }
    }
}

pub fn suite_table(checks: &[Check]) -> Table {
    let mut t = Table::new(&["check", "passed", "worst", "limit"]);
    for c in checks {
        t.push(vec![
            c.name.to_string(),
            c.passed.to_string(),
            num(c.worst),
            num(c.limit),
        ]);
    }
    t
}

fn inner_products() -> Result<Check> {
    let rule = gauss_rule(40)?;
    let mut worst: f64 = 0.0;
    for k in 2..=20 {
        for m in 2..=20 {
            let l2 = rule.integrate(|x| phi_eval(k, x).unwrap() * phi_eval(m, x).unwrap());
            let h1 = rule.integrate(|x| phi_deriv(k, x).unwrap() * phi_deriv(m, x).unwrap());
            worst = worst.max((l2 - ip_phi_l2(k, m)?).abs());
            worst = worst.max((h1 - ip_phi_h1(k, m)?).abs());
        }
        for m in 0..=20 {
            let tp = rule.integrate(|x| theta_eval(m, x) * phi_eval(k, x).unwrap());
            worst = worst.max((tp - ip_theta_phi(m, k)?).abs());
        }
    }
    Ok(Check::at_most("inner_products_vs_quadrature", worst, 1e-12))
}

fn bubble() -> Result<Check> {
    let f = PolyData::bubble_laplacian();
    let exact = 256.0 / 45.0;
    let mut worst: f64 = 0.0;
    for q in [4, 9, 16] {
        let s = GalerkinSolver::new(q)?;
        let u = s.solve(&f)?;
        worst = worst.max((s.energy_norm(&u)?.powi(2) - exact).abs() / exact);
    }
    Ok(Check::at_most("bubble_exactness", worst, 1e-12))
}

fn pythagoras(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (q, r) = (10, 24);
    let sq = GalerkinSolver::new(q)?;
    let sr = GalerkinSolver::new(r)?;
    let mut worst: f64 = 0.0;
    for p in 0..=5 {
        let f = PolyData::random_with(p, &mut rng);
        let uq = sq.solve(&f)?;
        let ur = sr.solve(&f)?;
        let nr = sr.energy_norm(&ur)?.powi(2);
        let diff = ur.sub(&uq.embed(r)?)?;
        let defect = nr - sq.energy_norm(&uq)?.powi(2) - sr.energy_norm(&diff)?.powi(2);
        worst = worst.max(defect.abs() / nr);
    }
    Ok(Check::at_most("pythagoras", worst, 1e-10))
}

fn decay(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDECA);
    let mut worst: f64 = 0.0;
    for p in [0, 3, 6] {
        let f = PolyData::random_with(p, &mut rng);
        for q in [p + 5, p + 12, p + 20] {
            let rep = crate::galerkin::decay_report(&f, q)?;
            for e in rep.entries {
                worst = worst.max(e.detail_norm / e.bound);
            }
        }
    }
    Ok(Check::at_most("top_detail_decay_ratio", worst, 1.0))
}

fn top_detail_bound(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1E44A);
    let mut worst: f64 = 0.0;
    for q in [6, 11, 20] {
        let s = GalerkinSolver::new(q)?;
        for _ in 0..10 {
            let w = BSVector::random_with(q, &mut rng)?;
            let ratio = s.energy_norm(&w.level_part(q))? / s.energy_norm(&w)?;
            worst = worst.max(ratio);
        }
    }
    Ok(Check::at_most("top_detail_over_norm", worst, 2f64.sqrt()))
}

fn proj_norms() -> Result<Check> {
    let worst = proj_norm_sweep(4, 126)?
        .iter()
        .map(|e| e.norm)
        .fold(0.0, f64::max);
    Ok(Check {
        name: "proj_norm_max",
        passed: worst < 0.5,
        worst,
        limit: 0.5,
    })
}

fn row_sum_limits() -> Result<Check> {
    let prof = row_sums(10_000)?;
    let worst =
        ((prof.s(1) - 3.0 / 28.0).abs() / 1e-4).max((prof.s(2) - 65.0 / 308.0).abs() / 1e-3);
    Ok(Check::at_most("row_sum_limits_scaled", worst, 1.0))
}

fn margin() -> Result<Check> {
    let fit = margin_constant(512)?;
    Ok(Check {
        name: "margin_constant",
        passed: fit.constant > 0.0,
        worst: fit.constant,
        limit: 0.0,
    })
}

fn continuous_row_sums() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for j in (8..=64).step_by(2) {
        let prof = row_sums(j)?;
        let r = 1.0 / (2.0 * (j - 4) as f64);
        for i in 2..=j / 2 - 2 {
            worst = worst.max((prof.s(i) - s_func(4.0 * r * (i - 1) as f64, r)?).abs());
        }
    }
    Ok(Check::at_most("row_sums_vs_continuous", worst, 1e-12))
}

fn sigma_edge() -> Result<Vec<Check>> {
    let mut gap: f64 = 0.0;
    let mut slope: f64 = 0.0;
    let mut curv = f64::NEG_INFINITY;
    for k in 0..=100 {
        let t = 0.005 * k as f64;
        gap = gap.max((sigma(t, 0.0)? - 0.25).abs());
        let d = fd_sigma_derivs(t, 0.0, FD_STEP)?;
        slope = slope.max(d.first.abs());
        curv = curv.max(d.second);
    }
    let scan = scan_negative_region(64, 64)?;
    Ok(vec![
        Check::at_most("sigma_edge_value", gap, 1e-10),
        Check::at_most("sigma_edge_slope", slope, 1e-6),
        Check::at_most("sigma_edge_curvature", curv, -0.2),
        Check {
            name: "sigma_negative_region_astar",
            passed: scan.a_star > 0.1,
            worst: scan.a_star,
            limit: 0.1,
        },
    ])
}

fn t_recursion() -> Result<Check> {
    let rep = verify_t_recursion(0, 16)?;
    Ok(Check::at_most(
        "t_recursion_violations",
        rep.violations() as f64,
        0.0,
    ))
}

/// Every check, in a fixed order.
pub fn run_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = vec![
        inner_products()?,
        bubble()?,
        pythagoras(seed)?,
        decay(seed)?,
        top_detail_bound(seed)?,
        proj_norms()?,
        row_sum_limits()?,
        margin()?,
        continuous_row_sums()?,
    ];
    out.extend(sigma_edge()?);
    out.push(t_recursion()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = run_suite(crate::galerkin::DEFAULT_SEED).unwrap();
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(suite_table(&checks).rows.len(), checks.len());
    }
}
