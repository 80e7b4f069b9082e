//! Command-line front end: argument model, polynomial input and the
//! subcommands, each producing one table.

use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::galerkin::{decay_report_with, GalerkinSolver, PolyData, DEFAULT_R_CAP, DEFAULT_SEED};
use crate::projnorm::{proj_norm_sweep, row_sums};
use crate::report::{num, Table};
use crate::saturation::{sweep, IncrementRule, Schedule};
use crate::scalar::scan_negative_region;
use crate::tensor2d::Index2;
use crate::verify::{run_suite, suite_table};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "PSAT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Pretty,
}

#[derive(Debug, Parser)]
#[command(
    name = "psat",
    version,
    about = "Spectral Galerkin saturation experiments on the square"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    /// Write the table here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED, global = true)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Galerkin solution norms, detail norms and the Pythagoras check.
    Solve {
        /// Builtin (`one`, `bubble-laplacian`, `random:<seed>:<p>`) or a TOML file.
        #[arg(long)]
        f: String,
        #[arg(long)]
        q: usize,
        /// Finer level for the Pythagoras check (default 2q).
        #[arg(long)]
        r: Option<usize>,
    },
    /// Norms of the projections between detail levels.
    Projnorm {
        #[arg(long, default_value_t = 4)]
        jmin: usize,
        #[arg(long)]
        jmax: usize,
    },
    /// Row sums of the level coupling Gram matrix.
    Rowsums {
        #[arg(long)]
        j: usize,
    },
    /// Stabilized saturation constants over a range of degrees.
    #[command(group(ArgGroup::new("rule").required(true).args(["k", "lambda"])))]
    Saturation {
        #[arg(long)]
        pmin: usize,
        #[arg(long)]
        pmax: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_R_CAP)]
        cap: usize,
    },
    /// Grid scan of the regularized row-sum function.
    Sigma {
        #[arg(long, default_value_t = 256)]
        nt: usize,
        #[arg(long, default_value_t = 256)]
        na: usize,
    },
    /// Reduced invariant suite.
    Verify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> Self {
        Self {
            command: cli.command,
            format: cli.format,
            out: cli.out,
            seed: cli.seed,
        }
    }
}

impl RunConfig {
    /// SHA-256 of everything that influences the table (the output path
    /// does not).
    pub fn config_hash(&self) -> String {
        let canonical = format!("{:?}|{:?}|{}", self.command, self.format, self.seed);
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match &self.command {
            Command::Solve { q, r, .. } => {
                if *q < 4 {
                    return bad(format!("--q must be at least 4 (got {q})"));
                }
                if let Some(r) = r {
                    if r <= q {
                        return bad(format!("--r must exceed --q (got r = {r}, q = {q})"));
                    }
                }
            }
            Command::Projnorm { jmin, jmax } => {
                if *jmin < 4 || jmax < jmin {
                    return bad(format!("need 4 <= --jmin <= --jmax (got {jmin}, {jmax})"));
                }
            }
            Command::Rowsums { j } => {
                if *j < 8 || j % 2 == 1 {
                    return bad(format!("--j must be even and at least 8 (got {j})"));
                }
            }
            Command::Saturation {
                pmin,
                pmax,
                tol,
                cap,
                ..
            } => {
                if pmin > pmax {
                    return bad(format!("--pmin {pmin} exceeds --pmax {pmax}"));
                }
                if !(*tol > 0.0) {
                    return bad(format!("--tol must be positive (got {tol})"));
                }
                let rule = self.rule().expect("saturation command");
                for p in *pmin..=*pmax {
                    rule.validate(p)?;
                }
                let worst_q = (*pmin..=*pmax).map(|p| rule.q_for(p)).max().unwrap_or(0);
                if 2 * worst_q > *cap {
                    return bad(format!(
                        "--cap {cap} is below the first level 2q = {}",
                        2 * worst_q
                    ));
                }
            }
            Command::Sigma { nt, na } => {
                if *nt < 32 || *na < 32 {
                    return bad(format!(
                        "--nt and --na must be at least 32 (got {nt}, {na})"
                    ));
                }
            }
            Command::Verify => {}
        }
        Ok(())
    }

    fn rule(&self) -> Option<IncrementRule> {
        match &self.command {
            Command::Saturation { k: Some(k), .. } => Some(IncrementRule::Constant(*k)),
            Command::Saturation {
                lambda: Some(l), ..
            } => Some(IncrementRule::Proportional(*l)),
            _ => None,
        }
    }
}

/// Table produced by a subcommand, plus a violated contract if any. The
/// table is emitted even when a contract fails.
#[derive(Debug)]
pub struct RunOutput {
    pub table: Table,
    pub violation: Option<String>,
}

impl RunOutput {
    /// Rendered table followed by the `#meta` lines.
    pub fn render(&self, config: &RunConfig) -> Vec<u8> {
        let mut buf = Vec::new();
        match config.format {
            Format::Csv => self.table.write_csv(&mut buf),
            Format::Pretty => self.table.write_pretty(&mut buf),
        }
        .expect("writing to memory");
        let meta = format!(
            "#meta,version,{}\n#meta,seed,{}\n#meta,config_hash,{}\n",
            env!("CARGO_PKG_VERSION"),
            config.seed,
            config.config_hash()
        );
        buf.extend_from_slice(meta.as_bytes());
        buf
    }
}

/// Builtin name or path of a TOML polynomial description.
pub fn parse_poly(source: &str) -> Result<PolyData> {
    match source {
        "one" => return Ok(PolyData::one()),
        "bubble-laplacian" => return Ok(PolyData::bubble_laplacian()),
        _ => {}
    }
    if let Some(rest) = source.strip_prefix("random:") {
        let (seed, p) = rest
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected random:<seed>:<p>, got {source}")))?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::Parse(format!("bad seed in {source}")))?;
        let p: usize = p
            .parse()
            .map_err(|_| Error::Parse(format!("bad degree in {source}")))?;
        return Ok(PolyData::random(p, seed));
    }
    let path = std::path::Path::new(source);
    if !path.exists() {
        return Err(Error::Parse(format!(
            "unknown builtin or missing file: {source}"
        )));
    }
    parse_poly_toml(&std::fs::read_to_string(path)?)
}

/// `basis = "monomial" | "legendre"`, optional `degree`, and
/// `terms = [[i, j, c], …]` for `c x^i y^j` or `c L_i(x) L_j(y)`.
pub fn parse_poly_toml(text: &str) -> Result<PolyData> {
    let doc: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let basis = doc
        .get("basis")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Parse("missing string field `basis`".into()))?;
    let monomial = match basis {
        "monomial" => true,
        "legendre" => false,
        other => return Err(Error::Parse(format!("unknown basis `{other}`"))),
    };
    let raw_terms = doc
        .get("terms")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Parse("missing array field `terms`".into()))?;
    let mut terms = Vec::with_capacity(raw_terms.len());
    for (n, t) in raw_terms.iter().enumerate() {
        let triple = t.as_array().filter(|a| a.len() == 3).ok_or_else(|| {
            Error::Parse(format!("term {n} must be an array [i, j, coefficient]"))
        })?;
        let exponent = |v: &toml::Value| {
            v.as_integer()
                .and_then(|x| usize::try_from(x).ok())
                .ok_or_else(|| {
                    Error::Parse(format!("term {n}: indices must be nonnegative integers"))
                })
        };
        let c = triple[2]
            .as_float()
            .or_else(|| triple[2].as_integer().map(|x| x as f64))
            .ok_or_else(|| Error::Parse(format!("term {n}: coefficient must be a number")))?;
        terms.push((exponent(&triple[0])?, exponent(&triple[1])?, c));
    }
    let inferred = terms.iter().map(|&(i, j, _)| i + j).max().unwrap_or(0);
    let degree = match doc.get("degree") {
        None => inferred,
        Some(v) => v
            .as_integer()
            .and_then(|x| usize::try_from(x).ok())
            .ok_or_else(|| Error::Parse("`degree` must be a nonnegative integer".into()))?,
    };
    let mut f = PolyData::zero(degree);
    for (i, j, c) in terms {
        if i + j > degree {
            return Err(Error::Parse(format!(
                "term [{i}, {j}, {c}] exceeds declared degree {degree}"
            )));
        }
        if monomial {
            f.add_monomial(i, j, c)?;
        } else {
            f.add_legendre(Index2::new(i, j), c)?;
        }
    }
    Ok(f)
}

/// Apply the thread count from the environment, if set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Domain(format!("{THREADS_ENV} must be a positive integer, got {v}"))
        })?;
        // A second initialization (e.g. in tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    match &config.command {
        Command::Solve { f, q, r } => run_solve(&parse_poly(f)?, *q, r.unwrap_or(2 * q)),
        Command::Projnorm { jmin, jmax } => run_projnorm(*jmin, *jmax),
        Command::Rowsums { j } => run_rowsums(*j),
        Command::Saturation {
            pmin,
            pmax,
            tol,
            cap,
            ..
        } => {
            let rule = config.rule().expect("saturation command");
            let s = sweep(
                *pmin..=*pmax,
                rule,
                Schedule {
                    tol: *tol,
                    cap: *cap,
                },
            )?;
            let violation = (s.failures() > 0)
                .then(|| format!("{} of {} rows failed", s.failures(), s.rows.len()));
            Ok(RunOutput {
                table: s.to_table(),
                violation,
            })
        }
        Command::Sigma { nt, na } => {
            let scan = scan_negative_region(*nt, *na)?;
            let violation = (scan.a_star <= 0.1)
                .then(|| format!("negative region ends at a = {} <= 0.1", scan.a_star));
            Ok(RunOutput {
                table: scan.to_table(),
                violation,
            })
        }
        Command::Verify => {
            let checks = run_suite(config.seed)?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name)
                .collect();
            Ok(RunOutput {
                table: suite_table(&checks),
                violation: (!failed.is_empty()).then(|| format!("failed: {}", failed.join(" "))),
            })
        }
    }
}

fn run_solve(f: &PolyData, q: usize, r: usize) -> Result<RunOutput> {
    let mut t = Table::new(&["quantity", "j", "value"]);
    let sq = GalerkinSolver::new(q)?;
    let uq = sq.solve(f)?;
    let norm_q = sq.energy_norm(&uq)?;
    t.push(vec!["norm".into(), q.to_string(), num(norm_q)]);
    for j in 4..=q {
        let d = sq.energy_norm(&uq.level_part(j))?;
        t.push(vec!["detail_norm".into(), j.to_string(), num(d)]);
    }
    let sr = GalerkinSolver::new(r)?;
    let ur = sr.solve(f)?;
    let norm_r = sr.energy_norm(&ur)?;
    let diff = sr.energy_norm(&ur.sub(&uq.embed(r)?)?)?;
    let defect = (norm_r * norm_r - norm_q * norm_q - diff * diff).abs();
    let rel = if norm_r > 0.0 {
        defect / (norm_r * norm_r)
    } else {
        defect
    };
    t.push(vec!["norm".into(), r.to_string(), num(norm_r)]);
    t.push(vec!["difference_norm".into(), r.to_string(), num(diff)]);
    t.push(vec!["pythagoras_defect".into(), r.to_string(), num(rel)]);
    let mut violation = (rel > 1e-10).then(|| format!("Pythagoras defect {rel:e}"));
    if q > f.degree() + 4 {
        let rep = decay_report_with(&sq, f)?;
        t.push(vec![
            "decay_bound".into(),
            q.to_string(),
            num(rep.entries[0].bound),
        ]);
        if !rep.holds() && violation.is_none() {
            violation = Some("top detail norm exceeds 6/(q-p) ||u_q||".into());
        }
    }
    Ok(RunOutput {
        table: t,
        violation,
    })
}

fn run_projnorm(jmin: usize, jmax: usize) -> Result<RunOutput> {
    let entries = proj_norm_sweep(jmin, jmax)?;
    let mut t = Table::new(&["j", "parity", "norm", "margin_j2"]);
    for e in &entries {
        t.push(vec![
            e.j.to_string(),
            e.parity.to_string(),
            num(e.norm),
            num(e.margin_j2),
        ]);
    }
    let min_margin = entries
        .iter()
        .map(|e| e.margin_j2)
        .fold(f64::INFINITY, f64::min);
    t.note(&["min_margin_j2", &num(min_margin)]);
    let worst = entries.iter().map(|e| e.norm).fold(0.0, f64::max);
    Ok(RunOutput {
        table: t,
        violation: (worst >= 0.5).then(|| format!("projection norm {worst} >= 1/2")),
    })
}

fn run_rowsums(j: usize) -> Result<RunOutput> {
    let prof = row_sums(j)?;
    let mut t = Table::new(&["j", "i", "s_i"]);
    for (i, s) in prof.values.iter().enumerate() {
        t.push(vec![j.to_string(), (i + 1).to_string(), num(*s)]);
    }
    t.note(&["max", &num(prof.max)]);
    t.note(&["margin_j2", &num(prof.margin * (j * j) as f64)]);
    Ok(RunOutput {
        table: t,
        violation: (prof.margin <= 0.0).then(|| format!("max row sum {} >= 1/4", prof.max)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> RunConfig {
        let mut full = vec!["psat"];
        full.extend_from_slice(args);
        Cli::try_parse_from(full).unwrap().into()
    }

    fn csv(args: &[&str]) -> String {
        let c = config(args);
        String::from_utf8(run(&c).unwrap().render(&c)).unwrap()
    }

    #[test]
    fn builtins() {
        let one = parse_poly("one").unwrap();
        assert_eq!(one.terms().count(), 1);
        assert!((one.coeff(Index2::new(0, 0)) - 2.0).abs() < 1e-15);
        let b = parse_poly("bubble-laplacian").unwrap();
        let th = |k1: usize, k2: usize| ((k1 as f64 + 0.5) * (k2 as f64 + 0.5)).sqrt();
        assert!((b.coeff(Index2::new(0, 0)) * th(0, 0) - 8.0 / 3.0).abs() < 1e-14);
        assert!((b.coeff(Index2::new(2, 0)) * th(2, 0) + 4.0 / 3.0).abs() < 1e-14);
        assert!((b.coeff(Index2::new(0, 2)) * th(0, 2) + 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(parse_poly("random:7:3").unwrap(), PolyData::random(3, 7));
        assert!(matches!(parse_poly("nope"), Err(Error::Parse(_))));
        assert!(parse_poly("random:x:3").is_err());
    }

    #[test]
    fn toml_input() {
        let f = parse_poly_toml(
            "basis = \"monomial\"\ndegree = 2\nterms = [[0, 0, 4], [2, 0, -2.0], [0, 2, -2.0]]\n",
        )
        .unwrap();
        assert_eq!(f, PolyData::bubble_laplacian());
        let g = parse_poly_toml("basis = \"legendre\"\nterms = [[1, 1, 0.5]]").unwrap();
        assert_eq!(g.degree(), 2);
        let err =
            parse_poly_toml("basis = \"monomial\"\ndegree = 2\nterms = [[2, 1, 1.0]]").unwrap_err();
        assert!(err.to_string().contains("[2, 1, 1]"), "{err}");
        assert!(parse_poly_toml("basis = \"chebyshev\"\nterms = []").is_err());
        assert!(parse_poly_toml("terms = [[0, 0, 1.0]]").is_err());
        assert!(parse_poly_toml("basis = \"monomial\"\nterms = [[0, -1, 1.0]]").is_err());
    }

    #[test]
    fn solve_reports_norm() {
        let out = csv(&["solve", "--f", "one", "--q", "4"]);
        let first = out.lines().nth(1).unwrap();
        let v: f64 = first.split(',').nth(2).unwrap().parse().unwrap();
        assert!((v - 0.7453560).abs() < 1e-7);
        assert!(out.lines().any(|l| l.starts_with("#meta,config_hash,")));
    }

    #[test]
    fn projnorm_and_rowsums() {
        let c = config(&["projnorm", "--jmax", "64"]);
        let out = run(&c).unwrap();
        assert!(out.violation.is_none());
        for row in &out.table.rows {
            assert!(row[2].parse::<f64>().unwrap() < 0.5);
        }
        let text = csv(&["rowsums", "--j", "10"]);
        assert!(text.starts_with("j,i,s_i\n10,1,"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
    }

    #[test]
    fn deterministic_bytes() {
        let a = csv(&["solve", "--f", "random:3:4", "--q", "12"]);
        let b = csv(&["solve", "--f", "random:3:4", "--q", "12"]);
        assert_eq!(a, b);
        let pretty = csv(&["--format", "pretty", "rowsums", "--j", "12"]);
        assert_ne!(pretty, csv(&["rowsums", "--j", "12"]));
    }

    #[test]
    fn validation() {
        for args in [
            &["solve", "--f", "one", "--q", "3"][..],
            &["solve", "--f", "one", "--q", "6", "--r", "6"],
            &["projnorm", "--jmin", "10", "--jmax", "8"],
            &["rowsums", "--j", "9"],
            &["saturation", "--pmin", "5", "--pmax", "4", "--k", "2"],
            &["saturation", "--pmin", "4", "--pmax", "5", "--k", "1"],
            &[
                "saturation",
                "--pmin",
                "4",
                "--pmax",
                "5",
                "--lambda",
                "0.5",
            ],
            &[
                "saturation",
                "--pmin",
                "4",
                "--pmax",
                "5",
                "--k",
                "2",
                "--cap",
                "10",
            ],
            &["sigma", "--nt", "8"],
        ] {
            let c = config(args);
            assert!(matches!(run(&c), Err(Error::Domain(_))), "{args:?}");
        }
        assert!(Cli::try_parse_from(["psat", "saturation", "--pmin", "4", "--pmax", "5"]).is_err());
        assert!(Cli::try_parse_from([
            "psat",
            "saturation",
            "--pmin",
            "4",
            "--pmax",
            "5",
            "--k",
            "2",
            "--lambda",
            "2"
        ])
        .is_err());
    }

    #[test]
    fn config_hash_ignores_output_path() {
        let a = config(&["rowsums", "--j", "10"]);
        let mut b = a.clone();
        b.out = Some("x.csv".into());
        assert_eq!(a.config_hash(), b.config_hash());
        let c = config(&["--seed", "5", "rowsums", "--j", "10"]);
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
