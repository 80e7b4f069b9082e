use std::process::{Command, Output};

fn psat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psat"))
        .args(args)
        .env_remove("PSAT_THREADS")
        .output()
        .expect("spawn psat")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn solve_constant_data() {
    let o = psat(&["solve", "--f", "one", "--q", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("quantity,j,value\nnorm,4,7.4535599249993012e-1\n"));
    let meta: Vec<&str> = text.lines().filter(|l| l.starts_with("#meta,")).collect();
    assert_eq!(meta.len(), 3);
    assert!(meta[0].starts_with("#meta,version,"));
    assert!(meta[1].starts_with("#meta,seed,"));
    assert_eq!(meta[2].len(), "#meta,config_hash,".len() + 64);
}

#[test]
fn validation_errors_exit_2() {
    let o = psat(&["rowsums", "--j", "9"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error,domain,"), "{err}");

    let o = psat(&["solve", "--q", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error,usage,"));

    let o = psat(&["solve", "--f", "no-such-builtin", "--q", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error,parse,"));

    let o = Command::new(env!("CARGO_BIN_EXE_psat"))
        .args(["rowsums", "--j", "10"])
        .env("PSAT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cap_exceeded_exits_3_with_partial_output() {
    let o = psat(&[
        "saturation",
        "--pmin",
        "4",
        "--pmax",
        "4",
        "--k",
        "2",
        "--cap",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("#error,4,cap_exceeded"));
    assert!(stderr(&o).starts_with("error,contract,"));
}

#[test]
fn output_file_is_reproducible() {
    let dir = std::env::temp_dir().join(format!("psat-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    for path in [&a, &b] {
        let o = psat(&[
            "saturation",
            "--pmin",
            "4",
            "--pmax",
            "8",
            "--k",
            "2",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let fit = text.lines().find(|l| l.starts_with("#fit,")).unwrap();
    let slope: f64 = fit.split(',').nth(1).unwrap().parse().unwrap();
    assert!(slope > 0.0);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn polynomial_file_input() {
    let dir = std::env::temp_dir().join(format!("psat-poly-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bubble.toml");
    std::fs::write(
        &path,
        "basis = \"monomial\"\ndegree = 2\nterms = [[0, 0, 4.0], [2, 0, -2.0], [0, 2, -2.0]]\n",
    )
    .unwrap();
    let from_file = psat(&["solve", "--f", path.to_str().unwrap(), "--q", "8"]);
    let builtin = psat(&["solve", "--f", "bubble-laplacian", "--q", "8"]);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    let rows = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect()
    };
    assert_eq!(rows(&from_file), rows(&builtin));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn pretty_projnorm_and_sigma() {
    let o = psat(&["--format", "pretty", "projnorm", "--jmax", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().next().unwrap().contains("margin_j2"));

    let o = psat(&["sigma", "--nt", "32", "--na", "32"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("t,a,sigma,d2_fd\n"));
    let astar: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("#astar,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(astar > 0.1);
}
