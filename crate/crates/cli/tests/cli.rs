use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewal-ldp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn verify_passes_on_the_dirac_model() {
    let o = bin(&["verify", "--preset", "dirac"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains(",fail,"));
}

#[test]
fn geometric_rate_matches_binary_entropy() {
    let o = bin(&["rate", "--preset", "geometric", "--w-grid", "0.05:0.95:19"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["w", "I", "branch", "dual_k"]);
    assert_eq!(rows.len(), 19);
    for r in rows {
        let w: f64 = r[0].parse().unwrap();
        let i: f64 = r[1].parse().unwrap();
        let exact = std::f64::consts::LN_2 + w * w.ln() + (1.0 - w) * (1.0 - w).ln();
        assert!((i - exact).abs() <= 1e-9, "I({w}) = {i} vs {exact}");
    }
}

#[test]
fn poland_scheraga_phase_diagram_is_discontinuous() {
    let o = bin(&[
        "phase-diagram",
        "--preset",
        "poland_scheraga",
        "--params",
        r#"{"c": 2.5}"#,
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v.as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r["transition"], "discontinuous");
        assert!(r["beta_c"].as_f64().unwrap().is_finite());
        assert!(r["w_c"].as_f64().unwrap() > 0.0);
    }
    // rho jumps from 0 to at least w_c across beta_c.
    let w_c = rows[0]["w_c"].as_f64().unwrap();
    for r in rows {
        let (beta, rho) = (r["beta"].as_f64().unwrap(), r["rho"].as_f64().unwrap());
        if beta < r["beta_c"].as_f64().unwrap() {
            assert_eq!(rho, 0.0);
        } else {
            assert!(rho >= w_c - 1e-12);
        }
    }
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let args = [
        "free-energy",
        "--preset",
        "zeta",
        "--params",
        r#"{"c": 2.5, "beta": 0.2}"#,
        "--k-grid",
        "-1:1:41",
    ];
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_renewal-ldp"))
            .args(args)
            .env("RENEWAL_LDP_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        o.stdout
    };
    let one = run("1");
    assert_eq!(one, run("1"));
    assert_eq!(one, run("4"));

    let sample = [
        "sample",
        "--preset",
        "geometric",
        "--t",
        "20,40",
        "--samples",
        "50",
        "--seed",
        "9",
    ];
    assert_eq!(bin(&sample).stdout, bin(&sample).stdout);
}

#[test]
fn out_flag_writes_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exact.csv");
    let args = [
        "exact",
        "--preset",
        "geometric",
        "--t",
        "50,100",
        "--w-grid",
        "0.2:0.8:4",
    ];
    let direct = bin(&args).stdout;
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    let o = bin(&with_out);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), direct);
}

#[test]
fn model_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(
        &path,
        r#"{"head_weights": [0.5, 0.25], "tail": {"A": 1.0, "gamma": 0.0, "ell": -0.6931471805599453, "shift": 0}}"#,
    )
    .unwrap();
    let o = bin(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("field,value\npasses,true\n"));
}

#[test]
fn deviation_curve_is_exact_for_counts() {
    let o = bin(&["sample", "--preset", "geometric", "--t", "100,200", "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["t", "estimate", "ci_low", "ci_high", "method"]);
    assert!(rows.iter().all(|r| r[4] == "exact"));
    let p: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(p[1] < p[0]);
}

#[test]
fn configuration_errors_exit_with_2() {
    for args in [
        vec!["rate", "--preset", "geometric"],
        vec!["rate", "--preset", "geometric", "--w-grid", "1:0:3"],
        vec!["rate", "--preset", "nonesuch", "--w-grid", "0:1:3"],
        vec!["rate", "--w-grid", "0:1:3"],
        vec!["exact", "--preset", "geometric", "--t", "5,3", "--w-grid", "0:1:3"],
        vec!["frobnicate"],
    ] {
        assert_eq!(bin(&args).status.code(), Some(2), "{args:?}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_renewal-ldp"))
        .args(["validate", "--preset", "dirac"])
        .env("RENEWAL_LDP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
