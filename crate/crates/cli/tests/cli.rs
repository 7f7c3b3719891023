use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tamed-sde")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn zoo_lists_nine_models() {
    let o = bin(&["zoo"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stderr.is_empty());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(names.len(), 9);
    assert_eq!(names[0], "cubic1d");
}

#[test]
fn classify_verdicts() {
    let cases = [
        (["--scheme", "euler", "--q", "4"], "InfiniteForEveryN"),
        (["--scheme", "tamed_plus", "--q", "4"], "FinitePerNUnboundedInN"),
        (["--scheme", "tamed_max", "--q", "2.5"], "Unclassified"),
        (["--scheme", "linear_implicit", "--q", "2.5"], "InfiniteForEveryN"),
    ];
    for (args, want) in cases {
        let mut a = vec!["classify"];
        a.extend(args);
        let o = bin(&a);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(stdout(&o).trim(), want);
    }
    let o = bin(&["classify", "--scheme", "sit", "--q", "4", "--p", "0.1"]);
    assert_eq!(stdout(&o).trim(), "PreservedBounded");
}

/// Recomputes the exponent algebra from scratch and compares with `bound`.
#[test]
fn bound_matches_direct_recomputation() {
    let o = bin(&["bound", "--rho", "0", "--c", "3", "--p", "4", "--q", "2", "--gamma", "12", "--T", "1", "--mesh", "0.001"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    let cols: Vec<f64> = out.trim().split(',').map(|s| s.parse().unwrap()).collect();
    let (rho, c, p, q, g, t, mesh) = (0.0f64, 3.0f64, 4.0f64, 2.0f64, 12.0f64, 1.0f64, 0.001f64);
    let alpha = 0.25 * f64::min(1.0 / (7.0 * g + 2.0), (q - 1.0) / ((q + 8.0) * g + 2.0));
    let e1 = f64::min(0.5, (q - 1.0) / 2.0 - alpha * (q + 1.0) * g) - alpha * (7.0 * g + 2.0);
    let e2 = 9.0 * p * (q + 1.0) * g * g * (g + 2.0);
    let inner = e2 * (5.0 * c * q * t).ln();
    let outer = rho.max(1.0).ln() + e1 * mesh.ln();
    assert_eq!(cols[0], f64::INFINITY);
    assert_eq!(cols[1], f64::INFINITY);
    assert!((cols[2] - inner).abs() < 1e-9 * inner);
    assert!((cols[3] - outer).abs() < 1e-12);
    assert!((cols[4] - e1).abs() < 1e-15);
    assert_eq!(cols[5], e2);
    assert!((cols[6] - alpha).abs() < 1e-18);
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["classify", "--scheme", "rk4", "--q", "2"]).status.code(), Some(2));
    assert_eq!(bin(&["bound", "--rho", "0", "--c", "0.5", "--p", "4", "--q", "2", "--gamma", "1", "--T", "1", "--mesh", "0.1"]).status.code(), Some(2));
    let help = bin(&["probe", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("Usage"));
    for sub in ["run", "classify", "bound", "consistency", "residual", "probe", "zoo"] {
        assert_eq!(bin(&[sub, "--help"]).status.code(), Some(0), "{sub}");
    }
    // the constant-zero map is not consistent
    let o = bin(&["consistency", "--map", "zero", "--M", "2000", "--points", "5", "--workers", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("t,a,b\n"));
    let o = bin(&["consistency", "--M", "2000", "--points", "5", "--workers", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stderr.is_empty());
}

#[test]
fn run_config_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "4", "8"] {
        let out = dir.path().join(format!("w{workers}/pres.csv"));
        let cfg = dir.path().join(format!("w{workers}.cfg"));
        std::fs::write(
            &cfg,
            format!(
                "# small preservation run\nexperiment = cubic_preserved\nN = 16, 64\nL = 8\nM = 500\nseed = 7\nout = {}\n",
                out.display()
            ),
        )
        .unwrap();
        let o = bin(&["run", cfg.to_str().unwrap(), "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
        assert!(o.stderr.is_empty());
        let files: Vec<Vec<u8>> = ["pres_N16.csv", "pres_N64.csv"]
            .iter()
            .map(|f| std::fs::read(out.with_file_name(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert!(text.starts_with("t,estimate,std_error,n,overflow_count,tau_lt_T_count,log_domain\n"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "model = cubic1d\nunknown_key = 3\n").unwrap();
    let o = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
    assert_eq!(bin(&["run", "/nonexistent/file.cfg"]).status.code(), Some(2));
}

#[test]
fn residual_and_probe_emit_csv() {
    let o = bin(&["residual", "--points", "300"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 10);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",1")));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.csv");
    let o = bin(&["probe", "--schedule", "100,1000", "--out", path.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("M,log_estimate,estimate,running_max_log\n"));
    assert_eq!(text.lines().count(), 3);
}
