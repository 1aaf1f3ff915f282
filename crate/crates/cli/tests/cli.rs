use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn skewlevy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewlevy"))
        .args(args)
        .env_remove("SKEWLEVY_OUT")
        .output()
        .expect("binary runs")
}

fn digest_tree(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                let h = Sha256::digest(fs::read(&p).unwrap());
                out.push((rel, h.iter().map(|b| format!("{b:02x}")).collect()));
            }
        }
    }
    out.sort();
    out
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--paths",
        "8",
        "--t-end",
        "0.2",
        "--dt",
        "1e-2",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    skewlevy(&args)
}

#[test]
fn zero_horizon_gives_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z");
    let o = skewlevy(&[
        "simulate",
        "--paths",
        "1",
        "--t-end",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("paths/path_000000.csv")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("time"))
        .collect();
    assert_eq!(rows, vec!["0,1,0,0,0"]);
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for format in ["csv", "binary"] {
        let (a, b, c) = (
            tmp.path().join(format!("a{format}")),
            tmp.path().join(format!("b{format}")),
            tmp.path().join(format!("c{format}")),
        );
        let jumps = ["--seed", "3", "--format", format];
        assert!(simulate(&a, &jumps).status.success());
        assert!(simulate(&b, &jumps).status.success());
        assert_eq!(digest_tree(&a), digest_tree(&b));

        assert!(simulate(&c, &["--seed", "4", "--format", format])
            .status
            .success());
        let (da, dc) = (digest_tree(&a), digest_tree(&c));
        let names = |d: &[(String, String)]| d.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
        assert_eq!(names(&da), names(&dc));
        let paths_differ = da
            .iter()
            .zip(&dc)
            .any(|(x, y)| x.0.starts_with("paths") && x.1 != y.1);
        assert!(paths_differ);
        let keys = |p: &Path| -> Vec<String> {
            let v: toml::Table = fs::read_to_string(p.join("manifest.toml"))
                .unwrap()
                .parse()
                .unwrap();
            v.keys().cloned().collect()
        };
        assert_eq!(keys(&a), keys(&c));
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "schema_version = 1\nscenario = \"euclid_son\"\nsize = 3\nt_end = 0.2\ndt = 0.01\nn_paths = 4\nseed = 11\n\n[jumps]\nrate = 3.0\nfamily = \"point_mass\"\nangle = 1.5707963267948966\n",
    )
    .unwrap();
    assert!(skewlevy(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    let echo = a.join("config.toml");
    assert!(skewlevy(&[
        "simulate",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    assert_eq!(digest_tree(&a), digest_tree(&b));
}

#[test]
fn decompose_and_estimate_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, dec, est) = (
        tmp.path().join("s"),
        tmp.path().join("d"),
        tmp.path().join("e"),
    );
    let o = skewlevy(&[
        "simulate",
        "--scenario",
        "sphere_polar",
        "--size",
        "2",
        "--paths",
        "120",
        "--t-end",
        "0.3",
        "--dt",
        "1e-2",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let refused = skewlevy(&[
        "decompose",
        "--input",
        sim.to_str().unwrap(),
        "--scenario",
        "euclid_son",
        "--out",
        dec.to_str().unwrap(),
    ]);
    assert_eq!(refused.status.code(), Some(2));

    assert!(skewlevy(&[
        "decompose",
        "--input",
        sim.to_str().unwrap(),
        "--out",
        dec.to_str().unwrap()
    ])
    .status
    .success());
    let exits = fs::read_to_string(dec.join("exits.csv")).unwrap();
    assert_eq!(exits.lines().count(), 121);
    assert!(
        dec.join("radial/manifest.toml").exists() && dec.join("angular/manifest.toml").exists()
    );

    let o = skewlevy(&[
        "estimate",
        "--input",
        dec.to_str().unwrap(),
        "--n-grid",
        "6",
        "--out",
        est.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(est.join("triple.toml")).unwrap();
    for key in ["covariance_se", "drift_se", "thresholds"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn usage_errors_exit_2_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    assert_eq!(
        simulate(&out, &["--scenario", "torus"]).status.code(),
        Some(2)
    );
    assert!(!out.exists());
    assert_eq!(simulate(&out, &["--dt", "-1"]).status.code(), Some(2));
    assert_eq!(
        skewlevy(&["verify", "NO-SUCH-EXPERIMENT"]).status.code(),
        Some(2)
    );
    assert_eq!(skewlevy(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_list_prints_the_registry() {
    let o = skewlevy(&["verify", "--list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "RADIAL-BESSEL",
        "RADIAL-MARKOV",
        "SKEW-EUCLID",
        "SKEW-SPHERE",
        "COUNTEREXAMPLE",
        "TRIPLE-RECOVERY",
        "MARTINGALE-CHECK",
        "PI-COUNTING",
        "DYSON-RADIAL",
        "EIGENFRAME-COVARIANCE",
        "LIFT",
        "CONVOLUTION-SEMIGROUP",
        "DETERMINISTIC",
        "CALIBRATION",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn verify_reports_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = skewlevy(&[
            "verify",
            "SKEW-EUCLID",
            "--seed",
            "7",
            "--paths",
            "1000",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            matches!(o.status.code(), Some(0 | 1)),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stdout).contains("wall clock"));
    }
    let ra = fs::read(a.join("SKEW-EUCLID/report.json")).unwrap();
    let rb = fs::read(b.join("SKEW-EUCLID/report.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(digest_tree(&a), digest_tree(&b));
}

#[test]
fn verify_counterexample_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = skewlevy(&[
        "verify",
        "COUNTEREXAMPLE",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("COUNTEREXAMPLE/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    let checks = report["checks"].as_array().unwrap();
    for name in ["ks_ray_radius_vs_chi_3", "qv_distinguisher_z"] {
        assert!(
            checks
                .iter()
                .any(|c| c["name"] == name && c["passed"] == true),
            "{name}"
        );
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_skewlevy"))
        .args(["simulate", "--paths", "1", "--t-end", "0"])
        .env("SKEWLEVY_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("simulate/manifest.toml").exists());
}
