use std::process::{Command, Output};

use serde_json::Value;

fn hecke(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hecke")).args(args).output().expect("binary runs")
}

fn json_ok(args: &[&str]) -> Value {
    let out = hecke(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn pair(v: &Value) -> (f64, f64) {
    (v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

#[test]
fn generators_for_q3() {
    let v = json_ok(&["generators", "--q", "3"]);
    let gens = v["result"]["generators"].as_array().unwrap();
    let find = |name: &str| gens.iter().find(|g| g["name"] == name).unwrap()["matrix"].clone();
    let close = |m: Value, want: [[f64; 2]; 2]| {
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j].as_f64().unwrap() - want[i][j]).abs() < 1e-15);
            }
        }
    };
    close(find("g_1"), [[1.0, -1.0], [0.0, 1.0]]);
    close(find("g_2"), [[1.0, 0.0], [-1.0, 1.0]]);
    for id in v["result"]["identities"].as_array().unwrap() {
        assert!(id["deviation"].as_f64().unwrap() <= 1e-10);
    }
}

#[test]
fn determinant_matches_euler_product() {
    let det = json_ok(&["det", "--q", "3", "--s", "2", "--order", "24", "--mode", "hurwitz", "--symmetry", "full"]);
    let zeta = json_ok(&["zeta", "--q", "3", "--s", "2", "--lmax", "12"]);
    let (d, _) = pair(&det["result"]["det"]);
    let (z, _) = pair(&zeta["result"]["value"]);
    let bound = zeta["provenance"]["tail_bound"].as_f64().unwrap();
    assert!(((d - z) / z).abs() <= bound, "{d} vs {z}, bound {bound}");
    assert_eq!(det["provenance"]["M"], 24);
    assert!(det["provenance"]["c_param"].as_f64().is_some());
}

#[test]
fn complex_parameter_and_modes() {
    let a = json_ok(&["det", "--q", "4", "--s", "1.2+3i", "--mode", "hurwitz"]);
    let b = json_ok(&["det", "--q", "4", "--s", "1.2+3i", "--mode", "truncate"]);
    let (ar, ai) = pair(&a["result"]["det"]);
    let (br, bi) = pair(&b["result"]["det"]);
    assert!((ar - br).abs() < 1e-8 && (ai - bi).abs() < 1e-8);
    let conj = json_ok(&["det", "--q", "4", "--s", "1.2-3i"]);
    let (cr, ci) = pair(&conj["result"]["det"]);
    assert!((cr - ar).abs() < 1e-10 && (ci + ai).abs() < 1e-10);
}

#[test]
fn usage_and_numerical_errors() {
    assert_eq!(hecke(&["det", "--q", "3", "--unknown"]).status.code(), Some(2));
    assert_eq!(hecke(&["det", "--q", "3", "--s", "two"]).status.code(), Some(2));
    let out = hecke(&["det", "--q", "3", "--s", "0.4", "--mode", "truncate"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "mode");
    let out = hecke(&["zeta", "--q", "3", "--s", "0.9", "--lmax", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hecke(&["generators", "--q", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn warm_cache_equals_cold() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["geodesics", "--q", "4", "--lmax", "6", "--cache-dir", dir.path().to_str().unwrap(), "--output", "csv"];
    let cold = hecke(&args);
    assert!(cold.status.success());
    assert!(dir.path().join("q4").join("spectrum_L6.jsonl").exists());
    let warm = hecke(&args);
    assert_eq!(cold.stdout, warm.stdout);
    let uncached = hecke(&["geodesics", "--q", "4", "--lmax", "6", "--output", "csv"]);
    let strip = |b: &[u8]| String::from_utf8_lossy(b).lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&cold.stdout), strip(&uncached.stdout));
}

#[test]
fn verify_is_deterministic_and_passes() {
    let a = hecke(&["verify", "--q", "3", "--seed", "7"]);
    let b = hecke(&["verify", "--q", "3", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["provenance"]["passed"], true);
}

#[test]
fn trace_methods_agree() {
    let v = json_ok(&["trace", "--q", "3", "--n", "2", "--s", "2", "--threads", "2"]);
    assert_eq!(v["result"]["consistent"], true);
    let words = json_ok(&["trace", "--q", "4", "--n", "1", "--s", "2", "--mode", "words"]);
    let (re, _) = pair(&words["result"]["value"]);
    assert!((re - 0.0355339).abs() < 1e-7);
}

#[test]
fn zero_scan_csv() {
    let out = hecke(&[
        "zeros", "--q", "3", "--symmetry", "minus", "--tmin", "9.4", "--tmax", "9.6", "--tstep", "0.02", "--output", "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "t,re_det,im_det,abs_det"));
    let zero = text.lines().find_map(|l| l.strip_prefix("# zero ")).expect("one zero");
    let z: Value = serde_json::from_str(zero).unwrap();
    assert!((z["t"].as_f64().unwrap() - 9.53369526).abs() < 1e-6);
}

#[test]
fn eigenfunction_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eig.json");
    let v = json_ok(&[
        "eigfun", "--q", "3", "--t", "9.5337", "--refine", "0.001", "--symmetry", "minus", "--out", path.to_str().unwrap(),
    ]);
    assert!(v["result"]["residual"].as_f64().unwrap() < 1e-8);
    let export: Value = serde_json::from_reader(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(export["q"], 3);
    let disks = export["disks"].as_array().unwrap();
    assert_eq!(disks.len(), 1);
    assert_eq!(disks[0]["coeffs"].as_array().unwrap().len(), 25);
}

#[test]
fn extension_of_closed_form() {
    // psi(t) = 1 - t^{-2s} solves the equation for every q and is odd
    let (q, s_re, s_im) = (4u32, 0.5f64, 3.0f64);
    let lam = 2f64.sqrt();
    let psi = |t: f64| {
        let p = (-2.0 * s_re * t.ln(), -2.0 * s_im * t.ln());
        let m = p.0.exp();
        (1.0 - m * p.1.cos(), -m * p.1.sin())
    };
    let samples: Vec<[f64; 3]> = (0..40)
        .map(|i| {
            let t = 1.0 + lam * 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / 39.0).cos());
            let (re, im) = psi(t);
            [t, re, im]
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("samples.json");
    std::fs::write(&input, serde_json::json!({ "parity": "odd", "samples": samples }).to_string()).unwrap();
    let v = json_ok(&[
        "extend", "--q", &q.to_string(), "--s", "0.5+3i", "--input", input.to_str().unwrap(), "--steps", "3", "--points", "20",
    ]);
    let hi = v["provenance"]["interval"][1].as_f64().unwrap();
    assert!((hi - (1.0 + 4.0 * lam)).abs() < 1e-12);
    for p in v["result"].as_array().unwrap() {
        let t = p["t"].as_f64().unwrap();
        let (re, im) = pair(&p["value"]);
        let (er, ei) = psi(t);
        assert!((re - er).abs() < 1e-9 && (im - ei).abs() < 1e-9, "t = {t}");
    }
}
