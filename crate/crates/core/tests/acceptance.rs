//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use hecke_core::coding::check_bijection;
use hecke_core::determinant::compare_traces;
use hecke_core::moebius::group_identity_deviations;
use hecke_core::operator::OperatorKernel;
use hecke_core::zeta::partition_identity_check;
use hecke_core::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

fn group_identities() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for q in 3..=12 {
        for (_, dev) in group_identity_deviations(q)? {
            worst = worst.max(dev);
        }
    }
    Ok(Outcome { passed: worst <= 1e-10, detail: format!("max deviation {worst:.2e} over q = 3..12") })
}

fn coding_oracle() -> Result<Outcome> {
    let r = check_bijection(3, 3, 4)?;
    let injective = r.words == r.distinct_elements;
    Ok(Outcome {
        passed: injective && r.all_hyperbolic && r.parabolic_traces_exact,
        detail: format!(
            "{} words, {} distinct, min trace {:.4}, parabolic traces exact: {}",
            r.words, r.distinct_elements, r.min_trace, r.parabolic_traces_exact
        ),
    })
}

fn trace_identity() -> Result<Outcome> {
    let policy = CutoffPolicy { cap: 400, ..CutoffPolicy::default() };
    let mut passed = true;
    let mut parts = Vec::new();
    for (q, n, s) in [(3, 2, 2.0), (4, 1, 2.0), (5, 2, 1.5)] {
        let cmp = compare_traces(q, n, c(s, 0.0), 24, &policy)?;
        let (d, b) = (cmp.difference(), cmp.combined_bound());
        passed &= d <= b && b <= 1e-6;
        parts.push(format!("({q},{n},{s}): diff {d:.1e} bound {b:.1e}"));
    }
    Ok(Outcome { passed, detail: parts.join("; ") })
}

fn partition_identity() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for (q, n) in [(3, 2), (4, 1), (4, 2)] {
        for s in [1.5, 2.0] {
            worst = worst.max(partition_identity_check(q, n, c(s, 0.0), 8)?.discrepancy);
        }
    }
    Ok(Outcome { passed: worst <= 1e-13, detail: format!("max discrepancy {worst:.2e}") })
}

fn determinant_vs_euler() -> Result<Outcome> {
    let cfg = OperatorConfig::new(24);
    let mut passed = true;
    let mut parts = Vec::new();
    for q in [3, 4, 5] {
        let l_max = if q == 3 { 12.0 } else { 10.0 };
        let entries = length_spectrum(q, l_max, Precision::Double)?;
        for s in [2.0, 3.0] {
            let e = zeta::euler_product_from(&entries, c(s, 0.0), l_max, None)?;
            let d = det_at(q, c(s, 0.0), Symmetry::Full, &cfg)?;
            let r = rel(d, e.value);
            let tol = e.tail_bound.max(1e-3);
            passed &= r <= tol;
            parts.push(format!("q={q} s={s}: {r:.1e} (tail {:.1e})", e.tail_bound));
        }
    }
    Ok(Outcome { passed, detail: parts.join("; ") })
}

fn factorization() -> Result<Outcome> {
    let cfg = OperatorConfig::new(24);
    let mut worst = 0.0f64;
    for q in [3, 4, 5, 7] {
        for s in [c(2.0, 0.0), c(0.5, 5.0)] {
            let full = det_at(q, s, Symmetry::Full, &cfg)?;
            let plus = det_at(q, s, Symmetry::Plus, &cfg)?;
            let minus = det_at(q, s, Symmetry::Minus, &cfg)?;
            worst = worst.max((full - plus * minus).norm() / full.norm());
        }
    }
    Ok(Outcome { passed: worst <= 1e-8, detail: format!("max relative defect {worst:.2e}") })
}

/// Least-squares slope of `log|f(eps)|` against `log eps`.
fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
    sxy / sxx
}

fn continuation() -> Result<Outcome> {
    let hurwitz = OperatorConfig::new(24);
    let trunc = hurwitz.with_mode(determinant::default_truncation());
    let mut mode_diff = 0.0f64;
    for q in [3, 5] {
        for s in [0.75, 1.0, 2.0] {
            let a = det_at(q, c(s, 0.0), Symmetry::Full, &hurwitz)?;
            let b = det_at(q, c(s, 0.0), Symmetry::Full, &trunc)?;
            mode_diff = mode_diff.max((a - b).norm());
        }
    }
    let mut imag = 0.0f64;
    for s in [0.25, 0.75] {
        let d = det_at(3, c(s, 0.0), Symmetry::Full, &hurwitz)?;
        if !d.re.is_finite() {
            return Ok(Outcome { passed: false, detail: format!("det not finite at s = {s}") });
        }
        imag = imag.max(d.im.abs());
    }
    let pts: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&eps| det_at(3, c(0.5 + eps, 0.0), Symmetry::Full, &hurwitz).map(|d| (eps, d.norm())))
        .collect::<Result<_>>()?;
    let slope = log_slope(&pts);
    Ok(Outcome {
        passed: mode_diff <= 1e-8 && imag <= 1e-9 && (slope + 1.0).abs() <= 0.1,
        detail: format!("mode diff {mode_diff:.1e}, max |Im det| {imag:.1e}, pole exponent {slope:.4}"),
    })
}

const ODD_PARAMETER: f64 = 9.53369526;
const EVEN_PARAMETER: f64 = 13.7798;

fn spectral_zero() -> Result<(Outcome, Option<f64>)> {
    let op = OperatorConfig::new(24);
    let scan = scan_zeros(3, Symmetry::Minus, &ScanConfig::default(), &op)?;
    let mut detail = format!("{} validated zero(s), {} rejected", scan.zeros.len(), scan.rejected.len());
    let mut passed = scan.zeros.len() == 1;
    let mut t = None;
    if let Some(z) = scan.zeros.first() {
        let scaled = z.residual / scan.median_abs_det;
        passed &= z.stability < 1e-6 && (z.t - ODD_PARAMETER).abs() < 1e-3 && scaled <= 1e-6 && z.winding == 1;
        detail += &format!(
            "; t = {:.10}, stability {:.1e}, |det|/median {:.1e}, winding {}",
            z.t, z.stability, scaled, z.winding
        );
        t = Some(z.t);
    }
    // informational only
    let even_cfg = ScanConfig { t_min: 13.5, t_max: 14.0, ..ScanConfig::default() };
    let even = scan_zeros(3, Symmetry::Plus, &even_cfg, &op)?;
    match even.zeros.iter().min_by(|a, b| (a.t - EVEN_PARAMETER).abs().total_cmp(&(b.t - EVEN_PARAMETER).abs())) {
        Some(z) => detail += &format!("; even zero (informational) t = {:.6}, stability {:.1e}", z.t, z.stability),
        None => detail += "; no even zero found in [13.5, 14] (informational)",
    }
    Ok((Outcome { passed, detail }, t))
}

fn eigenfunction_quality(t: f64) -> Result<Outcome> {
    let s = c(0.5, t);
    let extract = |m: usize| {
        let cfg = OperatorConfig::new(m);
        Ok::<_, Error>((extract_eigenfunction(3, s, Symmetry::Minus, &cfg)?, OperatorKernel::new(3, s, Symmetry::Minus, &cfg)?))
    };
    let (base, _) = extract(24)?;
    let (low, k_low) = extract(20)?;
    let (high, k_high) = extract(28)?;
    // 100 points of the fast interval (-1, 1/3) covered by E_2; values through f = L f,
    // which stays accurate up to the ends of the chord
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..100 {
        let z = c(-1.0 + (4.0 / 3.0) * (i as f64 + 0.5) / 100.0, 0.0);
        let a = low.apply_operator(&k_low, 0, z)?;
        let b = high.apply_operator(&k_high, 0, z)?;
        diff = diff.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    let stability = diff / scale;
    let residual = base.residual.max(low.residual).max(high.residual);
    Ok(Outcome {
        passed: residual <= 1e-8 && base.decay_rho < 0.8 && stability <= 1e-7,
        detail: format!("residual {residual:.1e}, decay rho {:.3}, M 20 vs 28 values {stability:.1e}", base.decay_rho),
    })
}

fn invariant_suite() -> Result<Outcome> {
    let mut failed = Vec::new();
    let mut checks = 0;
    for q in 3..=7 {
        let r = verify(q, 2024)?;
        checks += r.checks.len();
        failed.extend(r.checks.iter().filter(|c| !c.passed).map(|c| format!("q={q}: {}", c.name)));
    }
    let detail = if failed.is_empty() { format!("{checks} checks over q = 3..7") } else { failed.join("; ") };
    Ok(Outcome { passed: failed.is_empty(), detail })
}

fn report(id: usize, name: &str, limit: Duration, run: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let out = run().unwrap_or_else(|e| Outcome { passed: false, detail: format!("error: {e}") });
    let elapsed = start.elapsed();
    let passed = out.passed && elapsed <= limit;
    println!(
        "[{}] {id:>2}. {name}: {} ({:.2?} of {:.0?})",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed,
        limit
    );
    passed
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; listing must print nothing
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report(1, "group identities", secs(1), group_identities);
    ok &= report(2, "coding oracle", secs(1), coding_oracle);
    ok &= report(3, "trace identity", secs(30), trace_identity);
    ok &= report(4, "partition identity", secs(10), partition_identity);
    ok &= report(5, "determinant vs Euler product", secs(300), determinant_vs_euler);
    ok &= report(6, "factorization", secs(120), factorization);
    ok &= report(7, "meromorphic continuation", secs(120), continuation);
    let mut zero = None;
    ok &= report(8, "spectral zero", secs(600), || {
        let (out, t) = spectral_zero()?;
        zero = t;
        Ok(out)
    });
    ok &= report(9, "eigenfunction quality", secs(60), || match zero {
        Some(t) => eigenfunction_quality(t),
        None => Ok(Outcome { passed: false, detail: "no validated zero to extract at".into() }),
    });
    ok &= report(10, "invariant suite", secs(300), invariant_suite);
    if ok {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
}
