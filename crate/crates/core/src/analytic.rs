//! Scalar analytic kernels: principal-branch powers, the Hurwitz zeta
//! function and discrete Cauchy (Taylor) coefficients on disks.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Even Bernoulli numbers `B_2, B_4, ..., B_24`.
const BERNOULLI_EVEN: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

/// `base^expo` on the principal branch, `exp(expo * Log base)`.
///
/// Fails with [`Error::BranchCut`] when `base` lies on `(-inf, 0]`.
pub fn principal_power(base: Complex64, expo: Complex64) -> Result<Complex64> {
    if base.im == 0.0 && base.re <= 0.0 {
        return Err(Error::BranchCut { base });
    }
    Ok((expo * base.ln()).exp())
}

/// `((w)^(-2))^s` on the principal branch, the automorphy factor with `w = cz + d`.
///
/// Uses the identity `((w)^(-2))^s = exp(-2 s Log(±w))`, choosing the sign
/// with positive real part. `Re w = 0` puts `w^(-2)` on the cut.
#[inline]
pub fn inv_square_power(w: Complex64, s: Complex64) -> Result<Complex64> {
    if w.re == 0.0 {
        return Err(Error::BranchCut { base: (w * w).inv() });
    }
    let w = if w.re < 0.0 { -w } else { w };
    Ok((-2.0 * s * w.ln()).exp())
}

/// Hurwitz zeta `sum_{n>=0} (n + w)^(-a)` by Euler-Maclaurin summation.
///
/// Meromorphic in `a` with a single simple pole at `a = 1`; requires
/// `Re w > 0`. The target accuracy is `1e-12` relative for `|a| <= 40`
/// and `Re a >= -1`. Much more negative `Re a` loses digits to cancellation.
pub fn hurwitz_zeta(a: Complex64, w: Complex64) -> Result<Complex64> {
    if (a - 1.0).norm() < 1e-15 {
        return Err(Error::Pole(format!("Hurwitz zeta at a = {a}")));
    }
    if !(w.re > 0.0) {
        return Err(Error::Domain(format!("Hurwitz zeta needs Re w > 0, got w = {w}")));
    }
    let n_direct = 20usize.max((2.0 * a.norm()).ceil() as usize);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..n_direct {
        sum += (-a * (w + n as f64).ln()).exp();
    }
    let x = w + n_direct as f64;
    let log_x = x.ln();
    let x_pow = (-a * log_x).exp();
    sum += x * x_pow / (a - 1.0) + 0.5 * x_pow;
    // term_k = B_{2k}/(2k)! * (a)_{2k-1} * x^{-a-2k+1}
    let x_inv2 = (x * x).inv();
    let mut rising = a * x_pow / x; // (a)_1 x^{-a-1}
    let mut factorial = 2.0; // (2k)!
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let k = k + 1;
        sum += *b / factorial * rising;
        let two_k = 2.0 * k as f64;
        rising *= (a + two_k - 1.0) * (a + two_k) * x_inv2;
        factorial *= (two_k + 1.0) * (two_k + 2.0);
    }
    if !(sum.re.is_finite() && sum.im.is_finite()) {
        return Err(Error::Evaluation(format!("Hurwitz zeta overflow at a = {a}, w = {w}")));
    }
    Ok(sum)
}

/// `zeta(a + m, w)` for `m = 0..count`, sharing the direct sum across shifts.
pub fn hurwitz_zeta_family(a: Complex64, w: Complex64, count: usize) -> Result<Vec<Complex64>> {
    if !(w.re > 0.0) {
        return Err(Error::Domain(format!("Hurwitz zeta needs Re w > 0, got w = {w}")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    for m in 0..count {
        if (a + m as f64 - 1.0).norm() < 1e-15 {
            return Err(Error::Pole(format!("Hurwitz zeta at a = {}", a + m as f64)));
        }
    }
    let a_max = (a + (count - 1) as f64).norm().max(a.norm());
    let n_direct = 20usize.max((2.0 * a_max).ceil() as usize);
    let mut out = vec![Complex64::new(0.0, 0.0); count];
    for n in 0..n_direct {
        let base = w + n as f64;
        let inv = base.inv();
        let mut term = (-a * base.ln()).exp();
        for slot in out.iter_mut() {
            *slot += term;
            term *= inv;
        }
    }
    let x = w + n_direct as f64;
    let x_inv = x.inv();
    let x_inv2 = x_inv * x_inv;
    let mut x_pow = (-a * x.ln()).exp();
    for (m, slot) in out.iter_mut().enumerate() {
        let am = a + m as f64;
        let mut sum = x * x_pow / (am - 1.0) + 0.5 * x_pow;
        let mut rising = am * x_pow * x_inv;
        let mut factorial = 2.0;
        for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
            sum += *b / factorial * rising;
            let two_k = 2.0 * (k + 1) as f64;
            rising *= (am + two_k - 1.0) * (am + two_k) * x_inv2;
            factorial *= (two_k + 1.0) * (two_k + 2.0);
        }
        *slot += sum;
        if !(slot.re.is_finite() && slot.im.is_finite()) {
            return Err(Error::Evaluation(format!("Hurwitz zeta overflow at a = {am}, w = {w}")));
        }
        x_pow *= x_inv;
    }
    Ok(out)
}

/// A closed disk in the complex plane together with the number of
/// equispaced nodes used for Cauchy integrals on its boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Complex64,
    pub radius: f64,
    pub quadrature_points: usize,
}

impl Disk {
    pub fn new(center: Complex64, radius: f64, quadrature_points: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("disk radius must be positive, got {radius}")));
        }
        if quadrature_points < 16 || !quadrature_points.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "quadrature point count must be even and >= 16, got {quadrature_points}"
            )));
        }
        Ok(Disk { center, radius, quadrature_points })
    }

    /// Boundary node `p` of `quadrature_points`.
    pub fn node(&self, p: usize) -> Complex64 {
        self.center + self.radius * unit_root(p, self.quadrature_points)
    }

    pub fn nodes(&self) -> Vec<Complex64> {
        (0..self.quadrature_points).map(|p| self.node(p)).collect()
    }

    /// Open-disk membership with a relative safety margin.
    pub fn contains(&self, z: Complex64, margin: f64) -> bool {
        (z - self.center).norm() < self.radius * (1.0 - margin)
    }
}

/// Default node count for Taylor order `m`: `4(m+1)` rounded up to a power of two, at least 64.
/// Fewer nodes alias the slowly decaying coefficients that occur high on the critical line.
pub fn default_quadrature_points(order: usize) -> usize {
    (4 * (order + 1)).next_power_of_two().max(64)
}

#[inline]
pub(crate) fn unit_root(p: usize, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * p as f64 / n as f64)
}

/// Unscaled Taylor coefficients `c_0..=c_m` of `f` about the disk centre,
/// from the trapezoidal rule on the boundary circle.
pub fn cauchy_coefficients<F>(f: F, disk: &Disk, order: usize) -> Result<Vec<Complex64>>
where
    F: Fn(Complex64) -> Complex64,
{
    let scaled = scaled_cauchy_coefficients(f, disk, order)?;
    let mut r_pow = 1.0;
    Ok(scaled
        .into_iter()
        .map(|c| {
            let out = c / r_pow;
            r_pow *= disk.radius;
            out
        })
        .collect())
}

/// Coefficients of `f` in the basis `((z - c)/r)^k`, i.e. `c_k r^k`.
pub fn scaled_cauchy_coefficients<F>(f: F, disk: &Disk, order: usize) -> Result<Vec<Complex64>>
where
    F: Fn(Complex64) -> Complex64,
{
    let p_count = disk.quadrature_points;
    let values: Vec<Complex64> = (0..p_count)
        .map(|p| {
            let z = disk.node(p);
            let v = f(z);
            if v.re.is_finite() && v.im.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation(format!("non-finite integrand at z = {z}")))
            }
        })
        .collect::<Result<_>>()?;
    Ok(dft_coefficients(&values, order))
}

/// `(1/P) sum_p v_p e^{-2 pi i k p / P}` for `k = 0..=order`.
pub(crate) fn dft_coefficients(values: &[Complex64], order: usize) -> Vec<Complex64> {
    let p_count = values.len();
    let scale = 1.0 / p_count as f64;
    (0..=order)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, v) in values.iter().enumerate() {
                acc += v * unit_root((k * p) % p_count, p_count).conj();
            }
            acc * scale
        })
        .collect()
}

/// Evaluates `sum_k c_k ((z - center)/radius)^k` by Horner's rule.
pub fn eval_scaled_series(coeffs: &[Complex64], disk: &Disk, z: Complex64) -> Complex64 {
    let x = (z - disk.center) / disk.radius;
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Direct partial sum plus the leading Euler-Maclaurin correction.
    fn hurwitz_oracle(a: Complex64, w: f64, terms: usize) -> Complex64 {
        let mut sum = c(0.0, 0.0);
        for n in (0..terms).rev() {
            sum += (-a * (n as f64 + w).ln()).exp();
        }
        let x = c(terms as f64 + w, 0.0);
        let xp = (-a * x.ln()).exp();
        sum + x * xp / (a - 1.0) + 0.5 * xp + a * xp / x / 12.0
    }

    #[test]
    fn principal_power_examples() {
        assert!((principal_power(c(4.0, 0.0), c(0.5, 0.0)).unwrap() - 2.0).norm() < 1e-15);
        let v = principal_power(c(0.0, 1.0), c(2.0, 0.0)).unwrap();
        assert!((v - c(-1.0, 0.0)).norm() < 1e-15);
        assert!(matches!(principal_power(c(-1.0, 0.0), c(0.5, 0.0)), Err(Error::BranchCut { .. })));
        assert!(principal_power(c(0.0, 0.0), c(0.5, 0.0)).is_err());
    }

    #[test]
    fn inv_square_power_matches_principal_power() {
        let s = c(0.5, 9.5);
        for w in [c(1.3, 0.4), c(-0.7, 0.2), c(0.2, -1.9), c(-2.0, -0.1)] {
            let direct = principal_power((w * w).inv(), s).unwrap();
            let fast = inv_square_power(w, s).unwrap();
            assert!((direct - fast).norm() <= 1e-12 * direct.norm());
        }
        assert!(inv_square_power(c(0.0, 1.0), s).is_err());
    }

    #[test]
    fn hurwitz_special_values() {
        let z2 = hurwitz_zeta(c(2.0, 0.0), c(1.0, 0.0)).unwrap();
        assert!((z2.re - PI * PI / 6.0).abs() < 1e-13);
        let half = hurwitz_zeta(c(2.0, 0.0), c(0.5, 0.0)).unwrap();
        assert!((half.re - PI * PI / 2.0).abs() < 1e-13);
        // zeta(0, w) = 1/2 - w
        let z0 = hurwitz_zeta(c(0.0, 0.0), c(0.3, 0.0)).unwrap();
        assert!((z0 - c(0.2, 0.0)).norm() < 1e-13);
        // zeta(-1, w) = -(w^2 - w + 1/6)/2
        let zm1 = hurwitz_zeta(c(-1.0, 0.0), c(2.5, 0.0)).unwrap();
        assert!((zm1.re + (6.25 - 2.5 + 1.0 / 6.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn hurwitz_matches_direct_summation() {
        let a = c(2.5, 4.0);
        let got = hurwitz_zeta(a, c(1.7, 0.0)).unwrap();
        let want = hurwitz_oracle(a, 1.7, 1_000_000);
        assert!((got - want).norm() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn hurwitz_errors() {
        assert!(matches!(hurwitz_zeta(c(1.0, 0.0), c(1.0, 0.0)), Err(Error::Pole(_))));
        assert!(matches!(hurwitz_zeta(c(2.0, 0.0), c(-0.5, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn hurwitz_residue_at_pole() {
        // zeta(a, w) ~ 1/(a-1) near a = 1
        let eps = 1e-6;
        let v = hurwitz_zeta(c(1.0 + eps, 0.0), c(0.7, 0.0)).unwrap();
        assert!((v.re * eps - 1.0).abs() < 1e-5);
    }

    #[test]
    fn cauchy_coefficients_examples() {
        let disk = Disk::new(c(0.0, 0.0), 0.5, 64).unwrap();
        let cs = cauchy_coefficients(|z| (c(1.0, 0.0) - z).inv(), &disk, 40).unwrap();
        for (k, ck) in cs.iter().enumerate() {
            assert!((ck - 1.0).norm() < 1e-14 * 2f64.powi(k as i32).max(1.0), "k={k}: {ck}");
        }
        let disk = Disk::new(c(0.0, 0.0), 1.0, 64).unwrap();
        let cs = cauchy_coefficients(|z| z.exp(), &disk, 20).unwrap();
        let mut fact = 1.0;
        for (k, ck) in cs.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((ck - 1.0 / fact).norm() < 1e-15, "k={k}");
        }
    }

    #[test]
    fn cauchy_rejects_nonfinite() {
        let disk = Disk::new(c(0.0, 0.0), 1.0, 16).unwrap();
        assert!(matches!(
            cauchy_coefficients(|z| (z - 1.0).inv() * f64::INFINITY, &disk, 4),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn disk_validation() {
        assert!(Disk::new(c(0.0, 0.0), -1.0, 64).is_err());
        assert!(Disk::new(c(0.0, 0.0), 1.0, 15).is_err());
        assert_eq!(default_quadrature_points(8), 64);
        assert_eq!(default_quadrature_points(24), 128);
        assert_eq!(default_quadrature_points(40), 256);
    }

    #[test]
    fn hurwitz_family_matches_single_calls() {
        let a = c(0.5, 9.5);
        let w = c(3.4, -0.2);
        let fam = hurwitz_zeta_family(a, w, 25).unwrap();
        for (m, v) in fam.iter().enumerate() {
            let single = hurwitz_zeta(a + m as f64, w).unwrap();
            assert!((v - single).norm() <= 1e-12 * single.norm(), "m={m}");
        }
        assert!(matches!(hurwitz_zeta_family(c(-1.0, 0.0), w, 4), Err(Error::Pole(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn hurwitz_shift_recurrence(
            ar in -1.0f64..20.0, ai in -15.0f64..15.0,
            wr in 0.5f64..5.0, wi in -3.0f64..3.0,
        ) {
            let a = c(ar, ai);
            prop_assume!(a.norm() <= 20.0 && (a - 1.0).norm() > 1e-3);
            let w = c(wr, wi);
            let lhs = hurwitz_zeta(a, w).unwrap() - hurwitz_zeta(a, w + 1.0).unwrap();
            let rhs = principal_power(w, -a).unwrap();
            let scale = 1f64.max(rhs.norm());
            prop_assert!((lhs - rhs).norm() <= 1e-10 * scale, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn cauchy_reproduces_polynomials(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12),
            cr in -1.0f64..1.0, r in 0.1f64..2.0,
        ) {
            let cs: Vec<Complex64> = coeffs.iter().map(|&(a, b)| c(a, b)).collect();
            let disk = Disk::new(c(cr, 0.3), r, 64).unwrap();
            let poly = |z: Complex64| {
                let x = z - disk.center;
                cs.iter().rev().fold(c(0.0, 0.0), |acc, k| acc * x + k)
            };
            let got = cauchy_coefficients(poly, &disk, cs.len() - 1).unwrap();
            let size: f64 = cs.iter().enumerate().map(|(j, k)| k.norm() * r.powi(j as i32)).sum();
            for (k, (g, w)) in got.iter().zip(&cs).enumerate() {
                let tol = 1e-13 * size.max(1.0) * r.powi(-(k as i32));
                prop_assert!((g - w).norm() <= tol);
            }
        }
    }
}
