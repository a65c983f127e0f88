//! Disk neighbourhoods of the fast system and Galerkin matrices of the
//! transfer operator in scaled Taylor bases.
//!
//! On a disk `D(c, r)` the basis is `e_k(z) = ((z - c)/r)^k`, `k = 0..=M`.
//! The coefficient functionals are trapezoidal Cauchy integrals on the
//! boundary circle, so a block entry `A[i][k]` is the `i`-th coefficient of
//! the image of `e_k` under the branch sum. Parabolic sums over `n` are
//! evaluated either by direct summation (with an optional Richardson
//! extrapolation in `n`) or by resumming the tail into Hurwitz zeta values,
//! which continues them meromorphically to all `s`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{default_quadrature_points, dft_coefficients, hurwitz_zeta_family, inv_square_power, Disk};
use crate::error::{Error, Result};
use crate::moebius::{check_q, conjugated_generators, lambda, GroupElement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Full,
    Plus,
    Minus,
}

impl Symmetry {
    pub fn sign(self) -> f64 {
        match self {
            Symmetry::Minus => -1.0,
            _ => 1.0,
        }
    }
}

impl std::str::FromStr for Symmetry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Symmetry::Full),
            "plus" | "+" | "even" => Ok(Symmetry::Plus),
            "minus" | "-" | "odd" => Ok(Symmetry::Minus),
            other => Err(Error::Domain(format!("unknown symmetry {other}"))),
        }
    }
}

/// How the infinite parabolic sums are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TailMode {
    /// Direct summation over `n <= n_tail`. With `extrapolation = L > 0` the
    /// partial sums at `n_tail * 2^i`, `i = 0..=L`, are combined to remove the
    /// leading `L` terms `N^{1-2s-j}` of the tail. Requires `Re s > 1/2`.
    Truncate { n_tail: usize, extrapolation: usize },
    /// Direct terms `n <= n_direct` plus a Hurwitz zeta resummation of the rest.
    Hurwitz { n_direct: usize },
}

impl Default for TailMode {
    fn default() -> Self {
        TailMode::Hurwitz { n_direct: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiskLabel {
    #[serde(rename = "E1")]
    One,
    #[serde(rename = "Er")]
    Middle,
    #[serde(rename = "Eq-1")]
    Last,
}

/// One named check of the disk construction with its worst relative margin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiskCondition {
    pub name: String,
    pub margin: f64,
    pub passed: bool,
}

/// Open disks `E_1`, `E_r`, `E_{q-1}` around the fast intervals, each with the
/// chord `[a_j, b_j]` as a diameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiskSystem {
    pub q: u32,
    pub lambda: f64,
    pub c_param: f64,
    pub e1: Disk,
    /// Absent for `q = 3`, where no hyperbolic branch exists.
    pub er: Option<Disk>,
    pub eq: Disk,
    pub conditions: Vec<DiskCondition>,
}

impl DiskSystem {
    pub fn disk(&self, label: DiskLabel) -> Option<&Disk> {
        match label {
            DiskLabel::One => Some(&self.e1),
            DiskLabel::Middle => self.er.as_ref(),
            DiskLabel::Last => Some(&self.eq),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }
}

fn chord_disk(a: f64, b: f64, p: usize) -> Result<Disk> {
    Disk::new(Complex64::new((a + b) / 2.0, 0.0), (b - a) / 2.0, p)
}

const PARABOLIC_CHECKS: u32 = 50;
const BOUNDARY_SAMPLES: usize = 720;

/// Builds the disks, enlarging the middle chord parameter `c` by factors of
/// 1.5 until every inclusion holds, and records all checks.
pub fn build_disk_system(q: u32, c_init: f64, quadrature_points: usize) -> Result<DiskSystem> {
    check_q(q)?;
    let lam = lambda(q);
    let a1 = -(2.0 * lam - 1.0) / (2.0 * lam + 1.0);
    let b1 = (5.0 * lam + 1.0) / (5.0 * lam - 1.0);
    let e1 = chord_disk(a1, b1, quadrature_points)?;
    let eq = chord_disk(-b1, -a1, quadrature_points)?;
    if q == 3 {
        let conditions = verify_disks(q, None, &e1, &eq);
        let sys = DiskSystem { q, lambda: lam, c_param: c_init, e1, er: None, eq, conditions };
        return finish(sys);
    }
    let mut c = c_init.max(1.0 / lam + 1e-3);
    for _ in 0..40 {
        let br = (c * lam - 1.0) / (c * lam + 1.0);
        let er = chord_disk(-br, br, quadrature_points)?;
        let conditions = verify_disks(q, Some(&er), &e1, &eq);
        if conditions.iter().all(|x| x.passed) {
            return finish(DiskSystem { q, lambda: lam, c_param: c, e1, er: Some(er), eq, conditions });
        }
        c *= 1.5;
    }
    Err(Error::Construction(format!("no admissible middle disk found for q = {q}")))
}

fn finish(sys: DiskSystem) -> Result<DiskSystem> {
    if let Some(bad) = sys.conditions.iter().find(|c| !c.passed) {
        return Err(Error::Construction(format!(
            "disk condition '{}' fails for q = {} (margin {:.3e})",
            bad.name, sys.q, bad.margin
        )));
    }
    Ok(sys)
}

/// Relative depth of `g(D_src)` inside `D_dst`: `1 - max |g(z) - c|/r` over the image.
///
/// Uses the exact image chord (real Moebius maps send disks with a real
/// diameter to such disks) and confirms it with boundary samples.
fn inclusion_margin(g: &GroupElement, src: &Disk, dst: &Disk) -> f64 {
    let (a, b) = (src.center.re - src.radius, src.center.re + src.radius);
    if g.c != 0.0 {
        let pole = -g.d / g.c;
        if pole >= a && pole <= b {
            return -1.0;
        }
    }
    let ga = g.apply(a.into()).re;
    let gb = g.apply(b.into()).re;
    let chord = 1.0 - (ga - dst.center.re).abs().max((gb - dst.center.re).abs()) / dst.radius;
    let mut sampled = f64::INFINITY;
    for p in 0..BOUNDARY_SAMPLES {
        let z = src.center + src.radius * crate::analytic::unit_root(p, BOUNDARY_SAMPLES);
        sampled = sampled.min(1.0 - (g.apply(z) - dst.center).norm() / dst.radius);
    }
    chord.min(sampled)
}

fn condition(name: impl Into<String>, margin: f64) -> DiskCondition {
    DiskCondition { name: name.into(), margin, passed: margin > 0.0 }
}

fn verify_disks(q: u32, er: Option<&Disk>, e1: &Disk, eq: &Disk) -> Vec<DiskCondition> {
    let conj = conjugated_generators(q).expect("q validated");
    let lam = conj.lambda;
    let mut out = Vec::new();
    let e1_int = (0.0, 1.0);
    let eq_int = (-1.0, 0.0);
    let inside = |d: &Disk, (lo, hi): (f64, f64)| {
        1.0 - (lo - d.center.re).abs().max((hi - d.center.re).abs()) / d.radius
    };
    out.push(condition("(i) E_1 closure inside disk", inside(e1, e1_int)));
    out.push(condition("(i) E_q-1 closure inside disk", inside(eq, eq_int)));
    if let Some(er) = er {
        let br = (lam - 1.0) / (lam + 1.0);
        out.push(condition("(i) E_r closure inside disk", inside(er, (-br, br))));
    }
    let sym = (e1.center + eq.center).norm() + (e1.radius - eq.radius).abs()
        + er.map_or(0.0, |d| d.center.norm());
    out.push(condition("(ii) J symmetry", if sym < 1e-14 { 1.0 } else { -sym }));

    if let Some(er) = er {
        let mut worst = f64::INFINITY;
        for k in 2..=q - 2 {
            let hi = conj.h(k).inverse();
            for src in [e1, er, eq] {
                worst = worst.min(inclusion_margin(&hi, src, er));
            }
        }
        out.push(condition("(iii) hyperbolic branches into E_r", worst));
    }

    let h1i = conj.h(1).inverse();
    let hqi = conj.h(q - 1).inverse();
    let mut worst_iv = f64::INFINITY;
    let mut worst_v = f64::INFINITY;
    for n in 1..=PARABOLIC_CHECKS {
        let g1 = h1i.pow(n as i64);
        let gq = hqi.pow(n as i64);
        for src in er.into_iter().chain(std::iter::once(eq)) {
            worst_iv = worst_iv.min(inclusion_margin(&g1, src, e1));
        }
        for src in er.into_iter().chain(std::iter::once(e1)) {
            worst_v = worst_v.min(inclusion_margin(&gq, src, eq));
        }
    }
    // the images accumulate at the parabolic fixed points
    worst_iv = worst_iv.min(1.0 - (1.0 - e1.center.re).abs() / e1.radius);
    worst_v = worst_v.min(1.0 - (-1.0 - eq.center.re).abs() / eq.radius);
    out.push(condition("(iv) h_1^-n into E_1, n <= 50 and limit", worst_iv));
    out.push(condition("(v) h_q-1^-n into E_q-1, n <= 50 and limit", worst_v));

    // derivative of h_1^{-1} on the disks it is applied to; the parabolic
    // fixed point +1 in E_1 itself has derivative exactly 1
    let deriv_max = |g: &GroupElement, disks: &[&Disk]| {
        let mut m = 0.0f64;
        for d in disks {
            for p in 0..BOUNDARY_SAMPLES {
                let z = d.center + d.radius * crate::analytic::unit_root(p, BOUNDARY_SAMPLES);
                m = m.max(1.0 / g.denominator(z).norm_sqr());
            }
        }
        m
    };
    let mut src_vi: Vec<&Disk> = vec![eq];
    let mut src_vii: Vec<&Disk> = vec![e1];
    if let Some(er) = er {
        src_vi.push(er);
        src_vii.push(er);
    }
    out.push(condition("(vi) h_1^-1 contracts on its source disks", 1.0 - deriv_max(&h1i, &src_vi)));
    out.push(condition("(vii) h_q-1^-1 contracts on its source disks", 1.0 - deriv_max(&hqi, &src_vii)));

    out.push(condition("(viii) Re z > -1 on closure of E_1", e1.center.re - e1.radius + 1.0));
    out.push(condition("(ix) Re z < 1 on closure of E_q-1", 1.0 - eq.center.re - eq.radius));
    if let Some(er) = er {
        out.push(condition("(x) |Re z| < 1 on closure of E_r", 1.0 - er.radius));
    }
    out
}

/// Settings shared by all operator assemblies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OperatorConfig {
    /// Taylor order `M`; each disk carries `M + 1` basis functions.
    pub order: usize,
    pub mode: TailMode,
    /// Quadrature nodes per circle; `None` picks the default for `order`.
    pub quadrature_points: Option<usize>,
    /// Starting value of the middle-disk parameter `c`.
    pub c_init: f64,
}

impl OperatorConfig {
    pub fn new(order: usize) -> Self {
        OperatorConfig { order, mode: TailMode::default(), quadrature_points: None, c_init: 2.0 }
    }

    pub fn with_mode(mut self, mode: TailMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn points(&self) -> usize {
        self.quadrature_points.unwrap_or_else(|| default_quadrature_points(self.order))
    }
}

/// The Galerkin matrix of `L_s` (or of `L_s^+`, `L_s^-`) with its metadata.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub q: u32,
    pub s: Complex64,
    pub order: usize,
    pub symmetry: Symmetry,
    pub mode: TailMode,
    /// Disk of each diagonal block, in block order.
    pub blocks: Vec<(DiskLabel, Disk)>,
    pub matrix: DMatrix<Complex64>,
    /// Bound (truncation) or estimate (extrapolation) for the neglected
    /// parabolic tail per matrix entry; zero in Hurwitz mode.
    pub tail_bound: f64,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Range of rows/columns belonging to block `b`.
    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        let n = self.order + 1;
        b * n..(b + 1) * n
    }
}

/// Pointwise evaluation of the branch sums feeding the Galerkin matrix.
///
/// For a target point `z` and a source block it returns the vector
/// `(tau e_k)(z)`, `k = 0..=M`, of the branch sum mapping that source to
/// that target.
pub struct OperatorKernel {
    pub q: u32,
    pub s: Complex64,
    pub order: usize,
    pub symmetry: Symmetry,
    pub mode: TailMode,
    pub system: DiskSystem,
    pub blocks: Vec<(DiskLabel, Disk)>,
    lam: f64,
    hyper_inv: Vec<(u32, GroupElement)>,
    /// Weight of `tau(h_k)` and of `tau(h_k J)` in the symmetric operators.
    hyper_weights: Vec<(u32, f64, f64)>,
}

impl OperatorKernel {
    pub fn new(q: u32, s: Complex64, symmetry: Symmetry, config: &OperatorConfig) -> Result<Self> {
        check_q(q)?;
        if let TailMode::Truncate { n_tail, .. } = config.mode {
            if s.re <= 0.5 {
                return Err(Error::Mode(format!(
                    "direct summation diverges for Re s = {} <= 1/2; use the Hurwitz mode",
                    s.re
                )));
            }
            if n_tail == 0 {
                return Err(Error::Domain("n_tail must be positive".into()));
            }
        }
        if config.order == 0 {
            return Err(Error::Domain("Taylor order must be positive".into()));
        }
        let system = build_disk_system(q, config.c_init, config.points())?;
        let conj = conjugated_generators(q)?;
        let hyper_inv: Vec<(u32, GroupElement)> = (2..q - 1).map(|k| (k, conj.h(k).inverse())).collect();
        let blocks = match symmetry {
            Symmetry::Full => {
                let mut b = vec![(DiskLabel::One, system.e1)];
                if let Some(er) = system.er {
                    b.push((DiskLabel::Middle, er));
                }
                b.push((DiskLabel::Last, system.eq));
                b
            }
            _ => {
                let mut b = vec![(DiskLabel::Last, system.eq)];
                if let Some(er) = system.er {
                    b.push((DiskLabel::Middle, er));
                }
                b
            }
        };
        let m = q.div_ceil(2); // floor((q+1)/2)
        let hyper_weights = (2..q - 1)
            .map(|k| match symmetry {
                Symmetry::Full => (k, 1.0, 0.0),
                _ => {
                    let eps = symmetry.sign();
                    if q.is_multiple_of(2) && k == m {
                        (k, 0.5, 0.5 * eps)
                    } else if k >= m {
                        (k, 1.0, 0.0)
                    } else {
                        (k, 0.0, eps)
                    }
                }
            })
            .collect();
        Ok(OperatorKernel {
            q,
            s,
            order: config.order,
            symmetry,
            mode: config.mode,
            system,
            blocks,
            lam: lambda(q),
            hyper_inv,
            hyper_weights,
        })
    }

    /// `sum_k w_k tau(h_k) e_j + w'_k tau(h_k J) e_j` on the middle disk, at `z`.
    fn hyperbolic_vector(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let er = self.system.er.expect("hyperbolic branches need E_r");
        let mut out = vec![Complex64::new(0.0, 0.0); self.order + 1];
        for ((k, g), &(k2, w, wj)) in self.hyper_inv.iter().zip(&self.hyper_weights) {
            debug_assert_eq!(*k, k2);
            if w == 0.0 && wj == 0.0 {
                continue;
            }
            let j = inv_square_power(g.denominator(z), self.s)?;
            let x = (g.apply(z) - er.center) / er.radius;
            // tau(h_k J) e_j(z) = j * e_j(-w) = (-1)^j j e_j(w) since E_r is centred at 0
            let mut pw = j;
            for (idx, slot) in out.iter_mut().enumerate() {
                let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
                *slot += pw * (w + wj * sign);
                pw *= x;
            }
        }
        Ok(out)
    }

    /// `sum_{n>=1} tau(h_{q-1}^n) e_k(z)` for the basis of `E_{q-1}`.
    pub fn parabolic_vector(&self, z: Complex64) -> Result<(Vec<Complex64>, f64)> {
        let eq = self.system.eq;
        let zp1 = z + 1.0;
        if !(zp1.re > 0.0) {
            return Err(Error::Domain(format!("parabolic sums need Re z > -1, got z = {z}")));
        }
        let lam = self.lam;
        let a_fac = lam * zp1 / 2.0;
        let u = a_fac.inv();
        let beta = (-1.0 - eq.center) / eq.radius;
        let gamma = 2.0 / (lam * eq.radius);
        let m1 = self.order + 1;
        // (w_n - c)/r = beta + gamma/(n + u); j_n = exp(-2s Log(A (n + u)))
        let direct = |n_lo: usize, n_hi: usize, out: &mut [Complex64]| -> Result<()> {
            for n in n_lo..=n_hi {
                let den = a_fac * (n as f64 + u);
                let j = inv_square_power(den, self.s)?;
                let x = beta + gamma / (n as f64 + u);
                let mut pw = j;
                for slot in out.iter_mut() {
                    *slot += pw;
                    pw *= x;
                }
            }
            Ok(())
        };
        match self.mode {
            TailMode::Hurwitz { n_direct } => {
                let mut out = vec![Complex64::new(0.0, 0.0); m1];
                direct(1, n_direct, &mut out)?;
                let zetas = hurwitz_zeta_family(2.0 * self.s, u + (n_direct + 1) as f64, m1)?;
                let pref = (-2.0 * self.s * a_fac.ln()).exp();
                // binomial re-expansion of (beta + gamma t)^k in t = 1/(n + u)
                let mut binom = vec![1.0f64; m1];
                let mut beta_pow = vec![Complex64::new(1.0, 0.0); m1];
                for i in 1..m1 {
                    beta_pow[i] = beta_pow[i - 1] * beta;
                }
                let gamma_pow: Vec<f64> = (0..m1).map(|i| gamma.powi(i as i32)).collect();
                let gz: Vec<Complex64> = zetas.iter().zip(&gamma_pow).map(|(z, g)| z * *g).collect();
                for k in 0..m1 {
                    if k > 0 {
                        // row k of Pascal's triangle
                        for i in (1..k).rev() {
                            binom[i] += binom[i - 1];
                        }
                        binom[k] = 1.0;
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for mm in 0..=k {
                        acc += binom[mm] * beta_pow[k - mm] * gz[mm];
                    }
                    out[k] += pref * acc;
                }
                Ok((out, 0.0))
            }
            TailMode::Truncate { n_tail, extrapolation } => {
                let mut partials = Vec::with_capacity(extrapolation + 1);
                let mut acc = vec![Complex64::new(0.0, 0.0); m1];
                let mut done = 0usize;
                for level in 0..=extrapolation {
                    let upto = n_tail << level;
                    direct(done + 1, upto, &mut acc)?;
                    done = upto;
                    partials.push(acc.clone());
                }
                if extrapolation == 0 {
                    let bound = self.truncation_bound(z, n_tail);
                    return Ok((acc, bound));
                }
                let (value, est) = richardson(partials, self.s);
                Ok((value, est))
            }
        }
    }

    /// `sum_{n > N} 4^sigma e^{pi |t|} (n lambda (x0 + 1) + 2)^{-2 sigma}`, bounded by the integral.
    fn truncation_bound(&self, z: Complex64, n_tail: usize) -> f64 {
        let sigma = self.s.re;
        let x0 = z.re;
        let k = self.lam * (x0 + 1.0);
        let base = n_tail as f64 * k + 2.0;
        4f64.powf(sigma) * (std::f64::consts::PI * self.s.im.abs()).exp() * base.powf(1.0 - 2.0 * sigma)
            / (k * (2.0 * sigma - 1.0))
    }

    /// Vector `(tau e_k)(z)` of the branch sum from source block `src` to target block `dst`,
    /// or `None` when the block vanishes.
    pub fn block_vector(&self, dst: usize, src: usize, z: Complex64) -> Result<Option<(Vec<Complex64>, f64)>> {
        let (dl, _) = self.blocks[dst];
        let (sl, _) = self.blocks[src];
        let flip = |v: Vec<Complex64>| -> Vec<Complex64> {
            v.into_iter().enumerate().map(|(k, x)| if k % 2 == 0 { x } else { -x }).collect()
        };
        use DiskLabel::*;
        let eps = self.symmetry.sign();
        let v = match self.symmetry {
            Symmetry::Full => match (dl, sl) {
                (One, One) | (Last, Last) => None,
                (_, Middle) => Some((self.hyperbolic_vector(z)?, 0.0)),
                (One, Last) | (Middle, Last) => Some(self.parabolic_vector(z)?),
                // tau(h_1^n) e_k^{(1)}(z) = (-1)^k [tau(h_{q-1}^n) e_k^{(q-1)}](-z)
                (Middle, One) | (Last, One) => {
                    let (v, b) = self.parabolic_vector(-z)?;
                    Some((flip(v), b))
                }
            },
            Symmetry::Plus | Symmetry::Minus => match (dl, sl) {
                // tau(h_1^n J) e_k^{(q-1)}(z) = [tau(h_{q-1}^n) e_k^{(q-1)}](-z)
                (Last, Last) => {
                    let (v, b) = self.parabolic_vector(-z)?;
                    Some((v.into_iter().map(|x| eps * x).collect(), b))
                }
                (Middle, Last) => {
                    let (a, ba) = self.parabolic_vector(z)?;
                    let (b, bb) = self.parabolic_vector(-z)?;
                    Some((a.into_iter().zip(b).map(|(x, y)| x + eps * y).collect(), ba + bb))
                }
                (_, Middle) => Some((self.hyperbolic_vector(z)?, 0.0)),
                _ => return Err(Error::Domain("symmetric operators have no E_1 block".into())),
            },
        };
        Ok(v)
    }

    /// Assembles the full Galerkin matrix.
    pub fn assemble(&self) -> Result<OperatorMatrix> {
        let nb = self.blocks.len();
        let m1 = self.order + 1;
        let mut mat = DMatrix::<Complex64>::zeros(nb * m1, nb * m1);
        let mut tail = 0.0f64;
        for dst in 0..nb {
            let disk = self.blocks[dst].1;
            let nodes = disk.nodes();
            for src in 0..nb {
                let mut columns: Vec<Vec<Complex64>> = vec![Vec::with_capacity(nodes.len()); m1];
                let mut present = true;
                for z in &nodes {
                    match self.block_vector(dst, src, *z)? {
                        None => {
                            present = false;
                            break;
                        }
                        Some((v, b)) => {
                            tail = tail.max(b);
                            for (k, x) in v.into_iter().enumerate() {
                                if !(x.re.is_finite() && x.im.is_finite()) {
                                    return Err(Error::Evaluation(format!("non-finite kernel at z = {z}")));
                                }
                                columns[k].push(x);
                            }
                        }
                    }
                }
                if !present {
                    continue;
                }
                for (k, col) in columns.iter().enumerate() {
                    let coeffs = dft_coefficients(col, self.order);
                    for (i, c) in coeffs.into_iter().enumerate() {
                        mat[(dst * m1 + i, src * m1 + k)] = c;
                    }
                }
            }
        }
        Ok(OperatorMatrix {
            q: self.q,
            s: self.s,
            order: self.order,
            symmetry: self.symmetry,
            mode: self.mode,
            blocks: self.blocks.clone(),
            matrix: mat,
            tail_bound: tail,
        })
    }
}

/// Richardson elimination of the tail terms `N^{1-2s-j}`, `j = 0..L-1`, from
/// partial sums at `N, 2N, ..., 2^L N`. Returns the value and the size of the
/// last correction as an error estimate.
fn richardson(mut table: Vec<Vec<Complex64>>, s: Complex64) -> (Vec<Complex64>, f64) {
    let levels = table.len() - 1;
    let mut est = 0.0f64;
    for j in 0..levels {
        let p = 1.0 - 2.0 * s - j as f64;
        let f = (p * std::f64::consts::LN_2).exp(); // 2^p
        let denom = Complex64::new(1.0, 0.0) - f;
        let mut next = Vec::with_capacity(table.len() - 1);
        for i in 1..table.len() {
            let row: Vec<Complex64> =
                table[i].iter().zip(&table[i - 1]).map(|(hi, lo)| (hi - f * lo) / denom).collect();
            next.push(row);
        }
        if j + 1 == levels {
            let last = next.last().expect("non-empty");
            let prev = table.last().expect("non-empty");
            est = last.iter().zip(prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        }
        table = next;
    }
    (table.pop().expect("one row remains"), est)
}

/// Builds the Galerkin matrix of the requested operator at `s`.
pub fn assemble(q: u32, s: Complex64, symmetry: Symmetry, config: &OperatorConfig) -> Result<OperatorMatrix> {
    OperatorKernel::new(q, s, symmetry, config)?.assemble()
}

/// Signed permutation of `J`: `(f_1, f_r, f_{q-1}) -> (tau(J) f_{q-1}, tau(J) f_r, tau(J) f_1)`
/// in the scaled bases of the full operator.
pub fn j_matrix(op: &OperatorMatrix) -> Result<DMatrix<Complex64>> {
    if op.symmetry != Symmetry::Full {
        return Err(Error::Mode("J acts on the full operator only".into()));
    }
    let n = op.dim();
    let m1 = op.order + 1;
    let nb = op.blocks.len();
    let mut out = DMatrix::zeros(n, n);
    for b in 0..nb {
        let partner = nb - 1 - b;
        for k in 0..m1 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            out[(b * m1 + k, partner * m1 + k)] = Complex64::new(sign, 0.0);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    q: u32,
    s: [f64; 2],
    order: usize,
    symmetry: Symmetry,
    mode: TailMode,
    rows: usize,
    cols: usize,
    blocks: Vec<(DiskLabel, Disk)>,
    tail_bound: f64,
    layout: String,
}

/// Writes a one-line JSON header followed by row-major little-endian complex doubles.
pub fn write_binary_dump<W: Write>(op: &OperatorMatrix, mut w: W) -> Result<()> {
    let header = DumpHeader {
        q: op.q,
        s: [op.s.re, op.s.im],
        order: op.order,
        symmetry: op.symmetry,
        mode: op.mode,
        rows: op.matrix.nrows(),
        cols: op.matrix.ncols(),
        blocks: op.blocks.clone(),
        tail_bound: op.tail_bound,
        layout: "row-major complex128 little-endian".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for i in 0..op.matrix.nrows() {
        for j in 0..op.matrix.ncols() {
            let c = op.matrix[(i, j)];
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a dump written by [`write_binary_dump`].
pub fn read_binary_dump<R: Read>(mut r: R) -> Result<OperatorMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Consistency("missing dump header".into()))?;
    let header: DumpHeader = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    if body.len() != header.rows * header.cols * 16 {
        return Err(Error::Consistency("dump body has the wrong size".into()));
    }
    let mut mat = DMatrix::zeros(header.rows, header.cols);
    for (idx, chunk) in body.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        mat[(idx / header.cols, idx % header.cols)] = Complex64::new(re, im);
    }
    Ok(OperatorMatrix {
        q: header.q,
        s: Complex64::new(header.s[0], header.s[1]),
        order: header.order,
        symmetry: header.symmetry,
        mode: header.mode,
        blocks: header.blocks,
        matrix: mat,
        tail_bound: header.tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_entry(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn q3_first_disk_from_chord() {
        let sys = build_disk_system(3, 2.0, 64).unwrap();
        assert!((sys.e1.center.re - 7.0 / 12.0).abs() < 1e-14);
        assert!((sys.e1.radius - 11.0 / 12.0).abs() < 1e-14);
        assert!(sys.er.is_none());
        assert!(sys.all_passed());
    }

    #[test]
    fn disks_pass_for_small_q() {
        for q in 3..=10 {
            let sys = build_disk_system(q, 2.0, 64).unwrap();
            for cond in &sys.conditions {
                assert!(cond.passed, "q = {q}: {} margin {}", cond.name, cond.margin);
            }
        }
    }

    #[test]
    fn j_commutes_with_full_operator() {
        for q in [3, 4, 5] {
            let op = assemble(q, c(1.1, 3.0), Symmetry::Full, &OperatorConfig::new(16)).unwrap();
            let j = j_matrix(&op).unwrap();
            let comm = &j * &op.matrix - &op.matrix * &j;
            assert!(max_entry(&comm) <= 1e-10 * max_entry(&op.matrix), "q = {q}");
            assert!(max_entry(&(&j * &j - DMatrix::identity(op.dim(), op.dim()))) == 0.0);
        }
    }

    #[test]
    fn truncation_rejects_left_half_plane() {
        let cfg = OperatorConfig::new(8).with_mode(TailMode::Truncate { n_tail: 200, extrapolation: 0 });
        assert!(matches!(assemble(4, c(0.5, 9.5), Symmetry::Full, &cfg), Err(Error::Mode(_))));
        assert!(assemble(4, c(0.5, 9.5), Symmetry::Full, &OperatorConfig::new(8)).is_ok());
    }

    #[test]
    fn truncation_tail_shrinks_and_matches_hurwitz() {
        let s = c(2.0, 0.0);
        let at = |n_tail, extrapolation| {
            let cfg = OperatorConfig::new(12).with_mode(TailMode::Truncate { n_tail, extrapolation });
            assemble(3, s, Symmetry::Full, &cfg).unwrap()
        };
        let (a, b) = (at(200, 0), at(400, 0));
        // the plain tail decays like N^{-3}
        let step = max_entry(&(&a.matrix - &b.matrix));
        assert!(step <= a.tail_bound && step > 1e-8, "{step}");
        assert!(b.tail_bound < a.tail_bound);
        let (ea, eb) = (at(200, 5), at(400, 5));
        assert!(max_entry(&(&ea.matrix - &eb.matrix)) < 1e-9);
        let h = assemble(3, s, Symmetry::Full, &OperatorConfig::new(12)).unwrap();
        assert!(max_entry(&(&h.matrix - &b.matrix)) <= b.tail_bound);
        assert!(max_entry(&(&h.matrix - &eb.matrix)) < 1e-10);
    }

    #[test]
    fn full_spectrum_is_union_of_symmetric_parts() {
        let cfg = OperatorConfig::new(16);
        let s = c(1.4, 0.0);
        let mags = |sym| {
            let op = assemble(4, s, sym, &cfg).unwrap();
            let mut v: Vec<f64> = op.matrix.eigenvalues().unwrap().iter().map(|e| e.norm()).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        let full = mags(Symmetry::Full);
        let mut parts: Vec<f64> = mags(Symmetry::Plus).into_iter().take(3).chain(mags(Symmetry::Minus).into_iter().take(3)).collect();
        parts.sort_by(|a, b| b.total_cmp(a));
        for (x, y) in full.iter().zip(&parts).take(4) {
            assert!((x - y).abs() < 1e-9 * x.max(1e-3), "{x} vs {y}");
        }
    }

    #[test]
    fn leading_eigenvalues_stable_under_order() {
        // M = 16 vs 24 reaches only ~2e-5 for q = 3; the geometric rate gives 1e-8 from M = 24 on
        let s = c(0.5, 9.5);
        let top = |m| {
            let op = assemble(3, s, Symmetry::Full, &OperatorConfig::new(m)).unwrap();
            let mut v: Vec<Complex64> = op.matrix.eigenvalues().unwrap().iter().copied().collect();
            v.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
            v
        };
        let (a, b) = (top(24), top(32));
        for x in &a[..10] {
            let near = b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min);
            assert!(near < 1e-8, "{x}: {near:e}");
        }
    }

    #[test]
    fn binary_dump_round_trip() {
        let op = assemble(5, c(0.5, 4.0), Symmetry::Minus, &OperatorConfig::new(6)).unwrap();
        let mut buf = Vec::new();
        write_binary_dump(&op, &mut buf).unwrap();
        let back = read_binary_dump(buf.as_slice()).unwrap();
        assert_eq!(back.q, 5);
        assert_eq!(back.symmetry, Symmetry::Minus);
        assert_eq!(back.matrix, op.matrix);
        assert!(read_binary_dump(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn symmetry_parsing() {
        assert_eq!("plus".parse::<Symmetry>().unwrap(), Symmetry::Plus);
        assert_eq!("-".parse::<Symmetry>().unwrap(), Symmetry::Minus);
        assert!("sideways".parse::<Symmetry>().is_err());
    }
}
