//! Fredholm determinants, traces of iterates and the search for zeros on
//! the critical line.
//!
//! Traces of `L_s^n` are available two ways: from the Galerkin matrix and
//! from the fixed-point formula over regular words of length `n`,
//! `sum_w N(w)^{-s} / (1 - N(w)^{-1})` with `N(w)` the squared multiplier.
//! In the word sum each parabolic slot carries an unbounded exponent. The
//! trace of a word is affine in each exponent, so the tail beyond the cap
//! `N` in one slot is resummed with Hurwitz zeta values; regions where two
//! or more exponents exceed the cap are bounded by a product majorant.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::hurwitz_zeta;
use crate::coding::{enumerate_regular_words, BranchSymbol, SymbolKind, Word};
use crate::error::{Error, Result};
use crate::moebius::check_q;
use crate::operator::{assemble, OperatorConfig, OperatorMatrix, Symmetry, TailMode};
use crate::precision::Mat2;

/// `det(1 - A)` by LU factorisation.
pub fn fredholm_det(op: &OperatorMatrix) -> Complex64 {
    let n = op.dim();
    (DMatrix::<Complex64>::identity(n, n) - &op.matrix).determinant()
}

/// Assembles the operator at `s` and returns its Fredholm determinant.
pub fn det_at(q: u32, s: Complex64, symmetry: Symmetry, config: &OperatorConfig) -> Result<Complex64> {
    let op = assemble(q, s, symmetry, config)?;
    let d = fredholm_det(&op);
    if !(d.re.is_finite() && d.im.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite determinant at s = {s}")));
    }
    Ok(d)
}

/// `Tr A^n`.
pub fn matrix_trace_power(a: &DMatrix<Complex64>, n: usize) -> Complex64 {
    if n == 0 {
        return Complex64::new(a.nrows() as f64, 0.0);
    }
    let mut p = a.clone();
    for _ in 1..n {
        p = &p * a;
    }
    p.trace()
}

/// `Tr L_s^n` from the Galerkin matrix of the full operator (Hurwitz mode).
pub fn trace_by_matrix(q: u32, n: usize, s: Complex64, order: usize) -> Result<Complex64> {
    let op = assemble(q, s, Symmetry::Full, &OperatorConfig::new(order))?;
    Ok(matrix_trace_power(&op.matrix, n))
}

/// Both evaluations of `Tr L_s^n` and the bound their difference must respect.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceComparison {
    pub by_matrix: Complex64,
    pub by_words: Complex64,
    pub word_bound: f64,
    /// Twice the change of the matrix trace under `M -> M + 8`, plus a roundoff floor.
    pub matrix_estimate: f64,
}

impl TraceComparison {
    pub fn difference(&self) -> f64 {
        (self.by_matrix - self.by_words).norm()
    }

    pub fn combined_bound(&self) -> f64 {
        self.word_bound + self.matrix_estimate
    }

    pub fn consistent(&self) -> bool {
        self.difference() <= self.combined_bound()
    }
}

pub fn compare_traces(q: u32, n: usize, s: Complex64, order: usize, policy: &CutoffPolicy) -> Result<TraceComparison> {
    let by_matrix = trace_by_matrix(q, n, s, order)?;
    let finer = trace_by_matrix(q, n, s, order + 8)?;
    let words = trace_by_words(q, n, s, policy)?;
    Ok(TraceComparison {
        by_matrix,
        by_words: words.value,
        word_bound: words.error_bound,
        matrix_estimate: 2.0 * (by_matrix - finer).norm() + 1e-13 * by_matrix.norm().max(1.0),
    })
}

/// `exp(-sum_{n<=n_max} Tr(A^n)/n)`, valid when the spectral radius is below one.
pub fn det_via_traces(a: &DMatrix<Complex64>, n_max: usize) -> Complex64 {
    let mut p = a.clone();
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 1..=n_max {
        if n > 1 {
            p = &p * a;
        }
        acc += p.trace() / n as f64;
    }
    (-acc).exp()
}

/// Treatment of parabolic exponents above the cap in word sums.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    /// Largest exponent summed term by term.
    pub cap: u32,
    /// Resum single-slot tails with Hurwitz zeta values. Otherwise all
    /// tails are only bounded.
    pub hurwitz_correction: bool,
    /// Number of terms of the expansion of the summand in inverse powers of the trace.
    pub series_terms: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy { cap: 400, hurwitz_correction: true, series_terms: 6 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WordTrace {
    pub value: Complex64,
    /// Rigorous bound on the multi-slot tails plus an estimate of the series truncation.
    pub error_bound: f64,
    pub words_counted: usize,
}

/// `x^s / (1 - x)` with `x = rho^2`, `rho = 1/multiplier`, as a function of the trace.
pub fn fixed_point_term(trace: f64, s: Complex64) -> Complex64 {
    let x = rho_from_trace(trace).powi(2);
    (s * x.ln()).exp() / (1.0 - x)
}

fn rho_from_trace(t: f64) -> f64 {
    2.0 / (t + (t * t - 4.0).sqrt())
}

/// Coefficients `g_j` of `x^s/(1-x) = sum_j g_j T^{-2s-2j}`, namely the
/// generalised binomials `binom(2s - 1 + 2j, j)`.
pub fn trace_series_coefficients(s: Complex64, terms: usize) -> Vec<Complex64> {
    (0..terms)
        .map(|j| {
            let mut g = Complex64::new(1.0, 0.0);
            for i in 1..=j {
                g *= (2.0 * s + (2 * j - i) as f64) / i as f64;
            }
            g
        })
        .collect()
}

/// Kind pattern of a word: which slots are parabolic and of which side.
fn kind_patterns(q: u32, n: usize) -> Result<Vec<Word>> {
    // a pattern is a regular word with all parabolic exponents equal to 1
    enumerate_regular_words(q, n, 1)
}

/// Multi-affine expansion `tr(m) = sum_U coef[U] prod_{i in U} m_i` over the parabolic slots.
struct AffineTrace {
    slots: Vec<usize>,
    coef: Vec<f64>,
}

impl AffineTrace {
    fn new(q: u32, pattern: &Word) -> Self {
        let slots: Vec<usize> =
            pattern.0.iter().enumerate().filter(|(_, s)| s.is_parabolic()).map(|(i, _)| i).collect();
        let p = slots.len();
        let eval = |mask: usize| -> f64 {
            let mut prod = Mat2([1.0, 0.0, 0.0, 1.0]);
            for (i, sym) in pattern.0.iter().enumerate() {
                let mut s = *sym;
                if let Some(pos) = slots.iter().position(|&j| j == i) {
                    s.m = ((mask >> pos) & 1) as u32;
                }
                prod = slow_inverse_any(q, &s).mul(&prod);
            }
            prod.trace()
        };
        let vals: Vec<f64> = (0..1usize << p).map(eval).collect();
        // Moebius inversion over subsets
        let mut coef = vals.clone();
        for bit in 0..p {
            for mask in 0..1usize << p {
                if mask & (1 << bit) != 0 {
                    coef[mask] -= coef[mask ^ (1 << bit)];
                }
            }
        }
        AffineTrace { slots, coef }
    }

    fn eval(&self, m: &[f64]) -> f64 {
        let mut total = 0.0;
        for (mask, c) in self.coef.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let mut t = *c;
            for (pos, mi) in m.iter().enumerate() {
                if mask & (1 << pos) != 0 {
                    t *= mi;
                }
            }
            total += t;
        }
        total
    }

    fn top(&self) -> f64 {
        *self.coef.last().expect("at least one coefficient")
    }
}

/// `g_k^{-m}` including the formal exponent `m = 0`.
fn slow_inverse_any(q: u32, s: &BranchSymbol) -> Mat2<f64> {
    if s.m == 0 {
        Mat2([1.0, 0.0, 0.0, 1.0])
    } else {
        s.slow_inverse(q)
    }
}

/// `Tr L_s^n` from the fixed-point formula over regular words of length `n`.
pub fn trace_by_words(q: u32, n: usize, s: Complex64, policy: &CutoffPolicy) -> Result<WordTrace> {
    check_q(q)?;
    if s.re <= 0.5 {
        return Err(Error::Mode(format!("word sums converge only for Re s > 1/2, got s = {s}")));
    }
    let cap = policy.cap as usize;
    let sigma = s.re;
    let g = trace_series_coefficients(s, policy.series_terms + 1);
    let mut value = Complex64::new(0.0, 0.0);
    let mut bound = 0.0;
    let mut counted = 0usize;
    let zeta_tail = |a: f64| -> f64 {
        // sum_{m > cap} m^{-a}
        (cap as f64).powf(1.0 - a) / (a - 1.0)
    };
    let z_head: f64 = (1..=cap).map(|m| (m as f64).powf(-2.0 * sigma)).sum();
    for pattern in kind_patterns(q, n)? {
        let aff = AffineTrace::new(q, &pattern);
        let p = aff.slots.len();
        if p == 0 {
            value += fixed_point_term(aff.eval(&[]), s);
            counted += 1;
            continue;
        }
        // direct sum over [1, cap]^p
        let mut m = vec![1.0f64; p];
        let mut idx = vec![1usize; p];
        loop {
            value += fixed_point_term(aff.eval(&m), s);
            counted += 1;
            let mut pos = 0;
            while pos < p {
                if idx[pos] < cap {
                    idx[pos] += 1;
                    m[pos] = idx[pos] as f64;
                    break;
                }
                idx[pos] = 1;
                m[pos] = 1.0;
                pos += 1;
            }
            if pos == p {
                break;
            }
        }
        let c_top = aff.top();
        if !(c_top > 0.0) {
            return Err(Error::Consistency("top trace coefficient must be positive".into()));
        }
        let min_corner = if policy.hurwitz_correction { 2 } else { 1 };
        if policy.hurwitz_correction {
            let (v, e) = single_slot_tails(&aff, s, &g, cap, policy.series_terms)?;
            value += v;
            bound += e;
        }
        if p >= min_corner {
            let a = zeta_tail(2.0 * sigma);
            let z = z_head;
            let pf = p as i32;
            let mass = if min_corner == 2 {
                (a + z).powi(pf) - z.powi(pf) - pf as f64 * a * z.powi(pf - 1)
            } else {
                (a + z).powi(pf) - z.powi(pf)
            };
            let t_min = (c_top * ((cap + 1) as f64).powi(min_corner as i32)).max(aff.eval(&vec![1.0; p]));
            let rho = rho_from_trace(t_min);
            let c_f = (1.0 + rho * rho).powf(2.0 * sigma) / (1.0 - rho * rho);
            bound += c_f * c_top.powf(-2.0 * sigma) * mass.max(0.0);
        }
    }
    Ok(WordTrace { value, error_bound: bound, words_counted: counted })
}

/// Resums `sum_{m_i > cap}` with the other exponents in `[1, cap]`, for every slot `i`.
fn single_slot_tails(
    aff: &AffineTrace,
    s: Complex64,
    g: &[Complex64],
    cap: usize,
    terms: usize,
) -> Result<(Complex64, f64)> {
    let p = aff.slots.len();
    let sigma = s.re;
    let mut value = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for slot in 0..p {
        let others = p - 1;
        let mut idx = vec![1usize; others];
        loop {
            let mut m = Vec::with_capacity(p);
            let mut it = idx.iter();
            for pos in 0..p {
                m.push(if pos == slot { 0.0 } else { *it.next().expect("index") as f64 });
            }
            let beta = aff.eval(&m);
            m[slot] = 1.0;
            let alpha = aff.eval(&m) - beta;
            let w = Complex64::new((cap + 1) as f64 + beta / alpha, 0.0);
            let ln_alpha = alpha.ln();
            for (j, gj) in g.iter().enumerate().take(terms) {
                let a = 2.0 * s + 2.0 * j as f64;
                value += gj * (-a * ln_alpha).exp() * hurwitz_zeta(a, w)?;
            }
            // first omitted term as the truncation estimate
            let a_next = 2.0 * sigma + 2.0 * terms as f64;
            let z_next = hurwitz_zeta(Complex64::new(a_next, 0.0), w)?.re;
            err += 2.0 * g[terms].norm() * (-a_next * ln_alpha).exp() * z_next;

            let mut pos = 0;
            while pos < others {
                if idx[pos] < cap {
                    idx[pos] += 1;
                    break;
                }
                idx[pos] = 1;
                pos += 1;
            }
            if pos == others {
                break;
            }
        }
    }
    Ok((value, err))
}

/// Settings for scanning `|det(1 - L_{1/2 + it})|` along the critical line.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScanConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Width of the final bracket in golden-section refinement.
    pub refine_tol: f64,
    /// Accept a refined minimum when `|det| <= threshold_factor * median |det|`.
    pub threshold_factor: f64,
    /// Points on the square contour used for the winding number.
    pub contour_points: usize,
    /// Increase of the Taylor order for the stability check.
    pub stability_increment: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            t_min: 9.0,
            t_max: 10.0,
            t_step: 0.02,
            refine_tol: 1e-10,
            threshold_factor: 1e-3,
            contour_points: 48,
            stability_increment: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    pub det: Complex64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub t: f64,
    /// `|det|` at the refined point.
    pub residual: f64,
    /// Shift of the refined point when the Taylor order is raised.
    pub stability: f64,
    pub symmetry: Symmetry,
    pub q: u32,
    #[serde(rename = "M")]
    pub order: usize,
    pub winding: i32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralScan {
    pub q: u32,
    pub symmetry: Symmetry,
    #[serde(rename = "M")]
    pub order: usize,
    pub grid: Vec<GridPoint>,
    pub median_abs_det: f64,
    pub zeros: Vec<ZeroRecord>,
    /// Refined local minima that failed validation, as `(t, |det|, winding)`.
    pub rejected: Vec<(f64, f64, i32)>,
}

/// A zero of a function on the critical line located by [`scan_function`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocatedZero {
    pub t: f64,
    pub residual: f64,
    pub winding: i32,
    /// Grid bracket `[lo, hi]` used for refinement.
    pub bracket: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct FunctionScan {
    pub grid: Vec<GridPoint>,
    pub median_abs_det: f64,
    pub zeros: Vec<LocatedZero>,
    pub rejected: Vec<(f64, f64, i32)>,
}

/// Scans `f(1/2 + it)` on a grid, refines every interior local minimum of
/// `|f|` by golden-section search and keeps those whose refined value is
/// below the threshold and around which `f` winds exactly once.
pub fn scan_function<F>(f: F, cfg: &ScanConfig) -> Result<FunctionScan>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    if !(cfg.t_step > 0.0) || !(cfg.t_max > cfg.t_min) {
        return Err(Error::Domain("scan interval must be non-empty with a positive step".into()));
    }
    let count = ((cfg.t_max - cfg.t_min) / cfg.t_step).round() as usize + 1;
    let ts: Vec<f64> = (0..count).map(|i| cfg.t_min + i as f64 * cfg.t_step).collect();
    let on_line = |t: f64| Complex64::new(0.5, t);
    let dets: Vec<Complex64> = ts.par_iter().map(|&t| f(on_line(t))).collect::<Result<_>>()?;
    let grid: Vec<GridPoint> = ts.iter().zip(&dets).map(|(&t, &det)| GridPoint { t, det }).collect();
    let mut mags: Vec<f64> = dets.iter().map(|d| d.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let median = if mags.len() % 2 == 1 {
        mags[mags.len() / 2]
    } else {
        0.5 * (mags[mags.len() / 2 - 1] + mags[mags.len() / 2])
    };
    let threshold = cfg.threshold_factor * median;
    let candidates: Vec<usize> = (1..count.saturating_sub(1))
        .filter(|&i| dets[i].norm() <= dets[i - 1].norm() && dets[i].norm() <= dets[i + 1].norm())
        .collect();
    let refined: Vec<Result<(LocatedZero, bool)>> = candidates
        .par_iter()
        .map(|&i| {
            let (lo, hi) = (ts[i - 1], ts[i + 1]);
            let (t, val) = golden_min(|t| f(on_line(t)).map(|d| d.norm()), lo, hi, cfg.refine_tol)?;
            let half = (0.5 * cfg.t_step).min(0.5 * t.abs()).max(1e-6);
            let winding = winding_number(&f, on_line(t), half, cfg.contour_points)?;
            let ok = val <= threshold && winding == 1;
            Ok((LocatedZero { t, residual: val, winding, bracket: (lo, hi) }, ok))
        })
        .collect();
    let mut zeros = Vec::new();
    let mut rejected = Vec::new();
    for r in refined {
        let (z, ok) = r?;
        if ok {
            zeros.push(z);
        } else {
            rejected.push((z.t, z.residual, z.winding));
        }
    }
    Ok(FunctionScan { grid, median_abs_det: median, zeros, rejected })
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_min<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Winding number of `f` around the square of half-width `half` centred at `center`.
pub fn winding_number<F>(f: &F, center: Complex64, half: f64, points: usize) -> Result<i32>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let per_side = (points / 4).max(1);
    let corners = [
        Complex64::new(half, -half),
        Complex64::new(half, half),
        Complex64::new(-half, half),
        Complex64::new(-half, -half),
    ];
    let mut path = Vec::with_capacity(4 * per_side);
    for c in 0..4 {
        let (a, b) = (corners[c], corners[(c + 1) % 4]);
        for i in 0..per_side {
            path.push(center + a + (b - a) * (i as f64 / per_side as f64));
        }
    }
    let vals: Vec<Complex64> = path.iter().map(|z| f(*z)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 0..vals.len() {
        let (a, b) = (vals[i], vals[(i + 1) % vals.len()]);
        if a.norm() == 0.0 || b.norm() == 0.0 {
            return Err(Error::Evaluation("function vanishes on the winding contour".into()));
        }
        total += (b / a).arg();
    }
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i32)
}

/// Scans the determinant of the requested operator and validates the zeros.
pub fn scan_zeros(q: u32, symmetry: Symmetry, cfg: &ScanConfig, op: &OperatorConfig) -> Result<SpectralScan> {
    check_q(q)?;
    let det = |s: Complex64| det_at(q, s, symmetry, op);
    let found = scan_function(det, cfg)?;
    let finer = OperatorConfig { order: op.order + cfg.stability_increment, ..*op };
    let zeros = found
        .zeros
        .par_iter()
        .map(|z| {
            let f2 = |t: f64| det_at(q, Complex64::new(0.5, t), symmetry, &finer).map(|d| d.norm());
            let (t2, _) = golden_min(f2, z.bracket.0, z.bracket.1, cfg.refine_tol)?;
            Ok(ZeroRecord {
                t: z.t,
                residual: z.residual,
                stability: (t2 - z.t).abs(),
                symmetry,
                q,
                order: op.order,
                winding: z.winding,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralScan {
        q,
        symmetry,
        order: op.order,
        grid: found.grid,
        median_abs_det: found.median_abs_det,
        zeros,
        rejected: found.rejected,
    })
}

/// Newton iteration for a zero of `det(1 - L_s)` in the complex `s` plane.
pub fn refine_zero_complex(
    q: u32,
    symmetry: Symmetry,
    start: Complex64,
    config: &OperatorConfig,
    tol: f64,
) -> Result<Complex64> {
    let f = |s: Complex64| det_at(q, s, symmetry, config);
    let mut s = start;
    let h = 1e-6;
    for _ in 0..50 {
        let d = f(s)?;
        let deriv = (f(s + h)? - f(s - h)?) / (2.0 * h);
        if deriv.norm() == 0.0 {
            return Err(Error::Evaluation("vanishing derivative in Newton refinement".into()));
        }
        let step = d / deriv;
        s -= step;
        if step.norm() < tol {
            return Ok(s);
        }
    }
    Err(Error::Consistency(format!("Newton refinement did not converge from {start}")))
}

/// Mode-dependent defaults: the Hurwitz mode for all `s`, extrapolated truncation otherwise.
pub fn default_truncation() -> TailMode {
    TailMode::Truncate { n_tail: 200, extrapolation: 5 }
}

/// Appends the kind of each slot, used in reports.
pub fn describe_word(w: &Word) -> String {
    w.0.iter()
        .map(|s| match s.kind {
            SymbolKind::ParabolicLeft => format!("P1^{}", s.m),
            SymbolKind::Hyperbolic => format!("H{}", s.k),
            SymbolKind::ParabolicRight => format!("Pq^{}", s.m),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
