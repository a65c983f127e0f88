//! Period functions of the slow system and eigenfunctions of the fast operator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{eval_scaled_series, Disk};
use crate::coding::slow_partition;
use crate::error::{Error, Result};
use crate::moebius::{check_q, hecke_generators, involution_q, lambda, tconj, GroupElement};
use crate::operator::{assemble, DiskLabel, OperatorConfig, OperatorKernel, Symmetry};

/// A function on `R \ {0}`.
pub trait PeriodFunction {
    fn eval(&self, t: f64) -> Result<Complex64>;
}

impl<F: Fn(f64) -> Result<Complex64>> PeriodFunction for F {
    fn eval(&self, t: f64) -> Result<Complex64> {
        self(t)
    }
}

/// `1 - t^{-2s}` on `R^+`, odd under `tau_s(Q)` and a solution of the functional equation for every `q`.
#[derive(Clone, Copy, Debug)]
pub struct OneMinusPower {
    pub s: Complex64,
}

impl PeriodFunction for OneMinusPower {
    fn eval(&self, t: f64) -> Result<Complex64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("closed form defined on R^+, got t = {t}")));
        }
        Ok(1.0 - (-2.0 * self.s * t.ln()).exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    None,
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> Result<f64> {
        match self {
            Parity::Even => Ok(1.0),
            Parity::Odd => Ok(-1.0),
            Parity::None => Err(Error::Domain("a parity is required".into())),
        }
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Parity::None),
            "even" | "plus" => Ok(Parity::Even),
            "odd" | "minus" => Ok(Parity::Odd),
            other => Err(Error::Domain(format!("unknown parity {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Funceq,
    Mod1,
    Mod2,
    Mod3,
    Mod4,
}

impl std::str::FromStr for Equation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "funceq" => Ok(Equation::Funceq),
            "mod1" => Ok(Equation::Mod1),
            "mod2" => Ok(Equation::Mod2),
            "mod3" => Ok(Equation::Mod3),
            "mod4" => Ok(Equation::Mod4),
            other => Err(Error::Domain(format!("unknown equation {other}"))),
        }
    }
}

/// The parity-encoding equation for `q` and `parity`.
pub fn parity_equation(q: u32, parity: Parity) -> Result<Equation> {
    Ok(match (q.is_multiple_of(2), parity) {
        (true, Parity::Even) => Equation::Mod1,
        (true, Parity::Odd) => Equation::Mod2,
        (false, Parity::Even) => Equation::Mod3,
        (false, Parity::Odd) => Equation::Mod4,
        (_, Parity::None) => Equation::Funceq,
    })
}

/// `tau_s(g) psi (t) = ((c t + d)^{-2})^s psi(g^{-1}.t)` with `g^{-1} = [[a, b], [c, d]]`, for real `t`.
pub fn slow_action<F: PeriodFunction + ?Sized>(g: &GroupElement, s: Complex64, psi: &F, t: f64) -> Result<Complex64> {
    let gi = g.inverse();
    let den = gi.c * t + gi.d;
    let num = gi.a * t + gi.b;
    if den == 0.0 || num == 0.0 {
        return Err(Error::Domain(format!("g^-1 maps t = {t} to the boundary of R \\ {{0}}")));
    }
    let j = (-2.0 * s * den.abs().ln()).exp();
    Ok(j * psi.eval(num / den)?)
}

/// Weighted list of elements forming the right-hand side of an equation.
fn equation_terms(q: u32, which: Equation) -> Result<Vec<(f64, GroupElement)>> {
    check_q(q)?;
    let gens = hecke_generators(q)?;
    let qm = involution_q();
    let m = q.div_ceil(2);
    let even = q.is_multiple_of(2);
    let mut terms = Vec::new();
    match which {
        Equation::Funceq => {
            for k in 1..q {
                terms.push((1.0, gens.g(k).clone()));
            }
        }
        Equation::Mod1 | Equation::Mod2 => {
            if !even {
                return Err(Error::Domain(format!("{which:?} applies to even q only")));
            }
            let eps = if which == Equation::Mod1 { 1.0 } else { -1.0 };
            terms.push((0.5, gens.g(m).clone()));
            terms.push((0.5 * eps, &qm * gens.g(m)));
            for k in m + 1..q {
                terms.push((1.0, gens.g(k).clone()));
                terms.push((eps, &qm * gens.g(k)));
            }
        }
        Equation::Mod3 | Equation::Mod4 => {
            if even {
                return Err(Error::Domain(format!("{which:?} applies to odd q only")));
            }
            let eps = if which == Equation::Mod3 { 1.0 } else { -1.0 };
            for k in m..q {
                terms.push((1.0, gens.g(k).clone()));
                terms.push((eps, &qm * gens.g(k)));
            }
        }
    }
    Ok(terms)
}

/// `psi(t) - RHS(t)` of the chosen equation.
pub fn equation_defect<F: PeriodFunction + ?Sized>(q: u32, s: Complex64, psi: &F, t: f64, which: Equation) -> Result<Complex64> {
    let mut acc = psi.eval(t)?;
    for (w, g) in equation_terms(q, which)? {
        acc -= w * slow_action(&g, s, psi, t)?;
    }
    Ok(acc)
}

/// Maximum of `|psi(t) - RHS(t)|` over the samples.
pub fn slow_residual<F: PeriodFunction + ?Sized>(q: u32, s: Complex64, psi: &F, points: &[f64], which: Equation) -> Result<f64> {
    let terms = equation_terms(q, which)?;
    let mut worst = 0.0f64;
    for &t in points {
        let mut acc = psi.eval(t)?;
        for (w, g) in &terms {
            acc -= *w * slow_action(g, s, psi, t)?;
        }
        worst = worst.max(acc.norm());
    }
    Ok(worst)
}

/// `tau_s(Q) psi (t) = t^{-2s} psi(1/t)` on `R^+`.
pub fn q_action<F: PeriodFunction + ?Sized>(s: Complex64, psi: &F, t: f64) -> Result<Complex64> {
    slow_action(&involution_q(), s, psi, t)
}

/// `(psi + eps tau_s(Q) psi) / 2`.
pub fn parity_part<'a, F: PeriodFunction + ?Sized>(s: Complex64, psi: &'a F, parity: Parity) -> impl Fn(f64) -> Result<Complex64> + 'a {
    move |t| {
        let eps = parity.sign()?;
        Ok(0.5 * (psi.eval(t)? + eps * q_action(s, psi, t)?))
    }
}

/// `psi` on `R^+` and `-tau_s(S) psi` on `R^-`.
pub fn odd_extension<'a, F: PeriodFunction + ?Sized>(q: u32, s: Complex64, psi: &'a F) -> Result<impl Fn(f64) -> Result<Complex64> + 'a> {
    let sm = hecke_generators(q)?.s;
    Ok(move |t: f64| {
        if t > 0.0 {
            psi.eval(t)
        } else if t < 0.0 {
            let v = slow_action(&sm, s, psi, t)?;
            Ok(-v)
        } else {
            Err(Error::Domain("t = 0 is outside R \\ {0}".into()))
        }
    })
}

/// Samples of a candidate period function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodSamples {
    pub q: u32,
    pub s: Complex64,
    pub points: Vec<f64>,
    pub values: Vec<Complex64>,
    pub parity: Parity,
}

impl PeriodSamples {
    /// Samples `psi` at `points`, which must avoid the endpoints of the slow
    /// partition. The parity is recorded only if `tau_s(Q)` symmetry holds to `parity_tol`.
    pub fn sample<F: PeriodFunction + ?Sized>(q: u32, s: Complex64, psi: &F, points: &[f64], parity_tol: f64) -> Result<Self> {
        let part = slow_partition(q)?;
        for &t in points {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("sample point {t} is not in R^+")));
            }
            for iv in &part.intervals {
                for e in [iv.1, iv.2] {
                    if e.is_finite() && (t - e).abs() < 1e-9 {
                        return Err(Error::Domain(format!("sample point {t} is within 1e-9 of the endpoint {e}")));
                    }
                }
            }
        }
        let values: Vec<Complex64> = points.iter().map(|&t| psi.eval(t)).collect::<Result<_>>()?;
        let mut even = 0.0f64;
        let mut odd = 0.0f64;
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for (&t, v) in points.iter().zip(&values) {
            let qv = q_action(s, psi, t)?;
            even = even.max((v - qv).norm());
            odd = odd.max((v + qv).norm());
        }
        let parity = if even <= parity_tol * scale {
            Parity::Even
        } else if odd <= parity_tol * scale {
            Parity::Odd
        } else {
            Parity::None
        };
        Ok(PeriodSamples { q, s, points: points.to_vec(), values, parity })
    }
}

/// Least-squares fit of the leading asymptotic coefficients.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AsymptoticFit {
    /// `psi(t) ~ C_0 + C_1 t` as `t -> 0`.
    pub c: [Complex64; 2],
    /// `psi(t) ~ t^{-2s} (D_0 + D_1 / t)` as `t -> oo`.
    pub d: [Complex64; 2],
    /// `|C_0 + D_0|` and `|C_1 - D_1|`, which vanish for period functions.
    pub condition_defects: [f64; 2],
}

fn linear_fit(xs: &[f64], ys: &[Complex64]) -> [Complex64; 2] {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my: Complex64 = ys.iter().sum::<Complex64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: Complex64 = xs.iter().zip(ys).map(|(x, y)| (y - my) * (x - mx)).sum();
    let slope = sxy / sxx;
    [my - slope * mx, slope]
}

/// Fits `C_0, C_1` on `t in [1e-4, 1e-2]` and `D_0, D_1` on `t in [1e2, 1e4]`, log-spaced.
pub fn asymptotic_fit<F: PeriodFunction + ?Sized>(s: Complex64, psi: &F, points: usize) -> Result<AsymptoticFit> {
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        (0..points).map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64)).collect()
    };
    let small = grid(1e-4, 1e-2);
    let ys: Vec<Complex64> = small.iter().map(|&t| psi.eval(t)).collect::<Result<_>>()?;
    let c = linear_fit(&small, &ys);
    let large = grid(1e2, 1e4);
    let xs: Vec<f64> = large.iter().map(|t| 1.0 / t).collect();
    let ys: Vec<Complex64> =
        large.iter().map(|&t| Ok(psi.eval(t)? * (2.0 * s * t.ln()).exp())).collect::<Result<_>>()?;
    let d = linear_fit(&xs, &ys);
    Ok(AsymptoticFit { c, d, condition_defects: [(c[0] + d[0]).norm(), (c[1] - d[1]).norm()] })
}

/// A function given on `[1, 1 + lambda]`, extended by the functional equation
/// and the parity relation `psi(t) = eps t^{-2s} psi(1/t)`.
///
/// On `x in [1 + n lambda, 1 + (n+1) lambda]`,
/// `psi(x) = psi(x - lambda) - sum_{k=2}^{q-1} tau_s(g_k) psi(x - lambda)`,
/// where every `g_k^{-1}.(x - lambda)` lies in `(0, lambda)` and is folded
/// into `[1, 1 + lambda]` by the parity relation.
pub struct Extension<'a> {
    pub q: u32,
    pub s: Complex64,
    pub parity: Parity,
    pub steps: usize,
    lam: f64,
    base: &'a dyn PeriodFunction,
    g_inv: Vec<GroupElement>,
}

/// Extends `base` from `[1, 1 + lambda]` to `[1, 1 + (steps + 1) lambda]`.
pub fn extend_from_fundamental<'a>(
    q: u32,
    s: Complex64,
    parity: Parity,
    base: &'a dyn PeriodFunction,
    steps: usize,
) -> Result<Extension<'a>> {
    check_q(q)?;
    parity.sign()?;
    let gens = hecke_generators(q)?;
    let g_inv = (2..q).map(|k| gens.g(k).inverse()).collect();
    Ok(Extension { q, s, parity, steps, lam: lambda(q), base, g_inv })
}

impl Extension<'_> {
    pub fn upper(&self) -> f64 {
        1.0 + (self.steps + 1) as f64 * self.lam
    }

    fn in_base(&self, t: f64) -> bool {
        (1.0..=1.0 + self.lam).contains(&t)
    }

    /// `psi` at points of `(0, lambda)` or of the fundamental interval.
    fn eval_folded(&self, t: f64) -> Result<Complex64> {
        if self.in_base(t) {
            return self.base.eval(t);
        }
        if t > 0.0 && t < 1.0 && self.in_base(1.0 / t) {
            let eps = self.parity.sign()?;
            return Ok(eps * (-2.0 * self.s * t.ln()).exp() * self.base.eval(1.0 / t)?);
        }
        Err(Error::Consistency(format!("recursion requested psi({t}) outside the known region")))
    }

    pub fn eval(&self, x: f64) -> Result<Complex64> {
        if x > 0.0 && x < 1.0 {
            let eps = self.parity.sign()?;
            return Ok(eps * (-2.0 * self.s * x.ln()).exp() * self.eval(1.0 / x)?);
        }
        if !(x >= 1.0 && x <= self.upper() * (1.0 + 1e-15)) {
            return Err(Error::Domain(format!("x = {x} outside [1, {}]", self.upper())));
        }
        let mut chain = vec![x];
        while !self.in_base(*chain.last().expect("non-empty")) {
            let next = chain.last().expect("non-empty") - self.lam;
            chain.push(next);
        }
        let mut v = self.base.eval(*chain.last().expect("non-empty"))?;
        for i in (0..chain.len() - 1).rev() {
            let y = chain[i + 1];
            let mut sum = Complex64::new(0.0, 0.0);
            for gi in &self.g_inv {
                let den = gi.c * y + gi.d;
                let p = (gi.a * y + gi.b) / den;
                if !(p > 0.0 && p < self.lam) {
                    return Err(Error::Consistency(format!("g^-1.{y} = {p} left (0, lambda)")));
                }
                sum += (-2.0 * self.s * den.abs().ln()).exp() * self.eval_folded(p)?;
            }
            v -= sum;
        }
        Ok(v)
    }

    /// Values on `points`, in order.
    pub fn sample(&self, points: &[f64]) -> Result<Vec<Complex64>> {
        points.iter().map(|&x| self.eval(x)).collect()
    }
}

/// Barycentric interpolant through `(nodes, values)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Interpolant {
    pub nodes: Vec<f64>,
    pub values: Vec<Complex64>,
    weights: Vec<f64>,
}

impl Interpolant {
    pub fn new(nodes: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.is_empty() {
            return Err(Error::Domain("interpolation needs matching, non-empty nodes and values".into()));
        }
        let mut weights = vec![1.0; nodes.len()];
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                if i != j {
                    let d = nodes[i] - nodes[j];
                    if d == 0.0 {
                        return Err(Error::Domain("interpolation nodes must be distinct".into()));
                    }
                    weights[i] /= d;
                }
            }
        }
        // rescale to avoid overflow for many nodes
        let scale = weights.iter().map(|w: &f64| w.abs()).fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= scale);
        Ok(Interpolant { nodes, values, weights })
    }

    /// Chebyshev points of the second kind on `[a, b]`.
    pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let x = (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * x
            })
            .rev()
            .collect()
    }
}

impl PeriodFunction for Interpolant {
    fn eval(&self, t: f64) -> Result<Complex64> {
        let (lo, hi) = self.nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        if t < lo - 1e-12 || t > hi + 1e-12 {
            return Err(Error::Domain(format!("t = {t} outside the sampled range [{lo}, {hi}]")));
        }
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for ((x, v), w) in self.nodes.iter().zip(&self.values).zip(&self.weights) {
            let d = t - x;
            if d == 0.0 {
                return Ok(*v);
            }
            num += v * (w / d);
            den += w / d;
        }
        Ok(num / den)
    }
}

/// Null vector of a square matrix from its smallest singular value.
#[derive(Clone, Debug)]
pub struct NullVector {
    pub vector: nalgebra::DVector<Complex64>,
    pub sigma_min: f64,
    /// Second smallest over smallest singular value; small values signal multiplicity.
    pub isolation: f64,
}

pub fn null_vector(m: &DMatrix<Complex64>) -> Result<NullVector> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Evaluation("SVD did not return V".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|a, b| sv[*a].total_cmp(&sv[*b]));
    let i = order[0];
    let vector = v_t.row(i).adjoint();
    let sigma_min = sv[i];
    let isolation = if order.len() > 1 { sv[order[1]] / sigma_min.max(f64::MIN_POSITIVE) } else { f64::INFINITY };
    Ok(NullVector { vector, sigma_min, isolation })
}

/// Eigenfunction of the fast operator at a determinant zero, as scaled Taylor coefficients per disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FastEigenfunction {
    pub q: u32,
    pub s: Complex64,
    pub symmetry: Symmetry,
    #[serde(rename = "M")]
    pub order: usize,
    pub blocks: Vec<(DiskLabel, Disk)>,
    pub coeffs: Vec<Vec<Complex64>>,
    /// `||(I - A) v|| / ||v||`.
    pub residual: f64,
    pub isolation: f64,
    /// Fitted geometric decay rate of the scaled coefficients.
    pub decay_rho: f64,
    pub multiplicity_warning: bool,
}

/// Extracts the 1-eigenfunction of the Galerkin matrix at `s`. The first
/// coefficient of the `E_{q-1}` component that is not negligible is set to one.
pub fn extract_eigenfunction(q: u32, s: Complex64, symmetry: Symmetry, config: &OperatorConfig) -> Result<FastEigenfunction> {
    let op = assemble(q, s, symmetry, config)?;
    let n = op.dim();
    let ima = DMatrix::<Complex64>::identity(n, n) - &op.matrix;
    let nv = null_vector(&ima)?;
    let m1 = op.order + 1;
    let last = op
        .blocks
        .iter()
        .position(|(l, _)| *l == DiskLabel::Last)
        .ok_or_else(|| Error::Consistency("no E_{q-1} block".into()))?;
    let block = &nv.vector.as_slice()[last * m1..(last + 1) * m1];
    let big = block.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let pivot = block
        .iter()
        .find(|c| c.norm() > 1e-6 * big)
        .copied()
        .ok_or_else(|| Error::Evaluation("vanishing E_{q-1} component".into()))?;
    let v = nv.vector.map(|c| c / pivot);
    let residual = (&ima * &v).norm() / v.norm();
    let coeffs: Vec<Vec<Complex64>> = (0..op.blocks.len()).map(|b| v.as_slice()[b * m1..(b + 1) * m1].to_vec()).collect();
    let decay_rho = fit_decay(&coeffs);
    Ok(FastEigenfunction {
        q,
        s,
        symmetry,
        order: op.order,
        blocks: op.blocks.clone(),
        coeffs,
        residual,
        isolation: nv.isolation,
        decay_rho,
        multiplicity_warning: nv.isolation < 10.0,
    })
}

/// `exp` of the least-squares slope of `log max_b |c_k^{(b)}|`, from the peak
/// of the envelope on and above roundoff. For large `|Im s|` the coefficients
/// first grow, so the geometric rate is read off past the peak.
pub fn fit_decay(coeffs: &[Vec<Complex64>]) -> f64 {
    let m1 = coeffs.iter().map(|c| c.len()).min().unwrap_or(0);
    let env: Vec<f64> = (0..m1).map(|k| coeffs.iter().map(|c| c[k].norm()).fold(0.0, f64::max)).collect();
    let (peak, top) = env.iter().copied().enumerate().fold((0, 0.0), |acc, (k, e)| if e > acc.1 { (k, e) } else { acc });
    let start = if m1 >= peak + 3 { peak } else { 1 };
    let pts: Vec<(f64, f64)> =
        env.iter().enumerate().skip(start).filter(|(_, e)| **e > 1e-13 * top).map(|(k, e)| (k as f64, e.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxy / sxx).exp()
}

impl FastEigenfunction {
    pub fn component(&self, label: DiskLabel) -> Option<usize> {
        self.blocks.iter().position(|(l, _)| *l == label)
    }

    pub fn eval_block(&self, b: usize, z: Complex64) -> Complex64 {
        eval_scaled_series(&self.coeffs[b], &self.blocks[b].1, z)
    }

    /// The block whose disk contains `z` deepest, if any.
    pub fn home_block(&self, z: Complex64) -> Option<usize> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, (_, d))| (b, (z - d.center).norm() / d.radius))
            .filter(|(_, rel)| *rel < 1.0)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(b, _)| b)
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let b = self.home_block(z).ok_or_else(|| Error::Domain(format!("{z} lies in no active disk")))?;
        Ok(self.eval_block(b, z))
    }

    /// `(L f)` on block `dst` at `z`, evaluated pointwise through the branch sums.
    pub fn apply_operator(&self, kernel: &OperatorKernel, dst: usize, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for src in 0..self.blocks.len() {
            if let Some((v, _)) = kernel.block_vector(dst, src, z)? {
                acc += v.iter().zip(&self.coeffs[src]).map(|(a, b)| a * b).sum::<Complex64>();
            }
        }
        Ok(acc)
    }

    fn kernel(&self, config: &OperatorConfig) -> Result<OperatorKernel> {
        OperatorKernel::new(self.q, self.s, self.symmetry, &OperatorConfig { order: self.order, ..*config })
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Maximum of `|f - L f|` relative to the coefficient scale on circles of
    /// half the radius in every disk.
    pub fn pointwise_residual(&self, config: &OperatorConfig, points_per_disk: usize) -> Result<f64> {
        let kernel = self.kernel(config)?;
        let mut worst = 0.0f64;
        for (b, (_, d)) in self.blocks.iter().enumerate() {
            for i in 0..points_per_disk {
                let ang = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / points_per_disk as f64;
                let z = d.center + Complex64::from_polar(0.5 * d.radius, ang);
                let lf = self.apply_operator(&kernel, b, z)?;
                worst = worst.max((self.eval_block(b, z) - lf).norm());
            }
        }
        Ok(worst / self.scale())
    }

    /// `f_r - sum_{n>=0} tau_s(h_{q-1}^n) f_{q-1}` on `E_{q-1} \cap E_r`, relative to the coefficient scale.
    pub fn determination_residual(&self, config: &OperatorConfig, samples: usize) -> Result<f64> {
        if self.symmetry == Symmetry::Full {
            return Err(Error::Mode("the determination property concerns the symmetric operators".into()));
        }
        let (Some(br), Some(bq)) = (self.component(DiskLabel::Middle), self.component(DiskLabel::Last)) else {
            return Err(Error::Domain("needs both E_r and E_{q-1}".into()));
        };
        let kernel = self.kernel(config)?;
        let (er, eq) = (self.blocks[br].1, self.blocks[bq].1);
        let lo = (eq.center.re - eq.radius).max(er.center.re - er.radius);
        let hi = (eq.center.re + eq.radius).min(er.center.re + er.radius);
        if !(hi > lo) {
            return Err(Error::Construction("E_r and E_{q-1} do not overlap".into()));
        }
        let mut worst = 0.0f64;
        for i in 0..samples {
            let x = lo + (hi - lo) * (0.2 + 0.6 * i as f64 / (samples.max(2) - 1) as f64);
            for y in [0.0, 0.05 * (hi - lo)] {
                let z = Complex64::new(x, y);
                if !(eq.contains(z, 1e-3) && er.contains(z, 1e-3)) {
                    continue;
                }
                let (v, _) = kernel.parabolic_vector(z)?;
                let tail: Complex64 = v.iter().zip(&self.coeffs[bq]).map(|(a, b)| a * b).sum();
                let d = self.eval_block(br, z) - self.eval_block(bq, z) - tail;
                worst = worst.max(d.norm());
            }
        }
        Ok(worst / self.scale())
    }

    /// Coefficients of `(z - c)^k`, as exported.
    pub fn unscaled_coefficients(&self) -> Vec<Vec<Complex64>> {
        self.coeffs
            .iter()
            .zip(&self.blocks)
            .map(|(c, (_, d))| c.iter().enumerate().map(|(k, x)| x / d.radius.powi(k as i32)).collect())
            .collect()
    }

    pub fn export(&self) -> EigenfunctionExport {
        EigenfunctionExport {
            q: self.q,
            s: [self.s.re, self.s.im],
            symmetry: self.symmetry,
            order: self.order,
            residual: self.residual,
            decay_rho: self.decay_rho,
            disks: self
                .blocks
                .iter()
                .zip(self.unscaled_coefficients())
                .map(|((label, d), c)| ExportedDisk {
                    label: *label,
                    center: [d.center.re, d.center.im],
                    radius: d.radius,
                    coeffs: c.iter().map(|x| [x.re, x.im]).collect(),
                })
                .collect(),
        }
    }

    /// Embeds a symmetric eigenfunction into the full system via `f_1 = eps tau(J) f_{q-1}`.
    pub fn to_full(&self) -> Result<Vec<Complex64>> {
        if self.symmetry == Symmetry::Full {
            return Ok(self.coeffs.concat());
        }
        let eps = self.symmetry.sign();
        let bq = self.component(DiskLabel::Last).ok_or_else(|| Error::Consistency("no E_{q-1} block".into()))?;
        let f1: Vec<Complex64> =
            self.coeffs[bq].iter().enumerate().map(|(k, c)| if k % 2 == 0 { eps * c } else { -eps * c }).collect();
        let mut out = f1;
        if let Some(br) = self.component(DiskLabel::Middle) {
            out.extend_from_slice(&self.coeffs[br]);
        }
        out.extend_from_slice(&self.coeffs[bq]);
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportedDisk {
    pub label: DiskLabel,
    pub center: [f64; 2],
    pub radius: f64,
    pub coeffs: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenfunctionExport {
    pub q: u32,
    pub s: [f64; 2],
    pub symmetry: Symmetry,
    #[serde(rename = "M")]
    pub order: usize,
    pub residual: f64,
    pub decay_rho: f64,
    pub disks: Vec<ExportedDisk>,
}

/// `psi(t) = j_s(T, t) f(T.t)` with `T.t = (t - 1)/(t + 1)`.
pub fn transport_to_slow(fe: &FastEigenfunction, t: f64) -> Result<Complex64> {
    let tc = tconj();
    let w = tc.apply(Complex64::new(t, 0.0));
    let den = tc.denominator(Complex64::new(t, 0.0));
    let j = (-2.0 * fe.s * den.re.abs().ln()).exp();
    Ok(j * fe.eval(w)?)
}

/// Relative defect of the eigen-relation after transport: `psi(t)` against
/// `j_s(T, t) (L f)(T.t)` on the same block.
pub fn transported_residual(fe: &FastEigenfunction, config: &OperatorConfig, points: &[f64]) -> Result<f64> {
    let kernel = fe.kernel(config)?;
    let tc = tconj();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &t in points {
        let w = tc.apply(Complex64::new(t, 0.0));
        let b = fe.home_block(w).ok_or_else(|| Error::Domain(format!("T.{t} lies in no active disk")))?;
        let j = (-2.0 * fe.s * tc.denominator(Complex64::new(t, 0.0)).re.abs().ln()).exp();
        let psi = j * fe.eval_block(b, w);
        let lf = j * fe.apply_operator(&kernel, b, w)?;
        worst = worst.max((psi - lf).norm());
        scale = scale.max(psi.norm());
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}

/// Maximum relative difference of two extractions at points of `(-1, 1)`.
pub fn compare_eigenfunctions(a: &FastEigenfunction, b: &FastEigenfunction, points: &[Complex64]) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &z in points {
        let (va, vb) = (a.eval(z)?, b.eval(z)?);
        worst = worst.max((va - vb).norm());
        scale = scale.max(va.norm());
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}
