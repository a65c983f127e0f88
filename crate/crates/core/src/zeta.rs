//! Selberg and Smale-Ruelle zeta functions from the length spectrum, and the
//! dynamical partition functions that tie word sums to traces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coding::{enumerate_regular_words, length_from_trace, length_spectrum, word_trace, LengthSpectrumEntry};
use crate::determinant::fixed_point_term;
use crate::error::{Error, Result};
use crate::moebius::check_q;
use crate::precision::Precision;

/// Target size of the neglected `k`-tail, summed over all lengths.
const K_TAIL: f64 = 1e-14;
const TAIL_SAFETY: f64 = 4.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EulerProduct {
    pub value: Complex64,
    /// Relative error bound for the length cutoff, from the fitted counting function.
    pub tail_bound: f64,
    pub k_max: usize,
    pub entries: usize,
    pub l_max: f64,
    /// Fit `log N(l) ~ a + b l` of the counting function on the upper half of the range.
    pub growth: (f64, f64),
}

fn check_half_plane(s: Complex64) -> Result<()> {
    if s.re <= 1.0 {
        return Err(Error::Domain(format!("the product converges only for Re s > 1, got s = {s}")));
    }
    Ok(())
}

/// Smallest `K` with `sum_l sum_{k > K} 2 e^{-(sigma+k) l} / (1 - e^{-l}) < 1e-14`.
fn auto_k(lengths: &[f64], sigma: f64) -> usize {
    for k in 0..400 {
        let tail: f64 = lengths
            .iter()
            .map(|l| 2.0 * (-(sigma + k as f64 + 1.0) * l).exp() / (1.0 - (-l).exp()))
            .sum();
        if tail < K_TAIL {
            return k;
        }
    }
    400
}

/// Least-squares fit of `log i` against the `i`-th length, on lengths in `[l_max/2, l_max]`.
pub fn fit_counting_function(lengths: &[f64], l_max: f64) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = lengths
        .iter()
        .enumerate()
        .filter(|(_, l)| **l >= 0.5 * l_max)
        .map(|(i, l)| (*l, ((i + 1) as f64).ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// `prod_gamma prod_{k<=K} (1 - e^{-(s+k) l(gamma)})` over the given entries.
pub fn euler_product_from(entries: &[LengthSpectrumEntry], s: Complex64, l_max: f64, k_max: Option<usize>) -> Result<EulerProduct> {
    check_half_plane(s)?;
    let mut lengths: Vec<f64> = entries.iter().filter(|e| e.length <= l_max).map(|e| e.length).collect();
    lengths.sort_by(f64::total_cmp);
    let k_max = k_max.unwrap_or_else(|| auto_k(&lengths, s.re));
    // log-sum in length order for a reproducible reduction
    let mut log = Complex64::new(0.0, 0.0);
    for l in &lengths {
        for k in 0..=k_max {
            let x = (-(s + k as f64) * l).exp();
            log += (Complex64::new(1.0, 0.0) - x).ln();
        }
    }
    let growth = fit_counting_function(&lengths, l_max).unwrap_or((0.0, 1.0));
    let tail_bound = length_tail_bound(growth, s.re, l_max);
    Ok(EulerProduct { value: log.exp(), tail_bound, k_max, entries: lengths.len(), l_max, growth })
}

/// Relative bound from `sum_{l > L} sum_k |log(1 - e^{-(s+k) l})|` with the
/// fitted density `b e^{a + b l}` and a safety factor.
fn length_tail_bound((a, b): (f64, f64), sigma: f64, l_max: f64) -> f64 {
    let b = b.max(1.0);
    if sigma <= b {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for k in 0..200 {
        let rate = sigma + k as f64 - b;
        let term = b * a.exp() * (-rate * l_max).exp() / rate;
        total += term;
        if term < 1e-18 * total {
            break;
        }
    }
    // |log(1 - x)| <= x / (1 - x)
    let x_max = (-sigma * l_max).exp();
    let t = TAIL_SAFETY * total / (1.0 - x_max);
    t.exp_m1()
}

/// Euler product of the Selberg zeta function over primitive geodesics of length at most `l_max`.
pub fn euler_product(q: u32, s: Complex64, l_max: f64, k_max: Option<usize>) -> Result<EulerProduct> {
    check_q(q)?;
    check_half_plane(s)?;
    let entries = length_spectrum(q, l_max, Precision::Double)?;
    euler_product_from(&entries, s, l_max, k_max)
}

/// `prod (1 - e^{-s l})^{-1}` over the entries with length at most `l_max`.
pub fn smale_ruelle_from(entries: &[LengthSpectrumEntry], s: Complex64, l_max: f64) -> Result<Complex64> {
    check_half_plane(s)?;
    let mut lengths: Vec<f64> = entries.iter().filter(|e| e.length <= l_max).map(|e| e.length).collect();
    lengths.sort_by(f64::total_cmp);
    let log: Complex64 = lengths.iter().map(|l| -(Complex64::new(1.0, 0.0) - (-s * l).exp()).ln()).sum();
    Ok(log.exp())
}

pub fn smale_ruelle(q: u32, s: Complex64, l_max: f64) -> Result<Complex64> {
    check_q(q)?;
    check_half_plane(s)?;
    let entries = length_spectrum(q, l_max, Precision::Double)?;
    smale_ruelle_from(&entries, s, l_max)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PartitionReport {
    pub q: u32,
    pub n: usize,
    pub s: Complex64,
    pub cap: u32,
    pub words: usize,
    /// `Z_n(s) = sum_w N(w)^{-s}`.
    pub partition: Complex64,
    pub trace_s: Complex64,
    pub trace_s1: Complex64,
    pub discrepancy: f64,
}

/// Compares `Z_n(s)` with `Tr_s - Tr_{s+1}` over the regular words of length `n`
/// with parabolic exponents at most `cap`.
pub fn partition_identity_check(q: u32, n: usize, s: Complex64, cap: u32) -> Result<PartitionReport> {
    check_q(q)?;
    if s.re <= 0.5 {
        return Err(Error::Mode(format!("partition sums need Re s > 1/2, got s = {s}")));
    }
    let words = enumerate_regular_words(q, n, cap)?;
    let mut partition = Complex64::new(0.0, 0.0);
    let mut trace_s = Complex64::new(0.0, 0.0);
    let mut trace_s1 = Complex64::new(0.0, 0.0);
    for w in &words {
        let tr = word_trace(q, w, Precision::Double);
        // N(w)^{-s} = e^{-s l}
        partition += (-s * length_from_trace(tr)).exp();
        trace_s += fixed_point_term(tr, s);
        trace_s1 += fixed_point_term(tr, s + 1.0);
    }
    Ok(PartitionReport {
        q,
        n,
        s,
        cap,
        words: words.len(),
        partition,
        trace_s,
        trace_s1,
        discrepancy: (partition - (trace_s - trace_s1)).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{BranchSymbol, Word};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn toy(length: f64) -> LengthSpectrumEntry {
        LengthSpectrumEntry { q: 4, word: Word(vec![BranchSymbol::hyperbolic(2)]), trace: 0.0, length, primitive: true }
    }

    #[test]
    fn single_geodesic_toy() {
        let l = 1.3;
        let s = Complex64::new(2.0, 0.7);
        let e = euler_product_from(&[toy(l)], s, 5.0, None).unwrap();
        let direct: Complex64 = (0..=e.k_max).map(|k| 1.0 - (-(s + k as f64) * l).exp()).product();
        assert!((e.value - direct).norm() < 1e-14);
        let sr = smale_ruelle_from(&[toy(l)], s, 5.0).unwrap();
        assert!((sr * (1.0 - (-s * l).exp()) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn smale_ruelle_example_and_empty() {
        let v = smale_ruelle(4, c(3.0), 2.0).unwrap();
        let l = 2.0 * (1.0 + 2f64.sqrt()).ln();
        assert!((v.re - 1.0 / (1.0 - (-3.0 * l).exp())).abs() < 1e-14);
        assert!((v.re - 1.0050763).abs() < 1e-7);
        assert_eq!(smale_ruelle(4, c(3.0), 1.0).unwrap(), c(1.0));
        assert!(smale_ruelle(4, c(1.0), 2.0).is_err());
        assert!(euler_product(3, Complex64::new(0.9, 3.0), 5.0, None).is_err());
    }

    #[test]
    fn shift_relation() {
        // Z(s) zeta_SR(s) = Z(s+1)
        let entries = length_spectrum(3, 10.0, Precision::Double).unwrap();
        let s = c(2.0);
        let z = euler_product_from(&entries, s, 10.0, Some(60)).unwrap().value;
        let z1 = euler_product_from(&entries, s + 1.0, 10.0, Some(59)).unwrap().value;
        let sr = smale_ruelle_from(&entries, s, 10.0).unwrap();
        assert!((z * sr - z1).norm() < 1e-13);
    }

    #[test]
    fn partition_identity_one_term() {
        let r = partition_identity_check(4, 1, c(2.0), 3).unwrap();
        let lam: f64 = 1.0 + 2f64.sqrt();
        assert_eq!(r.words, 1);
        assert!((r.partition.re - lam.powi(-4)).abs() < 1e-15);
        assert!(r.discrepancy < 1e-14);
        let empty = partition_identity_check(3, 1, c(2.0), 5).unwrap();
        assert_eq!(empty.words, 0);
        assert_eq!(empty.discrepancy, 0.0);
        assert!(partition_identity_check(3, 2, c(1.5), 6).unwrap().discrepancy < 1e-13);
    }

    #[test]
    fn tail_bound_shrinks_with_cutoff() {
        let e8 = euler_product(3, c(2.0), 8.0, None).unwrap();
        let e11 = euler_product(3, c(2.0), 11.0, None).unwrap();
        assert!(e11.tail_bound < e8.tail_bound);
        assert!(((e11.value - e8.value) / e11.value).norm() <= e8.tail_bound);
    }
}
