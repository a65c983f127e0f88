//! The invariant suite run by `hecke verify --q Q`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::coding::check_bijection;
use crate::determinant::{compare_traces, fredholm_det, CutoffPolicy};
use crate::error::Result;
use crate::moebius::group_identity_deviations;
use crate::operator::{assemble, build_disk_system, j_matrix, OperatorConfig, Symmetry, TailMode};
use crate::zeta::partition_identity_check;

const ORDER: usize = 24;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl InvariantCheck {
    /// Passes when `value <= tolerance`.
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        InvariantCheck { name: name.into(), value, tolerance, passed: value <= tolerance }
    }

    /// Passes when `value > 0`; `tolerance` is recorded as zero.
    fn positive(name: impl Into<String>, value: f64) -> Self {
        InvariantCheck { name: name.into(), value, tolerance: 0.0, passed: value > 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub q: u32,
    pub seed: u64,
    pub checks: Vec<InvariantCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn max_entry(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Runs every invariant for `q`. Random spectral parameters are drawn from `seed`.
pub fn verify(q: u32, seed: u64) -> Result<VerifyReport> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let cfg = OperatorConfig::new(ORDER);

    for (name, dev) in group_identity_deviations(q)? {
        checks.push(InvariantCheck::at_most(format!("group identity {name}"), dev, 1e-10));
    }

    let bij = check_bijection(q, 3, 4)?;
    checks.push(InvariantCheck::at_most(
        "coding: word map injective (n <= 3, exponents <= 4)",
        (bij.words - bij.distinct_elements) as f64,
        0.0,
    ));
    checks.push(InvariantCheck::positive("coding: regular words hyperbolic (min trace - 2)", bij.min_trace - 2.0));
    checks.push(InvariantCheck::at_most(
        "coding: parabolic powers have trace exactly 2",
        if bij.parabolic_traces_exact { 0.0 } else { 1.0 },
        0.0,
    ));

    let system = build_disk_system(q, cfg.c_init, cfg.points())?;
    for cond in &system.conditions {
        checks.push(InvariantCheck { name: format!("disks {}", cond.name), value: cond.margin, tolerance: 0.0, passed: cond.passed });
    }

    // J-symmetry of the full operator
    let s_list = [c(2.0, 0.0), c(0.5, 9.5), c(rng.random_range(0.6..3.0), rng.random_range(-15.0..15.0))];
    for s in s_list {
        let op = assemble(q, s, Symmetry::Full, &cfg)?;
        let j = j_matrix(&op)?;
        let comm = &j * &op.matrix - &op.matrix * &j;
        checks.push(InvariantCheck::at_most(format!("J commutes with L at s = {s:.4}"), max_entry(&comm) / max_entry(&op.matrix), 1e-10));
    }

    // mode agreement on the overlap strip
    let trunc = cfg.with_mode(TailMode::Truncate { n_tail: 200, extrapolation: 5 });
    for s in [c(2.0, 0.0), c(0.75, 0.0), c(rng.random_range(0.6..3.0), rng.random_range(-10.0..10.0))] {
        let a = assemble(q, s, Symmetry::Full, &cfg)?;
        let b = assemble(q, s, Symmetry::Full, &trunc)?;
        let diff = max_entry(&(&a.matrix - &b.matrix));
        checks.push(InvariantCheck::at_most(format!("mode agreement at s = {s:.4}"), diff, b.tail_bound.max(1e-10)));
    }

    // Schwarz symmetry and reality
    let drawn = c(0.5, rng.random_range(1.0..20.0));
    for s in [c(0.5, 9.5), c(1.3, 4.0), drawn] {
        let d = fredholm_det(&assemble(q, s, Symmetry::Full, &cfg)?);
        let dc = fredholm_det(&assemble(q, s.conj(), Symmetry::Full, &cfg)?);
        checks.push(InvariantCheck::at_most(format!("Schwarz symmetry at s = {s:.4}"), (dc - d.conj()).norm() / d.norm().max(1.0), 1e-10));
    }
    for sigma in [0.75, 1.5, 3.0, 0.25] {
        let d = fredholm_det(&assemble(q, c(sigma, 0.0), Symmetry::Full, &cfg)?);
        let tol = if sigma < 0.5 { 1e-9 } else { 1e-10 };
        checks.push(InvariantCheck::at_most(format!("Im det at s = {sigma}"), d.im.abs(), tol));
    }

    // factorisation, convergence and spectral radius at s = 2
    for s in [c(2.0, 0.0), c(0.5, 5.0)] {
        let full = fredholm_det(&assemble(q, s, Symmetry::Full, &cfg)?);
        let plus = fredholm_det(&assemble(q, s, Symmetry::Plus, &cfg)?);
        let minus = fredholm_det(&assemble(q, s, Symmetry::Minus, &cfg)?);
        checks.push(InvariantCheck::at_most(format!("det = det+ det- at s = {s:.4}"), (full - plus * minus).norm() / full.norm(), 1e-8));
    }
    for s in [c(2.0, 0.0), c(0.5, 9.5)] {
        // high on the critical line larger q needs a larger order for 1e-9
        let m = if s.im != 0.0 && q >= 6 { 32 } else { ORDER };
        let d0 = fredholm_det(&assemble(q, s, Symmetry::Full, &OperatorConfig::new(m))?);
        let d1 = fredholm_det(&assemble(q, s, Symmetry::Full, &OperatorConfig::new(m + 8))?);
        checks.push(InvariantCheck::at_most(format!("det truncation M = {m} vs {} at s = {s:.4}", m + 8), (d0 - d1).norm(), 1e-9));
    }
    let op2 = assemble(q, c(2.0, 0.0), Symmetry::Full, &cfg)?;
    let radius = op2.matrix.clone().eigenvalues().map(|e| e.iter().map(|x| x.norm()).fold(0.0, f64::max));
    checks.push(InvariantCheck::at_most("spectral radius at s = 2", radius.unwrap_or(f64::INFINITY), 1.0 - 1e-12));

    // traces and partition functions
    for n in [1usize, 2] {
        let cmp = compare_traces(q, n, c(2.0, 0.0), ORDER, &CutoffPolicy::default())?;
        checks.push(InvariantCheck::at_most(format!("trace by matrix vs words, n = {n}, s = 2"), cmp.difference(), cmp.combined_bound()));
        let part = partition_identity_check(q, n, c(1.5, 0.0), 8)?;
        checks.push(InvariantCheck::at_most(format!("partition identity, n = {n}, s = 1.5"), part.discrepancy, 1e-13));
    }

    // determinism
    let again = assemble(q, c(2.0, 0.0), Symmetry::Full, &cfg)?;
    let same = again.matrix.iter().zip(op2.matrix.iter()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    checks.push(InvariantCheck::at_most("determinism of assembly", if same { 0.0 } else { 1.0 }, 0.0));

    Ok(VerifyReport { q, seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_q4() {
        let r = verify(4, 1).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{} = {:e} > {:e}", c.name, c.value, c.tolerance);
        }
        let again = verify(4, 1).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    }
}
