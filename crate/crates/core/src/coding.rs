//! Symbolic dynamics of the slow and fast discretisations: branch symbols,
//! regular words, partition maps and the primitive length spectrum.
//!
//! Traces are computed from products of the matrices `g_k^{-m}`, whose
//! entries are non-negative, so no cancellation occurs and traces grow
//! monotonically when a word is extended. The enumeration of the length
//! spectrum prunes on this.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moebius::{check_q, g_inverse, lambda, to_fast, GroupElement};
use crate::precision::{DoubleDouble, Mat2, Precision};

const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolKind {
    /// Powers of `h_1`, parabolic with fixed point `+1`.
    ParabolicLeft,
    /// `h_k` for `2 <= k <= q-2`.
    Hyperbolic,
    /// Powers of `h_{q-1}`, parabolic with fixed point `-1`.
    ParabolicRight,
}

/// `h_k^m`. Ordered by `(k, m)`, so that `h_1^1 < h_1^2 < ... < h_2 < ... < h_{q-1}^1 < ...`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchSymbol {
    pub kind: SymbolKind,
    pub k: u32,
    pub m: u32,
}

impl Ord for BranchSymbol {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.k, self.m).cmp(&(o.k, o.m))
    }
}

impl PartialOrd for BranchSymbol {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl BranchSymbol {
    pub fn left(m: u32) -> Self {
        BranchSymbol { kind: SymbolKind::ParabolicLeft, k: 1, m }
    }

    pub fn right(q: u32, m: u32) -> Self {
        BranchSymbol { kind: SymbolKind::ParabolicRight, k: q - 1, m }
    }

    pub fn hyperbolic(k: u32) -> Self {
        BranchSymbol { kind: SymbolKind::Hyperbolic, k, m: 1 }
    }

    pub fn is_parabolic(&self) -> bool {
        self.kind != SymbolKind::Hyperbolic
    }

    /// Two symbols may not be adjacent when they are powers of the same parabolic.
    pub fn clashes_with(&self, o: &Self) -> bool {
        self.is_parabolic() && self.kind == o.kind
    }

    /// `g_k^{-m}` as a non-negative matrix.
    pub fn slow_inverse(&self, q: u32) -> Mat2<f64> {
        let lam = lambda(q);
        match self.kind {
            SymbolKind::ParabolicLeft => Mat2([1.0, self.m as f64 * lam, 0.0, 1.0]),
            SymbolKind::ParabolicRight => Mat2([1.0, 0.0, self.m as f64 * lam, 1.0]),
            SymbolKind::Hyperbolic => {
                let g = g_inverse(q, self.k);
                Mat2([g.a, g.b, g.c, g.d])
            }
        }
    }

    /// `h_k^m` in the fast coordinates.
    pub fn fast_element(&self, q: u32) -> GroupElement {
        let [a, b, c, d] = self.slow_inverse(q).0;
        to_fast(&GroupElement::new(a, b, c, d).inverse())
    }

    fn validate(&self, q: u32) -> Result<()> {
        let ok = match self.kind {
            SymbolKind::ParabolicLeft => self.k == 1 && self.m >= 1,
            SymbolKind::ParabolicRight => self.k == q - 1 && self.m >= 1,
            SymbolKind::Hyperbolic => self.k >= 2 && self.k + 2 <= q && self.m == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("symbol {self:?} is not a branch symbol for q = {q}")))
        }
    }
}

/// A finite sequence of branch symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<BranchSymbol>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|p| !p[0].clashes_with(&p[1]))
    }

    /// Reduced, and also reduced across the wrap from last to first symbol.
    pub fn is_regular(&self) -> bool {
        match (self.0.first(), self.0.last()) {
            (Some(first), Some(last)) => self.is_reduced() && !last.clashes_with(first),
            _ => false,
        }
    }

    pub fn rotate(&self, by: usize) -> Word {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let by = by % v.len();
            v.rotate_left(by);
        }
        Word(v)
    }

    /// True when the word is the lexicographically least of its rotations.
    pub fn is_canonical_rotation(&self) -> bool {
        (1..self.len()).all(|r| self.0[r..].iter().chain(&self.0[..r]).cmp(self.0.iter()) != Ordering::Less)
    }

    /// True when the word is not a proper power of a shorter word.
    pub fn is_primitive(&self) -> bool {
        let n = self.len();
        (1..n).filter(|d| n.is_multiple_of(*d)).all(|d| (d..n).any(|i| self.0[i] != self.0[i - d]))
    }

    /// JSON-friendly encoding: `["P1", m]`, `["H", k]` or `["Pq", m]`.
    pub fn to_tags(&self) -> Vec<(String, u32)> {
        self.0
            .iter()
            .map(|s| match s.kind {
                SymbolKind::ParabolicLeft => ("P1".to_string(), s.m),
                SymbolKind::Hyperbolic => ("H".to_string(), s.k),
                SymbolKind::ParabolicRight => ("Pq".to_string(), s.m),
            })
            .collect()
    }

    pub fn from_tags(q: u32, tags: &[(String, u32)]) -> Result<Word> {
        tags.iter()
            .map(|(t, v)| match t.as_str() {
                "P1" => Ok(BranchSymbol::left(*v)),
                "H" => Ok(BranchSymbol::hyperbolic(*v)),
                "Pq" => Ok(BranchSymbol::right(q, *v)),
                other => Err(Error::Domain(format!("unknown symbol tag {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

/// The partition of `R_+` into the intervals `D_st,k = (g_k^{-1}.0, g_k^{-1}.inf)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlowPartition {
    pub q: u32,
    pub lambda: f64,
    /// `(k, lower, upper)` for `k = 1..q-1`; `upper = inf` for `k = 1`.
    pub intervals: Vec<(u32, f64, f64)>,
}

/// Interval endpoints from the closed forms `xi_{k+1}/xi_k` and `xi_k/xi_{k-1}`.
pub fn slow_partition(q: u32) -> Result<SlowPartition> {
    check_q(q)?;
    let xi = |k: u32| (k as f64 * std::f64::consts::PI / q as f64).sin();
    let intervals = (1..q)
        .map(|k| {
            let lo = if k == q - 1 { 0.0 } else { xi(k + 1) / xi(k) };
            let hi = if k == 1 { f64::INFINITY } else { xi(k) / xi(k - 1) };
            (k, lo, hi)
        })
        .collect();
    Ok(SlowPartition { q, lambda: lambda(q), intervals })
}

impl SlowPartition {
    /// Index `k` with `x` in the open interval `D_st,k`.
    pub fn locate(&self, x: f64) -> Result<u32> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("slow coordinate must be positive and finite, got {x}")));
        }
        for &(k, lo, hi) in &self.intervals {
            if (x - lo).abs() < BOUNDARY_TOL || (hi.is_finite() && (x - hi).abs() < BOUNDARY_TOL) {
                return Err(Error::Boundary { x });
            }
            if x > lo && x < hi {
                return Ok(k);
            }
        }
        Err(Error::Boundary { x })
    }
}

/// One step of the slow map `x -> g_k.x` on `D_st,k`.
pub fn slow_step(q: u32, x: f64) -> Result<(u32, f64)> {
    let k = slow_partition(q)?.locate(x)?;
    let g = g_inverse(q, k).inverse();
    Ok((k, g.apply(x.into()).re))
}

fn t_of(x: f64) -> f64 {
    (1.0 + x) / (1.0 - x)
}

fn x_of(t: f64) -> f64 {
    (t - 1.0) / (t + 1.0)
}

/// One step of the fast map on `(-1, 1)`, with the parabolic branches accelerated.
///
/// Returns the branch symbol `h_k^m` and the image point.
pub fn fast_step(q: u32, x: f64) -> Result<(BranchSymbol, f64)> {
    if !(x > -1.0 && x < 1.0) {
        return Err(Error::Domain(format!("fast coordinate must lie in (-1, 1), got {x}")));
    }
    let part = slow_partition(q)?;
    let lam = part.lambda;
    let t = t_of(x);
    let k = match part.locate(t) {
        Ok(k) => k,
        Err(Error::Boundary { .. }) => return Err(Error::Boundary { x }),
        Err(e) => return Err(e),
    };
    let sym = if k == 1 {
        let n = (t / lam).floor();
        let near = (x - x_of(n * lam)).abs().min((x - x_of((n + 1.0) * lam)).abs());
        if near < BOUNDARY_TOL {
            return Err(Error::Boundary { x });
        }
        BranchSymbol::left(n as u32)
    } else if k == q - 1 {
        let n = (1.0 / (t * lam)).floor();
        let near = (x - x_of(1.0 / (n * lam))).abs().min((x - x_of(1.0 / ((n + 1.0) * lam))).abs());
        if near < BOUNDARY_TOL {
            return Err(Error::Boundary { x });
        }
        BranchSymbol::right(q, n as u32)
    } else {
        BranchSymbol::hyperbolic(k)
    };
    let [a, b, c, d] = sym.slow_inverse(q).0;
    // apply g_k^m = (g_k^{-m})^{-1}
    let y = (d * t - b) / (-c * t + a);
    Ok((sym, x_of(y)))
}

/// All branch symbols with parabolic exponents up to `cap`, in increasing order.
pub fn alphabet(q: u32, cap: u32) -> Vec<BranchSymbol> {
    let mut out: Vec<BranchSymbol> = (1..=cap).map(BranchSymbol::left).collect();
    out.extend((2..q.saturating_sub(1)).map(BranchSymbol::hyperbolic));
    out.extend((1..=cap).map(|m| BranchSymbol::right(q, m)));
    out
}

/// Regular words of length `n` with parabolic exponents at most `cap`, in lexicographic order.
pub fn enumerate_regular_words(q: u32, n: usize, cap: u32) -> Result<Vec<Word>> {
    check_q(q)?;
    if n == 0 || cap == 0 {
        return Err(Error::Domain("word length and exponent cap must be positive".into()));
    }
    let alpha = alphabet(q, cap);
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(alpha: &[BranchSymbol], n: usize, cur: &mut Vec<BranchSymbol>, out: &mut Vec<Word>) {
        if cur.len() == n {
            let w = Word(cur.clone());
            if w.is_regular() {
                out.push(w);
            }
            return;
        }
        for s in alpha {
            if cur.last().is_some_and(|l| l.clashes_with(s)) {
                continue;
            }
            cur.push(*s);
            rec(alpha, n, cur, out);
            cur.pop();
        }
    }
    rec(&alpha, n, &mut cur, &mut out);
    Ok(out)
}

/// The group element `s_0 s_1 ... s_{n-1}` of a reduced word, in fast coordinates.
pub fn word_to_element(q: u32, w: &Word) -> Result<GroupElement> {
    check_q(q)?;
    for s in &w.0 {
        s.validate(q)?;
    }
    if !w.is_reduced() {
        return Err(Error::Domain("word is not reduced".into()));
    }
    let inv = inverse_product(q, w);
    let [a, b, c, d] = inv.0;
    Ok(to_fast(&GroupElement::new(a, b, c, d).inverse()))
}

/// `g_{k_{n-1}}^{-m_{n-1}} ... g_{k_0}^{-m_0}`, the inverse of the word element in slow coordinates.
pub fn inverse_product(q: u32, w: &Word) -> Mat2<f64> {
    w.0.iter().fold(Mat2([1.0, 0.0, 0.0, 1.0]), |acc, s| s.slow_inverse(q).mul(&acc))
}

/// Trace of the word element, computed without cancellation.
pub fn word_trace(q: u32, w: &Word, precision: Precision) -> f64 {
    match precision {
        Precision::Double => inverse_product(q, w).trace(),
        Precision::DoubleDouble => {
            let id = Mat2([1.0, 0.0, 0.0, 1.0].map(DoubleDouble::from_f64));
            let prod = w
                .0
                .iter()
                .fold(id, |acc, s| Mat2(s.slow_inverse(q).0.map(DoubleDouble::from_f64)).mul(&acc));
            prod.trace().to_f64()
        }
    }
}

/// Hyperbolic length `2 arccosh(|tr|/2)`.
pub fn length_from_trace(trace: f64) -> f64 {
    2.0 * (trace.abs() / 2.0).acosh()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BijectionReport {
    pub q: u32,
    pub max_length: usize,
    pub cap: u32,
    pub words: usize,
    pub distinct_elements: usize,
    pub all_hyperbolic: bool,
    pub min_trace: f64,
    /// Every pure power `h_1^m`, `h_{q-1}^m` has trace exactly 2.
    pub parabolic_traces_exact: bool,
}

impl BijectionReport {
    pub fn passed(&self) -> bool {
        self.words == self.distinct_elements && self.all_hyperbolic && self.parabolic_traces_exact
    }
}

/// Checks that regular words of length `1..=n` give distinct hyperbolic elements.
pub fn check_bijection(q: u32, n: usize, cap: u32) -> Result<BijectionReport> {
    let mut words = Vec::new();
    for len in 1..=n {
        words.extend(enumerate_regular_words(q, len, cap)?);
    }
    let elems: Vec<GroupElement> =
        words.iter().map(|w| word_to_element(q, w).map(|g| g.canonical())).collect::<Result<_>>()?;
    let traces: Vec<f64> = words.iter().map(|w| word_trace(q, w, Precision::Double)).collect();
    let min_trace = traces.iter().cloned().fold(f64::INFINITY, f64::min);
    let all_hyperbolic = traces.iter().all(|t| t.abs() > 2.0 + 1e-9);
    let distinct_elements = count_distinct(&elems, &traces);
    let parabolic_traces_exact = (1..=cap).all(|m| {
        word_trace(q, &Word(vec![BranchSymbol::left(m)]), Precision::Double) == 2.0
            && word_trace(q, &Word(vec![BranchSymbol::right(q, m)]), Precision::Double) == 2.0
    });
    Ok(BijectionReport {
        q,
        max_length: n,
        cap,
        words: words.len(),
        distinct_elements,
        all_hyperbolic,
        min_trace,
        parabolic_traces_exact,
    })
}

/// Counts pairwise-distinct matrices, comparing only candidates with close traces.
fn count_distinct(elems: &[GroupElement], traces: &[f64]) -> usize {
    let mut idx: Vec<usize> = (0..elems.len()).collect();
    idx.sort_by(|&i, &j| traces[i].total_cmp(&traces[j]));
    let mut distinct = 0;
    for (pos, &i) in idx.iter().enumerate() {
        let dup = idx[..pos]
            .iter()
            .rev()
            .take_while(|&&j| (traces[i] - traces[j]).abs() <= 1e-9 * traces[i].abs().max(1.0))
            .any(|&j| elems[i].approx_eq(&elems[j], 1e-9 * traces[i].abs().max(1.0)));
        if !dup {
            distinct += 1;
        }
    }
    distinct
}

/// One primitive conjugacy class of hyperbolic elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSpectrumEntry {
    pub q: u32,
    /// Representative word, the least of its rotations.
    pub word: Word,
    pub trace: f64,
    pub length: f64,
    pub primitive: bool,
}

/// Primitive classes with length at most `l_max`, sorted by length and then by word.
pub fn length_spectrum(q: u32, l_max: f64, precision: Precision) -> Result<Vec<LengthSpectrumEntry>> {
    check_q(q)?;
    if !(l_max > 0.0) || !l_max.is_finite() {
        return Err(Error::Domain(format!("length cutoff must be positive, got {l_max}")));
    }
    let tr_max = 2.0 * (l_max / 2.0).cosh() * (1.0 + 1e-12);
    let hyper: Vec<BranchSymbol> = (2..q - 1).map(BranchSymbol::hyperbolic).collect();
    let mut out = Vec::new();
    let mut cur = Vec::new();

    // first symbol: parabolic powers are bounded through their mandatory neighbour
    let mut firsts: Vec<BranchSymbol> = Vec::new();
    for kind in [SymbolKind::ParabolicLeft, SymbolKind::ParabolicRight] {
        for m in 1.. {
            let s = match kind {
                SymbolKind::ParabolicLeft => BranchSymbol::left(m),
                _ => BranchSymbol::right(q, m),
            };
            let other = match kind {
                SymbolKind::ParabolicLeft => BranchSymbol::right(q, 1),
                _ => BranchSymbol::left(1),
            };
            let neighbour_bound = hyper
                .iter()
                .chain(std::iter::once(&other))
                .map(|y| y.slow_inverse(q).mul(&s.slow_inverse(q)).trace())
                .fold(f64::INFINITY, f64::min);
            if neighbour_bound > tr_max {
                break;
            }
            firsts.push(s);
        }
    }
    firsts.extend(hyper.iter().copied());
    firsts.sort();

    let ctx = SpectrumSearch { q, tr_max, hyper: &hyper, precision };
    for s in firsts {
        cur.push(s);
        ctx.extend(&mut cur, s.slow_inverse(q), &mut out);
        cur.pop();
    }
    out.sort_by(|a: &LengthSpectrumEntry, b| a.length.total_cmp(&b.length).then_with(|| a.word.cmp(&b.word)));
    Ok(out)
}

struct SpectrumSearch<'a> {
    q: u32,
    tr_max: f64,
    hyper: &'a [BranchSymbol],
    precision: Precision,
}

impl SpectrumSearch<'_> {
    fn extend(&self, cur: &mut Vec<BranchSymbol>, prod: Mat2<f64>, out: &mut Vec<LengthSpectrumEntry>) {
        let w = Word(cur.clone());
        if w.is_regular() && w.is_canonical_rotation() && w.is_primitive() {
            let trace = match self.precision {
                Precision::Double => prod.trace(),
                p => word_trace(self.q, &w, p),
            };
            if trace <= self.tr_max && trace > 2.0 {
                out.push(LengthSpectrumEntry {
                    q: self.q,
                    word: w,
                    trace,
                    length: length_from_trace(trace),
                    primitive: true,
                });
            }
        }
        let last = *cur.last().expect("non-empty prefix");
        // a canonical rotation never has a later symbol smaller than the first
        let first = cur[0];
        let mut try_symbol = |s: BranchSymbol, cur: &mut Vec<BranchSymbol>| -> bool {
            let next = s.slow_inverse(self.q).mul(&prod);
            if next.trace() > self.tr_max {
                return false;
            }
            cur.push(s);
            self.extend(cur, next, out);
            cur.pop();
            true
        };
        for kind in [SymbolKind::ParabolicLeft, SymbolKind::ParabolicRight] {
            if last.is_parabolic() && last.kind == kind {
                continue;
            }
            let k = if kind == SymbolKind::ParabolicLeft { 1 } else { self.q - 1 };
            if k < first.k {
                continue;
            }
            let m_start = if k == first.k { first.m } else { 1 };
            for m in m_start.. {
                let s = match kind {
                    SymbolKind::ParabolicLeft => BranchSymbol::left(m),
                    _ => BranchSymbol::right(self.q, m),
                };
                if !try_symbol(s, cur) {
                    break;
                }
            }
        }
        for &s in self.hyper {
            if s >= first {
                try_symbol(s, cur);
            }
        }
    }
}

/// Groups lengths that agree to `tol` and reports their multiplicities.
pub fn multiplicities(entries: &[LengthSpectrumEntry], tol: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for e in entries {
        match out.last_mut() {
            Some((l, n)) if (e.length - *l).abs() <= tol => *n += 1,
            _ => out.push((e.length, 1)),
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SpectrumRecord {
    q: u32,
    word: Vec<(String, u32)>,
    trace: f64,
    length: f64,
    primitive: bool,
}

/// Cache path `{dir}/q{Q}/spectrum_L{L}.jsonl`.
pub fn spectrum_cache_path(dir: &Path, q: u32, l_max: f64, precision: Precision) -> PathBuf {
    let suffix = match precision {
        Precision::Double => "",
        Precision::DoubleDouble => "_dd",
    };
    dir.join(format!("q{q}")).join(format!("spectrum_L{l_max}{suffix}.jsonl"))
}

pub fn write_spectrum_jsonl(path: &Path, entries: &[LengthSpectrumEntry]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for e in entries {
            let rec = SpectrumRecord {
                q: e.q,
                word: e.word.to_tags(),
                trace: e.trace,
                length: e.length,
                primitive: e.primitive,
            };
            serde_json::to_writer(&mut f, &rec)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_spectrum_jsonl(path: &Path) -> Result<Vec<LengthSpectrumEntry>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SpectrumRecord = serde_json::from_str(&line)?;
        out.push(LengthSpectrumEntry {
            q: rec.q,
            word: Word::from_tags(rec.q, &rec.word)?,
            trace: rec.trace,
            length: rec.length,
            primitive: rec.primitive,
        });
    }
    Ok(out)
}

/// Reads the spectrum from the cache, computing and storing it on a miss.
pub fn cached_length_spectrum(
    q: u32,
    l_max: f64,
    precision: Precision,
    cache_dir: Option<&Path>,
) -> Result<Vec<LengthSpectrumEntry>> {
    let Some(dir) = cache_dir else {
        return length_spectrum(q, l_max, precision);
    };
    let path = spectrum_cache_path(dir, q, l_max, precision);
    if path.exists() {
        return read_spectrum_jsonl(&path);
    }
    let entries = length_spectrum(q, l_max, precision)?;
    write_spectrum_jsonl(&path, &entries)?;
    Ok(entries)
}
